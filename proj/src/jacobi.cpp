#include "pendula/jacobi.hpp"

#include "pendula/ode.hpp"

#include <Eigen/Dense>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <iomanip>
#include <sstream>
#include <cmath>
#include <limits>
#include <numeric>

namespace pendula {

namespace {

double norm(const std::vector<double> &v) {
    return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

double dot(const std::vector<double> &a, const std::vector<double> &b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

void check_shape(const Config &q, const Config &q_end) {
    if (q.size() != q_end.size() || q.empty()) throw DomainError("endpoint dimensions differ");
    for (std::size_t i = 0; i < q.size(); ++i)
        if (!std::isfinite(q[i]) || !std::isfinite(q_end[i])) throw DomainError("endpoints must be finite");
}

} // namespace

double total_potential(const Config &x, const CouplingParams *cp) {
    double u = 0;
    for (double xi : x) u += potential(xi);
    if (cp) u += coupling_energy(x, *cp);
    return u;
}

SegmentSolution uncoupled_connect(const Config &q, const Config &q_end) {
    check_shape(q, q_end);
    const std::size_t p = q.size();
    std::vector<Branch> branches(p);
    for (std::size_t i = 0; i < p; ++i) {
        const auto b = classify(q[i], q_end[i]);
        if (!b)
            throw DomainError("site " + std::to_string(i) + ": pair (" + std::to_string(q[i]) + ", " +
                              std::to_string(q_end[i]) + ") outside the admissible classes");
        branches[i] = *b;
    }
    auto excess = [&](double z) {
        const double T = std::exp(z);
        double s = 0;
        for (std::size_t i = 0; i < p; ++i) s += energy_of_time(q[i], q_end[i], branches[i], T);
        return 1 - s; // increasing in z where the total energy decreases in T
    };
    double lo = 0, hi = 0;
    double glo = excess(0), ghi = glo;
    // Fixed log-steps: site energies underflow long before T reaches e^12.
    const double step = 0.5;
    while (glo > 0) {
        hi = lo;
        ghi = glo;
        lo -= step;
        if (lo < -30) throw ConvergenceError("energy-one duration not bracketed (short end)", std::exp(lo), std::exp(hi));
        glo = excess(lo);
    }
    while (ghi < 0) {
        lo = hi;
        glo = ghi;
        hi += step;
        if (hi > 12) throw ConvergenceError("energy-one duration not bracketed (long end)", std::exp(lo), std::exp(hi));
        ghi = excess(hi);
    }
    double z = lo;
    if (ghi == 0) {
        z = hi;
    } else if (glo != 0) {
        boost::uintmax_t iters = 200;
        auto r = boost::math::tools::toms748_solve(excess, lo, hi, glo, ghi,
                                                   boost::math::tools::eps_tolerance<double>(50), iters);
        z = 0.5 * (r.first + r.second);
    }

    SegmentSolution seg;
    seg.q = q;
    seg.q_end = q_end;
    seg.T = std::exp(z);
    seg.energies.resize(p);
    seg.v_start.resize(p);
    seg.v_end.resize(p);
    for (std::size_t i = 0; i < p; ++i) {
        seg.arcs.push_back(bvp_solve(q[i], q_end[i], branches[i], seg.T));
        const auto &a = seg.arcs.back();
        seg.energies[i] = a.E;
        seg.v_start[i] = a.v0;
        seg.v_end[i] = a.v1;
        seg.length += arc_action(a);
    }
    return seg;
}

std::vector<double> energy_vector(const Config &q, const Config &q_end) {
    return uncoupled_connect(q, q_end).energies;
}

double segment_length(const SegmentSolution &seg) { return seg.length; }

std::vector<double> length_gradient(const SegmentSolution &seg, SegmentEnd which) {
    if (which == SegmentEnd::end) return seg.v_end;
    std::vector<double> g(seg.v_start);
    for (double &x : g) x = -x;
    return g;
}

std::vector<double> site_stiffness(const SegmentSolution &seg) {
    std::vector<double> k;
    for (const auto &a : seg.arcs) k.push_back(arc_stiffness(a));
    return k;
}

std::vector<double> duration_gradient(const SegmentSolution &seg) {
    const auto k = site_stiffness(seg);
    const double K = std::accumulate(k.begin(), k.end(), 0.0);
    std::vector<double> g;
    for (const auto &a : seg.arcs) g.push_back(sensitivity_identities(a, K).dT_dx);
    return g;
}

// ---------------------------------------------------------------------------
// Coupled refinement

namespace {

struct Flight {
    Config x;
    Config y;
    double length = 0;
    double min_lens = std::numeric_limits<double>::infinity();
};

// Fixed-step DOP853 flight of the full system from (a, v) for time tau,
// accumulating int |xdot|^2 dt. Fixed steps keep the map smooth in (v, tau).
Flight fly(const Config &a, const Config &v, double tau, const CouplingParams &cp, double steps_per_unit) {
    const std::size_t p = a.size();
    ode::Dop853 integ(
        [&cp, p](double, std::span<const double> s, std::span<double> ds) {
            double kin = 0;
            for (std::size_t j = 0; j < p; ++j) {
                ds[j] = s[p + j];
                kin += s[p + j] * s[p + j];
            }
            lattice_force(s.subspan(0, p), cp, ds.subspan(p, p));
            ds[2 * p] = kin;
        },
        2 * p + 1);
    std::vector<double> s(2 * p + 1, 0.0);
    std::copy(a.begin(), a.end(), s.begin());
    std::copy(v.begin(), v.end(), s.begin() + static_cast<long>(p));
    const auto n = static_cast<std::size_t>(std::max(20.0, std::ceil(std::abs(tau) * steps_per_unit)));
    const double h = tau / static_cast<double>(n);
    Flight f;
    auto track = [&](const std::vector<double> &st) {
        const std::span<const double> x(st.data(), p);
        if (cp.cut(x)) return;
        for (std::size_t i = 0; i < p; ++i) {
            if (!cp.active(i)) continue;
            f.min_lens = std::min(f.min_lens, lens_distance({x[(i + p - 1) % p], x[i], x[(i + 1) % p]}));
        }
    };
    track(s);
    for (std::size_t k = 0; k < n; ++k) {
        s = integ.step(h * static_cast<double>(k), s, h);
        track(s);
    }
    f.x.assign(s.begin(), s.begin() + static_cast<long>(p));
    f.y.assign(s.begin() + static_cast<long>(p), s.begin() + static_cast<long>(2 * p));
    f.length = std::abs(s[2 * p]);
    return f;
}

struct ShortPiece {
    Config v;      // velocity at the fixed endpoint a
    double tau = 0;
    Flight flight; // flight.y is the velocity at the target
};

// Energy-one orbit of the full system from a reaching b after time tau
// (tau < 0 flies backwards). Newton on (v, tau) from the given guess.
ShortPiece solve_short(const Config &a, const Config &b, const CouplingParams &cp, Config v, double tau,
                       double spu) {
    const std::size_t p = a.size();
    const double Ua = total_potential(a, &cp);
    auto residual = [&](const Config &vv, double tt, Flight *out) {
        Flight f = fly(a, vv, tt, cp, spu);
        Eigen::VectorXd r(static_cast<long>(p + 1));
        for (std::size_t j = 0; j < p; ++j) r[static_cast<long>(j)] = f.x[j] - b[j];
        r[static_cast<long>(p)] = 0.5 * dot(vv, vv) + Ua - 1;
        if (out) *out = std::move(f);
        return r;
    };
    double scale = 1;
    for (double x : b) scale = std::max(scale, std::abs(x));
    const double tol = 1e-13 + 8 * std::numeric_limits<double>::epsilon() * scale;
    Flight f;
    Eigen::VectorXd r = residual(v, tau, &f);
    // Chord iterations: the forward-difference Jacobian is rebuilt only when
    // the residual stops contracting.
    Eigen::FullPivLU<Eigen::MatrixXd> lu;
    bool have = false;  // a factorised Jacobian exists
    bool stale = false; // it was built at an earlier iterate
    for (int it = 0; it < 40 && r.lpNorm<Eigen::Infinity>() > tol; ++it) {
        if (!have) {
            Eigen::MatrixXd J(static_cast<long>(p + 1), static_cast<long>(p + 1));
            const double h = 1e-7;
            for (std::size_t k = 0; k <= p; ++k) {
                Config vp = v;
                double tp = tau;
                if (k < p)
                    vp[k] += h;
                else
                    tp += h;
                J.col(static_cast<long>(k)) = (residual(vp, tp, nullptr) - r) / h;
            }
            lu.compute(J);
            have = true;
            stale = false;
        }
        const Eigen::VectorXd delta = lu.solve(-r);
        bool improved = false;
        double lambda = 1;
        for (int ls = 0; ls < (stale ? 1 : 20); ++ls, lambda *= 0.5) {
            Config vn = v;
            for (std::size_t j = 0; j < p; ++j) vn[j] += lambda * delta[static_cast<long>(j)];
            const double tn = tau + lambda * delta[static_cast<long>(p)];
            Flight fn;
            const Eigen::VectorXd rn = residual(vn, tn, &fn);
            if (rn.norm() < r.norm()) {
                // Keep the Jacobian while it contracts the residual tenfold.
                if (rn.norm() > 0.1 * r.norm()) have = false;
                v = vn;
                tau = tn;
                r = rn;
                f = std::move(fn);
                improved = true;
                break;
            }
        }
        if (!improved) {
            if (!stale) break;
            have = false;
        }
        stale = have;
    }
    if (r.lpNorm<Eigen::Infinity>() > 1e-9 + 1e-12 * scale)
        throw ConvergenceError("short connecting piece did not converge (residual " +
                               std::to_string(r.lpNorm<Eigen::Infinity>()) + ")");
    return {v, tau, f};
}

// Orthonormal basis of the complement of unit vector e (columns).
Eigen::MatrixXd complement(const std::vector<double> &e) {
    const long p = static_cast<long>(e.size());
    Eigen::VectorXd ev = Eigen::Map<const Eigen::VectorXd>(e.data(), p);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(ev);
    Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(p, p);
    return Q.rightCols(p - 1);
}

std::vector<double> unit(std::vector<double> v) {
    const double n = norm(v);
    for (double &x : v) x /= n;
    return v;
}

// First time the uncoupled flight from (a, v) crosses the plane (x - c).e = level.
std::pair<double, Config> plane_crossing(const Config &a, const Config &v, double t_max, const Config &c,
                                         const std::vector<double> &e, double level, double eps) {
    const std::size_t p = a.size();
    CouplingParams free;
    free.eps = eps;
    free.mask.assign(p, false);
    FlowConfig cfg;
    cfg.tol = 1e-13;
    cfg.events.push_back({[&](double, std::span<const double> s) {
                              double g = -level;
                              for (std::size_t j = 0; j < p; ++j) g += (s[j] - c[j]) * e[j];
                              return g;
                          },
                          0, true});
    const auto tr = lattice_flow({a, v}, free, t_max, cfg);
    if (!tr.stopped_by_event) throw ConvergenceError("auxiliary section not crossed by the uncoupled orbit");
    return {tr.t.back(), tr.back().x};
}

} // namespace

SegmentSolution coupled_connect(const Config &p0, const Config &p1, const Config &c0, const Config &c1,
                                const CouplingParams &cp, const ConnectOptions &opts) {
    validate(cp);
    check_shape(p0, p1);
    check_shape(c0, c1);
    const std::size_t p = p0.size();
    const double d = opts.aux_distance < 0 ? std::cbrt(cp.eps) : opts.aux_distance;
    const double spu = opts.step_per_unit;

    const SegmentSolution centre = uncoupled_connect(c0, c1);
    const auto e0 = unit(centre.v_start);
    const auto e1 = unit(centre.v_end);
    const Eigen::MatrixXd B0 = complement(e0), B1 = complement(e1);

    SegmentSolution base = uncoupled_connect(p0, p1);
    base.coupled = true;

    // Where the beta-free orbit crosses the auxiliary sections.
    Config minus_v_end(base.v_end);
    for (double &x : minus_v_end) x = -x;
    const auto [t0, q0_init] = plane_crossing(p0, base.v_start, base.T, c0, e0, d, cp.eps);
    const auto [t1, q1_back] = plane_crossing(p1, minus_v_end, base.T, c1, e1, -d, cp.eps);

    ShortPiece A = solve_short(p0, q0_init, cp, base.v_start, t0, spu);
    ShortPiece C = solve_short(p1, q1_back, cp, base.v_end, -t1, spu);
    if (A.flight.min_lens >= cp.eps && C.flight.min_lens >= cp.eps) {
        base.lens_contact = false;
        base.warnings.push_back("short pieces never meet a lens; segment equals the uncoupled solution");
        return base;
    }

    const long m = static_cast<long>(p - 1);
    auto q_of = [&](const Eigen::VectorXd &z) {
        Config q0(p), q1(p);
        const Eigen::VectorXd a = B0 * z.head(m), b = B1 * z.tail(m);
        for (std::size_t j = 0; j < p; ++j) {
            q0[j] = c0[j] + d * e0[j] + a[static_cast<long>(j)];
            q1[j] = c1[j] - d * e1[j] + b[static_cast<long>(j)];
        }
        return std::pair{q0, q1};
    };
    Eigen::VectorXd z(2 * m);
    {
        Eigen::VectorXd a(static_cast<long>(p)), b(static_cast<long>(p));
        for (std::size_t j = 0; j < p; ++j) {
            a[static_cast<long>(j)] = q0_init[j] - c0[j];
            b[static_cast<long>(j)] = q1_back[j] - c1[j];
        }
        z.head(m) = B0.transpose() * a;
        z.tail(m) = B1.transpose() * b;
    }

    struct Eval {
        Eigen::VectorXd r;
        ShortPiece A, C;
        SegmentSolution M;
    };
    auto evaluate = [&](const Eigen::VectorXd &zz, const ShortPiece &gA, const ShortPiece &gC) {
        const auto [q0, q1] = q_of(zz);
        Eval e;
        e.A = solve_short(p0, q0, cp, gA.v, gA.tau, spu);
        e.C = solve_short(p1, q1, cp, gC.v, gC.tau, spu);
        e.M = uncoupled_connect(q0, q1);
        e.r.resize(static_cast<long>(2 * p));
        for (std::size_t j = 0; j < p; ++j) {
            e.r[static_cast<long>(j)] = e.A.flight.y[j] - e.M.v_start[j];
            e.r[static_cast<long>(p + j)] = e.M.v_end[j] - e.C.flight.y[j];
        }
        return e;
    };

    Eval cur = evaluate(z, A, C);
    std::vector<double> history{cur.r.lpNorm<Eigen::Infinity>()};
    Eigen::MatrixXd J;
    bool need_jacobian = true;
    for (int it = 0; it < opts.max_iterations && history.back() > opts.tol; ++it) {
        if (need_jacobian) {
            J.resize(static_cast<long>(2 * p), 2 * m);
            const double h = 1e-6;
            for (long k = 0; k < 2 * m; ++k) {
                Eigen::VectorXd zp = z;
                zp[k] += h;
                J.col(k) = (evaluate(zp, cur.A, cur.C).r - cur.r) / h;
            }
            need_jacobian = false;
        }
        const Eigen::VectorXd delta = J.colPivHouseholderQr().solve(-cur.r);
        double lambda = 1;
        bool accepted = false;
        for (int ls = 0; ls < 12; ++ls, lambda *= 0.5) {
            const Eigen::VectorXd zn = z + lambda * delta;
            Eval next = evaluate(zn, cur.A, cur.C);
            if (next.r.norm() < cur.r.norm()) {
                const double ratio = next.r.norm() / cur.r.norm();
                z = zn;
                cur = std::move(next);
                accepted = true;
                if (ratio > 0.25) need_jacobian = true;
                break;
            }
        }
        history.push_back(cur.r.lpNorm<Eigen::Infinity>());
        if (!accepted) {
            if (need_jacobian) break;
            need_jacobian = true;
        }
    }

    SegmentSolution seg;
    seg.q = p0;
    seg.q_end = p1;
    seg.coupled = true;
    seg.lens_contact = true;
    seg.T = cur.A.tau + cur.M.T - cur.C.tau;
    seg.energies = cur.M.energies;
    seg.length = cur.A.flight.length + cur.M.length + cur.C.flight.length;
    seg.v_start = cur.A.v;
    seg.v_end = cur.C.v;
    seg.arcs = cur.M.arcs;
    seg.mismatch = history.back();
    seg.residual_history = history;
    if (seg.mismatch > opts.tol) {
        std::ostringstream msg;
        msg << "velocity matching did not converge; residual history";
        for (double h : history) msg << ' ' << std::scientific << std::setprecision(2) << h;
        throw ConvergenceError(msg.str());
    }
    return seg;
}

SegmentSolution coupled_connect(const Config &p0, const Config &p1, const CouplingParams &cp,
                                const ConnectOptions &opts) {
    return coupled_connect(p0, p1, p0, p1, cp, opts);
}

} // namespace pendula
