#include "pendula/minimizer.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace pendula {

namespace {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

Vec to_vec(const std::vector<double> &v) { return Eigen::Map<const Vec>(v.data(), static_cast<long>(v.size())); }

// Minimiser of g.s + s.H.s/2 over |s| <= radius (small dense H).
Vec trust_region_step(const Mat &H, const Vec &g, double radius) {
    Eigen::SelfAdjointEigenSolver<Mat> es(H);
    const Vec lam = es.eigenvalues();
    const Mat Q = es.eigenvectors();
    const Vec gq = Q.transpose() * g;
    auto step = [&](double mu) {
        Vec s(g.size());
        for (long i = 0; i < g.size(); ++i) s[i] = -gq[i] / (lam[i] + mu);
        return s;
    };
    const double lmin = lam.minCoeff();
    if (lmin > 0) {
        const Vec s = step(0);
        if (s.norm() <= radius) return Q * s;
    }
    double lo = std::max(0.0, -lmin);
    // Hard case: no component along the lowest eigenvector.
    const double tiny = 1e-14 * (1 + lam.cwiseAbs().maxCoeff());
    Vec s_lo = step(lo + tiny);
    if (s_lo.norm() < radius) {
        Vec s = s_lo;
        for (long i = 0; i < g.size(); ++i)
            if (lam[i] <= lo + tiny) s[i] = 0;
        const double rest = std::sqrt(std::max(0.0, radius * radius - s.squaredNorm()));
        s[0] += rest;
        return Q * s;
    }
    double hi = lo + g.norm() / radius + tiny;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (step(mid).norm() > radius)
            lo = mid;
        else
            hi = mid;
        if (hi - lo <= 1e-15 * hi) break;
    }
    return Q * step(hi);
}

} // namespace

CouplingParams truncated_coupling(const CouplingParams &cp, const Section &sec) {
    CouplingParams out = cp;
    out.cutouts.push_back({sec.center, {sec.active_pair[0], sec.active_pair[1], sec.facilitator}, cp.eps});
    return out;
}

SegmentSolution connect(const Section &a, const Config &pa, const Section &b, const Config &pb,
                        const CouplingParams &cp, const ConnectOptions &opts) {
    return coupled_connect(pa, pb, a.center, b.center, cp, opts);
}

LocalValue local_functional(const Section &prev, const Config &p_prev, const Section &sec, const Config &p,
                            const Section &next, const Config &p_next, const CouplingParams &cp, LensMode mode,
                            const ConnectOptions &opts) {
    const CouplingParams c = mode == LensMode::truncated ? truncated_coupling(cp, sec) : cp;
    LocalValue lv;
    lv.in = connect(prev, p_prev, sec, p, c, opts);
    lv.out = connect(sec, p, next, p_next, c, opts);
    lv.value = lv.in.length + lv.out.length;
    for (std::size_t s : sec.free_sites()) lv.gradient.push_back(lv.in.v_end[s] - lv.out.v_start[s]);
    return lv;
}

namespace {

struct Block {
    Mat H;
    bool have_hessian = false;
    double radius = 0;
};

double norm(const std::vector<double> &v) { return to_vec(v).norm(); }

} // namespace

BrokenGeodesic minimize(const Itinerary &itin, const Config &p_first, const Config &p_last,
                        const CouplingParams &cp, const MinimizeOptions &opts) {
    if (itin.sections.size() < 3) throw DomainError("a broken geodesic needs at least three sections");
    BrokenGeodesic bg;
    bg.sections = itin.sections;
    const auto &S = bg.sections;
    const std::size_t M = S.size(), N = M - 2;
    if (!opts.initial.empty() && opts.initial.size() != N)
        throw DomainError("initial guess must give one point per break section");

    bg.points.resize(M);
    bg.points[0] = p_first;
    bg.points[M - 1] = p_last;
    bg.local.resize(N);
    for (std::size_t j = 1; j <= N; ++j) {
        bg.local[j - 1] = opts.initial.empty() ? std::vector<double>(S[j].free_sites().size(), 0.0)
                                               : opts.initial[j - 1];
        if (S[j].margin(bg.local[j - 1]) <= 0) throw DomainError("initial point outside its section");
        bg.points[j] = S[j].point(bg.local[j - 1]);
    }
    const CouplingParams c = cp;
    auto seg_cp = [&](std::size_t j) {
        // In truncated mode every break section loses its own lens.
        CouplingParams out = c;
        if (opts.mode == LensMode::truncated)
            for (std::size_t k : {j, j + 1})
                if (k >= 1 && k <= N) out = truncated_coupling(out, S[k]);
        return out;
    };
    for (std::size_t j = 0; j + 1 < M; ++j)
        bg.segments.push_back(connect(S[j], bg.points[j], S[j + 1], bg.points[j + 1], seg_cp(j), opts.connect));

    auto total = [&] {
        double L = 0;
        for (const auto &s : bg.segments) L += s.length;
        return L;
    };
    auto gradient_at = [&](std::size_t j) {
        std::vector<double> g;
        for (std::size_t s : S[j].free_sites()) g.push_back(bg.segments[j - 1].v_end[s] - bg.segments[j].v_start[s]);
        return g;
    };
    auto max_gradient = [&] {
        double m = 0;
        for (std::size_t j = 1; j <= N; ++j) m = std::max(m, norm(gradient_at(j)));
        return m;
    };
    // Both segments touching break point j for local coordinates l.
    struct Trial {
        double value;
        Vec g;
        SegmentSolution in, out;
    };
    auto evaluate = [&](std::size_t j, const std::vector<double> &l) {
        const Config x = S[j].point(l);
        Trial t;
        t.in = connect(S[j - 1], bg.points[j - 1], S[j], x, seg_cp(j - 1), opts.connect);
        t.out = connect(S[j], x, S[j + 1], bg.points[j + 1], seg_cp(j), opts.connect);
        t.value = t.in.length + t.out.length;
        std::vector<double> g;
        for (std::size_t s : S[j].free_sites()) g.push_back(t.in.v_end[s] - t.out.v_start[s]);
        t.g = to_vec(g);
        return t;
    };

    std::vector<Block> blocks(N);
    for (std::size_t j = 1; j <= N; ++j) blocks[j - 1].radius = 0.25 * std::min(S[j].rho_v, S[j].rho_h);

    bg.total_length = total();
    bg.length_history.push_back(bg.total_length);
    bg.grad_history.push_back(max_gradient());

    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
        double max_move = 0;
        for (std::size_t j = 1; j <= N; ++j) {
            Block &b = blocks[j - 1];
            const Section &sec = S[j];
            std::vector<double> l = bg.local[j - 1];
            const std::vector<double> l0 = l;
            double value = bg.segments[j - 1].length + bg.segments[j].length;
            Vec g = to_vec(gradient_at(j));
            const long n = g.size();
            for (int it = 0; it < opts.max_block_iterations && g.norm() >= opts.tol_g; ++it) {
                if (!b.have_hessian) {
                    b.H.resize(n, n);
                    for (long k = 0; k < n; ++k) {
                        std::vector<double> lk = l;
                        double h = opts.fd_step;
                        lk[k] += h;
                        if (sec.margin(lk) <= 0) {
                            h = -h;
                            lk[k] = l[k] + h;
                        }
                        b.H.col(k) = (evaluate(j, lk).g - g) / h;
                    }
                    b.H = 0.5 * (b.H + b.H.transpose()).eval();
                    b.have_hessian = true;
                }
                Vec s = trust_region_step(b.H, g, b.radius);
                // Fraction to the boundary.
                const double keep = (1 - opts.fraction_to_boundary) * sec.margin(l);
                auto inside = [&](double a) {
                    std::vector<double> t = l;
                    for (long k = 0; k < n; ++k) t[k] += a * s[k];
                    return sec.margin(t) >= keep;
                };
                if (!inside(1)) {
                    double lo = 0, hi = 1;
                    for (int k = 0; k < 60; ++k) (inside(0.5 * (lo + hi)) ? lo : hi) = 0.5 * (lo + hi);
                    s *= lo;
                }
                if (s.norm() < opts.tol_x) break;
                std::vector<double> lt = l;
                for (long k = 0; k < n; ++k) lt[k] += s[k];
                Trial t = evaluate(j, lt);
                const double pred = -(g.dot(s) + 0.5 * s.dot(b.H * s));
                const double ared = value - t.value;
                const double noise = 4e-13 * std::abs(value);
                const double rho = pred > 0 ? ared / pred : -1;
                const bool accept =
                    (pred > noise && rho > 0.1) || (ared > -noise && pred <= noise && t.g.norm() < g.norm());
                // SR1 refresh from the exact gradient difference.
                const Vec y = t.g - g, r = y - b.H * s;
                if (std::abs(r.dot(s)) > 1e-8 * r.norm() * s.norm()) b.H += r * r.transpose() / r.dot(s);
                if (accept) {
                    l = lt;
                    value = t.value;
                    g = t.g;
                    bg.segments[j - 1] = std::move(t.in);
                    bg.segments[j] = std::move(t.out);
                    if (rho > 0.75 && s.norm() > 0.8 * b.radius)
                        b.radius = std::min(2 * b.radius, std::max(sec.rho_v, sec.rho_h));
                } else {
                    b.radius = 0.25 * s.norm();
                    if (b.radius < opts.tol_x) break;
                }
            }
            bg.local[j - 1] = l;
            bg.points[j] = sec.point(l);
            std::vector<double> d(l.size());
            for (std::size_t k = 0; k < l.size(); ++k) d[k] = l[k] - l0[k];
            max_move = std::max(max_move, norm(d));
        }
        bg.sweeps = sweep + 1;
        bg.total_length = total();
        bg.grad_norm = max_gradient();
        bg.length_history.push_back(bg.total_length);
        bg.grad_history.push_back(bg.grad_norm);
        if (bg.grad_norm < opts.tol_g && max_move < opts.tol_x) {
            bg.converged = true;
            break;
        }
        if (max_move < opts.tol_x && bg.grad_norm >= opts.tol_g) {
            bg.warnings.push_back("descent stalled above the gradient tolerance");
            break;
        }
    }
    bg.grad_norm = max_gradient();
    if (!bg.converged) bg.warnings.push_back("sweep limit reached or stalled; returning the best iterate");
    for (std::size_t j = 1; j <= N; ++j) {
        const double m = S[j].margin(bg.local[j - 1]);
        bg.interior_margins.push_back(m);
        if (m < 1e-3 * std::min(S[j].rho_v, S[j].rho_h)) bg.boundary_contact = true;
    }
    if (bg.boundary_contact) bg.warnings.push_back("a break point sits on its section boundary");
    return bg;
}

BrokenGeodesic minimize(const Itinerary &itin, const CouplingParams &cp, const MinimizeOptions &opts) {
    if (itin.sections.empty()) throw DomainError("empty itinerary");
    return minimize(itin, itin.sections.front().center, itin.sections.back().center, cp, opts);
}

nlohmann::json certify_interior(const BrokenGeodesic &bg, const CouplingParams &cp, const CertifyOptions &opts) {
    using nlohmann::json;
    const auto &S = bg.sections;
    const std::size_t N = S.size() - 2;
    json points = json::array();
    bool all = true;
    const double expected_gap = std::pow(cp.eps, cp.r + 1) * bump_eta(0.5, cp.eta);
    for (std::size_t j = 1; j <= N; ++j) {
        const Section &sec = S[j];
        const auto &l = bg.local[j - 1];
        const std::size_t n = l.size();
        auto value = [&](const std::vector<double> &loc, LensMode mode) {
            return local_functional(S[j - 1], bg.points[j - 1], sec, sec.point(loc), S[j + 1], bg.points[j + 1], cp,
                                    mode, opts.connect)
                .value;
        };
        const double s_here = value(l, LensMode::with_lens);

        auto ring = [&](double radius, std::vector<double> base) {
            std::vector<std::vector<double>> out;
            for (int k = 0; k < opts.angles; ++k) {
                const double th = kTwoPi * k / opts.angles;
                base[0] = radius * std::cos(th);
                base[1] = radius * std::sin(th);
                out.push_back(base);
            }
            return out;
        };

        double v_min = std::numeric_limits<double>::infinity();
        for (std::size_t s = 2; s < n; ++s)
            for (int k = 0; k < opts.sleeper_levels; ++k) {
                std::vector<double> base = l;
                base[s] = opts.sleeper_levels == 1
                              ? 0.0
                              : sec.rho_h * (-1 + 2.0 * k / (opts.sleeper_levels - 1)) * (1 - 1e-9);
                for (const auto &q : ring(sec.rho_v, base)) v_min = std::min(v_min, value(q, LensMode::with_lens));
            }
        if (n == 2)
            for (const auto &q : ring(sec.rho_v, l)) v_min = std::min(v_min, value(q, LensMode::with_lens));

        double h_min = std::numeric_limits<double>::infinity();
        for (std::size_t s = 2; s < n; ++s)
            for (double sign : {-1.0, 1.0}) {
                std::vector<double> base(n, 0.0);
                base[s] = sign * sec.rho_h;
                h_min = std::min(h_min, value(base, LensMode::with_lens));
                for (double rr : {0.5, 1.0})
                    for (const auto &q : ring(rr * sec.rho_v * (1 - 1e-9), base))
                        h_min = std::min(h_min, value(q, LensMode::with_lens));
            }

        // Flatness of S0 over the active-pair disk at the point's sleeper offsets.
        std::vector<double> disk_base = l;
        disk_base[0] = disk_base[1] = 0;
        double f_lo = value(disk_base, LensMode::truncated), f_hi = f_lo;
        for (double rr : {0.5, 1.0})
            for (const auto &q : ring(rr * sec.rho_v * (1 - 1e-9), disk_base)) {
                const double v = value(q, LensMode::truncated);
                f_lo = std::min(f_lo, v);
                f_hi = std::max(f_hi, v);
            }

        // Convexity in the sleeper coordinates.
        json convexity = json::array();
        bool convex_ok = true;
        for (std::size_t s = 2; s < n; ++s) {
            std::vector<double> mid = l;
            mid[s] = 0;
            const double s0 = value(mid, LensMode::truncated);
            for (double sign : {-1.0, 1.0}) {
                std::vector<double> q = mid;
                q[s] = sign * sec.rho_h;
                const double margin = value(q, LensMode::truncated) - s0;
                convexity.push_back({{"site", sec.free_sites()[s]}, {"offset", sign * sec.rho_h}, {"margin", margin}});
                convex_ok = convex_ok && margin > 0;
            }
        }

        const std::vector<double> centre(n, 0.0);
        const double s_c = value(centre, LensMode::with_lens), s0_c = value(centre, LensMode::truncated);
        const double gap = s0_c - s_c;

        const bool boundary_ok = (n == 2 || h_min > s_here) && v_min > s_here;
        const double margin = sec.margin(l);
        const bool ok = boundary_ok && convex_ok && gap > 0 && margin > 0;
        all = all && ok;
        points.push_back({{"index", j},
                          {"margin", margin},
                          {"S", s_here},
                          {"boundary",
                           {{"vertical_min", v_min},
                            {"horizontal_min", n > 2 ? json(h_min) : json(nullptr)},
                            {"vertical_excess", v_min - s_here},
                            {"horizontal_excess", n > 2 ? json(h_min - s_here) : json(nullptr)},
                            {"pass", boundary_ok}}},
                          {"flatness", {{"S0_spread", f_hi - f_lo}}},
                          {"convexity", {{"margins", convexity}, {"pass", convex_ok}}},
                          {"lens",
                           {{"S_centre", s_c},
                            {"S0_centre", s0_c},
                            {"gap", gap},
                            {"expected", expected_gap},
                            {"ratio", gap / expected_gap}}},
                          {"pass", ok}});
    }
    return {{"points", points}, {"pass", all}};
}

} // namespace pendula
