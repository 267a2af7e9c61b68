#include "pendula/lattice.hpp"

#include "pendula/pendulum.hpp"

#include <cmath>
#include <stdexcept>

namespace pendula {

double bump_eta(double u, const EtaProfile &eta) {
    const double u2 = u * u;
    if (u2 >= 1) return 0;
    return std::exp(eta.sharpness - eta.sharpness / (1 - u2));
}

double bump_eta_prime(double u, const EtaProfile &eta) {
    const double u2 = u * u;
    if (u2 >= 1) return 0;
    const double w = 1 - u2;
    return bump_eta(u, eta) * (-2 * eta.sharpness * u / (w * w));
}

bool CouplingParams::cut(std::span<const double> x) const {
    for (const auto &c : cutouts) {
        double d2 = 0;
        for (std::size_t s : c.sites) d2 += (x[s] - c.center[s]) * (x[s] - c.center[s]);
        if (d2 < c.radius * c.radius) return true;
    }
    return false;
}

void validate(const CouplingParams &cp) {
    if (!(cp.eps > 0 && cp.eps < kPi)) throw DomainError("coupling eps must lie in (0, pi)");
    if (cp.r < 1) throw DomainError("coupling exponent r must be positive");
    if (!(cp.eta.sharpness > 0)) throw DomainError("bump sharpness must be positive");
}

namespace {

std::array<double, 3> reduce(const std::array<double, 3> &x) {
    std::array<double, 3> d;
    for (int k = 0; k < 3; ++k) d[k] = x[k] - kTwoPi * std::round(x[k] / kTwoPi);
    return d;
}

std::array<double, 3> triple(std::span<const double> x, std::size_t i) {
    const std::size_t p = x.size();
    return {x[(i + p - 1) % p], x[i], x[(i + 1) % p]};
}

} // namespace

double lens_distance(const std::array<double, 3> &x) {
    const auto d = reduce(x);
    return std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
}

double coupling_beta(const std::array<double, 3> &x, const CouplingParams &cp) {
    const double rho = lens_distance(x);
    if (rho >= cp.eps) return 0;
    return std::pow(cp.eps, cp.r) * bump_eta(rho / cp.eps, cp.eta);
}

std::array<double, 3> coupling_beta_grad(const std::array<double, 3> &x, const CouplingParams &cp) {
    const auto d = reduce(x);
    const double rho = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    if (rho >= cp.eps || rho == 0) return {0, 0, 0};
    const double scale = std::pow(cp.eps, cp.r) * bump_eta_prime(rho / cp.eps, cp.eta) / (cp.eps * rho);
    return {scale * d[0], scale * d[1], scale * d[2]};
}

double site_energy(const LatticeState &s, std::size_t j) {
    return 0.5 * s.y[j] * s.y[j] + potential(s.x[j]);
}

std::vector<double> site_energies(const LatticeState &s) {
    std::vector<double> e(s.size());
    for (std::size_t j = 0; j < s.size(); ++j) e[j] = site_energy(s, j);
    return e;
}

double coupling_energy(std::span<const double> x, const CouplingParams &cp) {
    if (cp.cut(x)) return 0;
    double b = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (cp.active(i)) b += coupling_beta(triple(x, i), cp);
    return cp.eps * b;
}

double hamiltonian(const LatticeState &s, const CouplingParams &cp) {
    double h = 0;
    for (std::size_t j = 0; j < s.size(); ++j) h += site_energy(s, j);
    return h + coupling_energy(s.x, cp);
}

void lattice_force(std::span<const double> x, const CouplingParams &cp, std::span<double> force) {
    const std::size_t p = x.size();
    for (std::size_t j = 0; j < p; ++j) force[j] = -std::sin(x[j]);
    if (cp.cut(x)) return;
    for (std::size_t i = 0; i < p; ++i) {
        if (!cp.active(i)) continue;
        const auto g = coupling_beta_grad(triple(x, i), cp);
        if (g[0] == 0 && g[1] == 0 && g[2] == 0) continue;
        force[(i + p - 1) % p] -= cp.eps * g[0];
        force[i] -= cp.eps * g[1];
        force[(i + 1) % p] -= cp.eps * g[2];
    }
}

LatticeState lattice_rhs(const LatticeState &s, const CouplingParams &cp) {
    LatticeState d;
    d.x = s.y;
    d.y.resize(s.size());
    lattice_force(s.x, cp, d.y);
    return d;
}

std::vector<std::size_t> lenses_hit(std::span<const double> x, const CouplingParams &cp) {
    std::vector<std::size_t> out;
    if (cp.cut(x)) return out;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (cp.active(i) && lens_distance(triple(x, i)) < cp.eps) out.push_back(i);
    return out;
}

std::vector<double> pack(const LatticeState &s) {
    std::vector<double> xy(s.x);
    xy.insert(xy.end(), s.y.begin(), s.y.end());
    return xy;
}

LatticeState unpack(std::span<const double> xy) {
    const std::size_t p = xy.size() / 2;
    return {std::vector<double>(xy.begin(), xy.begin() + p), std::vector<double>(xy.begin() + p, xy.end())};
}

Trajectory lattice_flow(const LatticeState &s, const CouplingParams &cp, double t_span,
                        const FlowConfig &cfg) {
    validate(cp);
    if (s.x.size() != s.y.size() || s.size() < 3) throw DomainError("malformed lattice state");
    Trajectory out;
    out.t.push_back(0);
    out.states.push_back(s);
    if (t_span == 0) return out;
    const std::size_t p = s.size();

    if (cfg.method == Integrator::yoshida6) {
        if (!(cfg.step > 0)) throw DomainError("yoshida step must be positive");
        const auto steps = static_cast<std::size_t>(std::ceil(std::abs(t_span) / cfg.step - 1e-9));
        const double h = t_span / static_cast<double>(steps);
        const std::size_t stride =
            cfg.sample_dt > 0 ? std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.sample_dt / std::abs(h))))
                              : 0;
        std::size_t count = 0;
        auto force = [&](std::span<const double> x, std::span<double> f) { lattice_force(x, cp, f); };
        const auto end = ode::yoshida6_flow(force, pack(s), h, steps, [&](double, std::span<const double> xy) {
            ++count;
            if (stride && count % stride == 0 && count != steps) {
                out.t.push_back(h * static_cast<double>(count));
                out.states.push_back(unpack(xy));
            }
        });
        out.t.push_back(t_span);
        out.states.push_back(unpack(end));
        return out;
    }

    if (!(cfg.tol > 0)) throw DomainError("tolerance must be positive");
    ode::Dop853 integ(
        [&cp, p](double, std::span<const double> y, std::span<double> dy) {
            for (std::size_t j = 0; j < p; ++j) dy[j] = y[p + j];
            lattice_force(y.subspan(0, p), cp, dy.subspan(p, p));
        },
        2 * p);
    ode::FlowOptions opts;
    opts.tol = {cfg.tol, cfg.tol};
    opts.sample_dt = cfg.sample_dt;
    opts.events = cfg.events;
    // No step may cross more than half a lens radius, or the stages can miss the bump.
    const double v_max = std::sqrt(2 * std::max(hamiltonian(s, cp) + 2.0 * static_cast<double>(p), 1e-300));
    opts.max_step = 0.5 * cp.eps / v_max;
    const auto r = integ.integrate(0.0, pack(s), t_span, opts);
    for (std::size_t k = 0; k < r.ts.size(); ++k) {
        if (r.ts[k] == 0) continue;
        if (std::abs(r.ts[k] - r.t_end) <= 1e-12 * std::max(1.0, std::abs(r.t_end))) continue;
        out.t.push_back(r.ts[k]);
        out.states.push_back(unpack(r.ys[k]));
    }
    out.t.push_back(r.t_end);
    out.states.push_back(unpack(r.y_end));
    out.hits = r.hits;
    out.stopped_by_event = r.stopped_by_event;
    return out;
}

} // namespace pendula
