#include "pendula/pendulum.hpp"

#include "pendula/ode.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <utility>

namespace pendula {

namespace {

using boost::math::quadrature::gauss_kronrod;

constexpr double kQuadTol = 2e-13;
constexpr unsigned kQuadDepth = 12;

// Quantities integrated along x: dt, the stiffness density, and xdot dt.
enum class Density { time, stiff, action };

double power_of(Density k, double room2) {
    // room2 = 2 (E - V)
    switch (k) {
    case Density::time: return 1.0 / std::sqrt(room2);
    case Density::stiff: return 1.0 / (room2 * std::sqrt(room2));
    case Density::action: return std::sqrt(room2);
    }
    return 0;
}

double nearest_upright(double x) { return kTwoPi * std::round((x - kPi) / kTwoPi) + kPi; }
double nearest_bottom(double x) { return kTwoPi * std::round(x / kTwoPi); }

template <class F>
double quad(F f, double a, double b) {
    if (!(b > a)) return 0;
    // Integrate over [0, 1]: the error floor of the rule is absolute in the abscissa.
    const double w = b - a;
    auto g = [&](double s) { return f(a + w * s); };
    return w * gauss_kronrod<double, 31>::integrate(g, 0.0, 1.0, kQuadDepth, kQuadTol);
}

// Integral over d in [da, db] subset [-pi/2, pi/2], where d is the offset from
// an upright position, so E - V = E + 2 sin^2(d/2).
double peak_piece(Density k, double E, double da, double db) {
    if (!(db > da)) return 0;
    if (E >= 0.5) {
        auto f = [&](double d) {
            const double s = std::sin(d / 2);
            return power_of(k, 2 * (E + 2 * s * s));
        };
        return quad(f, da, db);
    }
    if (E > 0) {
        const double rho = std::sqrt(E / 2);
        auto t_of = [&](double d) { return std::asinh(std::sin(d / 2) / rho); };
        auto g = [&](double t) {
            const double S = rho * std::sinh(t);
            const double c = std::sqrt(std::max(0.0, 1 - S * S));
            const double ch = std::cosh(t);
            switch (k) {
            case Density::time: return 1 / c;
            case Density::stiff: return 1 / (2 * E * ch * ch * c);
            case Density::action: return 2 * E * ch * ch / c;
            }
            return 0.0;
        };
        return quad(g, t_of(da), t_of(db));
    }
    if (E == 0) {
        if (da < 0 && db > 0) throw DomainError("path crosses the saddle at separatrix energy");
        auto f = [&](double d) {
            const double s = std::sin(d / 2);
            return power_of(k, 4 * s * s);
        };
        return quad(f, da, db);
    }
    // E < 0: the path must stay on one side, beyond the turning offset.
    if (da < 0 && db > 0) throw DomainError("path crosses a forbidden region");
    const double a = std::min(std::abs(da), std::abs(db));
    const double b = std::max(std::abs(da), std::abs(db));
    const double sigma = std::sqrt(-E / 2);
    auto t_of = [&](double d) {
        const double r = std::sin(d / 2) / sigma;
        if (r < 1 - 1e-12) throw DomainError("path enters a forbidden region");
        return std::acosh(std::max(1.0, r));
    };
    auto g = [&](double t) {
        const double S = sigma * std::cosh(t);
        const double c = std::sqrt(std::max(0.0, 1 - S * S));
        const double sh = std::sinh(t);
        switch (k) {
        case Density::time: return 1 / c;
        case Density::stiff: return 2 * sigma / (std::pow(-2 * E, 1.5) * sh * sh * c);
        case Density::action: return -2 * E * sh * sh / c;
        }
        return 0.0;
    };
    return quad(g, t_of(a), t_of(b));
}

// Integral over u in [ua, ub] within pi/2 of a bottom position; E + 1 >= 0 keeps
// the integrand smooth there.
double bottom_piece(Density k, double E, double ua, double ub) {
    auto f = [&](double u) {
        const double c = std::cos(u / 2);
        return power_of(k, 2 * (E + 2 * c * c));
    };
    return quad(f, ua, ub);
}

double one_period(Density k, double E) {
    return peak_piece(k, E, -kPi / 2, kPi / 2) + bottom_piece(k, E, -kPi / 2, kPi / 2);
}

// Integral of the density along u in [lo, hi].
double path_integral(Density k, double E, double lo, double hi) {
    if (!(hi > lo)) return 0;
    double total = 0;
    if (E > 0 && hi - lo >= kTwoPi) {
        const double n = std::floor((hi - lo) / kTwoPi);
        total += n * one_period(k, E);
        lo += n * kTwoPi;
    }
    // Pieces between consecutive points pi/2 + j pi alternate between
    // bottom (j odd) and upright (j even) neighbourhoods; piece j is centred
    // at (j + 1) pi.
    const long j_first = static_cast<long>(std::floor((lo - kPi / 2) / kPi));
    const long j_last = static_cast<long>(std::floor((hi - kPi / 2) / kPi));
    for (long j = j_first; j <= j_last; ++j) {
        const double a = std::max(lo, kPi / 2 + static_cast<double>(j) * kPi);
        const double b = std::min(hi, kPi / 2 + static_cast<double>(j + 1) * kPi);
        if (!(b > a)) continue;
        // Same rounding as the potential, so offsets at the endpoints agree.
        const double mid = 0.5 * (a + b);
        if ((j + 1) % 2 != 0) {
            const double centre = nearest_upright(mid);
            total += peak_piece(k, E, a - centre, b - centre);
        } else {
            const double centre = nearest_bottom(mid);
            total += bottom_piece(k, E, a - centre, b - centre);
        }
    }
    return total;
}

// Time and dT/dE of the excursion from offset |d_end| from an upright position
// to the turning point and back is twice these values.
double turn_time(double E, double d_end) {
    const double sigma = std::sqrt(-E / 2);
    const double r = std::sin(d_end / 2) / sigma;
    const double t_end = std::acosh(std::max(1.0, r));
    auto g = [&](double t) {
        const double S = sigma * std::cosh(t);
        return 1 / std::sqrt(std::max(0.0, 1 - S * S));
    };
    return quad(g, 0.0, t_end);
}

double turn_time_slope(double E, double d_end) {
    const double sigma = std::sqrt(-E / 2);
    const double S_end = std::sin(d_end / 2);
    const double r = S_end / sigma;
    if (r <= 1) return std::numeric_limits<double>::infinity();
    const double t_end = std::acosh(r);
    const double c_end = std::sqrt(1 - S_end * S_end);
    const double boundary = S_end / (4 * sigma * sigma * sigma * std::sinh(t_end) * c_end);
    auto g = [&](double t) {
        const double S = sigma * std::cosh(t);
        const double c = std::sqrt(std::max(0.0, 1 - S * S));
        const double ch = std::cosh(t);
        return ch * ch / (4 * c * c * c);
    };
    return boundary - quad(g, 0.0, t_end);
}

double turn_action(double E, double d_end) {
    const double sigma = std::sqrt(-E / 2);
    const double t_end = std::acosh(std::max(1.0, std::sin(d_end / 2) / sigma));
    auto g = [&](double t) {
        const double S = sigma * std::cosh(t);
        const double sh = std::sinh(t);
        return -2 * E * sh * sh / std::sqrt(std::max(0.0, 1 - S * S));
    };
    return quad(g, 0.0, t_end);
}

bool near_bottom(double x) { return std::abs(x - nearest_bottom(x)) <= 1.0; }
bool near_upright(double x) { return std::abs(x - nearest_upright(x)) <= 1.0; }

// Arc geometry in the frame u = s x where the motion from ua to ub is rightward.
struct Frame {
    double s = 1;
    double ua = 0;
    double ub = 0;
    bool crosses_upright = false;
    double E_touch = 0;       // largest potential on [ua, ub] when no upright inside
    ArcShape turn = ArcShape::direct;
    double turn_peak = 0;     // upright position beyond which the turn happens
    double turn_offset = 0;   // |offset| from turn_peak of the end the turn is attached to
};

Frame make_frame(double alpha, double beta) {
    Frame f;
    if (beta != alpha) {
        f.s = beta > alpha ? 1 : -1;
    } else {
        const double p = nearest_upright(alpha);
        f.s = p >= alpha ? 1 : -1;
    }
    f.ua = f.s * alpha;
    f.ub = f.s * beta;
    double first_peak = kPi + kTwoPi * std::ceil((f.ua - kPi) / kTwoPi);
    if (first_peak < f.ua) first_peak += kTwoPi;
    if (first_peak - kTwoPi >= f.ua) first_peak -= kTwoPi;
    f.crosses_upright = first_peak <= f.ub;
    if (f.crosses_upright) return f;
    const double va = potential(f.ua);
    const double vb = potential(f.ub);
    f.E_touch = std::max(va, vb);
    const double right_peak = first_peak;
    const double left_peak = first_peak - kTwoPi;
    const double gap_right = right_peak - f.ub;
    const double gap_left = f.ua - left_peak;
    if (gap_right <= gap_left) {
        f.turn = ArcShape::overshoot;
        f.turn_peak = right_peak;
        f.turn_offset = gap_right;
    } else {
        f.turn = ArcShape::backswing;
        f.turn_peak = left_peak;
        f.turn_offset = gap_left;
    }
    return f;
}

double direct_time(const Frame &f, double E) { return path_integral(Density::time, E, f.ua, f.ub); }

double turning_time(const Frame &f, double E) {
    return direct_time(f, E) + 2 * turn_time(E, f.turn_offset);
}

void check_admissible(double alpha, double beta, Branch b) {
    if (!std::isfinite(alpha) || !std::isfinite(beta))
        throw DomainError("boundary angles must be finite");
    if (!admissible(alpha, beta, b))
        throw DomainError("boundary data (" + std::to_string(alpha) + ", " + std::to_string(beta) +
                          ") outside class " + std::string(to_string(b)));
}

// Solve g(z) = 0 for an increasing g, expanding an initial bracket around z0.
// With clamp_low a root below z_min is reported as z_min.
template <class G>
double increasing_root(G g, double z0, double step, double z_min, double z_max, const char *what,
                       bool clamp_low = false) {
    double lo = z0, hi = z0;
    double glo = g(lo), ghi = glo;
    if (glo == 0) return z0;
    if (glo > 0) {
        while (glo > 0) {
            hi = lo;
            ghi = glo;
            lo = std::max(z_min, lo - step);
            step *= 2;
            glo = g(lo);
            if (lo == z_min && glo > 0) {
                if (clamp_low) return z_min;
                throw ConvergenceError(what, lo, hi);
            }
        }
    } else {
        while (ghi < 0) {
            lo = hi;
            glo = ghi;
            hi = std::min(z_max, hi + step);
            step *= 2;
            ghi = g(hi);
            if (hi == z_max && ghi < 0) throw ConvergenceError(what, lo, hi);
        }
    }
    if (glo == 0) return lo;
    if (ghi == 0) return hi;
    boost::uintmax_t iters = 200;
    auto r = boost::math::tools::toms748_solve(g, lo, hi, glo, ghi,
                                               boost::math::tools::eps_tolerance<double>(50), iters);
    if (iters >= 200) throw ConvergenceError(what, r.first, r.second);
    return 0.5 * (r.first + r.second);
}

struct Solved {
    double E;
    ArcShape shape;
};

Solved solve_energy(const Frame &f, double T) {
    if (f.crosses_upright) {
        // T decreases in E > 0; parametrize E = exp(z).
        // An endpoint on the upright makes the time unbounded as E -> 0.
        auto g = [&](double z) { return T - direct_time(f, std::exp(z)); };
        const double z = increasing_root(g, 0.0, 2.0, -700.0, 700.0, "energy of time (direct)", true);
        return {std::exp(z), ArcShape::direct};
    }
    const double T_touch = f.ub > f.ua ? direct_time(f, f.E_touch) : 0.0;
    if (T < T_touch) {
        // E = E_touch + exp(z)
        auto g = [&](double z) { return T - direct_time(f, f.E_touch + std::exp(z)); };
        const double z = increasing_root(g, 0.0, 2.0, -700.0, 700.0, "energy of time (direct)");
        return {f.E_touch + std::exp(z), ArcShape::direct};
    }
    if (T == T_touch) return {f.E_touch, ArcShape::direct};
    // Turning family: E = E_touch exp(-z), z > 0, increasing T.
    auto g = [&](double z) { return turning_time(f, f.E_touch * std::exp(-z)) - T; };
    const double z = increasing_root(g, 1.0, 2.0, 1e-300, 1400.0, "energy of time (turning)");
    return {f.E_touch * std::exp(-z), f.turn};
}

PendulumArc build_arc(double alpha, double beta, Branch b, double T, const Frame &f, Solved s) {
    PendulumArc arc;
    arc.alpha = alpha;
    arc.beta_end = beta;
    arc.T = T;
    arc.E = s.E;
    arc.branch = b;
    arc.shape = s.shape;
    const double sa = std::sqrt(std::max(0.0, 2 * kinetic_room(s.E, alpha)));
    const double sb = std::sqrt(std::max(0.0, 2 * kinetic_room(s.E, beta)));
    const double start_sign = s.shape == ArcShape::backswing ? -f.s : f.s;
    const double end_sign = s.shape == ArcShape::overshoot ? -f.s : f.s;
    arc.v0 = start_sign * sa;
    arc.v1 = end_sign * sb;
    double ulo = f.ua, uhi = f.ub;
    if (s.shape != ArcShape::direct) {
        const double dstar = 2 * std::asin(std::min(1.0, std::sqrt(-s.E / 2)));
        if (s.shape == ArcShape::overshoot)
            uhi = f.turn_peak - dstar;
        else
            ulo = f.turn_peak + dstar;
    }
    arc.x_min = std::min(f.s * ulo, f.s * uhi);
    arc.x_max = std::max(f.s * ulo, f.s * uhi);
    return arc;
}

} // namespace

// Offsets are taken from the same upright grid as the arc frames, so that
// potential(nearest_upright(x)) is exactly zero.
double potential(double x) {
    const double s = std::sin((x - nearest_upright(x)) / 2);
    return -2 * s * s;
}

double kinetic_room(double energy, double x) {
    const double s = std::sin((x - nearest_upright(x)) / 2);
    return energy + 2 * s * s;
}

PendulumState pendulum_flow(PendulumState s, double t, double tol) {
    if (!(tol > 0)) throw DomainError("tolerance must be positive");
    if (t == 0) return s;
    ode::Dop853 integ(
        [](double, std::span<const double> y, std::span<double> dy) {
            dy[0] = y[1];
            dy[1] = -std::sin(y[0]);
        },
        2);
    ode::FlowOptions opts;
    opts.tol = {tol, tol};
    const std::array<double, 2> y0{s.x, s.y};
    const auto r = integ.integrate(0.0, y0, t, opts);
    return {r.y_end[0], r.y_end[1]};
}

std::string_view to_string(Branch b) {
    switch (b) {
    case Branch::bottom_to_top: return "bottom_to_top";
    case Branch::top_to_bottom: return "top_to_bottom";
    case Branch::bottom_to_next_bottom: return "bottom_to_next_bottom";
    case Branch::rotation: return "rotation";
    case Branch::saddle_passage: return "saddle_passage";
    }
    return "?";
}

std::optional<Branch> branch_from_string(std::string_view name) {
    for (Branch b : {Branch::bottom_to_top, Branch::top_to_bottom, Branch::bottom_to_next_bottom,
                     Branch::rotation, Branch::saddle_passage})
        if (to_string(b) == name) return b;
    return std::nullopt;
}

bool admissible(double a, double b, Branch br) {
    switch (br) {
    case Branch::rotation: return std::abs(b - a) >= kTwoPi;
    case Branch::bottom_to_next_bottom:
        return near_bottom(a) && near_bottom(b) &&
               std::abs(std::abs(nearest_bottom(b) - nearest_bottom(a)) - kTwoPi) < 1e-9;
    case Branch::bottom_to_top:
        return near_bottom(a) && near_upright(b) &&
               std::abs(std::abs(nearest_upright(b) - nearest_bottom(a)) - kPi) < 1e-9;
    case Branch::top_to_bottom:
        return near_upright(a) && near_bottom(b) &&
               std::abs(std::abs(nearest_bottom(b) - nearest_upright(a)) - kPi) < 1e-9;
    case Branch::saddle_passage:
        return near_upright(a) && near_upright(b) && nearest_upright(a) == nearest_upright(b);
    }
    return false;
}

std::optional<Branch> classify(double a, double b) {
    for (Branch br : {Branch::rotation, Branch::bottom_to_next_bottom, Branch::bottom_to_top,
                      Branch::top_to_bottom, Branch::saddle_passage})
        if (admissible(a, b, br)) return br;
    return std::nullopt;
}

Interval confinement_interval(double a, double b, Branch br) {
    const double s = b > a ? 1 : (b < a ? -1 : (nearest_upright(a) >= a ? 1 : -1));
    const double ua = s * a, ub = s * b;
    double lo = ua, hi = ub;
    switch (br) {
    case Branch::rotation: break;
    case Branch::bottom_to_top: hi = std::max(ub, nearest_upright(ub)); break;
    case Branch::top_to_bottom: {
        const double p = nearest_upright(ua);
        lo = p - 1;
        hi = nearest_bottom(ub) + 1;
        break;
    }
    case Branch::bottom_to_next_bottom:
        lo = nearest_bottom(ua) - 1;
        hi = nearest_bottom(ub) + 1;
        break;
    case Branch::saddle_passage: {
        const double p = nearest_upright(ua);
        lo = p - 1;
        hi = p + 1;
        break;
    }
    }
    return s > 0 ? Interval{lo, hi} : Interval{-hi, -lo};
}

double energy_of_time(double alpha, double beta, Branch b, double T) {
    return bvp_solve(alpha, beta, b, T).E;
}

PendulumArc bvp_solve(double alpha, double beta, Branch b, double T) {
    check_admissible(alpha, beta, b);
    if (!(T > 0) || !std::isfinite(T)) throw DomainError("duration must be positive and finite");
    if (alpha == beta && alpha == nearest_upright(alpha)) {
        // Rest at the saddle is the only confined solution.
        PendulumArc arc;
        arc.alpha = arc.beta_end = arc.x_min = arc.x_max = alpha;
        arc.T = T;
        arc.branch = b;
        return arc;
    }
    const Frame f = make_frame(alpha, beta);
    return build_arc(alpha, beta, b, T, f, solve_energy(f, T));
}

PendulumArc bvp_solve(double alpha, double beta, double T) {
    const auto b = classify(alpha, beta);
    if (!b) throw DomainError("boundary data outside all admissible classes");
    return bvp_solve(alpha, beta, *b, T);
}

double time_of_energy(double alpha, double beta, Branch b, double E) {
    check_admissible(alpha, beta, b);
    const Frame f = make_frame(alpha, beta);
    const double floor = f.crosses_upright ? 0.0 : f.E_touch;
    if (!(E > floor)) throw DomainError("energy too low for a monotone arc");
    return direct_time(f, E);
}

double stiffness_K(double alpha, double beta, double E) {
    const double lo = std::min(alpha, beta), hi = std::max(alpha, beta);
    if (!(hi > lo)) throw DomainError("empty path");
    const Frame f = make_frame(lo, hi);
    const double floor = f.crosses_upright ? 0.0 : f.E_touch;
    if (!(E > floor)) throw DomainError("singular stiffness integrand: E - V vanishes on the path");
    return 1 / path_integral(Density::stiff, E, lo, hi);
}

double arc_stiffness(const PendulumArc &arc) {
    if (arc.alpha == arc.beta_end && arc.v0 == 0 && arc.E == 0) return 0;
    const Frame f = make_frame(arc.alpha, arc.beta_end);
    if (arc.shape == ArcShape::direct) {
        if (!(f.ub > f.ua)) return std::numeric_limits<double>::infinity();
        return 1 / path_integral(Density::stiff, arc.E, f.ua, f.ub);
    }
    // dT/dE = -(stiff integral of the monotone part) + 2 d(turn time)/dE.
    const double slope = -path_integral(Density::stiff, arc.E, f.ua, f.ub) +
                         2 * turn_time_slope(arc.E, f.turn_offset);
    return -1 / slope;
}

double arc_action(const PendulumArc &arc) {
    const Frame f = make_frame(arc.alpha, arc.beta_end);
    double w = path_integral(Density::action, arc.E, f.ua, f.ub);
    if (arc.shape != ArcShape::direct) w += 2 * turn_action(arc.E, f.turn_offset);
    return w;
}

double rotation_period(double E) {
    if (!(E > 0)) throw DomainError("rotation requires E > 0");
    return one_period(Density::time, E);
}

double rotation_period_bound(double E) {
    if (!(E > 0)) throw DomainError("rotation requires E > 0");
    return std::sqrt(2.0) * kPi * (std::log1p(std::sqrt(1 + E)) - std::log(E));
}

Sensitivities sensitivity_identities(const PendulumArc &arc, double K_total) {
    Sensitivities s;
    s.K = arc_stiffness(arc);
    s.dE_dT = -s.K;
    if (s.K == 0) return s;
    s.dXdot_dT = s.dE_dT / arc.v0;
    s.dE_dx = -s.K / arc.v0;
    s.dT_dx = s.dXdot_dT / K_total;
    return s;
}

std::vector<PendulumState> sample_arc(const PendulumArc &arc, std::size_t count, double tol) {
    ode::Dop853 integ(
        [](double, std::span<const double> y, std::span<double> dy) {
            dy[0] = y[1];
            dy[1] = -std::sin(y[0]);
        },
        2);
    ode::FlowOptions opts;
    opts.tol = {tol, tol};
    opts.sample_dt = count > 1 ? arc.T / static_cast<double>(count - 1) : 0;
    const std::array<double, 2> y0{arc.alpha, arc.v0};
    const auto r = integ.integrate(0.0, y0, arc.T, opts);
    std::vector<PendulumState> out;
    out.reserve(r.ys.size());
    for (const auto &y : r.ys) out.push_back({y[0], y[1]});
    return out;
}

} // namespace pendula
