// Single pendulum x'' + sin x = 0: potential, flow, and the confined
// two-point boundary-value arcs with their closed-form sensitivities.
//
// Energy convention: E = y^2/2 + V(x) with V(x) = -cos x - 1, so E = 0 is
// the separatrix and E = -2 is rest at the bottom. Angles are lifts to the
// real line; a boundary pair (alpha, beta) encodes the winding.

#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pendula {

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Constant of the revolution-count bound K <= c E / n.
inline const double kStiffnessBoundConstant = 2.0 * kPi / std::sqrt(1.0 + kPi * kPi / 2.0);

class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string &what, double lo = 0, double hi = 0)
        : std::runtime_error(what), bracket_lo(lo), bracket_hi(hi) {}
    double bracket_lo;
    double bracket_hi;
};

double potential(double x);

/// E - V(x), evaluated without cancellation near the upright position.
double kinetic_room(double energy, double x);

struct PendulumState {
    double x = 0;
    double y = 0;
};

/// Adaptive DOP853 flow for time t (negative t flows backwards).
/// Throws ode::StepUnderflow when the tolerance cannot be met.
PendulumState pendulum_flow(PendulumState s, double t, double tol);

/// Boundary classes of confined arcs. The first four are the classes of the
/// pendulum lemma (with their mirror images for leftward motion);
/// saddle_passage covers both ends near the same upright position.
enum class Branch {
    bottom_to_top,
    top_to_bottom,
    bottom_to_next_bottom,
    rotation,
    saddle_passage,
};

std::string_view to_string(Branch b);
std::optional<Branch> branch_from_string(std::string_view name);

/// Whether (alpha, beta_end) belongs to the class `b`.
bool admissible(double alpha, double beta_end, Branch b);

/// The class of (alpha, beta_end), preferring rotation, or nullopt.
std::optional<Branch> classify(double alpha, double beta_end);

/// Closed interval the arc must stay in for class `b`.
struct Interval {
    double lo;
    double hi;
};
Interval confinement_interval(double alpha, double beta_end, Branch b);

/// How x(t) moves along the arc: monotonically, turning once beyond the
/// end point, or first swinging back behind the start point.
enum class ArcShape { direct, overshoot, backswing };

struct PendulumArc {
    double alpha = 0;
    double beta_end = 0;
    double T = 0;
    double E = 0;
    double v0 = 0;
    double v1 = 0;
    Branch branch = Branch::rotation;
    ArcShape shape = ArcShape::direct;
    double x_min = 0;
    double x_max = 0;
};

double energy_of_time(double alpha, double beta_end, Branch branch, double T);

/// Unique confined arc. Throws DomainError for inadmissible data and
/// ConvergenceError (carrying the scanned bracket) when the root search fails.
PendulumArc bvp_solve(double alpha, double beta_end, Branch branch, double T);

/// Same as bvp_solve with the class inferred by `classify`.
PendulumArc bvp_solve(double alpha, double beta_end, double T);

/// Duration of the monotone arc of energy E from alpha to beta_end.
/// Rejects E for which x(t) cannot stay monotone.
double time_of_energy(double alpha, double beta_end, Branch branch, double E);

/// (int |dx| / (2(E - V))^{3/2})^{-1} over the monotone path alpha -> beta_end.
double stiffness_K(double alpha, double beta_end, double E);

/// -1 / (dT/dE) along the arc's family; equals stiffness_K for direct arcs
/// and stays finite for turning arcs, where the 3/2-power integral diverges.
double arc_stiffness(const PendulumArc &arc);

/// Abbreviated action int xdot^2 dt along the arc.
double arc_action(const PendulumArc &arc);

/// Time of one full revolution at energy E > 0.
double rotation_period(double E);

/// sqrt(2) pi (ln(1 + sqrt(1 + E)) - ln E), an upper bound for rotation_period.
double rotation_period_bound(double E);

struct Sensitivities {
    double K = 0;        ///< arc stiffness K_i
    double dE_dT = 0;    ///< dE/dT at fixed ends
    double dXdot_dT = 0; ///< dv0/dT at fixed ends
    double dE_dx = 0;    ///< dE/dalpha at fixed T
    double dT_dx = 0;    ///< dT/dalpha along the total-energy level set
};

/// Closed-form sensitivities; `K_total` is the sum of the stiffnesses of all
/// sites sharing the duration (pass arc_stiffness(arc) for a lone pendulum).
Sensitivities sensitivity_identities(const PendulumArc &arc, double K_total);

/// Dense samples of x(t) along the arc by forward integration (diagnostics;
/// long near-separatrix arcs amplify round-off).
std::vector<PendulumState> sample_arc(const PendulumArc &arc, std::size_t count, double tol = 1e-12);

} // namespace pendula
