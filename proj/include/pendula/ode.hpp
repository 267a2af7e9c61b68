// Explicit integrators shared by the single pendulum and the lattice.
//
// Dop853 is the adaptive eighth-order Dormand-Prince pair (Hairer & Wanner,
// "Solving ODEs I", DOP853.F) with step-local event location. Event roots
// and sample points inside an accepted step are obtained by re-taking a
// single DOP853 step of the required length from the step start, so they
// carry the full order of the method.
//
// yoshida6_flow is a fixed-step sixth-order symplectic composition of the
// Stormer-Verlet map for separable Hamiltonians |y|^2/2 + U(x).

#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pendula::ode {

using State = std::vector<double>;

/// dy/dt = f(t, y); the callee writes into `dydt` (same size as `y`).
using Rhs = std::function<void(double t, std::span<const double> y, std::span<double> dydt)>;

/// Thrown when the controller cannot meet the tolerance (step below
/// round-off of t, or the step budget is exhausted).
class StepUnderflow : public std::runtime_error {
public:
    StepUnderflow(const std::string &what, double t) : std::runtime_error(what), time(t) {}
    double time;
};

struct Tolerances {
    double abs = 1e-10;
    double rel = 1e-10;
};

/// Scalar switching function g(t, y); a hit is a sign change of g inside
/// an accepted step.
struct Event {
    std::function<double(double, std::span<const double>)> g;
    int direction = 0; // +1 rising only, -1 falling only, 0 both
    bool terminal = false;
};

struct EventHit {
    std::size_t event = 0;
    double t = 0;
    State y;
};

struct FlowOptions {
    Tolerances tol;
    double max_step = std::numeric_limits<double>::infinity();
    std::size_t max_steps = 20'000'000;
    /// Emit samples on the uniform grid t0 + k*sample_dt (0 disables).
    double sample_dt = 0;
    /// Emit every accepted step.
    bool record_steps = false;
    std::vector<Event> events;
};

struct FlowResult {
    double t_end = 0;
    State y_end;
    std::vector<double> ts;
    std::vector<State> ys;
    std::vector<EventHit> hits;
    std::size_t steps = 0;
    std::size_t rejected = 0;
    bool stopped_by_event = false;
};

class Dop853 {
public:
    Dop853(Rhs f, std::size_t dim);

    /// Integrate from (t0, y0) to t1 (t1 < t0 integrates backwards).
    FlowResult integrate(double t0, std::span<const double> y0, double t1,
                         const FlowOptions &opts) const;

    /// One step of length h without error control.
    State step(double t, std::span<const double> y, double h) const;

private:
    struct Work;
    void stage_sweep(Work &w, double t, std::span<const double> y, double h,
                     std::span<const double> k1) const;
    double error_norm(const Work &w, std::span<const double> y, double h,
                      const Tolerances &tol) const;
    double initial_step(double t, std::span<const double> y, std::span<const double> f0,
                        double direction, double hmax, const Tolerances &tol) const;

    Rhs f_;
    std::size_t n_;
};

/// Force callback for separable systems: writes -grad U(x) into `force`.
using Force = std::function<void(std::span<const double> x, std::span<double> force)>;

/// Sixth-order Yoshida composition. `xy` holds positions then velocities
/// (size 2n); advances by `steps` steps of size h and returns the end state.
/// `observer` (optional) is called after every step.
State yoshida6_flow(const Force &force, std::span<const double> xy, double h, std::size_t steps,
                    const std::function<void(double, std::span<const double>)> &observer = {});

} // namespace pendula::ode
