// Periodic lattice of p pendula with bump coupling on consecutive triples:
//
//   H = sum_i y_i^2/2 + V(x_i) + eps * beta(x_{i-1}, x_i, x_{i+1}),
//   beta(x) = eps^r * eta(|x - 2 pi n*| / eps),
//
// indices mod p, n* the nearest integer triple to x / 2 pi. The support of
// beta (balls of radius eps around 2 pi Z^3) is called a lens.

#pragma once

#include "pendula/ode.hpp"

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace pendula {

/// eta(u) = exp(a - a / (1 - u^2)) for |u| < 1, else 0; a = sharpness.
struct EtaProfile {
    double sharpness = 1.0;
};

double bump_eta(double u, const EtaProfile &eta = {});
double bump_eta_prime(double u, const EtaProfile &eta = {});

/// Cylinder sum_{k} (x_{sites[k]} - center_{sites[k]})^2 < radius^2 in which
/// the coupling is switched off.
struct Cutout {
    std::vector<double> center;
    std::array<std::size_t, 3> sites{0, 1, 2};
    double radius = 0;
};

struct CouplingParams {
    double eps = 0.05;
    int r = 3;
    EtaProfile eta;
    /// Per-triple switch (triple i is (i-1, i, i+1)); empty means all on.
    std::vector<bool> mask;
    std::vector<Cutout> cutouts;

    bool active(std::size_t triple) const { return mask.empty() || mask[triple]; }
    /// True inside a cutout, where beta is multiplied by zero.
    bool cut(std::span<const double> x) const;
};

/// Throws DomainError unless 0 < eps < pi, r >= 1 and sharpness > 0.
void validate(const CouplingParams &cp);

double coupling_beta(const std::array<double, 3> &x, const CouplingParams &cp);
std::array<double, 3> coupling_beta_grad(const std::array<double, 3> &x, const CouplingParams &cp);

/// Distance from x to the nearest point of 2 pi Z^3.
double lens_distance(const std::array<double, 3> &x);

struct LatticeState {
    std::vector<double> x;
    std::vector<double> y;

    std::size_t size() const { return x.size(); }
};

double site_energy(const LatticeState &s, std::size_t j);
std::vector<double> site_energies(const LatticeState &s);

/// eps * sum_i beta_i over the active triples.
double coupling_energy(std::span<const double> x, const CouplingParams &cp);
double hamiltonian(const LatticeState &s, const CouplingParams &cp);

/// Writes -dU/dx (pendulum plus coupling) into `force`.
void lattice_force(std::span<const double> x, const CouplingParams &cp, std::span<double> force);

LatticeState lattice_rhs(const LatticeState &s, const CouplingParams &cp);

/// Triples whose argument currently lies inside a lens.
std::vector<std::size_t> lenses_hit(std::span<const double> x, const CouplingParams &cp);

enum class Integrator { dop853, yoshida6 };

struct FlowConfig {
    Integrator method = Integrator::dop853;
    double tol = 1e-10;     ///< DOP853 abs/rel tolerance
    double step = 1e-3;     ///< yoshida6 step
    double sample_dt = 0;   ///< uniform output grid (0: end state only)
    std::vector<ode::Event> events; ///< DOP853 only; state layout is (x, y)
};

struct Trajectory {
    std::vector<double> t;
    std::vector<LatticeState> states;
    std::vector<ode::EventHit> hits;
    bool stopped_by_event = false;

    const LatticeState &back() const { return states.back(); }
};

/// Flows for time t_span (t_span may be negative for DOP853). The first
/// sample is the initial state and the last is the end state.
Trajectory lattice_flow(const LatticeState &s, const CouplingParams &cp, double t_span,
                        const FlowConfig &cfg = {});

std::vector<double> pack(const LatticeState &s);
LatticeState unpack(std::span<const double> xy);

} // namespace pendula
