// Energy-one connecting orbits between configuration points and their
// Maupertuis lengths.
//
// The length of a segment is the abbreviated action int |xdot|^2 dt, which is
// the Jacobi-metric length int sqrt(2 (1 - U)) ds with
// U(x) = sum V(x_i) + eps * sum beta(x_{i-1}, x_i, x_{i+1}).
// Its endpoint gradients are -v_start (start) and +v_end (end).

#pragma once

#include "pendula/lattice.hpp"
#include "pendula/pendulum.hpp"

#include <string>
#include <vector>

namespace pendula {

using Config = std::vector<double>;

struct SegmentSolution {
    Config q;
    Config q_end;
    double T = 0;
    std::vector<double> energies;
    double length = 0;
    std::vector<double> v_start;
    std::vector<double> v_end;
    bool coupled = false;
    /// Per-site arcs of the uncoupled model (the middle piece when coupled).
    std::vector<PendulumArc> arcs;
    /// Coupled refinement diagnostics.
    double mismatch = 0;
    std::vector<double> residual_history;
    bool lens_contact = false;
    std::vector<std::string> warnings;
};

/// Unique energy-one solution of the uncoupled lattice (beta = 0) from q to
/// q_end; T solves sum_i E_i(T) = 1. Throws DomainError for inadmissible
/// coordinate pairs and ConvergenceError when the root is not bracketed.
SegmentSolution uncoupled_connect(const Config &q, const Config &q_end);

std::vector<double> energy_vector(const Config &q, const Config &q_end);

double segment_length(const SegmentSolution &seg);

enum class SegmentEnd { start, end };

/// d length / d(endpoint): -v_start for the start, +v_end for the end.
std::vector<double> length_gradient(const SegmentSolution &seg, SegmentEnd which);

/// K_i for every site and their sum, from the segment's arcs.
std::vector<double> site_stiffness(const SegmentSolution &seg);

/// dT/dq_i along the energy-one constraint, from the identities
/// (K^{-1} d_T Xdot_i with K = sum_s K_s).
std::vector<double> duration_gradient(const SegmentSolution &seg);

struct ConnectOptions {
    /// Distance of the auxiliary sections from the section centres;
    /// negative selects eps^{1/3}.
    double aux_distance = -1;
    double tol = 1e-10;         ///< velocity-mismatch target
    int max_iterations = 30;
    double step_per_unit = 1500; ///< fixed steps per unit time on the short pieces
};

/// Connecting orbit of the full coupled system with total energy 1 from p0
/// to p1. `c0`, `c1` are the centres of the sections containing p0 and p1;
/// the auxiliary sections are the hyperplanes orthogonal to the uncoupled
/// centre-to-centre solution at distance aux_distance from the centres.
/// The short pieces p0 -> q0 and q1 -> p1 are solved under full dynamics,
/// the long piece q0 -> q1 with the uncoupled solver, and the velocities are
/// matched by Gauss-Newton on the auxiliary-section coordinates.
SegmentSolution coupled_connect(const Config &p0, const Config &p1, const Config &c0, const Config &c1,
                                const CouplingParams &cp, const ConnectOptions &opts = {});

/// Same with the endpoints standing in for the section centres.
SegmentSolution coupled_connect(const Config &p0, const Config &p1, const CouplingParams &cp,
                                const ConnectOptions &opts = {});

/// Total potential sum V(x_i) + coupling.
double total_potential(const Config &x, const CouplingParams *cp = nullptr);

} // namespace pendula
