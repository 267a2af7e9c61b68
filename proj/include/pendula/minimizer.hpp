// Broken geodesics through a chain of sections and their minimisation.
//
// Break points p_1..p_N lie on sections 1..N of an itinerary; p_0 and p_{N+1}
// are fixed on the first and last section. The length is the sum of the
// coupled segment lengths L(p_j, p_{j+1}). Inside a section only the free
// coordinates move (active pair and sleepers; the facilitator is pinned).

#pragma once

#include "pendula/itinerary.hpp"
#include "pendula/jacobi.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace pendula {

enum class LensMode { with_lens, truncated };

/// Coupling with beta switched off in the cylinder of radius eps through
/// the section centre in the active and facilitator coordinates.
CouplingParams truncated_coupling(const CouplingParams &cp, const Section &sec);

/// Coupled segment between points of two sections.
SegmentSolution connect(const Section &a, const Config &pa, const Section &b, const Config &pb,
                        const CouplingParams &cp, const ConnectOptions &opts = {});

struct LocalValue {
    double value = 0;
    std::vector<double> gradient; ///< over the section's free coordinates
    SegmentSolution in;           ///< p_prev -> p
    SegmentSolution out;          ///< p -> p_next
};

/// S(p) = L(p_prev, p) + L(p, p_next) and its gradient v_end(in) - v_start(out)
/// restricted to the free coordinates of `sec`. Truncated mode removes the
/// lens at the centre of `sec`.
LocalValue local_functional(const Section &prev, const Config &p_prev, const Section &sec, const Config &p,
                            const Section &next, const Config &p_next, const CouplingParams &cp, LensMode mode,
                            const ConnectOptions &opts = {});

struct MinimizeOptions {
    double tol_g = 1e-8;  ///< stationarity (velocity mismatch in free coordinates)
    double tol_x = 1e-10; ///< point displacement per sweep
    int max_sweeps = 40;
    int max_block_iterations = 6;
    double fd_step = 5e-4;           ///< Hessian finite-difference step in local coordinates
    double fraction_to_boundary = 0.995;
    LensMode mode = LensMode::with_lens;
    /// Initial local coordinates per break point (empty: section centres).
    std::vector<std::vector<double>> initial;
    ConnectOptions connect;
};

struct BrokenGeodesic {
    std::vector<Section> sections;
    std::vector<Config> points;               ///< p_0 .. p_{N+1}
    std::vector<std::vector<double>> local;   ///< free coordinates of p_1 .. p_N
    std::vector<SegmentSolution> segments;    ///< p_j -> p_{j+1}
    double total_length = 0;
    double grad_norm = 0;                     ///< max over break points of |gradient|
    std::vector<double> interior_margins;     ///< distance to the section boundary
    std::vector<double> length_history;       ///< total length after each sweep (first: initial)
    std::vector<double> grad_history;
    int sweeps = 0;
    bool converged = false;
    bool boundary_contact = false;            ///< a point ended within 1e-3 radius of the boundary
    std::vector<std::string> warnings;
};

/// Cyclic block descent: each break point takes trust-region steps on its
/// local functional (model Hessian from finite differences of the gradient,
/// refreshed by SR1 updates), kept inside the section by a fraction-to-boundary
/// rule. Stops when every gradient is below tol_g and no point moved more
/// than tol_x in a sweep. Reaching max_sweeps returns the best iterate with
/// converged = false.
BrokenGeodesic minimize(const Itinerary &itin, const Config &p_first, const Config &p_last,
                        const CouplingParams &cp, const MinimizeOptions &opts = {});

/// Endpoints at the first and last section centres.
BrokenGeodesic minimize(const Itinerary &itin, const CouplingParams &cp, const MinimizeOptions &opts = {});

struct CertifyOptions {
    int angles = 8;        ///< grid points on circles of the active-pair disk
    int sleeper_levels = 3; ///< sleeper offsets sampled on the vertical boundary
    ConnectOptions connect;
};

/// Per break point: (a) boundary-grid minimum of S on the vertical and
/// horizontal boundary against S at the point; (b) spread of S0 over the
/// active-pair disk; (c) S0 at sleeper offsets +-rho_h minus S0 at offset 0;
/// (d) S(centre) - S0(centre) against eps^{r+1} * inf eta over |u| <= 1/2.
nlohmann::json certify_interior(const BrokenGeodesic &bg, const CouplingParams &cp,
                                const CertifyOptions &opts = {});

} // namespace pendula
