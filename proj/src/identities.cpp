#include "pendula/identities.hpp"

#include "pendula/pendulum.hpp"

#include <algorithm>
#include <cmath>

namespace pendula {

std::vector<IdentityCheck> identity_suite(const IdentityGrid &grid) {
    IdentityCheck ebyt{"dE/dT = -1/K", 0, grid.tolerance};
    IdentityCheck xdot{"dv0/dT = -K/v0", 0, grid.tolerance};
    IdentityCheck rel{"dT/dalpha = K^-1 dv0/dT", 0, grid.tolerance};
    IdentityCheck bound{"K <= c E / n", 0, 1.0};
    auto rel_err = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); };
    const Branch br = Branch::rotation;
    for (int n = 1; n <= grid.max_revolutions; ++n)
        for (double E : grid.energies) {
            const double a = grid.alpha, b = kTwoPi * n + grid.overhang;
            const double T = time_of_energy(a, b, br, E);
            const auto arc = bvp_solve(a, b, br, T);
            const double K = arc_stiffness(arc);
            const auto s = sensitivity_identities(arc, K);

            const double h = 1e-4 * T;
            const auto p = bvp_solve(a, b, br, T + h), m = bvp_solve(a, b, br, T - h);
            ebyt.worst = std::max(ebyt.worst, rel_err(s.dE_dT, (p.E - m.E) / (2 * h)));
            xdot.worst = std::max(xdot.worst, rel_err(s.dXdot_dT, (p.v0 - m.v0) / (2 * h)));

            const double hx = 1e-5;
            const double dT = (time_of_energy(a + hx, b, br, E) - time_of_energy(a - hx, b, br, E)) / (2 * hx);
            rel.worst = std::max(rel.worst, rel_err(s.dXdot_dT / K, dT));

            // Revolutions counted from the bottom; stiffness over the full path.
            bound.worst = std::max(bound.worst, K / (kStiffnessBoundConstant * E / n));
            ++ebyt.cases;
            ++xdot.cases;
            ++rel.cases;
            ++bound.cases;
        }
    std::vector<IdentityCheck> out{ebyt, xdot, rel, bound};
    for (auto &c : out) c.pass = c.name == bound.name ? c.worst <= c.tolerance : c.worst < c.tolerance;
    return out;
}

} // namespace pendula
