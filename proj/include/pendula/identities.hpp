// Finite-difference check of the single-pendulum sensitivity identities over
// a grid of energies and revolution counts.

#pragma once

#include <string>
#include <vector>

namespace pendula {

struct IdentityCheck {
    std::string name;
    double worst = 0;     ///< largest relative error (or bound ratio for the stiffness bound)
    double tolerance = 0;
    bool pass = false;
    std::size_t cases = 0;
};

struct IdentityGrid {
    std::vector<double> energies{0.05, 0.1, 0.3, 1.0, 2.0, 5.0};
    int max_revolutions = 10;
    double alpha = 0.1;     ///< start angle
    double overhang = 0.2;  ///< beta = alpha_0 + 2 pi n + overhang with alpha_0 = 0
    double tolerance = 1e-4;
};

/// dE/dT = -1/K, dv0/dT = -K / v0, dT/dalpha = K^{-1} dv0/dT (lone pendulum)
/// against central differences, and K <= c E / n.
std::vector<IdentityCheck> identity_suite(const IdentityGrid &grid = {});

} // namespace pendula
