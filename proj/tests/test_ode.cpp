#include "doctest.h"
#include "pendula/ode.hpp"

#include <array>
#include <cmath>

using namespace pendula::ode;

namespace {
void oscillator(double, std::span<const double> y, std::span<double> dy) {
    dy[0] = y[1];
    dy[1] = -y[0];
}
} // namespace

TEST_CASE("dop853 reproduces the harmonic oscillator") {
    Dop853 integ(oscillator, 2);
    FlowOptions opts;
    opts.tol = {1e-12, 1e-12};
    const std::array<double, 2> y0{1.0, 0.0};
    const auto r = integ.integrate(0.0, y0, 20.0, opts);
    CHECK(r.y_end[0] == doctest::Approx(std::cos(20.0)).epsilon(1e-10));
    CHECK(r.y_end[1] == doctest::Approx(-std::sin(20.0)).epsilon(1e-10));
}

TEST_CASE("dop853 integrates backwards") {
    Dop853 integ(oscillator, 2);
    const std::array<double, 2> y0{1.0, 0.0};
    const auto r = integ.integrate(0.0, y0, -3.0, {});
    CHECK(r.y_end[0] == doctest::Approx(std::cos(3.0)).epsilon(1e-8));
    CHECK(r.y_end[1] == doctest::Approx(std::sin(3.0)).epsilon(1e-8));
}

TEST_CASE("uniform samples land on the grid") {
    Dop853 integ(oscillator, 2);
    FlowOptions opts;
    opts.tol = {1e-12, 1e-12};
    opts.sample_dt = 0.5;
    const std::array<double, 2> y0{1.0, 0.0};
    const auto r = integ.integrate(0.0, y0, 5.0, opts);
    REQUIRE(r.ts.size() == 11);
    for (std::size_t k = 0; k < r.ts.size(); ++k) {
        CHECK(r.ts[k] == doctest::Approx(0.5 * k));
        CHECK(r.ys[k][0] == doctest::Approx(std::cos(r.ts[k])).epsilon(1e-10));
    }
}

TEST_CASE("terminal event stops at the first zero crossing") {
    Dop853 integ(oscillator, 2);
    FlowOptions opts;
    opts.tol = {1e-12, 1e-12};
    opts.events.push_back({[](double, std::span<const double> y) { return y[0]; }, -1, true});
    const std::array<double, 2> y0{1.0, 0.0};
    const auto r = integ.integrate(0.0, y0, 10.0, opts);
    REQUIRE(r.stopped_by_event);
    CHECK(r.t_end == doctest::Approx(M_PI / 2).epsilon(1e-11));
}

TEST_CASE("yoshida6 is sixth order") {
    auto force = [](std::span<const double> x, std::span<double> f) { f[0] = -std::sin(x[0]); };
    const std::array<double, 2> xy{0.3, 1.1};
    Dop853 integ([](double, std::span<const double> y, std::span<double> dy) {
        dy[0] = y[1];
        dy[1] = -std::sin(y[0]);
    }, 2);
    FlowOptions opts;
    opts.tol = {1e-14, 1e-14};
    const auto ref = integ.integrate(0.0, xy, 4.0, opts);
    auto err = [&](std::size_t n) {
        const auto y = yoshida6_flow(force, xy, 4.0 / n, n);
        return std::hypot(y[0] - ref.y_end[0], y[1] - ref.y_end[1]);
    };
    const double e1 = err(20), e2 = err(40);
    CHECK(std::log2(e1 / e2) > 5.5);
}
