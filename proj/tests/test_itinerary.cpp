#include "doctest.h"
#include "pendula/itinerary.hpp"
#include "pendula/pendulum.hpp"

#include <cmath>
#include <vector>

using namespace pendula;

namespace {

double len(const std::vector<double> &n) {
    double s = 0;
    for (double x : n) s += x * x;
    return std::sqrt(s);
}

double dir_distance(const std::vector<double> &a, const std::vector<double> &b) {
    const double la = len(a), lb = len(b);
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] / la - b[i] / lb) * (a[i] / la - b[i] / lb);
    return std::sqrt(s);
}

std::vector<std::size_t> failures(const nlohmann::json &report, int rule) {
    return report["rules"][rule - 1]["failures"].get<std::vector<std::size_t>>();
}

} // namespace

TEST_CASE("sections of right and left edges") {
    const auto s12 = section_for(1, 2, 4);
    CHECK(s12.active_pair == std::array<std::size_t, 2>{0, 1});
    CHECK(s12.facilitator == 2);
    CHECK(s12.sleepers == std::vector<std::size_t>{3});
    CHECK(s12.center == std::vector<double>{0, 0, 0, kPi});
    CHECK(s12.rho_v == doctest::Approx(std::sqrt(0.05)));
    CHECK(s12.rho_h == doctest::Approx(std::sqrt(0.05)));

    const auto s23 = section_for(2, 3, 4);
    CHECK(s23.active_pair == std::array<std::size_t, 2>{1, 2});
    CHECK(s23.facilitator == 3);
    CHECK(s23.sleepers == std::vector<std::size_t>{0});

    // Mirror i -> 1 - i (mod 4) of the edge 1 -> 2.
    const auto s21 = section_for(2, 1, 4);
    auto mirror = [](std::size_t i) { return (5 - i) % 4; };
    CHECK(s21.facilitator == mirror(s12.facilitator));
    CHECK(s21.sleepers == std::vector<std::size_t>{mirror(s12.sleepers[0])});
    CHECK(s21.role(mirror(0)) == Role::active);
    CHECK(s21.role(mirror(1)) == Role::active);

    CHECK_THROWS_AS(section_for(1, 3, 4), DomainError);
    CHECK_THROWS_AS(section_for(1, 2, std::vector<double>{0, 0, 0, 0}), DomainError);
}

TEST_CASE("section local coordinates") {
    const auto s = section_for(2, 3, std::vector<double>{3 * kPi, 2 * kTwoPi, kTwoPi, 0});
    const std::vector<double> l{0.1, -0.05, 0.02};
    const auto x = s.point(l);
    CHECK(x[s.facilitator] == s.center[s.facilitator]);
    const auto back = s.local(x);
    for (std::size_t j = 0; j < 3; ++j) CHECK(back[j] == doctest::Approx(l[j]).epsilon(1e-13));
    CHECK(s.margin(l) == doctest::Approx(std::sqrt(0.05) - std::hypot(0.1, 0.05)));
    CHECK(s.margin({0.3, 0, 0}) < 0);
    CHECK(s.margin({0, 0, 0.3}) < 0);
}

TEST_CASE("translation forms") {
    const auto a = roles_for_edge(1, 2, 4), b = roles_for_edge(2, 3, 4);
    const auto f = in_string_form(a, 4);
    CHECK(f.fixed == std::vector<double>{0, 0, 1, 0});
    CHECK(f.free_sites == std::vector<std::size_t>{0, 1});
    const auto j = junction_form(a, b, 4);
    CHECK(j.fixed == std::vector<double>{0.5, 0, 1, 0.5});
    CHECK(j.free_sites == std::vector<std::size_t>{1});
}

TEST_CASE("exactly representable direction") {
    const std::vector<double> d{6, 8, 1, 0};
    const auto n = pick_translation(d, FormKind::in_string, 10, 0.1);
    CHECK(n == d);
}

TEST_CASE("picked translation is the exhaustive argmin") {
    const double L = 7;
    for (const auto &dir : std::vector<std::vector<double>>{{1, 0, 0, 0}, {0.3, -0.9, 0.2, 0.1}, {-1, -1, 0.4, 0}}) {
        const auto n = pick_translation(dir, FormKind::in_string, L, 2.0);
        double best = 1e300;
        std::vector<double> arg;
        for (int m = -28; m <= 28; ++m)
            for (int k = -28; k <= 28; ++k) {
                const std::vector<double> c{double(m), double(k), 1, 0};
                if (m == 0 || k == 0 || len(c) < L) continue;
                const double d = dir_distance(c, dir);
                if (d < best - 1e-14) {
                    best = d;
                    arg = c;
                }
            }
        CHECK(n == arg);
        CHECK(len(n) >= L);
        CHECK(n[0] != 0);
        CHECK(n[1] != 0);
    }
}

TEST_CASE("junction translation shape") {
    const auto n = pick_translation({0.05, 0.99, 0.1, 0.05}, FormKind::junction, 10, 0.5);
    CHECK(n[0] == 0.5);
    CHECK(n[2] == 1);
    CHECK(n[3] == 0.5);
    CHECK(n[1] == std::round(n[1]));
    CHECK(len(n) >= 10);
}

TEST_CASE("infeasible turn reports the best distance") {
    try {
        pick_translation({1, 0, 0, 0}, FormKind::junction, 10, 0.1);
        FAIL("expected infeasibility");
    } catch (const InfeasibleError &e) {
        CHECK(e.best_angle > 0.1);
    }
}

TEST_CASE("monotone path of two strings") {
    ItineraryParams ip;
    ip.N_per_string = 3;
    const auto it = compile_itinerary({1, 2, 3}, 4, ip);
    REQUIRE(it.sections.size() == 8);
    REQUIRE(it.translations.size() == 7);
    CHECK(it.string_boundaries == std::vector<std::size_t>{3});
    const auto &jn = it.translations[3].n;
    CHECK(jn[0] == 0.5);
    CHECK(jn[2] == 1);
    CHECK(jn[3] == 0.5);
    for (std::size_t k = 4; k < 7; ++k) {
        CHECK(it.translations[k].n[0] == 0);
        CHECK(it.translations[k].n[3] == 1);
    }
    const auto report = validate_itinerary(it);
    CHECK(report["pass"].get<bool>());

    // Hand-off: the giver of the first string falls asleep and the sleeper wakes.
    CHECK(it.sections[3].role(0) == Role::active);
    CHECK(it.sections[4].role(0) == Role::sleeper);
    CHECK(it.sections[3].role(3) == Role::sleeper);
    CHECK(it.sections[4].role(3) != Role::sleeper);
}

TEST_CASE("strings are steered from giver to receiver") {
    ItineraryParams ip;
    ip.N_per_string = 5;
    ip.L_min = 50;
    const auto it = compile_itinerary({1, 2}, 4, ip);
    const auto &first = it.translations.front().n, &last = it.translations.back().n;
    CHECK(std::abs(first[0]) > std::abs(first[1]));
    CHECK(std::abs(last[1]) > std::abs(last[0]));
    CHECK(validate_itinerary(it)["pass"].get<bool>());
}

TEST_CASE("degenerate paths") {
    ItineraryParams ip;
    const auto one = compile_itinerary({1, 2}, 4, ip);
    CHECK(one.sections.size() == ip.N_per_string + 1);
    CHECK(one.string_boundaries.empty());
    const auto none = compile_itinerary({}, 4, ip);
    CHECK(none.sections.empty());
    CHECK(none.translations.empty());
    CHECK(validate_itinerary(none)["pass"].get<bool>());
    CHECK_THROWS_AS(compile_itinerary({1, 3}, 4, ip), DomainError);
}

TEST_CASE("general paths and site counts validate") {
    ItineraryParams ip;
    ip.N_per_string = 4;
    for (std::size_t p : {3u, 4u, 5u, 7u})
        for (const auto &path : std::vector<std::vector<long>>{{0, 1, 2, 3}, {2, 1, 0}, {1, 2, 1, 2}, {0, -1, 0}}) {
            const auto it = compile_itinerary(path, p, ip);
            CHECK(validate_itinerary(it)["pass"].get<bool>());
            CHECK(it.sections.size() == (path.size() - 1) * (ip.N_per_string + 1));
        }
}

TEST_CASE("compilation is deterministic") {
    ItineraryParams ip;
    const auto a = compile_itinerary({1, 2, 3, 4}, 4, ip), b = compile_itinerary({1, 2, 3, 4}, 4, ip);
    REQUIRE(a.translations.size() == b.translations.size());
    for (std::size_t k = 0; k < a.translations.size(); ++k) CHECK(a.translations[k].n == b.translations[k].n);
    CHECK(validate_itinerary(a).dump() == validate_itinerary(b).dump());
}

TEST_CASE("validation flags broken rules") {
    ItineraryParams ip;
    ip.N_per_string = 3;
    auto it = compile_itinerary({1, 2, 3}, 4, ip);
    it.L_min = len(it.translations[1].n) + 1e-6;
    auto report = validate_itinerary(it);
    CHECK_FALSE(report["pass"].get<bool>());
    const auto short_ones = failures(report, 4);
    CHECK(std::find(short_ones.begin(), short_ones.end(), 1u) != short_ones.end());

    it = compile_itinerary({1, 2, 3}, 4, ip);
    const double junction_turn = validate_itinerary(it)["rules"][4]["measured"][2].get<double>();
    it.theta_max = junction_turn - 1e-9;
    report = validate_itinerary(it);
    const auto sharp = failures(report, 5);
    CHECK(std::find(sharp.begin(), sharp.end(), 3u) != sharp.end());

    it = compile_itinerary({1, 2, 3}, 4, ip);
    it.translations[3].n[0] = 1;
    CHECK(failures(validate_itinerary(it), 3) == std::vector<std::size_t>{3});
}
