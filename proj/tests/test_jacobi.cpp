#include "doctest.h"
#include "oracles.hpp"
#include "pendula/jacobi.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace pendula;

namespace {

const double P = kPi;
const double TP = kTwoPi;

Config centre() { return {0, 0, 0, P}; }

Config shifted(const Config &q, std::initializer_list<double> n) {
    Config out(q);
    std::size_t i = 0;
    for (double k : n) out[i++] += TP * k;
    return out;
}

double sum(const std::vector<double> &v) { return std::accumulate(v.begin(), v.end(), 0.0); }

double vnorm(const std::vector<double> &v) {
    return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

double rel_err(const std::vector<double> &a, const std::vector<double> &b) {
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return vnorm(d) / std::max(vnorm(b), 1e-300);
}

// Random endpoints near two section centres a translation 2 pi (m, n, 1, 0) apart.
std::pair<Config, Config> random_pair(std::mt19937_64 &rng) {
    std::uniform_int_distribution<int> mn(1, 4);
    std::uniform_real_distribution<double> jitter(-0.15, 0.15);
    Config q = centre(), q_end = shifted(centre(), {double(mn(rng)), double(mn(rng)), 1, 0});
    for (std::size_t i = 0; i < 3; ++i) {
        q[i] += jitter(rng);
        q_end[i] += jitter(rng);
    }
    return {q, q_end};
}

// Per-site RK4 replay: end position and the abbreviated action by Simpson.
struct Replay {
    double x_end;
    double action;
};

Replay replay(double x, double v, double T, int n = 20000) {
    const double h = T / n;
    std::vector<double> y2(n + 1);
    oracle::XY s{x, v};
    y2[0] = v * v;
    for (int k = 1; k <= n; ++k) {
        s = oracle::rk4_pendulum(s, h, h);
        y2[k] = s.y * s.y;
    }
    double a = y2[0] + y2[n];
    for (int k = 1; k < n; ++k) a += y2[k] * (k % 2 ? 4 : 2);
    return {s.x, a * h / 3};
}

} // namespace

TEST_CASE("uncoupled connection closes the energy and replays") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 12; ++trial) {
        const auto [q, q_end] = random_pair(rng);
        const auto seg = uncoupled_connect(q, q_end);
        CHECK(std::abs(sum(seg.energies) - 1) < 1e-8);
        CHECK(seg.T > 0);
        CHECK(std::abs(0.5 * std::pow(vnorm(seg.v_start), 2) + total_potential(q) - 1) < 1e-9);
        CHECK(std::abs(0.5 * std::pow(vnorm(seg.v_end), 2) + total_potential(q_end) - 1) < 1e-9);
        double action = 0;
        for (std::size_t i = 0; i < q.size(); ++i) {
            const auto r = replay(q[i], seg.v_start[i], seg.T);
            CHECK(std::abs(r.x_end - q_end[i]) < 1e-7);
            CHECK(std::abs(oracle::pendulum_energy(q[i], seg.v_start[i]) - seg.energies[i]) < 1e-10);
            action += r.action;
        }
        CHECK(seg.length == doctest::Approx(action).epsilon(1e-8));
        CHECK(segment_length(seg) == seg.length);
    }
}

TEST_CASE("speed at three bottoms and one top") {
    const auto seg = uncoupled_connect(centre(), shifted(centre(), {3, 2, 1, 0}));
    CHECK(total_potential(centre()) == doctest::Approx(-6));
    CHECK(vnorm(seg.v_start) == doctest::Approx(std::sqrt(14.0)).epsilon(1e-12));
    CHECK(seg.v_start[3] == 0);
    CHECK(seg.energies[3] == 0);
}

TEST_CASE("energy vector symmetries") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 6; ++trial) {
        const auto [q, q_end] = random_pair(rng);
        const auto e = energy_vector(q, q_end);

        const std::vector<std::size_t> perm{2, 0, 3, 1};
        Config pq(4), pq_end(4);
        for (std::size_t i = 0; i < 4; ++i) {
            pq[i] = q[perm[i]];
            pq_end[i] = q_end[perm[i]];
        }
        const auto pe = energy_vector(pq, pq_end);
        for (std::size_t i = 0; i < 4; ++i) CHECK(pe[i] == doctest::Approx(e[perm[i]]).epsilon(1e-12));

        const auto back = energy_vector(q_end, q);
        for (std::size_t i = 0; i < 4; ++i) CHECK(back[i] == doctest::Approx(e[i]).epsilon(1e-12));

        for (std::size_t j = 0; j < 4; ++j) {
            Config tq(q), tq_end(q_end);
            tq[j] += TP;
            tq_end[j] += TP;
            const auto te = energy_vector(tq, tq_end);
            for (std::size_t i = 0; i < 4; ++i) CHECK(te[i] == doctest::Approx(e[i]).epsilon(1e-11));
        }
    }
}

TEST_CASE("length is additive along a geodesic") {
    const Config a = centre();
    const Config mid = shifted(a, {1, 1, 1, 0});
    const Config b = shifted(a, {2, 2, 2, 0});
    const auto whole = uncoupled_connect(a, b);
    for (std::size_t i = 0; i < 3; ++i) CHECK(whole.energies[i] == doctest::Approx(1.0 / 3).epsilon(1e-12));
    const double split = uncoupled_connect(a, mid).length + uncoupled_connect(mid, b).length;
    CHECK(std::abs(split - whole.length) < 1e-7);
    CHECK(uncoupled_connect(a, shifted(a, {3, 2, 1, 0})).length >
          uncoupled_connect(a, shifted(a, {2, 2, 1, 0})).length);
}

TEST_CASE("one revolution of a single site") {
    const Config q{0, P, P, P};
    const auto seg = uncoupled_connect(q, {TP, P, P, P});
    CHECK(seg.energies[0] == doctest::Approx(1).epsilon(1e-12));
    const double expected = oracle::simpson([](double x) { return std::sqrt(2 * (2 + std::cos(x))); }, 0, TP);
    CHECK(seg.length == doctest::Approx(expected).epsilon(1e-11));
}

TEST_CASE("endpoint gradients match finite differences") {
    std::mt19937_64 rng(23);
    const double h = 1e-6;
    for (int trial = 0; trial < 8; ++trial) {
        const auto [q, q_end] = random_pair(rng);
        const auto seg = uncoupled_connect(q, q_end);
        for (auto which : {SegmentEnd::start, SegmentEnd::end}) {
            std::vector<double> fd(4);
            for (std::size_t i = 0; i < 4; ++i) {
                Config a = which == SegmentEnd::start ? q : q_end, b = a;
                a[i] += h;
                b[i] -= h;
                const double lp = which == SegmentEnd::start ? uncoupled_connect(a, q_end).length
                                                             : uncoupled_connect(q, a).length;
                const double lm = which == SegmentEnd::start ? uncoupled_connect(b, q_end).length
                                                             : uncoupled_connect(q, b).length;
                fd[i] = (lp - lm) / (2 * h);
            }
            CHECK(rel_err(length_gradient(seg, which), fd) < 1e-5);
        }
        const auto rev = uncoupled_connect(q_end, q);
        CHECK(rel_err(length_gradient(rev, SegmentEnd::start), length_gradient(seg, SegmentEnd::end)) < 1e-10);
    }
}

TEST_CASE("gradient vanishes on a sleeping site") {
    const Config q{0, 0, 0, P - 1e-3};
    const auto seg = uncoupled_connect(q, shifted(centre(), {2, 3, 1, 0}));
    CHECK(std::abs(length_gradient(seg, SegmentEnd::start)[3]) < 1e-2);
    CHECK(std::abs(seg.energies[3]) < 1e-5);
}

TEST_CASE("duration gradient follows the stiffness relation") {
    std::mt19937_64 rng(31);
    const double h = 1e-6;
    for (int trial = 0; trial < 8; ++trial) {
        const auto [q, q_end] = random_pair(rng);
        const auto seg = uncoupled_connect(q, q_end);
        const auto k = site_stiffness(seg);
        for (double ki : k) CHECK(ki >= 0);
        const auto g = duration_gradient(seg);
        std::vector<double> fd(4);
        for (std::size_t i = 0; i < 4; ++i) {
            Config a(q), b(q);
            a[i] += h;
            b[i] -= h;
            fd[i] = (uncoupled_connect(a, q_end).T - uncoupled_connect(b, q_end).T) / (2 * h);
        }
        CHECK(rel_err(g, fd) < 1e-4);
    }
}

TEST_CASE("endpoint sensitivity is bounded and decays with length") {
    const double h = 1e-6;
    auto sensitivity = [&](const Config &q_end) {
        const Config q{0.05, -0.04, 0, P};
        double worst = 0;
        for (std::size_t j = 0; j < 4; ++j) {
            Config a(q), b(q);
            a[j] += h;
            b[j] -= h;
            const auto va = uncoupled_connect(a, q_end).v_start;
            const auto vb = uncoupled_connect(b, q_end).v_start;
            for (std::size_t i = 0; i < 4; ++i) worst = std::max(worst, std::abs(va[i] - vb[i]) / (2 * h));
        }
        return worst;
    };
    double prev = 1e300;
    for (double s : {1.0, 2.0, 4.0, 8.0}) {
        const double d = sensitivity(shifted(centre(), {s, s, 1, 0}));
        CHECK(d < 5);
        CHECK(d < prev);
        prev = d;
    }
}

TEST_CASE("inadmissible pair is rejected") {
    CHECK_THROWS_AS(uncoupled_connect({0, 0, 0, P}, {0.5, 0, 0}), DomainError);
}

TEST_CASE("coupled connection with the coupling switched off") {
    CouplingParams cp;
    cp.mask.assign(4, false);
    const Config p0{0.01, -0.02, 0, P}, p1 = shifted({-0.01, 0.005, 0, P}, {3, 2, 1, 0});
    const auto c = coupled_connect(p0, p1, centre(), shifted(centre(), {3, 2, 1, 0}), cp);
    const auto u = uncoupled_connect(p0, p1);
    CHECK(std::abs(c.length - u.length) < 1e-9);
    CHECK(std::abs(c.T - u.T) < 1e-9);
    CHECK(rel_err(c.v_start, u.v_start) < 1e-9);
    CHECK_FALSE(c.lens_contact);
}

TEST_CASE("vertical boundary endpoints keep the free length") {
    CouplingParams cp;
    const double rv = std::sqrt(cp.eps);
    const Config c1 = shifted(centre(), {3, 2, 1, 0});
    // Disk points whose outward offset does not point back at the lens.
    const Config p0{rv * 0.6, rv * 0.8, 0, P};
    const Config p1 = shifted({-rv * 0.8, -rv * 0.6, 0, P}, {3, 2, 1, 0});
    const auto c = coupled_connect(p0, p1, centre(), c1, cp);
    const auto u = uncoupled_connect(p0, p1);
    CHECK_FALSE(c.lens_contact);
    CHECK(std::abs(c.length - u.length) < 1e-9);
}

TEST_CASE("a segment through the lens centres is shorter than the free one") {
    CouplingParams cp;
    const Config c1 = shifted(centre(), {3, 2, 1, 0});
    for (const Config &p0 : {centre(), Config{0.01, -0.02, 0, P}}) {
        const Config p1 = shifted({-p0[0], p0[1] * 0.5, 0, P}, {3, 2, 1, 0});
        const auto c = coupled_connect(p0, p1, centre(), c1, cp);
        const auto u = uncoupled_connect(p0, p1);
        CHECK(c.lens_contact);
        CHECK(c.mismatch < 1e-8);
        CHECK(c.length < u.length);
        LatticeState s{p0, c.v_start};
        CHECK(std::abs(hamiltonian(s, cp) - 1) < 1e-8);
        LatticeState e{p1, c.v_end};
        CHECK(std::abs(hamiltonian(e, cp) - 1) < 1e-8);
    }
}
