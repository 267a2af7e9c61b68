// Acceptance suite: one pass/fail line per criterion.

#include "pendula/identities.hpp"
#include "pendula/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

using namespace pendula;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char *f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double vnorm(const std::vector<double> &v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double uniform(std::mt19937_64 &rng, double a, double b) {
    return a + (b - a) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// 1. Energy decreases strictly in T; near-heteroclinic arcs have E(30) < 1e-3.
Outcome monotone_law() {
    std::mt19937_64 rng(101);
    const Branch branches[] = {Branch::bottom_to_top, Branch::top_to_bottom, Branch::bottom_to_next_bottom,
                               Branch::rotation};
    std::vector<double> Ts;
    for (int k = 0; k < 20; ++k) Ts.push_back(0.1 * std::pow(300.0, k / 19.0));
    int bad = 0, errors = 0;
    std::string first;
    for (int c = 0; c < 50; ++c) {
        const Branch br = branches[c % 4];
        double a = 0, b = 0;
        switch (br) {
        case Branch::bottom_to_top:
            a = uniform(rng, -1, 1);
            b = kPi + uniform(rng, -0.99, 0.99);
            break;
        case Branch::top_to_bottom:
            a = kPi + uniform(rng, -0.99, 0.99);
            b = kTwoPi + uniform(rng, -1, 1);
            break;
        case Branch::bottom_to_next_bottom:
            a = uniform(rng, -1, 1);
            b = kTwoPi + uniform(rng, -1, 1);
            break;
        default:
            a = uniform(rng, -1, 1);
            b = a + kTwoPi * std::floor(uniform(rng, 1, 4)) + uniform(rng, 0, kTwoPi);
        }
        try {
            double prev = std::numeric_limits<double>::infinity();
            for (double T : Ts) {
                const double E = energy_of_time(a, b, br, T);
                if (!(E < prev)) {
                    ++bad;
                    if (first.empty())
                        first = std::string(to_string(br)) + " a=" + fmt("%.4f", a) + " b=" + fmt("%.4f", b) +
                                " T=" + fmt("%.3g", T);
                    break;
                }
                prev = E;
            }
        } catch (const std::exception &e) {
            ++errors;
            if (first.empty()) first = std::string(to_string(br)) + ": " + e.what();
        }
    }
    double worst_het = 0;
    for (int c = 0; c < 10; ++c) {
        const double a = uniform(rng, -0.2, 0.2), b = kPi + uniform(rng, -0.2, 0.2);
        worst_het = std::max(worst_het, std::abs(energy_of_time(a, b, Branch::bottom_to_top, 30)));
    }
    const bool pass = bad == 0 && errors == 0 && worst_het < 1e-3;
    std::string d = "non-monotone " + std::to_string(bad) + "/50, errors " + std::to_string(errors) +
                    ", max |E(30)| near heteroclinic " + fmt("%.3e", worst_het);
    if (!first.empty()) d += " (first: " + first + ")";
    return {pass, d};
}

// 2. Sensitivity identities against central differences; stiffness bound.
Outcome identities() {
    IdentityGrid g;
    g.energies = {0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0};
    bool pass = true;
    std::string d;
    for (const auto &c : identity_suite(g)) {
        pass = pass && c.pass;
        d += c.name + " " + fmt("%.2e", c.worst) + "; ";
    }
    return {pass, d + "limit 1e-4 (bound ratio <= 1)"};
}

Config centre() { return {0, 0, 0, kPi}; }

// 3. Endpoint gradient of the length against central differences.
Outcome gradient_law() {
    std::mt19937_64 rng(303);
    const double h = 1e-6;
    double worst = 0;
    for (int k = 0; k < 30; ++k) {
        Config q = centre(), q_end = centre();
        const double m = std::floor(uniform(rng, 1, 6)), n = std::floor(uniform(rng, 1, 6));
        q_end[0] += kTwoPi * m;
        q_end[1] += kTwoPi * n;
        q_end[2] += kTwoPi;
        for (std::size_t i = 0; i < 3; ++i) {
            q[i] += uniform(rng, -0.15, 0.15);
            q_end[i] += uniform(rng, -0.15, 0.15);
        }
        q[3] += uniform(rng, -0.01, 0.01);
        const auto seg = uncoupled_connect(q, q_end);
        for (auto which : {SegmentEnd::start, SegmentEnd::end}) {
            const auto g = length_gradient(seg, which);
            std::vector<double> diff(4);
            for (std::size_t i = 0; i < 4; ++i) {
                Config a = which == SegmentEnd::start ? q : q_end, b = a;
                a[i] += h;
                b[i] -= h;
                const double la = which == SegmentEnd::start ? uncoupled_connect(a, q_end).length
                                                             : uncoupled_connect(q, a).length;
                const double lb = which == SegmentEnd::start ? uncoupled_connect(b, q_end).length
                                                             : uncoupled_connect(q, b).length;
                diff[i] = g[i] - (la - lb) / (2 * h);
            }
            worst = std::max(worst, vnorm(diff) / vnorm(g));
        }
    }
    return {worst < 1e-5, "max relative error (vector norm) " + fmt("%.3e", worst) + " over 30 segments, limit 1e-5"};
}

// 4. Hamiltonian drift of the adaptive flow through lenses.
Outcome conservation() {
    std::mt19937_64 rng(404);
    CouplingParams cp;
    double worst = 0;
    bool lens = true;
    for (int k = 0; k < 3; ++k) {
        LatticeState s;
        s.x = centre();
        for (double &x : s.x) x += uniform(rng, -0.02, 0.02);
        lens = lens && !lenses_hit(s.x, cp).empty();
        s.y.resize(4);
        for (double &y : s.y) y = uniform(rng, -1, 1);
        const double room = 1 - total_potential(s.x, &cp);
        const double scale = std::sqrt(2 * room) / vnorm(s.y);
        for (double &y : s.y) y *= scale;
        FlowConfig fc;
        fc.tol = 1e-10;
        fc.sample_dt = 1;
        const auto tr = lattice_flow(s, cp, 1000, fc);
        const double H0 = hamiltonian(s, cp);
        double drift = 0;
        for (const auto &st : tr.states) drift = std::max(drift, std::abs(hamiltonian(st, cp) - H0));
        worst = std::max(worst, drift / 1000);
    }
    return {lens && worst < 1e-8,
            "max drift per unit time " + fmt("%.3e", worst) + " over t = 1000 (3 runs from inside a lens), limit 1e-8"};
}

// 5. Energy vector under small changes of the segment direction.
Outcome energy_stability() {
    const Config q = centre();
    Config q1 = centre();
    q1[0] += kTwoPi * 6;
    q1[1] += kTwoPi * 6;
    q1[2] += kTwoPi;
    std::vector<double> d(4);
    for (std::size_t i = 0; i < 4; ++i) d[i] = q1[i] - q[i];
    const double L = vnorm(d);
    const auto E1 = energy_vector(q, q1);
    std::vector<double> dE;
    for (double delta : {1e-2, 1e-3, 1e-4}) {
        // Rotate the direction by delta within the active plane.
        Config q2 = q1;
        const double s = L * std::tan(delta) / std::sqrt(2.0);
        q2[0] += s;
        q2[1] -= s;
        const auto E2 = energy_vector(q, q2);
        std::vector<double> diff(4);
        for (std::size_t i = 0; i < 4; ++i) diff[i] = E2[i] - E1[i];
        dE.push_back(vnorm(diff));
    }
    const bool monotone = dE[0] > dE[1] && dE[1] > dE[2];
    const double C = dE[2] / 1e-4;
    return {L >= 50 && monotone && dE[2] < 10 * 1e-4,
            "|q'-q| = " + fmt("%.2f", L) + ", |dE| = " + fmt("%.3e", dE[0]) + ", " + fmt("%.3e", dE[1]) + ", " +
                fmt("%.3e", dE[2]) + " for delta 1e-2, 1e-3, 1e-4; |dE|/delta = " + fmt("%.4f", C) + " (limit 10)"};
}

// 6. Interior minimum on a one-string desk-scale instance.
Outcome interior_minimum() {
    ItineraryParams ip;
    ip.N_per_string = 6;
    ip.L_min = 50;
    ip.steer = false;
    const auto itin = compile_itinerary({1, 2}, 4, ip);
    CouplingParams cp;
    MinimizeOptions mo;
    for (int j = 0; j < 5; ++j) {
        const double s = (j % 2 ? -1 : 1) * 0.04;
        mo.initial.push_back({s, -0.5 * s, 0.6 * s});
    }
    const auto bg = minimize(itin, cp, mo);
    const auto rep = certify_interior(bg, cp);
    bool margins = !bg.interior_margins.empty(), boundary = true, convex = true, discount = true, factor = true;
    double min_margin = 1e300, min_v = 1e300, min_h = 1e300, min_convex = 1e300, ratio_lo = 1e300, ratio_hi = 0;
    for (double m : bg.interior_margins) {
        margins = margins && m > 0;
        min_margin = std::min(min_margin, m);
    }
    for (const auto &p : rep["points"]) {
        const double v = p["boundary"]["vertical_excess"], h = p["boundary"]["horizontal_excess"];
        min_v = std::min(min_v, v);
        min_h = std::min(min_h, h);
        boundary = boundary && v > 0 && h > 0;
        for (const auto &c : p["convexity"]["margins"]) {
            min_convex = std::min(min_convex, c["margin"].get<double>());
            convex = convex && c["margin"].get<double>() > 0;
        }
        const double gap = p["lens"]["gap"], ratio = p["lens"]["ratio"];
        discount = discount && gap > 0;
        factor = factor && ratio >= 0.25 && ratio <= 4;
        ratio_lo = std::min(ratio_lo, ratio);
        ratio_hi = std::max(ratio_hi, ratio);
    }
    const bool pass = bg.converged && margins && boundary && convex && discount && factor;
    std::ostringstream d;
    d << "converged " << (bg.converged ? "yes" : "no") << " (" << bg.sweeps << " sweeps, grad "
      << fmt("%.1e", bg.grad_norm) << ", length " << fmt("%.10f", bg.total_length) << "); min margin "
      << fmt("%.4f", min_margin) << "; boundary excess v " << fmt("%.3e", min_v) << " h " << fmt("%.3e", min_h)
      << "; convexity " << fmt("%.5f", min_convex) << "; lens gap / eps^(r+1) eta(1/2) in ["
      << fmt("%.4f", ratio_lo) << ", " << fmt("%.4f", ratio_hi) << "] (required [0.25, 4])";
    return {pass, d.str()};
}

// 7. Replay of the two-string path 1 -> 2 -> 3.
Outcome transfer() {
    RunConfig c;
    c.path = {1, 2, 3};
    const auto itin = compile_itinerary(c.path, c.p, c.itinerary());
    const CouplingParams cp = c.coupling();
    const auto bg = minimize(itin, cp, c.minimize);
    const auto rep = replay(bg, itin, cp, c.replay);
    std::size_t hit = 0;
    for (const auto &x : rep.crossings) hit += x.hit;
    std::ostringstream d;
    d << "minimize converged " << (bg.converged ? "yes" : "no") << " (grad " << fmt("%.2e", bg.grad_norm)
      << (bg.boundary_contact ? ", boundary contact" : "") << "); sections reached " << hit << "/"
      << rep.crossings.size() << "; carriers follow path " << (rep.carriers_follow_path ? "yes" : "no")
      << "; off-carrier " << fmt("%.3e", rep.off_carrier) << " (limit " << fmt("%.3f", 2 * std::sqrt(c.eps))
      << "); drift " << fmt("%.2e", rep.drift) << "; step times";
    if (rep.step_times.empty()) d << " none";
    for (double t : rep.step_times) d << ' ' << fmt("%.1f", t);
    return {bg.converged && rep.pass, d.str()};
}

std::string slurp(const std::filesystem::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// 8. Two runs of one configuration give byte-identical artifacts.
Outcome reproducibility() {
    RunConfig c;
    c.path = {1, 2};
    c.steer = false;
    c.seed = 7;
    c.output = (std::filesystem::temp_directory_path() / "pendula_acceptance_run").string();
    std::filesystem::remove_all(c.output);
    run_pipeline(c);
    const std::string r1 = slurp(std::filesystem::path(c.output) / "report.json");
    const std::string e1 = slurp(std::filesystem::path(c.output) / "energies.csv");
    std::filesystem::remove_all(c.output);
    const auto res = run_pipeline(c);
    const std::string r2 = slurp(std::filesystem::path(c.output) / "report.json");
    const std::string e2 = slurp(std::filesystem::path(c.output) / "energies.csv");
    const bool pass = !r1.empty() && !e1.empty() && r1 == r2 && e1 == e2;
    return {pass, "report.json " + std::string(r1 == r2 ? "identical" : "differs") + " (" +
                      std::to_string(r1.size()) + " bytes), energies.csv " + (e1 == e2 ? "identical" : "differs") +
                      " (" + std::to_string(e1.size()) + " bytes); run exit code " +
                      std::to_string(static_cast<int>(res.code))};
}

} // namespace

int main() {
    struct Criterion {
        int id;
        const char *name;
        double limit_s;
        std::function<Outcome()> run;
    };
    const Criterion all[] = {
        {1, "pendulum monotone law", 10, monotone_law},
        {2, "identity suite", 60, identities},
        {3, "gradient law", 60, gradient_law},
        {4, "conservation", 120, conservation},
        {5, "energy-vector stability", 60, energy_stability},
        {6, "interior minimum", 600, interior_minimum},
        {7, "end-to-end transfer", 1800, transfer},
        {8, "reproducibility", 1e300, reproducibility},
    };
    int failed = 0;
    for (const auto &c : all) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception &e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs < c.limit_s;
        const bool pass = o.pass && in_time;
        failed += !pass;
        std::printf("criterion %d [%s] %s: %s; %.1f s%s\n", c.id, c.name, pass ? "PASS" : "FAIL", o.detail.c_str(),
                    secs, in_time ? "" : " (over time limit)");
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
