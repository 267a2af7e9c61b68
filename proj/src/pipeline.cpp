#include "pendula/pipeline.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

namespace pendula {

namespace {

using nlohmann::json;

void reject_unknown(const json &j, const std::set<std::string> &known, const std::string &where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto &[k, v] : j.items())
        if (!known.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

template <class T> void read(const json &j, const char *key, T &out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

std::size_t site_of(long s, std::size_t p) {
    const long q = static_cast<long>(p);
    return static_cast<std::size_t>(((s - 1) % q + q) % q);
}

// Uniform on [-1, 1) from the raw generator output, identical on every platform.
double symmetric_unit(std::mt19937_64 &rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-52 - 1.0; }

} // namespace

CouplingParams RunConfig::coupling() const {
    CouplingParams cp;
    cp.eps = eps;
    cp.r = r;
    cp.eta.sharpness = eta_sharpness;
    return cp;
}

ItineraryParams RunConfig::itinerary() const {
    ItineraryParams ip;
    ip.eps = eps;
    ip.r = r;
    ip.N_per_string = N_per_string;
    ip.L_min = L_min;
    ip.theta_max = theta_max;
    ip.steer = steer;
    ip.section.rho_v = rho_v;
    ip.section.rho_h = rho_h;
    return ip;
}

RunConfig parse_config(const json &j) {
    RunConfig c;
    try {
        reject_unknown(j,
                       {"p", "eps", "r", "eta", "path", "N_per_string", "L_min", "theta_max", "steer", "rho_v",
                        "rho_h", "integrator", "optimizer", "certify", "replay", "seed", "initial_jitter", "output"},
                       "config");
        read(j, "p", c.p);
        read(j, "eps", c.eps);
        if (j.contains("r")) {
            const double r = j.at("r").get<double>();
            if (r != std::floor(r)) throw ConfigError("r must be an integer");
            c.r = static_cast<int>(r);
        }
        if (j.contains("eta")) {
            reject_unknown(j.at("eta"), {"sharpness"}, "eta");
            read(j.at("eta"), "sharpness", c.eta_sharpness);
        }
        read(j, "path", c.path);
        read(j, "N_per_string", c.N_per_string);
        read(j, "L_min", c.L_min);
        read(j, "theta_max", c.theta_max);
        read(j, "steer", c.steer);
        read(j, "rho_v", c.rho_v);
        read(j, "rho_h", c.rho_h);
        if (j.contains("integrator")) {
            const auto &g = j.at("integrator");
            reject_unknown(g, {"tol", "sample_dt", "step_per_unit", "connect_tol"}, "integrator");
            read(g, "tol", c.replay.tol);
            read(g, "sample_dt", c.replay.sample_dt);
            read(g, "step_per_unit", c.step_per_unit);
            read(g, "connect_tol", c.connect_tol);
        }
        if (j.contains("optimizer")) {
            const auto &o = j.at("optimizer");
            reject_unknown(o,
                           {"tol_g", "tol_x", "max_sweeps", "max_block_iterations", "fd_step",
                            "fraction_to_boundary"},
                           "optimizer");
            read(o, "tol_g", c.minimize.tol_g);
            read(o, "tol_x", c.minimize.tol_x);
            read(o, "max_sweeps", c.minimize.max_sweeps);
            read(o, "max_block_iterations", c.minimize.max_block_iterations);
            read(o, "fd_step", c.minimize.fd_step);
            read(o, "fraction_to_boundary", c.minimize.fraction_to_boundary);
        }
        if (j.contains("certify")) {
            const auto &o = j.at("certify");
            reject_unknown(o, {"angles", "sleeper_levels"}, "certify");
            read(o, "angles", c.certify.angles);
            read(o, "sleeper_levels", c.certify.sleeper_levels);
        }
        if (j.contains("replay")) {
            const auto &o = j.at("replay");
            reject_unknown(o, {"time_factor", "off_carrier_multiple", "drift_budget"}, "replay");
            read(o, "time_factor", c.replay.time_factor);
            read(o, "off_carrier_multiple", c.replay.off_carrier_multiple);
            read(o, "drift_budget", c.replay.drift_budget);
        }
        read(j, "seed", c.seed);
        read(j, "initial_jitter", c.initial_jitter);
        read(j, "output", c.output);
    } catch (const json::exception &e) {
        throw ConfigError(std::string("bad value: ") + e.what());
    }

    if (c.p < 4) throw ConfigError("p must be at least 4");
    if (!(c.eps > 0 && c.eps < kPi)) throw ConfigError("eps must lie in (0, pi)");
    if (c.r < 3) throw ConfigError("r must be an integer >= 3");
    if (!(c.eta_sharpness > 0)) throw ConfigError("eta sharpness must be positive");
    if (c.path.size() < 2) throw ConfigError("path needs at least one edge");
    for (std::size_t k = 1; k < c.path.size(); ++k)
        if (std::abs(c.path[k] - c.path[k - 1]) != 1) throw ConfigError("path steps must be +-1");
    if (c.N_per_string < 1) throw ConfigError("N_per_string must be positive");
    auto positive = [](double v, const char *name) {
        if (!(v > 0)) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(c.L_min, "L_min");
    positive(c.theta_max, "theta_max");
    if (c.rho_v != -1) positive(c.rho_v, "rho_v");
    if (c.rho_h != -1) positive(c.rho_h, "rho_h");
    positive(c.replay.tol, "integrator.tol");
    positive(c.replay.sample_dt, "integrator.sample_dt");
    positive(c.step_per_unit, "integrator.step_per_unit");
    positive(c.connect_tol, "integrator.connect_tol");
    positive(c.minimize.tol_g, "optimizer.tol_g");
    positive(c.minimize.tol_x, "optimizer.tol_x");
    positive(c.minimize.max_sweeps, "optimizer.max_sweeps");
    positive(c.minimize.max_block_iterations, "optimizer.max_block_iterations");
    positive(c.minimize.fd_step, "optimizer.fd_step");
    if (!(c.minimize.fraction_to_boundary > 0 && c.minimize.fraction_to_boundary < 1))
        throw ConfigError("optimizer.fraction_to_boundary must lie in (0, 1)");
    positive(c.certify.angles, "certify.angles");
    positive(c.certify.sleeper_levels, "certify.sleeper_levels");
    positive(c.replay.time_factor, "replay.time_factor");
    positive(c.replay.off_carrier_multiple, "replay.off_carrier_multiple");
    positive(c.replay.drift_budget, "replay.drift_budget");
    if (!(c.initial_jitter >= 0 && c.initial_jitter < 1)) throw ConfigError("initial_jitter must lie in [0, 1)");
    if (c.output.empty()) throw ConfigError("output must be a directory name");
    c.minimize.connect.step_per_unit = c.step_per_unit;
    c.minimize.connect.tol = c.connect_tol;
    c.certify.connect = c.minimize.connect;
    return c;
}

RunConfig load_config(const std::filesystem::path &file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open " + file.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error &e) {
        throw ConfigError(std::string("malformed JSON: ") + e.what());
    }
    return parse_config(j);
}

json to_json(const RunConfig &c) {
    return {{"p", c.p},
            {"eps", c.eps},
            {"r", c.r},
            {"eta", {{"sharpness", c.eta_sharpness}}},
            {"path", c.path},
            {"N_per_string", c.N_per_string},
            {"L_min", c.L_min},
            {"theta_max", c.theta_max},
            {"steer", c.steer},
            {"rho_v", c.rho_v},
            {"rho_h", c.rho_h},
            {"integrator",
             {{"tol", c.replay.tol},
              {"sample_dt", c.replay.sample_dt},
              {"step_per_unit", c.step_per_unit},
              {"connect_tol", c.connect_tol}}},
            {"optimizer",
             {{"tol_g", c.minimize.tol_g},
              {"tol_x", c.minimize.tol_x},
              {"max_sweeps", c.minimize.max_sweeps},
              {"max_block_iterations", c.minimize.max_block_iterations},
              {"fd_step", c.minimize.fd_step},
              {"fraction_to_boundary", c.minimize.fraction_to_boundary}}},
            {"certify", {{"angles", c.certify.angles}, {"sleeper_levels", c.certify.sleeper_levels}}},
            {"replay",
             {{"time_factor", c.replay.time_factor},
              {"off_carrier_multiple", c.replay.off_carrier_multiple},
              {"drift_budget", c.replay.drift_budget}}},
            {"seed", c.seed},
            {"initial_jitter", c.initial_jitter},
            {"output", c.output}};
}

std::vector<std::vector<double>> initial_guess(const Itinerary &itin, const RunConfig &c) {
    if (c.seed == 0 || itin.sections.size() < 3) return {};
    std::mt19937_64 rng(c.seed);
    std::vector<std::vector<double>> out;
    for (std::size_t j = 1; j + 1 < itin.sections.size(); ++j) {
        const Section &s = itin.sections[j];
        std::vector<double> l(s.free_sites().size());
        for (std::size_t k = 0; k < l.size(); ++k)
            l[k] = c.initial_jitter * symmetric_unit(rng) * (k < 2 ? s.rho_v / std::sqrt(2.0) : s.rho_h);
        out.push_back(std::move(l));
    }
    return out;
}

ReplayReport replay(const BrokenGeodesic &bg, const Itinerary &itin, const CouplingParams &cp,
                    const ReplayOptions &opts) {
    const auto &S = bg.sections;
    if (S.size() < 2 || bg.segments.size() + 1 != S.size()) throw DomainError("replay needs a broken geodesic");
    const std::size_t M = S.size(), p = S[0].size();
    ReplayReport rep;

    // Designated carriers.
    std::vector<std::optional<std::size_t>> designated(M);
    for (std::size_t j = 0; j < M; ++j) {
        const std::size_t k = itin.string_of_section[j];
        if (j == 0 || k != itin.string_of_section[j - 1]) designated[j] = site_of(itin.path[k], p);
    }
    designated[M - 1] = site_of(itin.path.back(), p);

    double T_total = 0;
    for (const auto &seg : bg.segments) T_total += seg.T;

    FlowConfig fc;
    fc.tol = opts.tol;
    fc.sample_dt = opts.sample_dt;
    for (std::size_t j = 1; j < M; ++j) {
        const std::size_t f = S[j].facilitator;
        const double target = S[j].center[f];
        fc.events.push_back({[f, target](double, std::span<const double> y) { return y[f] - target; }, +1,
                             j + 1 == M});
    }
    const LatticeState start{bg.points[0], bg.segments[0].v_start};
    rep.trajectory = lattice_flow(start, cp, opts.time_factor * T_total, fc);

    std::vector<const ode::EventHit *> first(M, nullptr);
    for (const auto &h : rep.trajectory.hits)
        if (!first[h.event + 1]) first[h.event + 1] = &h;

    const double sqrt_eps = std::sqrt(cp.eps);
    double prev_t = -1;
    bool ordered = true;
    rep.carriers_follow_path = true;
    for (std::size_t j = 0; j < M; ++j) {
        Crossing c;
        c.section = j;
        c.designated = designated[j];
        LatticeState at;
        if (j == 0) {
            c.hit = true;
            at = start;
        } else if (first[j]) {
            c.hit = true;
            c.t = first[j]->t;
            at = unpack(first[j]->y);
        }
        if (c.hit) {
            c.energies = site_energies(at);
            c.carrier = static_cast<std::size_t>(
                std::max_element(c.energies.begin(), c.energies.end()) - c.energies.begin());
            c.margin = S[j].margin(S[j].local(at.x));
            if (prev_t >= 0) {
                rep.step_times.push_back(c.t - prev_t);
                if (!(c.t > prev_t)) ordered = false;
            }
            prev_t = c.t;
            if (c.designated) {
                if (c.carrier != *c.designated) rep.carriers_follow_path = false;
                rep.carrier_deviation = std::max(rep.carrier_deviation, std::abs(c.energies[*c.designated] - 1));
                for (std::size_t i = 0; i < p; ++i)
                    if (i != *c.designated) rep.off_carrier = std::max(rep.off_carrier, std::abs(c.energies[i]));
            }
        } else {
            const std::size_t f = S[j].facilitator;
            c.closest = std::numeric_limits<double>::infinity();
            for (const auto &s : rep.trajectory.states)
                c.closest = std::min(c.closest, std::abs(s.x[f] - S[j].center[f]));
            rep.carriers_follow_path = false;
            rep.failures.push_back("section " + std::to_string(j) + " missed (closest facilitator distance " +
                                   format_number(c.closest) + ")");
        }
        rep.crossings.push_back(std::move(c));
    }
    if (!ordered) rep.failures.push_back("crossing times are not increasing");
    if (!rep.carriers_follow_path) rep.failures.push_back("carrier sites do not follow the path");
    rep.constant_measured = std::max(rep.carrier_deviation, rep.off_carrier) / sqrt_eps;
    if (rep.off_carrier > opts.off_carrier_multiple * sqrt_eps)
        rep.failures.push_back("off-carrier energy " + format_number(rep.off_carrier) + " above " +
                               format_number(opts.off_carrier_multiple) + " sqrt(eps)");

    for (const auto &s : rep.trajectory.states) {
        const double h = hamiltonian(s, cp);
        rep.hamiltonian.push_back(h);
        rep.drift = std::max(rep.drift, std::abs(h - 1));
    }
    const double duration = rep.trajectory.t.empty() ? 0.0 : rep.trajectory.t.back();
    if (rep.drift > opts.drift_budget * std::max(duration, 1.0))
        rep.failures.push_back("energy drift " + format_number(rep.drift) + " above budget");

    // Segment by segment from each break point with its own velocity.
    FlowConfig seg_fc;
    seg_fc.tol = opts.tol;
    for (const auto &seg : bg.segments) {
        const auto tr = lattice_flow({seg.q, seg.v_start}, cp, seg.T, seg_fc);
        for (std::size_t i = 0; i < p; ++i)
            rep.segment_closure = std::max(rep.segment_closure, std::abs(tr.back().x[i] - seg.q_end[i]));
    }

    rep.pass = rep.failures.empty();
    return rep;
}

json to_json(const ReplayReport &r, double eps) {
    json crossings = json::array();
    for (const auto &c : r.crossings) {
        json e = {{"section", c.section}, {"hit", c.hit}};
        if (c.hit) {
            e["t"] = c.t;
            e["energies"] = c.energies;
            e["carrier"] = c.carrier;
            e["margin"] = c.margin;
        } else {
            e["closest"] = c.closest;
        }
        e["designated"] = c.designated ? json(*c.designated) : json(nullptr);
        crossings.push_back(std::move(e));
    }
    return {{"crossings", crossings},
            {"step_times", r.step_times},
            {"carrier_deviation", r.carrier_deviation},
            {"off_carrier", r.off_carrier},
            {"sqrt_eps", std::sqrt(eps)},
            {"constant_measured", r.constant_measured},
            {"drift", r.drift},
            {"segment_closure", r.segment_closure},
            {"carriers_follow_path", r.carriers_follow_path},
            {"failures", r.failures},
            {"pass", r.pass}};
}

std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

void write_text(const std::filesystem::path &file, const std::string &text) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << text;
}

void write_json(const std::filesystem::path &file, const json &j) { write_text(file, j.dump(2) + "\n"); }

void write_csvs(const std::filesystem::path &dir, const ReplayReport &r) {
    const auto &tr = r.trajectory;
    const std::size_t p = tr.states.empty() ? 0 : tr.states[0].size();
    std::ostringstream e, x;
    e << "t";
    x << "t";
    for (std::size_t i = 0; i < p; ++i) e << ",E_" << i;
    e << ",H_total\n";
    for (std::size_t i = 0; i < p; ++i) x << ",x_" << i;
    for (std::size_t i = 0; i < p; ++i) x << ",y_" << i;
    x << "\n";
    for (std::size_t k = 0; k < tr.states.size(); ++k) {
        const auto &s = tr.states[k];
        e << format_number(tr.t[k]);
        x << format_number(tr.t[k]);
        for (double v : site_energies(s)) e << ',' << format_number(v);
        e << ',' << format_number(r.hamiltonian[k]) << '\n';
        for (double v : s.x) x << ',' << format_number(v);
        for (double v : s.y) x << ',' << format_number(v);
        x << '\n';
    }
    write_text(dir / "energies.csv", e.str());
    write_text(dir / "trajectory.csv", x.str());
}

json minimize_json(const BrokenGeodesic &bg) {
    return {{"converged", bg.converged},
            {"sweeps", bg.sweeps},
            {"total_length", bg.total_length},
            {"grad_norm", bg.grad_norm},
            {"local", bg.local},
            {"interior_margins", bg.interior_margins},
            {"boundary_contact", bg.boundary_contact},
            {"length_history", bg.length_history},
            {"grad_history", bg.grad_history},
            {"warnings", bg.warnings}};
}

json itinerary_json(const Itinerary &it) {
    json tr = json::array();
    for (const auto &t : it.translations) tr.push_back({{"n", t.n}, {"junction", t.junction}});
    json sec = json::array();
    for (const auto &s : it.sections)
        sec.push_back({{"center", s.center},
                       {"facilitator", s.facilitator},
                       {"active_pair", s.active_pair},
                       {"sleepers", s.sleepers}});
    return {{"sections", sec}, {"translations", tr}, {"validation", validate_itinerary(it)}};
}

json manifest(const RunConfig &c) {
    return {{"config", to_json(c)},
            {"seed", c.seed},
            {"versions",
             {{"pendula", PENDULA_VERSION},
              {"compiler", __VERSION__},
              {"cplusplus", __cplusplus},
              {"boost", BOOST_LIB_VERSION},
              {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)},
              {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
            {"artifacts", {"report.json", "energies.csv", "trajectory.csv", "manifest.json"}}};
}

} // namespace

RunResult run_pipeline(const RunConfig &c, bool quiet) {
    RunResult res;
    json &report = res.report;
    report["config"] = to_json(c);
    const std::filesystem::path dir(c.output);
    std::filesystem::create_directories(dir);
    write_json(dir / "manifest.json", manifest(c));
    auto log = [&](const std::string &m) {
        if (!quiet) std::cerr << m << '\n';
    };
    auto finish = [&](Exit code, const std::string &stage, const std::string &message) {
        res.code = code;
        res.stage = stage;
        res.message = message;
        report["status"] = {{"code", static_cast<int>(code)}, {"stage", stage}, {"message", message}};
        write_json(dir / "report.json", report);
        if (!stage.empty()) log("[" + stage + "] " + message);
        return res;
    };

    Itinerary itin;
    try {
        log("compile");
        itin = compile_itinerary(c.path, c.p, c.itinerary());
        report["itinerary"] = itinerary_json(itin);
        if (!report["itinerary"]["validation"]["pass"].get<bool>())
            return finish(Exit::config, "compile", "itinerary violates its construction rules");
    } catch (const std::exception &e) {
        return finish(Exit::config, "compile", e.what());
    }

    const CouplingParams cp = c.coupling();
    BrokenGeodesic bg;
    try {
        log("minimize");
        MinimizeOptions mo = c.minimize;
        mo.initial = initial_guess(itin, c);
        bg = minimize(itin, cp, mo);
        report["minimize"] = minimize_json(bg);
    } catch (const std::exception &e) {
        return finish(Exit::solver, "minimize", e.what());
    }

    try {
        log("certify");
        report["certification"] = certify_interior(bg, cp, c.certify);
    } catch (const std::exception &e) {
        return finish(Exit::solver, "certify", e.what());
    }
    const bool certified =
        bg.converged && !bg.boundary_contact && report["certification"]["pass"].get<bool>();
    if (!certified)
        return finish(Exit::certification, "certify",
                      bg.converged ? "interior minimum not certified" : "minimization did not converge");

    ReplayReport rep;
    try {
        log("replay");
        rep = replay(bg, itin, cp, c.replay);
        report["replay"] = to_json(rep, c.eps);
        write_csvs(dir, rep);
    } catch (const std::exception &e) {
        return finish(Exit::solver, "replay", e.what());
    }
    if (!rep.pass) return finish(Exit::replay, "replay", rep.failures.front());
    return finish(Exit::ok, "", "");
}

} // namespace pendula
