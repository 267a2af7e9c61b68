// Run configuration, replay of a broken geodesic under the full dynamics and
// the compile -> minimize -> certify -> replay pipeline with its artifacts.

#pragma once

#include "pendula/minimizer.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pendula {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ReplayOptions {
    double tol = 1e-10;            ///< DOP853 tolerance
    double sample_dt = 1.0;        ///< energy and trajectory sampling
    double time_factor = 1.5;      ///< integrate at most this times the designed duration
    double off_carrier_multiple = 2.0; ///< off-carrier energies must stay below this * sqrt(eps)
    double drift_budget = 1e-8;    ///< allowed max |H - 1| per unit time of replay
};

struct RunConfig {
    std::size_t p = 4;
    double eps = 0.05;
    int r = 3;
    double eta_sharpness = 1.0;
    std::vector<long> path{1, 2};
    std::size_t N_per_string = 6;
    double L_min = 50;
    double theta_max = 0.6;
    bool steer = true;
    double rho_v = -1;
    double rho_h = -1;
    int step_per_unit = 1500;     ///< short-piece integration steps per unit time
    double connect_tol = 1e-10;
    MinimizeOptions minimize;     ///< `initial`, `connect` and `mode` are not configurable
    CertifyOptions certify;
    ReplayOptions replay;
    std::uint64_t seed = 0;       ///< 0: start at the section centres
    double initial_jitter = 0.2;  ///< start offsets as a fraction of the section radii
    std::string output = "out";

    CouplingParams coupling() const;
    ItineraryParams itinerary() const;
};

/// Parses a JSON config; unknown keys and invalid values raise ConfigError.
RunConfig parse_config(const nlohmann::json &j);
RunConfig load_config(const std::filesystem::path &file);
nlohmann::json to_json(const RunConfig &c);

/// Seeded start offsets inside each break section (empty when seed is 0).
std::vector<std::vector<double>> initial_guess(const Itinerary &itin, const RunConfig &c);

struct Crossing {
    std::size_t section = 0;
    bool hit = false;
    double t = 0;
    std::vector<double> energies;
    std::size_t carrier = 0;           ///< site with the largest energy
    std::optional<std::size_t> designated; ///< path site expected to carry the energy
    double margin = 0;                 ///< section margin of the crossing point (free coordinates)
    double closest = 0;                ///< missed: smallest |x_f - c_f| seen
};

struct ReplayReport {
    std::vector<Crossing> crossings;
    std::vector<double> step_times;    ///< t_{j+1} - t_j between hit sections
    double carrier_deviation = 0;      ///< max |E_carrier - 1| at designated crossings
    double off_carrier = 0;            ///< max energy of the other sites there
    double constant_measured = 0;      ///< max(carrier_deviation, off_carrier) / sqrt(eps)
    double drift = 0;                  ///< max |H - 1| over samples
    double segment_closure = 0;        ///< per-segment replay: max end-position error
    bool carriers_follow_path = false;
    bool pass = false;
    std::vector<std::string> failures;
    Trajectory trajectory;             ///< sampled states
    std::vector<double> hamiltonian;   ///< H at each sample
};

/// Integrates the lattice from p_0 with the first segment's velocity, locates
/// the crossing of each section on its facilitator coordinate and records the
/// site energies there. Designated carriers: site(path[k]) at the first
/// section of string k and site(path.back()) at the last section.
ReplayReport replay(const BrokenGeodesic &bg, const Itinerary &itin, const CouplingParams &cp,
                    const ReplayOptions &opts = {});

nlohmann::json to_json(const ReplayReport &r, double eps);

/// Exit codes of the command-line tool.
enum class Exit : int { ok = 0, config = 2, solver = 3, certification = 4, replay = 5 };

struct RunResult {
    Exit code = Exit::ok;
    std::string stage;        ///< failing stage, empty on success
    std::string message;
    nlohmann::json report;
};

/// compile -> minimize -> certify -> replay; writes report.json,
/// energies.csv, trajectory.csv and manifest.json into c.output (partial
/// artifacts on failure).
RunResult run_pipeline(const RunConfig &c, bool quiet = true);

/// Decimal with 17 significant digits.
std::string format_number(double v);

} // namespace pendula
