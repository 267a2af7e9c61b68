// Symbolic paths on Z (sites mod p) compiled into sections and translation
// vectors.
//
// A path edge s -> s +- 1 names a transfer pair. With sites labelled
// site(s) = (s - 1) mod p, the edge s -> s+1 has active pair
// {site(s), site(s+1)} and facilitator site(s+2); the edge s -> s-1 has
// active pair {site(s-1), site(s)} and facilitator site(s-2). All other sites
// sleep near the upright position.
//
// A section is {x_f = c_f, (x_a - c_a)^2 + (x_b - c_b)^2 <= rho_v^2,
// |x_s - c_s| <= rho_h for sleepers s}. Translation vectors are stored in
// units of 2 pi.

#pragma once

#include <json.hpp>

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace pendula {

enum class Role { active, facilitator, sleeper };

struct Section {
    std::vector<double> center;
    std::size_t facilitator = 0;
    std::array<std::size_t, 2> active_pair{0, 1};
    std::vector<std::size_t> sleepers;
    double rho_v = 0;
    double rho_h = 0;

    std::size_t size() const { return center.size(); }
    Role role(std::size_t site) const;
    /// Free coordinates in order: active pair, then sleepers.
    std::vector<std::size_t> free_sites() const;
    /// Configuration from free-coordinate offsets relative to the centre.
    std::vector<double> point(const std::vector<double> &local) const;
    std::vector<double> local(const std::vector<double> &x) const;
    /// Signed distance to the boundary in local coordinates (positive inside),
    /// min(rho_v - |active offset|, rho_h - |sleeper offset|).
    double margin(const std::vector<double> &local) const;
};

/// Roles for a path edge `from -> to` on p sites.
struct Roles {
    std::size_t facilitator = 0;
    std::array<std::size_t, 2> active_pair{0, 1};
    std::vector<std::size_t> sleepers;

    Role role(std::size_t site) const;
};

Roles roles_for_edge(long from, long to, std::size_t p);

struct SectionParams {
    double eps = 0.05;
    double rho_v = -1; ///< negative selects sqrt(eps)
    double rho_h = -1; ///< negative selects sqrt(eps)
};

/// Section centred at `center` (residues are checked) with the edge's roles.
Section section_for(long from, long to, const std::vector<double> &center, const SectionParams &params = {});

/// Section of the edge with the canonical centre (0 on active and
/// facilitator sites, pi on sleepers).
Section section_for(long from, long to, std::size_t p, const SectionParams &params = {});

enum class FormKind { in_string, junction };

/// Shape of a translation vector: fixed entries plus free integer entries.
struct TranslationForm {
    std::vector<double> fixed;          ///< entry value where not free
    std::vector<std::size_t> free_sites; ///< integer-valued entries to search
};

/// (m, n) on the active pair, 1 on the facilitator, 0 on sleepers.
TranslationForm in_string_form(const Roles &r, std::size_t p);

/// Between strings with roles `a` then `b`: free integers on sites active in
/// both; 1/2 where the centre residue changes between 0 and pi; 1 on sites
/// that are active or facilitating on both sides; 0 on sleepers of both.
TranslationForm junction_form(const Roles &a, const Roles &b, std::size_t p);

class InfeasibleError : public std::runtime_error {
public:
    InfeasibleError(const std::string &what, double best_angle, long index = -1)
        : std::runtime_error(what), best_angle(best_angle), index(index) {}
    double best_angle;
    long index;
};

/// Integer-completed vector of the given form with nonzero free entries and
/// |n| >= L_min closest in
/// direction to prev_dir (|n/|n| - prev_dir| minimal, then lexicographically
/// smallest free entries). Search box: |free entry| <= 4 L_min. Throws
/// InfeasibleError when the best distance exceeds theta_max.
std::vector<double> pick_translation(const std::vector<double> &prev_dir, const TranslationForm &form,
                                     double L_min, double theta_max);

/// Same with the form of the edge 1 -> 2 (in-string) or of the junction
/// 1 -> 2 -> 3, on p = prev_dir.size() sites.
std::vector<double> pick_translation(const std::vector<double> &prev_dir, FormKind kind, double L_min,
                                     double theta_max);

struct ItineraryParams {
    double eps = 0.05;
    int r = 3;
    std::size_t N_per_string = 3; ///< in-string translations per string
    double L_min = 10;
    double theta_max = 0.6;
    /// Turn each string from the giver's axis to the receiver's; when false
    /// every string keeps the direction it starts with.
    bool steer = true;
    SectionParams section; ///< eps inside is overwritten by `eps`
};

/// Asymptotic thresholds eps^{-2r-4} and eps^{2r+4}.
double asymptotic_L_min(double eps, int r);
double asymptotic_theta_max(double eps, int r);

struct Translation {
    std::vector<double> n; ///< units of 2 pi
    bool junction = false;
};

struct Itinerary {
    std::size_t p = 0;
    std::vector<long> path;
    std::vector<Section> sections;
    std::vector<Translation> translations; ///< translations[k]: sections[k] -> sections[k+1]
    std::vector<std::size_t> string_boundaries; ///< indices of junction translations
    std::vector<std::size_t> string_of_section;
    std::vector<std::pair<long, long>> edges;   ///< path edge of each string
    double L_min = 0;
    double theta_max = 0;
};

/// Each path edge becomes a string of N_per_string + 1 sections; strings are
/// joined by junction translations. With `steer`, in-string directions
/// follow a great circle from the incoming direction towards the next
/// junction direction; consecutive unit vectors must stay within theta_max. Throws DomainError for
/// non-unit steps and InfeasibleError (with the failing translation index).
Itinerary compile_itinerary(const std::vector<long> &path, std::size_t p, const ItineraryParams &params);

/// Machine-readable check of the section, form, spacing and turning rules.
nlohmann::json validate_itinerary(const Itinerary &itin);

} // namespace pendula
