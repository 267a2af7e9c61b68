#include "pendula/itinerary.hpp"

#include "pendula/pendulum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pendula {

namespace {

std::size_t site_of(long s, std::size_t p) {
    const long m = static_cast<long>(p);
    return static_cast<std::size_t>((((s - 1) % m) + m) % m);
}

// Distance from x - base to the nearest multiple of 2 pi.
double residue(double x, double base) {
    const double d = x - base;
    return std::abs(d - kTwoPi * std::round(d / kTwoPi));
}

double norm(const std::vector<double> &v) {
    return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

std::vector<double> unit(const std::vector<double> &v) {
    std::vector<double> u(v);
    const double n = norm(v);
    for (double &x : u) x /= n;
    return u;
}

double distance(const std::vector<double> &a, const std::vector<double> &b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

std::vector<double> slerp(const std::vector<double> &a, const std::vector<double> &b, double t) {
    const double c = std::clamp(std::inner_product(a.begin(), a.end(), b.begin(), 0.0), -1.0, 1.0);
    const double w = std::acos(c);
    if (w < 1e-12) return a;
    const double sa = std::sin((1 - t) * w) / std::sin(w), sb = std::sin(t * w) / std::sin(w);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = sa * a[i] + sb * b[i];
    return unit(out);
}

struct Pick {
    std::vector<double> n;
    double dist = std::numeric_limits<double>::infinity();
};

Pick best_translation(const std::vector<double> &dir, const TranslationForm &form, double L_min) {
    const std::size_t p = form.fixed.size();
    if (dir.size() != p) throw DomainError("direction and form dimensions differ");
    if (!(L_min > 0)) throw DomainError("L_min must be positive");
    const auto u = unit(dir);
    const long B = static_cast<long>(std::ceil(4 * L_min));
    const std::size_t k = form.free_sites.size();
    Pick best;
    std::vector<double> n(form.fixed);
    std::vector<long> idx(k, -B);
    std::vector<long> best_idx;
    const double L2 = L_min * L_min;
    while (true) {
        for (std::size_t j = 0; j < k; ++j) n[form.free_sites[j]] = static_cast<double>(idx[j]);
        const double n2 = std::inner_product(n.begin(), n.end(), n.begin(), 0.0);
        // A free site starts and ends at the bottom, so it must wind.
        const bool winds = std::find(idx.begin(), idx.end(), 0L) == idx.end();
        if (winds && n2 >= L2) {
            const double len = std::sqrt(n2);
            double d2 = 0;
            for (std::size_t i = 0; i < p; ++i) d2 += (n[i] / len - u[i]) * (n[i] / len - u[i]);
            const double d = std::sqrt(d2);
            // Candidates are visited in lexicographic order; ties keep the first.
            if (d < best.dist - 1e-14) {
                best.dist = d;
                best.n = n;
            }
        }
        std::size_t j = k;
        while (j > 0 && idx[j - 1] == B) idx[--j] = -B;
        if (j == 0) break;
        ++idx[j - 1];
    }
    if (best.n.empty()) throw InfeasibleError("no vector of the form reaches L_min", best.dist);
    return best;
}

std::vector<double> nominal_direction(const TranslationForm &form, double L_min) {
    std::vector<double> n(form.fixed);
    const double fixed2 = std::inner_product(n.begin(), n.end(), n.begin(), 0.0);
    if (!form.free_sites.empty()) {
        const double c =
            std::sqrt(std::max(L_min * L_min - fixed2, 1.0) / static_cast<double>(form.free_sites.size()));
        for (std::size_t s : form.free_sites) n[s] = c;
    }
    return unit(n);
}

} // namespace

Role Roles::role(std::size_t site) const {
    if (site == facilitator) return Role::facilitator;
    if (site == active_pair[0] || site == active_pair[1]) return Role::active;
    return Role::sleeper;
}

Role Section::role(std::size_t site) const {
    if (site == facilitator) return Role::facilitator;
    if (site == active_pair[0] || site == active_pair[1]) return Role::active;
    return Role::sleeper;
}

std::vector<std::size_t> Section::free_sites() const {
    std::vector<std::size_t> f{active_pair[0], active_pair[1]};
    f.insert(f.end(), sleepers.begin(), sleepers.end());
    return f;
}

std::vector<double> Section::point(const std::vector<double> &local) const {
    const auto f = free_sites();
    if (local.size() != f.size()) throw DomainError("local coordinates have the wrong size");
    std::vector<double> x(center);
    for (std::size_t j = 0; j < f.size(); ++j) x[f[j]] += local[j];
    return x;
}

std::vector<double> Section::local(const std::vector<double> &x) const {
    const auto f = free_sites();
    std::vector<double> l(f.size());
    for (std::size_t j = 0; j < f.size(); ++j) l[j] = x[f[j]] - center[f[j]];
    return l;
}

double Section::margin(const std::vector<double> &local) const {
    double m = rho_v - std::hypot(local[0], local[1]);
    for (std::size_t j = 2; j < local.size(); ++j) m = std::min(m, rho_h - std::abs(local[j]));
    return m;
}

Roles roles_for_edge(long from, long to, std::size_t p) {
    if (p < 3) throw DomainError("at least three sites are required");
    if (std::abs(to - from) != 1) throw DomainError("path edges must be unit steps");
    Roles r;
    if (to == from + 1) {
        r.active_pair = {site_of(from, p), site_of(to, p)};
        r.facilitator = site_of(from + 2, p);
    } else {
        r.active_pair = {site_of(to, p), site_of(from, p)};
        r.facilitator = site_of(from - 2, p);
    }
    for (std::size_t s = 0; s < p; ++s)
        if (r.role(s) == Role::sleeper) r.sleepers.push_back(s);
    return r;
}

Section section_for(long from, long to, const std::vector<double> &center, const SectionParams &params) {
    const std::size_t p = center.size();
    const Roles r = roles_for_edge(from, to, p);
    if (!(params.eps > 0)) throw DomainError("eps must be positive");
    Section s;
    s.center = center;
    s.facilitator = r.facilitator;
    s.active_pair = r.active_pair;
    s.sleepers = r.sleepers;
    s.rho_v = params.rho_v < 0 ? std::sqrt(params.eps) : params.rho_v;
    s.rho_h = params.rho_h < 0 ? std::sqrt(params.eps) : params.rho_h;
    for (std::size_t i = 0; i < p; ++i) {
        const double base = r.role(i) == Role::sleeper ? kPi : 0.0;
        if (residue(center[i], base) > 1e-9) throw DomainError("section centre has the wrong residue");
    }
    return s;
}

Section section_for(long from, long to, std::size_t p, const SectionParams &params) {
    const Roles r = roles_for_edge(from, to, p);
    std::vector<double> c(p, 0.0);
    for (std::size_t s : r.sleepers) c[s] = kPi;
    return section_for(from, to, c, params);
}

TranslationForm in_string_form(const Roles &r, std::size_t p) {
    TranslationForm f;
    f.fixed.assign(p, 0.0);
    f.fixed[r.facilitator] = 1;
    f.free_sites = {std::min(r.active_pair[0], r.active_pair[1]), std::max(r.active_pair[0], r.active_pair[1])};
    return f;
}

TranslationForm junction_form(const Roles &a, const Roles &b, std::size_t p) {
    TranslationForm f;
    f.fixed.assign(p, 0.0);
    for (std::size_t s = 0; s < p; ++s) {
        const Role ra = a.role(s), rb = b.role(s);
        if (ra == Role::active && rb == Role::active) {
            f.free_sites.push_back(s);
        } else if (ra == Role::sleeper && rb == Role::sleeper) {
            f.fixed[s] = 0;
        } else if ((ra == Role::sleeper) != (rb == Role::sleeper)) {
            f.fixed[s] = 0.5;
        } else {
            f.fixed[s] = 1;
        }
    }
    return f;
}

std::vector<double> pick_translation(const std::vector<double> &prev_dir, const TranslationForm &form,
                                     double L_min, double theta_max) {
    if (!(theta_max > 0)) throw DomainError("theta_max must be positive");
    if (!(norm(prev_dir) > 0)) throw DomainError("previous direction must be nonzero");
    const Pick best = best_translation(prev_dir, form, L_min);
    if (best.dist > theta_max)
        throw InfeasibleError("no vector within theta_max (best " + std::to_string(best.dist) + ")", best.dist);
    return best.n;
}

std::vector<double> pick_translation(const std::vector<double> &prev_dir, FormKind kind, double L_min,
                                     double theta_max) {
    const std::size_t p = prev_dir.size();
    const Roles a = roles_for_edge(1, 2, p);
    const TranslationForm form = kind == FormKind::in_string ? in_string_form(a, p)
                                                             : junction_form(a, roles_for_edge(2, 3, p), p);
    return pick_translation(prev_dir, form, L_min, theta_max);
}

double asymptotic_L_min(double eps, int r) { return std::pow(eps, -2.0 * r - 4); }
double asymptotic_theta_max(double eps, int r) { return std::pow(eps, 2.0 * r + 4); }

Itinerary compile_itinerary(const std::vector<long> &path, std::size_t p, const ItineraryParams &params) {
    if (!(params.L_min > 0) || !(params.theta_max > 0)) throw DomainError("thresholds must be positive");
    if (params.N_per_string < 1) throw DomainError("strings need at least one translation");
    for (std::size_t j = 1; j < path.size(); ++j)
        if (std::abs(path[j] - path[j - 1]) != 1) throw DomainError("path edges must be unit steps");
    Itinerary it;
    it.p = p;
    it.path = path;
    it.L_min = params.L_min;
    it.theta_max = params.theta_max;
    if (path.size() < 2) return it;

    SectionParams sp = params.section;
    sp.eps = params.eps;
    const std::size_t K = path.size() - 1, N = params.N_per_string;
    std::vector<Roles> roles;
    for (std::size_t j = 0; j < K; ++j) {
        roles.push_back(roles_for_edge(path[j], path[j + 1], p));
        it.edges.emplace_back(path[j], path[j + 1]);
    }

    it.sections.push_back(section_for(path[0], path[1], p, sp));
    it.string_of_section.push_back(0);
    auto advance = [&](const std::vector<double> &n, bool junction, std::size_t j) {
        const auto &prev = it.sections.back();
        std::vector<double> c(prev.center);
        for (std::size_t i = 0; i < p; ++i) c[i] += kTwoPi * n[i];
        it.sections.push_back(section_for(path[j], path[j + 1], c, sp));
        it.string_of_section.push_back(j);
        if (!it.translations.empty()) {
            const double turn = distance(unit(it.translations.back().n), unit(n));
            if (turn > params.theta_max)
                throw InfeasibleError("turn " + std::to_string(turn) + " exceeds theta_max at translation " +
                                          std::to_string(it.translations.size()),
                                      turn, static_cast<long>(it.translations.size()));
        }
        if (junction) it.string_boundaries.push_back(it.translations.size());
        it.translations.push_back({n, junction});
    };

    // A string carries the energy from site(path[j]) to site(path[j+1]): it
    // starts along the giver's axis and ends along the receiver's.
    auto carrier_direction = [&](std::size_t j, long node) {
        std::vector<double> n = in_string_form(roles[j], p).fixed;
        n[site_of(node, p)] = std::sqrt(std::max(params.L_min * params.L_min - 1, 1.0));
        return unit(n);
    };
    std::vector<double> d_start = params.steer ? carrier_direction(0, path[0])
                                               : nominal_direction(in_string_form(roles[0], p), params.L_min);
    for (std::size_t j = 0; j < K; ++j) {
        const auto form = in_string_form(roles[j], p);
        const bool last = j + 1 == K;
        auto d_end = last ? carrier_direction(j, path[j + 1])
                          : nominal_direction(junction_form(roles[j], roles[j + 1], p), params.L_min);
        if (!params.steer) d_end = d_start;
        for (std::size_t k = 0; k < N; ++k) {
            const double t = j == 0 ? double(k) / double(N) : double(k + 1) / double(N + 1);
            advance(best_translation(slerp(d_start, d_end, t), form, params.L_min).n, false, j);
        }
        if (last) break;
        const auto jf = junction_form(roles[j], roles[j + 1], p);
        const Pick jp = best_translation(unit(it.translations.back().n), jf, params.L_min);
        advance(jp.n, true, j + 1);
        d_start = unit(jp.n);
    }
    return it;
}

nlohmann::json validate_itinerary(const Itinerary &it) {
    using nlohmann::json;
    json sections = {{"rule", 1}, {"name", "sections"}, {"failures", json::array()}};
    json in_string = {{"rule", 2}, {"name", "in-string translates"}, {"failures", json::array()}};
    json junction = {{"rule", 3}, {"name", "string junctions"}, {"failures", json::array()}};
    json spacing = {{"rule", 4},          {"name", "translates far apart"}, {"L_min", it.L_min},
                    {"measured", json::array()}, {"failures", json::array()}};
    json turning = {{"rule", 5},          {"name", "gradual turns"}, {"theta_max", it.theta_max},
                    {"measured", json::array()}, {"failures", json::array()}};

    const std::size_t p = it.p;
    for (std::size_t k = 0; k < it.sections.size(); ++k) {
        const auto &s = it.sections[k];
        bool ok = s.size() == p && s.facilitator < p && s.active_pair[0] < p && s.active_pair[1] < p &&
                  s.active_pair[0] != s.active_pair[1] && s.facilitator != s.active_pair[0] &&
                  s.facilitator != s.active_pair[1] && s.sleepers.size() + 3 == p;
        if (ok) {
            for (std::size_t i = 0; i < p; ++i) {
                const double base = s.role(i) == Role::sleeper ? kPi : 0.0;
                if (residue(s.center[i], base) > 1e-9) ok = false;
            }
            for (std::size_t q : s.sleepers)
                if (s.role(q) != Role::sleeper) ok = false;
        }
        if (!(s.rho_v > 0 && s.rho_h > 0)) ok = false;
        if (!ok) sections["failures"].push_back(k);
    }

    auto matches = [&](const std::vector<double> &n, const TranslationForm &f) {
        for (std::size_t i = 0; i < p; ++i) {
            const bool is_free = std::find(f.free_sites.begin(), f.free_sites.end(), i) != f.free_sites.end();
            if (is_free ? n[i] != std::round(n[i]) : n[i] != f.fixed[i]) return false;
        }
        return true;
    };
    auto as_roles = [](const Section &s) {
        Roles r;
        r.facilitator = s.facilitator;
        r.active_pair = s.active_pair;
        r.sleepers = s.sleepers;
        return r;
    };

    for (std::size_t k = 0; k < it.translations.size(); ++k) {
        const auto &tr = it.translations[k];
        const auto &a = it.sections.at(k), &b = it.sections.at(k + 1);
        bool centers = true;
        for (std::size_t i = 0; i < p; ++i)
            if (std::abs(b.center[i] - a.center[i] - kTwoPi * tr.n[i]) > 1e-9 * (1 + std::abs(b.center[i])))
                centers = false;
        const Roles ra = as_roles(a), rb = as_roles(b);
        if (!tr.junction) {
            const bool same_roles = a.facilitator == b.facilitator && a.active_pair == b.active_pair;
            if (!(centers && same_roles && matches(tr.n, in_string_form(ra, p)))) in_string["failures"].push_back(k);
        } else {
            std::size_t wake = 0, fall = 0;
            for (std::size_t i = 0; i < p; ++i) {
                const bool sa = ra.role(i) == Role::sleeper, sb = rb.role(i) == Role::sleeper;
                if (sa && !sb) ++wake;
                if (!sa && sb) ++fall;
            }
            if (!(centers && wake == fall && wake <= 1 && matches(tr.n, junction_form(ra, rb, p))))
                junction["failures"].push_back(k);
        }
        const double len = norm(tr.n);
        spacing["measured"].push_back(len);
        if (len < it.L_min) spacing["failures"].push_back(k);
        if (k > 0) {
            const double turn = distance(unit(it.translations[k - 1].n), unit(tr.n));
            turning["measured"].push_back(turn);
            if (turn > it.theta_max) turning["failures"].push_back(k);
        }
    }

    json report = {{"rules", json::array()}};
    bool all = true;
    for (json *r : {&sections, &in_string, &junction, &spacing, &turning}) {
        (*r)["pass"] = (*r)["failures"].empty();
        all = all && (*r)["failures"].empty();
        report["rules"].push_back(*r);
    }
    report["pass"] = all;
    report["sections"] = it.sections.size();
    report["translations"] = it.translations.size();
    return report;
}

} // namespace pendula
