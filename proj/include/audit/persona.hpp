#pragma once

#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "audit/crawl_log.hpp"
#include "audit/util.hpp"

namespace audit {

enum class DemographicFeature { young, senior, woman, man };
enum class DemographicAxis { age, gender };

inline const char* to_string(DemographicFeature f) {
    switch (f) {
        case DemographicFeature::young: return "young";
        case DemographicFeature::senior: return "senior";
        case DemographicFeature::woman: return "woman";
        case DemographicFeature::man: return "man";
    }
    return "?";
}

inline std::optional<DemographicFeature> feature_from(std::string_view s) {
    if (s == "young") return DemographicFeature::young;
    if (s == "senior") return DemographicFeature::senior;
    if (s == "woman") return DemographicFeature::woman;
    if (s == "man") return DemographicFeature::man;
    return std::nullopt;
}

inline DemographicAxis axis_of(DemographicFeature f) {
    return (f == DemographicFeature::young || f == DemographicFeature::senior)
               ? DemographicAxis::age
               : DemographicAxis::gender;
}

inline char feature_initial(DemographicFeature f) {
    switch (f) {
        case DemographicFeature::young: return 'Y';
        case DemographicFeature::senior: return 'S';
        case DemographicFeature::woman: return 'W';
        case DemographicFeature::man: return 'M';
    }
    return '?';
}

// Label convention: single features use their initial; compound personas use
// age initial first ("SW" = senior woman, "YM" = young man).
inline std::string label_for(const std::set<DemographicFeature>& features) {
    if (features.empty()) return "baseline";
    std::string age, gender;
    for (auto f : features) {
        if (axis_of(f) == DemographicAxis::age) age += feature_initial(f);
        else gender += feature_initial(f);
    }
    return age + gender;
}

struct DemographicSpec {
    DemographicFeature feature = DemographicFeature::young;
    std::vector<std::string> site_list; // ordered, unique registrable domains

    static DemographicSpec from_json(const ojson& j) {
        DemographicSpec spec;
        auto f = feature_from(j.at("feature").get<std::string>());
        if (!f) throw AuditError("demographic spec: unknown feature");
        spec.feature = *f;
        for (const auto& s : j.at("sites")) spec.site_list.push_back(s.get<std::string>());
        if (spec.site_list.empty()) throw AuditError("demographic spec: empty site list");
        std::set<std::string> uniq(spec.site_list.begin(), spec.site_list.end());
        if (uniq.size() != spec.site_list.size())
            throw AuditError("demographic spec: duplicate sites");
        return spec;
    }

    static DemographicSpec load(const std::string& path) {
        return from_json(ojson::parse(read_file(path)));
    }
};

struct Persona {
    std::string label = "baseline";
    std::set<DemographicFeature> demographics;
    std::vector<CookieRecord> jar;
    std::vector<std::string> history; // sites in visit order
    bool matured = false;
    std::int64_t created_at_ms = 0;
};

inline Persona baseline_persona() { return Persona{}; }

// Distinct cookie owners that are not any visited first party.
inline std::set<std::string> distinct_third_party_owners(const std::vector<CookieRecord>& jar,
                                                         const std::vector<std::string>& history) {
    std::set<std::string> first_parties(history.begin(), history.end());
    std::set<std::string> owners;
    for (const auto& c : jar)
        if (!first_parties.count(c.owner)) owners.insert(c.owner);
    return owners;
}

inline bool maturity(const Persona& p, std::size_t threshold = 50) {
    return distinct_third_party_owners(p.jar, p.history).size() >= threshold;
}

namespace detail {

// The site a persona-building crawl log covers; building crawls visit
// exactly one site each.
inline std::string single_site_of(const CrawlLog& log) {
    auto sites = log.sites();
    if (sites.size() != 1)
        throw AuditError("build_persona: crawl log covers " + std::to_string(sites.size()) +
                         " sites, expected exactly 1");
    return *sites.begin();
}

} // namespace detail

// Stateful accumulation over the spec's site list. `crawls` is one log per
// visited site, in visit order; every listed site must be covered.
inline Persona build_persona(const DemographicSpec& spec, const std::vector<CrawlLog>& crawls,
                             std::size_t maturity_threshold = 50) {
    if (spec.site_list.empty()) throw AuditError("build_persona: empty site list");
    std::set<std::string> listed(spec.site_list.begin(), spec.site_list.end());

    Persona p;
    p.demographics = {spec.feature};
    p.label = label_for(p.demographics);
    for (const auto& log : crawls) {
        std::string site = detail::single_site_of(log);
        if (!listed.count(site))
            throw AuditError("build_persona: crawl for unlisted site: " + site);
        p.history.push_back(site);
        p.jar.insert(p.jar.end(), log.cookies.begin(), log.cookies.end());
    }
    std::set<std::string> visited(p.history.begin(), p.history.end());
    for (const auto& site : spec.site_list)
        if (!visited.count(site))
            throw AuditError("build_persona: missing crawl for site: " + site);
    p.matured = maturity(p, maturity_threshold);
    return p;
}

// Distinct third-party owner count after each visit. Third parties are
// judged against the spec's full site list, matching the final jar view.
inline std::vector<std::pair<int, std::size_t>> growth_curve(const DemographicSpec& spec,
                                                             const std::vector<CrawlLog>& crawls) {
    if (spec.site_list.empty()) throw AuditError("growth_curve: empty site list");
    std::set<std::string> first_parties(spec.site_list.begin(), spec.site_list.end());
    std::vector<std::pair<int, std::size_t>> curve;
    std::set<std::string> owners;
    int visit = 0;
    for (const auto& log : crawls) {
        std::string site = detail::single_site_of(log);
        if (!first_parties.count(site))
            throw AuditError("growth_curve: crawl for unlisted site: " + site);
        for (const auto& c : log.cookies)
            if (!first_parties.count(c.owner)) owners.insert(c.owner);
        curve.emplace_back(++visit, owners.size());
    }
    return curve;
}

// Compound persona from two single-feature personas on different axes. The
// combined history is a seeded random interleaving that preserves each
// list's internal order; the jar replays cookie observations in that order.
inline Persona merge_compound(const Persona& a, const Persona& b, std::uint64_t seed) {
    if (a.demographics.size() != 1 || b.demographics.size() != 1)
        throw AuditError("merge_compound: inputs must be 1-feature personas");
    DemographicFeature fa = *a.demographics.begin();
    DemographicFeature fb = *b.demographics.begin();
    if (axis_of(fa) == axis_of(fb))
        throw AuditError("merge_compound: features on the same axis");

    Persona p;
    p.demographics = {fa, fb};
    p.label = label_for(p.demographics);

    std::map<std::string, std::vector<CookieRecord>> by_site;
    for (const auto& c : a.jar) by_site[c.site].push_back(c);
    for (const auto& c : b.jar) by_site[c.site].push_back(c);

    std::mt19937_64 rng(seed);
    std::size_t ia = 0, ib = 0;
    while (ia < a.history.size() || ib < b.history.size()) {
        bool take_a;
        if (ia == a.history.size())
            take_a = false;
        else if (ib == b.history.size())
            take_a = true;
        else {
            std::uniform_int_distribution<std::size_t> pick(
                0, a.history.size() - ia + b.history.size() - ib - 1);
            take_a = pick(rng) < a.history.size() - ia;
        }
        const std::string& site = take_a ? a.history[ia++] : b.history[ib++];
        p.history.push_back(site);
        auto it = by_site.find(site);
        if (it != by_site.end()) {
            p.jar.insert(p.jar.end(), it->second.begin(), it->second.end());
            by_site.erase(it);
        }
    }
    p.matured = maturity(p);
    return p;
}

// Last observation per (owner, name): the cookie state a browser would hold
// after replaying the jar.
inline std::map<std::pair<std::string, std::string>, CookieRecord> latest_jar_state(
    const std::vector<CookieRecord>& jar) {
    std::map<std::pair<std::string, std::string>, CookieRecord> state;
    for (const auto& c : jar) state[{c.owner, c.name}] = c;
    return state;
}

// ---------------------------------------------------------------------------
// Archive: one JSON file per persona, stable field order so that
// save -> load -> save is byte-identical.
// ---------------------------------------------------------------------------

inline constexpr int kArchiveFormatVersion = 1;

inline std::string serialize_persona(const Persona& p) {
    ojson j;
    j["format_version"] = kArchiveFormatVersion;
    j["label"] = p.label;
    ojson feats = ojson::array();
    for (auto f : p.demographics) feats.push_back(to_string(f));
    j["demographics"] = std::move(feats);
    ojson jar = ojson::array();
    for (const auto& c : p.jar) jar.push_back(to_json(c));
    j["jar"] = std::move(jar);
    j["history"] = p.history;
    j["matured"] = p.matured;
    j["created_at"] = p.created_at_ms;
    return j.dump(2) + "\n";
}

inline Persona parse_persona(std::string_view text) {
    ojson j = ojson::parse(text);
    Persona p;
    p.label = j.at("label").get<std::string>();
    for (const auto& f : j.at("demographics")) {
        auto feat = feature_from(f.get<std::string>());
        if (!feat) throw AuditError("persona archive: unknown feature");
        p.demographics.insert(*feat);
    }
    if (p.demographics.size() > 2)
        throw AuditError("persona archive: more than 2 demographic features");
    for (const auto& c : j.at("jar")) p.jar.push_back(cookie_from_json(c));
    for (const auto& s : j.at("history")) p.history.push_back(s.get<std::string>());
    p.matured = j.at("matured").get<bool>();
    p.created_at_ms = j.at("created_at").get<std::int64_t>();
    if (p.label == "baseline" && (!p.jar.empty() || !p.history.empty()))
        throw AuditError("persona archive: baseline must have empty jar and history");
    return p;
}

inline void save_persona(const Persona& p, const std::string& path) {
    write_file(path, serialize_persona(p));
}

inline Persona load_persona(const std::string& path) { return parse_persona(read_file(path)); }

} // namespace audit
