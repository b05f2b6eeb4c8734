#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "audit/crawl_log.hpp"
#include "audit/util.hpp"

namespace audit {

enum class CookieCategory { first_party, advertising, analytics, content, social, other };

inline constexpr std::array<CookieCategory, 6> kAllCategories = {
    CookieCategory::first_party, CookieCategory::advertising, CookieCategory::analytics,
    CookieCategory::content,     CookieCategory::social,      CookieCategory::other};

inline const char* to_string(CookieCategory c) {
    switch (c) {
        case CookieCategory::first_party: return "first-party";
        case CookieCategory::advertising: return "advertising";
        case CookieCategory::analytics: return "analytics";
        case CookieCategory::content: return "content";
        case CookieCategory::social: return "social";
        case CookieCategory::other: return "other";
    }
    return "?";
}

inline std::optional<CookieCategory> category_from(std::string_view s) {
    for (auto c : kAllCategories)
        if (s == to_string(c)) return c;
    return std::nullopt;
}

// Category -> registrable-domain mapping in the style of the Disconnect
// entity lists. A domain belongs to at most one category; on conflict the
// first listed category wins and the conflict is recorded.
struct BlockList {
    std::map<std::string, CookieCategory> domain_to_category;
    std::string version;
    std::vector<std::string> conflicts;

    static BlockList from_json(const ojson& j) {
        BlockList bl;
        if (auto it = j.find("version"); it != j.end()) bl.version = it->get<std::string>();
        auto cats = j.find("categories");
        if (cats == j.end()) throw AuditError("blocklist: missing categories");
        for (auto cat : {CookieCategory::advertising, CookieCategory::analytics,
                         CookieCategory::content, CookieCategory::social}) {
            auto lst = cats->find(to_string(cat));
            if (lst == cats->end()) continue;
            for (const auto& d : *lst) {
                std::string dom = to_lower(d.get<std::string>());
                auto [it, inserted] = bl.domain_to_category.emplace(dom, cat);
                if (!inserted && it->second != cat)
                    bl.conflicts.push_back(dom + ": kept " + to_string(it->second) +
                                           ", ignored " + to_string(cat));
            }
        }
        return bl;
    }

    static BlockList load(const std::string& path) {
        return from_json(ojson::parse(read_file(path)));
    }

    std::optional<CookieCategory> lookup(std::string_view domain) const {
        auto it = domain_to_category.find(std::string(domain));
        if (it == domain_to_category.end()) return std::nullopt;
        return it->second;
    }
};

// Six-way labeling: first-party iff owner == site, else the blocklist
// category of the owner, else "other". Total on every cookie.
inline CookieCategory label_cookie(const CookieRecord& c, const BlockList& bl) {
    if (c.owner == c.site) return CookieCategory::first_party;
    if (auto cat = bl.lookup(c.owner)) return *cat;
    return CookieCategory::other;
}

struct TrackerEntry {
    int rank = 0;
    std::string domain;
    double web_prevalence = 0.0; // fraction of general-web sites, [0,1]
};

struct TrackerList {
    std::vector<TrackerEntry> entries;

    // CSV: rank,domain,web_prevalence with an optional header line.
    static TrackerList parse_csv(std::string_view text) {
        TrackerList tl;
        for (const auto& raw : split(text, '\n')) {
            auto line = trim(raw);
            if (line.empty() || line.starts_with('#')) continue;
            auto cols = split(line, ',');
            if (cols.size() < 3) throw AuditError("trackerlist: bad row: " + std::string(line));
            std::int64_t rank;
            if (!parse_i64(trim(cols[0]), rank)) {
                if (tl.entries.empty()) continue; // header
                throw AuditError("trackerlist: bad rank: " + cols[0]);
            }
            double prev;
            if (!parse_double(trim(cols[2]), prev) || prev < 0.0 || prev > 1.0)
                throw AuditError("trackerlist: bad prevalence: " + cols[2]);
            tl.entries.push_back({static_cast<int>(rank), to_lower(trim(cols[1])), prev});
        }
        for (std::size_t i = 0; i < tl.entries.size(); ++i)
            if (tl.entries[i].rank != static_cast<int>(i) + 1)
                throw AuditError("trackerlist: ranks must be contiguous from 1");
        return tl;
    }

    static TrackerList load(const std::string& path) { return parse_csv(read_file(path)); }
};

struct PrevalenceRow {
    std::string domain;
    double frac_left = 0.0;  // fraction of left sites with >=1 cookie from domain
    double frac_right = 0.0;
    std::optional<double> web_prevalence;
    std::optional<double> ratio_left;  // over/under-representation vs the general web
    std::optional<double> ratio_right;
};

struct PrevalenceReport {
    std::vector<PrevalenceRow> rows; // tracker-list domains first (rank order), then others
    // Fraction of tracker-list domains seen on the crawled sites, and the
    // reverse direction (crawled third parties that appear on the list).
    double list_match_rate = 0.0;
    double crawl_match_rate = 0.0;
};

// Site-level presence per third-party domain, split by lean. Presence, not
// counts: duplicated observations within a site do not change the fractions.
inline PrevalenceReport prevalence(const CrawlSet& crawls, const TrackerList& tl) {
    auto left_sites = crawls.sites(Lean::left);
    auto right_sites = crawls.sites(Lean::right);
    if (left_sites.empty() || right_sites.empty())
        throw AuditError("prevalence: empty lean partition");

    // domain -> set of sites where it set at least one cookie
    std::map<std::string, std::set<std::string>> left_presence, right_presence;
    for (const auto& log : crawls.logs) {
        for (const auto& c : log.cookies) {
            if (c.owner == c.site) continue;
            if (log.lean == Lean::left) left_presence[c.owner].insert(c.site);
            else if (log.lean == Lean::right) right_presence[c.owner].insert(c.site);
        }
    }

    std::set<std::string> crawl_domains;
    for (const auto& [d, _] : left_presence) crawl_domains.insert(d);
    for (const auto& [d, _] : right_presence) crawl_domains.insert(d);

    PrevalenceReport rep;
    std::set<std::string> listed;
    std::size_t listed_seen = 0;
    for (const auto& e : tl.entries) {
        listed.insert(e.domain);
        PrevalenceRow row;
        row.domain = e.domain;
        row.web_prevalence = e.web_prevalence;
        auto l = left_presence.find(e.domain);
        auto r = right_presence.find(e.domain);
        row.frac_left = l == left_presence.end()
                            ? 0.0
                            : static_cast<double>(l->second.size()) / left_sites.size();
        row.frac_right = r == right_presence.end()
                             ? 0.0
                             : static_cast<double>(r->second.size()) / right_sites.size();
        if (e.web_prevalence > 0) {
            row.ratio_left = row.frac_left / e.web_prevalence;
            row.ratio_right = row.frac_right / e.web_prevalence;
        }
        if (crawl_domains.count(e.domain)) ++listed_seen;
        rep.rows.push_back(std::move(row));
    }
    for (const auto& d : crawl_domains) {
        if (listed.count(d)) continue;
        PrevalenceRow row;
        row.domain = d;
        auto l = left_presence.find(d);
        auto r = right_presence.find(d);
        row.frac_left = l == left_presence.end()
                            ? 0.0
                            : static_cast<double>(l->second.size()) / left_sites.size();
        row.frac_right = r == right_presence.end()
                             ? 0.0
                             : static_cast<double>(r->second.size()) / right_sites.size();
        rep.rows.push_back(std::move(row));
    }

    std::size_t crawl_on_list = 0;
    for (const auto& d : crawl_domains)
        if (listed.count(d)) ++crawl_on_list;
    rep.list_match_rate =
        tl.entries.empty() ? 0.0 : static_cast<double>(listed_seen) / tl.entries.size();
    rep.crawl_match_rate =
        crawl_domains.empty() ? 0.0 : static_cast<double>(crawl_on_list) / crawl_domains.size();
    return rep;
}

// Fraction of the persona's third parties re-encountered on the visited
// sites: |persona ∩ hpw| / |persona|.
inline double overlap(const std::set<std::string>& persona_domains,
                      const std::set<std::string>& hpw_domains) {
    if (persona_domains.empty()) throw AuditError("overlap: empty persona domain set");
    std::size_t common = 0;
    for (const auto& d : persona_domains)
        if (hpw_domains.count(d)) ++common;
    return static_cast<double>(common) / static_cast<double>(persona_domains.size());
}

} // namespace audit
