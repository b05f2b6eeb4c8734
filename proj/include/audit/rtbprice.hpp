#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "audit/crawl_log.hpp"
#include "audit/stats.hpp"
#include "audit/url.hpp"
#include "audit/util.hpp"

namespace audit {

// Query parameters treated as RTB charge prices. Explicit so runs are
// reproducible; the value must be a cleartext decimal to count as a price.
struct PricePatternSet {
    std::vector<std::string> params = {"price", "cpm", "wp", "winprice", "auction_price", "wprc"};
    double cpm_cap = 100.0; // sanity cap, USD CPM

    static PricePatternSet from_json(const ojson& j) {
        PricePatternSet ps;
        if (auto it = j.find("params"); it != j.end()) {
            ps.params.clear();
            for (const auto& p : *it) ps.params.push_back(to_lower(p.get<std::string>()));
        }
        if (auto it = j.find("cpm_cap"); it != j.end()) ps.cpm_cap = it->get<double>();
        if (ps.params.empty()) throw AuditError("price patterns: empty param list");
        if (ps.cpm_cap <= 0) throw AuditError("price patterns: cap must be positive");
        return ps;
    }

    static PricePatternSet load(const std::string& path) {
        return from_json(ojson::parse(read_file(path)));
    }

    bool matches_param(std::string_view name) const {
        std::string lowered = to_lower(name);
        return std::find(params.begin(), params.end(), lowered) != params.end();
    }
};

struct PriceEvent {
    std::string bidder; // registrable domain of the notified party
    double cpm = 0.0;
    std::string raw_param; // "name=value" as matched
    std::string site;
    std::string persona_label;
    Lean lean = Lean::none;
    std::string visit_id;
};

struct PriceScan {
    std::vector<PriceEvent> events;
    std::size_t opaque = 0;         // matched params with non-numeric or out-of-range values
    std::size_t macro_excluded = 0; // unsubstituted macros like ${AUCTION_PRICE}
    std::size_t matches = 0;        // deduplicated pattern matches, excluding macros
};

namespace detail {

inline bool is_plain_decimal(std::string_view s) {
    if (s.empty()) return false;
    bool dot = false, digit = false;
    for (char c : s) {
        if (c == '.') {
            if (dot) return false;
            dot = true;
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            digit = true;
        } else {
            return false;
        }
    }
    return digit;
}

inline bool is_unsubstituted_macro(std::string_view v) {
    if (v.starts_with("${") && v.ends_with("}")) return true;
    // the same macro arriving percent-encoded
    if (v.starts_with("%24%7B") || v.starts_with("%24%7b")) return true;
    return false;
}

} // namespace detail

// One PriceEvent per matched win-notification parameter with a cleartext
// numeric value in [0, cap]. Duplicate (bidder, visit_id, raw_param) triples
// are retries of the same notification and are counted once.
inline PriceScan detect_wins(const CrawlLog& log, const PricePatternSet& patterns = {}) {
    const auto& psl = PublicSuffixList::bundled();
    PriceScan scan;
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    for (const auto& ev : log.events) {
        if (ev.kind == HttpKind::response) continue;
        auto url = parse_url(ev.url);
        if (!url) continue;
        auto bidder = psl.try_registrable_domain(url->host);
        if (!bidder) continue;
        for (const auto& [name, value] : query_pairs(url->query)) {
            if (!patterns.matches_param(name)) continue;
            if (detail::is_unsubstituted_macro(value)) {
                ++scan.macro_excluded;
                continue;
            }
            std::string raw = name + "=" + value;
            if (!seen.emplace(*bidder, ev.visit_id, raw).second) continue;
            ++scan.matches;
            double cpm = 0.0;
            if (!detail::is_plain_decimal(value) || !parse_double(value, cpm) || cpm < 0.0 ||
                cpm > patterns.cpm_cap) {
                ++scan.opaque;
                continue;
            }
            PriceEvent pe;
            pe.bidder = *bidder;
            pe.cpm = cpm;
            pe.raw_param = std::move(raw);
            pe.site = ev.site;
            pe.persona_label = log.persona_label;
            pe.lean = log.lean;
            pe.visit_id = ev.visit_id;
            scan.events.push_back(std::move(pe));
        }
    }
    return scan;
}

struct PriceSummaryEntry {
    std::string key; // lean ("left"/"right") or persona label
    std::size_t n = 0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    EmpiricalDistribution dist;
};

struct PriceSummary {
    std::vector<PriceSummaryEntry> per_lean;
    std::vector<PriceSummaryEntry> per_persona;
    // Q3(right)/Q3(left); absent unless both leans have >= 2 samples.
    std::optional<double> top_quartile_ratio;
};

inline PriceSummary price_summary(const std::vector<PriceEvent>& events) {
    std::map<std::string, std::vector<double>> by_lean, by_persona;
    for (const auto& e : events) {
        if (e.lean != Lean::none) by_lean[to_string(e.lean)].push_back(e.cpm);
        by_persona[e.persona_label].push_back(e.cpm);
    }
    auto summarize = [](const std::string& key, std::vector<double> xs) {
        PriceSummaryEntry s;
        s.key = key;
        s.n = xs.size();
        s.dist = EmpiricalDistribution::from(std::move(xs));
        s.median = s.dist.median();
        s.q1 = s.dist.quantile(0.25);
        s.q3 = s.dist.quantile(0.75);
        return s;
    };
    PriceSummary sum;
    for (auto& [k, xs] : by_lean) sum.per_lean.push_back(summarize(k, std::move(xs)));
    for (auto& [k, xs] : by_persona) sum.per_persona.push_back(summarize(k, std::move(xs)));

    const PriceSummaryEntry* left = nullptr;
    const PriceSummaryEntry* right = nullptr;
    for (const auto& e : sum.per_lean) {
        if (e.key == "left") left = &e;
        if (e.key == "right") right = &e;
    }
    if (left && right && left->n >= 2 && right->n >= 2 && left->q3 > 0)
        sum.top_quartile_ratio = right->q3 / left->q3;
    return sum;
}

} // namespace audit
