#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "audit/crawl_log.hpp"
#include "audit/digest.hpp"
#include "audit/url.hpp"
#include "audit/util.hpp"

namespace audit {

enum class IdEncoding { plain, url_encoded, base64, md5_hex, sha1_hex };

inline const char* to_string(IdEncoding e) {
    switch (e) {
        case IdEncoding::plain: return "plain";
        case IdEncoding::url_encoded: return "url-encoded";
        case IdEncoding::base64: return "base64";
        case IdEncoding::md5_hex: return "md5-hex";
        case IdEncoding::sha1_hex: return "sha1-hex";
    }
    return "?";
}

inline std::optional<IdEncoding> id_encoding_from(std::string_view s) {
    if (s == "plain") return IdEncoding::plain;
    if (s == "url-encoded") return IdEncoding::url_encoded;
    if (s == "base64") return IdEncoding::base64;
    if (s == "md5-hex") return IdEncoding::md5_hex;
    if (s == "sha1-hex") return IdEncoding::sha1_hex;
    return std::nullopt;
}

enum class MatchLocation { query_param, path_segment, referrer };

inline const char* to_string(MatchLocation m) {
    switch (m) {
        case MatchLocation::query_param: return "query-param";
        case MatchLocation::path_segment: return "path-segment";
        case MatchLocation::referrer: return "referrer";
    }
    return "?";
}

struct CandidateId {
    std::string value;       // representation under `encoding`
    std::string plain_value; // the extracted token itself
    std::string owner;       // cookie owner (the paper's D1)
    std::string cookie_name;
    IdEncoding encoding = IdEncoding::plain;
};

// Detection thresholds are explicit config: the literature the detection
// follows leaves them open, so they must be tunable and pinned per run.
struct SyncParams {
    std::size_t min_id_length = 10;
    std::string delimiters = "&=:;|,%";
    std::vector<std::string> denylist = {"true",   "false",  "null",  "undefined",
                                         "none",   "unknown", "deleted", "optout"};
    bool filter_locale_tags = true;
    bool filter_timestamps = true; // pure-digit tokens of 10..13 digits
};

namespace detail {

inline bool looks_like_locale(std::string_view t) {
    // en-US / en_us / eng-Latn style tags
    auto dash = t.find_first_of("-_");
    if (dash == std::string_view::npos) return false;
    std::string_view a = t.substr(0, dash), b = t.substr(dash + 1);
    if (a.size() < 2 || a.size() > 3 || b.size() < 2 || b.size() > 4) return false;
    auto alpha = [](std::string_view s) {
        return std::all_of(s.begin(), s.end(),
                           [](unsigned char c) { return std::isalpha(c); });
    };
    return alpha(a) && alpha(b);
}

inline bool looks_like_timestamp(std::string_view t) {
    if (t.size() < 10 || t.size() > 13) return false;
    return std::all_of(t.begin(), t.end(),
                       [](unsigned char c) { return std::isdigit(c); });
}

} // namespace detail

// Maximal substrings of cookie values after delimiter splitting, each
// expanded into its encoding variants.
inline std::vector<CandidateId> extract_ids(const std::vector<CookieRecord>& jar,
                                            const SyncParams& params = {}) {
    std::vector<CandidateId> out;
    std::set<std::tuple<std::string, std::string, std::string>> seen; // owner, name, token
    for (const auto& c : jar) {
        for (const auto& token : split_any(c.value, params.delimiters)) {
            if (token.size() < params.min_id_length) continue;
            std::string lowered = to_lower(token);
            if (std::find(params.denylist.begin(), params.denylist.end(), lowered) !=
                params.denylist.end())
                continue;
            if (params.filter_locale_tags && detail::looks_like_locale(token)) continue;
            if (params.filter_timestamps && detail::looks_like_timestamp(token)) continue;
            if (!seen.emplace(c.owner, c.name, token).second) continue;

            auto push = [&](std::string value, IdEncoding enc) {
                out.push_back({std::move(value), token, c.owner, c.name, enc});
            };
            push(token, IdEncoding::plain);
            if (std::string enc = percent_encode(token); enc != token)
                push(std::move(enc), IdEncoding::url_encoded);
            std::string b64 = base64_encode(token, /*pad=*/true);
            push(b64, IdEncoding::base64);
            if (std::string unpadded = base64_encode(token, /*pad=*/false); unpadded != b64)
                push(std::move(unpadded), IdEncoding::base64);
            push(md5_hex(token), IdEncoding::md5_hex);
            push(sha1_hex(token), IdEncoding::sha1_hex);
        }
    }
    return out;
}

// A detected cookie-ID handoff: `sender` set the ID, `receiver` saw it in
// `carrier_url` while the user was on `site`.
struct SyncEvent {
    CandidateId id;
    std::string sender;
    std::string receiver;
    std::string carrier_url;
    std::string site;
    std::string visit_id;
    MatchLocation match_location = MatchLocation::query_param;
    std::int64_t timestamp_ms = 0;
};

namespace detail {

struct CandidateIndex {
    std::unordered_map<std::string, std::vector<std::size_t>> by_value;
    const std::vector<CandidateId>* candidates = nullptr;

    explicit CandidateIndex(const std::vector<CandidateId>& cands) : candidates(&cands) {
        for (std::size_t i = 0; i < cands.size(); ++i)
            by_value[cands[i].value].push_back(i);
    }

    // Tokens are maximal runs of characters that occur in IDs and their
    // encoded forms; everything else separates tokens.
    static bool id_char(char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '/' ||
               c == '=' || c == '%' || c == '.' || c == '_' || c == '~' || c == '-';
    }

    template <typename Fn>
    void match_component(std::string_view comp, Fn&& emit) const {
        if (comp.size() < 1) return;
        if (auto it = by_value.find(std::string(comp)); it != by_value.end())
            for (auto idx : it->second) emit(idx);
        // subtokens
        std::size_t start = 0;
        for (std::size_t i = 0; i <= comp.size(); ++i) {
            if (i == comp.size() || !id_char(comp[i])) {
                if (i > start && !(start == 0 && i == comp.size())) {
                    auto it = by_value.find(std::string(comp.substr(start, i - start)));
                    if (it != by_value.end())
                        for (auto idx : it->second) emit(idx);
                }
                start = i + 1;
            }
        }
    }
};

} // namespace detail

// Scans a crawl log for jar-derived IDs piggybacked in URLs to other
// parties. Requests attribute the cookie owner as sender; redirects
// attribute the redirecting domain as sender and the Location target as
// receiver. Exactly one event is kept per (id value, sender, receiver,
// carrier_url).
inline std::vector<SyncEvent> detect_syncs(const CrawlLog& log,
                                           const std::vector<CookieRecord>& jar,
                                           const SyncParams& params = {}) {
    auto candidates = extract_ids(jar, params);
    if (candidates.empty()) return {};
    detail::CandidateIndex index(candidates);
    const auto& psl = PublicSuffixList::bundled();

    std::vector<SyncEvent> found;
    auto scan_url = [&](const std::string& carrier, const std::string& fixed_sender,
                        const std::string& receiver, MatchLocation loc_qp,
                        MatchLocation loc_path, const HttpEvent& ev) {
        auto url = parse_url(carrier);
        if (!url) return;
        auto emit = [&](std::size_t idx, MatchLocation where) {
            const auto& cand = candidates[idx];
            const std::string& sender = fixed_sender.empty() ? cand.owner : fixed_sender;
            if (sender == receiver || receiver == ev.site) return;
            SyncEvent se;
            se.id = cand;
            se.sender = sender;
            se.receiver = receiver;
            se.carrier_url = carrier;
            se.site = ev.site;
            se.visit_id = ev.visit_id;
            se.match_location = where;
            se.timestamp_ms = ev.timestamp_ms;
            found.push_back(std::move(se));
        };
        for (const auto& [_, value] : query_pairs(url->query))
            index.match_component(value, [&](std::size_t i) { emit(i, loc_qp); });
        for (const auto& seg : path_segments(url->path))
            index.match_component(seg, [&](std::size_t i) { emit(i, loc_path); });
    };

    for (const auto& ev : log.events) {
        if (ev.kind == HttpKind::request) {
            auto url = parse_url(ev.url);
            if (!url) continue;
            auto receiver = psl.try_registrable_domain(url->host);
            if (!receiver) continue;
            scan_url(ev.url, "", *receiver, MatchLocation::query_param,
                     MatchLocation::path_segment, ev);
            if (ev.referrer)
                scan_url(*ev.referrer, "", *receiver, MatchLocation::referrer,
                         MatchLocation::referrer, ev);
        } else if (ev.kind == HttpKind::redirect && ev.location) {
            auto src = parse_url(ev.url);
            auto dst = parse_url(*ev.location);
            if (!src || !dst) continue;
            auto sender = psl.try_registrable_domain(src->host);
            auto receiver = psl.try_registrable_domain(dst->host);
            if (!sender || !receiver) continue;
            scan_url(*ev.location, *sender, *receiver, MatchLocation::query_param,
                     MatchLocation::path_segment, ev);
        }
    }

    // Canonical order, then one event per (value, sender, receiver, carrier).
    std::sort(found.begin(), found.end(), [](const SyncEvent& a, const SyncEvent& b) {
        return std::tie(a.visit_id, a.timestamp_ms, a.carrier_url, a.id.value, a.sender,
                        a.receiver, a.id.cookie_name) <
               std::tie(b.visit_id, b.timestamp_ms, b.carrier_url, b.id.value, b.sender,
                        b.receiver, b.id.cookie_name);
    });
    std::vector<SyncEvent> out;
    std::set<std::tuple<std::string, std::string, std::string, std::string>> seen;
    for (auto& se : found) {
        if (seen.emplace(se.id.value, se.sender, se.receiver, se.carrier_url).second)
            out.push_back(std::move(se));
    }
    return out;
}

struct SyncRateGroup {
    std::string persona_label;
    Lean lean = Lean::none;
    std::size_t events = 0;
    std::size_t site_visits = 0;        // (log, site) pairs
    std::size_t third_party_requests = 0;
    std::vector<double> per_site_counts;

    double per_visit_mean() const {
        return site_visits ? static_cast<double>(events) / static_cast<double>(site_visits) : 0.0;
    }
    double per_tp_request() const {
        return third_party_requests
                   ? static_cast<double>(events) / static_cast<double>(third_party_requests)
                   : 0.0;
    }
};

struct SyncRateReport {
    std::map<std::string, std::size_t> per_site;
    std::vector<SyncRateGroup> groups; // one per (persona, lean) present in the crawls

    double lean_mean(Lean lean) const {
        std::size_t ev = 0, visits = 0;
        for (const auto& g : groups) {
            if (g.lean != lean) continue;
            ev += g.events;
            visits += g.site_visits;
        }
        return visits ? static_cast<double>(ev) / static_cast<double>(visits) : 0.0;
    }
};

// Per-site and per-(persona, lean) sync rates. `per_log_events` must be
// aligned with `crawls.logs`. Raw counts are reported alongside counts
// normalized by third-party request volume.
inline SyncRateReport sync_rate(const CrawlSet& crawls,
                                const std::vector<std::vector<SyncEvent>>& per_log_events) {
    if (per_log_events.size() != crawls.logs.size())
        throw AuditError("sync_rate: events not aligned with logs");
    const auto& psl = PublicSuffixList::bundled();

    SyncRateReport rep;
    std::map<std::pair<std::string, Lean>, SyncRateGroup> groups;
    for (std::size_t i = 0; i < crawls.logs.size(); ++i) {
        const auto& log = crawls.logs[i];
        auto& g = groups[{log.persona_label, log.lean}];
        g.persona_label = log.persona_label;
        g.lean = log.lean;

        std::map<std::string, std::size_t> site_counts;
        for (const auto& s : log.sites()) site_counts[s] = 0;
        for (const auto& se : per_log_events[i]) {
            ++rep.per_site[se.site];
            ++site_counts[se.site];
            ++g.events;
        }
        g.site_visits += site_counts.size();
        for (const auto& [_, n] : site_counts)
            g.per_site_counts.push_back(static_cast<double>(n));
        for (const auto& ev : log.events) {
            if (ev.kind == HttpKind::response) continue;
            auto url = parse_url(ev.url);
            if (!url) continue;
            auto dom = psl.try_registrable_domain(url->host);
            if (dom && *dom != ev.site) ++g.third_party_requests;
        }
    }
    for (auto& [_, g] : groups) rep.groups.push_back(std::move(g));
    return rep;
}

} // namespace audit
