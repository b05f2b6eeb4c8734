#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "audit/psl.hpp"
#include "audit/url.hpp"
#include "audit/util.hpp"

namespace audit {

using ojson = nlohmann::ordered_json;

enum class HttpKind { request, response, redirect };
enum class CookieSource { script, header };
enum class Lean { left, right, none };

inline const char* to_string(HttpKind k) {
    switch (k) {
        case HttpKind::request: return "request";
        case HttpKind::response: return "response";
        case HttpKind::redirect: return "redirect";
    }
    return "?";
}
inline const char* to_string(CookieSource s) {
    return s == CookieSource::script ? "script" : "header";
}
inline const char* to_string(Lean l) {
    switch (l) {
        case Lean::left: return "left";
        case Lean::right: return "right";
        case Lean::none: return "none";
    }
    return "?";
}

inline std::optional<HttpKind> http_kind_from(std::string_view s) {
    if (s == "request") return HttpKind::request;
    if (s == "response") return HttpKind::response;
    if (s == "redirect") return HttpKind::redirect;
    return std::nullopt;
}
inline std::optional<CookieSource> cookie_source_from(std::string_view s) {
    if (s == "script") return CookieSource::script;
    if (s == "header") return CookieSource::header;
    return std::nullopt;
}
inline std::optional<Lean> lean_from(std::string_view s) {
    if (s == "left") return Lean::left;
    if (s == "right") return Lean::right;
    if (s == "none") return Lean::none;
    return std::nullopt;
}

// One logged request/response/redirect.
struct HttpEvent {
    HttpKind kind = HttpKind::request;
    std::string url;
    std::optional<std::string> referrer;
    std::optional<std::string> location; // redirect target; required when kind == redirect
    std::vector<std::pair<std::string, std::string>> headers;
    std::string visit_id;
    std::string site; // registrable domain of the visited first party
    std::int64_t timestamp_ms = 0;

    bool operator==(const HttpEvent&) const = default;
};

// One cookie observation. Duplicate (owner, name, value) triples across
// visits are distinct observations and are kept.
struct CookieRecord {
    std::string owner; // registrable domain that set the cookie
    std::string name;
    std::string value;
    CookieSource source = CookieSource::script;
    std::string visit_id;
    std::string site;
    std::int64_t timestamp_ms = 0;

    bool operator==(const CookieRecord&) const = default;
};

struct CrawlLog {
    std::string persona_label;
    Lean lean = Lean::none;
    int run_index = 1;
    std::vector<HttpEvent> events;
    std::vector<CookieRecord> cookies;

    bool operator==(const CrawlLog&) const = default;

    std::set<std::string> sites() const {
        std::set<std::string> out;
        for (const auto& e : events) out.insert(e.site);
        for (const auto& c : cookies) out.insert(c.site);
        return out;
    }
};

struct ParseIssue {
    std::size_t line_no = 0;
    std::string reason;
};

struct ParseResult {
    CrawlLog log;
    std::vector<ParseIssue> issues;  // malformed lines, skipped
    std::vector<std::string> lints;  // soft invariant violations
};

// ---------------------------------------------------------------------------
// Canonical serialization: one JSON record per line, fixed key order, no
// whitespace. Optional fields are omitted entirely. Parsing any well-formed
// log and serializing it again reproduces the canonical bytes.
// ---------------------------------------------------------------------------

inline constexpr int kLogFormatVersion = 1;

inline ojson to_json(const HttpEvent& e) {
    ojson j;
    j["record_type"] = "http";
    j["kind"] = to_string(e.kind);
    j["url"] = e.url;
    if (e.referrer) j["referrer"] = *e.referrer;
    if (e.location) j["location"] = *e.location;
    ojson headers = ojson::array();
    for (const auto& [n, v] : e.headers) headers.push_back(ojson::array({n, v}));
    j["headers"] = std::move(headers);
    j["visit_id"] = e.visit_id;
    j["site"] = e.site;
    j["timestamp"] = e.timestamp_ms;
    return j;
}

inline ojson to_json(const CookieRecord& c) {
    ojson j;
    j["record_type"] = "cookie";
    j["owner"] = c.owner;
    j["name"] = c.name;
    j["value"] = c.value;
    j["source"] = to_string(c.source);
    j["visit_id"] = c.visit_id;
    j["site"] = c.site;
    j["timestamp"] = c.timestamp_ms;
    return j;
}

inline std::string serialize_crawl_log(const CrawlLog& log) {
    std::string out;
    ojson meta;
    meta["record_type"] = "meta";
    meta["format_version"] = kLogFormatVersion;
    meta["persona_label"] = log.persona_label;
    meta["lean"] = to_string(log.lean);
    meta["run_index"] = log.run_index;
    out += meta.dump();
    out += '\n';

    // Records are interleaved by timestamp to preserve event order; ties keep
    // events before cookies, then original ordering.
    std::size_t ei = 0, ci = 0;
    while (ei < log.events.size() || ci < log.cookies.size()) {
        bool take_event;
        if (ei == log.events.size())
            take_event = false;
        else if (ci == log.cookies.size())
            take_event = true;
        else
            take_event = log.events[ei].timestamp_ms <= log.cookies[ci].timestamp_ms;
        if (take_event) {
            out += to_json(log.events[ei++]).dump();
        } else {
            out += to_json(log.cookies[ci++]).dump();
        }
        out += '\n';
    }
    return out;
}

namespace detail {

inline std::optional<std::string> opt_string(const ojson& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw AuditError(std::string("field not a string: ") + key);
    return it->get<std::string>();
}

inline std::string req_string(const ojson& j, const char* key) {
    auto v = opt_string(j, key);
    if (!v) throw AuditError(std::string("missing field: ") + key);
    return *v;
}

inline std::int64_t req_int(const ojson& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_number_integer())
        throw AuditError(std::string("missing integer field: ") + key);
    return it->get<std::int64_t>();
}

} // namespace detail

inline HttpEvent http_event_from_json(const ojson& j) {
    HttpEvent e;
    auto kind = http_kind_from(detail::req_string(j, "kind"));
    if (!kind) throw AuditError("bad http kind");
    e.kind = *kind;
    e.url = detail::req_string(j, "url");
    if (!is_absolute_url(e.url)) throw AuditError("url not absolute: " + e.url);
    e.referrer = detail::opt_string(j, "referrer");
    e.location = detail::opt_string(j, "location");
    if (e.kind == HttpKind::redirect && !e.location)
        throw AuditError("redirect without location");
    if (auto it = j.find("headers"); it != j.end()) {
        if (!it->is_array()) throw AuditError("headers not an array");
        for (const auto& h : *it) {
            if (!h.is_array() || h.size() != 2) throw AuditError("bad header pair");
            e.headers.emplace_back(h[0].get<std::string>(), h[1].get<std::string>());
        }
    }
    e.visit_id = detail::req_string(j, "visit_id");
    if (e.visit_id.empty()) throw AuditError("empty visit_id");
    e.site = detail::req_string(j, "site");
    e.timestamp_ms = detail::req_int(j, "timestamp");
    return e;
}

inline CookieRecord cookie_from_json(const ojson& j) {
    CookieRecord c;
    c.owner = detail::req_string(j, "owner");
    c.name = detail::req_string(j, "name");
    c.value = detail::req_string(j, "value"); // may be empty
    auto src = cookie_source_from(detail::req_string(j, "source"));
    if (!src) throw AuditError("bad cookie source");
    c.source = *src;
    c.visit_id = detail::req_string(j, "visit_id");
    if (c.visit_id.empty()) throw AuditError("empty visit_id");
    c.site = detail::req_string(j, "site");
    c.timestamp_ms = detail::req_int(j, "timestamp");
    return c;
}

// Parses canonical line-delimited records. Malformed lines go to the issue
// ledger; more than 10% malformed is a parse failure.
inline ParseResult parse_crawl_log(std::istream& in) {
    ParseResult res;
    std::string line;
    std::size_t line_no = 0;
    std::size_t considered = 0;
    bool saw_meta = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        ++considered;
        try {
            ojson j = ojson::parse(line);
            std::string rt = detail::req_string(j, "record_type");
            if (rt == "meta") {
                res.log.persona_label = detail::req_string(j, "persona_label");
                auto lean = lean_from(detail::req_string(j, "lean"));
                if (!lean) throw AuditError("bad lean");
                res.log.lean = *lean;
                res.log.run_index = static_cast<int>(detail::req_int(j, "run_index"));
                saw_meta = true;
            } else if (rt == "http") {
                res.log.events.push_back(http_event_from_json(j));
            } else if (rt == "cookie") {
                res.log.cookies.push_back(cookie_from_json(j));
            } else {
                throw AuditError("unknown record_type: " + rt);
            }
        } catch (const std::exception& ex) {
            res.issues.push_back({line_no, ex.what()});
        }
    }
    if (considered > 0 && res.issues.size() * 10 > considered)
        throw AuditError("parse failure: >10% malformed lines (" +
                         std::to_string(res.issues.size()) + "/" + std::to_string(considered) + ")");

    if (!saw_meta && considered > 0)
        res.lints.push_back("log has no meta record");
    const bool is_baseline = res.log.persona_label == "baseline" || res.log.persona_label.empty();
    const int max_runs = is_baseline ? 2 : 5;
    if (res.log.run_index < 1 || res.log.run_index > max_runs)
        res.lints.push_back("run_index " + std::to_string(res.log.run_index) +
                            " outside expected range [1," + std::to_string(max_runs) + "]");
    // Sites should be consistent per visit.
    std::map<std::string, std::string> visit_site;
    auto check_visit = [&](const std::string& vid, const std::string& site) {
        auto [it, inserted] = visit_site.emplace(vid, site);
        if (!inserted && it->second != site)
            res.lints.push_back("visit " + vid + " references multiple sites");
    };
    for (const auto& e : res.log.events) check_visit(e.visit_id, e.site);
    for (const auto& c : res.log.cookies) check_visit(c.visit_id, c.site);
    return res;
}

inline ParseResult parse_crawl_log(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse_crawl_log(in);
}

inline ParseResult load_crawl_log(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw AuditError("cannot open log: " + path);
    return parse_crawl_log(in);
}

// Number of cookie observations attributed to visits of `site`. Throws when
// the site does not appear in the log at all (distinct from a zero count).
// With distinct=true, duplicate (owner, name) pairs per site count once.
inline std::size_t cookie_count(const CrawlLog& log, std::string_view site, bool distinct = false) {
    bool seen = false;
    std::size_t n = 0;
    std::set<std::pair<std::string, std::string>> dedup;
    for (const auto& e : log.events)
        if (e.site == site) seen = true;
    for (const auto& c : log.cookies) {
        if (c.site != site) continue;
        seen = true;
        if (distinct) {
            if (dedup.emplace(c.owner, c.name).second) ++n;
        } else {
            ++n;
        }
    }
    if (!seen) throw AuditError("cookie_count: site not present in log: " + std::string(site));
    return n;
}

// A set of crawl logs plus lookup helpers shared by the analysis modules.
struct CrawlSet {
    std::vector<CrawlLog> logs;

    std::set<std::string> sites(Lean lean) const {
        std::set<std::string> out;
        for (const auto& log : logs) {
            if (log.lean != lean) continue;
            auto s = log.sites();
            out.insert(s.begin(), s.end());
        }
        return out;
    }

    std::set<std::string> all_sites() const {
        std::set<std::string> out;
        for (const auto& log : logs) {
            auto s = log.sites();
            out.insert(s.begin(), s.end());
        }
        return out;
    }

    std::set<std::string> persona_labels() const {
        std::set<std::string> out;
        for (const auto& log : logs) out.insert(log.persona_label);
        return out;
    }

    // Third-party cookie owners observed on sites of a lean.
    std::set<std::string> third_party_domains(Lean lean) const {
        std::set<std::string> out;
        for (const auto& log : logs) {
            if (log.lean != lean) continue;
            for (const auto& c : log.cookies)
                if (c.owner != c.site) out.insert(c.owner);
        }
        return out;
    }
};

} // namespace audit
