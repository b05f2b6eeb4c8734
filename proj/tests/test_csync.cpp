#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "audit/csync.hpp"
#include "audit/digest.hpp"

using namespace audit;

namespace {

CookieRecord jar_cookie(const std::string& owner, const std::string& name,
                        const std::string& value) {
    CookieRecord c;
    c.owner = owner;
    c.name = name;
    c.value = value;
    c.visit_id = "v1";
    c.site = "news-site.com";
    return c;
}

HttpEvent request(const std::string& url, const std::string& site = "news-site.com") {
    HttpEvent e;
    e.kind = HttpKind::request;
    e.url = url;
    e.visit_id = "v1";
    e.site = site;
    e.timestamp_ms = 1;
    return e;
}

} // namespace

TEST_CASE("extract_ids splits on delimiters and keeps long tokens") {
    std::vector<CookieRecord> jar{jar_cookie("a.com", "uid", "uid=ABCD1234EFGH5678")};
    auto ids = extract_ids(jar, {});
    // "uid" is too short; the token yields plain + base64 variants + digests
    bool has_plain = false;
    for (const auto& id : ids)
        if (id.encoding == IdEncoding::plain && id.value == "ABCD1234EFGH5678") has_plain = true;
    CHECK(has_plain);
    std::set<IdEncoding> encs;
    for (const auto& id : ids) encs.insert(id.encoding);
    CHECK(encs.count(IdEncoding::base64));
    CHECK(encs.count(IdEncoding::md5_hex));
    CHECK(encs.count(IdEncoding::sha1_hex));
    // alnum token: url-encoded variant would equal plain, so it is omitted
    CHECK_FALSE(encs.count(IdEncoding::url_encoded));
}

TEST_CASE("extract_ids drops short values, denylist and timestamps") {
    std::vector<CookieRecord> jar{
        jar_cookie("a.com", "lang", "en-US"),
        jar_cookie("a.com", "flag", "true"),
        jar_cookie("a.com", "ts", "1541030400123"),
        jar_cookie("a.com", "deep", "locale=en-US&consent=true"),
    };
    CHECK(extract_ids(jar, {}).empty());
}

TEST_CASE("extract_ids emits url-encoded variants for symbol-bearing IDs") {
    std::vector<CookieRecord> jar{jar_cookie("a.com", "uid", "Ab3+9cD/EfG2hI4x")};
    auto ids = extract_ids(jar, {});
    bool has_url = false;
    for (const auto& id : ids)
        if (id.encoding == IdEncoding::url_encoded && id.value == "Ab3%2B9cD%2FEfG2hI4x")
            has_url = true;
    CHECK(has_url);
}

TEST_CASE("extract_ids recovers planted IDs") {
    std::mt19937_64 rng(33);
    std::vector<CookieRecord> jar;
    std::set<std::string> planted;
    auto tok = [&] {
        std::string s;
        for (int i = 0; i < 16; ++i) s += "ABCDEFGHJKLMNPQRSTUVWXYZ23456789"[rng() % 32];
        return s;
    };
    for (int i = 0; i < 100; ++i) {
        std::string id = tok();
        planted.insert(id);
        jar.push_back(jar_cookie("t" + std::to_string(i % 7) + ".com", "uid",
                                 i % 2 ? id : "sess=" + id + "|exp:1541030400123"));
    }
    auto ids = extract_ids(jar, {});
    std::set<std::string> plain;
    for (const auto& id : ids)
        if (id.encoding == IdEncoding::plain) plain.insert(id.value);
    CHECK(plain == planted);
}

TEST_CASE("detect_syncs finds IDs in query, path and referrer") {
    std::vector<CookieRecord> jar{jar_cookie("tracker-one.com", "uid", "QQWWEE1122334455")};
    CrawlLog log;
    log.persona_label = "baseline";
    log.lean = Lean::right;

    SECTION("query param") {
        log.events.push_back(
            request("https://sync.partner-two.com/match?puid=QQWWEE1122334455"));
        auto events = detect_syncs(log, jar);
        REQUIRE(events.size() == 1);
        CHECK(events[0].sender == "tracker-one.com");
        CHECK(events[0].receiver == "partner-two.com");
        CHECK(events[0].match_location == MatchLocation::query_param);
        CHECK(events[0].id.encoding == IdEncoding::plain);
    }
    SECTION("path segment") {
        log.events.push_back(request("https://rt.partner-two.com/pixel/QQWWEE1122334455/1x1"));
        auto events = detect_syncs(log, jar);
        REQUIRE(events.size() == 1);
        CHECK(events[0].match_location == MatchLocation::path_segment);
    }
    SECTION("referrer") {
        auto e = request("https://cdn.partner-two.com/img.gif");
        e.referrer = "https://news-site.com/page?u=QQWWEE1122334455";
        log.events.push_back(e);
        auto events = detect_syncs(log, jar);
        REQUIRE(events.size() == 1);
        CHECK(events[0].match_location == MatchLocation::referrer);
    }
    SECTION("digest variants") {
        log.events.push_back(request("https://sync.partner-two.com/m?h=" +
                                     md5_hex("QQWWEE1122334455")));
        auto events = detect_syncs(log, jar);
        REQUIRE(events.size() == 1);
        CHECK(events[0].id.encoding == IdEncoding::md5_hex);
    }
}

TEST_CASE("detect_syncs redirect attribution: redirector is the sender") {
    std::vector<CookieRecord> jar{jar_cookie("tracker-one.com", "uid", "QQWWEE1122334455")};
    CrawlLog log;
    HttpEvent redir;
    redir.kind = HttpKind::redirect;
    redir.url = "https://cm.edge-hop.com/r?x=1";
    redir.location = "https://sync.partner-two.com/match?puid=QQWWEE1122334455";
    redir.visit_id = "v1";
    redir.site = "news-site.com";
    redir.timestamp_ms = 2;
    log.events.push_back(redir);
    auto events = detect_syncs(log, jar);
    REQUIRE(events.size() == 1);
    CHECK(events[0].sender == "edge-hop.com"); // redirecting domain, not the cookie owner
    CHECK(events[0].receiver == "partner-two.com");
    CHECK(events[0].carrier_url == *redir.location);
}

TEST_CASE("no event when ID only flows back to its own setter") {
    std::vector<CookieRecord> jar{jar_cookie("tracker-one.com", "uid", "QQWWEE1122334455")};
    CrawlLog log;
    log.events.push_back(request("https://px.tracker-one.com/beacon?uid=QQWWEE1122334455"));
    CHECK(detect_syncs(log, jar).empty());
}

TEST_CASE("no event when the receiver is the visited first party") {
    std::vector<CookieRecord> jar{jar_cookie("tracker-one.com", "uid", "QQWWEE1122334455")};
    CrawlLog log;
    log.events.push_back(request("https://news-site.com/lander?u=QQWWEE1122334455"));
    CHECK(detect_syncs(log, jar).empty());
}

TEST_CASE("empty log and third-party-free logs yield no events") {
    std::vector<CookieRecord> jar{jar_cookie("tracker-one.com", "uid", "QQWWEE1122334455")};
    CrawlLog log;
    CHECK(detect_syncs(log, jar).empty());
    log.events.push_back(request("https://news-site.com/"));
    CHECK(detect_syncs(log, jar).empty());
}

TEST_CASE("one event per (id, sender, receiver, carrier)") {
    std::vector<CookieRecord> jar{jar_cookie("tracker-one.com", "uid", "QQWWEE1122334455")};
    CrawlLog log;
    auto e = request("https://sync.partner-two.com/match?puid=QQWWEE1122334455");
    log.events.push_back(e);
    e.timestamp_ms = 5;
    log.events.push_back(e); // repeated identical request
    auto events = detect_syncs(log, jar);
    CHECK(events.size() == 1);
}

TEST_CASE("detect_syncs is order-independent") {
    std::vector<CookieRecord> jar{jar_cookie("tracker-one.com", "uid", "QQWWEE1122334455"),
                                  jar_cookie("other-track.net", "id", "ZZXXCC9988776655")};
    CrawlLog log;
    log.events.push_back(request("https://sync.partner-two.com/match?puid=QQWWEE1122334455"));
    log.events.push_back(request("https://sync.partner-two.com/match?puid=ZZXXCC9988776655"));
    log.events.push_back(request("https://sync.third-part.com/m/QQWWEE1122334455"));
    auto a = detect_syncs(log, jar);
    std::reverse(log.events.begin(), log.events.end());
    auto b = detect_syncs(log, jar);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].carrier_url == b[i].carrier_url);
        CHECK(a[i].sender == b[i].sender);
        CHECK(a[i].id.value == b[i].id.value);
    }
}

TEST_CASE("every detected id is re-derivable from the jar (closure)") {
    std::vector<CookieRecord> jar{jar_cookie("tracker-one.com", "uid", "QQWWEE1122334455"),
                                  jar_cookie("other-track.net", "id", "sess=ZZXXCC9988776655")};
    CrawlLog log;
    log.events.push_back(request("https://sync.partner-two.com/match?a=QQWWEE1122334455"));
    log.events.push_back(
        request("https://sync.partner-two.com/m?b=" + base64_encode("ZZXXCC9988776655")));
    auto events = detect_syncs(log, jar);
    REQUIRE(events.size() == 2);
    auto ids = extract_ids(jar, {});
    for (const auto& se : events) {
        bool found = false;
        for (const auto& cand : ids)
            if (cand.value == se.id.value && cand.owner == se.id.owner) found = true;
        CHECK(found);
    }
}

TEST_CASE("fuzz: no false positives on random URLs") {
    std::mt19937_64 rng(77);
    std::vector<CookieRecord> jar;
    for (int i = 0; i < 40; ++i) {
        std::string v;
        for (int k = 0; k < 16; ++k) v += "abcdefghijklmnopqrstuvwxyz0123456789"[rng() % 36];
        jar.push_back(jar_cookie("t" + std::to_string(i) + ".com", "uid", v));
    }
    CrawlLog log;
    auto tok = [&](int n) {
        std::string s;
        for (int k = 0; k < n; ++k) s += "abcdefghijklmnopqrstuvwxyz0123456789-_"[rng() % 38];
        return s;
    };
    for (int i = 0; i < 5000; ++i) {
        std::string url = "https://" + tok(8) + ".example.com/" + tok(6) + "/" + tok(12) +
                          "?" + tok(4) + "=" + tok(14) + "&" + tok(3) + "=" + tok(20);
        log.events.push_back(request(url));
    }
    CHECK(detect_syncs(log, jar).empty());
}

TEST_CASE("sync_rate aggregates per site and per group") {
    CrawlSet crawls;
    CrawlLog l1;
    l1.persona_label = "baseline";
    l1.lean = Lean::right;
    l1.events.push_back(request("https://site-a.com/", "site-a.com"));
    l1.events.push_back(request("https://site-b.com/", "site-b.com"));
    crawls.logs.push_back(l1);

    std::vector<std::vector<SyncEvent>> per_log(1);
    SyncEvent se;
    se.site = "site-a.com";
    se.sender = "x.com";
    se.receiver = "y.com";
    for (int i = 0; i < 3; ++i) {
        se.carrier_url = "https://y.com/m?i=" + std::to_string(i);
        per_log[0].push_back(se);
    }
    auto rep = sync_rate(crawls, per_log);
    CHECK(rep.per_site["site-a.com"] == 3);
    REQUIRE(rep.groups.size() == 1);
    CHECK(rep.groups[0].events == 3);
    CHECK(rep.groups[0].site_visits == 2);
    CHECK(rep.groups[0].per_visit_mean() == 1.5);
    CHECK(rep.lean_mean(Lean::right) == 1.5);
    CHECK(rep.lean_mean(Lean::left) == 0.0);
}
