#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "audit/crawl_log.hpp"

using namespace audit;

namespace {

CrawlLog small_log() {
    CrawlLog log;
    log.persona_label = "W";
    log.lean = Lean::right;
    log.run_index = 2;
    HttpEvent e;
    e.kind = HttpKind::request;
    e.url = "https://right-tribune-001.com/";
    e.referrer = std::nullopt;
    e.headers = {{"host", "right-tribune-001.com"}};
    e.visit_id = "v1";
    e.site = "right-tribune-001.com";
    e.timestamp_ms = 1000;
    log.events.push_back(e);
    CookieRecord c;
    c.owner = "pixelsync.net";
    c.name = "uid";
    c.value = "ABCDEF1234567890";
    c.source = CookieSource::script;
    c.visit_id = "v1";
    c.site = "right-tribune-001.com";
    c.timestamp_ms = 1001;
    log.cookies.push_back(c);
    return log;
}

} // namespace

TEST_CASE("empty stream parses to an empty log") {
    auto res = parse_crawl_log(std::string_view{""});
    CHECK(res.log.events.empty());
    CHECK(res.log.cookies.empty());
    CHECK(res.issues.empty());
}

TEST_CASE("one request line + one cookie line round-trips") {
    auto text = serialize_crawl_log(small_log());
    auto res = parse_crawl_log(text);
    REQUIRE(res.issues.empty());
    CHECK(res.log.events.size() == 1);
    CHECK(res.log.cookies.size() == 1);
    CHECK(res.log == small_log());
    // byte-exact round-trip on canonical form
    CHECK(serialize_crawl_log(res.log) == text);
}

TEST_CASE("round-trip is byte-exact for randomized logs") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        CrawlLog log;
        log.persona_label = trial % 2 ? "SM" : "baseline";
        log.lean = trial % 2 ? Lean::left : Lean::none;
        log.run_index = 1 + static_cast<int>(rng() % 2);
        std::int64_t ts = 5000;
        int n = 1 + static_cast<int>(rng() % 20);
        for (int i = 0; i < n; ++i) {
            ts += 1 + static_cast<std::int64_t>(rng() % 5);
            if (rng() % 3) {
                HttpEvent e;
                bool redirect = rng() % 4 == 0;
                e.kind = redirect ? HttpKind::redirect
                                  : (rng() % 2 ? HttpKind::request : HttpKind::response);
                e.url = "https://t" + std::to_string(rng() % 9) + ".example.com/p?x=" +
                        std::to_string(rng());
                if (redirect) e.location = "https://dst.example.org/r";
                if (rng() % 2) e.referrer = "https://site.com/";
                e.visit_id = "v" + std::to_string(rng() % 3);
                e.site = "site.com";
                e.timestamp_ms = ts;
                log.events.push_back(std::move(e));
            } else {
                CookieRecord c;
                c.owner = "owner" + std::to_string(rng() % 5) + ".com";
                c.name = "n" + std::to_string(rng() % 7);
                c.value = rng() % 5 ? "val" + std::to_string(rng()) : "";
                c.source = rng() % 2 ? CookieSource::script : CookieSource::header;
                c.visit_id = "v" + std::to_string(rng() % 3);
                c.site = "site.com";
                c.timestamp_ms = ts;
                log.cookies.push_back(std::move(c));
            }
        }
        auto text = serialize_crawl_log(log);
        auto res = parse_crawl_log(text);
        REQUIRE(res.issues.empty());
        CHECK(res.log == log);
        CHECK(serialize_crawl_log(res.log) == text);
    }
}

TEST_CASE("malformed lines land in the issue ledger") {
    auto text = serialize_crawl_log(small_log());
    // Append garbage below the 10% threshold? 2 records + meta = 3 lines; one
    // bad line of 4 is 25%, so build a bigger log instead.
    std::string big;
    CrawlLog log = small_log();
    for (int i = 0; i < 30; ++i) {
        auto c = log.cookies[0];
        c.timestamp_ms += i;
        log.cookies.push_back(c);
    }
    big = serialize_crawl_log(log);
    big += "{\"record_type\":\"http\",\"kind\":\"nope\"}\n";
    big += "not json at all\n";
    auto res = parse_crawl_log(big);
    CHECK(res.issues.size() == 2);
    CHECK(res.log.cookies.size() == 31);
    CHECK(res.issues[0].line_no > 0);
}

TEST_CASE("more than 10% malformed lines fails the parse") {
    std::string text = serialize_crawl_log(small_log());
    text += "garbage1\ngarbage2\n";
    CHECK_THROWS_WITH(parse_crawl_log(text), Catch::Matchers::ContainsSubstring("10%"));
}

TEST_CASE("redirect without location is malformed") {
    std::string line =
        R"({"record_type":"http","kind":"redirect","url":"https://a.com/x","headers":[],"visit_id":"v1","site":"a.com","timestamp":1})";
    // pad with valid records to stay under the failure threshold
    std::string text = serialize_crawl_log(small_log());
    CrawlLog log = small_log();
    for (int i = 0; i < 20; ++i) {
        auto c = log.cookies[0];
        c.timestamp_ms += i;
        log.cookies.push_back(c);
    }
    text = serialize_crawl_log(log);
    text += line + "\n";
    auto res = parse_crawl_log(text);
    REQUIRE(res.issues.size() == 1);
    CHECK_THAT(res.issues[0].reason, Catch::Matchers::ContainsSubstring("location"));
}

TEST_CASE("run_index outside the crawl plan is a lint, not an error") {
    CrawlLog log = small_log();
    log.run_index = 7;
    auto res = parse_crawl_log(serialize_crawl_log(log));
    CHECK(res.issues.empty());
    REQUIRE_FALSE(res.lints.empty());
    CHECK_THAT(res.lints[0], Catch::Matchers::ContainsSubstring("run_index"));

    CrawlLog base = small_log();
    base.persona_label = "baseline";
    base.run_index = 3; // baselines run at most twice
    auto res2 = parse_crawl_log(serialize_crawl_log(base));
    REQUIRE_FALSE(res2.lints.empty());
}

TEST_CASE("cookie_count semantics") {
    CrawlLog log = small_log();
    SECTION("site with events but no cookies counts zero") {
        log.cookies.clear();
        CHECK(cookie_count(log, "right-tribune-001.com") == 0);
    }
    SECTION("absent site is an error distinct from zero") {
        CHECK_THROWS_AS(cookie_count(log, "never-visited.com"), AuditError);
    }
    SECTION("duplicate observations count twice; --distinct collapses them") {
        auto dup = log.cookies[0];
        dup.visit_id = "v2";
        dup.timestamp_ms += 50;
        log.cookies.push_back(dup);
        CHECK(cookie_count(log, "right-tribune-001.com") == 2);
        CHECK(cookie_count(log, "right-tribune-001.com", /*distinct=*/true) == 1);
    }
}

TEST_CASE("cookie_count summed over sites equals total observations") {
    std::mt19937_64 rng(11);
    CrawlLog log;
    log.persona_label = "Y";
    log.lean = Lean::left;
    for (int i = 0; i < 100; ++i) {
        CookieRecord c;
        int s = static_cast<int>(rng() % 7);
        c.site = "site" + std::to_string(s) + ".com";
        c.owner = rng() % 2 ? c.site : "tp.com";
        c.name = "n" + std::to_string(rng() % 3);
        c.value = "v";
        c.visit_id = "v" + std::to_string(s);
        c.timestamp_ms = i;
        log.cookies.push_back(c);
    }
    std::size_t total = 0;
    for (const auto& site : log.sites()) total += cookie_count(log, site);
    CHECK(total == log.cookies.size());
}
