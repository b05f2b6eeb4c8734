#include <catch2/catch_amalgamated.hpp>

#include "audit/psl.hpp"

using namespace audit;

// Vectors from the public-suffix-list checkPublicSuffix test file, limited
// to rules present in the bundled snapshot. Empty expectation = error.
static void expect(const char* host, const char* want) {
    const auto& psl = PublicSuffixList::bundled();
    if (want == nullptr) {
        CHECK_THROWS_AS(psl.registrable_domain(host), AuditError);
    } else {
        CHECK(psl.registrable_domain(host) == want);
    }
}

TEST_CASE("public suffix list vectors") {
    // plain TLD rules
    expect("com", nullptr);
    expect("example.com", "example.com");
    expect("WwW.example.COM", "example.com");
    expect("biz", nullptr);
    expect("domain.biz", "domain.biz");
    expect("ac", nullptr);
    expect("test.ac", "test.ac");

    // multi-label rules
    expect("uk", nullptr);
    expect("co.uk", nullptr);
    expect("example.co.uk", "example.co.uk");
    expect("foo.bar.co.uk", "bar.co.uk");
    expect("b.example.co.uk", "example.co.uk");

    // unlisted TLDs fall under the implicit "*" rule
    expect("example", nullptr);
    expect("example.example", "example.example");
    expect("b.example.example", "example.example");

    // jp geographic rules with wildcard + exception
    expect("jp", nullptr);
    expect("test.jp", "test.jp");
    expect("www.test.jp", "test.jp");
    expect("ac.jp", nullptr);
    expect("test.ac.jp", "test.ac.jp");
    expect("kyoto.jp", nullptr);
    expect("test.kyoto.jp", "test.kyoto.jp");
    expect("ide.kyoto.jp", nullptr);
    expect("b.ide.kyoto.jp", "b.ide.kyoto.jp");
    expect("a.b.ide.kyoto.jp", "b.ide.kyoto.jp");
    expect("kobe.jp", nullptr);
    expect("c.kobe.jp", nullptr);
    expect("b.c.kobe.jp", "b.c.kobe.jp");
    expect("a.b.c.kobe.jp", "b.c.kobe.jp");
    expect("city.kobe.jp", "city.kobe.jp");
    expect("www.city.kobe.jp", "city.kobe.jp");

    // full-TLD wildcard with exception
    expect("ck", nullptr);
    expect("test.ck", nullptr);
    expect("b.test.ck", "b.test.ck");
    expect("a.b.test.ck", "b.test.ck");
    expect("www.ck", "www.ck");
    expect("www.www.ck", "www.ck");

    // us with k12 second/third level rules
    expect("us", nullptr);
    expect("test.us", "test.us");
    expect("www.test.us", "test.us");
    expect("ak.us", nullptr);
    expect("test.ak.us", "test.ak.us");
    expect("www.test.ak.us", "test.ak.us");
    expect("k12.ak.us", nullptr);
    expect("test.k12.ak.us", "test.k12.ak.us");
    expect("www.test.k12.ak.us", "test.k12.ak.us");
}

TEST_CASE("registrable_domain basics from the audit pipeline") {
    CHECK(registrable_domain("ads.doubleclick.net") == "doubleclick.net");
    CHECK(registrable_domain("192.168.0.1") == "192.168.0.1");
    CHECK(registrable_domain("2001:db8::1") == "2001:db8::1");
    CHECK_THROWS_AS(registrable_domain(""), AuditError);
    CHECK_THROWS_WITH(registrable_domain("co.uk"),
                      Catch::Matchers::ContainsSubstring("suffix-only"));
    CHECK_THROWS_AS(registrable_domain("bad..name"), AuditError);
}

TEST_CASE("registrable_domain is idempotent") {
    for (const char* host : {"ads.doubleclick.net", "a.b.c.kobe.jp", "foo.bar.co.uk",
                             "x.y.z.example.com", "10.0.0.1"}) {
        auto once = registrable_domain(host);
        CHECK(registrable_domain(once) == once);
    }
}

TEST_CASE("snapshot carries a pinned version") {
    CHECK(PublicSuffixList::bundled().version() == "audit-snapshot-2019-09-25");
}

TEST_CASE("try_registrable_domain mirrors the throwing variant") {
    CHECK(PublicSuffixList::bundled().try_registrable_domain("a.example.com") == "example.com");
    CHECK_FALSE(PublicSuffixList::bundled().try_registrable_domain("com"));
    CHECK_FALSE(PublicSuffixList::bundled().try_registrable_domain(""));
}
