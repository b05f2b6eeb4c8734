#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <random>
#include <set>

#include "audit/persona.hpp"

using namespace audit;

namespace {

CrawlLog building_log(const std::string& label, const std::string& site,
                      const std::vector<std::string>& third_parties) {
    CrawlLog log;
    log.persona_label = label;
    log.lean = Lean::none;
    std::int64_t ts = 0;
    int i = 0;
    for (const auto& tp : third_parties) {
        CookieRecord c;
        c.owner = tp;
        c.site = site;
        c.name = "uid";
        c.value = "tok" + std::to_string(++i) + "abcdefg";
        c.visit_id = "b-" + site;
        c.timestamp_ms = ++ts;
        log.cookies.push_back(c);
    }
    CookieRecord fp;
    fp.owner = site;
    fp.site = site;
    fp.name = "sess";
    fp.value = "x";
    fp.visit_id = "b-" + site;
    fp.timestamp_ms = ++ts;
    log.cookies.push_back(fp);
    return log;
}

DemographicSpec spec_of(DemographicFeature f, const std::vector<std::string>& sites) {
    DemographicSpec s;
    s.feature = f;
    s.site_list = sites;
    return s;
}

} // namespace

TEST_CASE("baseline persona is empty and immature") {
    auto p = baseline_persona();
    CHECK(p.label == "baseline");
    CHECK(p.jar.empty());
    CHECK(p.history.empty());
    CHECK_FALSE(p.matured);
}

TEST_CASE("spec validation") {
    ojson j;
    j["feature"] = "woman";
    j["sites"] = ojson::array();
    CHECK_THROWS_AS(DemographicSpec::from_json(j), AuditError);
    j["sites"] = {"a.com", "a.com"};
    CHECK_THROWS_AS(DemographicSpec::from_json(j), AuditError);
    j["sites"] = {"a.com", "b.com"};
    CHECK(DemographicSpec::from_json(j).site_list.size() == 2);
}

TEST_CASE("build_persona unions jars in visit order and names missing sites") {
    auto spec = spec_of(DemographicFeature::woman, {"w1.com", "w2.com"});
    std::vector<CrawlLog> crawls{building_log("W", "w1.com", {"t1.com", "t2.com"}),
                                 building_log("W", "w2.com", {"t2.com", "t3.com"})};
    auto p = build_persona(spec, crawls);
    CHECK(p.label == "W");
    CHECK(p.history == std::vector<std::string>{"w1.com", "w2.com"});
    CHECK(p.jar.size() == 6); // 2+1 fp per site
    CHECK(distinct_third_party_owners(p.jar, p.history) ==
          std::set<std::string>{"t1.com", "t2.com", "t3.com"});
    CHECK_FALSE(p.matured);

    CHECK_THROWS_WITH(build_persona(spec, {crawls[0]}),
                      Catch::Matchers::ContainsSubstring("w2.com"));
}

TEST_CASE("set-union oracle over randomized per-site third parties") {
    std::mt19937_64 rng(5);
    // 10 sites, 12 distinct third parties each, drawn from a pool of 30
    std::vector<std::string> pool;
    for (int i = 0; i < 30; ++i) pool.push_back("p" + std::to_string(i) + ".com");
    std::vector<std::string> sites;
    for (int i = 0; i < 10; ++i) sites.push_back("w" + std::to_string(i) + ".com");
    std::vector<CrawlLog> crawls;
    std::set<std::string> oracle;
    for (const auto& site : sites) {
        auto copy = pool;
        std::vector<std::string> tps;
        for (int k = 0; k < 12; ++k) {
            std::size_t idx = rng() % copy.size();
            tps.push_back(copy[idx]);
            oracle.insert(copy[idx]);
            copy.erase(copy.begin() + static_cast<std::ptrdiff_t>(idx));
        }
        crawls.push_back(building_log("W", site, tps));
    }
    auto spec = spec_of(DemographicFeature::woman, sites);
    auto p = build_persona(spec, crawls);
    CHECK(distinct_third_party_owners(p.jar, p.history) == oracle);

    // order-insensitivity at the set level
    std::reverse(crawls.begin(), crawls.end());
    auto q = build_persona(spec, crawls);
    CHECK(distinct_third_party_owners(q.jar, q.history) == oracle);
}

TEST_CASE("maturity boundary at the threshold") {
    Persona p;
    p.label = "W";
    p.demographics = {DemographicFeature::woman};
    p.history = {"w1.com"};
    for (int i = 0; i < 49; ++i) {
        CookieRecord c;
        c.owner = "t" + std::to_string(i) + ".com";
        c.site = "w1.com";
        c.name = "uid";
        c.value = "v";
        c.visit_id = "b";
        p.jar.push_back(c);
    }
    CHECK_FALSE(maturity(p));
    CookieRecord c;
    c.owner = "t49.com";
    c.site = "w1.com";
    c.name = "uid";
    c.value = "v";
    c.visit_id = "b";
    p.jar.push_back(c);
    CHECK(maturity(p)); // 50 distinct third parties
    CHECK_FALSE(maturity(p, 51));
}

TEST_CASE("owners equal to visited first parties never count") {
    Persona p;
    p.history = {"w1.com", "w2.com"};
    for (int i = 0; i < 200; ++i) {
        CookieRecord c;
        c.owner = i % 2 ? "w1.com" : "w2.com";
        c.site = c.owner;
        c.name = "n" + std::to_string(i);
        c.value = "v";
        c.visit_id = "b";
        p.jar.push_back(c);
    }
    CHECK_FALSE(maturity(p));
}

TEST_CASE("growth_curve is non-decreasing and ends at the jar count") {
    std::mt19937_64 rng(9);
    std::vector<std::string> sites;
    for (int i = 0; i < 8; ++i) sites.push_back("s" + std::to_string(i) + ".com");
    std::vector<CrawlLog> crawls;
    for (const auto& site : sites) {
        std::vector<std::string> tps;
        for (int k = 0; k < 5; ++k) tps.push_back("t" + std::to_string(rng() % 12) + ".com");
        crawls.push_back(building_log("M", site, tps));
    }
    auto spec = spec_of(DemographicFeature::man, sites);
    auto curve = growth_curve(spec, crawls);
    REQUIRE(curve.size() == 8);
    for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i].second >= curve[i - 1].second);
    auto p = build_persona(spec, crawls);
    CHECK(curve.back().second == distinct_third_party_owners(p.jar, p.history).size());
}

TEST_CASE("growth_curve simple shapes") {
    auto spec1 = spec_of(DemographicFeature::man, {"s0.com"});
    auto c1 = growth_curve(spec1, {building_log("M", "s0.com",
                                                {"a.com", "b.com", "c.com", "d.com", "e.com",
                                                 "f.com", "g.com"})});
    REQUIRE(c1.size() == 1);
    CHECK(c1[0] == std::make_pair(1, std::size_t{7}));

    auto spec2 = spec_of(DemographicFeature::man, {"s0.com", "s1.com"});
    auto c2 = growth_curve(spec2, {building_log("M", "s0.com", {"a.com", "b.com"}),
                                   building_log("M", "s1.com", {"a.com", "b.com"})});
    REQUIRE(c2.size() == 2);
    CHECK(c2[0].second == c2[1].second); // flat when sets are identical
}

TEST_CASE("merge_compound validates and orders the label age-first") {
    auto s = build_persona(spec_of(DemographicFeature::senior, {"s1.com"}),
                           {building_log("S", "s1.com", {"t1.com"})});
    auto w = build_persona(spec_of(DemographicFeature::woman, {"w1.com"}),
                           {building_log("W", "w1.com", {"t2.com"})});
    auto y = build_persona(spec_of(DemographicFeature::young, {"y1.com"}),
                           {building_log("Y", "y1.com", {"t3.com"})});

    auto sw = merge_compound(s, w, 42);
    CHECK(sw.label == "SW");
    CHECK(merge_compound(w, s, 42).label == "SW"); // argument order does not matter
    CHECK(merge_compound(y, w, 1).label == "YW");
    CHECK(sw.demographics.size() == 2);
    CHECK(sw.jar.size() == s.jar.size() + w.jar.size());
    CHECK(sw.history.size() == 2);

    CHECK_THROWS_AS(merge_compound(y, s, 1), AuditError);              // same axis
    CHECK_THROWS_AS(merge_compound(s, baseline_persona(), 1), AuditError);
    CHECK_THROWS_AS(merge_compound(sw, w, 1), AuditError);             // already compound
}

TEST_CASE("merge interleaving is seeded and preserves relative order") {
    std::vector<std::string> ssites, wsites;
    std::vector<CrawlLog> scrawls, wcrawls;
    for (int i = 0; i < 6; ++i) {
        ssites.push_back("s" + std::to_string(i) + ".com");
        scrawls.push_back(building_log("S", ssites.back(), {"st.com"}));
        wsites.push_back("w" + std::to_string(i) + ".com");
        wcrawls.push_back(building_log("W", wsites.back(), {"wt.com"}));
    }
    auto s = build_persona(spec_of(DemographicFeature::senior, ssites), scrawls);
    auto w = build_persona(spec_of(DemographicFeature::woman, wsites), wcrawls);
    auto m1 = merge_compound(s, w, 7);
    auto m2 = merge_compound(s, w, 7);
    CHECK(m1.history == m2.history); // seeded determinism
    auto m3 = merge_compound(s, w, 8);
    CHECK(m1.history != m3.history); // different seed, different interleave (overwhelmingly)

    auto relative = [&](const std::vector<std::string>& hist, const std::string& prefix) {
        std::vector<std::string> got;
        for (const auto& s : hist)
            if (s.starts_with(prefix)) got.push_back(s);
        return got;
    };
    CHECK(relative(m1.history, "s") == ssites);
    CHECK(relative(m1.history, "w") == wsites);
}

TEST_CASE("archive round-trips byte-exact") {
    auto w = build_persona(spec_of(DemographicFeature::woman, {"w1.com", "w2.com"}),
                           {building_log("W", "w1.com", {"t1.com", "t2.com"}),
                            building_log("W", "w2.com", {"t3.com"})});
    w.created_at_ms = 1541030400000;
    auto path = std::filesystem::temp_directory_path() / "audit_test_persona.json";
    save_persona(w, path.string());
    auto text1 = read_file(path.string());
    auto loaded = load_persona(path.string());
    save_persona(loaded, path.string());
    auto text2 = read_file(path.string());
    CHECK(text1 == text2);
    CHECK(loaded.jar == w.jar);
    CHECK(loaded.history == w.history);
    CHECK(loaded.demographics == w.demographics);
    std::filesystem::remove(path);
}

TEST_CASE("latest_jar_state keeps the last observation per (owner, name)") {
    std::vector<CookieRecord> jar;
    for (int i = 0; i < 3; ++i) {
        CookieRecord c;
        c.owner = "t.com";
        c.name = "uid";
        c.value = "v" + std::to_string(i);
        c.visit_id = "b";
        c.timestamp_ms = i;
        jar.push_back(c);
    }
    auto state = latest_jar_state(jar);
    REQUIRE(state.size() == 1);
    CHECK(state.begin()->second.value == "v2");
}
