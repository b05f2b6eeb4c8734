#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "audit/pipeline.hpp"

using namespace audit;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_small_eco(const fs::path& path, std::uint64_t seed = 77) {
    ojson j;
    j["name"] = "pipeline-test";
    j["seed"] = seed;
    j["sites"] = {{"n_left", 8}, {"n_right", 10}};
    j["runs"] = {{"per_persona", 1}, {"per_baseline", 1}};
    j["personas"] = {"baseline", "W", "SM"};
    j["first_party_cookies"] = {{"family", "poisson"}, {"mean", 4.0}};
    j["lean_cookie_multiplier"] = {{"left", 1.0}, {"right", 1.25}};
    j["trackers"] = ojson::array();
    for (const char* dom : {"pipe-ads.com", "pipe-track.net", "pipe-social.com"}) {
        ojson t;
        t["domain"] = dom;
        t["category"] = dom == std::string("pipe-social.com") ? "social" : "advertising";
        t["embed_prob"] = {{"left", 0.9}, {"right", 0.9}};
        t["cookies_per_visit"] = {{"family", "poisson"}, {"mean", 2.0}};
        t["web_prevalence"] = 0.2;
        t["sync_partner"] = true;
        t["rtb_bidder"] = true;
        j["trackers"].push_back(t);
    }
    j["sync"] = {{"chains_per_visit",
                  {{"left", {{"family", "fixed"}, {"value", 1}}},
                   {"right", {{"family", "fixed"}, {"value", 2}}}}},
                 {"encodings", {"plain", "base64"}}};
    j["prices"] = {{"notifications_per_visit",
                    {{"left", {{"family", "fixed"}, {"value", 3}}},
                     {"right", {{"family", "fixed"}, {"value", 3}}}}},
                   {"values",
                    {{"left", {{"family", "replay"}, {"values", {0.1, 0.561, 0.9}}}},
                     {"right", {{"family", "replay"}, {"values", {0.2, 0.667, 4.5}}}}}}};
    j["persona_response"] = {{{"demographic", "woman"}, {"tracker", "*"}, {"multiplier", 1.3}}};
    j["demographics"] = {
        {{"feature", "woman"}, {"n_sites", 4}, {"pool_size", 12}, {"trackers_per_site", 4}},
        {{"feature", "senior"}, {"n_sites", 4}, {"pool_size", 12}, {"trackers_per_site", 4}},
        {{"feature", "man"}, {"n_sites", 4}, {"pool_size", 12}, {"trackers_per_site", 4}}};
    write_file(path.string(), j.dump(2));
}

AuditConfig simulate_config(const fs::path& eco, const fs::path& out) {
    AuditConfig cfg;
    cfg.mode = AuditConfig::Mode::simulate;
    cfg.simulate_config = eco.string();
    cfg.out_dir = out.string();
    cfg.params.nmf_runs = 4;
    cfg.params.nmf_k_max = 3;
    cfg.params.nmf_max_iters = 60;
    return cfg;
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file())
            files[fs::relative(e.path(), root).string()] = read_file(e.path().string());
    return files;
}

} // namespace

TEST_CASE("full simulate pipeline writes the report bundle") {
    auto dir = fresh_dir("audit_pipe_full");
    write_small_eco(dir / "eco.json");
    auto cfg = simulate_config(dir / "eco.json", dir / "out");
    ReportBundle bundle = run_audit(cfg);

    for (const char* f :
         {"report/cdf.csv", "report/ks_matrix.csv", "report/percent_delta.csv",
          "report/rank_buckets.csv", "report/plotdata.json", "report/category_counts.csv",
          "report/prevalence.csv", "report/overlap.csv", "report/syncs.jsonl",
          "report/sync_rates.csv", "report/prices.csv", "report/price_summary.csv",
          "report/prices_ks_matrix.csv", "report/summary.json", "report/summary.txt",
          "report/nmf/selection.csv", "provenance.json"})
        CHECK(fs::exists(dir / "out" / f));

    CHECK(bundle.cookie_ratio_right_left > 1.0);
    CHECK(bundle.total_syncs > 0);
    CHECK(bundle.total_price_events > 0);
    REQUIRE(bundle.price_median_left);
    CHECK(*bundle.price_median_left == 0.561);
    REQUIRE(bundle.price_median_right);
    CHECK(*bundle.price_median_right == 0.667);
    CHECK(bundle.persona_delta_pct.count("W"));
    fs::remove_all(dir);
}

TEST_CASE("determinism: identical config and seed give byte-identical bundles") {
    auto dir = fresh_dir("audit_pipe_det");
    write_small_eco(dir / "eco.json");
    run_audit(simulate_config(dir / "eco.json", dir / "out1"));
    run_audit(simulate_config(dir / "eco.json", dir / "out2"));
    auto t1 = read_tree(dir / "out1");
    auto t2 = read_tree(dir / "out2");
    REQUIRE(t1.size() == t2.size());
    for (const auto& [rel, content] : t1) {
        INFO(rel);
        CHECK(t2.at(rel) == content);
    }
    fs::remove_all(dir);
}

TEST_CASE("seed override changes outputs") {
    auto dir = fresh_dir("audit_pipe_seed");
    write_small_eco(dir / "eco.json");
    run_audit(simulate_config(dir / "eco.json", dir / "out1"));
    auto cfg = simulate_config(dir / "eco.json", dir / "out2");
    cfg.seed_override = 123456;
    run_audit(cfg);
    CHECK(read_file((dir / "out1" / "report" / "cdf.csv").string()) !=
          read_file((dir / "out2" / "report" / "cdf.csv").string()));
    // provenance hash differs with the seed
    CHECK(read_file((dir / "out1" / "provenance.json").string()) !=
          read_file((dir / "out2" / "provenance.json").string()));
    fs::remove_all(dir);
}

TEST_CASE("converter equivalence: sqlite ingest reproduces the canonical reports") {
    auto dir = fresh_dir("audit_pipe_conv");
    write_small_eco(dir / "eco.json");
    auto cfg = simulate_config(dir / "eco.json", dir / "sim");
    run_audit(cfg);

    // canonical-log ingest
    AuditConfig ing1;
    ing1.mode = AuditConfig::Mode::ingest;
    ing1.ingest_crawls = (dir / "sim" / "crawls").string();
    ing1.ingest_personas = (dir / "sim" / "personas").string();
    ing1.blocklist_path = (dir / "sim" / "fixtures" / "blocklist.json").string();
    ing1.trackers_path = (dir / "sim" / "fixtures" / "trackers.csv").string();
    ing1.ranks_path = (dir / "sim" / "fixtures" / "ranks.csv").string();
    ing1.out_dir = (dir / "from_canonical").string();
    ing1.params = cfg.params;
    run_audit(ing1);

    // convert every canonical log to the table layout, then ingest those
    fs::create_directories(dir / "sqlite");
    for (const auto& e : fs::directory_iterator(dir / "sim" / "crawls")) {
        auto res = load_crawl_log(e.path().string());
        export_openwpm_db(res.log,
                          (dir / "sqlite" / (e.path().stem().string() + ".sqlite")).string());
    }
    AuditConfig ing2 = ing1;
    ing2.ingest_crawls = (dir / "sqlite").string();
    ing2.out_dir = (dir / "from_sqlite").string();
    run_audit(ing2);

    auto t1 = read_tree(dir / "from_canonical");
    auto t2 = read_tree(dir / "from_sqlite");
    REQUIRE(t1.size() == t2.size());
    for (const auto& [rel, content] : t1) {
        INFO(rel);
        CHECK(t2.at(rel) == content);
    }
    fs::remove_all(dir);
}

TEST_CASE("failure writes a manifest and preserves partial outputs") {
    auto dir = fresh_dir("audit_pipe_fail");
    AuditConfig cfg;
    cfg.mode = AuditConfig::Mode::ingest;
    cfg.ingest_crawls = (dir / "nonexistent").string();
    cfg.blocklist_path = (dir / "missing.json").string();
    cfg.trackers_path = (dir / "missing.csv").string();
    cfg.out_dir = (dir / "out").string();
    CHECK_THROWS(run_audit(cfg));
    CHECK(fs::exists(dir / "out" / "failure_manifest.json"));
    fs::remove_all(dir);
}

TEST_CASE("audit config parses both modes and rejects others") {
    ojson sim;
    sim["mode"] = "simulate";
    sim["simulate"]["config"] = "x.json";
    sim["out_dir"] = "/tmp/x";
    auto c1 = AuditConfig::from_json(sim);
    CHECK(c1.mode == AuditConfig::Mode::simulate);

    ojson ing;
    ing["mode"] = "ingest";
    ing["ingest"]["crawls"] = "c";
    ing["ingest"]["blocklist"] = "b";
    ing["ingest"]["trackers"] = "t";
    auto c2 = AuditConfig::from_json(ing);
    CHECK(c2.mode == AuditConfig::Mode::ingest);

    ojson bad;
    bad["mode"] = "live";
    CHECK_THROWS_AS(AuditConfig::from_json(bad), AuditError);
}
