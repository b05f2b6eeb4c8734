// audit: differential-tracking audit CLI. Subcommands mirror the pipeline
// stages; `run` executes all of them over one config.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "audit/pipeline.hpp"

using namespace audit;

namespace {

std::optional<std::uint64_t> env_seed() {
    const char* v = std::getenv("AUDIT_SEED");
    if (!v || !*v) return std::nullopt;
    std::int64_t parsed = 0;
    if (!parse_i64(v, parsed) || parsed < 0)
        throw AuditError("AUDIT_SEED must be a non-negative integer");
    return static_cast<std::uint64_t>(parsed);
}

// "2..10" or "2-10" or a single "3"
std::pair<int, int> parse_k_range(const std::string& s) {
    auto sep = s.find("..");
    std::size_t seplen = 2;
    if (sep == std::string::npos) {
        sep = s.find('-');
        seplen = 1;
    }
    std::int64_t lo = 0, hi = 0;
    if (sep == std::string::npos) {
        if (!parse_i64(s, lo)) throw AuditError("bad k range: " + s);
        return {static_cast<int>(lo), static_cast<int>(lo)};
    }
    if (!parse_i64(s.substr(0, sep), lo) || !parse_i64(s.substr(sep + seplen), hi) || lo > hi)
        throw AuditError("bad k range: " + s);
    return {static_cast<int>(lo), static_cast<int>(hi)};
}

CrawlSet load_crawls_arg(const std::string& dir) {
    CrawlSet crawls = load_crawls_dir(dir);
    if (crawls.logs.empty()) throw AuditError("no crawl logs found under " + dir);
    return crawls;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"differential tracking audit toolkit"};
    app.set_version_flag("--version", std::string("audit ") + kToolVersion);
    app.require_subcommand(1);

    // --- simulate -----------------------------------------------------------
    auto* sim = app.add_subcommand("simulate", "generate a synthetic web and crawl it");
    std::string sim_config, sim_personas, sim_out;
    sim->add_option("--config", sim_config, "ecosystem config file")->required();
    sim->add_option("--personas", sim_personas, "directory of persona archives to reuse");
    sim->add_option("--out", sim_out, "output directory")->required();
    sim->callback([&] {
        EcosystemConfig eco = EcosystemConfig::load(sim_config);
        if (auto s = env_seed()) eco.seed = *s;
        SimulateOutputs out = run_simulation(eco, sim_out);
        if (!sim_personas.empty()) {
            // external archives replace the built ones for later stages
            auto loaded = load_personas_dir(sim_personas);
            for (auto& [label, p] : loaded)
                save_persona(p, (fs::path(sim_out) / "personas" / (label + ".json")).string());
        }
        std::cout << "simulated " << out.web.sites.size() << " sites, "
                  << out.crawls.logs.size() << " crawl logs, " << out.manifest.syncs.size()
                  << " planted syncs, " << out.manifest.prices.size()
                  << " planted price notifications\n";
    });

    // --- ingest --------------------------------------------------------------
    auto* ing = app.add_subcommand("ingest", "convert between sqlite and canonical logs");
    std::string ing_from_sqlite, ing_from_canonical, ing_to_sqlite, ing_out;
    ing->add_option("--from-sqlite", ing_from_sqlite, "sqlite database file or directory");
    ing->add_option("--from-canonical", ing_from_canonical, "canonical log file");
    ing->add_option("--to-sqlite", ing_to_sqlite, "write a sqlite database");
    ing->add_option("--out", ing_out, "output file or directory");
    ing->callback([&] {
        if (!ing_from_sqlite.empty()) {
            if (ing_out.empty()) throw AuditError("ingest: --out required");
            if (fs::is_directory(ing_from_sqlite)) {
                fs::create_directories(ing_out);
                std::vector<fs::path> files;
                for (const auto& e : fs::directory_iterator(ing_from_sqlite)) {
                    auto ext = e.path().extension().string();
                    if (e.is_regular_file() && (ext == ".sqlite" || ext == ".db"))
                        files.push_back(e.path());
                }
                std::sort(files.begin(), files.end());
                for (const auto& f : files) {
                    CrawlLog log = import_openwpm_db(f.string());
                    fs::path dst = fs::path(ing_out) / (f.stem().string() + ".jsonl");
                    write_file(dst.string(), serialize_crawl_log(log));
                }
                std::cout << "converted " << files.size() << " databases\n";
            } else {
                CrawlLog log = import_openwpm_db(ing_from_sqlite);
                write_file(ing_out, serialize_crawl_log(log));
                std::cout << "converted 1 database\n";
            }
        } else if (!ing_from_canonical.empty() && !ing_to_sqlite.empty()) {
            auto res = load_crawl_log(ing_from_canonical);
            export_openwpm_db(res.log, ing_to_sqlite);
            std::cout << "exported to " << ing_to_sqlite << "\n";
        } else {
            throw AuditError("ingest: need --from-sqlite, or --from-canonical with --to-sqlite");
        }
    });

    // --- persona build ---------------------------------------------------------
    auto* persona_cmd = app.add_subcommand("persona", "persona operations");
    auto* pbuild = persona_cmd->add_subcommand("build", "build a persona from building crawls");
    std::string pb_spec, pb_crawls, pb_out;
    std::size_t pb_threshold = 50;
    pbuild->add_option("--spec", pb_spec, "demographic spec file")->required();
    pbuild->add_option("--crawls", pb_crawls, "directory of per-site building crawls")
        ->required();
    pbuild->add_option("--out", pb_out, "persona archive path")->required();
    pbuild->add_option("--maturity-threshold", pb_threshold, "distinct third parties required");
    pbuild->callback([&] {
        DemographicSpec spec = DemographicSpec::load(pb_spec);
        std::vector<CrawlLog> crawls;
        for (const auto& site : spec.site_list) {
            fs::path f = fs::path(pb_crawls) / (site + ".jsonl");
            if (!fs::exists(f)) throw AuditError("build_persona: missing crawl for site: " + site);
            crawls.push_back(load_crawl_log(f.string()).log);
        }
        Persona p = build_persona(spec, crawls, pb_threshold);
        save_persona(p, pb_out);
        auto curve = growth_curve(spec, crawls);
        std::cout << "persona " << p.label << ": " << p.jar.size() << " cookie observations, "
                  << curve.back().second << " distinct third parties, matured="
                  << (p.matured ? "true" : "false") << "\n";
    });

    // --- classify ---------------------------------------------------------------
    auto* cls = app.add_subcommand("classify", "six-way cookie classification reports");
    std::string cls_blocklist, cls_trackers, cls_crawls, cls_report, cls_personas;
    cls->add_option("--blocklist", cls_blocklist, "blocklist JSON")->required();
    cls->add_option("--trackers", cls_trackers, "tracker list CSV")->required();
    cls->add_option("--crawls", cls_crawls, "crawl log directory")->required();
    cls->add_option("--report", cls_report, "report output directory")->required();
    cls->add_option("--personas", cls_personas, "persona archive directory (for overlap)");
    cls->callback([&] {
        CrawlSet crawls = load_crawls_arg(cls_crawls);
        auto personas = load_personas_dir(cls_personas);
        BlockList bl = BlockList::load(cls_blocklist);
        TrackerList tl = TrackerList::load(cls_trackers);
        AuditParams params;
        Analyzer an(crawls, personas, bl, tl, {}, params, cls_report);
        an.classify_reports();
        std::cout << "classification reports written to " << cls_report << "\n";
    });

    // --- csync -------------------------------------------------------------------
    auto* cs = app.add_subcommand("csync", "detect cookie synchronization events");
    std::string cs_crawls, cs_jar, cs_out;
    std::size_t cs_minlen = 10;
    cs->add_option("--crawls", cs_crawls, "crawl log directory")->required();
    cs->add_option("--jar", cs_jar, "persona archive providing the cookie jar");
    cs->add_option("--min-id-len", cs_minlen, "minimum candidate ID length");
    cs->add_option("--out", cs_out, "output JSONL file")->required();
    cs->callback([&] {
        CrawlSet crawls = load_crawls_arg(cs_crawls);
        SyncParams params;
        params.min_id_length = cs_minlen;
        std::vector<CookieRecord> archive_jar;
        if (!cs_jar.empty()) archive_jar = load_persona(cs_jar).jar;
        std::string out;
        std::size_t total = 0;
        for (const auto& log : crawls.logs) {
            std::vector<CookieRecord> jar = log.cookies;
            jar.insert(jar.end(), archive_jar.begin(), archive_jar.end());
            for (const auto& se : detect_syncs(log, jar, params)) {
                ojson j;
                j["persona"] = log.persona_label;
                j["lean"] = to_string(log.lean);
                j["run"] = log.run_index;
                j["site"] = se.site;
                j["sender"] = se.sender;
                j["receiver"] = se.receiver;
                j["id"] = se.id.plain_value;
                j["encoding"] = to_string(se.id.encoding);
                j["match_location"] = to_string(se.match_location);
                j["carrier_url"] = se.carrier_url;
                out += j.dump();
                out += '\n';
                ++total;
            }
        }
        write_file(cs_out, out);
        std::cout << total << " sync events -> " << cs_out << "\n";
    });

    // --- prices ---------------------------------------------------------------------
    auto* pr = app.add_subcommand("prices", "extract RTB win-notification prices");
    std::string pr_crawls, pr_patterns, pr_out;
    pr->add_option("--crawls", pr_crawls, "crawl log directory")->required();
    pr->add_option("--patterns", pr_patterns, "price pattern set JSON");
    pr->add_option("--out", pr_out, "output CSV")->required();
    pr->callback([&] {
        CrawlSet crawls = load_crawls_arg(pr_crawls);
        PricePatternSet patterns;
        if (!pr_patterns.empty()) patterns = PricePatternSet::load(pr_patterns);
        std::string csv = "persona,lean,site,bidder,cpm,raw_param\n";
        std::size_t events = 0, opaque = 0, macros = 0;
        for (const auto& log : crawls.logs) {
            PriceScan scan = detect_wins(log, patterns);
            opaque += scan.opaque;
            macros += scan.macro_excluded;
            for (const auto& e : scan.events) {
                csv += e.persona_label;
                csv += ',';
                csv += to_string(e.lean);
                csv += ',' + e.site + ',' + e.bidder + ',' + fmt_double(e.cpm) + ',' +
                       e.raw_param + '\n';
                ++events;
            }
        }
        write_file(pr_out, csv);
        std::cout << events << " price events (" << opaque << " opaque, " << macros
                  << " macros excluded) -> " << pr_out << "\n";
    });

    // --- stats -------------------------------------------------------------------------
    auto* st = app.add_subcommand("stats", "differential statistics reports");
    std::string st_crawls, st_out, st_ranks;
    bool st_distinct = false;
    double st_alpha = 0.01;
    st->add_option("--crawls", st_crawls, "crawl log directory")->required();
    st->add_option("--out", st_out, "report output directory")->required();
    st->add_option("--ranks", st_ranks, "site,rank CSV");
    st->add_flag("--distinct", st_distinct, "count distinct (owner,name) cookies per site");
    st->add_option("--alpha", st_alpha, "KS significance level");
    st->callback([&] {
        CrawlSet crawls = load_crawls_arg(st_crawls);
        AuditParams params;
        params.distinct_cookies = st_distinct;
        params.alpha = st_alpha;
        std::map<std::string, long> ranks;
        if (!st_ranks.empty()) ranks = load_ranks_csv(read_file(st_ranks));
        BlockList bl;
        TrackerList tl;
        std::map<std::string, Persona> personas;
        Analyzer an(crawls, personas, bl, tl, ranks, params, st_out);
        an.stats_reports();
        std::cout << "stats reports written to " << st_out << "\n";
    });

    // --- nmf --------------------------------------------------------------------------
    auto* nm = app.add_subcommand("nmf", "persona/domain co-clustering");
    std::string nm_crawls, nm_blocklist, nm_out, nm_k = "2..10";
    int nm_runs = 50;
    std::uint64_t nm_seed = 1;
    int nm_iters = 500;
    double nm_tol = 1e-7;
    nm->add_option("--crawls", nm_crawls, "crawl log directory")->required();
    nm->add_option("--blocklist", nm_blocklist, "blocklist JSON")->required();
    nm->add_option("--k", nm_k, "k range, e.g. 2..10");
    nm->add_option("--runs", nm_runs, "consensus runs per k");
    nm->add_option("--seed", nm_seed, "random seed");
    nm->add_option("--max-iters", nm_iters, "multiplicative update iterations");
    nm->add_option("--tol", nm_tol, "relative objective tolerance");
    nm->add_option("--out", nm_out, "report output directory")->required();
    nm->callback([&] {
        CrawlSet crawls = load_crawls_arg(nm_crawls);
        BlockList bl = BlockList::load(nm_blocklist);
        TrackerList tl;
        std::map<std::string, Persona> personas;
        AuditParams params;
        auto [kmin, kmax] = parse_k_range(nm_k);
        params.nmf_k_min = kmin;
        params.nmf_k_max = kmax;
        params.nmf_runs = nm_runs;
        params.nmf_seed = nm_seed;
        params.nmf_max_iters = nm_iters;
        params.nmf_tol = nm_tol;
        Analyzer an(crawls, personas, bl, tl, {}, params, nm_out);
        an.nmf_reports();
        std::cout << "nmf reports written to " << nm_out << "\n";
    });

    // --- run --------------------------------------------------------------------------
    auto* run = app.add_subcommand("run", "full audit pipeline");
    std::string run_config, run_out;
    run->add_option("--config", run_config, "audit config file")->required();
    run->add_option("--out", run_out, "output directory (overrides config)");
    run->callback([&] {
        AuditConfig cfg = AuditConfig::load(run_config);
        if (!run_out.empty()) cfg.out_dir = run_out;
        if (auto s = env_seed()) cfg.seed_override = s;
        ReportBundle bundle = run_audit(cfg);
        std::cout << "audit complete: " << bundle.total_syncs << " syncs, "
                  << bundle.total_price_events << " price events; reports under "
                  << (fs::path(cfg.out_dir) / "report").string() << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
