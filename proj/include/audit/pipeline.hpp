#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "audit/classify.hpp"
#include "audit/crawl_log.hpp"
#include "audit/csync.hpp"
#include "audit/digest.hpp"
#include "audit/nmf.hpp"
#include "audit/persona.hpp"
#include "audit/rtbprice.hpp"
#include "audit/simweb.hpp"
#include "audit/sqlite_convert.hpp"
#include "audit/stats.hpp"
#include "audit/util.hpp"

namespace audit {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "0.1.0";

// Analysis knobs shared by every stage; all defaults pinned here.
struct AuditParams {
    std::size_t maturity_threshold = 50;
    SyncParams sync;
    PricePatternSet prices;
    double alpha = 0.01;
    std::vector<long> rank_edges = default_rank_edges();
    bool distinct_cookies = false;
    int nmf_k_min = 2;
    int nmf_k_max = 6;
    int nmf_runs = 12;
    int nmf_max_iters = 200;
    double nmf_tol = 1e-6;
    std::uint64_t nmf_seed = 0xA0D17;

    static AuditParams from_json(const ojson& j) {
        AuditParams p;
        if (auto it = j.find("maturity_threshold"); it != j.end())
            p.maturity_threshold = it->get<std::size_t>();
        if (auto it = j.find("min_id_length"); it != j.end())
            p.sync.min_id_length = it->get<std::size_t>();
        if (auto it = j.find("cpm_cap"); it != j.end()) p.prices.cpm_cap = it->get<double>();
        if (auto it = j.find("alpha"); it != j.end()) p.alpha = it->get<double>();
        if (auto it = j.find("rank_edges"); it != j.end()) {
            p.rank_edges.clear();
            for (const auto& e : *it) p.rank_edges.push_back(e.get<long>());
        }
        if (auto it = j.find("distinct"); it != j.end()) p.distinct_cookies = it->get<bool>();
        if (auto it = j.find("nmf_k_min"); it != j.end()) p.nmf_k_min = it->get<int>();
        if (auto it = j.find("nmf_k_max"); it != j.end()) p.nmf_k_max = it->get<int>();
        if (auto it = j.find("nmf_runs"); it != j.end()) p.nmf_runs = it->get<int>();
        if (auto it = j.find("nmf_max_iters"); it != j.end()) p.nmf_max_iters = it->get<int>();
        if (auto it = j.find("nmf_tol"); it != j.end()) p.nmf_tol = it->get<double>();
        if (auto it = j.find("nmf_seed"); it != j.end()) p.nmf_seed = it->get<std::uint64_t>();
        return p;
    }
};

struct AuditConfig {
    enum class Mode { simulate, ingest } mode = Mode::simulate;
    std::string simulate_config;  // EcosystemConfig path (simulate mode)
    std::string ingest_crawls;    // dir of canonical logs or sqlite databases
    std::string ingest_personas;  // dir of persona archives (optional)
    std::string blocklist_path;   // ingest mode; simulate mode generates one
    std::string trackers_path;
    std::string ranks_path; // optional site,rank CSV (ingest mode)
    std::string out_dir;
    std::optional<std::uint64_t> seed_override;
    AuditParams params;

    static AuditConfig from_json(const ojson& j) {
        AuditConfig c;
        std::string mode = j.at("mode").get<std::string>();
        if (mode == "simulate") {
            c.mode = Mode::simulate;
            c.simulate_config = j.at("simulate").at("config").get<std::string>();
        } else if (mode == "ingest") {
            c.mode = Mode::ingest;
            const auto& ing = j.at("ingest");
            c.ingest_crawls = ing.at("crawls").get<std::string>();
            if (auto it = ing.find("personas"); it != ing.end())
                c.ingest_personas = it->get<std::string>();
            c.blocklist_path = ing.at("blocklist").get<std::string>();
            c.trackers_path = ing.at("trackers").get<std::string>();
            if (auto it = ing.find("ranks"); it != ing.end())
                c.ranks_path = it->get<std::string>();
        } else {
            throw AuditError("audit config: mode must be simulate or ingest");
        }
        if (auto it = j.find("out_dir"); it != j.end()) c.out_dir = it->get<std::string>();
        if (auto it = j.find("seed"); it != j.end())
            c.seed_override = it->get<std::uint64_t>();
        if (auto it = j.find("params"); it != j.end()) c.params = AuditParams::from_json(*it);
        return c;
    }

    static AuditConfig load(const std::string& path) {
        return from_json(ojson::parse(read_file(path)));
    }
};

namespace detail {

struct CsvWriter {
    std::string buf;
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) buf += ',';
            buf += cells[i];
        }
        buf += '\n';
    }
    void save(const fs::path& path) { write_file(path.string(), buf); }
};

inline std::string num(double v) { return fmt_double(v); }
inline std::string num(std::size_t v) { return std::to_string(v); }
inline std::string num(long v) { return std::to_string(v); }
inline std::string num(int v) { return std::to_string(v); }

inline int lean_order(Lean l) { return l == Lean::left ? 0 : l == Lean::right ? 1 : 2; }

} // namespace detail

inline void sort_crawl_set(CrawlSet& crawls) {
    std::sort(crawls.logs.begin(), crawls.logs.end(), [](const CrawlLog& a, const CrawlLog& b) {
        int la = detail::lean_order(a.lean), lb = detail::lean_order(b.lean);
        return std::tie(a.persona_label, la, a.run_index) <
               std::tie(b.persona_label, lb, b.run_index);
    });
}

// ---------------------------------------------------------------------------
// Derived per-site statistics shared by several reports
// ---------------------------------------------------------------------------

struct SiteStats {
    // (persona, lean) -> site -> mean cookie observations per run
    std::map<std::pair<std::string, Lean>, std::map<std::string, double>> mean_cookies;
    // (persona, lean) -> site -> distinct third-party owners (union over runs)
    std::map<std::pair<std::string, Lean>, std::map<std::string, std::size_t>> distinct_tp;

    static SiteStats compute(const CrawlSet& crawls, bool distinct_cookies) {
        SiteStats st;
        std::map<std::pair<std::string, Lean>, std::map<std::string, std::size_t>> runs;
        std::map<std::pair<std::string, Lean>, std::map<std::string, std::set<std::string>>> owners;
        std::map<std::pair<std::string, Lean>, std::map<std::string, double>> sums;
        for (const auto& log : crawls.logs) {
            auto key = std::make_pair(log.persona_label, log.lean);
            for (const auto& site : log.sites()) {
                sums[key][site] += static_cast<double>(cookie_count(log, site, distinct_cookies));
                runs[key][site] += 1;
            }
            for (const auto& c : log.cookies)
                if (c.owner != c.site) owners[key][c.site].insert(c.owner);
        }
        for (const auto& [key, sites] : sums)
            for (const auto& [site, total] : sites)
                st.mean_cookies[key][site] = total / static_cast<double>(runs[key][site]);
        for (const auto& [key, sites] : owners)
            for (const auto& [site, set] : sites) st.distinct_tp[key][site] = set.size();
        return st;
    }

    // Mean per-site cookie count for a group; per-website normalization.
    std::optional<double> group_mean(const std::string& persona, Lean lean) const {
        auto it = mean_cookies.find({persona, lean});
        if (it == mean_cookies.end() || it->second.empty()) return std::nullopt;
        double sum = 0;
        for (const auto& [_, v] : it->second) sum += v;
        return sum / static_cast<double>(it->second.size());
    }
};

struct ReportBundle {
    fs::path out_dir;
    double cookie_ratio_right_left = 0.0;
    std::map<std::string, double> persona_delta_pct; // persona -> delta across both leans
    double sync_ratio_right_left = 0.0;
    std::optional<double> price_median_left, price_median_right, price_top_quartile_ratio;
    std::map<std::string, int> nmf_k_star;
    std::map<std::string, double> nmf_cophenetic;
    std::size_t total_syncs = 0;
    std::size_t total_price_events = 0;
};

// ---------------------------------------------------------------------------
// Analyzer: one stage per report family, so CLI subcommands and the full
// pipeline produce byte-identical files for the same inputs.
// ---------------------------------------------------------------------------

class Analyzer {
public:
    Analyzer(const CrawlSet& crawls, const std::map<std::string, Persona>& personas,
             const BlockList& blocklist, const TrackerList& trackers,
             const std::map<std::string, long>& site_ranks, const AuditParams& params,
             fs::path report_dir)
        : crawls_(crawls),
          personas_(personas),
          blocklist_(blocklist),
          trackers_(trackers),
          ranks_(site_ranks),
          params_(params),
          report_(std::move(report_dir)),
          stats_(SiteStats::compute(crawls, params.distinct_cookies)) {
        fs::create_directories(report_);
    }

    const ReportBundle& bundle() const { return bundle_; }
    const SiteStats& site_stats() const { return stats_; }

    void run_all() {
        stats_reports();
        classify_reports();
        sync_reports();
        price_reports();
        nmf_reports();
        summary_reports();
    }

    // cdf.csv, ks_matrix.csv, percent_delta.csv, rank_buckets.csv, plotdata.json
    void stats_reports() {
        ojson plotdata = ojson::object();
        {
            detail::CsvWriter csv;
            csv.row({"lean", "site", "mean_cookies"});
            for (Lean lean : {Lean::left, Lean::right}) {
                auto it = stats_.mean_cookies.find({"baseline", lean});
                if (it == stats_.mean_cookies.end()) continue;
                for (const auto& [site, v] : it->second)
                    csv.row({to_string(lean), site, detail::num(v)});
            }
            csv.save(report_ / "cdf.csv");
        }
        {
            auto l = stats_.group_mean("baseline", Lean::left);
            auto r = stats_.group_mean("baseline", Lean::right);
            if (l && r && *l > 0) bundle_.cookie_ratio_right_left = *r / *l;
            ojson j;
            j["baseline_mean_left"] = l ? *l : 0.0;
            j["baseline_mean_right"] = r ? *r : 0.0;
            j["ratio"] = bundle_.cookie_ratio_right_left;
            plotdata["cookie_volume"] = j;
        }
        {
            std::map<std::string, std::vector<double>> groups;
            for (const auto& [key, sites] : stats_.distinct_tp) {
                if (key.second == Lean::none) continue;
                std::string label = (key.second == Lean::left ? "L:" : "R:") + key.first;
                for (const auto& [_, n] : sites) groups[label].push_back(static_cast<double>(n));
            }
            detail::CsvWriter csv;
            csv.row({"a", "b", "statistic", "p_value", "significant"});
            if (groups.size() >= 2) {
                auto m = pairwise_ks_matrix(groups, params_.alpha);
                for (std::size_t i = 0; i < m.labels.size(); ++i)
                    for (std::size_t j = 0; j < m.labels.size(); ++j)
                        csv.row({m.labels[i], m.labels[j], detail::num(m.cells[i][j].statistic),
                                 detail::num(m.cells[i][j].p_value),
                                 m.significant[i][j] ? "1" : "0"});
            }
            csv.save(report_ / "ks_matrix.csv");
        }
        {
            detail::CsvWriter csv;
            csv.row({"persona", "lean", "persona_mean", "baseline_mean", "delta_pct"});
            for (const auto& label : crawls_.persona_labels()) {
                if (label == "baseline") continue;
                double psum = 0, bsum = 0;
                int leans = 0;
                for (Lean lean : {Lean::left, Lean::right}) {
                    auto pv = stats_.group_mean(label, lean);
                    auto bv = stats_.group_mean("baseline", lean);
                    if (!pv || !bv || *bv <= 0) continue;
                    csv.row({label, to_string(lean), detail::num(*pv), detail::num(*bv),
                             detail::num(percent_delta(*pv, *bv))});
                    psum += *pv;
                    bsum += *bv;
                    ++leans;
                }
                if (leans > 0 && bsum > 0) {
                    double delta = percent_delta(psum / leans, bsum / leans);
                    bundle_.persona_delta_pct[label] = delta;
                    csv.row({label, "both", detail::num(psum / leans), detail::num(bsum / leans),
                             detail::num(delta)});
                }
            }
            csv.save(report_ / "percent_delta.csv");
            ojson deltas = ojson::object();
            for (const auto& [label, d] : bundle_.persona_delta_pct) deltas[label] = d;
            plotdata["percent_delta"] = deltas;
        }
        {
            std::vector<SiteValue> values;
            for (Lean lean : {Lean::left, Lean::right}) {
                auto it = stats_.mean_cookies.find({"baseline", lean});
                if (it == stats_.mean_cookies.end()) continue;
                for (const auto& [site, v] : it->second) {
                    SiteValue sv;
                    sv.site = site;
                    sv.lean = lean;
                    sv.value = v;
                    if (auto rit = ranks_.find(site); rit != ranks_.end()) sv.rank = rit->second;
                    values.push_back(std::move(sv));
                }
            }
            detail::CsvWriter csv;
            csv.row({"bucket", "lean", "count", "q1", "median", "q3"});
            for (const auto& row : rank_buckets(values, params_.rank_edges))
                csv.row({row.bucket, to_string(row.lean), detail::num(row.count),
                         row.q1 ? detail::num(*row.q1) : "",
                         row.median ? detail::num(*row.median) : "",
                         row.q3 ? detail::num(*row.q3) : ""});
            csv.save(report_ / "rank_buckets.csv");
        }
        write_file((report_ / "plotdata.json").string(), plotdata.dump(2) + "\n");
    }

    // category_counts.csv, prevalence.csv, overlap.csv
    void classify_reports() {
        {
            std::map<std::pair<Lean, CookieCategory>, std::size_t> counts;
            std::map<Lean, std::set<std::string>> lean_sites;
            for (const auto& log : crawls_.logs) {
                if (log.persona_label != "baseline" || log.lean == Lean::none) continue;
                auto s = log.sites();
                lean_sites[log.lean].insert(s.begin(), s.end());
                for (const auto& c : log.cookies) ++counts[{log.lean, label_cookie(c, blocklist_)}];
            }
            detail::CsvWriter csv;
            csv.row({"lean", "category", "total", "mean_per_site"});
            for (Lean lean : {Lean::left, Lean::right}) {
                if (lean_sites[lean].empty()) continue;
                for (auto cat : kAllCategories) {
                    std::size_t n = counts.count({lean, cat}) ? counts[{lean, cat}] : 0;
                    csv.row({to_string(lean), to_string(cat), detail::num(n),
                             detail::num(static_cast<double>(n) /
                                         static_cast<double>(lean_sites[lean].size()))});
                }
            }
            csv.save(report_ / "category_counts.csv");
        }
        {
            detail::CsvWriter csv;
            csv.row({"domain", "frac_left", "frac_right", "web_prevalence", "ratio_left",
                     "ratio_right"});
            try {
                PrevalenceReport rep = prevalence(crawls_, trackers_);
                for (const auto& row : rep.rows)
                    csv.row({row.domain, detail::num(row.frac_left), detail::num(row.frac_right),
                             row.web_prevalence ? detail::num(*row.web_prevalence) : "",
                             row.ratio_left ? detail::num(*row.ratio_left) : "",
                             row.ratio_right ? detail::num(*row.ratio_right) : ""});
                ojson j;
                j["list_match_rate"] = rep.list_match_rate;
                j["crawl_match_rate"] = rep.crawl_match_rate;
                write_file((report_ / "match_rates.json").string(), j.dump(2) + "\n");
            } catch (const AuditError&) {
                // single-lean crawl sets have no prevalence comparison
            }
            csv.save(report_ / "prevalence.csv");
        }
        {
            detail::CsvWriter csv;
            csv.row({"persona", "lean", "overlap"});
            for (Lean lean : {Lean::left, Lean::right}) {
                auto hpw = crawls_.third_party_domains(lean);
                if (hpw.empty()) continue;
                for (const auto& [label, persona] : personas_) {
                    auto jar_domains = distinct_third_party_owners(persona.jar, persona.history);
                    if (jar_domains.empty()) continue;
                    csv.row({label, to_string(lean), detail::num(overlap(jar_domains, hpw))});
                }
            }
            csv.save(report_ / "overlap.csv");
        }
    }

    // syncs.jsonl, sync_rates.csv
    void sync_reports() {
        std::vector<std::vector<SyncEvent>> per_log;
        std::string syncs_out;
        for (const auto& log : crawls_.logs) {
            std::vector<CookieRecord> jar = log.cookies;
            if (auto it = personas_.find(log.persona_label); it != personas_.end())
                jar.insert(jar.end(), it->second.jar.begin(), it->second.jar.end());
            auto events = detect_syncs(log, jar, params_.sync);
            bundle_.total_syncs += events.size();
            for (const auto& se : events) {
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
                syncs_out += j.dump();
                syncs_out += '\n';
            }
            per_log.push_back(std::move(events));
        }
        write_file((report_ / "syncs.jsonl").string(), syncs_out);

        SyncRateReport rates = sync_rate(crawls_, per_log);
        detail::CsvWriter csv;
        csv.row({"persona", "lean", "events", "site_visits", "per_visit_mean",
                 "third_party_requests", "per_tp_request"});
        for (const auto& g : rates.groups)
            csv.row({g.persona_label, to_string(g.lean), detail::num(g.events),
                     detail::num(g.site_visits), detail::num(g.per_visit_mean()),
                     detail::num(g.third_party_requests), detail::num(g.per_tp_request())});
        csv.save(report_ / "sync_rates.csv");

        double l = rates.lean_mean(Lean::left), r = rates.lean_mean(Lean::right);
        bundle_.sync_ratio_right_left = l > 0 ? r / l : 0.0;
    }

    // prices.csv, price_summary.csv, prices_ks_matrix.csv
    void price_reports() {
        std::vector<PriceEvent> all_events;
        std::size_t opaque = 0, macros = 0;
        for (const auto& log : crawls_.logs) {
            PriceScan scan = detect_wins(log, params_.prices);
            opaque += scan.opaque;
            macros += scan.macro_excluded;
            for (auto& e : scan.events) all_events.push_back(std::move(e));
        }
        bundle_.total_price_events = all_events.size();

        detail::CsvWriter csv;
        csv.row({"persona", "lean", "site", "bidder", "cpm", "raw_param"});
        for (const auto& e : all_events)
            csv.row({e.persona_label, to_string(e.lean), e.site, e.bidder, detail::num(e.cpm),
                     e.raw_param});
        csv.save(report_ / "prices.csv");

        PriceSummary sum = price_summary(all_events);
        detail::CsvWriter scsv;
        scsv.row({"group", "key", "n", "q1", "median", "q3"});
        for (const auto& e : sum.per_lean) {
            scsv.row({"lean", e.key, detail::num(e.n), detail::num(e.q1), detail::num(e.median),
                      detail::num(e.q3)});
            if (e.key == "left") bundle_.price_median_left = e.median;
            if (e.key == "right") bundle_.price_median_right = e.median;
        }
        for (const auto& e : sum.per_persona)
            scsv.row({"persona", e.key, detail::num(e.n), detail::num(e.q1),
                      detail::num(e.median), detail::num(e.q3)});
        scsv.save(report_ / "price_summary.csv");
        bundle_.price_top_quartile_ratio = sum.top_quartile_ratio;

        std::map<std::string, std::vector<double>> groups;
        for (const auto& e : all_events)
            if (e.lean != Lean::none)
                groups[(e.lean == Lean::left ? "L:" : "R:") + e.persona_label].push_back(e.cpm);
        detail::CsvWriter kcsv;
        kcsv.row({"a", "b", "statistic", "p_value", "significant"});
        if (groups.size() >= 2) {
            auto m = pairwise_ks_matrix(groups, params_.alpha);
            for (std::size_t i = 0; i < m.labels.size(); ++i)
                for (std::size_t j = 0; j < m.labels.size(); ++j)
                    kcsv.row({m.labels[i], m.labels[j], detail::num(m.cells[i][j].statistic),
                              detail::num(m.cells[i][j].p_value),
                              m.significant[i][j] ? "1" : "0"});
        }
        kcsv.save(report_ / "prices_ks_matrix.csv");

        ojson j;
        j["events"] = bundle_.total_price_events;
        j["opaque"] = opaque;
        j["macros_excluded"] = macros;
        write_file((report_ / "price_tallies.json").string(), j.dump(2) + "\n");
    }

    // nmf/<category>_{basis,coefficient,consensus,clusters}.csv + selection.csv
    void nmf_reports() {
        fs::create_directories(report_ / "nmf");
        std::string skipped;
        detail::CsvWriter sel;
        sel.row({"category", "k", "cophenetic", "mean_residual", "chosen"});
        for (auto cat : kAllCategories) {
            ProfileMatrix pm;
            try {
                pm = build_profile_matrix(crawls_, cat, blocklist_);
            } catch (const AuditError& e) {
                skipped += std::string(to_string(cat)) + ": " + e.what() + "\n";
                continue;
            }
            std::vector<std::size_t> keep;
            std::set<std::size_t> zeros(pm.zero_rows.begin(), pm.zero_rows.end());
            for (std::size_t i = 0; i < pm.row_labels.size(); ++i)
                if (!zeros.count(i)) keep.push_back(i);
            if (keep.size() < 2 || pm.col_labels.size() < 2) {
                skipped += std::string(to_string(cat)) + ": too small after dropping zero rows\n";
                continue;
            }
            Eigen::MatrixXd A(static_cast<Eigen::Index>(keep.size()), pm.values.cols());
            std::vector<std::string> rows;
            for (std::size_t i = 0; i < keep.size(); ++i) {
                A.row(static_cast<Eigen::Index>(i)) =
                    pm.values.row(static_cast<Eigen::Index>(keep[i]));
                rows.push_back(pm.row_labels[keep[i]]);
            }
            int k_max = std::min<int>(params_.nmf_k_max,
                                      static_cast<int>(std::min(A.rows(), A.cols())));
            int k_min = std::min(params_.nmf_k_min, k_max);
            std::uint64_t cat_seed = stream_seed(params_.nmf_seed, "nmf", to_string(cat));
            KSelection s = select_k(A, k_min, k_max, params_.nmf_runs, cat_seed,
                                    params_.nmf_max_iters, params_.nmf_tol);
            for (const auto& sc : s.scores)
                sel.row({to_string(cat), detail::num(sc.k), detail::num(sc.cophenetic),
                         detail::num(sc.mean_residual), sc.k == s.k_star ? "1" : "0"});
            bundle_.nmf_k_star[to_string(cat)] = s.k_star;
            for (const auto& sc : s.scores)
                if (sc.k == s.k_star) bundle_.nmf_cophenetic[to_string(cat)] = sc.cophenetic;

            ConsensusResult cons = consensus_cluster(
                A, s.k_star, params_.nmf_runs,
                splitmix64(cat_seed ^ splitmix64(static_cast<std::uint64_t>(s.k_star))),
                params_.nmf_max_iters, params_.nmf_tol);
            FactorModel model = factorize(A, s.k_star, splitmix64(cat_seed ^ 0x5EEDULL),
                                          params_.nmf_max_iters * 4, params_.nmf_tol);

            std::string base = to_string(cat);
            detail::CsvWriter bcsv;
            std::vector<std::string> header{"row"};
            for (int k = 0; k < s.k_star; ++k) header.push_back("b" + std::to_string(k + 1));
            bcsv.row(header);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                std::vector<std::string> cells{rows[i]};
                for (int k = 0; k < s.k_star; ++k)
                    cells.push_back(detail::num(model.basis(static_cast<Eigen::Index>(i), k)));
                bcsv.row(cells);
            }
            bcsv.save(report_ / "nmf" / (base + "_basis.csv"));

            detail::CsvWriter ccsv;
            std::vector<std::string> chead{"component"};
            for (const auto& col : pm.col_labels) chead.push_back(col);
            ccsv.row(chead);
            for (int k = 0; k < s.k_star; ++k) {
                std::vector<std::string> cells{"c" + std::to_string(k + 1)};
                for (Eigen::Index j = 0; j < model.coefficient.cols(); ++j)
                    cells.push_back(detail::num(model.coefficient(k, j)));
                ccsv.row(cells);
            }
            ccsv.save(report_ / "nmf" / (base + "_coefficient.csv"));

            detail::CsvWriter concsv;
            std::vector<std::string> conhead{"row"};
            for (const auto& r : rows) conhead.push_back(r);
            concsv.row(conhead);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                std::vector<std::string> cells{rows[i]};
                for (std::size_t j = 0; j < rows.size(); ++j)
                    cells.push_back(detail::num(cons.consensus(static_cast<Eigen::Index>(i),
                                                               static_cast<Eigen::Index>(j))));
                concsv.row(cells);
            }
            concsv.save(report_ / "nmf" / (base + "_consensus.csv"));

            detail::CsvWriter acsv;
            acsv.row({"row", "cluster"});
            for (std::size_t i = 0; i < rows.size(); ++i)
                acsv.row({rows[i], detail::num(cons.cluster_assignment[i])});
            acsv.save(report_ / "nmf" / (base + "_clusters.csv"));
        }
        sel.save(report_ / "nmf" / "selection.csv");
        write_file((report_ / "nmf" / "skipped.txt").string(), skipped);
    }

    // summary.json + summary.txt with the seven headline findings
    void summary_reports() {
        ojson s;
        s["1_cookie_volume"] = {{"ratio_right_left", bundle_.cookie_ratio_right_left}};
        ojson deltas = ojson::object();
        double max_single = 0;
        bool have_single = false;
        double single_sum = 0, compound_sum = 0;
        int single_n = 0, compound_n = 0;
        for (const auto& [label, d] : bundle_.persona_delta_pct) {
            deltas[label] = d;
            if (label.size() == 1) {
                max_single = have_single ? std::max(max_single, d) : d;
                have_single = true;
                single_sum += d;
                ++single_n;
            } else {
                compound_sum += d;
                ++compound_n;
            }
        }
        s["2_persona_uplift_pct"] = deltas;
        if (have_single) s["2_max_single_feature_uplift_pct"] = max_single;
        s["3_rank_buckets"] = "see rank_buckets.csv";
        s["4_single_vs_compound_mean_uplift_pct"] = {
            {"single", single_n ? single_sum / single_n : 0.0},
            {"compound", compound_n ? compound_sum / compound_n : 0.0}};
        ojson nmf = ojson::object();
        for (const auto& [cat, k] : bundle_.nmf_k_star)
            nmf[cat] = {{"k_star", k}, {"cophenetic", bundle_.nmf_cophenetic[cat]}};
        s["5_nmf"] = nmf;
        s["6_sync_ratio_right_left"] = bundle_.sync_ratio_right_left;
        ojson prices = ojson::object();
        if (bundle_.price_median_left) prices["median_left"] = *bundle_.price_median_left;
        if (bundle_.price_median_right) prices["median_right"] = *bundle_.price_median_right;
        if (bundle_.price_top_quartile_ratio)
            prices["top_quartile_ratio"] = *bundle_.price_top_quartile_ratio;
        s["7_prices"] = prices;
        write_file((report_ / "summary.json").string(), s.dump(2) + "\n");

        std::string txt;
        txt += "audit summary\n=============\n";
        txt += "1. right/left per-site cookie ratio (baseline): " +
               fmt_double(bundle_.cookie_ratio_right_left, 6) + "\n";
        txt += "2. persona cookie uplift vs baseline (%, both leans):\n";
        for (const auto& [label, d] : bundle_.persona_delta_pct)
            txt += "   " + label + ": " + fmt_double(d, 4) + "\n";
        txt += "3. rank-bucket medians: rank_buckets.csv\n";
        txt += "4. single vs compound mean uplift: " +
               fmt_double(single_n ? single_sum / single_n : 0.0, 4) + " vs " +
               fmt_double(compound_n ? compound_sum / compound_n : 0.0, 4) + "\n";
        txt += "5. NMF model selection:\n";
        for (const auto& [cat, k] : bundle_.nmf_k_star)
            txt += "   " + cat + ": k*=" + std::to_string(k) +
                   " cophenetic=" + fmt_double(bundle_.nmf_cophenetic[cat], 6) + "\n";
        txt += "6. right/left sync-rate ratio: " +
               fmt_double(bundle_.sync_ratio_right_left, 6) + "\n";
        txt += "7. price medians L/R: " +
               (bundle_.price_median_left ? fmt_double(*bundle_.price_median_left, 6) : "n/a") +
               " / " +
               (bundle_.price_median_right ? fmt_double(*bundle_.price_median_right, 6) : "n/a") +
               (bundle_.price_top_quartile_ratio
                    ? " top-quartile ratio " + fmt_double(*bundle_.price_top_quartile_ratio, 6)
                    : "") +
               "\n";
        write_file((report_ / "summary.txt").string(), txt);
    }

private:
    const CrawlSet& crawls_;
    const std::map<std::string, Persona>& personas_;
    const BlockList& blocklist_;
    const TrackerList& trackers_;
    const std::map<std::string, long>& ranks_;
    const AuditParams& params_;
    fs::path report_;
    SiteStats stats_;
    ReportBundle bundle_;
};

// ---------------------------------------------------------------------------
// Fixture generation from a synthetic ecosystem (blocklist / tracker list /
// rank assignments reflect the planted ground truth).
// ---------------------------------------------------------------------------

inline std::string blocklist_json_for(const EcosystemConfig& cfg) {
    ojson j;
    j["version"] = cfg.name + "-blocklist";
    ojson cats = ojson::object();
    for (auto cat : {CookieCategory::advertising, CookieCategory::analytics,
                     CookieCategory::content, CookieCategory::social}) {
        ojson arr = ojson::array();
        for (const auto& t : cfg.trackers)
            if (t.category == cat) arr.push_back(t.domain);
        cats[to_string(cat)] = arr;
    }
    j["categories"] = cats;
    return j.dump(2) + "\n";
}

inline std::string trackers_csv_for(const EcosystemConfig& cfg) {
    std::vector<const TrackerSpec*> ts;
    for (const auto& t : cfg.trackers) ts.push_back(&t);
    std::sort(ts.begin(), ts.end(), [](const TrackerSpec* a, const TrackerSpec* b) {
        if (a->web_prevalence != b->web_prevalence) return a->web_prevalence > b->web_prevalence;
        return a->domain < b->domain;
    });
    std::string csv = "rank,domain,web_prevalence\n";
    int rank = 1;
    for (const auto* t : ts)
        csv += std::to_string(rank++) + "," + t->domain + "," + fmt_double(t->web_prevalence) +
               "\n";
    return csv;
}

inline std::string ranks_csv_for(const SyntheticWeb& web) {
    std::string csv = "site,rank\n";
    for (const auto& s : web.sites)
        if (s.rank) csv += s.domain + "," + std::to_string(*s.rank) + "\n";
    return csv;
}

inline std::map<std::string, long> load_ranks_csv(const std::string& text) {
    std::map<std::string, long> out;
    bool first = true;
    for (const auto& raw : split(text, '\n')) {
        auto line = trim(raw);
        if (line.empty()) continue;
        if (first) {
            first = false;
            if (line.starts_with("site,")) continue;
        }
        auto cols = split(line, ',');
        if (cols.size() != 2) throw AuditError("ranks csv: bad row: " + std::string(line));
        std::int64_t rank = 0;
        if (!parse_i64(trim(cols[1]), rank)) throw AuditError("ranks csv: bad rank: " + cols[1]);
        out[std::string(trim(cols[0]))] = static_cast<long>(rank);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

struct SimulateOutputs {
    SyntheticWeb web;
    GroundTruthManifest manifest;
    CrawlSet crawls;
    std::map<std::string, Persona> personas;
    BlockList blocklist;
    TrackerList trackers;
    std::map<std::string, long> ranks;
};

// Generates the ecosystem, builds personas from building crawls, simulates
// every configured HPW crawl and writes crawls/personas/fixtures under out.
inline SimulateOutputs run_simulation(const EcosystemConfig& cfg, const fs::path& out_dir) {
    SimulateOutputs out;
    auto [web, manifest] = generate(cfg);
    out.web = std::move(web);
    out.manifest = std::move(manifest);

    fs::create_directories(out_dir / "crawls");
    fs::create_directories(out_dir / "personas");
    fs::create_directories(out_dir / "fixtures");
    fs::create_directories(out_dir / "build_crawls");

    write_file((out_dir / "fixtures" / "blocklist.json").string(), blocklist_json_for(cfg));
    write_file((out_dir / "fixtures" / "trackers.csv").string(), trackers_csv_for(cfg));
    write_file((out_dir / "fixtures" / "ranks.csv").string(), ranks_csv_for(out.web));
    out.blocklist = BlockList::from_json(ojson::parse(blocklist_json_for(cfg)));
    out.trackers = TrackerList::parse_csv(trackers_csv_for(cfg));
    out.ranks = load_ranks_csv(ranks_csv_for(out.web));

    std::map<DemographicFeature, Persona> singles;
    for (const auto& demo : out.web.demographics) {
        auto spec = demographic_spec_for(out.web, demo.feature);
        auto crawls = build_crawls_for(out.web, demo.feature);
        fs::path bdir = out_dir / "build_crawls" / to_string(demo.feature);
        fs::create_directories(bdir);
        {
            ojson sj;
            sj["feature"] = to_string(demo.feature);
            sj["sites"] = spec.site_list;
            write_file((bdir / "spec.json").string(), sj.dump(2) + "\n");
        }
        for (std::size_t i = 0; i < crawls.size(); ++i)
            write_file((bdir / (spec.site_list[i] + ".jsonl")).string(),
                       serialize_crawl_log(crawls[i]));
        Persona p = build_persona(spec, crawls, 50);
        p.created_at_ms = cfg.base_timestamp_ms;
        singles[demo.feature] = std::move(p);
    }
    for (const auto& label : cfg.personas) {
        Persona p;
        auto features = out.web.features_of(label);
        if (features.empty()) {
            p = baseline_persona();
            p.created_at_ms = cfg.base_timestamp_ms;
        } else if (features.size() == 1) {
            auto it = singles.find(*features.begin());
            if (it == singles.end())
                throw AuditError("persona " + label + " has no demographic config");
            p = it->second;
        } else {
            auto a = features.begin();
            auto b = std::next(a);
            if (!singles.count(*a) || !singles.count(*b))
                throw AuditError("persona " + label + " has no demographic config");
            p = merge_compound(singles[*a], singles[*b], stream_seed(cfg.seed, "merge", label));
            p.created_at_ms = cfg.base_timestamp_ms;
        }
        if (p.label != label)
            throw AuditError("persona label mismatch: " + p.label + " vs " + label);
        save_persona(p, (out_dir / "personas" / (label + ".json")).string());
        out.personas[label] = std::move(p);
    }

    for (const auto& label : cfg.personas) {
        const Persona& p = out.personas[label];
        for (Lean lean : {Lean::left, Lean::right}) {
            if ((lean == Lean::left && cfg.n_left == 0) ||
                (lean == Lean::right && cfg.n_right == 0))
                continue;
            for (int run = 1; run <= out.web.runs_for(label); ++run) {
                CrawlLog log = simulate_crawl(out.web, p, lean, run);
                std::string name = label + "_" + (lean == Lean::left ? "L" : "R") + "_run" +
                                   std::to_string(run) + ".jsonl";
                write_file((out_dir / "crawls" / name).string(), serialize_crawl_log(log));
                out.crawls.logs.push_back(std::move(log));
            }
        }
    }
    sort_crawl_set(out.crawls);
    return out;
}

inline CrawlSet load_crawls_dir(const std::string& dir) {
    CrawlSet crawls;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        auto ext = entry.path().extension().string();
        if (ext == ".jsonl" || ext == ".log" || ext == ".sqlite" || ext == ".db")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        auto ext = f.extension().string();
        if (ext == ".sqlite" || ext == ".db") {
            crawls.logs.push_back(import_openwpm_db(f.string()));
        } else {
            auto res = load_crawl_log(f.string());
            crawls.logs.push_back(std::move(res.log));
        }
    }
    sort_crawl_set(crawls);
    return crawls;
}

inline std::map<std::string, Persona> load_personas_dir(const std::string& dir) {
    std::map<std::string, Persona> personas;
    if (dir.empty() || !fs::exists(dir)) return personas;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        Persona p = load_persona(f.string());
        personas[p.label] = std::move(p);
    }
    return personas;
}

// Content hash covering everything the analysis consumes, so equivalent
// inputs hash identically regardless of how they were stored on disk.
inline std::string inputs_fingerprint(const CrawlSet& crawls,
                                      const std::map<std::string, Persona>& personas,
                                      const std::string& blocklist_text,
                                      const std::string& trackers_text,
                                      const std::string& ranks_text) {
    std::string acc;
    for (const auto& log : crawls.logs) acc += serialize_crawl_log(log);
    for (const auto& [_, p] : personas) acc += serialize_persona(p);
    acc += blocklist_text;
    acc += trackers_text;
    acc += ranks_text;
    return sha256_hex(acc);
}

namespace detail {

inline void write_provenance(const fs::path& out, const std::string& mode, std::uint64_t seed,
                             const std::string& inputs_hash, const std::string& params_hash,
                             const BlockList& bl) {
    ojson j;
    j["tool"] = "audit";
    j["version"] = kToolVersion;
    j["format_version"] = kLogFormatVersion;
    j["mode"] = mode;
    j["seed"] = seed;
    j["inputs_sha256"] = inputs_hash;
    j["params_sha256"] = params_hash;
    j["psl_version"] = PublicSuffixList::bundled().version();
    j["blocklist_version"] = bl.version;
    write_file((out / "provenance.json").string(), j.dump(2) + "\n");
}

inline std::string params_fingerprint(const AuditParams& p) {
    ojson j;
    j["maturity_threshold"] = p.maturity_threshold;
    j["min_id_length"] = p.sync.min_id_length;
    j["cpm_cap"] = p.prices.cpm_cap;
    j["alpha"] = p.alpha;
    j["rank_edges"] = p.rank_edges;
    j["distinct"] = p.distinct_cookies;
    j["nmf"] = {p.nmf_k_min, p.nmf_k_max, p.nmf_runs, p.nmf_max_iters, p.nmf_tol, p.nmf_seed};
    return sha256_hex(j.dump());
}

} // namespace detail

inline ReportBundle run_audit(const AuditConfig& cfg) {
    if (cfg.out_dir.empty()) throw AuditError("run_audit: out_dir required");
    fs::path out = cfg.out_dir;
    fs::create_directories(out);

    std::string stage = "setup";
    try {
        CrawlSet crawls;
        std::map<std::string, Persona> personas;
        BlockList blocklist;
        TrackerList trackers;
        std::map<std::string, long> ranks;
        std::string bl_text, tr_text, rk_text;
        std::uint64_t seed = 0;
        std::string mode;

        if (cfg.mode == AuditConfig::Mode::simulate) {
            stage = "simulate";
            mode = "simulate";
            EcosystemConfig eco = EcosystemConfig::load(cfg.simulate_config);
            if (cfg.seed_override) eco.seed = *cfg.seed_override;
            seed = eco.seed;
            SimulateOutputs sim = run_simulation(eco, out);
            crawls = std::move(sim.crawls);
            personas = std::move(sim.personas);
            blocklist = std::move(sim.blocklist);
            trackers = std::move(sim.trackers);
            ranks = std::move(sim.ranks);
            bl_text = blocklist_json_for(eco);
            tr_text = trackers_csv_for(eco);
            rk_text = ranks_csv_for(sim.web);
        } else {
            stage = "ingest";
            mode = "ingest";
            crawls = load_crawls_dir(cfg.ingest_crawls);
            personas = load_personas_dir(cfg.ingest_personas);
            bl_text = read_file(cfg.blocklist_path);
            tr_text = read_file(cfg.trackers_path);
            blocklist = BlockList::from_json(ojson::parse(bl_text));
            trackers = TrackerList::parse_csv(tr_text);
            if (!cfg.ranks_path.empty()) {
                rk_text = read_file(cfg.ranks_path);
                ranks = load_ranks_csv(rk_text);
            }
            seed = cfg.seed_override.value_or(0);
        }
        if (crawls.logs.empty()) throw AuditError("no crawl logs to analyze");

        stage = "analyze";
        Analyzer analyzer(crawls, personas, blocklist, trackers, ranks, cfg.params,
                          out / "report");
        analyzer.run_all();

        stage = "provenance";
        detail::write_provenance(out, mode, seed,
                                 inputs_fingerprint(crawls, personas, bl_text, tr_text, rk_text),
                                 detail::params_fingerprint(cfg.params), blocklist);
        return analyzer.bundle();
    } catch (const std::exception& e) {
        ojson fail;
        fail["stage"] = stage;
        fail["error"] = e.what();
        write_file((out / "failure_manifest.json").string(), fail.dump(2) + "\n");
        throw;
    }
}

} // namespace audit
