#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "audit/classify.hpp"
#include "audit/crawl_log.hpp"
#include "audit/csync.hpp"
#include "audit/digest.hpp"
#include "audit/persona.hpp"
#include "audit/util.hpp"

namespace audit {

// ---------------------------------------------------------------------------
// Seeded synthetic web: a configurable population of left/right sites with
// embedded trackers, demographic persona-building sites, planted cookie
// volumes, sync chains and RTB win notifications. Everything is derived from
// per-(site, persona, run) RNG streams hashed off the master seed, so output
// is deterministic and independent of visit order.
// ---------------------------------------------------------------------------

// Count distribution: fixed n, poisson(mean), or negative_binomial(mean,
// dispersion) sampled as a gamma-poisson mixture. Means scale linearly under
// persona/lean/rank multipliers.
struct CountDist {
    enum class Family { fixed, poisson, negative_binomial } family = Family::fixed;
    double value = 0.0; // fixed
    double mean = 0.0;
    double dispersion = 1.0; // negbin shape r; variance = mean + mean^2/r

    static CountDist from_json(const ojson& j, const std::string& field) {
        CountDist d;
        std::string fam = j.at("family").get<std::string>();
        if (fam == "fixed") {
            d.family = Family::fixed;
            d.value = j.at("value").get<double>();
            if (d.value < 0) throw AuditError("config field " + field + ": negative fixed value");
        } else if (fam == "poisson") {
            d.family = Family::poisson;
            d.mean = j.at("mean").get<double>();
            if (d.mean < 0) throw AuditError("config field " + field + ": negative mean");
        } else if (fam == "negative_binomial") {
            d.family = Family::negative_binomial;
            d.mean = j.at("mean").get<double>();
            d.dispersion = j.at("dispersion").get<double>();
            if (d.mean < 0) throw AuditError("config field " + field + ": negative mean");
            if (d.dispersion <= 0)
                throw AuditError("config field " + field + ": dispersion must be > 0");
        } else {
            throw AuditError("config field " + field + ": unknown family " + fam);
        }
        return d;
    }

    double expected() const { return family == Family::fixed ? value : mean; }

    long sample(std::mt19937_64& rng, double multiplier = 1.0) const {
        switch (family) {
            case Family::fixed:
                return std::lround(value * multiplier);
            case Family::poisson: {
                double m = mean * multiplier;
                if (m <= 0) return 0;
                return std::poisson_distribution<long>(m)(rng);
            }
            case Family::negative_binomial: {
                double m = mean * multiplier;
                if (m <= 0) return 0;
                std::gamma_distribution<double> g(dispersion, m / dispersion);
                double lambda = g(rng);
                if (lambda <= 0) return 0;
                return std::poisson_distribution<long>(lambda)(rng);
            }
        }
        return 0;
    }
};

// Price value distribution: lognormal(mu, sigma) or a replayed value list
// cycled per notification (exact medians for replay fixtures).
struct PriceDist {
    enum class Family { lognormal, replay } family = Family::lognormal;
    double mu = 0.0;
    double sigma = 1.0;
    std::vector<double> values;

    static PriceDist from_json(const ojson& j, const std::string& field) {
        PriceDist d;
        std::string fam = j.at("family").get<std::string>();
        if (fam == "lognormal") {
            d.family = Family::lognormal;
            d.mu = j.at("mu").get<double>();
            d.sigma = j.at("sigma").get<double>();
            if (d.sigma <= 0) throw AuditError("config field " + field + ": sigma must be > 0");
        } else if (fam == "replay") {
            d.family = Family::replay;
            for (const auto& v : j.at("values")) {
                double x = v.get<double>();
                if (x < 0) throw AuditError("config field " + field + ": negative price");
                d.values.push_back(x);
            }
            if (d.values.empty()) throw AuditError("config field " + field + ": empty value list");
        } else {
            throw AuditError("config field " + field + ": unknown family " + fam);
        }
        return d;
    }

    double sample(std::mt19937_64& rng, std::size_t replay_idx) const {
        if (family == Family::replay) return values[replay_idx % values.size()];
        return std::lognormal_distribution<double>(mu, sigma)(rng);
    }
};

struct TrackerSpec {
    std::string domain;
    CookieCategory category = CookieCategory::advertising;
    double embed_left = 0.0;
    double embed_right = 0.0;
    CountDist cookies_per_visit;
    double web_prevalence = 0.0; // reference-list column
    bool rtb_bidder = false;
    bool sync_partner = false;
};

struct PersonaResponseRule {
    DemographicFeature demographic = DemographicFeature::young;
    std::string tracker = "*"; // "*", "first-party", or a tracker domain
    double multiplier = 1.0;
};

struct DemographicConfig {
    DemographicFeature feature = DemographicFeature::young;
    int n_sites = 10;
    int pool_size = 60;          // distinct third parties available to this demographic
    int trackers_per_site = 12;  // sampled per site from the pool
    int cookies_per_tracker = 2;
    int first_party_cookies = 3;
};

struct RankBucketConfig {
    long max_rank = 0;
    double weight = 1.0;
    double cookie_multiplier = 1.0;
};

struct EcosystemConfig {
    std::string name = "unnamed";
    std::uint64_t seed = 1;
    std::int64_t base_timestamp_ms = 1541030400000; // fixed epoch keeps runs reproducible
    int n_left = 0;
    int n_right = 0;
    int runs_per_persona = 2;
    int runs_per_baseline = 2;
    std::vector<std::string> personas = {"baseline", "Y", "S", "W",
                                         "M",        "YW", "YM", "SW", "SM"};
    CountDist first_party_cookies;
    double lean_multiplier_left = 1.0;
    double lean_multiplier_right = 1.0;
    long extra_cookies_left = 0;  // deterministic additions on top of the draw
    long extra_cookies_right = 0;
    std::vector<TrackerSpec> trackers;

    CountDist sync_chains_left, sync_chains_right;
    int sync_id_length = 16;
    std::vector<IdEncoding> sync_encodings = {IdEncoding::plain};
    double sync_jar_reuse_fraction = 0.0;

    CountDist price_notifications_left, price_notifications_right;
    PriceDist price_left, price_right;
    double price_opaque_fraction = 0.0;
    double price_macro_fraction = 0.0;

    double ranked_fraction = 0.0;
    std::vector<RankBucketConfig> rank_buckets;
    double unranked_multiplier = 1.0;

    std::vector<PersonaResponseRule> persona_response;
    std::vector<DemographicConfig> demographics;

    static EcosystemConfig from_json(const ojson& j);
    static EcosystemConfig load(const std::string& path) {
        return from_json(ojson::parse(read_file(path)));
    }
};

inline EcosystemConfig EcosystemConfig::from_json(const ojson& j) {
    EcosystemConfig c;
    auto probability = [&](double p, const std::string& field) {
        if (p < 0.0 || p > 1.0) throw AuditError("config field " + field + ": not in [0,1]");
        return p;
    };
    if (auto it = j.find("name"); it != j.end()) c.name = it->get<std::string>();
    if (auto it = j.find("seed"); it != j.end()) c.seed = it->get<std::uint64_t>();
    if (auto it = j.find("base_timestamp_ms"); it != j.end())
        c.base_timestamp_ms = it->get<std::int64_t>();
    const auto& sites = j.at("sites");
    c.n_left = sites.at("n_left").get<int>();
    c.n_right = sites.at("n_right").get<int>();
    if (c.n_left < 0 || c.n_right < 0) throw AuditError("config field sites: negative count");
    if (auto it = j.find("runs"); it != j.end()) {
        c.runs_per_persona = it->at("per_persona").get<int>();
        c.runs_per_baseline = it->at("per_baseline").get<int>();
        if (c.runs_per_persona < 1 || c.runs_per_baseline < 1)
            throw AuditError("config field runs: must be >= 1");
    }
    if (auto it = j.find("personas"); it != j.end()) {
        c.personas.clear();
        for (const auto& p : *it) c.personas.push_back(p.get<std::string>());
        if (c.personas.empty()) throw AuditError("config field personas: empty");
    }
    c.first_party_cookies = CountDist::from_json(j.at("first_party_cookies"), "first_party_cookies");
    if (auto it = j.find("lean_cookie_multiplier"); it != j.end()) {
        c.lean_multiplier_left = it->at("left").get<double>();
        c.lean_multiplier_right = it->at("right").get<double>();
        if (c.lean_multiplier_left < 0 || c.lean_multiplier_right < 0)
            throw AuditError("config field lean_cookie_multiplier: negative");
    }
    if (auto it = j.find("extra_cookies"); it != j.end()) {
        c.extra_cookies_left = it->at("left").get<long>();
        c.extra_cookies_right = it->at("right").get<long>();
    }
    if (auto it = j.find("trackers"); it != j.end()) {
        for (const auto& t : *it) {
            TrackerSpec ts;
            ts.domain = to_lower(t.at("domain").get<std::string>());
            auto cat = category_from(t.at("category").get<std::string>());
            if (!cat || *cat == CookieCategory::first_party)
                throw AuditError("config field trackers.category: invalid for " + ts.domain);
            ts.category = *cat;
            ts.embed_left = probability(t.at("embed_prob").at("left").get<double>(),
                                        "trackers.embed_prob.left");
            ts.embed_right = probability(t.at("embed_prob").at("right").get<double>(),
                                         "trackers.embed_prob.right");
            ts.cookies_per_visit =
                CountDist::from_json(t.at("cookies_per_visit"), "trackers.cookies_per_visit");
            if (auto w = t.find("web_prevalence"); w != t.end())
                ts.web_prevalence = probability(w->get<double>(), "trackers.web_prevalence");
            if (auto b = t.find("rtb_bidder"); b != t.end()) ts.rtb_bidder = b->get<bool>();
            if (auto s = t.find("sync_partner"); s != t.end()) ts.sync_partner = s->get<bool>();
            c.trackers.push_back(std::move(ts));
        }
    }
    if (auto it = j.find("sync"); it != j.end()) {
        c.sync_chains_left = CountDist::from_json(it->at("chains_per_visit").at("left"),
                                                  "sync.chains_per_visit.left");
        c.sync_chains_right = CountDist::from_json(it->at("chains_per_visit").at("right"),
                                                   "sync.chains_per_visit.right");
        if (auto l = it->find("id_length"); l != it->end()) {
            c.sync_id_length = l->get<int>();
            if (c.sync_id_length < 8) throw AuditError("config field sync.id_length: must be >= 8");
        }
        if (auto e = it->find("encodings"); e != it->end()) {
            c.sync_encodings.clear();
            for (const auto& enc : *e) {
                auto parsed = id_encoding_from(enc.get<std::string>());
                if (!parsed) throw AuditError("config field sync.encodings: unknown encoding");
                c.sync_encodings.push_back(*parsed);
            }
            if (c.sync_encodings.empty()) throw AuditError("config field sync.encodings: empty");
        }
        if (auto r = it->find("jar_reuse_fraction"); r != it->end())
            c.sync_jar_reuse_fraction = probability(r->get<double>(), "sync.jar_reuse_fraction");
    }
    if (auto it = j.find("prices"); it != j.end()) {
        c.price_notifications_left = CountDist::from_json(
            it->at("notifications_per_visit").at("left"), "prices.notifications_per_visit.left");
        c.price_notifications_right = CountDist::from_json(
            it->at("notifications_per_visit").at("right"), "prices.notifications_per_visit.right");
        c.price_left = PriceDist::from_json(it->at("values").at("left"), "prices.values.left");
        c.price_right = PriceDist::from_json(it->at("values").at("right"), "prices.values.right");
        if (auto o = it->find("opaque_fraction"); o != it->end())
            c.price_opaque_fraction = probability(o->get<double>(), "prices.opaque_fraction");
        if (auto m = it->find("macro_fraction"); m != it->end())
            c.price_macro_fraction = probability(m->get<double>(), "prices.macro_fraction");
        if (c.price_opaque_fraction + c.price_macro_fraction > 1.0)
            throw AuditError("config field prices: opaque+macro fractions exceed 1");
    }
    if (auto it = j.find("ranks"); it != j.end()) {
        c.ranked_fraction = probability(it->at("ranked_fraction").get<double>(),
                                        "ranks.ranked_fraction");
        long prev = 0;
        for (const auto& b : it->at("buckets")) {
            RankBucketConfig rb;
            rb.max_rank = b.at("max_rank").get<long>();
            rb.weight = b.at("weight").get<double>();
            if (auto m = b.find("cookie_multiplier"); m != b.end())
                rb.cookie_multiplier = m->get<double>();
            if (rb.max_rank <= prev)
                throw AuditError("config field ranks.buckets: max_rank must increase");
            if (rb.weight < 0) throw AuditError("config field ranks.buckets: negative weight");
            prev = rb.max_rank;
            c.rank_buckets.push_back(rb);
        }
        if (auto m = it->find("unranked_multiplier"); m != it->end())
            c.unranked_multiplier = m->get<double>();
        if (c.ranked_fraction > 0 && c.rank_buckets.empty())
            throw AuditError("config field ranks.buckets: empty with ranked_fraction > 0");
    }
    if (auto it = j.find("persona_response"); it != j.end()) {
        for (const auto& r : *it) {
            PersonaResponseRule rule;
            auto f = feature_from(r.at("demographic").get<std::string>());
            if (!f) throw AuditError("config field persona_response.demographic: unknown");
            rule.demographic = *f;
            if (auto t = r.find("tracker"); t != r.end()) rule.tracker = t->get<std::string>();
            rule.multiplier = r.at("multiplier").get<double>();
            if (rule.multiplier < 0)
                throw AuditError("config field persona_response.multiplier: negative");
            c.persona_response.push_back(std::move(rule));
        }
    }
    if (auto it = j.find("demographics"); it != j.end()) {
        for (const auto& d : *it) {
            DemographicConfig dc;
            auto f = feature_from(d.at("feature").get<std::string>());
            if (!f) throw AuditError("config field demographics.feature: unknown");
            dc.feature = *f;
            dc.n_sites = d.at("n_sites").get<int>();
            dc.pool_size = d.at("pool_size").get<int>();
            dc.trackers_per_site = d.at("trackers_per_site").get<int>();
            if (auto x = d.find("cookies_per_tracker"); x != d.end())
                dc.cookies_per_tracker = x->get<int>();
            if (auto x = d.find("first_party_cookies"); x != d.end())
                dc.first_party_cookies = x->get<int>();
            if (dc.n_sites < 1 || dc.pool_size < 1 || dc.trackers_per_site < 1)
                throw AuditError("config field demographics: counts must be >= 1");
            if (dc.trackers_per_site > dc.pool_size)
                throw AuditError("config field demographics: trackers_per_site exceeds pool");
            c.demographics.push_back(dc);
        }
    }
    return c;
}

// ---------------------------------------------------------------------------
// Generated structures
// ---------------------------------------------------------------------------

struct SiteSpec {
    std::string domain;
    Lean lean = Lean::left;
    std::optional<long> rank;
    double rank_multiplier = 1.0;
    std::vector<std::size_t> trackers; // indexes into config.trackers
};

struct DemographicSitePlan {
    std::string site;
    std::vector<std::string> third_parties; // pool domains embedded on this site
};

struct DemographicPlan {
    DemographicFeature feature = DemographicFeature::young;
    std::vector<std::string> pool;
    std::vector<DemographicSitePlan> sites;
};

struct PlantedSync {
    std::string persona_label;
    Lean lean = Lean::none;
    int run = 1;
    std::string site;
    std::string id_plain;
    std::string encoded;
    IdEncoding encoding = IdEncoding::plain;
    std::string sender;
    std::string receiver;
    std::string carrier_url;
};

struct PlantedPrice {
    std::string persona_label;
    Lean lean = Lean::none;
    int run = 1;
    std::string site;
    std::string bidder;
    double cpm = 0.0;
    bool opaque = false;
    bool macro = false;
};

struct GroundTruthManifest {
    // static structure
    std::map<std::string, std::set<std::string>> tracker_sites; // tracker -> embedded sites
    std::map<std::string, std::vector<DemographicSitePlan>> demographic_sites; // feature name
    double expected_mean_ratio_right_left = 1.0;
    std::map<std::string, double> persona_expected_multiplier; // from "*" rules only
    // planted events, across every configured (persona, lean, run, site)
    std::vector<PlantedSync> syncs;
    std::vector<PlantedPrice> prices;
    // key "<persona>|<lean>|<run>|<site>" -> planted cookie observations
    std::map<std::string, std::size_t> cookie_totals;

    static std::string visit_key(const std::string& persona, Lean lean, int run,
                                 const std::string& site) {
        return persona + "|" + to_string(lean) + "|" + std::to_string(run) + "|" + site;
    }
};

struct SyntheticWeb {
    EcosystemConfig config;
    std::vector<SiteSpec> sites; // left block then right block
    std::vector<DemographicPlan> demographics;

    const SiteSpec* find_site(std::string_view domain) const {
        for (const auto& s : sites)
            if (s.domain == domain) return &s;
        return nullptr;
    }

    std::set<DemographicFeature> features_of(const std::string& label) const {
        std::set<DemographicFeature> out;
        if (label == "baseline") return out;
        for (char ch : label) {
            switch (ch) {
                case 'Y': out.insert(DemographicFeature::young); break;
                case 'S': out.insert(DemographicFeature::senior); break;
                case 'W': out.insert(DemographicFeature::woman); break;
                case 'M': out.insert(DemographicFeature::man); break;
                default: throw AuditError("unknown persona label: " + label);
            }
        }
        return out;
    }

    int runs_for(const std::string& label) const {
        return label == "baseline" ? config.runs_per_baseline : config.runs_per_persona;
    }
};

namespace detail {

inline std::string zero_pad(int v, int width) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

inline std::string rand_token(std::mt19937_64& rng, int length, bool with_symbols = false) {
    static const char* alnum =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
    std::string s;
    s.reserve(static_cast<std::size_t>(length));
    for (int i = 0; i < length; ++i) s += alnum[rng() % 62];
    if (with_symbols && length >= 4) {
        // base64-flavored IDs so url-encoding differs from the plain form
        s[1 + rng() % static_cast<std::size_t>(length - 2)] = '+';
        s[1 + rng() % static_cast<std::size_t>(length - 2)] = '/';
    }
    return s;
}

inline std::string encode_sync_id(const std::string& id, IdEncoding enc) {
    switch (enc) {
        case IdEncoding::plain: return id;
        case IdEncoding::url_encoded: return percent_encode(id);
        case IdEncoding::base64: return base64_encode(id);
        case IdEncoding::md5_hex: return md5_hex(id);
        case IdEncoding::sha1_hex: return sha1_hex(id);
    }
    return id;
}

} // namespace detail

// Effective cookie multiplier for (persona features, tracker key). Per
// feature, matching rule multipliers multiply; across features the geometric
// mean applies, so single-feature personas express their rule exactly and
// compounds blend theirs.
inline double persona_multiplier(const EcosystemConfig& cfg,
                                 const std::set<DemographicFeature>& features,
                                 std::string_view tracker_key) {
    if (features.empty()) return 1.0;
    double log_sum = 0.0;
    for (auto f : features) {
        double m = 1.0;
        for (const auto& rule : cfg.persona_response) {
            if (rule.demographic != f) continue;
            if (rule.tracker == "*" || rule.tracker == tracker_key) m *= rule.multiplier;
        }
        log_sum += std::log(m);
    }
    return std::exp(log_sum / static_cast<double>(features.size()));
}

// Everything one visit produces. Built identically by the manifest pass and
// by crawl emission, so the manifest describes the logs exactly.
struct VisitPlan {
    std::vector<HttpEvent> events;
    std::vector<CookieRecord> cookies;
    std::vector<PlantedSync> syncs;
    std::vector<PlantedPrice> prices;
};

namespace detail {

struct JarIdSource {
    std::vector<std::pair<std::string, std::string>> entries; // (owner, token)
};

inline VisitPlan plan_visit(const SyntheticWeb& web, const std::string& label,
                            const std::set<DemographicFeature>& features, const SiteSpec& site,
                            int run, std::size_t position, const JarIdSource* jar_ids) {
    const EcosystemConfig& cfg = web.config;
    VisitPlan plan;
    std::mt19937_64 rng(stream_seed(cfg.seed, "visit", site.domain, label,
                                    static_cast<std::uint64_t>(run)));
    const Lean lean = site.lean;
    const double lean_mult =
        lean == Lean::left ? cfg.lean_multiplier_left : cfg.lean_multiplier_right;
    const double base_mult = lean_mult * site.rank_multiplier;

    std::int64_t ts = cfg.base_timestamp_ms + static_cast<std::int64_t>(position) * 60'000;
    auto next_ts = [&] { return ++ts; };

    const std::string page_url = "https://" + site.domain + "/";
    const std::string visit_id =
        "v-" + label + "-" + std::string(1, lean == Lean::left ? 'L' : 'R') + "-" + site.domain +
        "-r" + std::to_string(run);

    auto push_event = [&](HttpKind kind, std::string url, std::optional<std::string> referrer,
                          std::optional<std::string> location = std::nullopt) {
        HttpEvent e;
        e.kind = kind;
        e.url = std::move(url);
        e.referrer = std::move(referrer);
        e.location = std::move(location);
        auto parsed = parse_url(e.url);
        e.headers = {{"host", parsed ? parsed->host : site.domain}};
        e.visit_id = visit_id;
        e.site = site.domain;
        e.timestamp_ms = next_ts();
        plan.events.push_back(std::move(e));
    };
    auto push_cookie = [&](const std::string& owner, std::string name, std::string value) {
        CookieRecord c;
        c.owner = owner;
        c.name = std::move(name);
        c.value = std::move(value);
        c.source = rng() % 2 ? CookieSource::script : CookieSource::header;
        c.visit_id = visit_id;
        c.site = site.domain;
        c.timestamp_ms = next_ts();
        plan.cookies.push_back(std::move(c));
    };

    push_event(HttpKind::request, page_url, std::nullopt);
    push_event(HttpKind::response, page_url, std::nullopt);

    // first-party cookies
    long fp_count = cfg.first_party_cookies.sample(
        rng, base_mult * persona_multiplier(cfg, features, "first-party"));
    fp_count += lean == Lean::left ? cfg.extra_cookies_left : cfg.extra_cookies_right;
    static const char* kFpNames[] = {"session", "csrf", "prefs", "ab_bucket", "consent"};
    for (long i = 0; i < fp_count; ++i)
        push_cookie(site.domain, kFpNames[rng() % 5] + std::string("_") + std::to_string(i),
                    rand_token(rng, 12));

    // embedded trackers: tag request + cookies + occasional self-beacon
    std::vector<const TrackerSpec*> partners, bidders;
    for (std::size_t ti : site.trackers) {
        const TrackerSpec& t = cfg.trackers[ti];
        static const char* kPrefixes[] = {"static", "cdn", "tags", "px"};
        std::string tag_url = "https://" + std::string(kPrefixes[rng() % 4]) + "." + t.domain +
                              "/tag.js?cb=" + std::to_string(rng() % 1000000000);
        push_event(HttpKind::request, tag_url, page_url);
        push_event(HttpKind::response, tag_url, page_url);

        long n = t.cookies_per_visit.sample(
            rng, base_mult * persona_multiplier(cfg, features, t.domain));
        std::string first_token;
        for (long i = 0; i < n; ++i) {
            std::string token = rand_token(rng, cfg.sync_id_length);
            if (i == 0) first_token = token;
            std::string value = rng() % 3 == 0
                                    ? "id=" + token + "&ts=" + std::to_string(ts)
                                    : token;
            push_cookie(t.domain, i == 0 ? "uid" : "seg" + std::to_string(i), std::move(value));
        }
        if (n > 0 && rng() % 2 == 0) {
            // tracker phones home its own ID; never a sync (sender == receiver)
            push_event(HttpKind::request,
                       "https://px." + t.domain + "/b?uid=" + first_token, page_url);
        }
        if (t.sync_partner) partners.push_back(&t);
        if (t.rtb_bidder) bidders.push_back(&t);
    }

    // cookie-sync chains
    const CountDist& chain_dist =
        lean == Lean::left ? cfg.sync_chains_left : cfg.sync_chains_right;
    long chains = partners.size() >= 2 ? chain_dist.sample(rng) : 0;
    for (long i = 0; i < chains; ++i) {
        const IdEncoding enc = cfg.sync_encodings[rng() % cfg.sync_encodings.size()];
        std::string sender, id;
        bool from_jar = false;
        if (jar_ids && !jar_ids->entries.empty() &&
            std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg.sync_jar_reuse_fraction) {
            const auto& [owner, token] = jar_ids->entries[rng() % jar_ids->entries.size()];
            sender = owner;
            id = token;
            from_jar = true;
        } else {
            sender = partners[rng() % partners.size()]->domain;
            id = rand_token(rng, cfg.sync_id_length, enc == IdEncoding::url_encoded);
        }
        std::string receiver = sender;
        for (int attempt = 0; attempt < 16 && receiver == sender; ++attempt)
            receiver = partners[rng() % partners.size()]->domain;
        if (receiver == sender) continue; // sender is the only partner
        if (!from_jar) push_cookie(sender, "uid_sync" + std::to_string(i), id);

        std::string encoded = encode_sync_id(id, enc);
        std::string carrier;
        // base64 can contain '/', which would split a path segment
        bool path_style = enc != IdEncoding::base64 && rng() % 4 == 0;
        if (path_style) {
            carrier = "https://sync." + receiver + "/match/" + encoded +
                      "?pid=" + std::to_string(rng() % 10000);
        } else {
            carrier = "https://sync." + receiver + "/match?pid=" +
                      std::to_string(rng() % 10000) + "&puid=" + encoded;
        }
        if (rng() % 2 == 0) {
            push_event(HttpKind::request, carrier, page_url);
        } else {
            std::string hop = "https://cm." + sender + "/redir?r=" + std::to_string(rng() % 10000);
            push_event(HttpKind::request, hop, page_url);
            push_event(HttpKind::redirect, hop, page_url, carrier);
            push_event(HttpKind::request, carrier, std::nullopt);
        }
        plan.syncs.push_back({label, lean, run, site.domain, id, encoded, enc, sender, receiver,
                              carrier});
    }

    // RTB win notifications
    const CountDist& notif_dist =
        lean == Lean::left ? cfg.price_notifications_left : cfg.price_notifications_right;
    const PriceDist& price_dist = lean == Lean::left ? cfg.price_left : cfg.price_right;
    long notifs = bidders.empty() ? 0 : notif_dist.sample(rng);
    std::size_t replay_idx = 0;
    for (long i = 0; i < notifs; ++i) {
        const std::string& bidder = bidders[rng() % bidders.size()]->domain;
        double roll = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        std::string iid = std::to_string(rng() % 1000000000);
        if (roll < cfg.price_macro_fraction) {
            push_event(HttpKind::request,
                       "https://rtb." + bidder + "/win?price=${AUCTION_PRICE}&iid=" + iid,
                       page_url);
            plan.prices.push_back({label, lean, run, site.domain, bidder, 0.0, false, true});
        } else if (roll < cfg.price_macro_fraction + cfg.price_opaque_fraction) {
            push_event(HttpKind::request,
                       "https://rtb." + bidder + "/win?wp=" +
                           base64_encode(rand_token(rng, 9), false) + "&iid=" + iid,
                       page_url);
            plan.prices.push_back({label, lean, run, site.domain, bidder, 0.0, true, false});
        } else {
            double cpm = price_dist.sample(rng, replay_idx++);
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.3f", cpm);
            double planted = 0.0;
            parse_double(buf, planted); // what the log actually carries
            push_event(HttpKind::request,
                       "https://rtb." + bidder + "/win?price=" + buf + "&iid=" + iid, page_url);
            plan.prices.push_back({label, lean, run, site.domain, bidder, planted, false, false});
        }
    }
    return plan;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

inline SyntheticWeb make_synthetic_web(const EcosystemConfig& cfg) {
    SyntheticWeb web;
    web.config = cfg;
    static const char* kLeftStems[] = {"ledger", "herald", "beacon", "chronicle"};
    static const char* kRightStems[] = {"dispatch", "tribune", "sentinel", "standard"};

    auto make_sites = [&](Lean lean, int n) {
        for (int i = 1; i <= n; ++i) {
            SiteSpec s;
            const char* stem = lean == Lean::left ? kLeftStems[i % 4] : kRightStems[i % 4];
            s.domain = std::string(lean == Lean::left ? "left-" : "right-") + stem + "-" +
                       detail::zero_pad(i, 3) + ".com";
            s.lean = lean;
            std::mt19937_64 rng(stream_seed(cfg.seed, "site", s.domain));
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            if (!cfg.rank_buckets.empty() && unit(rng) < cfg.ranked_fraction) {
                double total = 0.0;
                for (const auto& b : cfg.rank_buckets) total += b.weight;
                double pick = unit(rng) * total;
                long lo = 1;
                for (const auto& b : cfg.rank_buckets) {
                    if (pick < b.weight || &b == &cfg.rank_buckets.back()) {
                        s.rank = lo + static_cast<long>(rng() % static_cast<std::uint64_t>(
                                                            b.max_rank - lo + 1));
                        s.rank_multiplier = b.cookie_multiplier;
                        break;
                    }
                    pick -= b.weight;
                    lo = b.max_rank + 1;
                }
            } else {
                s.rank_multiplier = cfg.unranked_multiplier;
            }
            for (std::size_t ti = 0; ti < cfg.trackers.size(); ++ti) {
                double p = lean == Lean::left ? cfg.trackers[ti].embed_left
                                              : cfg.trackers[ti].embed_right;
                std::mt19937_64 erng(
                    stream_seed(cfg.seed, "embed", s.domain, cfg.trackers[ti].domain, 0));
                if (std::uniform_real_distribution<double>(0.0, 1.0)(erng) < p)
                    s.trackers.push_back(ti);
            }
            web.sites.push_back(std::move(s));
        }
    };
    make_sites(Lean::left, cfg.n_left);
    make_sites(Lean::right, cfg.n_right);

    for (const auto& dc : cfg.demographics) {
        DemographicPlan plan;
        plan.feature = dc.feature;
        std::string fname = to_string(dc.feature);
        for (int i = 1; i <= dc.pool_size; ++i)
            plan.pool.push_back(fname + "-tracker-" + detail::zero_pad(i, 2) + ".com");
        for (int i = 1; i <= dc.n_sites; ++i) {
            DemographicSitePlan sp;
            sp.site = fname + "-site-" + detail::zero_pad(i, 2) + ".com";
            std::mt19937_64 rng(stream_seed(cfg.seed, "demo-site", sp.site));
            std::vector<std::string> pool = plan.pool;
            for (int k = 0; k < dc.trackers_per_site; ++k) {
                std::size_t idx = rng() % pool.size();
                sp.third_parties.push_back(pool[idx]);
                pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(idx));
            }
            std::sort(sp.third_parties.begin(), sp.third_parties.end());
            plan.sites.push_back(std::move(sp));
        }
        web.demographics.push_back(std::move(plan));
    }
    return web;
}

// Persona-building crawl for one demographic site: a stateful visit that
// deposits the site's third-party cookies into the jar being grown.
inline CrawlLog build_crawl(const SyntheticWeb& web, const DemographicPlan& demo,
                            std::size_t site_idx) {
    const EcosystemConfig& cfg = web.config;
    const auto& sp = demo.sites.at(site_idx);
    const DemographicConfig* dc = nullptr;
    for (const auto& d : cfg.demographics)
        if (d.feature == demo.feature) dc = &d;
    if (!dc) throw AuditError("build_crawl: demographic not configured");

    CrawlLog log;
    log.persona_label = label_for({demo.feature});
    log.lean = Lean::none;
    log.run_index = 1;

    std::mt19937_64 rng(stream_seed(cfg.seed, "build", sp.site));
    std::int64_t ts = cfg.base_timestamp_ms - 86'400'000 +
                      static_cast<std::int64_t>(site_idx) * 60'000;
    std::string visit_id = "b-" + log.persona_label + "-" + sp.site;
    std::string page_url = "https://" + sp.site + "/";

    auto push_event = [&](HttpKind kind, std::string url, std::optional<std::string> ref) {
        HttpEvent e;
        e.kind = kind;
        e.url = std::move(url);
        e.referrer = std::move(ref);
        auto parsed = parse_url(e.url);
        e.headers = {{"host", parsed ? parsed->host : sp.site}};
        e.visit_id = visit_id;
        e.site = sp.site;
        e.timestamp_ms = ++ts;
        log.events.push_back(std::move(e));
    };
    auto push_cookie = [&](const std::string& owner, std::string name, std::string value) {
        CookieRecord c;
        c.owner = owner;
        c.name = std::move(name);
        c.value = std::move(value);
        c.source = rng() % 2 ? CookieSource::script : CookieSource::header;
        c.visit_id = visit_id;
        c.site = sp.site;
        c.timestamp_ms = ++ts;
        log.cookies.push_back(std::move(c));
    };

    push_event(HttpKind::request, page_url, std::nullopt);
    push_event(HttpKind::response, page_url, std::nullopt);
    for (int i = 0; i < dc->first_party_cookies; ++i)
        push_cookie(sp.site, "fp_" + std::to_string(i), detail::rand_token(rng, 12));
    for (const auto& tp : sp.third_parties) {
        std::string tag = "https://cdn." + tp + "/sync.js?cb=" + std::to_string(rng() % 100000);
        push_event(HttpKind::request, tag, page_url);
        push_event(HttpKind::response, tag, page_url);
        for (int i = 0; i < dc->cookies_per_tracker; ++i)
            push_cookie(tp, i == 0 ? "uid" : "seg" + std::to_string(i),
                        detail::rand_token(rng, cfg.sync_id_length));
    }
    return log;
}

inline std::vector<CrawlLog> build_crawls_for(const SyntheticWeb& web,
                                              DemographicFeature feature) {
    for (const auto& demo : web.demographics) {
        if (demo.feature != feature) continue;
        std::vector<CrawlLog> crawls;
        for (std::size_t i = 0; i < demo.sites.size(); ++i)
            crawls.push_back(build_crawl(web, demo, i));
        return crawls;
    }
    throw AuditError("build_crawls_for: demographic not in web");
}

inline DemographicSpec demographic_spec_for(const SyntheticWeb& web, DemographicFeature feature) {
    for (const auto& demo : web.demographics) {
        if (demo.feature != feature) continue;
        DemographicSpec spec;
        spec.feature = feature;
        for (const auto& s : demo.sites) spec.site_list.push_back(s.site);
        return spec;
    }
    throw AuditError("demographic_spec_for: demographic not in web");
}

namespace detail {

// Jar-derived (owner, token) pairs available to a persona for ID reuse,
// reproduced from the deterministic build plans (no crawling needed).
inline JarIdSource jar_ids_for(const SyntheticWeb& web,
                               const std::set<DemographicFeature>& features) {
    JarIdSource src;
    for (auto f : features) {
        for (const auto& demo : web.demographics) {
            if (demo.feature != f) continue;
            for (std::size_t i = 0; i < demo.sites.size(); ++i) {
                CrawlLog log = build_crawl(web, demo, i);
                for (const auto& c : log.cookies)
                    if (c.owner != c.site && c.name == "uid")
                        src.entries.emplace_back(c.owner, c.value);
            }
        }
    }
    return src;
}

} // namespace detail

// One crawl log per (persona, lean, run): every site of that lean visited
// once, stateless across sites.
inline CrawlLog simulate_crawl(const SyntheticWeb& web, const Persona& persona, Lean lean,
                               int run) {
    if (lean == Lean::none) throw AuditError("simulate_crawl: lean must be left or right");
    CrawlLog log;
    log.persona_label = persona.label;
    log.lean = lean;
    log.run_index = run;

    auto features = persona.demographics;
    detail::JarIdSource jar_ids;
    if (web.config.sync_jar_reuse_fraction > 0 && !features.empty())
        jar_ids = detail::jar_ids_for(web, features);

    std::size_t position = 0;
    for (const auto& site : web.sites) {
        if (site.lean != lean) continue;
        VisitPlan plan = detail::plan_visit(web, persona.label, features, site, run, position++,
                                            &jar_ids);
        for (auto& e : plan.events) log.events.push_back(std::move(e));
        for (auto& c : plan.cookies) log.cookies.push_back(std::move(c));
    }
    return log;
}

// Synthetic web plus the manifest covering every configured crawl.
inline std::pair<SyntheticWeb, GroundTruthManifest> generate(const EcosystemConfig& cfg) {
    SyntheticWeb web = make_synthetic_web(cfg);
    GroundTruthManifest manifest;

    for (const auto& s : web.sites)
        for (std::size_t ti : s.trackers)
            manifest.tracker_sites[cfg.trackers[ti].domain].insert(s.domain);
    for (const auto& demo : web.demographics)
        manifest.demographic_sites[to_string(demo.feature)] = demo.sites;

    // analytic per-lean expectation (exact when embed probabilities and rank
    // distributions match across leans)
    auto expected_mean = [&](Lean lean) {
        double mult = lean == Lean::left ? cfg.lean_multiplier_left : cfg.lean_multiplier_right;
        double tracker_part = 0.0;
        for (const auto& t : cfg.trackers)
            tracker_part += (lean == Lean::left ? t.embed_left : t.embed_right) *
                            t.cookies_per_visit.expected();
        double extra = static_cast<double>(lean == Lean::left ? cfg.extra_cookies_left
                                                              : cfg.extra_cookies_right);
        return mult * (cfg.first_party_cookies.expected() + tracker_part) + extra;
    };
    double left_mean = expected_mean(Lean::left);
    manifest.expected_mean_ratio_right_left =
        left_mean > 0 ? expected_mean(Lean::right) / left_mean : 1.0;

    for (const auto& label : cfg.personas)
        manifest.persona_expected_multiplier[label] =
            persona_multiplier(cfg, web.features_of(label), "*");

    for (const auto& label : cfg.personas) {
        auto features = web.features_of(label);
        detail::JarIdSource jar_ids;
        if (cfg.sync_jar_reuse_fraction > 0 && !features.empty())
            jar_ids = detail::jar_ids_for(web, features);
        for (int run = 1; run <= web.runs_for(label); ++run) {
            std::size_t pos_left = 0, pos_right = 0;
            for (const auto& site : web.sites) {
                std::size_t& pos = site.lean == Lean::left ? pos_left : pos_right;
                VisitPlan plan =
                    detail::plan_visit(web, label, features, site, run, pos++, &jar_ids);
                manifest.cookie_totals[GroundTruthManifest::visit_key(label, site.lean, run,
                                                                      site.domain)] =
                    plan.cookies.size();
                for (auto& s : plan.syncs) manifest.syncs.push_back(std::move(s));
                for (auto& p : plan.prices) manifest.prices.push_back(std::move(p));
            }
        }
    }
    return {std::move(web), std::move(manifest)};
}

// Self-consistency: every planted sync and price must be recoverable from
// the rendered logs by a brute-force scan, and cookie totals must agree.
// Returns human-readable problems; empty means consistent.
inline std::vector<std::string> verify_manifest(const SyntheticWeb& web,
                                                const GroundTruthManifest& manifest,
                                                const std::vector<CrawlLog>& logs) {
    std::vector<std::string> problems;
    std::map<std::string, const CrawlLog*> by_key;
    for (const auto& log : logs)
        for (const auto& site : log.sites())
            by_key[GroundTruthManifest::visit_key(log.persona_label, log.lean, log.run_index,
                                                  site)] = &log;

    for (const auto& [key, want] : manifest.cookie_totals) {
        auto it = by_key.find(key);
        if (it == by_key.end()) continue; // log not rendered in this subset
        auto site = key.substr(key.rfind('|') + 1);
        std::size_t got = 0;
        for (const auto& c : it->second->cookies)
            if (c.site == site) ++got;
        if (got != want)
            problems.push_back("cookie total mismatch at " + key + ": log " +
                               std::to_string(got) + " vs manifest " + std::to_string(want));
    }

    for (const auto& ps : manifest.syncs) {
        auto it = by_key.find(GroundTruthManifest::visit_key(ps.persona_label, ps.lean, ps.run,
                                                             ps.site));
        if (it == by_key.end()) continue;
        bool found = false;
        for (const auto& e : it->second->events) {
            if (e.site != ps.site) continue;
            if (e.url.find(ps.encoded) != std::string::npos ||
                (e.location && e.location->find(ps.encoded) != std::string::npos)) {
                found = true;
                break;
            }
        }
        if (!found)
            problems.push_back("planted sync not in log: " + ps.site + " id " + ps.id_plain);
    }

    for (const auto& pp : manifest.prices) {
        if (pp.opaque || pp.macro) continue;
        auto it = by_key.find(GroundTruthManifest::visit_key(pp.persona_label, pp.lean, pp.run,
                                                             pp.site));
        if (it == by_key.end()) continue;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "price=%.3f", pp.cpm);
        bool found = false;
        for (const auto& e : it->second->events) {
            if (e.site == pp.site && e.url.find(pp.bidder) != std::string::npos &&
                e.url.find(buf) != std::string::npos) {
                found = true;
                break;
            }
        }
        if (!found)
            problems.push_back("planted price not in log: " + pp.site + " " + buf);
    }
    return problems;
}

} // namespace audit
