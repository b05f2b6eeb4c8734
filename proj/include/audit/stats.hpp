#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "audit/crawl_log.hpp"
#include "audit/util.hpp"

namespace audit {

// Sorted sample set with ECDF and quantile accessors.
struct EmpiricalDistribution {
    std::vector<double> samples; // ascending

    static EmpiricalDistribution from(std::vector<double> xs) {
        std::sort(xs.begin(), xs.end());
        return {std::move(xs)};
    }

    std::size_t n() const { return samples.size(); }

    // Right-continuous ECDF: fraction of samples <= x.
    double ecdf(double x) const {
        auto it = std::upper_bound(samples.begin(), samples.end(), x);
        return samples.empty() ? 0.0
                               : static_cast<double>(it - samples.begin()) / samples.size();
    }

    // Linear-interpolation quantile (the common "type 7" definition).
    double quantile(double p) const {
        if (samples.empty()) throw AuditError("quantile of empty distribution");
        if (p <= 0) return samples.front();
        if (p >= 1) return samples.back();
        double h = (static_cast<double>(samples.size()) - 1.0) * p;
        std::size_t lo = static_cast<std::size_t>(h);
        double frac = h - static_cast<double>(lo);
        if (lo + 1 >= samples.size()) return samples.back();
        return samples[lo] + frac * (samples[lo + 1] - samples[lo]);
    }

    double median() const { return quantile(0.5); }
};

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::size_t n1 = 0;
    std::size_t n2 = 0;
};

// Survival function of the Kolmogorov distribution,
// Q(lambda) = 2 * sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2), truncated at 100 terms.
inline double kolmogorov_q(double lambda) {
    if (lambda <= 0) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= 100; ++j) {
        double term = std::exp(-2.0 * j * j * lambda * lambda);
        sum += sign * term;
        sign = -sign;
        if (term < 1e-18) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

// Two-sample Kolmogorov-Smirnov test. The statistic is the exact sup of
// |ECDF_a - ECDF_b|; the p-value uses the asymptotic Kolmogorov distribution
// with effective n = n1*n2/(n1+n2).
inline KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw AuditError("ks_two_sample: empty sample");
    std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());

    const double n1 = static_cast<double>(sa.size());
    const double n2 = static_cast<double>(sb.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < sa.size() && j < sb.size()) {
        double x = std::min(sa[i], sb[j]);
        while (i < sa.size() && sa[i] == x) ++i;
        while (j < sb.size() && sb[j] == x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / n1 - static_cast<double>(j) / n2));
    }
    // Tail beyond the shorter sample can only shrink the gap, so the loop
    // above already saw the supremum.
    KsResult r;
    r.statistic = d;
    r.n1 = sa.size();
    r.n2 = sb.size();
    const double ne = n1 * n2 / (n1 + n2);
    r.p_value = kolmogorov_q(std::sqrt(ne) * d);
    return r;
}

struct KsMatrix {
    std::vector<std::string> labels;
    std::vector<std::vector<KsResult>> cells;      // symmetric, zero diagonal
    std::vector<std::vector<bool>> significant;    // p < alpha
    double alpha = 0.01;
};

inline KsMatrix pairwise_ks_matrix(const std::map<std::string, std::vector<double>>& groups,
                                   double alpha = 0.01) {
    if (groups.size() < 2) throw AuditError("pairwise_ks_matrix: need at least 2 groups");
    for (const auto& [label, xs] : groups)
        if (xs.empty()) throw AuditError("pairwise_ks_matrix: empty group: " + label);

    KsMatrix m;
    m.alpha = alpha;
    for (const auto& [label, _] : groups) m.labels.push_back(label);
    const std::size_t n = m.labels.size();
    m.cells.assign(n, std::vector<KsResult>(n));
    m.significant.assign(n, std::vector<bool>(n, false));

    std::vector<const std::vector<double>*> data;
    for (const auto& [_, xs] : groups) data.push_back(&xs);
    for (std::size_t i = 0; i < n; ++i) {
        m.cells[i][i] = {0.0, 1.0, data[i]->size(), data[i]->size()};
        for (std::size_t j = i + 1; j < n; ++j) {
            KsResult r = ks_two_sample(*data[i], *data[j]);
            m.cells[i][j] = r;
            m.cells[j][i] = r;
            std::swap(m.cells[j][i].n1, m.cells[j][i].n2);
            bool sig = r.p_value < alpha;
            m.significant[i][j] = sig;
            m.significant[j][i] = sig;
        }
    }
    return m;
}

// 100 * (persona - baseline) / baseline.
inline double percent_delta(double persona_value, double baseline_value) {
    if (baseline_value <= 0) throw AuditError("percent_delta: baseline must be > 0");
    return 100.0 * (persona_value - baseline_value) / baseline_value;
}

struct SiteValue {
    std::string site;
    Lean lean = Lean::none;
    double value = 0.0;
    std::optional<long> rank;
};

struct RankBucketRow {
    std::string bucket; // e.g. "1-10K", "unranked"
    Lean lean = Lean::none;
    std::size_t count = 0;
    std::optional<double> median, q1, q3;
};

inline std::vector<long> default_rank_edges() { return {10'000, 100'000, 1'000'000}; }

inline std::string rank_bucket_label(std::size_t idx, const std::vector<long>& edges) {
    auto human = [](long v) -> std::string {
        if (v % 1'000'000 == 0) return std::to_string(v / 1'000'000) + "M";
        if (v % 1'000 == 0) return std::to_string(v / 1'000) + "K";
        return std::to_string(v);
    };
    if (idx == 0) return "1-" + human(edges.front());
    if (idx < edges.size()) return human(edges[idx - 1]) + "-" + human(edges[idx]);
    return ">" + human(edges.back());
}

// Per-bucket medians and quartiles, split by lean. Sites without a rank form
// a dedicated "unranked" bucket appended after the ranked buckets.
inline std::vector<RankBucketRow> rank_buckets(const std::vector<SiteValue>& values,
                                               std::vector<long> edges = default_rank_edges()) {
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (edges[i] <= edges[i - 1]) throw AuditError("rank_buckets: edges must be strictly increasing");

    const std::size_t nbuckets = edges.size() + 2; // ranked ranges + ">last" + unranked
    auto bucket_of = [&](std::optional<long> rank) -> std::size_t {
        if (!rank) return nbuckets - 1;
        for (std::size_t i = 0; i < edges.size(); ++i)
            if (*rank <= edges[i]) return i;
        return edges.size();
    };

    std::map<std::pair<std::size_t, Lean>, std::vector<double>> groups;
    for (const auto& v : values) groups[{bucket_of(v.rank), v.lean}].push_back(v.value);

    std::vector<RankBucketRow> rows;
    for (std::size_t b = 0; b < nbuckets; ++b) {
        for (Lean lean : {Lean::left, Lean::right, Lean::none}) {
            auto it = groups.find({b, lean});
            if (it == groups.end()) continue;
            RankBucketRow row;
            row.bucket = b == nbuckets - 1 ? "unranked" : rank_bucket_label(b, edges);
            row.lean = lean;
            row.count = it->second.size();
            auto dist = EmpiricalDistribution::from(it->second);
            row.median = dist.median();
            row.q1 = dist.quantile(0.25);
            row.q3 = dist.quantile(0.75);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

} // namespace audit
