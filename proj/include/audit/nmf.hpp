#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "audit/classify.hpp"
#include "audit/crawl_log.hpp"
#include "audit/util.hpp"

namespace audit {

// Row-normalized persona/domain cookie profile for one cookie category.
// Entry (i, j) is the fraction of group i's cookies of this category that
// were injected by domain j. Groups with no such cookies stay all-zero and
// are flagged in zero_rows.
struct ProfileMatrix {
    Eigen::MatrixXd values;
    std::vector<std::string> row_labels; // "L:<persona>" / "R:<persona>"
    std::vector<std::string> col_labels; // third-party (or first-party) domains
    CookieCategory cookie_type = CookieCategory::other;
    std::vector<std::size_t> zero_rows;
};

inline std::string group_label(const CrawlLog& log) {
    switch (log.lean) {
        case Lean::left: return "L:" + log.persona_label;
        case Lean::right: return "R:" + log.persona_label;
        case Lean::none: return log.persona_label;
    }
    return log.persona_label;
}

inline ProfileMatrix build_profile_matrix(const CrawlSet& crawls, CookieCategory type,
                                          const BlockList& bl) {
    std::map<std::string, std::map<std::string, double>> counts;
    std::set<std::string> groups, domains;
    for (const auto& log : crawls.logs) {
        std::string row = group_label(log);
        groups.insert(row);
        for (const auto& c : log.cookies) {
            if (label_cookie(c, bl) != type) continue;
            counts[row][c.owner] += 1.0;
            domains.insert(c.owner);
        }
    }
    if (domains.empty())
        throw AuditError(std::string("build_profile_matrix: no cookies of type ") +
                         to_string(type));

    ProfileMatrix pm;
    pm.cookie_type = type;
    pm.row_labels.assign(groups.begin(), groups.end());
    pm.col_labels.assign(domains.begin(), domains.end());
    std::map<std::string, std::size_t> col_index;
    for (std::size_t j = 0; j < pm.col_labels.size(); ++j) col_index[pm.col_labels[j]] = j;

    pm.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(pm.row_labels.size()),
                                      static_cast<Eigen::Index>(pm.col_labels.size()));
    for (std::size_t i = 0; i < pm.row_labels.size(); ++i) {
        auto it = counts.find(pm.row_labels[i]);
        double total = 0.0;
        if (it != counts.end())
            for (const auto& [dom, n] : it->second) total += n;
        if (total <= 0.0) {
            pm.zero_rows.push_back(i);
            continue;
        }
        for (const auto& [dom, n] : it->second)
            pm.values(static_cast<Eigen::Index>(i),
                      static_cast<Eigen::Index>(col_index[dom])) = n / total;
    }
    return pm;
}

struct FactorModel {
    Eigen::MatrixXd basis;       // p x k, >= 0
    Eigen::MatrixXd coefficient; // k x c, >= 0
    int k = 0;
    double residual = 0.0; // ||A - basis*coefficient||_F
    int iterations = 0;
    std::uint64_t seed = 0;
};

namespace detail {

inline constexpr double kNmfDenomEps = 1e-9;  // keeps update denominators positive
inline constexpr double kNmfFloor = 1e-12;    // keeps factors away from absorbing zeros

} // namespace detail

// Multiplicative-update NMF for the squared Frobenius objective
//   coefficient <- coefficient .* (B^T A) ./ (B^T B coefficient + eps)
//   basis       <- basis .* (A C^T) ./ (basis C C^T + eps)
// Factors are initialized uniformly in (0, 1] from the given seed. The
// objective is non-increasing per iteration; iteration stops at max_iters or
// when the relative objective change drops below tol. `objective_trace`,
// when given, receives ||A - BC||_F^2 after every iteration.
inline FactorModel factorize(const Eigen::MatrixXd& A, int k, std::uint64_t seed,
                             int max_iters = 2000, double tol = 1e-9,
                             std::vector<double>* objective_trace = nullptr) {
    const Eigen::Index p = A.rows(), c = A.cols();
    if (k < 1 || k > std::min(p, c))
        throw AuditError("factorize: k out of range [1, min(p, c)]");
    if (tol <= 0) throw AuditError("factorize: tol must be > 0");
    if (A.minCoeff() < 0) throw AuditError("factorize: matrix must be non-negative");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto draw = [&] { return 1.0 - unit(rng); }; // (0, 1]

    Eigen::MatrixXd B(p, k), C(k, c);
    for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = 0; j < k; ++j) B(i, j) = draw();
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < c; ++j) C(i, j) = draw();

    double prev_obj = (A - B * C).squaredNorm();
    int iter = 0;
    for (; iter < max_iters; ++iter) {
        // coefficient update
        Eigen::MatrixXd numC = B.transpose() * A;
        Eigen::MatrixXd denC = (B.transpose() * B) * C;
        C.array() *= numC.array() / (denC.array() + detail::kNmfDenomEps);
        C = C.cwiseMax(detail::kNmfFloor);
        // basis update
        Eigen::MatrixXd numB = A * C.transpose();
        Eigen::MatrixXd denB = B * (C * C.transpose());
        B.array() *= numB.array() / (denB.array() + detail::kNmfDenomEps);
        B = B.cwiseMax(detail::kNmfFloor);

        double obj = (A - B * C).squaredNorm();
        if (objective_trace) objective_trace->push_back(obj);
        assert(obj <= prev_obj * (1.0 + 1e-9) + 1e-12);
        double rel = std::abs(prev_obj - obj) / std::max(prev_obj, 1e-300);
        prev_obj = obj;
        if (rel < tol) {
            ++iter;
            break;
        }
    }

    FactorModel m;
    m.basis = std::move(B);
    m.coefficient = std::move(C);
    m.k = k;
    m.residual = std::sqrt(prev_obj);
    m.iterations = iter;
    m.seed = seed;
    return m;
}

// ---------------------------------------------------------------------------
// Average-linkage hierarchical clustering over a distance matrix, with
// cophenetic distances and a cut-at-k assignment. n is small (personas), so
// the O(n^3) textbook routine is plenty.
// ---------------------------------------------------------------------------

struct LinkageMerge {
    std::size_t a = 0, b = 0; // cluster ids being merged
    double height = 0.0;
};

struct LinkageResult {
    std::vector<LinkageMerge> merges;              // n-1 merges, cluster ids 0..2n-2
    Eigen::MatrixXd cophenetic;                    // pairwise merge heights
    std::vector<std::vector<int>> members_at_step; // leaves per new cluster
};

inline LinkageResult average_linkage(const Eigen::MatrixXd& dist) {
    const std::size_t n = static_cast<std::size_t>(dist.rows());
    LinkageResult res;
    res.cophenetic = Eigen::MatrixXd::Zero(dist.rows(), dist.cols());
    if (n < 2) return res;

    struct Cluster {
        std::size_t id;
        std::vector<int> members;
    };
    std::vector<Cluster> active;
    for (std::size_t i = 0; i < n; ++i) active.push_back({i, {static_cast<int>(i)}});

    // Average pairwise distance between active clusters, maintained directly
    // from the leaf distances (exact for average linkage).
    auto cluster_dist = [&](const Cluster& x, const Cluster& y) {
        double sum = 0.0;
        for (int a : x.members)
            for (int b : y.members) sum += dist(a, b);
        return sum / (static_cast<double>(x.members.size()) * y.members.size());
    };

    std::size_t next_id = n;
    while (active.size() > 1) {
        std::size_t bi = 0, bj = 1;
        double best = cluster_dist(active[0], active[1]);
        for (std::size_t i = 0; i < active.size(); ++i) {
            for (std::size_t j = i + 1; j < active.size(); ++j) {
                double d = cluster_dist(active[i], active[j]);
                if (d < best) {
                    best = d;
                    bi = i;
                    bj = j;
                }
            }
        }
        Cluster merged;
        merged.id = next_id++;
        merged.members = active[bi].members;
        merged.members.insert(merged.members.end(), active[bj].members.begin(),
                              active[bj].members.end());
        std::sort(merged.members.begin(), merged.members.end());
        for (int a : active[bi].members)
            for (int b : active[bj].members) {
                res.cophenetic(a, b) = best;
                res.cophenetic(b, a) = best;
            }
        res.merges.push_back({active[bi].id, active[bj].id, best});
        res.members_at_step.push_back(merged.members);
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(bj));
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(bi));
        active.push_back(std::move(merged));
    }
    return res;
}

// Cluster labels after undoing the last k-1 merges (i.e. cutting the tree at
// k clusters). Labels are 0-based, assigned in row order of first member.
inline std::vector<int> cut_linkage(const LinkageResult& linkage, std::size_t n, std::size_t k) {
    if (k == 0 || n == 0) return {};
    k = std::min(k, n);
    // apply the first n-k merges
    std::vector<std::vector<int>> groups(n);
    for (std::size_t i = 0; i < n; ++i) groups[i] = {static_cast<int>(i)};
    std::map<std::size_t, std::size_t> cluster_slot; // cluster id -> slot in groups
    for (std::size_t i = 0; i < n; ++i) cluster_slot[i] = i;
    std::size_t applied = 0;
    std::size_t next_id = n;
    for (const auto& m : linkage.merges) {
        if (applied >= n - k) break;
        auto sa = cluster_slot.at(m.a), sb = cluster_slot.at(m.b);
        groups[sa].insert(groups[sa].end(), groups[sb].begin(), groups[sb].end());
        groups[sb].clear();
        cluster_slot.erase(m.a);
        cluster_slot.erase(m.b);
        cluster_slot[next_id++] = sa;
        ++applied;
    }
    std::vector<int> assignment(n, -1);
    int label = 0;
    for (std::size_t s = 0; s < groups.size(); ++s) {
        if (groups[s].empty()) continue;
        for (int leaf : groups[s]) assignment[static_cast<std::size_t>(leaf)] = label;
        ++label;
    }
    return assignment;
}

namespace detail {

// Pearson correlation over the upper triangle of two symmetric matrices.
// Zero variance on both sides means perfect (degenerate) agreement.
inline double upper_triangle_correlation(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    const Eigen::Index n = x.rows();
    std::vector<double> xs, ys;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) {
            xs.push_back(x(i, j));
            ys.push_back(y(i, j));
        }
    if (xs.empty()) return 1.0;
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(xs.size());
    my /= static_cast<double>(ys.size());
    double sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    constexpr double eps = 1e-24;
    if (sxx < eps && syy < eps) return 1.0;
    if (sxx < eps || syy < eps) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

} // namespace detail

struct ConsensusResult {
    Eigen::MatrixXd consensus; // p x p, symmetric, unit diagonal
    double cophenetic = 0.0;   // correlation between 1-consensus and dendrogram distances
    int k = 0;
    int runs = 0;
    std::vector<int> cluster_assignment; // average-linkage cut of the consensus
    double mean_residual = 0.0;
};

// Repeated seeded factorizations; rows co-cluster when they share the argmax
// basis column. The cophenetic coefficient scores how tree-like the
// consensus is (Brunet-style model selection).
inline ConsensusResult consensus_cluster(const Eigen::MatrixXd& A, int k, int runs,
                                         std::uint64_t seed, int max_iters = 500,
                                         double tol = 1e-7) {
    if (runs < 2) throw AuditError("consensus_cluster: runs must be >= 2");
    const Eigen::Index p = A.rows();
    ConsensusResult res;
    res.k = k;
    res.runs = runs;
    res.consensus = Eigen::MatrixXd::Zero(p, p);

    double residual_sum = 0.0;
    for (int r = 0; r < runs; ++r) {
        std::uint64_t run_seed = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(r) + 1));
        FactorModel m = factorize(A, k, run_seed, max_iters, tol);
        residual_sum += m.residual;
        std::vector<int> assign(static_cast<std::size_t>(p));
        for (Eigen::Index i = 0; i < p; ++i) {
            Eigen::Index best = 0;
            m.basis.row(i).maxCoeff(&best);
            assign[static_cast<std::size_t>(i)] = static_cast<int>(best);
        }
        for (Eigen::Index i = 0; i < p; ++i)
            for (Eigen::Index j = 0; j < p; ++j)
                if (assign[static_cast<std::size_t>(i)] == assign[static_cast<std::size_t>(j)])
                    res.consensus(i, j) += 1.0;
    }
    res.consensus /= static_cast<double>(runs);
    res.mean_residual = residual_sum / runs;

    Eigen::MatrixXd dist = Eigen::MatrixXd::Ones(p, p) - res.consensus;
    dist.diagonal().setZero();
    LinkageResult linkage = average_linkage(dist);
    res.cophenetic = detail::upper_triangle_correlation(dist, linkage.cophenetic);
    res.cluster_assignment = cut_linkage(linkage, static_cast<std::size_t>(p),
                                         static_cast<std::size_t>(k));
    return res;
}

struct KScore {
    int k = 0;
    double cophenetic = 0.0;
    double mean_residual = 0.0;
};

struct KSelection {
    int k_star = 0;
    std::vector<KScore> scores;
};

// Model selection over k: maximize cophenetic correlation; ties break toward
// the smaller residual and then the smaller k. Residuals at numerical
// exactness scale (< 1e-6 relative to ||A||_F) count as zero so that exact
// factorizations of degenerate matrices tie instead of comparing noise.
inline KSelection select_k(const Eigen::MatrixXd& A, int k_min = 2, int k_max = 10,
                           int runs = 50, std::uint64_t seed = 1,
                           int max_iters = 500, double tol = 1e-7) {
    const int k_cap = static_cast<int>(std::min(A.rows(), A.cols()));
    if (k_min < 1 || k_max < k_min || k_max > k_cap)
        throw AuditError("select_k: k range outside factorization bounds");

    const double exact_scale = 1e-6 * (1.0 + A.norm());
    KSelection sel;
    bool have_best = false;
    KScore best{};
    for (int k = k_min; k <= k_max; ++k) {
        std::uint64_t k_seed = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(k)));
        ConsensusResult c = consensus_cluster(A, k, runs, k_seed, max_iters, tol);
        KScore score{k, c.cophenetic, c.mean_residual};
        sel.scores.push_back(score);

        auto eff_res = [&](double r) { return r < exact_scale ? 0.0 : r; };
        bool better = false;
        if (!have_best) {
            better = true;
        } else if (score.cophenetic != best.cophenetic) {
            better = score.cophenetic > best.cophenetic;
        } else if (eff_res(score.mean_residual) != eff_res(best.mean_residual)) {
            better = eff_res(score.mean_residual) < eff_res(best.mean_residual);
        } // equal on both -> keep the smaller k already held
        if (better) {
            best = score;
            have_best = true;
        }
    }
    sel.k_star = best.k;
    return sel;
}

} // namespace audit
