#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "audit/nmf.hpp"

using namespace audit;

namespace {

Eigen::MatrixXd random_nonneg(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = unit(rng);
    return m;
}

// Planted low-rank factorization oracle: A = B* C* exactly.
Eigen::MatrixXd planted_product(Eigen::Index p, Eigen::Index c, int k, std::uint64_t seed) {
    return random_nonneg(p, k, seed) * random_nonneg(k, c, seed ^ 0xBEEF);
}

// Block-structured profile matrix: `blocks` groups of rows, each supported on
// its own column band, plus optional noise.
Eigen::MatrixXd block_matrix(int blocks, int rows_per_block, int cols_per_block, double noise,
                             std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::Index p = blocks * rows_per_block, c = blocks * cols_per_block;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(p, c);
    for (int b = 0; b < blocks; ++b)
        for (int i = 0; i < rows_per_block; ++i)
            for (int j = 0; j < cols_per_block; ++j)
                m(b * rows_per_block + i, b * cols_per_block + j) = 0.5 + 0.5 * unit(rng);
    if (noise > 0)
        for (Eigen::Index i = 0; i < p; ++i)
            for (Eigen::Index j = 0; j < c; ++j) m(i, j) += noise * unit(rng);
    return m;
}

} // namespace

TEST_CASE("factorize recovers an exact rank-1 matrix with k=1") {
    Eigen::MatrixXd a = random_nonneg(6, 1, 11), b = random_nonneg(1, 9, 12);
    Eigen::MatrixXd A = a * b;
    auto m = factorize(A, 1, 42, 5000, 1e-14);
    CHECK(m.residual < 1e-8);
    CHECK(m.basis.minCoeff() >= 0.0);
    CHECK(m.coefficient.minCoeff() >= 0.0);
}

TEST_CASE("factorize recovers a planted rank-3 factorization") {
    Eigen::MatrixXd A = planted_product(20, 30, 3, 5);
    auto m = factorize(A, 3, 1234, 200000, 1e-16);
    CHECK(m.residual <= 1e-6);
}

TEST_CASE("objective is monotone non-increasing for random matrices") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 25; ++trial) {
        Eigen::Index p = 3 + static_cast<Eigen::Index>(rng() % 10);
        Eigen::Index c = 3 + static_cast<Eigen::Index>(rng() % 14);
        int k = 1 + static_cast<int>(rng() % std::min<Eigen::Index>(p, c));
        Eigen::MatrixXd A = random_nonneg(p, c, rng());
        std::vector<double> trace;
        factorize(A, k, rng(), 120, 1e-12, &trace);
        for (std::size_t i = 1; i < trace.size(); ++i)
            CHECK(trace[i] <= trace[i - 1] * (1.0 + 1e-9) + 1e-12);
    }
}

TEST_CASE("factorize validates inputs") {
    Eigen::MatrixXd A = random_nonneg(4, 5, 1);
    CHECK_THROWS_AS(factorize(A, 0, 1), AuditError);
    CHECK_THROWS_AS(factorize(A, 5, 1), AuditError); // k > min(p, c)
    CHECK_THROWS_AS(factorize(A, 2, 1, 100, 0.0), AuditError);
    Eigen::MatrixXd neg = A;
    neg(0, 0) = -0.1;
    CHECK_THROWS_AS(factorize(neg, 2, 1), AuditError);
}

TEST_CASE("average linkage cophenetic distances on a hand-checked case") {
    // three points: d(0,1)=1, d(0,2)=4, d(1,2)=5 -> merge {0,1} at 1, then
    // {0,1}+{2} at (4+5)/2 = 4.5
    Eigen::MatrixXd d(3, 3);
    d << 0, 1, 4, 1, 0, 5, 4, 5, 0;
    auto link = average_linkage(d);
    REQUIRE(link.merges.size() == 2);
    CHECK(link.merges[0].height == 1.0);
    CHECK(link.merges[1].height == 4.5);
    CHECK(link.cophenetic(0, 1) == 1.0);
    CHECK(link.cophenetic(0, 2) == 4.5);
    CHECK(link.cophenetic(1, 2) == 4.5);
    auto cut2 = cut_linkage(link, 3, 2);
    CHECK(cut2[0] == cut2[1]);
    CHECK(cut2[0] != cut2[2]);
}

TEST_CASE("identical rows always co-cluster") {
    Eigen::MatrixXd A = random_nonneg(5, 12, 3);
    A.row(1) = A.row(0);
    auto res = consensus_cluster(A, 2, 8, 77);
    CHECK(res.consensus(0, 1) == 1.0);
    CHECK(res.cluster_assignment[0] == res.cluster_assignment[1]);
    // consensus is symmetric with unit diagonal, entries in [0,1]
    for (Eigen::Index i = 0; i < 5; ++i) {
        CHECK(res.consensus(i, i) == 1.0);
        for (Eigen::Index j = 0; j < 5; ++j) {
            CHECK(res.consensus(i, j) == res.consensus(j, i));
            CHECK(res.consensus(i, j) >= 0.0);
            CHECK(res.consensus(i, j) <= 1.0);
        }
    }
}

TEST_CASE("planted 3-block matrix: high cophenetic, blocks recovered") {
    Eigen::MatrixXd A = block_matrix(3, 5, 6, 0.02, 21);
    auto res = consensus_cluster(A, 3, 20, 99);
    CHECK(res.cophenetic >= 0.95);
    // rows within a block share a cluster; rows across blocks differ
    for (int b = 0; b < 3; ++b)
        for (int i = 1; i < 5; ++i)
            CHECK(res.cluster_assignment[b * 5 + i] == res.cluster_assignment[b * 5]);
    CHECK(res.cluster_assignment[0] != res.cluster_assignment[5]);
    CHECK(res.cluster_assignment[5] != res.cluster_assignment[10]);
    CHECK(res.cluster_assignment[0] != res.cluster_assignment[10]);
}

TEST_CASE("consensus is deterministic for a fixed seed") {
    Eigen::MatrixXd A = random_nonneg(6, 10, 17);
    auto a = consensus_cluster(A, 2, 2, 5);
    auto b = consensus_cluster(A, 2, 2, 5);
    CHECK(a.consensus == b.consensus);
    CHECK(a.cophenetic == b.cophenetic);
    CHECK(a.cluster_assignment == b.cluster_assignment);
    CHECK_THROWS_AS(consensus_cluster(A, 2, 1, 5), AuditError);
}

TEST_CASE("select_k finds planted block counts") {
    SECTION("3 blocks") {
        Eigen::MatrixXd A = block_matrix(3, 5, 6, 0.02, 31);
        auto sel = select_k(A, 2, 6, 12, 7, 300, 1e-8);
        CHECK(sel.k_star == 3);
    }
    SECTION("2 blocks") {
        Eigen::MatrixXd A = block_matrix(2, 6, 7, 0.02, 41);
        auto sel = select_k(A, 2, 6, 12, 7, 300, 1e-8);
        CHECK(sel.k_star == 2);
    }
    SECTION("constant matrix degenerates to the smallest k") {
        Eigen::MatrixXd A = Eigen::MatrixXd::Constant(8, 10, 0.1);
        auto sel = select_k(A, 2, 5, 8, 7, 400, 1e-10);
        CHECK(sel.k_star == 2);
    }
}

TEST_CASE("build_profile_matrix normalizes rows and flags zero rows") {
    ojson bj;
    bj["version"] = "t";
    bj["categories"]["advertising"] = {"ad-one.com", "ad-two.com"};
    auto bl = BlockList::from_json(bj);

    CrawlSet crawls;
    auto mklog = [](const std::string& label, Lean lean,
                    const std::vector<std::pair<std::string, int>>& owners) {
        CrawlLog log;
        log.persona_label = label;
        log.lean = lean;
        std::int64_t ts = 0;
        for (const auto& [owner, n] : owners)
            for (int i = 0; i < n; ++i) {
                CookieRecord c;
                c.owner = owner;
                c.site = "site.com";
                c.name = "n" + std::to_string(i);
                c.value = "v";
                c.visit_id = "v1";
                c.timestamp_ms = ++ts;
                log.cookies.push_back(c);
            }
        return log;
    };
    crawls.logs.push_back(mklog("A", Lean::left, {{"ad-one.com", 30}, {"ad-two.com", 70}}));
    crawls.logs.push_back(mklog("B", Lean::left, {{"ad-one.com", 5}}));
    crawls.logs.push_back(mklog("C", Lean::left, {{"site.com", 4}})); // first-party only

    auto pm = build_profile_matrix(crawls, CookieCategory::advertising, bl);
    REQUIRE(pm.row_labels == std::vector<std::string>{"L:A", "L:B", "L:C"});
    REQUIRE(pm.col_labels == std::vector<std::string>{"ad-one.com", "ad-two.com"});
    CHECK(pm.values(0, 0) == Catch::Approx(0.3).margin(1e-12));
    CHECK(pm.values(0, 1) == Catch::Approx(0.7).margin(1e-12));
    CHECK(pm.values(1, 0) == 1.0);
    REQUIRE(pm.zero_rows == std::vector<std::size_t>{2});
    for (Eigen::Index i = 0; i < 2; ++i)
        CHECK(pm.values.row(i).sum() == Catch::Approx(1.0).margin(1e-12));

    CHECK_THROWS_AS(build_profile_matrix(crawls, CookieCategory::social, bl), AuditError);
}

TEST_CASE("cluster assignment invariant under row rescaling of raw counts") {
    // scaling a persona's raw counts leaves the normalized profile unchanged
    ojson bj;
    bj["version"] = "t";
    bj["categories"]["advertising"] = {"ad-one.com", "ad-two.com"};
    auto bl = BlockList::from_json(bj);
    CrawlSet small, scaled;
    for (int copies : {1, 5}) {
        CrawlSet& dst = copies == 1 ? small : scaled;
        CrawlLog log;
        log.persona_label = "A";
        log.lean = Lean::left;
        std::int64_t ts = 0;
        for (int i = 0; i < 3 * copies; ++i) {
            CookieRecord c;
            c.owner = "ad-one.com";
            c.site = "s.com";
            c.name = "n" + std::to_string(i);
            c.value = "v";
            c.visit_id = "v1";
            c.timestamp_ms = ++ts;
            log.cookies.push_back(c);
        }
        for (int i = 0; i < 7 * copies; ++i) {
            CookieRecord c;
            c.owner = "ad-two.com";
            c.site = "s.com";
            c.name = "m" + std::to_string(i);
            c.value = "v";
            c.visit_id = "v1";
            c.timestamp_ms = ++ts;
            log.cookies.push_back(c);
        }
        dst.logs.push_back(std::move(log));
    }
    auto a = build_profile_matrix(small, CookieCategory::advertising, bl);
    auto b = build_profile_matrix(scaled, CookieCategory::advertising, bl);
    CHECK((a.values - b.values).norm() < 1e-12);
}
