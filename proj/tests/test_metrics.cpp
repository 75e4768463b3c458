#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "valent/metrics.hpp"
#include "valent/rng.hpp"

using namespace valent;

namespace {

// brute-force fractional ranks: 1 + (number strictly smaller) + (ties-1)/2
std::vector<double> frac_ranks_oracle(const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
        size_t smaller = 0, ties = 0;
        for (double x : v) {
            if (x < v[i]) ++smaller;
            if (x == v[i]) ++ties;
        }
        r[i] = smaller + 1 + (ties - 1) / 2.0;
    }
    return r;
}

double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
    double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
    double num = 0, dx = 0, dy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        num += (x[i] - mx) * (y[i] - my);
        dx += (x[i] - mx) * (x[i] - mx);
        dy += (y[i] - my) * (y[i] - my);
    }
    return num / std::sqrt(dx * dy);
}

double spearman_oracle(const std::vector<double>& x, const std::vector<double>& y) {
    return pearson_oracle(frac_ranks_oracle(x), frac_ranks_oracle(y));
}

} // namespace

TEST_CASE("spearman exact agreement and reversal") {
    std::vector<double> a = {1, 2, 3, 4, 5};
    std::vector<double> b = {10, 20, 30, 40, 50};
    CHECK(spearman(a, b) == doctest::Approx(1.0));
    std::vector<double> c = {5, 4, 3, 2, 1};
    CHECK(spearman(a, c) == doctest::Approx(-1.0));
}

TEST_CASE("spearman is invariant to monotone transforms") {
    std::vector<double> a = {0.3, 1.7, 0.9, 2.5, 0.1};
    std::vector<double> b;
    for (double x : a) b.push_back(std::exp(3 * x) + 7);
    CHECK(spearman(a, b) == doctest::Approx(1.0));
}

TEST_CASE("spearman with ties matches brute-force oracle") {
    std::vector<double> a = {1.0, 2.0, 2.0, 3.0, 0.5, 2.0};
    std::vector<double> b = {0.9, 1.1, 1.1, 0.2, 0.8, 2.0};
    CHECK(spearman(a, b) == doctest::Approx(spearman_oracle(a, b)).epsilon(1e-12));
}

TEST_CASE("spearman random vectors match oracle") {
    SplitMix64 rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> a(30), b(30);
        for (double& x : a) x = rng.next_double();
        for (double& x : b) x = rng.next_double();
        if (trial % 3 == 0) { // inject ties
            a[5] = a[10] = a[15];
            b[2] = b[4];
        }
        CHECK(std::abs(spearman(a, b) - spearman_oracle(a, b)) < 1e-12);
    }
}

TEST_CASE("spearman errors") {
    CHECK_THROWS_AS(spearman({1, 2}, {1, 2, 3}), Error);
    CHECK_THROWS_AS(spearman({1}, {1}), Error);
    CHECK_THROWS_AS(spearman({2, 2, 2}, {1, 2, 3}), Error); // zero variance
}

TEST_CASE("recall_at_k basics and monotonicity") {
    std::vector<size_t> ranking = {3, 1, 4, 0, 2};
    CHECK(recall_at_k(ranking, 3, 1) == 1);
    CHECK(recall_at_k(ranking, 4, 1) == 0);
    CHECK(recall_at_k(ranking, 4, 3) == 1);
    CHECK(recall_at_k(ranking, 2, 4) == 0);
    CHECK(recall_at_k(ranking, 2, 5) == 1);
    for (size_t correct = 0; correct < 5; ++correct) {
        int prev = 0;
        for (size_t k = 1; k <= 5; ++k) {
            int r = recall_at_k(ranking, correct, k);
            CHECK(r >= prev);
            prev = r;
        }
        CHECK(prev == 1);
    }
}

TEST_CASE("ndcg hand-computed value") {
    // relevances in ranked order {0,1,1,0}: DCG = 1/log2(3) + 1/log2(4)
    // ideal {1,1,0,0}: IDCG = 1/log2(2) + 1/log2(3)
    std::vector<double> rel = {0, 1, 1, 0};
    double dcg = 1.0 / std::log2(3.0) + 1.0 / std::log2(4.0);
    double idcg = 1.0 + 1.0 / std::log2(3.0);
    CHECK(ndcg_at_k(rel, 10) == doctest::Approx(dcg / idcg).epsilon(1e-12));
}

TEST_CASE("ndcg pinned two-item case") {
    // ranked {0,1}: DCG = 1/log2(3) ~ 0.6309, IDCG = 1
    CHECK(ndcg_at_k({0, 1}, 10) == doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-12));
    CHECK(ndcg_at_k({1, 0}, 10) == doctest::Approx(1.0));
}

TEST_CASE("ndcg ideal ranking is 1, all-zero is 0, cutoff respected") {
    CHECK(ndcg_at_k({3, 2, 1}, 10) == doctest::Approx(1.0));
    CHECK(ndcg_at_k({0, 0, 0}, 10) == 0.0);
    // items past k are invisible: first k entries ideal
    CHECK(ndcg_at_k({2, 1, 0}, 2) == doctest::Approx(1.0));
}

TEST_CASE("ndcg exponential gain option") {
    // ranked {1,2}: DCG = (2^1-1) + (2^2-1)/log2(3); ideal {2,1}
    double dcg = 1.0 + 3.0 / std::log2(3.0);
    double idcg = 3.0 + 1.0 / std::log2(3.0);
    CHECK(ndcg_at_k({1, 2}, 10, true) == doctest::Approx(dcg / idcg).epsilon(1e-12));
    // with binary relevance both gains agree
    CHECK(ndcg_at_k({0, 1, 1, 0}, 10, true) ==
          doctest::Approx(ndcg_at_k({0, 1, 1, 0}, 10, false)).epsilon(1e-12));
}

TEST_CASE("mean_average_precision hand-computed") {
    // q1 ranked binary {1,0,1}: AP = (1/1 + 2/3)/2 = 5/6
    // q2 ranked binary {0,1}:   AP = 1/2
    MapResult r = mean_average_precision({{1, 0, 1}, {0, 1}});
    CHECK(r.map == doctest::Approx((5.0 / 6.0 + 0.5) / 2.0).epsilon(1e-12));
    CHECK(r.queries_scored == 2);
    CHECK(r.queries_skipped == 0);
}

TEST_CASE("mean_average_precision skips queries with no relevant item") {
    MapResult r = mean_average_precision({{1, 0}, {0, 0, 0}});
    CHECK(r.map == doctest::Approx(1.0));
    CHECK(r.queries_scored == 1);
    CHECK(r.queries_skipped == 1);
    CHECK_THROWS_AS(mean_average_precision({{0, 0}}), Error);
    CHECK_THROWS_AS(mean_average_precision({}), Error);
}

TEST_CASE("mrr_at_n values") {
    CHECK(mrr_at_n(1, 100) == doctest::Approx(1.0));
    CHECK(mrr_at_n(4, 100) == doctest::Approx(0.25));
    CHECK(mrr_at_n(100, 100) == doctest::Approx(0.01));
    CHECK(mrr_at_n(101, 100) == 0.0);
    CHECK(mrr_at_n(0, 100) == 0.0); // miss sentinel
}

TEST_CASE("mrr averaging example") {
    // ranks {1,2,4} -> (1 + 1/2 + 1/4)/3 = 0.5833...
    double mean = (mrr_at_n(1) + mrr_at_n(2) + mrr_at_n(4)) / 3.0;
    CHECK(mean == doctest::Approx(7.0 / 12.0).epsilon(1e-12));
}

TEST_CASE("similarity_matrix matches per-pair cosine") {
    SplitMix64 rng(31);
    std::vector<Vector> a(3, Vector(5)), b(4, Vector(5));
    for (auto& v : a)
        for (float& x : v) x = rng.next_symmetric(1.0);
    for (auto& v : b)
        for (float& x : v) x = rng.next_symmetric(1.0);
    Matrix m = similarity_matrix(a, b);
    CHECK(m.rows == 3);
    CHECK(m.cols == 4);
    for (size_t i = 0; i < 3; ++i)
        for (size_t j = 0; j < 4; ++j)
            CHECK(m.at(i, j) == doctest::Approx(cosine(a[i], b[j])).epsilon(1e-7));
}

TEST_CASE("similarity_matrix self-retrieval puts the diagonal on top") {
    SplitMix64 rng(32);
    std::vector<Vector> a(5, Vector(8));
    for (auto& v : a)
        for (float& x : v) x = rng.next_symmetric(1.0);
    Matrix m = similarity_matrix(a, a);
    for (size_t i = 0; i < 5; ++i) {
        std::vector<float> row(m.row(i).begin(), m.row(i).end());
        auto ranking = stable_rank_desc(row);
        CHECK(ranking[0] == i);
    }
}

TEST_CASE("ndcg suffix invariance past the cutoff") {
    std::vector<double> base = {2, 0, 1, 3};
    std::vector<double> padded = base;
    padded.insert(padded.end(), {0, 0, 0}); // zero-gain tail cannot change DCG or IDCG@4
    CHECK(ndcg_at_k(base, 4) == doctest::Approx(ndcg_at_k(padded, 4)).epsilon(1e-12));
}
