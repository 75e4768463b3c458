#include "valent/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace valent {

namespace {

// fractional ranks, ties get the average of their positions (1-based)
std::vector<double> fractional_ranks(const std::vector<double>& v) {
    size_t n = v.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    size_t n = x.size();
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    require(sxx > 0.0 && syy > 0.0, ErrorKind::eval,
            "spearman undefined: zero rank variance");
    return sxy / std::sqrt(sxx * syy);
}

} // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size(), ErrorKind::shape, "spearman: length mismatch");
    require(x.size() >= 2, ErrorKind::input, "spearman: need at least 2 points");
    for (double v : x) require(std::isfinite(v), ErrorKind::input, "spearman: non-finite input");
    for (double v : y) require(std::isfinite(v), ErrorKind::input, "spearman: non-finite input");
    return pearson(fractional_ranks(x), fractional_ranks(y));
}

int recall_at_k(const std::vector<size_t>& ranking, size_t correct, size_t k) {
    require(k >= 1, ErrorKind::input, "recall_at_k: k must be >= 1");
    size_t limit = std::min(k, ranking.size());
    for (size_t i = 0; i < limit; ++i)
        if (ranking[i] == correct) return 1;
    return 0;
}

double ndcg_at_k(const std::vector<double>& ranked_relevances, size_t k,
                 bool exponential_gain) {
    auto gain = [&](double rel) {
        return exponential_gain ? std::exp2(rel) - 1.0 : rel;
    };
    auto dcg = [&](const std::vector<double>& rels) {
        double s = 0.0;
        for (size_t i = 0; i < std::min(k, rels.size()); ++i) {
            require(rels[i] >= 0.0, ErrorKind::input, "ndcg: negative relevance");
            s += gain(rels[i]) / std::log2(static_cast<double>(i) + 2.0);
        }
        return s;
    };
    std::vector<double> ideal = ranked_relevances;
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    double idcg = dcg(ideal);
    if (idcg == 0.0) return 0.0;
    return dcg(ranked_relevances) / idcg;
}

MapResult mean_average_precision(const std::vector<std::vector<int>>& per_query_ranked_binary) {
    MapResult res;
    double sum = 0.0;
    for (const auto& rels : per_query_ranked_binary) {
        size_t hits = 0;
        double ap = 0.0;
        for (size_t i = 0; i < rels.size(); ++i) {
            if (rels[i]) {
                ++hits;
                ap += static_cast<double>(hits) / static_cast<double>(i + 1);
            }
        }
        if (hits == 0) {
            ++res.queries_skipped;
            continue;
        }
        sum += ap / static_cast<double>(hits);
        ++res.queries_scored;
    }
    require(res.queries_scored > 0, ErrorKind::eval, "MAP: every query was skipped");
    res.map = sum / static_cast<double>(res.queries_scored);
    return res;
}

double mrr_at_n(size_t rank_or_zero_for_miss, size_t n) {
    if (rank_or_zero_for_miss == 0 || rank_or_zero_for_miss > n) return 0.0;
    return 1.0 / static_cast<double>(rank_or_zero_for_miss);
}

Matrix similarity_matrix(const std::vector<Vector>& a, const std::vector<Vector>& b) {
    Matrix out(a.size(), b.size());
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < b.size(); ++j)
            out.at(i, j) = cosine(a[i], b[j]);
    return out;
}

} // namespace valent
