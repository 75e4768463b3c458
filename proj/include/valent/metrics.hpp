#pragma once

#include <map>
#include <string>
#include <vector>

#include "valent/numerics.hpp"

namespace valent {

struct StsPair {
    std::string sentence_a;
    std::string sentence_b;
    double gold = 0.0;
};

struct RetrievalSet {
    std::map<std::string, std::string> queries;
    std::map<std::string, std::string> docs;
    // (query id, doc id) -> relevance grade >= 0
    std::map<std::pair<std::string, std::string>, double> qrels;
};

// Pearson correlation of fractional (average-tie) ranks.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// 1 iff `correct` appears in the top k of `ranking`.
int recall_at_k(const std::vector<size_t>& ranking, size_t correct, size_t k);

// DCG_k / IDCG_k with linear gain rel_i and discount 1/log2(i+1), i from 1.
// Exponential gain (2^rel - 1) is available behind the flag.
double ndcg_at_k(const std::vector<double>& ranked_relevances, size_t k = 10,
                 bool exponential_gain = false);

struct MapResult {
    double map = 0.0;
    size_t queries_scored = 0;
    size_t queries_skipped = 0; // queries with no relevant item
};
MapResult mean_average_precision(const std::vector<std::vector<int>>& per_query_ranked_binary);

double mrr_at_n(size_t rank_or_zero_for_miss, size_t n = 100);

// cosine of every (a_i, b_j) pair; row i ranks candidates for query i.
Matrix similarity_matrix(const std::vector<Vector>& a, const std::vector<Vector>& b);

} // namespace valent
