#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "valent/pooling.hpp"
#include "valent/rng.hpp"

namespace valent {

struct SegmentProbeConfig {
    double split_lo = 0.25;
    double split_hi = 0.75;
    uint64_t seed = 0;
    std::vector<size_t> k_list = {1, 5, 10};
    size_t max_tokens = 512;
    size_t min_tokens = 8;

    void validate() const;
};

// Split point: uniform over integer prefix lengths in
// [ceil(split_lo*N), floor(split_hi*N)]. nullopt when the window is empty
// or a segment would be empty; the caller skips the document.
std::optional<size_t> sample_split(size_t doc_len, const SegmentProbeConfig& cfg,
                                   SplitMix64& rng);

// Embeds one segment at one layer. cache_key is unique per segment so
// model-backed embedders can reuse the forward trace across layers.
using SegmentEmbedder =
    std::function<Vector(const std::vector<int>& tokens, size_t layer, size_t cache_key)>;

struct SegmentProbeResult {
    std::vector<size_t> k_list;
    // recall[layer-1][k_index], layers 1..L
    std::vector<std::vector<double>> recall;
    size_t docs_used = 0;
    size_t docs_skipped = 0;
};

SegmentProbeResult segment_match_probe(const std::vector<std::vector<int>>& doc_tokens,
                                       size_t n_layers, const SegmentProbeConfig& cfg,
                                       const SegmentEmbedder& embedder);

// Model-backed single-layer mean-pooling embedder (VA or HS).
enum class SegmentMethod { va, hs };
SegmentEmbedder make_model_segment_embedder(const ModelWeights& weights,
                                            const ModelConfig& cfg, SegmentMethod method);

struct LogitLensConfig {
    size_t prefix_lo = 50;
    size_t prefix_hi = 150;
    std::vector<size_t> offsets = {1, 2, 3};
    size_t truncate_tokens = 2000;
    float temperature = 1.0f;
    size_t top_n = 100;
    uint64_t seed = 0;

    void validate() const;
};

struct LogitLensResult {
    std::vector<size_t> offsets;
    // mrr[layer-1][offset_index], layers 1..L
    std::vector<std::vector<double>> mrr;
    // best layer per offset
    std::vector<double> final_mrr;
    size_t instances = 0;
    size_t docs_skipped = 0;
};

LogitLensResult logit_lens_probe(const ModelWeights& weights, const ModelConfig& cfg,
                                 const std::vector<std::vector<int>>& doc_tokens,
                                 const LogitLensConfig& probe_cfg);

} // namespace valent
