#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "valent/layerselect.hpp"
#include "valent/pooling.hpp"
#include "valent/probes.hpp"

namespace valent {

inline constexpr const char* kToolVersion = "0.1.0";

// Loaded model plus the identity string stamped into outputs.
struct Model {
    ModelWeights weights;
    ModelConfig config;
    std::string model_id; // digest of the archive file
};

Model load_model(const std::string& archive_path);

struct ToyConfig {
    size_t d_model = 32;
    size_t n_layers = 4;
    size_t n_heads = 4;
    size_t n_kv_heads = 0; // 0 -> same as n_heads
    size_t d_ff = 0;       // 0 -> 4 * d_model
    size_t vocab_size = 2048;
    size_t max_seq_len = 1024;
    std::string norm_kind = "rms";
    std::string activation = "gelu";
    std::string pos_kind = "rope";
    uint64_t seed = 0;
};

// Generate a seeded toy archive. Returns the run summary JSON.
std::string cmd_gen_toy(const ToyConfig& toy, const std::string& out_path);

// Embed one sentence; the building block everything else uses.
Embedding embed_sentence(const Model& model, const Tokenizer& tok,
                         const std::string& sentence, const PoolSpec& spec);

// Embed a file of sentences (one per line) into an embedding cache.
std::string cmd_embed(const Model& model, const Tokenizer& tok,
                      const std::string& sentences_path, const PoolSpec& spec,
                      const std::string& cache_path, size_t threads);

std::string cmd_eval_sts(const Model& model, const Tokenizer& tok,
                         const std::string& sts_path, const PoolSpec& spec, size_t threads);

std::string cmd_eval_retrieval(const Model& model, const Tokenizer& tok,
                               const std::string& corpus_path, const PoolSpec& spec,
                               size_t threads);

std::string cmd_eval_rerank(const Model& model, const Tokenizer& tok,
                            const std::string& corpus_path, const PoolSpec& spec,
                            size_t threads);

// Layer sweep over dev STS + retrieval corpora; writes the score CSV and
// selection JSON under out_dir, returns the summary JSON.
std::string cmd_sweep_layers(const Model& model, const Tokenizer& tok,
                             const std::string& dev_sts_path,
                             const std::string& dev_retrieval_path,
                             const std::string& method, const SelectionPolicy& policy,
                             const std::string& out_dir);

std::string cmd_probe_segments(const Model& model, const Tokenizer& tok,
                               const std::string& corpus_path, const SegmentProbeConfig& cfg,
                               const std::string& method, const std::string& out_dir);

std::string cmd_probe_logitlens(const Model& model, const Tokenizer& tok,
                                const std::string& corpus_path, const LogitLensConfig& cfg,
                                const std::string& out_dir);

// Parse "full" | "half" | "explicit:1,2,3" | "preset:llama2_7b" | "preset:qwen3_8b".
LayerSet parse_layer_spec(const std::string& s);

} // namespace valent
