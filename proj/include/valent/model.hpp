#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "valent/numerics.hpp"

namespace valent {

enum class NormKind { rms, layernorm };
enum class Activation { gelu, silu };
enum class PosKind { rope, learned };

struct ModelConfig {
    size_t d_model = 0;
    size_t n_layers = 0;   // transformer layers 1..L; layer 0 is the embedding stage
    size_t n_heads = 0;
    size_t n_kv_heads = 0;
    size_t d_head = 0;
    size_t d_ff = 0;
    size_t vocab_size = 0;
    size_t max_seq_len = 0;
    NormKind norm_kind = NormKind::rms;
    Activation activation = Activation::gelu;
    PosKind pos_kind = PosKind::rope;
    float rope_theta = 10000.0f;
    float eps = 1e-5f;

    void validate() const;
    // kv group for query head h: contiguous grouping, floor(h * n_kv / H).
    size_t kv_group(size_t head) const { return head * n_kv_heads / n_heads; }
};

struct LayerWeights {
    Matrix wq;        // d x H*d_head
    Matrix wk;        // d x n_kv*d_head
    Matrix wv;        // d x n_kv*d_head
    Matrix wo;        // H*d_head x d
    Matrix w1;        // d x d_ff
    Matrix w2;        // d_ff x d
    Vector attn_norm; // d
    Vector ffn_norm;  // d
};

struct ModelWeights {
    Matrix token_embedding; // vocab x d
    Matrix learned_pos;     // max_seq_len x d, only when pos_kind == learned
    std::vector<LayerWeights> layers;
    Vector final_norm;      // d
    Matrix unembedding;     // vocab x d

    void validate(const ModelConfig& cfg) const;
};

// Seeded deterministic init, scale 1/sqrt(d_model). Same (config, seed)
// gives bit-identical weights.
ModelWeights init_random(const ModelConfig& cfg, uint64_t seed);

std::string norm_kind_name(NormKind k);
std::string activation_name(Activation a);
std::string pos_kind_name(PosKind p);
NormKind norm_kind_from(const std::string& s);
Activation activation_from(const std::string& s);
PosKind pos_kind_from(const std::string& s);

} // namespace valent
