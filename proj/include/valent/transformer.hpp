#pragma once

#include <cstdint>
#include <vector>

#include "valent/model.hpp"

namespace valent {

struct TraceOptions {
    bool record_hidden = false;
    bool record_values = false;
    bool record_attn_weights = false;
    bool record_head_outputs = false;
    bool record_attn_out = false;
    bool record_ffn_out = false;
    bool record_logits = false;

    bool any() const {
        return record_hidden || record_values || record_attn_weights ||
               record_head_outputs || record_attn_out || record_ffn_out || record_logits;
    }
    static TraceOptions all() {
        return {true, true, true, true, true, true, true};
    }
};

// Either the plain causal mask or the prefix-restricted mask used by the
// logit-lens probe: queries past the prefix attend only to prefix keys,
// never to themselves.
struct AttentionMask {
    enum class Kind { causal, prefix_restricted };
    Kind kind = Kind::causal;
    size_t prefix_len = 0; // tokens 0..prefix_len-1 form the prefix

    bool allows(size_t query, size_t key) const {
        if (kind == Kind::causal || query < prefix_len) return key <= query;
        return key < prefix_len;
    }
    static AttentionMask causal() { return {}; }
    static AttentionMask prefix(size_t t) {
        return {Kind::prefix_restricted, t};
    }
};

// Per-layer record of everything the pooling and probing code reads.
// Layer-indexed fields use l in 1..L (stored at [l-1]); hidden() also
// accepts l = 0 for the embedding-stage output. Token indices are 0-based.
struct ForwardTrace {
    size_t n_tokens = 0;
    size_t n_layers = 0;
    size_t n_heads = 0;
    size_t n_kv_heads = 0;
    size_t d_head = 0;
    size_t d_model = 0;
    TraceOptions opts;

    std::vector<std::vector<Vector>> hidden_;                  // [0..L][n]
    std::vector<std::vector<std::vector<Vector>>> values_;     // [l-1][kv][n]
    std::vector<std::vector<Matrix>> attn_;                    // [l-1][h], N x N
    std::vector<std::vector<std::vector<Vector>>> head_out_;   // [l-1][h][n]
    std::vector<std::vector<Vector>> attn_out_;                // [l-1][n]
    std::vector<std::vector<Vector>> ffn_out_;                 // [l-1][n]
    std::vector<Vector> logits_;                               // [n], vocab

    const Vector& hidden(size_t l, size_t n) const;
    const Vector& value(size_t l, size_t kv_head, size_t n) const;
    const Matrix& attn(size_t l, size_t head) const;
    const Vector& head_out(size_t l, size_t head, size_t n) const;
    const Vector& attn_out(size_t l, size_t n) const;
    const Vector& ffn_out(size_t l, size_t n) const;
    const Vector& logits(size_t n) const;
};

ForwardTrace forward(const ModelWeights& weights, const ModelConfig& cfg,
                     const std::vector<int>& tokens, const TraceOptions& opts,
                     const AttentionMask& mask = AttentionMask::causal());

// Appendix-style prefix restriction: positions <= t behave as in the plain
// causal pass, positions > t attend only to keys 1..t. t counts prefix tokens.
ForwardTrace forward_prefix_restricted(const ModelWeights& weights, const ModelConfig& cfg,
                                       const std::vector<int>& tokens, size_t prefix_len,
                                       const TraceOptions& opts);

// softmax(U v / tau): probability vector over the vocabulary.
Vector logits_from_vector(const ModelWeights& weights, const Vector& v, float temperature);

} // namespace valent
