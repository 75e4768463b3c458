#include "valent/model.hpp"

#include <cmath>

#include "valent/rng.hpp"

namespace valent {

void ModelConfig::validate() const {
    require(d_model > 0 && n_layers > 0 && n_heads > 0 && n_kv_heads > 0 && d_head > 0,
            ErrorKind::config, "config: all dimensions must be positive");
    require(d_model == n_heads * d_head, ErrorKind::config,
            "config: d_model must equal n_heads * d_head");
    require(n_heads % n_kv_heads == 0, ErrorKind::config,
            "config: n_kv_heads must divide n_heads");
    require(d_ff >= d_model, ErrorKind::config, "config: d_ff must be >= d_model");
    require(vocab_size >= 2, ErrorKind::config, "config: vocab_size must be >= 2");
    require(max_seq_len > 0, ErrorKind::config, "config: max_seq_len must be positive");
    if (pos_kind == PosKind::rope)
        require(d_head % 2 == 0, ErrorKind::config, "config: rope needs even d_head");
}

void ModelWeights::validate(const ModelConfig& cfg) const {
    auto check = [](bool ok, const std::string& what) {
        require(ok, ErrorKind::config, "weights: bad shape for " + what);
    };
    check(token_embedding.rows == cfg.vocab_size && token_embedding.cols == cfg.d_model,
          "embed.tokens");
    if (cfg.pos_kind == PosKind::learned)
        check(learned_pos.rows == cfg.max_seq_len && learned_pos.cols == cfg.d_model,
              "embed.pos");
    check(layers.size() == cfg.n_layers, "layer count");
    size_t qdim = cfg.n_heads * cfg.d_head;
    size_t kvdim = cfg.n_kv_heads * cfg.d_head;
    for (size_t l = 0; l < layers.size(); ++l) {
        const auto& lw = layers[l];
        std::string tag = "layers." + std::to_string(l + 1);
        check(lw.wq.rows == cfg.d_model && lw.wq.cols == qdim, tag + ".attn.wq");
        check(lw.wk.rows == cfg.d_model && lw.wk.cols == kvdim, tag + ".attn.wk");
        check(lw.wv.rows == cfg.d_model && lw.wv.cols == kvdim, tag + ".attn.wv");
        check(lw.wo.rows == qdim && lw.wo.cols == cfg.d_model, tag + ".attn.wo");
        check(lw.w1.rows == cfg.d_model && lw.w1.cols == cfg.d_ff, tag + ".ffn.w1");
        check(lw.w2.rows == cfg.d_ff && lw.w2.cols == cfg.d_model, tag + ".ffn.w2");
        check(lw.attn_norm.size() == cfg.d_model, tag + ".attn.norm");
        check(lw.ffn_norm.size() == cfg.d_model, tag + ".ffn.norm");
    }
    check(final_norm.size() == cfg.d_model, "final.norm");
    check(unembedding.rows == cfg.vocab_size && unembedding.cols == cfg.d_model, "unembed");
    for (float x : token_embedding.data)
        require(std::isfinite(x), ErrorKind::config, "weights: non-finite value");
}

namespace {

void fill_matrix(Matrix& m, size_t rows, size_t cols, SplitMix64& rng, double scale) {
    m = Matrix(rows, cols);
    for (float& x : m.data) x = rng.next_symmetric(scale);
}

} // namespace

ModelWeights init_random(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    SplitMix64 rng(seed);
    double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
    size_t qdim = cfg.n_heads * cfg.d_head;
    size_t kvdim = cfg.n_kv_heads * cfg.d_head;

    ModelWeights w;
    fill_matrix(w.token_embedding, cfg.vocab_size, cfg.d_model, rng, scale);
    if (cfg.pos_kind == PosKind::learned)
        fill_matrix(w.learned_pos, cfg.max_seq_len, cfg.d_model, rng, scale);
    w.layers.resize(cfg.n_layers);
    for (auto& lw : w.layers) {
        fill_matrix(lw.wq, cfg.d_model, qdim, rng, scale);
        fill_matrix(lw.wk, cfg.d_model, kvdim, rng, scale);
        fill_matrix(lw.wv, cfg.d_model, kvdim, rng, scale);
        fill_matrix(lw.wo, qdim, cfg.d_model, rng, scale);
        fill_matrix(lw.w1, cfg.d_model, cfg.d_ff, rng, scale);
        fill_matrix(lw.w2, cfg.d_ff, cfg.d_model, rng, scale);
        lw.attn_norm.assign(cfg.d_model, 1.0f);
        lw.ffn_norm.assign(cfg.d_model, 1.0f);
    }
    w.final_norm.assign(cfg.d_model, 1.0f);
    fill_matrix(w.unembedding, cfg.vocab_size, cfg.d_model, rng, scale);
    return w;
}

std::string norm_kind_name(NormKind k) { return k == NormKind::rms ? "rms" : "layernorm"; }
std::string activation_name(Activation a) { return a == Activation::gelu ? "gelu" : "silu"; }
std::string pos_kind_name(PosKind p) { return p == PosKind::rope ? "rope" : "learned"; }

NormKind norm_kind_from(const std::string& s) {
    if (s == "rms") return NormKind::rms;
    if (s == "layernorm") return NormKind::layernorm;
    raise(ErrorKind::config, "unknown norm_kind: " + s);
}
Activation activation_from(const std::string& s) {
    if (s == "gelu") return Activation::gelu;
    if (s == "silu") return Activation::silu;
    raise(ErrorKind::config, "unknown activation: " + s);
}
PosKind pos_kind_from(const std::string& s) {
    if (s == "rope") return PosKind::rope;
    if (s == "learned") return PosKind::learned;
    raise(ErrorKind::config, "unknown pos_kind: " + s);
}

} // namespace valent
