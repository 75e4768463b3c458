#include "valent/transformer.hpp"

#include <cmath>

namespace valent {

namespace {

void check_recorded(bool ok, const char* what) {
    require(ok, ErrorKind::trace, std::string("trace field not recorded: ") + what);
}

Vector apply_norm(const ModelConfig& cfg, const Vector& v, const Vector& gain) {
    return cfg.norm_kind == NormKind::rms ? rms_norm(v, gain, cfg.eps)
                                          : layer_norm(v, gain, cfg.eps);
}

} // namespace

const Vector& ForwardTrace::hidden(size_t l, size_t n) const {
    check_recorded(opts.record_hidden, "hidden");
    return hidden_.at(l).at(n);
}
const Vector& ForwardTrace::value(size_t l, size_t kv_head, size_t n) const {
    check_recorded(opts.record_values, "values");
    return values_.at(l - 1).at(kv_head).at(n);
}
const Matrix& ForwardTrace::attn(size_t l, size_t head) const {
    check_recorded(opts.record_attn_weights, "attn_weights");
    return attn_.at(l - 1).at(head);
}
const Vector& ForwardTrace::head_out(size_t l, size_t head, size_t n) const {
    check_recorded(opts.record_head_outputs, "head_outputs");
    return head_out_.at(l - 1).at(head).at(n);
}
const Vector& ForwardTrace::attn_out(size_t l, size_t n) const {
    check_recorded(opts.record_attn_out, "attn_out");
    return attn_out_.at(l - 1).at(n);
}
const Vector& ForwardTrace::ffn_out(size_t l, size_t n) const {
    check_recorded(opts.record_ffn_out, "ffn_out");
    return ffn_out_.at(l - 1).at(n);
}
const Vector& ForwardTrace::logits(size_t n) const {
    check_recorded(opts.record_logits, "logits");
    return logits_.at(n);
}

ForwardTrace forward(const ModelWeights& weights, const ModelConfig& cfg,
                     const std::vector<int>& tokens, const TraceOptions& opts,
                     const AttentionMask& mask) {
    cfg.validate();
    require(opts.any(), ErrorKind::config, "trace options: at least one flag must be set");
    size_t n = tokens.size();
    require(n >= 1, ErrorKind::input, "forward: empty token sequence");
    require(n <= cfg.max_seq_len, ErrorKind::input,
            "forward: sequence length " + std::to_string(n) + " exceeds max_seq_len " +
                std::to_string(cfg.max_seq_len));
    for (int id : tokens)
        require(id >= 0 && static_cast<size_t>(id) < cfg.vocab_size, ErrorKind::input,
                "forward: token id " + std::to_string(id) + " out of vocab");

    size_t H = cfg.n_heads, kv = cfg.n_kv_heads, dh = cfg.d_head, d = cfg.d_model;

    ForwardTrace trace;
    trace.n_tokens = n;
    trace.n_layers = cfg.n_layers;
    trace.n_heads = H;
    trace.n_kv_heads = kv;
    trace.d_head = dh;
    trace.d_model = d;
    trace.opts = opts;

    // embedding stage (x^0)
    std::vector<Vector> x(n);
    for (size_t i = 0; i < n; ++i) {
        x[i].assign(weights.token_embedding.row(tokens[i]).begin(),
                    weights.token_embedding.row(tokens[i]).end());
        if (cfg.pos_kind == PosKind::learned) {
            auto pos = weights.learned_pos.row(i);
            for (size_t j = 0; j < d; ++j) x[i][j] += pos[j];
        }
    }
    if (opts.record_hidden) trace.hidden_.push_back(x);

    if (opts.record_values) trace.values_.resize(cfg.n_layers);
    if (opts.record_attn_weights) trace.attn_.resize(cfg.n_layers);
    if (opts.record_head_outputs) trace.head_out_.resize(cfg.n_layers);
    if (opts.record_attn_out) trace.attn_out_.resize(cfg.n_layers);
    if (opts.record_ffn_out) trace.ffn_out_.resize(cfg.n_layers);

    double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    for (size_t l = 0; l < cfg.n_layers; ++l) {
        const LayerWeights& lw = weights.layers[l];

        // q/k/v projections of the normalized residual stream
        std::vector<Vector> q(n), k(n), v(n);
        for (size_t i = 0; i < n; ++i) {
            Vector normed = apply_norm(cfg, x[i], lw.attn_norm);
            q[i] = matvec_left(normed, lw.wq);
            k[i] = matvec_left(normed, lw.wk);
            v[i] = matvec_left(normed, lw.wv);
            if (cfg.pos_kind == PosKind::rope) {
                for (size_t h = 0; h < H; ++h)
                    rope_apply_row({q[i].data() + h * dh, dh}, i, cfg.rope_theta);
                for (size_t g = 0; g < kv; ++g)
                    rope_apply_row({k[i].data() + g * dh, dh}, i, cfg.rope_theta);
            }
        }

        if (opts.record_values) {
            auto& vl = trace.values_[l];
            vl.assign(kv, std::vector<Vector>(n));
            for (size_t g = 0; g < kv; ++g)
                for (size_t i = 0; i < n; ++i)
                    vl[g][i].assign(v[i].begin() + g * dh, v[i].begin() + (g + 1) * dh);
        }

        if (opts.record_attn_weights)
            trace.attn_[l].assign(H, Matrix(n, n));
        if (opts.record_head_outputs)
            trace.head_out_[l].assign(H, std::vector<Vector>(n));

        // attention per query head
        std::vector<Vector> z(n, Vector(H * dh, 0.0f));
        for (size_t h = 0; h < H; ++h) {
            size_t g = cfg.kv_group(h);
            for (size_t i = 0; i < n; ++i) {
                Vector row(n, kMasked);
                bool any = false;
                for (size_t j = 0; j < n; ++j) {
                    if (!mask.allows(i, j)) continue;
                    any = true;
                    double dot = 0.0;
                    for (size_t c = 0; c < dh; ++c)
                        dot += static_cast<double>(q[i][h * dh + c]) * k[j][g * dh + c];
                    row[j] = static_cast<float>(dot * inv_sqrt_dh);
                }
                require(any, ErrorKind::input, "empty attention row");
                softmax_row(row);

                std::vector<double> acc(dh, 0.0);
                for (size_t j = 0; j < n; ++j) {
                    if (row[j] == 0.0f) continue;
                    double a = row[j];
                    for (size_t c = 0; c < dh; ++c) acc[c] += a * v[j][g * dh + c];
                }
                for (size_t c = 0; c < dh; ++c)
                    z[i][h * dh + c] = static_cast<float>(acc[c]);

                if (opts.record_attn_weights)
                    std::copy(row.begin(), row.end(), trace.attn_[l][h].row(i).begin());
                if (opts.record_head_outputs)
                    trace.head_out_[l][h][i].assign(z[i].begin() + h * dh,
                                                    z[i].begin() + (h + 1) * dh);
            }
        }

        // output projection + residual, then FFN + residual
        if (opts.record_attn_out) trace.attn_out_[l].resize(n);
        if (opts.record_ffn_out) trace.ffn_out_[l].resize(n);
        for (size_t i = 0; i < n; ++i) {
            Vector a = matvec_left(z[i], lw.wo);
            if (opts.record_attn_out) trace.attn_out_[l][i] = a;
            Vector mid(d);
            for (size_t j = 0; j < d; ++j) mid[j] = x[i][j] + a[j];

            Vector fin = apply_norm(cfg, mid, lw.ffn_norm);
            Vector hdn = matvec_left(fin, lw.w1);
            for (float& val : hdn)
                val = cfg.activation == Activation::gelu ? gelu(val) : silu(val);
            Vector f = matvec_left(hdn, lw.w2);
            if (opts.record_ffn_out) trace.ffn_out_[l][i] = f;

            for (size_t j = 0; j < d; ++j) x[i][j] = mid[j] + f[j];
        }
        if (opts.record_hidden) trace.hidden_.push_back(x);
    }

    if (opts.record_logits) {
        trace.logits_.resize(n);
        for (size_t i = 0; i < n; ++i) {
            Vector normed = apply_norm(cfg, x[i], weights.final_norm);
            trace.logits_[i].resize(cfg.vocab_size);
            for (size_t t = 0; t < cfg.vocab_size; ++t) {
                double dot = 0.0;
                auto urow = weights.unembedding.row(t);
                for (size_t j = 0; j < d; ++j) dot += static_cast<double>(urow[j]) * normed[j];
                trace.logits_[i][t] = static_cast<float>(dot);
            }
        }
    }
    return trace;
}

ForwardTrace forward_prefix_restricted(const ModelWeights& weights, const ModelConfig& cfg,
                                       const std::vector<int>& tokens, size_t prefix_len,
                                       const TraceOptions& opts) {
    require(prefix_len >= 1 && prefix_len < tokens.size(), ErrorKind::input,
            "prefix_len must be in [1, n_tokens)");
    return forward(weights, cfg, tokens, opts, AttentionMask::prefix(prefix_len));
}

Vector logits_from_vector(const ModelWeights& weights, const Vector& v, float temperature) {
    require(temperature > 0.0f, ErrorKind::input, "temperature must be positive");
    require(v.size() == weights.unembedding.cols, ErrorKind::shape,
            "logits_from_vector: dim mismatch");
    size_t vocab = weights.unembedding.rows;
    Vector scores(vocab);
    for (size_t t = 0; t < vocab; ++t) {
        double dot = 0.0;
        auto urow = weights.unembedding.row(t);
        for (size_t j = 0; j < v.size(); ++j) dot += static_cast<double>(urow[j]) * v[j];
        scores[t] = static_cast<float>(dot / temperature);
    }
    softmax_row(scores);
    return scores;
}

} // namespace valent
