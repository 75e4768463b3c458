#include "valent/probes.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>

#include "valent/metrics.hpp"

namespace valent {

void SegmentProbeConfig::validate() const {
    require(0.0 < split_lo && split_lo < split_hi && split_hi < 1.0, ErrorKind::config,
            "segment probe: need 0 < split_lo < split_hi < 1");
    require(!k_list.empty(), ErrorKind::config, "segment probe: k_list is empty");
    require(min_tokens >= 2, ErrorKind::config, "segment probe: min_tokens must be >= 2");
}

std::optional<size_t> sample_split(size_t doc_len, const SegmentProbeConfig& cfg,
                                   SplitMix64& rng) {
    size_t lo = static_cast<size_t>(std::ceil(cfg.split_lo * static_cast<double>(doc_len)));
    size_t hi = static_cast<size_t>(std::floor(cfg.split_hi * static_cast<double>(doc_len)));
    lo = std::max<size_t>(lo, 1);
    if (hi >= doc_len) hi = doc_len - 1; // suffix needs at least one token
    if (lo > hi) return std::nullopt;
    return static_cast<size_t>(rng.next_range(lo, hi));
}

SegmentProbeResult segment_match_probe(const std::vector<std::vector<int>>& doc_tokens,
                                       size_t n_layers, const SegmentProbeConfig& cfg,
                                       const SegmentEmbedder& embedder) {
    cfg.validate();
    SplitMix64 rng(cfg.seed);

    std::vector<std::vector<int>> prefixes, suffixes;
    SegmentProbeResult res;
    res.k_list = cfg.k_list;
    for (const auto& tokens : doc_tokens) {
        std::vector<int> doc = tokens;
        if (doc.size() > cfg.max_tokens) doc.resize(cfg.max_tokens);
        if (doc.size() < cfg.min_tokens) {
            ++res.docs_skipped;
            continue;
        }
        auto t = sample_split(doc.size(), cfg, rng);
        if (!t) {
            ++res.docs_skipped;
            continue;
        }
        prefixes.emplace_back(doc.begin(), doc.begin() + static_cast<ptrdiff_t>(*t));
        suffixes.emplace_back(doc.begin() + static_cast<ptrdiff_t>(*t), doc.end());
        ++res.docs_used;
    }
    require(prefixes.size() >= 2, ErrorKind::input,
            "segment probe needs at least 2 usable documents (have " +
                std::to_string(prefixes.size()) + ")");

    size_t m = prefixes.size();
    res.recall.assign(n_layers, std::vector<double>(cfg.k_list.size(), 0.0));
    for (size_t l = 1; l <= n_layers; ++l) {
        std::vector<Vector> pe(m), se(m);
        for (size_t i = 0; i < m; ++i) {
            pe[i] = embedder(prefixes[i], l, 2 * i);
            se[i] = embedder(suffixes[i], l, 2 * i + 1);
        }
        Matrix sim = similarity_matrix(pe, se);
        for (size_t i = 0; i < m; ++i) {
            auto ranking = stable_rank_desc(sim.row(i));
            for (size_t ki = 0; ki < cfg.k_list.size(); ++ki)
                res.recall[l - 1][ki] += recall_at_k(ranking, i, cfg.k_list[ki]);
        }
        for (double& r : res.recall[l - 1]) r /= static_cast<double>(m);
    }
    return res;
}

SegmentEmbedder make_model_segment_embedder(const ModelWeights& weights,
                                            const ModelConfig& cfg, SegmentMethod method) {
    TraceOptions opts;
    if (method == SegmentMethod::va)
        opts.record_values = true;
    else
        opts.record_hidden = true;

    // traces are reused across layers, keyed by segment
    auto cache = std::make_shared<std::map<size_t, ForwardTrace>>();
    return [&weights, &cfg, method, opts, cache](const std::vector<int>& tokens, size_t layer,
                                                 size_t cache_key) -> Vector {
        auto it = cache->find(cache_key);
        if (it == cache->end())
            it = cache->emplace(cache_key, forward(weights, cfg, tokens, opts)).first;
        LayerSet single = LayerSet::explicit_({layer});
        if (method == SegmentMethod::va) return pool_va(it->second, single).vector;
        return pool_hidden(it->second, single, HiddenWeighting::mean).vector;
    };
}

void LogitLensConfig::validate() const {
    require(prefix_lo >= 1 && prefix_lo <= prefix_hi, ErrorKind::config,
            "logit lens: need 1 <= prefix_lo <= prefix_hi");
    require(!offsets.empty(), ErrorKind::config, "logit lens: offsets is empty");
    for (size_t k : offsets)
        require(k >= 1, ErrorKind::config, "logit lens: offsets must be >= 1");
    require(temperature > 0.0f, ErrorKind::config, "logit lens: temperature must be positive");
    require(top_n >= 1, ErrorKind::config, "logit lens: top_n must be >= 1");
}

LogitLensResult logit_lens_probe(const ModelWeights& weights, const ModelConfig& cfg,
                                 const std::vector<std::vector<int>>& doc_tokens,
                                 const LogitLensConfig& probe_cfg) {
    probe_cfg.validate();
    SplitMix64 rng(probe_cfg.seed);
    size_t L = cfg.n_layers;
    size_t max_k = *std::max_element(probe_cfg.offsets.begin(), probe_cfg.offsets.end());

    LogitLensResult res;
    res.offsets = probe_cfg.offsets;
    res.mrr.assign(L, std::vector<double>(probe_cfg.offsets.size(), 0.0));

    TraceOptions opts;
    opts.record_attn_out = true;

    for (const auto& tokens : doc_tokens) {
        std::vector<int> doc = tokens;
        if (doc.size() > probe_cfg.truncate_tokens) doc.resize(probe_cfg.truncate_tokens);
        // need t + max_k + 1 tokens so the last probed position has a ground truth
        if (doc.size() < probe_cfg.prefix_lo + max_k + 1) {
            ++res.docs_skipped;
            continue;
        }
        size_t hi = std::min(probe_cfg.prefix_hi, doc.size() - max_k - 1);
        size_t t = static_cast<size_t>(rng.next_range(probe_cfg.prefix_lo, hi));

        std::vector<int> window(doc.begin(), doc.begin() + static_cast<ptrdiff_t>(t + max_k));
        ForwardTrace trace = forward_prefix_restricted(weights, cfg, window, t, opts);

        for (size_t ki = 0; ki < probe_cfg.offsets.size(); ++ki) {
            size_t k = probe_cfg.offsets[ki];
            int truth = doc[t + k]; // x_{t+k+1}, 1-based
            for (size_t l = 1; l <= L; ++l) {
                Vector probs =
                    logits_from_vector(weights, trace.attn_out(l, t + k - 1),
                                       probe_cfg.temperature);
                auto ranking = stable_rank_desc(probs);
                size_t rank = 0;
                for (size_t r = 0; r < ranking.size(); ++r) {
                    if (ranking[r] == static_cast<size_t>(truth)) {
                        rank = r + 1;
                        break;
                    }
                }
                res.mrr[l - 1][ki] += mrr_at_n(rank, probe_cfg.top_n);
            }
        }
        ++res.instances;
    }
    require(res.instances > 0, ErrorKind::input,
            "logit lens probe: no usable instance (docs skipped: " +
                std::to_string(res.docs_skipped) + ")");

    for (auto& row : res.mrr)
        for (double& v : row) v /= static_cast<double>(res.instances);
    res.final_mrr.assign(probe_cfg.offsets.size(), 0.0);
    for (size_t ki = 0; ki < probe_cfg.offsets.size(); ++ki)
        for (size_t l = 0; l < L; ++l)
            res.final_mrr[ki] = std::max(res.final_mrr[ki], res.mrr[l][ki]);
    return res;
}

} // namespace valent
