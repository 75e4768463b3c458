#pragma once

#include <string>
#include <vector>

#include "valent/io.hpp"
#include "valent/transformer.hpp"

namespace valent {

struct LayerSet {
    enum class Kind { full, half, explicit_set };
    Kind kind = Kind::full;
    std::vector<size_t> layers; // sorted, unique, 1..L; used when explicit

    // Resolve against a layer count. half = {ceil(L/2) .. L}.
    std::vector<size_t> resolve(size_t n_layers) const;

    static LayerSet full() { return {Kind::full, {}}; }
    static LayerSet half() { return {Kind::half, {}}; }
    static LayerSet explicit_(std::vector<size_t> layers);
    std::string describe() const;
};

struct PromptTemplate {
    std::string name = "none";
    std::string prefix;
    std::string suffix;
    bool echo = false; // duplicate the sentence instead of wrapping it

    static PromptTemplate builtin(const std::string& name);
};

struct RenderedPrompt {
    std::string text;
    // character range of the (second copy of the) sentence inside text
    size_t span_begin = 0;
    size_t span_end = 0;
};

// Render a template around a whitespace-normalized sentence.
RenderedPrompt render_prompt(const PromptTemplate& tmpl, const std::string& sentence);

enum class PoolMethod {
    hs_mean,
    last_token,
    weighted_mean,
    echo_mean,
    va,
    wva_last,
    wva_prompted,
    aligned_wva,
};

PoolMethod pool_method_from(const std::string& s);
std::string pool_method_name(PoolMethod m);

struct PoolSpec {
    PoolMethod method = PoolMethod::va;
    LayerSet layer_set;
    PromptTemplate tmpl;

    void validate() const;
    std::string fingerprint() const; // stable hash of the spec, for caches
};

struct Embedding {
    Vector vector;
    PoolSpec spec;
    std::string model_id;

    size_t dim() const { return vector.size(); }
};

enum class HiddenWeighting { mean, last, positional };

// Hidden-state pooling: mean over the layer set and tokens, last token of
// the final layer, or linearly position-weighted mean of the final layer.
Embedding pool_hidden(const ForwardTrace& trace, const LayerSet& layers,
                      HiddenWeighting weighting);

// Mean over layers and tokens of the concatenated distinct value heads.
// Under GQA the result has n_kv_heads * d_head dims.
Embedding pool_va(const ForwardTrace& trace, const LayerSet& layers);

// Mean over layers of the last token's concatenated head outputs (all
// query heads, so always d_model dims).
Embedding pool_wva(const ForwardTrace& trace, const LayerSet& layers);

// Mean over layers of the last token's attention sublayer output a^l.
Embedding pool_aligned_wva(const ForwardTrace& trace, const LayerSet& layers);

// Mean of last-layer hidden states over a token range [begin, end).
Embedding pool_hidden_span(const ForwardTrace& trace, size_t begin, size_t end);

// Full pipeline: normalize, template, tokenize, forward with the minimal
// trace options for the method, pool.
Embedding embed(const ModelWeights& weights, const ModelConfig& cfg,
                const Tokenizer& tokenizer, const std::string& sentence,
                const PoolSpec& spec, const std::string& model_id = "");

// The smallest TraceOptions that lets `spec.method` pool.
TraceOptions minimal_trace_options(PoolMethod method);

} // namespace valent
