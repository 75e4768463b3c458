#include "valent/pooling.hpp"

#include <algorithm>

namespace valent {

std::vector<size_t> LayerSet::resolve(size_t n_layers) const {
    std::vector<size_t> out;
    switch (kind) {
    case Kind::full:
        for (size_t l = 1; l <= n_layers; ++l) out.push_back(l);
        break;
    case Kind::half:
        for (size_t l = (n_layers + 1) / 2; l <= n_layers; ++l) out.push_back(l);
        break;
    case Kind::explicit_set:
        for (size_t l : layers)
            require(l >= 1 && l <= n_layers, ErrorKind::spec,
                    "layer " + std::to_string(l) + " outside 1.." + std::to_string(n_layers));
        out = layers;
        break;
    }
    require(!out.empty(), ErrorKind::spec, "layer set resolves to empty");
    return out;
}

LayerSet LayerSet::explicit_(std::vector<size_t> layers) {
    std::sort(layers.begin(), layers.end());
    layers.erase(std::unique(layers.begin(), layers.end()), layers.end());
    require(!layers.empty(), ErrorKind::spec, "explicit layer set is empty");
    return {Kind::explicit_set, std::move(layers)};
}

std::string LayerSet::describe() const {
    switch (kind) {
    case Kind::full: return "full";
    case Kind::half: return "half";
    default: {
        std::string s = "explicit:";
        for (size_t i = 0; i < layers.size(); ++i) {
            if (i) s += ',';
            s += std::to_string(layers[i]);
        }
        return s;
    }
    }
}

PromptTemplate PromptTemplate::builtin(const std::string& name) {
    if (name == "none") return {"none", "", "", false};
    if (name == "prompt_eol")
        return {"prompt_eol", "This sentence: ", " means in one word:", false};
    if (name == "future_eol")
        return {"future_eol", "Forecasting the subsequent tokens ", " in one word:", false};
    if (name == "echo") return {"echo", "", "", true};
    raise(ErrorKind::spec, "unknown prompt template: " + name);
}

RenderedPrompt render_prompt(const PromptTemplate& tmpl, const std::string& sentence) {
    std::string s = normalize_whitespace(sentence);
    require(!s.empty(), ErrorKind::input, "sentence is empty after trimming");
    RenderedPrompt r;
    if (tmpl.echo) {
        r.text = s + " " + s;
        r.span_begin = s.size() + 1;
        r.span_end = r.text.size();
    } else {
        r.text = tmpl.prefix + s + tmpl.suffix;
        r.span_begin = tmpl.prefix.size();
        r.span_end = tmpl.prefix.size() + s.size();
    }
    return r;
}

PoolMethod pool_method_from(const std::string& s) {
    if (s == "hs_mean") return PoolMethod::hs_mean;
    if (s == "last_token") return PoolMethod::last_token;
    if (s == "weighted_mean") return PoolMethod::weighted_mean;
    if (s == "echo" || s == "echo_mean") return PoolMethod::echo_mean;
    if (s == "va") return PoolMethod::va;
    if (s == "wva_last") return PoolMethod::wva_last;
    if (s == "wva" || s == "wva_prompted") return PoolMethod::wva_prompted;
    if (s == "aligned_wva") return PoolMethod::aligned_wva;
    raise(ErrorKind::spec, "unknown pooling method: " + s);
}

std::string pool_method_name(PoolMethod m) {
    switch (m) {
    case PoolMethod::hs_mean: return "hs_mean";
    case PoolMethod::last_token: return "last_token";
    case PoolMethod::weighted_mean: return "weighted_mean";
    case PoolMethod::echo_mean: return "echo_mean";
    case PoolMethod::va: return "va";
    case PoolMethod::wva_last: return "wva_last";
    case PoolMethod::wva_prompted: return "wva_prompted";
    case PoolMethod::aligned_wva: return "aligned_wva";
    }
    return "?";
}

void PoolSpec::validate() const {
    if (method == PoolMethod::echo_mean)
        require(tmpl.echo, ErrorKind::spec, "echo_mean requires the echo template");
}

std::string PoolSpec::fingerprint() const {
    std::string key = pool_method_name(method) + "|" + layer_set.describe() + "|" +
                      tmpl.name + "|" + tmpl.prefix + "|" + tmpl.suffix + "|" +
                      (tmpl.echo ? "echo" : "wrap");
    return fnv1a64_hex(key);
}

namespace {

Embedding finish(Vector v, const LayerSet& layers, PoolMethod method) {
    Embedding e;
    e.vector = std::move(v);
    e.spec.method = method;
    e.spec.layer_set = layers;
    return e;
}

} // namespace

Embedding pool_hidden(const ForwardTrace& trace, const LayerSet& layers,
                      HiddenWeighting weighting) {
    size_t n = trace.n_tokens, d = trace.d_model, L = trace.n_layers;
    if (weighting == HiddenWeighting::last)
        return finish(trace.hidden(L, n - 1), layers, PoolMethod::last_token);
    if (weighting == HiddenWeighting::positional) {
        // w_i = i / sum(1..N), 1-based position weighting of the last layer
        double denom = static_cast<double>(n) * (n + 1) / 2.0;
        std::vector<double> acc(d, 0.0);
        for (size_t i = 0; i < n; ++i) {
            double w = static_cast<double>(i + 1) / denom;
            const Vector& x = trace.hidden(L, i);
            for (size_t j = 0; j < d; ++j) acc[j] += w * x[j];
        }
        Vector v(d);
        for (size_t j = 0; j < d; ++j) v[j] = static_cast<float>(acc[j]);
        return finish(std::move(v), layers, PoolMethod::weighted_mean);
    }
    auto set = layers.resolve(L);
    std::vector<double> acc(d, 0.0);
    for (size_t l : set) {
        std::vector<double> layer_acc(d, 0.0);
        for (size_t i = 0; i < n; ++i) {
            const Vector& x = trace.hidden(l, i);
            for (size_t j = 0; j < d; ++j) layer_acc[j] += x[j];
        }
        for (size_t j = 0; j < d; ++j) acc[j] += layer_acc[j] / static_cast<double>(n);
    }
    Vector v(d);
    for (size_t j = 0; j < d; ++j)
        v[j] = static_cast<float>(acc[j] / static_cast<double>(set.size()));
    return finish(std::move(v), layers, PoolMethod::hs_mean);
}

Embedding pool_va(const ForwardTrace& trace, const LayerSet& layers) {
    size_t n = trace.n_tokens, kv = trace.n_kv_heads, dh = trace.d_head;
    auto set = layers.resolve(trace.n_layers);
    size_t dim = kv * dh;
    std::vector<double> acc(dim, 0.0);
    for (size_t l : set) {
        std::vector<double> layer_acc(dim, 0.0);
        for (size_t g = 0; g < kv; ++g)
            for (size_t i = 0; i < n; ++i) {
                const Vector& val = trace.value(l, g, i);
                for (size_t c = 0; c < dh; ++c) layer_acc[g * dh + c] += val[c];
            }
        for (size_t j = 0; j < dim; ++j) acc[j] += layer_acc[j] / static_cast<double>(n);
    }
    Vector v(dim);
    for (size_t j = 0; j < dim; ++j)
        v[j] = static_cast<float>(acc[j] / static_cast<double>(set.size()));
    return finish(std::move(v), layers, PoolMethod::va);
}

Embedding pool_wva(const ForwardTrace& trace, const LayerSet& layers) {
    size_t H = trace.n_heads, dh = trace.d_head, last = trace.n_tokens - 1;
    auto set = layers.resolve(trace.n_layers);
    size_t dim = H * dh;
    std::vector<double> acc(dim, 0.0);
    for (size_t l : set)
        for (size_t h = 0; h < H; ++h) {
            const Vector& z = trace.head_out(l, h, last);
            for (size_t c = 0; c < dh; ++c) acc[h * dh + c] += z[c];
        }
    Vector v(dim);
    for (size_t j = 0; j < dim; ++j)
        v[j] = static_cast<float>(acc[j] / static_cast<double>(set.size()));
    return finish(std::move(v), layers, PoolMethod::wva_prompted);
}

Embedding pool_aligned_wva(const ForwardTrace& trace, const LayerSet& layers) {
    size_t d = trace.d_model, last = trace.n_tokens - 1;
    auto set = layers.resolve(trace.n_layers);
    if (set.size() == 1)
        return finish(trace.attn_out(set[0], last), layers, PoolMethod::aligned_wva);
    std::vector<double> acc(d, 0.0);
    for (size_t l : set) {
        const Vector& a = trace.attn_out(l, last);
        for (size_t j = 0; j < d; ++j) acc[j] += a[j];
    }
    Vector v(d);
    for (size_t j = 0; j < d; ++j)
        v[j] = static_cast<float>(acc[j] / static_cast<double>(set.size()));
    return finish(std::move(v), layers, PoolMethod::aligned_wva);
}

Embedding pool_hidden_span(const ForwardTrace& trace, size_t begin, size_t end) {
    require(begin < end && end <= trace.n_tokens, ErrorKind::input,
            "pool_hidden_span: bad token range");
    size_t d = trace.d_model, L = trace.n_layers;
    std::vector<double> acc(d, 0.0);
    for (size_t i = begin; i < end; ++i) {
        const Vector& x = trace.hidden(L, i);
        for (size_t j = 0; j < d; ++j) acc[j] += x[j];
    }
    Vector v(d);
    for (size_t j = 0; j < d; ++j)
        v[j] = static_cast<float>(acc[j] / static_cast<double>(end - begin));
    return finish(std::move(v), LayerSet::explicit_({L}), PoolMethod::echo_mean);
}

TraceOptions minimal_trace_options(PoolMethod method) {
    TraceOptions o;
    switch (method) {
    case PoolMethod::hs_mean:
    case PoolMethod::last_token:
    case PoolMethod::weighted_mean:
    case PoolMethod::echo_mean:
        o.record_hidden = true;
        break;
    case PoolMethod::va:
        o.record_values = true;
        break;
    case PoolMethod::wva_last:
    case PoolMethod::wva_prompted:
        o.record_head_outputs = true;
        break;
    case PoolMethod::aligned_wva:
        o.record_attn_out = true;
        break;
    }
    return o;
}

Embedding embed(const ModelWeights& weights, const ModelConfig& cfg,
                const Tokenizer& tokenizer, const std::string& sentence,
                const PoolSpec& spec, const std::string& model_id) {
    spec.validate();
    std::string s = normalize_whitespace(sentence);
    require(!s.empty(), ErrorKind::input, "sentence is empty after trimming");

    // VA is prompt-free; all other methods render their template.
    bool prompt_free = spec.method == PoolMethod::va;
    RenderedPrompt rendered =
        prompt_free ? render_prompt(PromptTemplate::builtin("none"), s)
                    : render_prompt(spec.tmpl, s);

    std::vector<int> tokens = tokenizer.tokenize(rendered.text);
    require(!tokens.empty(), ErrorKind::input, "sentence tokenizes to no tokens");
    require(tokens.size() <= cfg.max_seq_len, ErrorKind::input,
            "input exceeds max_seq_len after applying template '" + spec.tmpl.name + "' (" +
                std::to_string(tokens.size()) + " > " + std::to_string(cfg.max_seq_len) + ")");

    ForwardTrace trace = forward(weights, cfg, tokens, minimal_trace_options(spec.method));

    Embedding e;
    switch (spec.method) {
    case PoolMethod::hs_mean:
        e = pool_hidden(trace, spec.layer_set, HiddenWeighting::mean);
        break;
    case PoolMethod::last_token:
        e = pool_hidden(trace, spec.layer_set, HiddenWeighting::last);
        break;
    case PoolMethod::weighted_mean:
        e = pool_hidden(trace, spec.layer_set, HiddenWeighting::positional);
        break;
    case PoolMethod::echo_mean: {
        size_t before = tokenizer.tokenize(rendered.text.substr(0, rendered.span_begin)).size();
        size_t span = tokenizer
                          .tokenize(rendered.text.substr(rendered.span_begin,
                                                         rendered.span_end - rendered.span_begin))
                          .size();
        e = pool_hidden_span(trace, before, before + span);
        break;
    }
    case PoolMethod::va:
        e = pool_va(trace, spec.layer_set);
        break;
    case PoolMethod::wva_last:
    case PoolMethod::wva_prompted:
        e = pool_wva(trace, spec.layer_set);
        break;
    case PoolMethod::aligned_wva:
        e = pool_aligned_wva(trace, spec.layer_set);
        break;
    }
    e.spec = spec;
    e.model_id = model_id;
    return e;
}

} // namespace valent
