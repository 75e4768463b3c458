#include "valent/valent.h"

#include <cstring>
#include <string>

#include <json.hpp>

#include "valent/commands.hpp"

using nlohmann::json;

namespace {

thread_local std::string g_last_error;

valent_status status_from(valent::ErrorKind kind) {
    using valent::ErrorKind;
    switch (kind) {
    case ErrorKind::io:
        return VALENT_ERR_IO;
    case ErrorKind::format:
        return VALENT_ERR_FORMAT;
    case ErrorKind::shape:
    case ErrorKind::config:
    case ErrorKind::input:
    case ErrorKind::spec:
    case ErrorKind::trace:
        return VALENT_ERR_INVALID_ARG;
    default:
        return VALENT_ERR_RUNTIME;
    }
}

template <class F>
valent_status guard(F&& f) {
    try {
        f();
        g_last_error.clear();
        return VALENT_OK;
    } catch (const valent::Error& e) {
        g_last_error = e.what();
        return status_from(e.kind());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return VALENT_ERR_RUNTIME;
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void require_arg(bool ok, const char* what) {
    valent::require(ok, valent::ErrorKind::input, std::string("null argument: ") + what);
}

valent::PoolSpec parse_spec(const char* spec_json) {
    require_arg(spec_json, "spec_json");
    json j;
    try {
        j = json::parse(spec_json);
    } catch (const json::exception& e) {
        valent::raise(valent::ErrorKind::input, std::string("bad spec JSON: ") + e.what());
    }
    valent::PoolSpec spec;
    spec.method = valent::pool_method_from(j.value("method", "va"));
    spec.layer_set = valent::parse_layer_spec(j.value("layers", "full"));
    spec.tmpl = valent::PromptTemplate::builtin(j.value("template", "none"));
    if (spec.method == valent::PoolMethod::echo_mean && spec.tmpl.name == "none")
        spec.tmpl = valent::PromptTemplate::builtin("echo");
    spec.validate();
    return spec;
}

json parse_json_arg(const char* text, const char* what) {
    if (!text || !*text) return json::object();
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        valent::raise(valent::ErrorKind::input,
                      std::string("bad ") + what + " JSON: " + e.what());
    }
}

} // namespace

struct valent_model {
    valent::Model model;
};

struct valent_tokenizer {
    valent::Tokenizer tokenizer;
};

extern "C" {

const char* valent_version(void) { return valent::kToolVersion; }

const char* valent_last_error(void) { return g_last_error.c_str(); }

void valent_string_free(char* s) { std::free(s); }

valent_status valent_gen_toy(const char* config_json, const char* out_path,
                             char** summary_json) {
    return guard([&] {
        require_arg(out_path, "out_path");
        json j = parse_json_arg(config_json, "config");
        valent::ToyConfig toy;
        toy.d_model = j.value("d_model", toy.d_model);
        toy.n_layers = j.value("n_layers", toy.n_layers);
        toy.n_heads = j.value("n_heads", toy.n_heads);
        toy.n_kv_heads = j.value("n_kv_heads", toy.n_kv_heads);
        toy.d_ff = j.value("d_ff", toy.d_ff);
        toy.vocab_size = j.value("vocab_size", toy.vocab_size);
        toy.max_seq_len = j.value("max_seq_len", toy.max_seq_len);
        toy.norm_kind = j.value("norm_kind", toy.norm_kind);
        toy.activation = j.value("activation", toy.activation);
        toy.pos_kind = j.value("pos_kind", toy.pos_kind);
        toy.seed = j.value("seed", toy.seed);
        std::string summary = valent::cmd_gen_toy(toy, out_path);
        if (summary_json) *summary_json = dup_string(summary);
    });
}

valent_status valent_model_open(const char* archive_path, valent_model** out) {
    return guard([&] {
        require_arg(archive_path, "archive_path");
        require_arg(out, "out");
        auto* handle = new valent_model{valent::load_model(archive_path)};
        *out = handle;
    });
}

void valent_model_close(valent_model* m) { delete m; }

size_t valent_model_dim(const valent_model* m) { return m ? m->model.config.d_model : 0; }

size_t valent_model_layers(const valent_model* m) { return m ? m->model.config.n_layers : 0; }

valent_status valent_tokenizer_open(const char* path, valent_tokenizer** out) {
    return guard([&] {
        require_arg(path, "path");
        require_arg(out, "out");
        auto* handle = new valent_tokenizer{valent::Tokenizer::load(path)};
        *out = handle;
    });
}

void valent_tokenizer_close(valent_tokenizer* t) { delete t; }

size_t valent_tokenizer_vocab_size(const valent_tokenizer* t) {
    return t ? t->tokenizer.vocab_size() : 0;
}

valent_status valent_embed_sentence(const valent_model* m, const valent_tokenizer* t,
                                    const char* sentence, const char* spec_json, float* out,
                                    size_t capacity, size_t* out_dim) {
    return guard([&] {
        require_arg(m, "model");
        require_arg(t, "tokenizer");
        require_arg(sentence, "sentence");
        require_arg(out_dim, "out_dim");
        valent::PoolSpec spec = parse_spec(spec_json);
        valent::Embedding e =
            valent::embed_sentence(m->model, t->tokenizer, sentence, spec);
        *out_dim = e.dim();
        if (out) {
            size_t n = std::min(capacity, e.dim());
            std::memcpy(out, e.vector.data(), n * sizeof(float));
        }
    });
}

valent_status valent_embed_file(const valent_model* m, const valent_tokenizer* t,
                                const char* sentences_path, const char* spec_json,
                                const char* cache_path, size_t threads,
                                char** summary_json) {
    return guard([&] {
        require_arg(m, "model");
        require_arg(t, "tokenizer");
        require_arg(sentences_path, "sentences_path");
        require_arg(cache_path, "cache_path");
        std::string summary = valent::cmd_embed(m->model, t->tokenizer, sentences_path,
                                                parse_spec(spec_json), cache_path, threads);
        if (summary_json) *summary_json = dup_string(summary);
    });
}

valent_status valent_eval_sts(const valent_model* m, const valent_tokenizer* t,
                              const char* sts_path, const char* spec_json, size_t threads,
                              char** summary_json) {
    return guard([&] {
        require_arg(m, "model");
        require_arg(t, "tokenizer");
        require_arg(sts_path, "sts_path");
        std::string summary = valent::cmd_eval_sts(m->model, t->tokenizer, sts_path,
                                                   parse_spec(spec_json), threads);
        if (summary_json) *summary_json = dup_string(summary);
    });
}

valent_status valent_eval_retrieval(const valent_model* m, const valent_tokenizer* t,
                                    const char* corpus_path, const char* spec_json,
                                    size_t threads, char** summary_json) {
    return guard([&] {
        require_arg(m, "model");
        require_arg(t, "tokenizer");
        require_arg(corpus_path, "corpus_path");
        std::string summary = valent::cmd_eval_retrieval(m->model, t->tokenizer, corpus_path,
                                                         parse_spec(spec_json), threads);
        if (summary_json) *summary_json = dup_string(summary);
    });
}

valent_status valent_eval_rerank(const valent_model* m, const valent_tokenizer* t,
                                 const char* corpus_path, const char* spec_json,
                                 size_t threads, char** summary_json) {
    return guard([&] {
        require_arg(m, "model");
        require_arg(t, "tokenizer");
        require_arg(corpus_path, "corpus_path");
        std::string summary = valent::cmd_eval_rerank(m->model, t->tokenizer, corpus_path,
                                                      parse_spec(spec_json), threads);
        if (summary_json) *summary_json = dup_string(summary);
    });
}

valent_status valent_sweep_layers(const valent_model* m, const valent_tokenizer* t,
                                  const char* dev_sts_path, const char* dev_retrieval_path,
                                  const char* config_json, const char* out_dir,
                                  char** summary_json) {
    return guard([&] {
        require_arg(m, "model");
        require_arg(t, "tokenizer");
        require_arg(dev_sts_path, "dev_sts_path");
        require_arg(dev_retrieval_path, "dev_retrieval_path");
        json j = parse_json_arg(config_json, "config");
        valent::SelectionPolicy policy;
        policy.delta = j.value("delta", policy.delta);
        policy.min_layers = j.value("min_layers", policy.min_layers);
        policy.max_layers = j.value("max_layers", policy.max_layers);
        policy.veto_fraction = j.value("veto_fraction", policy.veto_fraction);
        policy.max_layers = std::min(policy.max_layers, m->model.config.n_layers);
        policy.min_layers = std::min(policy.min_layers, policy.max_layers);
        std::string method = j.value("method", "va");
        std::string summary =
            valent::cmd_sweep_layers(m->model, t->tokenizer, dev_sts_path,
                                     dev_retrieval_path, method, policy,
                                     out_dir ? out_dir : "");
        if (summary_json) *summary_json = dup_string(summary);
    });
}

valent_status valent_probe_segments(const valent_model* m, const valent_tokenizer* t,
                                    const char* corpus_path, const char* config_json,
                                    const char* out_dir, char** summary_json) {
    return guard([&] {
        require_arg(m, "model");
        require_arg(t, "tokenizer");
        require_arg(corpus_path, "corpus_path");
        json j = parse_json_arg(config_json, "config");
        valent::SegmentProbeConfig cfg;
        cfg.seed = j.value("seed", cfg.seed);
        cfg.split_lo = j.value("split_lo", cfg.split_lo);
        cfg.split_hi = j.value("split_hi", cfg.split_hi);
        cfg.max_tokens = j.value("max_tokens", cfg.max_tokens);
        cfg.min_tokens = j.value("min_tokens", cfg.min_tokens);
        if (j.contains("k_list")) cfg.k_list = j["k_list"].get<std::vector<size_t>>();
        std::string method = j.value("method", "va");
        std::string summary = valent::cmd_probe_segments(m->model, t->tokenizer, corpus_path,
                                                         cfg, method, out_dir ? out_dir : "");
        if (summary_json) *summary_json = dup_string(summary);
    });
}

valent_status valent_probe_logitlens(const valent_model* m, const valent_tokenizer* t,
                                     const char* corpus_path, const char* config_json,
                                     const char* out_dir, char** summary_json) {
    return guard([&] {
        require_arg(m, "model");
        require_arg(t, "tokenizer");
        require_arg(corpus_path, "corpus_path");
        json j = parse_json_arg(config_json, "config");
        valent::LogitLensConfig cfg;
        cfg.seed = j.value("seed", cfg.seed);
        cfg.prefix_lo = j.value("prefix_lo", cfg.prefix_lo);
        cfg.prefix_hi = j.value("prefix_hi", cfg.prefix_hi);
        cfg.truncate_tokens = j.value("truncate_tokens", cfg.truncate_tokens);
        cfg.temperature = j.value("tau", cfg.temperature);
        cfg.top_n = j.value("top_n", cfg.top_n);
        if (j.contains("offsets")) cfg.offsets = j["offsets"].get<std::vector<size_t>>();
        std::string summary = valent::cmd_probe_logitlens(m->model, t->tokenizer, corpus_path,
                                                          cfg, out_dir ? out_dir : "");
        if (summary_json) *summary_json = dup_string(summary);
    });
}

} // extern "C"
