// valent command-line front end. Talks to the core exclusively through the
// C API in valent/valent.h.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "valent/valent.h"

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct StringOut {
    char* ptr = nullptr;
    ~StringOut() { valent_string_free(ptr); }
    std::string str() const { return ptr ? ptr : ""; }
};

[[noreturn]] void die(valent_status status) {
    ordered_json err;
    err["error"] = valent_last_error();
    err["status"] = static_cast<int>(status);
    std::cerr << err.dump() << "\n";
    std::exit(1);
}

void check(valent_status status) {
    if (status != VALENT_OK) die(status);
}

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream f(path);
    if (!f.good()) {
        ordered_json err;
        err["error"] = "cannot open config file: " + path;
        err["status"] = static_cast<int>(VALENT_ERR_IO);
        std::cerr << err.dump() << "\n";
        std::exit(1);
    }
    try {
        json j;
        f >> j;
        return j;
    } catch (const std::exception& e) {
        ordered_json err;
        err["error"] = std::string("bad config file: ") + e.what();
        err["status"] = static_cast<int>(VALENT_ERR_FORMAT);
        std::cerr << err.dump() << "\n";
        std::exit(1);
    }
}

// Common flags shared by every model-driven subcommand. Flags override the
// config file; the config file overrides defaults.
struct CommonOpts {
    std::string model_path;
    std::string tokenizer_path;
    std::string method = "va";
    std::string layers = "full";
    std::string tmpl = "none";
    std::string out_dir;
    std::string config_path;
    size_t threads = 1;

    CLI::Option* model_opt = nullptr;
    CLI::Option* tok_opt = nullptr;
    CLI::Option* method_opt = nullptr;
    CLI::Option* layers_opt = nullptr;
    CLI::Option* tmpl_opt = nullptr;
    CLI::Option* out_opt = nullptr;
    CLI::Option* threads_opt = nullptr;

    void attach(CLI::App* cmd, bool with_spec = true) {
        model_opt = cmd->add_option("--model", model_path, "model archive path");
        tok_opt = cmd->add_option("--tokenizer", tokenizer_path, "tokenizer JSON path");
        if (with_spec) {
            method_opt = cmd->add_option(
                "--method", method,
                "pooling method: hs_mean|last_token|weighted_mean|echo|va|wva|aligned_wva");
            layers_opt = cmd->add_option(
                "--layers", layers, "layer set: full|half|explicit:1,2,3|preset:<name>");
            tmpl_opt = cmd->add_option("--template", tmpl,
                                       "prompt template: none|prompt_eol|future_eol|echo");
        }
        out_opt = cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--config", config_path, "JSON config file (flags override)");
        threads_opt = cmd->add_option("--threads", threads, "worker threads (default 1)");
    }

    // merge: flag > config file > env (out dir only) > default
    void finalize() {
        json cfg = load_config_file(config_path);
        auto merge_str = [&](CLI::Option* opt, std::string& value, const char* key) {
            if ((!opt || opt->count() == 0) && cfg.contains(key))
                value = cfg[key].get<std::string>();
        };
        merge_str(model_opt, model_path, "model");
        merge_str(tok_opt, tokenizer_path, "tokenizer");
        merge_str(method_opt, method, "method");
        merge_str(layers_opt, layers, "layers");
        merge_str(tmpl_opt, tmpl, "template");
        merge_str(out_opt, out_dir, "out");
        if ((!threads_opt || threads_opt->count() == 0) && cfg.contains("threads"))
            threads = cfg["threads"].get<size_t>();
        if (out_dir.empty()) {
            const char* env = std::getenv("VALENT_OUT_DIR");
            if (env) out_dir = env;
        }
        if (out_dir.empty()) out_dir = ".";
        merged_config = cfg;
    }

    std::string spec_json() const {
        ordered_json s;
        s["method"] = method;
        s["layers"] = layers;
        s["template"] = tmpl;
        return s.dump();
    }

    json merged_config;
};

struct Handles {
    valent_model* model = nullptr;
    valent_tokenizer* tokenizer = nullptr;
    ~Handles() {
        valent_model_close(model);
        valent_tokenizer_close(tokenizer);
    }
    void open(const CommonOpts& opts) {
        if (opts.model_path.empty() || opts.tokenizer_path.empty()) {
            ordered_json err;
            err["error"] = "--model and --tokenizer are required";
            err["status"] = static_cast<int>(VALENT_ERR_INVALID_ARG);
            std::cerr << err.dump() << "\n";
            std::exit(1);
        }
        check(valent_model_open(opts.model_path.c_str(), &model));
        check(valent_tokenizer_open(opts.tokenizer_path.c_str(), &tokenizer));
    }
};

// Primary outputs stay timestamp-free; wall-clock time goes to a sidecar.
void emit(const std::string& out_dir, const std::string& name, const std::string& summary) {
    std::string path = out_dir + "/" + name + "_summary.json";
    {
        std::ofstream f(path, std::ios::trunc);
        f << summary << "\n";
    }
    auto now = std::chrono::system_clock::now().time_since_epoch();
    ordered_json side;
    side["written_unix_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
    std::ofstream sf(path + ".meta", std::ios::trunc);
    sf << side.dump() << "\n";
    std::cout << summary << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"valent: attention-signal sentence embeddings and probes"};
    app.require_subcommand(1);

    // gen-toy
    auto* gen = app.add_subcommand("gen-toy", "generate a seeded toy model archive");
    size_t g_d = 32, g_layers = 4, g_heads = 4, g_kv = 0, g_dff = 0, g_vocab = 2048,
           g_maxseq = 1024;
    uint64_t g_seed = 0;
    std::string g_out;
    gen->add_option("--d", g_d, "model dimension");
    gen->add_option("--layers", g_layers, "transformer layers");
    gen->add_option("--heads", g_heads, "attention heads");
    gen->add_option("--kv-heads", g_kv, "kv heads (default: same as heads)");
    gen->add_option("--d-ff", g_dff, "FFN dimension (default 4*d)");
    gen->add_option("--vocab", g_vocab, "vocabulary size");
    gen->add_option("--max-seq", g_maxseq, "maximum sequence length");
    gen->add_option("--seed", g_seed, "PRNG seed");
    gen->add_option("--out", g_out, "archive output path")->required();

    // embed
    auto* emb = app.add_subcommand("embed", "embed a file of sentences into a cache");
    CommonOpts emb_opts;
    std::string emb_sentences;
    emb_opts.attach(emb);
    emb->add_option("--sentences", emb_sentences, "sentences file, one per line")->required();

    // eval-sts / eval-retrieval / eval-rerank
    auto* sts = app.add_subcommand("eval-sts", "Spearman on an STS TSV corpus");
    CommonOpts sts_opts;
    std::string sts_corpus;
    sts_opts.attach(sts);
    sts->add_option("--corpus", sts_corpus, "STS TSV path")->required();

    auto* retr = app.add_subcommand("eval-retrieval", "NDCG@10 on a retrieval corpus");
    CommonOpts retr_opts;
    std::string retr_corpus;
    retr_opts.attach(retr);
    retr->add_option("--corpus", retr_corpus, "retrieval JSONL path")->required();

    auto* rer = app.add_subcommand("eval-rerank", "MAP on a reranking corpus");
    CommonOpts rer_opts;
    std::string rer_corpus;
    rer_opts.attach(rer);
    rer->add_option("--corpus", rer_corpus, "rerank JSONL path")->required();

    // sweep-layers
    auto* sweep = app.add_subcommand("sweep-layers", "single-layer sweep + selection");
    CommonOpts sweep_opts;
    std::string sweep_sts, sweep_retr, sweep_method = "va";
    double sw_delta = 2.0, sw_veto = 0.1;
    size_t sw_min = 3, sw_max = 8;
    sweep_opts.attach(sweep, false);
    sweep->add_option("--dev-sts", sweep_sts, "dev STS TSV path")->required();
    sweep->add_option("--dev-retrieval", sweep_retr, "dev retrieval JSONL path")->required();
    sweep->add_option("--method", sweep_method, "va|hs");
    sweep->add_option("--delta", sw_delta, "anchor tolerance, metric points");
    sweep->add_option("--veto-fraction", sw_veto, "bottom fraction vetoed per task");
    sweep->add_option("--min-layers", sw_min, "minimum selected layers");
    sweep->add_option("--max-layers", sw_max, "maximum selected layers");

    // probe-segments
    auto* pseg = app.add_subcommand("probe-segments", "segment-matching retrieval probe");
    CommonOpts pseg_opts;
    std::string pseg_corpus, pseg_method = "va", pseg_k = "1,5,10";
    uint64_t pseg_seed = 0;
    size_t pseg_max_tokens = 512, pseg_min_tokens = 8;
    pseg_opts.attach(pseg, false);
    pseg->add_option("--corpus", pseg_corpus, "plain-text probe corpus")->required();
    pseg->add_option("--method", pseg_method, "va|hs");
    pseg->add_option("--k", pseg_k, "comma-separated recall cutoffs");
    pseg->add_option("--seed", pseg_seed, "split sampling seed");
    pseg->add_option("--max-tokens", pseg_max_tokens, "truncate documents to this length");
    pseg->add_option("--min-tokens", pseg_min_tokens, "skip shorter documents");

    // probe-logitlens
    auto* plog = app.add_subcommand("probe-logitlens", "subsequent-token logit-lens probe");
    CommonOpts plog_opts;
    std::string plog_corpus, plog_offsets = "1,2,3";
    uint64_t plog_seed = 0;
    size_t plog_lo = 50, plog_hi = 150, plog_trunc = 2000, plog_topn = 100;
    double plog_tau = 1.0;
    plog_opts.attach(plog, false);
    plog->add_option("--corpus", plog_corpus, "plain-text probe corpus")->required();
    plog->add_option("--offsets", plog_offsets, "comma-separated continuation offsets");
    plog->add_option("--seed", plog_seed, "prefix sampling seed");
    plog->add_option("--prefix-lo", plog_lo, "minimum prefix length");
    plog->add_option("--prefix-hi", plog_hi, "maximum prefix length");
    plog->add_option("--truncate", plog_trunc, "truncate documents to this length");
    plog->add_option("--tau", plog_tau, "softmax temperature");
    plog->add_option("--top-n", plog_topn, "MRR cutoff");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    auto parse_list = [](const std::string& csv) {
        std::vector<size_t> out;
        size_t pos = 0;
        while (pos < csv.size()) {
            size_t comma = csv.find(',', pos);
            std::string tok =
                csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            out.push_back(std::stoul(tok));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        return out;
    };

    if (gen->parsed()) {
        ordered_json cfg;
        cfg["d_model"] = g_d;
        cfg["n_layers"] = g_layers;
        cfg["n_heads"] = g_heads;
        cfg["n_kv_heads"] = g_kv;
        cfg["d_ff"] = g_dff;
        cfg["vocab_size"] = g_vocab;
        cfg["max_seq_len"] = g_maxseq;
        cfg["seed"] = g_seed;
        StringOut summary;
        check(valent_gen_toy(cfg.dump().c_str(), g_out.c_str(), &summary.ptr));
        std::cout << summary.str() << "\n";
        return 0;
    }

    if (emb->parsed()) {
        emb_opts.finalize();
        Handles h;
        h.open(emb_opts);
        std::string cache = emb_opts.out_dir + "/embeddings.jsonl";
        StringOut summary;
        check(valent_embed_file(h.model, h.tokenizer, emb_sentences.c_str(),
                                emb_opts.spec_json().c_str(), cache.c_str(),
                                emb_opts.threads, &summary.ptr));
        emit(emb_opts.out_dir, "embed", summary.str());
        return 0;
    }

    if (sts->parsed()) {
        sts_opts.finalize();
        Handles h;
        h.open(sts_opts);
        StringOut summary;
        check(valent_eval_sts(h.model, h.tokenizer, sts_corpus.c_str(),
                              sts_opts.spec_json().c_str(), sts_opts.threads, &summary.ptr));
        emit(sts_opts.out_dir, "eval_sts", summary.str());
        return 0;
    }

    if (retr->parsed()) {
        retr_opts.finalize();
        Handles h;
        h.open(retr_opts);
        StringOut summary;
        check(valent_eval_retrieval(h.model, h.tokenizer, retr_corpus.c_str(),
                                    retr_opts.spec_json().c_str(), retr_opts.threads,
                                    &summary.ptr));
        emit(retr_opts.out_dir, "eval_retrieval", summary.str());
        return 0;
    }

    if (rer->parsed()) {
        rer_opts.finalize();
        Handles h;
        h.open(rer_opts);
        StringOut summary;
        check(valent_eval_rerank(h.model, h.tokenizer, rer_corpus.c_str(),
                                 rer_opts.spec_json().c_str(), rer_opts.threads,
                                 &summary.ptr));
        emit(rer_opts.out_dir, "eval_rerank", summary.str());
        return 0;
    }

    if (sweep->parsed()) {
        sweep_opts.finalize();
        Handles h;
        h.open(sweep_opts);
        ordered_json cfg;
        cfg["method"] = sweep_method;
        cfg["delta"] = sw_delta;
        cfg["veto_fraction"] = sw_veto;
        cfg["min_layers"] = sw_min;
        cfg["max_layers"] = sw_max;
        StringOut summary;
        check(valent_sweep_layers(h.model, h.tokenizer, sweep_sts.c_str(), sweep_retr.c_str(),
                                  cfg.dump().c_str(), sweep_opts.out_dir.c_str(),
                                  &summary.ptr));
        emit(sweep_opts.out_dir, "sweep_layers", summary.str());
        return 0;
    }

    if (pseg->parsed()) {
        pseg_opts.finalize();
        Handles h;
        h.open(pseg_opts);
        ordered_json cfg;
        cfg["method"] = pseg_method;
        cfg["seed"] = pseg_seed;
        cfg["k_list"] = parse_list(pseg_k);
        cfg["max_tokens"] = pseg_max_tokens;
        cfg["min_tokens"] = pseg_min_tokens;
        StringOut summary;
        check(valent_probe_segments(h.model, h.tokenizer, pseg_corpus.c_str(),
                                    cfg.dump().c_str(), pseg_opts.out_dir.c_str(),
                                    &summary.ptr));
        emit(pseg_opts.out_dir, "probe_segments", summary.str());
        return 0;
    }

    if (plog->parsed()) {
        plog_opts.finalize();
        Handles h;
        h.open(plog_opts);
        ordered_json cfg;
        cfg["seed"] = plog_seed;
        cfg["offsets"] = parse_list(plog_offsets);
        cfg["prefix_lo"] = plog_lo;
        cfg["prefix_hi"] = plog_hi;
        cfg["truncate_tokens"] = plog_trunc;
        cfg["tau"] = plog_tau;
        cfg["top_n"] = plog_topn;
        StringOut summary;
        check(valent_probe_logitlens(h.model, h.tokenizer, plog_corpus.c_str(),
                                     cfg.dump().c_str(), plog_opts.out_dir.c_str(),
                                     &summary.ptr));
        emit(plog_opts.out_dir, "probe_logitlens", summary.str());
        return 0;
    }

    std::cerr << app.help() << "\n";
    return 2;
}
