#include "valent/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "valent/metrics.hpp"
#include "valent/rng.hpp"

using nlohmann::ordered_json;

namespace valent {

namespace {

std::string fmt_float(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

ordered_json meta_json(const Model& model) {
    ordered_json m;
    m["tool"] = "valent";
    m["version"] = kToolVersion;
    m["rng_algorithm"] = kRngAlgorithmId;
    m["model_id"] = model.model_id;
    return m;
}

ordered_json spec_json(const PoolSpec& spec) {
    ordered_json s;
    s["method"] = pool_method_name(spec.method);
    s["layers"] = spec.layer_set.describe();
    s["template"] = spec.tmpl.name;
    s["fingerprint"] = spec.fingerprint();
    return s;
}

template <class F>
void parallel_for(size_t n, size_t threads, F f) {
    if (threads <= 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i) f(i);
        return;
    }
    threads = std::min(threads, n);
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::mutex err_mu;
    for (size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (size_t i = t; i < n; i += threads) f(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!err) err = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

std::vector<Vector> embed_all(const Model& model, const Tokenizer& tok,
                              const std::vector<std::string>& sentences, const PoolSpec& spec,
                              size_t threads) {
    std::vector<Vector> out(sentences.size());
    parallel_for(sentences.size(), threads, [&](size_t i) {
        out[i] = embed(model.weights, model.config, tok, sentences[i], spec, model.model_id)
                     .vector;
    });
    return out;
}

// One forward per sentence, pooled at every single layer.
std::vector<std::vector<Vector>> embed_per_layer(const Model& model, const Tokenizer& tok,
                                                 const std::vector<std::string>& sentences,
                                                 const std::string& method) {
    bool va = method == "va";
    require(va || method == "hs", ErrorKind::spec,
            "sweep method must be 'va' or 'hs', got: " + method);
    TraceOptions opts;
    if (va)
        opts.record_values = true;
    else
        opts.record_hidden = true;
    size_t L = model.config.n_layers;

    std::vector<std::vector<Vector>> out(sentences.size());
    for (size_t i = 0; i < sentences.size(); ++i) {
        std::string s = normalize_whitespace(sentences[i]);
        require(!s.empty(), ErrorKind::input, "empty sentence in sweep corpus");
        auto tokens = tok.tokenize(s);
        ForwardTrace trace = forward(model.weights, model.config, tokens, opts);
        out[i].resize(L);
        for (size_t l = 1; l <= L; ++l) {
            LayerSet single = LayerSet::explicit_({l});
            out[i][l - 1] = va ? pool_va(trace, single).vector
                               : pool_hidden(trace, single, HiddenWeighting::mean).vector;
        }
    }
    return out;
}

struct RetrievalEval {
    double mean_ndcg = 0.0;
    size_t queries_scored = 0;
    size_t queries_skipped = 0;
};

RetrievalEval eval_retrieval_embeddings(const RetrievalSet& set,
                                        const std::vector<Vector>& query_emb,
                                        const std::vector<Vector>& doc_emb,
                                        const std::vector<std::string>& query_ids,
                                        const std::vector<std::string>& doc_ids) {
    RetrievalEval res;
    double sum = 0.0;
    for (size_t qi = 0; qi < query_ids.size(); ++qi) {
        bool has_relevant = false;
        Vector scores(doc_ids.size());
        for (size_t di = 0; di < doc_ids.size(); ++di)
            scores[di] = cosine(query_emb[qi], doc_emb[di]);
        auto ranking = stable_rank_desc(scores);
        std::vector<double> rels;
        for (size_t di : ranking) {
            auto it = set.qrels.find({query_ids[qi], doc_ids[di]});
            double rel = it == set.qrels.end() ? 0.0 : it->second;
            if (rel > 0.0) has_relevant = true;
            rels.push_back(rel);
        }
        if (!has_relevant) {
            ++res.queries_skipped;
            continue;
        }
        sum += ndcg_at_k(rels, 10);
        ++res.queries_scored;
    }
    require(res.queries_scored > 0, ErrorKind::eval,
            "retrieval eval: no query has a relevant document");
    res.mean_ndcg = sum / static_cast<double>(res.queries_scored);
    return res;
}

} // namespace

Model load_model(const std::string& archive_path) {
    Model m;
    auto [weights, config] = read_archive(archive_path);
    m.weights = std::move(weights);
    m.config = config;
    m.model_id = file_digest(archive_path);
    return m;
}

std::string cmd_gen_toy(const ToyConfig& toy, const std::string& out_path) {
    ModelConfig cfg;
    cfg.d_model = toy.d_model;
    cfg.n_layers = toy.n_layers;
    cfg.n_heads = toy.n_heads;
    cfg.n_kv_heads = toy.n_kv_heads == 0 ? toy.n_heads : toy.n_kv_heads;
    require(toy.n_heads > 0 && toy.d_model % toy.n_heads == 0, ErrorKind::config,
            "gen-toy: d must be divisible by heads");
    cfg.d_head = toy.d_model / toy.n_heads;
    cfg.d_ff = toy.d_ff == 0 ? 4 * toy.d_model : toy.d_ff;
    cfg.vocab_size = toy.vocab_size;
    cfg.max_seq_len = toy.max_seq_len;
    cfg.norm_kind = norm_kind_from(toy.norm_kind);
    cfg.activation = activation_from(toy.activation);
    cfg.pos_kind = pos_kind_from(toy.pos_kind);
    cfg.validate();

    ModelWeights w = init_random(cfg, toy.seed);
    write_archive(w, cfg, out_path);

    ordered_json out;
    out["command"] = "gen-toy";
    out["tool"] = "valent";
    out["version"] = kToolVersion;
    out["rng_algorithm"] = kRngAlgorithmId;
    out["seed"] = toy.seed;
    out["archive"] = out_path;
    out["archive_digest"] = file_digest(out_path);
    out["config"] = ordered_json{{"d_model", cfg.d_model},
                                 {"n_layers", cfg.n_layers},
                                 {"n_heads", cfg.n_heads},
                                 {"n_kv_heads", cfg.n_kv_heads},
                                 {"d_head", cfg.d_head},
                                 {"d_ff", cfg.d_ff},
                                 {"vocab_size", cfg.vocab_size},
                                 {"max_seq_len", cfg.max_seq_len}};
    return out.dump(2);
}

Embedding embed_sentence(const Model& model, const Tokenizer& tok,
                         const std::string& sentence, const PoolSpec& spec) {
    return embed(model.weights, model.config, tok, sentence, spec, model.model_id);
}

std::string cmd_embed(const Model& model, const Tokenizer& tok,
                      const std::string& sentences_path, const PoolSpec& spec,
                      const std::string& cache_path, size_t threads) {
    std::istringstream in(read_file(sentences_path));
    std::vector<std::string> sentences;
    std::string line;
    while (std::getline(in, line))
        if (!normalize_whitespace(line).empty()) sentences.push_back(line);
    require(!sentences.empty(), ErrorKind::input,
            "no sentences in file: " + sentences_path);

    auto vectors = embed_all(model, tok, sentences, spec, threads);
    write_file(cache_path, ""); // truncate so reruns are byte-identical
    std::string fp = spec.fingerprint();
    for (size_t i = 0; i < vectors.size(); ++i) {
        CachedEmbedding e;
        e.id = "line_" + std::to_string(i + 1);
        e.model_id = model.model_id;
        e.spec_fingerprint = fp;
        e.vector = vectors[i];
        append_embedding_cache(cache_path, e);
    }

    ordered_json out;
    out["command"] = "embed";
    out["meta"] = meta_json(model);
    out["spec"] = spec_json(spec);
    out["sentences"] = sentences.size();
    out["dim"] = vectors.empty() ? 0 : vectors[0].size();
    out["cache"] = cache_path;
    out["corpus_digest"] = file_digest(sentences_path);
    return out.dump(2);
}

std::string cmd_eval_sts(const Model& model, const Tokenizer& tok,
                         const std::string& sts_path, const PoolSpec& spec, size_t threads) {
    auto pairs = load_sts(sts_path);
    require(pairs.size() >= 2, ErrorKind::input, "STS corpus needs at least 2 pairs");

    std::vector<std::string> sentences;
    for (const auto& p : pairs) {
        sentences.push_back(p.sentence_a);
        sentences.push_back(p.sentence_b);
    }
    auto emb = embed_all(model, tok, sentences, spec, threads);

    std::vector<double> pred, gold;
    for (size_t i = 0; i < pairs.size(); ++i) {
        pred.push_back(cosine(emb[2 * i], emb[2 * i + 1]));
        gold.push_back(pairs[i].gold);
    }
    double rho = spearman(pred, gold);

    ordered_json out;
    out["command"] = "eval-sts";
    out["meta"] = meta_json(model);
    out["spec"] = spec_json(spec);
    out["corpus"] = sts_path;
    out["corpus_digest"] = file_digest(sts_path);
    out["pairs"] = pairs.size();
    out["spearman"] = fmt_float(rho);
    return out.dump(2);
}

std::string cmd_eval_retrieval(const Model& model, const Tokenizer& tok,
                               const std::string& corpus_path, const PoolSpec& spec,
                               size_t threads) {
    RetrievalSet set = load_retrieval(corpus_path);
    require(!set.queries.empty() && !set.docs.empty(), ErrorKind::input,
            "retrieval corpus has no queries or no docs");
    std::vector<std::string> query_ids, doc_ids, query_texts, doc_texts;
    for (const auto& [id, text] : set.queries) {
        query_ids.push_back(id);
        query_texts.push_back(text);
    }
    for (const auto& [id, text] : set.docs) {
        doc_ids.push_back(id);
        doc_texts.push_back(text);
    }
    auto query_emb = embed_all(model, tok, query_texts, spec, threads);
    auto doc_emb = embed_all(model, tok, doc_texts, spec, threads);
    auto res = eval_retrieval_embeddings(set, query_emb, doc_emb, query_ids, doc_ids);

    ordered_json out;
    out["command"] = "eval-retrieval";
    out["meta"] = meta_json(model);
    out["spec"] = spec_json(spec);
    out["corpus"] = corpus_path;
    out["corpus_digest"] = file_digest(corpus_path);
    out["queries_scored"] = res.queries_scored;
    out["queries_skipped"] = res.queries_skipped;
    out["ndcg_at_10"] = fmt_float(res.mean_ndcg);
    return out.dump(2);
}

std::string cmd_eval_rerank(const Model& model, const Tokenizer& tok,
                            const std::string& corpus_path, const PoolSpec& spec,
                            size_t threads) {
    RetrievalSet set = load_retrieval(corpus_path);
    require(!set.queries.empty() && !set.docs.empty(), ErrorKind::input,
            "rerank corpus has no queries or no docs");
    std::vector<std::string> query_ids, doc_ids, query_texts, doc_texts;
    for (const auto& [id, text] : set.queries) {
        query_ids.push_back(id);
        query_texts.push_back(text);
    }
    for (const auto& [id, text] : set.docs) {
        doc_ids.push_back(id);
        doc_texts.push_back(text);
    }
    auto query_emb = embed_all(model, tok, query_texts, spec, threads);
    auto doc_emb = embed_all(model, tok, doc_texts, spec, threads);

    std::vector<std::vector<int>> per_query;
    for (size_t qi = 0; qi < query_ids.size(); ++qi) {
        Vector scores(doc_ids.size());
        for (size_t di = 0; di < doc_ids.size(); ++di)
            scores[di] = cosine(query_emb[qi], doc_emb[di]);
        auto ranking = stable_rank_desc(scores);
        std::vector<int> rels;
        for (size_t di : ranking) {
            auto it = set.qrels.find({query_ids[qi], doc_ids[di]});
            rels.push_back(it != set.qrels.end() && it->second > 0.0 ? 1 : 0);
        }
        per_query.push_back(std::move(rels));
    }
    MapResult res = mean_average_precision(per_query);

    ordered_json out;
    out["command"] = "eval-rerank";
    out["meta"] = meta_json(model);
    out["spec"] = spec_json(spec);
    out["corpus"] = corpus_path;
    out["corpus_digest"] = file_digest(corpus_path);
    out["queries_scored"] = res.queries_scored;
    out["queries_skipped"] = res.queries_skipped;
    out["map"] = fmt_float(res.map);
    return out.dump(2);
}

std::string cmd_sweep_layers(const Model& model, const Tokenizer& tok,
                             const std::string& dev_sts_path,
                             const std::string& dev_retrieval_path,
                             const std::string& method, const SelectionPolicy& policy,
                             const std::string& out_dir) {
    auto pairs = load_sts(dev_sts_path);
    require(pairs.size() >= 2, ErrorKind::input, "dev STS corpus needs at least 2 pairs");
    RetrievalSet set = load_retrieval(dev_retrieval_path);
    require(!set.queries.empty() && !set.docs.empty(), ErrorKind::input,
            "dev retrieval corpus has no queries or no docs");

    std::vector<std::string> sts_sentences;
    for (const auto& p : pairs) {
        sts_sentences.push_back(p.sentence_a);
        sts_sentences.push_back(p.sentence_b);
    }
    std::vector<std::string> query_ids, doc_ids, query_texts, doc_texts;
    for (const auto& [id, text] : set.queries) {
        query_ids.push_back(id);
        query_texts.push_back(text);
    }
    for (const auto& [id, text] : set.docs) {
        doc_ids.push_back(id);
        doc_texts.push_back(text);
    }

    auto sts_emb = embed_per_layer(model, tok, sts_sentences, method);
    auto q_emb = embed_per_layer(model, tok, query_texts, method);
    auto d_emb = embed_per_layer(model, tok, doc_texts, method);

    auto layer_of = [](const LayerSet& s) { return s.layers.at(0); };
    std::vector<DevTask> tasks;
    tasks.push_back({"retrieval", [&](const LayerSet& s) {
                         size_t l = layer_of(s);
                         std::vector<Vector> qe, de;
                         for (const auto& e : q_emb) qe.push_back(e[l - 1]);
                         for (const auto& e : d_emb) de.push_back(e[l - 1]);
                         return 100.0 * eval_retrieval_embeddings(set, qe, de, query_ids,
                                                                  doc_ids)
                                            .mean_ndcg;
                     }});
    tasks.push_back({"sts", [&](const LayerSet& s) {
                         size_t l = layer_of(s);
                         std::vector<double> pred, gold;
                         for (size_t i = 0; i < pairs.size(); ++i) {
                             pred.push_back(cosine(sts_emb[2 * i][l - 1],
                                                   sts_emb[2 * i + 1][l - 1]));
                             gold.push_back(pairs[i].gold);
                         }
                         return 100.0 * spearman(pred, gold);
                     }});

    LayerScoreMatrix m = sweep_layers(model.config.n_layers, tasks);
    LayerSet selected = select_layers(m, policy);

    std::string csv = "layer,task,score\n";
    for (size_t l = 1; l <= m.n_layers(); ++l)
        for (size_t t = 0; t < m.n_tasks(); ++t)
            csv += std::to_string(l) + "," + m.task_names[t] + "," +
                   fmt_float(m.scores[l - 1][t]) + "\n";

    ordered_json sel;
    sel["layers"] = selected.resolve(model.config.n_layers);
    sel["policy"] = ordered_json{{"anchor_task", m.task_names[policy.anchor_task]},
                                 {"delta", policy.delta},
                                 {"min_layers", policy.min_layers},
                                 {"max_layers", policy.max_layers},
                                 {"veto_fraction", policy.veto_fraction}};

    if (!out_dir.empty()) {
        write_file(out_dir + "/layer_scores.csv", csv);
        write_file(out_dir + "/layer_selection.json", sel.dump(2) + "\n");
    }

    ordered_json out;
    out["command"] = "sweep-layers";
    out["meta"] = meta_json(model);
    out["method"] = method;
    out["dev_sts_digest"] = file_digest(dev_sts_path);
    out["dev_retrieval_digest"] = file_digest(dev_retrieval_path);
    out["selection"] = sel;
    out["scores_csv"] = out_dir.empty() ? "" : out_dir + "/layer_scores.csv";
    return out.dump(2);
}

std::string cmd_probe_segments(const Model& model, const Tokenizer& tok,
                               const std::string& corpus_path, const SegmentProbeConfig& cfg,
                               const std::string& method, const std::string& out_dir) {
    auto docs = load_probe_corpus(corpus_path);
    require(docs.size() >= 2, ErrorKind::input,
            "probe corpus has fewer than 2 documents: " + corpus_path);
    std::vector<std::vector<int>> doc_tokens;
    for (const auto& d : docs) doc_tokens.push_back(tok.tokenize(d));

    SegmentMethod sm;
    if (method == "va")
        sm = SegmentMethod::va;
    else if (method == "hs")
        sm = SegmentMethod::hs;
    else
        raise(ErrorKind::spec, "segment probe method must be 'va' or 'hs', got: " + method);

    auto embedder = make_model_segment_embedder(model.weights, model.config, sm);
    SegmentProbeResult res =
        segment_match_probe(doc_tokens, model.config.n_layers, cfg, embedder);

    std::string csv = "layer,k,recall\n";
    for (size_t l = 1; l <= res.recall.size(); ++l)
        for (size_t ki = 0; ki < res.k_list.size(); ++ki)
            csv += std::to_string(l) + "," + std::to_string(res.k_list[ki]) + "," +
                   fmt_float(res.recall[l - 1][ki]) + "\n";
    if (!out_dir.empty()) write_file(out_dir + "/segment_recall.csv", csv);

    ordered_json out;
    out["command"] = "probe-segments";
    out["meta"] = meta_json(model);
    out["method"] = method;
    out["seed"] = cfg.seed;
    out["corpus_digest"] = file_digest(corpus_path);
    out["docs_used"] = res.docs_used;
    out["docs_skipped"] = res.docs_skipped;
    out["k_list"] = res.k_list;
    out["csv"] = out_dir.empty() ? "" : out_dir + "/segment_recall.csv";
    return out.dump(2);
}

std::string cmd_probe_logitlens(const Model& model, const Tokenizer& tok,
                                const std::string& corpus_path, const LogitLensConfig& cfg,
                                const std::string& out_dir) {
    auto docs = load_probe_corpus(corpus_path);
    require(!docs.empty(), ErrorKind::input, "probe corpus is empty: " + corpus_path);
    std::vector<std::vector<int>> doc_tokens;
    for (const auto& d : docs) doc_tokens.push_back(tok.tokenize(d));

    LogitLensResult res = logit_lens_probe(model.weights, model.config, doc_tokens, cfg);

    std::string csv = "layer,offset,mrr\n";
    for (size_t l = 1; l <= res.mrr.size(); ++l)
        for (size_t ki = 0; ki < res.offsets.size(); ++ki)
            csv += std::to_string(l) + "," + std::to_string(res.offsets[ki]) + "," +
                   fmt_float(res.mrr[l - 1][ki]) + "\n";
    if (!out_dir.empty()) write_file(out_dir + "/logitlens_mrr.csv", csv);

    ordered_json out;
    out["command"] = "probe-logitlens";
    out["meta"] = meta_json(model);
    out["seed"] = cfg.seed;
    out["temperature"] = cfg.temperature;
    out["corpus_digest"] = file_digest(corpus_path);
    out["instances"] = res.instances;
    out["docs_skipped"] = res.docs_skipped;
    ordered_json finals = ordered_json::object();
    for (size_t ki = 0; ki < res.offsets.size(); ++ki)
        finals["k" + std::to_string(res.offsets[ki])] = fmt_float(res.final_mrr[ki]);
    out["final_mrr_at_100"] = finals;
    out["csv"] = out_dir.empty() ? "" : out_dir + "/logitlens_mrr.csv";
    return out.dump(2);
}

LayerSet parse_layer_spec(const std::string& s) {
    if (s == "full") return LayerSet::full();
    if (s == "half") return LayerSet::half();
    if (s.rfind("preset:", 0) == 0) return preset_layers(s.substr(7));
    if (s.rfind("explicit:", 0) == 0) {
        std::vector<size_t> layers;
        std::string rest = s.substr(9);
        size_t pos = 0;
        while (pos < rest.size()) {
            size_t comma = rest.find(',', pos);
            std::string tok = rest.substr(pos, comma == std::string::npos ? std::string::npos
                                                                          : comma - pos);
            try {
                layers.push_back(std::stoul(tok));
            } catch (const std::exception&) {
                raise(ErrorKind::spec, "bad layer list element: " + tok);
            }
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        return LayerSet::explicit_(layers);
    }
    raise(ErrorKind::spec, "bad layer spec: " + s +
                               " (expected full|half|explicit:1,2,3|preset:<name>)");
}

} // namespace valent
