#include "valent/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "valent/rng.hpp"

using nlohmann::json;
using nlohmann::ordered_json;

namespace valent {

namespace {

constexpr size_t kTensorAlign = 64;
constexpr int kFormatVersion = 1;

struct TensorRef {
    std::string name;
    std::vector<size_t> shape;
    const float* data;
    size_t count;
};

std::vector<TensorRef> enumerate_tensors(const ModelWeights& w, const ModelConfig& cfg) {
    std::vector<TensorRef> out;
    auto add_m = [&](const std::string& name, const Matrix& m) {
        out.push_back({name, {m.rows, m.cols}, m.data.data(), m.data.size()});
    };
    auto add_v = [&](const std::string& name, const Vector& v) {
        out.push_back({name, {v.size()}, v.data(), v.size()});
    };
    add_m("embed.tokens", w.token_embedding);
    if (cfg.pos_kind == PosKind::learned) add_m("embed.pos", w.learned_pos);
    for (size_t l = 0; l < w.layers.size(); ++l) {
        std::string p = "layers." + std::to_string(l + 1) + ".";
        add_m(p + "attn.wq", w.layers[l].wq);
        add_m(p + "attn.wk", w.layers[l].wk);
        add_m(p + "attn.wv", w.layers[l].wv);
        add_m(p + "attn.wo", w.layers[l].wo);
        add_v(p + "attn.norm", w.layers[l].attn_norm);
        add_m(p + "ffn.w1", w.layers[l].w1);
        add_m(p + "ffn.w2", w.layers[l].w2);
        add_v(p + "ffn.norm", w.layers[l].ffn_norm);
    }
    add_v("final.norm", w.final_norm);
    add_m("unembed", w.unembedding);
    return out;
}

json config_to_json(const ModelConfig& c) {
    return json{{"d_model", c.d_model},       {"n_layers", c.n_layers},
                {"n_heads", c.n_heads},       {"n_kv_heads", c.n_kv_heads},
                {"d_head", c.d_head},         {"d_ff", c.d_ff},
                {"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len},
                {"norm_kind", norm_kind_name(c.norm_kind)},
                {"activation", activation_name(c.activation)},
                {"pos_kind", pos_kind_name(c.pos_kind)},
                {"rope_theta", c.rope_theta}, {"eps", c.eps}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.d_model = j.at("d_model");
    c.n_layers = j.at("n_layers");
    c.n_heads = j.at("n_heads");
    c.n_kv_heads = j.at("n_kv_heads");
    c.d_head = j.at("d_head");
    c.d_ff = j.at("d_ff");
    c.vocab_size = j.at("vocab_size");
    c.max_seq_len = j.at("max_seq_len");
    c.norm_kind = norm_kind_from(j.at("norm_kind"));
    c.activation = activation_from(j.at("activation"));
    c.pos_kind = pos_kind_from(j.at("pos_kind"));
    c.rope_theta = j.at("rope_theta");
    c.eps = j.at("eps");
    return c;
}

} // namespace

void write_archive(const ModelWeights& weights, const ModelConfig& cfg,
                   const std::string& path) {
    cfg.validate();
    weights.validate(cfg);
    auto tensors = enumerate_tensors(weights, cfg);

    // lay out the blob first so the manifest can carry absolute offsets;
    // two passes because the manifest length shifts the blob start
    ordered_json manifest;
    manifest["format_version"] = kFormatVersion;
    manifest["rng_algorithm"] = kRngAlgorithmId;
    manifest["layer_indexing"] = "embedding output is layer 0; transformer layers are 1..n_layers";
    manifest["model_config"] = config_to_json(cfg);

    std::string manifest_str;
    std::vector<size_t> offsets(tensors.size());
    for (int pass = 0; pass < 2; ++pass) {
        size_t pos = 8 + manifest_str.size();
        ordered_json tj = ordered_json::object();
        for (size_t i = 0; i < tensors.size(); ++i) {
            pos = (pos + kTensorAlign - 1) / kTensorAlign * kTensorAlign;
            offsets[i] = pos;
            size_t byte_len = tensors[i].count * 4;
            tj[tensors[i].name] = {{"dtype", "f32"},
                                   {"shape", tensors[i].shape},
                                   {"offset", pos},
                                   {"byte_len", byte_len}};
            pos += byte_len;
        }
        manifest["tensors"] = tj;
        std::string next = manifest.dump();
        if (next == manifest_str) break;
        manifest_str = next;
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require(f.good(), ErrorKind::io, "cannot open for writing: " + path);
    uint64_t hlen = manifest_str.size();
    char hbuf[8];
    for (int i = 0; i < 8; ++i) hbuf[i] = static_cast<char>((hlen >> (8 * i)) & 0xff);
    f.write(hbuf, 8);
    f.write(manifest_str.data(), static_cast<std::streamsize>(manifest_str.size()));
    size_t pos = 8 + manifest_str.size();
    for (size_t i = 0; i < tensors.size(); ++i) {
        while (pos < offsets[i]) {
            f.put('\0');
            ++pos;
        }
        f.write(reinterpret_cast<const char*>(tensors[i].data),
                static_cast<std::streamsize>(tensors[i].count * 4));
        pos += tensors[i].count * 4;
    }
    require(f.good(), ErrorKind::io, "write failed: " + path);
}

std::pair<ModelWeights, ModelConfig> read_archive(const std::string& path) {
    std::string bytes = read_file(path);
    require(bytes.size() >= 8, ErrorKind::format, "truncated archive header: " + path);
    uint64_t hlen = 0;
    for (int i = 0; i < 8; ++i)
        hlen |= static_cast<uint64_t>(static_cast<uint8_t>(bytes[i])) << (8 * i);
    require(8 + hlen <= bytes.size(), ErrorKind::format, "truncated manifest: " + path);

    json manifest;
    try {
        manifest = json::parse(bytes.substr(8, hlen));
    } catch (const json::exception& e) {
        raise(ErrorKind::format, std::string("bad archive manifest: ") + e.what());
    }
    require(manifest.value("format_version", -1) == kFormatVersion, ErrorKind::format,
            "unsupported archive format_version");
    ModelConfig cfg = config_from_json(manifest.at("model_config"));
    cfg.validate();

    const json& tj = manifest.at("tensors");
    std::vector<std::pair<size_t, size_t>> spans; // (offset, byte_len)
    auto load_tensor = [&](const std::string& name, std::vector<size_t> want_shape,
                           float* dst) {
        require(tj.contains(name), ErrorKind::format, "archive missing tensor: " + name);
        const json& t = tj.at(name);
        require(t.at("dtype") == "f32", ErrorKind::format, "unsupported dtype for " + name);
        std::vector<size_t> shape = t.at("shape").get<std::vector<size_t>>();
        require(shape == want_shape, ErrorKind::format, "shape mismatch for tensor " + name);
        size_t count = 1;
        for (size_t s : shape) count *= s;
        size_t offset = t.at("offset");
        size_t byte_len = t.at("byte_len");
        require(byte_len == count * 4, ErrorKind::format, "byte_len mismatch for " + name);
        require(offset >= 8 + hlen && offset + byte_len <= bytes.size(), ErrorKind::format,
                "truncated blob: tensor " + name + " extends past end of file");
        spans.emplace_back(offset, byte_len);
        std::memcpy(dst, bytes.data() + offset, byte_len);
        for (size_t i = 0; i < count; ++i)
            require(std::isfinite(dst[i]), ErrorKind::format,
                    "non-finite value in tensor " + name);
    };

    ModelWeights w;
    size_t qdim = cfg.n_heads * cfg.d_head;
    size_t kvdim = cfg.n_kv_heads * cfg.d_head;
    w.token_embedding = Matrix(cfg.vocab_size, cfg.d_model);
    load_tensor("embed.tokens", {cfg.vocab_size, cfg.d_model}, w.token_embedding.data.data());
    if (cfg.pos_kind == PosKind::learned) {
        w.learned_pos = Matrix(cfg.max_seq_len, cfg.d_model);
        load_tensor("embed.pos", {cfg.max_seq_len, cfg.d_model}, w.learned_pos.data.data());
    }
    w.layers.resize(cfg.n_layers);
    for (size_t l = 0; l < cfg.n_layers; ++l) {
        std::string p = "layers." + std::to_string(l + 1) + ".";
        auto& lw = w.layers[l];
        lw.wq = Matrix(cfg.d_model, qdim);
        lw.wk = Matrix(cfg.d_model, kvdim);
        lw.wv = Matrix(cfg.d_model, kvdim);
        lw.wo = Matrix(qdim, cfg.d_model);
        lw.w1 = Matrix(cfg.d_model, cfg.d_ff);
        lw.w2 = Matrix(cfg.d_ff, cfg.d_model);
        lw.attn_norm.resize(cfg.d_model);
        lw.ffn_norm.resize(cfg.d_model);
        load_tensor(p + "attn.wq", {cfg.d_model, qdim}, lw.wq.data.data());
        load_tensor(p + "attn.wk", {cfg.d_model, kvdim}, lw.wk.data.data());
        load_tensor(p + "attn.wv", {cfg.d_model, kvdim}, lw.wv.data.data());
        load_tensor(p + "attn.wo", {qdim, cfg.d_model}, lw.wo.data.data());
        load_tensor(p + "attn.norm", {cfg.d_model}, lw.attn_norm.data());
        load_tensor(p + "ffn.w1", {cfg.d_model, cfg.d_ff}, lw.w1.data.data());
        load_tensor(p + "ffn.w2", {cfg.d_ff, cfg.d_model}, lw.w2.data.data());
        load_tensor(p + "ffn.norm", {cfg.d_model}, lw.ffn_norm.data());
    }
    w.final_norm.resize(cfg.d_model);
    load_tensor("final.norm", {cfg.d_model}, w.final_norm.data());
    w.unembedding = Matrix(cfg.vocab_size, cfg.d_model);
    load_tensor("unembed", {cfg.vocab_size, cfg.d_model}, w.unembedding.data.data());

    std::sort(spans.begin(), spans.end());
    for (size_t i = 1; i < spans.size(); ++i)
        require(spans[i - 1].first + spans[i - 1].second <= spans[i].first, ErrorKind::format,
                "overlapping tensor offsets in archive");

    w.validate(cfg);
    return {std::move(w), cfg};
}

// --- tokenizer --------------------------------------------------------------

Tokenizer Tokenizer::load(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        raise(ErrorKind::format, std::string("bad tokenizer file: ") + e.what());
    }
    require(j.is_object() && j.contains("vocab") && j["vocab"].is_object(), ErrorKind::format,
            "tokenizer file must contain a \"vocab\" object: " + path);
    const json& vocab = j["vocab"];
    Tokenizer t;
    t.n_words_ = vocab.size();
    t.id_to_word_.resize(t.n_words_);
    for (auto it = vocab.begin(); it != vocab.end(); ++it) {
        int id = it.value();
        require(id >= 0 && static_cast<size_t>(id) < t.n_words_, ErrorKind::format,
                "tokenizer ids must be dense in [0, word_count)");
        require(t.id_to_word_[id].empty(), ErrorKind::format,
                "duplicate tokenizer id " + std::to_string(id));
        t.vocab_[it.key()] = id;
        t.id_to_word_[id] = it.key();
    }
    return t;
}

Tokenizer Tokenizer::from_words(const std::vector<std::string>& words) {
    Tokenizer t;
    for (const auto& w : words) {
        if (t.vocab_.count(w)) continue;
        int id = static_cast<int>(t.id_to_word_.size());
        t.vocab_[w] = id;
        t.id_to_word_.push_back(w);
    }
    t.n_words_ = t.id_to_word_.size();
    return t;
}

std::vector<int> Tokenizer::tokenize(const std::string& text) const {
    std::vector<int> ids;
    std::istringstream ss(text);
    std::string word;
    while (ss >> word) {
        auto it = vocab_.find(word);
        if (it != vocab_.end()) {
            ids.push_back(it->second);
        } else {
            for (unsigned char b : word)
                ids.push_back(static_cast<int>(n_words_) + b);
        }
    }
    return ids;
}

std::string Tokenizer::detokenize(const std::vector<int>& ids) const {
    std::string out;
    std::string pending_bytes;
    auto flush = [&] {
        if (pending_bytes.empty()) return;
        if (!out.empty()) out += ' ';
        out += pending_bytes;
        pending_bytes.clear();
    };
    for (int id : ids) {
        require(id >= 0 && static_cast<size_t>(id) < vocab_size(), ErrorKind::input,
                "detokenize: id " + std::to_string(id) + " out of range");
        if (static_cast<size_t>(id) < n_words_) {
            flush();
            if (!out.empty()) out += ' ';
            out += id_to_word_[id];
        } else {
            pending_bytes += static_cast<char>(id - static_cast<int>(n_words_));
        }
    }
    flush();
    return out;
}

std::string normalize_whitespace(const std::string& text) {
    std::string out;
    bool in_space = true; // also strips leading whitespace
    for (char c : text) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            if (!in_space) out += ' ';
            in_space = true;
        } else {
            out += c;
            in_space = false;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

// --- corpora ----------------------------------------------------------------

std::vector<StsPair> load_sts(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<StsPair> pairs;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        size_t t1 = line.find('\t');
        size_t t2 = (t1 == std::string::npos) ? std::string::npos : line.find('\t', t1 + 1);
        require(t2 != std::string::npos, ErrorKind::format,
                path + ":" + std::to_string(lineno) + ": expected 3 tab-separated fields");
        StsPair p;
        p.sentence_a = line.substr(0, t1);
        p.sentence_b = line.substr(t1 + 1, t2 - t1 - 1);
        try {
            p.gold = std::stod(line.substr(t2 + 1));
        } catch (const std::exception&) {
            raise(ErrorKind::format,
                  path + ":" + std::to_string(lineno) + ": gold score is not a number");
        }
        require(std::isfinite(p.gold), ErrorKind::format,
                path + ":" + std::to_string(lineno) + ": gold score not finite");
        pairs.push_back(std::move(p));
    }
    return pairs;
}

RetrievalSet load_retrieval(const std::string& path) {
    std::istringstream in(read_file(path));
    RetrievalSet set;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            raise(ErrorKind::format,
                  path + ":" + std::to_string(lineno) + ": bad JSON record: " + e.what());
        }
        try {
            std::string type = j.at("type");
            if (type == "query") {
                set.queries[j.at("id")] = j.at("text");
            } else if (type == "doc") {
                set.docs[j.at("id")] = j.at("text");
            } else if (type == "qrel") {
                std::string qid = j.at("query_id"), did = j.at("doc_id");
                double rel = j.at("relevance");
                require(rel >= 0.0, ErrorKind::format,
                        path + ":" + std::to_string(lineno) + ": negative relevance");
                set.qrels[{qid, did}] = rel;
            } else {
                raise(ErrorKind::format,
                      path + ":" + std::to_string(lineno) + ": unknown record type " + type);
            }
        } catch (const json::exception& e) {
            raise(ErrorKind::format,
                  path + ":" + std::to_string(lineno) + ": bad record: " + e.what());
        }
    }
    for (const auto& [key, rel] : set.qrels) {
        require(set.queries.count(key.first), ErrorKind::format,
                "qrel references missing query id: " + key.first);
        require(set.docs.count(key.second), ErrorKind::format,
                "qrel references missing doc id: " + key.second);
    }
    return set;
}

std::vector<std::string> load_probe_corpus(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<std::string> docs;
    std::string line, current;
    while (std::getline(in, line)) {
        if (normalize_whitespace(line).empty()) {
            if (!current.empty()) docs.push_back(normalize_whitespace(current));
            current.clear();
        } else {
            current += line;
            current += ' ';
        }
    }
    if (!current.empty()) docs.push_back(normalize_whitespace(current));
    return docs;
}

// --- embedding cache --------------------------------------------------------

void append_embedding_cache(const std::string& path, const CachedEmbedding& e) {
    ordered_json j;
    j["id"] = e.id;
    j["model_id"] = e.model_id;
    j["spec_fingerprint"] = e.spec_fingerprint;
    j["dim"] = e.vector.size();
    j["data"] = base64_encode(reinterpret_cast<const uint8_t*>(e.vector.data()),
                              e.vector.size() * 4);
    std::ofstream f(path, std::ios::app | std::ios::binary);
    require(f.good(), ErrorKind::io, "cannot open cache for append: " + path);
    f << j.dump() << '\n';
}

std::vector<CachedEmbedding> read_embedding_cache(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<CachedEmbedding> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            raise(ErrorKind::format,
                  path + ":" + std::to_string(lineno) + ": bad cache record: " + e.what());
        }
        CachedEmbedding e;
        std::string data_field;
        size_t dim = 0;
        try {
            e.id = j.at("id");
            e.model_id = j.at("model_id");
            e.spec_fingerprint = j.at("spec_fingerprint");
            data_field = j.at("data");
            dim = j.at("dim");
        } catch (const json::exception& ex) {
            raise(ErrorKind::format,
                  path + ":" + std::to_string(lineno) + ": bad cache record: " + ex.what());
        }
        auto raw = base64_decode(data_field);
        require(raw.size() == dim * 4, ErrorKind::format,
                path + ":" + std::to_string(lineno) + ": dim does not match payload");
        e.vector.resize(dim);
        std::memcpy(e.vector.data(), raw.data(), raw.size());
        out.push_back(std::move(e));
    }
    return out;
}

// --- utilities --------------------------------------------------------------

static const char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const uint8_t* data, size_t len) {
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (size_t i = 0; i < len; i += 3) {
        uint32_t v = static_cast<uint32_t>(data[i]) << 16;
        if (i + 1 < len) v |= static_cast<uint32_t>(data[i + 1]) << 8;
        if (i + 2 < len) v |= data[i + 2];
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += (i + 1 < len) ? kB64[(v >> 6) & 63] : '=';
        out += (i + 2 < len) ? kB64[v & 63] : '=';
    }
    return out;
}

std::vector<uint8_t> base64_decode(const std::string& s) {
    require(s.size() % 4 == 0, ErrorKind::format, "base64: length not a multiple of 4");
    static int8_t rev[256];
    static bool init = [] {
        std::fill(std::begin(rev), std::end(rev), int8_t{-1});
        for (int i = 0; i < 64; ++i) rev[static_cast<uint8_t>(kB64[i])] = static_cast<int8_t>(i);
        return true;
    }();
    (void)init;
    std::vector<uint8_t> out;
    for (size_t i = 0; i < s.size(); i += 4) {
        uint32_t v = 0;
        int pad = 0;
        for (int j = 0; j < 4; ++j) {
            char c = s[i + j];
            if (c == '=') {
                ++pad;
                v <<= 6;
                continue;
            }
            int8_t d = rev[static_cast<uint8_t>(c)];
            require(d >= 0 && pad == 0, ErrorKind::format, "base64: invalid character");
            v = (v << 6) | static_cast<uint32_t>(d);
        }
        out.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
        if (pad < 2) out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
        if (pad < 1) out.push_back(static_cast<uint8_t>(v & 0xff));
    }
    return out;
}

std::string fnv1a64_hex(const std::string& bytes) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string file_digest(const std::string& path) { return fnv1a64_hex(read_file(path)); }

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), ErrorKind::io, "cannot open file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require(f.good(), ErrorKind::io, "cannot open for writing: " + path);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    require(f.good(), ErrorKind::io, "write failed: " + path);
}

} // namespace valent
