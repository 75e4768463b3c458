#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "valent/metrics.hpp"
#include "valent/model.hpp"

namespace valent {

// --- tensor archives -------------------------------------------------------
//
// Layout: 8-byte little-endian header length, UTF-8 JSON manifest, blob of
// raw little-endian f32 tensors, each 64-byte aligned. Offsets in the
// manifest are absolute file offsets. Round trips are bit-exact.

void write_archive(const ModelWeights& weights, const ModelConfig& cfg,
                   const std::string& path);
std::pair<ModelWeights, ModelConfig> read_archive(const std::string& path);

// --- tokenizer --------------------------------------------------------------
//
// Whitespace tokenizer with UTF-8 byte fallback: in-vocab words map to their
// ids, unknown words emit one reserved id per byte. The 256 fallback ids sit
// directly after the word ids, so vocab_size() = word count + 256.

class Tokenizer {
public:
    static Tokenizer load(const std::string& path);
    static Tokenizer from_words(const std::vector<std::string>& words);

    std::vector<int> tokenize(const std::string& text) const;
    std::string detokenize(const std::vector<int>& ids) const;

    size_t vocab_size() const { return n_words_ + 256; }
    size_t word_count() const { return n_words_; }

private:
    std::map<std::string, int> vocab_;
    std::vector<std::string> id_to_word_;
    size_t n_words_ = 0;
};

// Trim, and collapse internal whitespace runs to single spaces.
std::string normalize_whitespace(const std::string& text);

// --- corpora ----------------------------------------------------------------

std::vector<StsPair> load_sts(const std::string& path);
RetrievalSet load_retrieval(const std::string& path);
// Plain text, blank-line-separated documents.
std::vector<std::string> load_probe_corpus(const std::string& path);

// --- embedding cache --------------------------------------------------------

struct CachedEmbedding {
    std::string id;
    std::string model_id;
    std::string spec_fingerprint;
    Vector vector;
};

void append_embedding_cache(const std::string& path, const CachedEmbedding& e);
std::vector<CachedEmbedding> read_embedding_cache(const std::string& path);

// --- small utilities --------------------------------------------------------

std::string base64_encode(const uint8_t* data, size_t len);
std::vector<uint8_t> base64_decode(const std::string& s);

// FNV-1a 64 over raw bytes, hex string. Used for corpus digests and
// PoolSpec fingerprints; documented in output metadata as "fnv1a64".
std::string fnv1a64_hex(const std::string& bytes);
std::string file_digest(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

} // namespace valent
