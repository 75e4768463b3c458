/* C API for the valent sentence-embedding library.
 *
 * All functions return a valent_status; 0 means success. On failure the
 * thread-local message from valent_last_error() describes what went wrong.
 * Strings returned through char** are owned by the caller and must be
 * released with valent_string_free().
 */
#ifndef VALENT_H
#define VALENT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define VALENT_API __declspec(dllexport)
#else
#define VALENT_API __attribute__((visibility("default")))
#endif

typedef enum {
    VALENT_OK = 0,
    VALENT_ERR_INVALID_ARG = 1, /* bad input, spec, or config */
    VALENT_ERR_IO = 2,          /* file missing or unwritable */
    VALENT_ERR_FORMAT = 3,      /* file exists but is malformed */
    VALENT_ERR_RUNTIME = 4,     /* anything else */
} valent_status;

typedef struct valent_model valent_model;
typedef struct valent_tokenizer valent_tokenizer;

VALENT_API const char* valent_version(void);
VALENT_API const char* valent_last_error(void);
VALENT_API void valent_string_free(char* s);

/* Generate a seeded toy model archive. config_json keys (all optional):
 * d_model, n_layers, n_heads, n_kv_heads, d_ff, vocab_size, max_seq_len,
 * norm_kind, activation, pos_kind, seed. */
VALENT_API valent_status valent_gen_toy(const char* config_json, const char* out_path,
                                        char** summary_json);

VALENT_API valent_status valent_model_open(const char* archive_path, valent_model** out);
VALENT_API void valent_model_close(valent_model* m);
VALENT_API size_t valent_model_dim(const valent_model* m);
VALENT_API size_t valent_model_layers(const valent_model* m);

VALENT_API valent_status valent_tokenizer_open(const char* path, valent_tokenizer** out);
VALENT_API void valent_tokenizer_close(valent_tokenizer* t);
VALENT_API size_t valent_tokenizer_vocab_size(const valent_tokenizer* t);

/* spec_json: {"method": "...", "layers": "full|half|explicit:..|preset:..",
 * "template": "none|prompt_eol|future_eol|echo"}. Writes up to capacity
 * floats into out; *out_dim receives the true dimension. */
VALENT_API valent_status valent_embed_sentence(const valent_model* m,
                                               const valent_tokenizer* t,
                                               const char* sentence, const char* spec_json,
                                               float* out, size_t capacity,
                                               size_t* out_dim);

/* File-level commands. Each returns the run summary as JSON. threads <= 1
 * runs serially; results are byte-identical for any thread count. */
VALENT_API valent_status valent_embed_file(const valent_model* m, const valent_tokenizer* t,
                                           const char* sentences_path, const char* spec_json,
                                           const char* cache_path, size_t threads,
                                           char** summary_json);
VALENT_API valent_status valent_eval_sts(const valent_model* m, const valent_tokenizer* t,
                                         const char* sts_path, const char* spec_json,
                                         size_t threads, char** summary_json);
VALENT_API valent_status valent_eval_retrieval(const valent_model* m,
                                               const valent_tokenizer* t,
                                               const char* corpus_path, const char* spec_json,
                                               size_t threads, char** summary_json);
VALENT_API valent_status valent_eval_rerank(const valent_model* m, const valent_tokenizer* t,
                                            const char* corpus_path, const char* spec_json,
                                            size_t threads, char** summary_json);

/* config_json: {"method": "va|hs", "delta": .., "min_layers": ..,
 * "max_layers": .., "veto_fraction": ..}. */
VALENT_API valent_status valent_sweep_layers(const valent_model* m, const valent_tokenizer* t,
                                             const char* dev_sts_path,
                                             const char* dev_retrieval_path,
                                             const char* config_json, const char* out_dir,
                                             char** summary_json);

/* config_json: {"method": "va|hs", "seed": .., "k_list": [..],
 * "max_tokens": .., "min_tokens": .., "split_lo": .., "split_hi": ..}. */
VALENT_API valent_status valent_probe_segments(const valent_model* m,
                                               const valent_tokenizer* t,
                                               const char* corpus_path,
                                               const char* config_json, const char* out_dir,
                                               char** summary_json);

/* config_json: {"seed": .., "offsets": [..], "prefix_lo": .., "prefix_hi": ..,
 * "truncate_tokens": .., "tau": .., "top_n": ..}. */
VALENT_API valent_status valent_probe_logitlens(const valent_model* m,
                                                const valent_tokenizer* t,
                                                const char* corpus_path,
                                                const char* config_json, const char* out_dir,
                                                char** summary_json);

#ifdef __cplusplus
}
#endif

#endif /* VALENT_H */
