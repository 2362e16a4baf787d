// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

// C interface to the ResMLP library. Every function returns a status code;
// on failure resmlp_last_error() holds a one-line message for the calling
// thread. Handles are opaque and owned by the caller, who releases them with
// the matching *_free function. Passing NULL to a *_free function is a no-op.

#ifndef RESMLP_RESMLP_H_
#define RESMLP_RESMLP_H_

#include <stddef.h>
#include <stdint.h>

#if defined(RESMLP_BUILDING_LIBRARY)
#define RESMLP_API __attribute__((visibility("default")))
#else
#define RESMLP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum resmlp_status {
  RESMLP_OK = 0,
  RESMLP_E_INVALID_ARGUMENT = 1,
  RESMLP_E_DIMENSION = 2,
  RESMLP_E_CONFIG = 3,
  RESMLP_E_CONTRACT = 4,
  RESMLP_E_DATA = 5,
  RESMLP_E_CAPACITY = 6,
  RESMLP_E_INVARIANT = 7,
  RESMLP_E_CORRUPT_CHECKPOINT = 8,
  RESMLP_E_PARSE = 9,
  RESMLP_E_IO = 10,
  RESMLP_E_TRAINING = 11,
  RESMLP_E_BUFFER_TOO_SMALL = 12,
  RESMLP_E_INTERNAL = 13
} resmlp_status;

typedef struct resmlp_config resmlp_config;
typedef struct resmlp_model resmlp_model;
typedef struct resmlp_translator resmlp_translator;

// Called once per finished epoch. `accuracy` is top-1 for image models and
// greedy exact match for translators; `seconds` is wall time.
typedef void (*resmlp_epoch_fn)(int epoch, double loss, double accuracy, double seconds, void* user);

RESMLP_API const char* resmlp_version(void);
RESMLP_API const char* resmlp_status_string(resmlp_status status);
// Message of the last failure on this thread; empty after a success.
RESMLP_API const char* resmlp_last_error(void);

// ---- Configuration --------------------------------------------------------

RESMLP_API resmlp_status resmlp_config_default(resmlp_config** out);
RESMLP_API resmlp_status resmlp_config_parse(const char* text, resmlp_config** out);
RESMLP_API resmlp_status resmlp_config_load(const char* path, resmlp_config** out);
// Overrides one `section.key`. "model.preset" replaces the whole model section.
RESMLP_API resmlp_status resmlp_config_set(resmlp_config* cfg, const char* key, const char* value);
// Writes the full `key = value` text. With a short buffer the call fails with
// RESMLP_E_BUFFER_TOO_SMALL; `needed` always receives the size including NUL.
RESMLP_API resmlp_status resmlp_config_serialize(const resmlp_config* cfg, char* buffer, size_t capacity,
                                                 size_t* needed);
RESMLP_API void resmlp_config_free(resmlp_config* cfg);

// Learnable parameters and multiply-accumulates per image of the image model.
RESMLP_API resmlp_status resmlp_count(const resmlp_config* cfg, uint64_t* params, uint64_t* macs);

// ---- Image models ---------------------------------------------------------

RESMLP_API resmlp_status resmlp_model_init(const resmlp_config* cfg, uint64_t seed, resmlp_model** out);
RESMLP_API resmlp_status resmlp_model_load(const char* path, resmlp_model** out);
RESMLP_API resmlp_status resmlp_model_save(const resmlp_model* model, const char* path);
RESMLP_API resmlp_status resmlp_model_fuse(const resmlp_model* model, resmlp_model** out);
RESMLP_API resmlp_status resmlp_model_param_count(const resmlp_model* model, uint64_t* count);
RESMLP_API resmlp_status resmlp_model_depth(const resmlp_model* model, int* depth);
// Writes the model's ModelConfig as `model.*` lines into a fresh config.
RESMLP_API resmlp_status resmlp_model_config(const resmlp_model* model, resmlp_config** out);

// images: batch x C x H x W floats, already normalized. logits receives
// batch x num_classes floats; `logits_len` is its capacity in floats.
RESMLP_API resmlp_status resmlp_model_logits(const resmlp_model* model, const float* images, int64_t batch,
                                             float* logits, size_t logits_len);

// Trains a fresh model per `cfg` (data section selects the dataset). Hard
// distillation reads the teacher checkpoint named by train.teacher. When
// out_dir is non-NULL, best.ckpt, final.ckpt, train.csv and train.log go there.
RESMLP_API resmlp_status resmlp_train(const resmlp_config* cfg, const char* out_dir, resmlp_epoch_fn on_epoch,
                                      void* user, resmlp_model** out, double* best_accuracy);

// Top-1 accuracy on the test split of cfg's data section.
RESMLP_API resmlp_status resmlp_model_evaluate(const resmlp_model* model, const resmlp_config* cfg, double* accuracy);

// Sparsity CSV with threshold fraction `tau` (0.05 is customary).
RESMLP_API resmlp_status resmlp_model_sparsity_csv(const resmlp_model* model, double tau, const char* path);

// PGM grid of rows of the cross-patch matrix of `layer`. `selection` is
// "center6x6", "all" or a comma-separated list of patch indices.
RESMLP_API resmlp_status resmlp_model_export_filters(const resmlp_model* model, int layer, const char* selection,
                                                     const char* path);

RESMLP_API void resmlp_model_free(resmlp_model* model);

// ---- Translators ----------------------------------------------------------

// Trains on the toy task or corpus named in cfg's data section.
RESMLP_API resmlp_status resmlp_translator_train(const resmlp_config* cfg, const char* out_dir,
                                                 resmlp_epoch_fn on_epoch, void* user, resmlp_translator** out,
                                                 double* exact_match);
RESMLP_API resmlp_status resmlp_translator_load(const char* path, resmlp_translator** out);
RESMLP_API resmlp_status resmlp_translator_save(const resmlp_translator* t, const char* path);

// Whitespace-separated source tokens in, target tokens out. beam == 0 is
// plain greedy decoding; beam >= 1 runs beam search of that width.
// Buffer rules as for resmlp_config_serialize.
RESMLP_API resmlp_status resmlp_translate(const resmlp_translator* t, const char* source, int beam, char* buffer,
                                          size_t capacity, size_t* needed);

// Exact-match rate on the test pairs of cfg's data section; beam as above.
RESMLP_API resmlp_status resmlp_translator_evaluate(const resmlp_translator* t, const resmlp_config* cfg, int beam,
                                                    double* exact_match);

RESMLP_API void resmlp_translator_free(resmlp_translator* t);

#ifdef __cplusplus
}  // extern "C"
#endif

#endif  // RESMLP_RESMLP_H_
