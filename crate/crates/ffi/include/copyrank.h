/* C interface to the copyrank scoring and reranking engine.
 * Generated by cbindgen; do not edit by hand. */

#ifndef COPYRANK_H
#define COPYRANK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible entry point.
typedef enum CrStatus {
  CR_STATUS_OK = 0,
  // A required pointer argument was null.
  CR_STATUS_NULL_ARGUMENT = 1,
  // An input string was not valid UTF-8.
  CR_STATUS_INVALID_UTF8 = 2,
  // The config file failed to load or validate.
  CR_STATUS_BAD_CONFIG = 3,
  // The model file or JSON failed to parse.
  CR_STATUS_BAD_MODEL = 4,
  // The catalog failed to load, or the product id is not in it.
  CR_STATUS_UNKNOWN_PRODUCT = 5,
  // Generation, filtering, or reranking failed.
  CR_STATUS_PIPELINE_FAILED = 6,
  // A numeric argument was out of its documented range.
  CR_STATUS_INVALID_ARGUMENT = 7,
  // A panic was caught at the boundary; state may be stale.
  CR_STATUS_INTERNAL = 8,
} CrStatus;

// Loaded configuration plus an optional product catalog.
typedef struct CrEngine CrEngine;

// Trained conversion model handle.
typedef struct CrModel CrModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string; never freed.
const char *cr_version(void);

// Message for the last failure on this thread. The pointer stays valid
// until the next library call on the same thread; do not free it.
const char *cr_last_error(void);

// Creates an engine from a config file. The catalog starts empty; load
// one with [`cr_engine_load_catalog`] before ranking.
//
// # Safety
// `config_path` must be a NUL-terminated string; `out` must be a valid
// pointer. On `Ok`, `*out` owns the engine until [`cr_engine_free`].
enum CrStatus cr_engine_new(const char *config_path, struct CrEngine **out);

// Replaces the engine's catalog with the JSON-Lines file at `path`.
//
// # Safety
// `engine` must come from [`cr_engine_new`] and not be freed;
// `catalog_path` must be a NUL-terminated string.
enum CrStatus cr_engine_load_catalog(struct CrEngine *engine, const char *catalog_path);

// Number of products in the loaded catalog.
//
// # Safety
// `engine` must be a live engine handle; `out` must be valid.
enum CrStatus cr_engine_product_count(const struct CrEngine *engine, size_t *out);

// Frees an engine; null is a no-op.
//
// # Safety
// `engine` must come from [`cr_engine_new`] and not be freed twice.
void cr_engine_free(struct CrEngine *engine);

// Loads a trained model from a JSON file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid. On `Ok`,
// `*out` owns the model until [`cr_model_free`].
enum CrStatus cr_model_load_file(const char *path, struct CrModel **out);

// Parses a trained model from JSON text.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be valid. On `Ok`,
// `*out` owns the model until [`cr_model_free`].
enum CrStatus cr_model_parse_json(const char *json, struct CrModel **out);

// Frees a model; null is a no-op.
//
// # Safety
// `model` must come from a load call and not be freed twice.
void cr_model_free(struct CrModel *model);

// Predicted conversion probability for one candidate's features.
//
// # Safety
// `model` must be a live model handle; `out` must be valid.
enum CrStatus cr_model_predict(const struct CrModel *model,
                               double keyword_strength,
                               double cta_density,
                               double sentiment,
                               double readability,
                               double *out);

// Runs the full pipeline for one product and returns a JSON array of
// `{rank, candidate, verdict}` objects, ordered as served. `lambda`
// must be in [0, 1], or exactly -1.0 to use the configured default.
//
// # Safety
// `engine` and `model` must be live handles; `product_id` must be a
// NUL-terminated string; `out_json` must be valid. On `Ok`, `*out_json`
// is owned by the caller; free it with [`cr_string_free`].
enum CrStatus cr_engine_rank_json(const struct CrEngine *engine,
                                  const struct CrModel *model,
                                  const char *product_id,
                                  double lambda,
                                  uint64_t seed,
                                  char **out_json);

// Set diversity of `n_texts` copy texts embedded with the engine's
// feature configuration. Needs at least one text.
//
// # Safety
// `engine` must be a live handle; `texts` must point to `n_texts`
// NUL-terminated strings; `out` must be valid.
enum CrStatus cr_engine_set_diversity(const struct CrEngine *engine,
                                      const char *const *texts,
                                      size_t n_texts,
                                      double *out);

// Frees a string returned by this library; null is a no-op.
//
// # Safety
// `s` must come from a `cr_` function documented to transfer ownership,
// and must not be freed twice.
void cr_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COPYRANK_H */
