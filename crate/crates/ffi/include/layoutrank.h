#ifndef LAYOUTRANK_H
#define LAYOUTRANK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum LrStatus {
  LR_STATUS_OK = 0,
  LR_STATUS_NULL_POINTER = 1,
  LR_STATUS_INVALID_UTF8 = 2,
  LR_STATUS_IO = 3,
  // Malformed input file or document.
  LR_STATUS_PARSE = 4,
  LR_STATUS_SCHEMA_MISMATCH = 5,
  LR_STATUS_UNSUPPORTED_VERSION = 6,
  LR_STATUS_INVALID_ARGUMENT = 7,
  LR_STATUS_NOT_FOUND = 8,
  // The metric is undefined for this input (for example a single class).
  LR_STATUS_UNDEFINED = 9,
  LR_STATUS_INTERNAL = 10,
} LrStatus;

// Read-only view of a score store file.
typedef struct LrScoreStore LrScoreStore;

// A trained model bound to its feature schema.
typedef struct LrScorer LrScorer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failure on this thread, or null if none.
const char *lr_last_error_message(void);

// Library version, static storage.
const char *lr_version(void);

// Loads a checkpoint and the feature schema it was trained with.
//
// # Safety
// Paths must be valid C strings; `out` must point to writable storage.
enum LrStatus lr_scorer_open(const char *checkpoint_path,
                             const char *schema_path,
                             struct LrScorer **out);

// Sets the viewport used to lay out subsequently scored pages.
//
// # Safety
// `scorer` must come from [`lr_scorer_open`].
enum LrStatus lr_scorer_set_viewport(struct LrScorer *scorer, double width, double height);

// Scores one HTML document. The result is in `[0, 1]`.
//
// # Safety
// `scorer` must come from [`lr_scorer_open`]; strings must be valid C
// strings; `score` must be writable.
enum LrStatus lr_scorer_score_html(const struct LrScorer *scorer,
                                   const char *html,
                                   const char *url,
                                   const char *category,
                                   double *score);

// Hash identifying the checkpoint; owned by the scorer.
//
// # Safety
// `scorer` must come from [`lr_scorer_open`] or be null.
const char *lr_scorer_model_version(const struct LrScorer *scorer);

// # Safety
// `scorer` must come from [`lr_scorer_open`] or be null; it is invalid
// afterwards.
void lr_scorer_free(struct LrScorer *scorer);

// # Safety
// `path` must be a valid C string; `out` must be writable.
enum LrStatus lr_store_open(const char *path, struct LrScoreStore **out);

// Number of urls in the store; 0 for a null handle.
//
// # Safety
// `store` must come from [`lr_store_open`] or be null.
size_t lr_store_len(const struct LrScoreStore *store);

// Looks up a url. Returns `NotFound` (and leaves `score` untouched) when the
// url is absent.
//
// # Safety
// `store` must come from [`lr_store_open`]; `url` must be a valid C string;
// `score` must be writable.
enum LrStatus lr_store_get(const struct LrScoreStore *store, const char *url, double *score);

// # Safety
// `store` must come from [`lr_store_open`] or be null.
void lr_store_free(struct LrScoreStore *store);

// ROC AUC with ties counted as one half.
//
// # Safety
// `scores` and `labels` must hold `n` elements; `out` must be writable.
enum LrStatus lr_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

// Positive-negative ratio. Writes `+inf` when no pair is discordant and NaN
// when every comparable pair is tied.
//
// # Safety
// As for [`lr_auc`].
enum LrStatus lr_pnr(const double *scores, const uint8_t *labels, size_t n, double *out);

// DCG over the first `p` grades of one ranked list.
//
// # Safety
// `grades` must hold `n` elements; `out` must be writable.
enum LrStatus lr_dcg(const uint8_t *grades, size_t n, size_t p, double *out);

// (good - bad) / (good + same + bad).
//
// # Safety
// `out` must be writable.
enum LrStatus lr_gsb(uint64_t good, uint64_t same, uint64_t bad, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LAYOUTRANK_H */
