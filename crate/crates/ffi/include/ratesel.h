#ifndef RATESEL_H
#define RATESEL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  RS_STATUS_OK = 0,
  RS_STATUS_NULL_POINTER = 1,
  RS_STATUS_INVALID_ARGUMENT = 2,
  RS_STATUS_DIMENSION_MISMATCH = 3,
  RS_STATUS_NON_FINITE = 4,
  RS_STATUS_NOT_POSITIVE_DEFINITE = 5,
  RS_STATUS_RANK_OUT_OF_RANGE = 6,
  RS_STATUS_RATIO_INFEASIBLE = 7,
  RS_STATUS_INSUFFICIENT_SAMPLES = 8,
  RS_STATUS_NO_CONVERGENCE = 9,
  RS_STATUS_NUMERICAL_FAILURE = 10,
  RS_STATUS_BUFFER_TOO_SMALL = 11,
  RS_STATUS_PANIC = 12,
} RsStatus;

typedef enum {
  RS_METHOD_RPCA = 0,
  RS_METHOD_SVD = 1,
  RS_METHOD_RSVD = 2,
  RS_METHOD_CUR = 3,
} RsMethod;

/**
 * Compressed soft-label stack.
 */
typedef struct RsCompressed RsCompressed;

/**
 * Incremental coding-rate state for a growing set of vectors.
 */
typedef struct RsGram RsGram;

/**
 * Outcome of a selection run.
 */
typedef struct RsSelection RsSelection;

/**
 * Selection settings. Obtain defaults from [`rs_selection_config_default`].
 */
typedef struct {
  size_t ipc;
  double alpha;
  double beta;
  double epsilon_sq;
  double gamma_fixed;
  size_t candidate_batch;
  /**
   * 0 = per class, 1 = global with a per-class cap.
   */
  uint8_t global_capped;
  uint64_t seed;
} RsSelectionConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread; empty after a success.
 * Valid until the next call into this library from the same thread.
 */
const char *rs_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rs_version(void);

/**
 * `½·log det(I + γ·Z·Zᵀ)` for a `dim×n` matrix `z`.
 *
 * # Safety
 * `z` must point to `dim*n` doubles and `out` to writable storage.
 */
RsStatus rs_coding_rate(const double *z,
                        size_t dim,
                        size_t n,
                        double epsilon_sq,
                        double gamma_fixed,
                        double *out);

/**
 * Class-conditional rate of a `dim×n` matrix with `labels[i] < num_classes`.
 *
 * # Safety
 * `z` must hold `dim*n` doubles, `labels` `n` entries.
 */
RsStatus rs_class_coding_rate(const double *z,
                              size_t dim,
                              size_t n,
                              const uint32_t *labels,
                              size_t num_classes,
                              double epsilon_sq,
                              double gamma_fixed,
                              double *out);

/**
 * Rate of a `num_augs×num_classes` soft-label block.
 *
 * # Safety
 * `y` must hold `num_augs*num_classes` doubles.
 */
RsStatus rs_label_coding_rate(const double *y,
                              size_t num_augs,
                              size_t num_classes,
                              double epsilon_sq,
                              double gamma_fixed,
                              double *out);

/**
 * Largest rank whose factors fit a `rows×cols` block at `ratio`.
 *
 * # Safety
 * `out` must be writable.
 */
RsStatus rs_plan_rank(size_t rows, size_t cols, double ratio, uint8_t bytes, size_t *out);

/**
 * # Safety
 * `out` must be writable; the handle is owned by the caller.
 */
RsStatus rs_gram_new(size_t dim, double epsilon_sq, double gamma_fixed, RsGram **out);

/**
 * # Safety
 * `g` must come from [`rs_gram_new`] and `z` hold `dim` doubles.
 */
RsStatus rs_gram_insert(RsGram *g, const double *z);

/**
 * Re-factors for a new `γ`; required after inserts under size-dependent
 * scaling.
 *
 * # Safety
 * `g` must come from [`rs_gram_new`].
 */
RsStatus rs_gram_refresh(RsGram *g, double gamma);

/**
 * Rate increase from adding `z` to the current set.
 *
 * # Safety
 * `g` must come from [`rs_gram_new`] and `z` hold `dim` doubles.
 */
RsStatus rs_gram_marginal_gain(const RsGram *g, const double *z, double *out);

/**
 * `½·log det(I + γ·G)` of the current set.
 *
 * # Safety
 * `g` must come from [`rs_gram_new`].
 */
RsStatus rs_gram_rate(const RsGram *g, double *out);

/**
 * # Safety
 * `g` must come from [`rs_gram_new`].
 */
RsStatus rs_gram_count(const RsGram *g, size_t *out);

/**
 * # Safety
 * `g` must come from [`rs_gram_new`] and not be used afterwards.
 */
void rs_gram_free(RsGram *g);

RsSelectionConfig rs_selection_config_default(void);

/**
 * Greedy selection over `n` samples.
 *
 * `features` is `dim×n`; `soft_labels` is `n×num_augs×num_classes` with
 * every row on the probability simplex. Sample ids are the positions
 * `0..n`.
 *
 * # Safety
 * All arrays must have the stated lengths; `config` and `out` must be valid.
 */
RsStatus rs_select(const double *features,
                   size_t dim,
                   size_t n,
                   const uint32_t *labels,
                   size_t num_classes,
                   const double *soft_labels,
                   size_t num_augs,
                   const RsSelectionConfig *config,
                   RsSelection **out);

/**
 * Number of selected samples.
 *
 * # Safety
 * `s` must come from [`rs_select`].
 */
RsStatus rs_selection_len(const RsSelection *s, size_t *out);

/**
 * Copies the selected ids in pick order and the matching round scores
 * (`scores` may be NULL). Both buffers need `capacity >= len`.
 *
 * # Safety
 * `s` must come from [`rs_select`]; buffers must hold `capacity` entries.
 */
RsStatus rs_selection_ids(const RsSelection *s, uint64_t *ids, double *scores, size_t capacity);

/**
 * # Safety
 * `s` must come from [`rs_select`] and not be used afterwards.
 */
void rs_selection_free(RsSelection *s);

/**
 * Compresses an `n×num_augs×num_classes` stack. Pass `ratio > 0` for a
 * storage budget, or `ratio <= 0` with `rank >= 1` for a fixed rank.
 *
 * # Safety
 * `labels` must hold `n*num_augs*num_classes` doubles; `out` must be valid.
 */
RsStatus rs_compress(const double *labels,
                     size_t n,
                     size_t num_augs,
                     size_t num_classes,
                     RsMethod method,
                     double ratio,
                     size_t rank,
                     uint8_t bytes_per_scalar,
                     uint64_t seed,
                     RsCompressed **out);

/**
 * Original and stored byte counts of a compressed stack.
 *
 * # Safety
 * `c` must come from [`rs_compress`]; out-pointers must be writable.
 */
RsStatus rs_compressed_bytes(const RsCompressed *c, uint64_t *original, uint64_t *stored);

/**
 * Reconstructs the stack into `out` (`capacity >= n*num_augs*num_classes`).
 * With `renormalize != 0` rows are clamped at zero and rescaled to sum 1.
 *
 * # Safety
 * `c` must come from [`rs_compress`]; `out` must hold `capacity` doubles.
 */
RsStatus rs_decompress(const RsCompressed *c, uint8_t renormalize, double *out, size_t capacity);

/**
 * # Safety
 * `c` must come from [`rs_compress`] and not be used afterwards.
 */
void rs_compressed_free(RsCompressed *c);

/**
 * Splits a `rows×cols` matrix into low-rank plus sparse parts with default
 * settings. `low_rank` and `sparse` receive dense `rows×cols` matrices.
 * Returns `NoConvergence` (with both outputs filled) if the iteration
 * limit is hit first.
 *
 * # Safety
 * `m`, `low_rank`, `sparse` must hold `rows*cols` doubles; `iterations`
 * may be NULL.
 */
RsStatus rs_rpca(const double *m,
                 size_t rows,
                 size_t cols,
                 double *low_rank,
                 double *sparse,
                 size_t *iterations);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RATESEL_H */
