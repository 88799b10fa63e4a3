#ifndef POVMAP_H
#define POVMAP_H

/* Generated by cbindgen from povmap-capi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of a C ABI call.
typedef enum PmStatus {
  // The call succeeded.
  PM_STATUS_OK = 0,
  // An argument or input file was rejected.
  PM_STATUS_INVALID_INPUT = 1,
  // Text input failed to parse.
  PM_STATUS_PARSE = 2,
  // A numeric routine failed to converge or produced no result.
  PM_STATUS_NUMERIC = 3,
  // An internal invariant was violated.
  PM_STATUS_INTERNAL = 4,
  // A required pointer argument was null.
  PM_STATUS_NULL_POINTER = 5,
  // A string argument was not valid UTF-8.
  PM_STATUS_INVALID_UTF8 = 6,
} PmStatus;

// Opaque handle to a one-dimensional Gaussian mixture.
typedef struct PmGmm PmGmm;

// Opaque handle to a 4x4 quadrant sampling table.
typedef struct PmQuadrants PmQuadrants;

// Opaque handle to a fitted ridge regression model.
typedef struct PmRidge PmRidge;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string; never freed by the caller.
const char *pm_version(void);

// Message for the most recent failure on this thread. The pointer is
// valid until the next failing call on the same thread.
const char *pm_last_error(void);

// Release a string returned through an out-pointer.
//
// # Safety
// `s` must be null or a pointer previously returned by this library.
void pm_string_free(char *s);

// Derive a per-stage seed from a run seed and a stage label.
//
// # Safety
// `label` must be a valid nul-terminated string; `out` must be valid
// for writes.
enum PmStatus pm_stage_seed(uint64_t seed, const char *label, uint64_t *out);

// Intersection over union of two integer-corner boxes.
//
// # Safety
// `out` must be valid for writes.
enum PmStatus pm_iou(int64_t a_tlx,
                     int64_t a_tly,
                     int64_t a_brx,
                     int64_t a_bry,
                     int64_t b_tlx,
                     int64_t b_tly,
                     int64_t b_brx,
                     int64_t b_bry,
                     double *out);

// Fit a mixture of `k` Gaussians to `values` by expectation
// maximization with deterministic quantile initialization.
//
// # Safety
// `values` must point to `n_values` doubles; `out` must be valid for
// writes.
enum PmStatus pm_gmm_fit(const double *values,
                         size_t n_values,
                         size_t k,
                         size_t max_iter,
                         double tol,
                         struct PmGmm **out);

// Load a mixture from its `key = value` text form.
//
// # Safety
// `text` must be a valid nul-terminated string; `out` must be valid
// for writes.
enum PmStatus pm_gmm_parse(const char *text, struct PmGmm **out);

// Serialize a mixture; release the string with `pm_string_free`.
//
// # Safety
// `gmm` must be a live handle; `out` must be valid for writes.
enum PmStatus pm_gmm_write(const struct PmGmm *gmm, char **out);

// Number of components.
//
// # Safety
// `gmm` must be a live handle; `out` must be valid for writes.
enum PmStatus pm_gmm_k(const struct PmGmm *gmm, size_t *out);

// Weight, mean, and variance of component `index` (components are
// sorted by ascending mean).
//
// # Safety
// `gmm` must be a live handle; the out-pointers must be valid for
// writes.
enum PmStatus pm_gmm_component(const struct PmGmm *gmm,
                               size_t index,
                               double *out_weight,
                               double *out_mean,
                               double *out_variance);

// Index of the most probable component for `value`.
//
// # Safety
// `gmm` must be a live handle; `out` must be valid for writes.
enum PmStatus pm_gmm_assign(const struct PmGmm *gmm, double value, size_t *out);

// Release a mixture handle.
//
// # Safety
// `gmm` must be null or a live handle; it is invalid afterwards.
void pm_gmm_free(struct PmGmm *gmm);

// Fit ridge regression on standardized features. `x` is row-major,
// `n_rows` by `n_cols`.
//
// # Safety
// `x` must point to `n_rows * n_cols` doubles and `y` to `n_rows`
// doubles; `out` must be valid for writes.
enum PmStatus pm_ridge_fit(const double *x,
                           size_t n_rows,
                           size_t n_cols,
                           const double *y,
                           double lambda,
                           struct PmRidge **out);

// Predict one target from `n_cols` features.
//
// # Safety
// `model` must be a live handle; `features` must point to `n_cols`
// doubles; `out` must be valid for writes.
enum PmStatus pm_ridge_predict(const struct PmRidge *model,
                               const double *features,
                               size_t n_cols,
                               double *out);

// Load a model from its `key = value` text form.
//
// # Safety
// `text` must be a valid nul-terminated string; `out` must be valid
// for writes.
enum PmStatus pm_ridge_parse(const char *text, struct PmRidge **out);

// Serialize a model; release the string with `pm_string_free`.
//
// # Safety
// `model` must be a live handle; `out` must be valid for writes.
enum PmStatus pm_ridge_write(const struct PmRidge *model, char **out);

// Release a model handle.
//
// # Safety
// `model` must be null or a live handle; it is invalid afterwards.
void pm_ridge_free(struct PmRidge *model);

// Build a quadrant table from 16 precomputed weights in row-major
// order (row index varies slowest).
//
// # Safety
// `name` must be a valid nul-terminated string; `weights` must point
// to 16 values; `out` must be valid for writes.
enum PmStatus pm_quadrants_from_weights(const char *name,
                                        uint32_t img_w,
                                        uint32_t img_h,
                                        const uint64_t *weights,
                                        struct PmQuadrants **out);

// Map a uniform draw in [0, 1) to a quadrant index in 0..16.
//
// # Safety
// `quadrants` must be a live handle; `out` must be valid for writes.
enum PmStatus pm_quadrants_sample(const struct PmQuadrants *quadrants, double u, size_t *out);

// Pixel bounds `[x0, x1) x [y0, y1)` of quadrant `index`; edge
// quadrants absorb the remainder.
//
// # Safety
// `quadrants` must be a live handle; the out-pointers must be valid
// for writes.
enum PmStatus pm_quadrants_bounds(const struct PmQuadrants *quadrants,
                                  size_t index,
                                  uint32_t *out_x0,
                                  uint32_t *out_y0,
                                  uint32_t *out_x1,
                                  uint32_t *out_y1);

// Total weight across all 16 quadrants.
//
// # Safety
// `quadrants` must be a live handle; `out` must be valid for writes.
enum PmStatus pm_quadrants_total_weight(const struct PmQuadrants *quadrants, uint64_t *out);

// Release a quadrant table handle.
//
// # Safety
// `quadrants` must be null or a live handle; it is invalid afterwards.
void pm_quadrants_free(struct PmQuadrants *quadrants);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POVMAP_H */
