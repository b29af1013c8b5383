/* C interface for the vsbt time-series segmentation library. */

#pragma once

/* Generated with cbindgen:0.26.0 */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by the fitting entry points.
 */
typedef enum VsbtStatus {
  VSBT_STATUS_OK = 0,
  /**
   * A required pointer argument was null or a length was zero.
   */
  VSBT_STATUS_NULL_ARGUMENT = 1,
  /**
   * The series or configuration was rejected.
   */
  VSBT_STATUS_INVALID_INPUT = 2,
  /**
   * The fit failed numerically.
   */
  VSBT_STATUS_NUMERICAL_FAILURE = 3,
  /**
   * An internal panic was caught at the boundary.
   */
  VSBT_STATUS_PANIC = 4,
} VsbtStatus;

/**
 * Opaque fitted-model handle.
 */
typedef struct VsbtFit VsbtFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *vsbt_last_error(void);

/**
 * Fit the model to `data[0..len]`.
 *
 * `config_json` may be null for the benchmark defaults, or a JSON
 * object with any of the fields accepted by the CLI `--config` file
 * (`d_max`, `ar_order`, `num_models`, `split_prob`, `alpha`,
 * `ar_prior`, `max_sweeps`, `tol`, `fixed_splitting`, `gate_passes`,
 * `seed`). On success writes a handle to `out`.
 *
 * # Safety
 * `data` must point to `len` readable doubles; `config_json`, when not
 * null, must be a NUL-terminated UTF-8 string; `out` must be a valid
 * location to store a pointer.
 */
enum VsbtStatus vsbt_fit_series(const double *data,
                                uintptr_t len,
                                const char *config_json,
                                struct VsbtFit **out);

/**
 * Free a handle from `vsbt_fit_series`. Null is a no-op.
 *
 * # Safety
 * `fit` must be null or a pointer previously returned by
 * `vsbt_fit_series` that has not been freed.
 */
void vsbt_fit_free(struct VsbtFit *fit);

/**
 * Length of the fitted series, or 0 on a null handle.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
uintptr_t vsbt_fit_series_len(const struct VsbtFit *fit);

/**
 * Whether the sweep loop converged before its cap.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
bool vsbt_fit_converged(const struct VsbtFit *fit);

/**
 * Number of internal nodes of the MAP tree (= number of split times).
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
uintptr_t vsbt_fit_num_splits(const struct VsbtFit *fit);

/**
 * Copy the learned split times into `out` (up to `cap` values) and
 * return the total count. Call with a null `out` to query the count.
 *
 * # Safety
 * `out` must be null or point to `cap` writable doubles; `fit` must be
 * null or a live handle.
 */
uintptr_t vsbt_fit_split_times(const struct VsbtFit *fit, double *out, uintptr_t cap);

/**
 * Copy the per-time model labels and return the total count.
 *
 * # Safety
 * `out` must be null or point to `cap` writable u32; `fit` must be null
 * or a live handle.
 */
uintptr_t vsbt_fit_labels(const struct VsbtFit *fit, uint32_t *out, uintptr_t cap);

/**
 * Copy the change probabilities (one per gap, so series length − 1
 * values) and return the total count.
 *
 * # Safety
 * `out` must be null or point to `cap` writable doubles; `fit` must be
 * null or a live handle.
 */
uintptr_t vsbt_fit_change_probabilities(const struct VsbtFit *fit, double *out, uintptr_t cap);

/**
 * The full results document as a JSON string; free it with
 * `vsbt_string_free`. Returns null on a null handle or encoding error.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
char *vsbt_fit_to_json(const struct VsbtFit *fit);

/**
 * Free a string from `vsbt_fit_to_json`. Null is a no-op.
 *
 * # Safety
 * `s` must be null or a pointer previously returned by
 * `vsbt_fit_to_json` that has not been freed.
 */
void vsbt_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus
