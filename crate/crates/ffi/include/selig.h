#ifndef SELIG_H
#define SELIG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum {
  SELIG_STATUS_OK = 0,
  SELIG_STATUS_NULL_POINTER = 1,
  SELIG_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Input data or configuration rejected.
   */
  SELIG_STATUS_VALIDATION = 3,
  /**
   * Estimation failed on valid input.
   */
  SELIG_STATUS_ESTIMATION = 4,
  SELIG_STATUS_INDEX_OUT_OF_RANGE = 5,
  SELIG_STATUS_PANIC = 6,
} SeligStatus;

/**
 * A validated panel dataset.
 */
typedef struct SeligDataset SeligDataset;

/**
 * Estimates for a batch of (estimand, method) pairs.
 */
typedef struct SeligReport SeligReport;

/**
 * Library version, a static NUL-terminated string.
 */
const char *selig_version(void);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *selig_last_error(void);

/**
 * Loads a panel CSV with its covariate schema JSON.
 *
 * # Safety
 * Paths must be NUL-terminated strings; `out` must be writable.
 */
SeligStatus selig_dataset_load(const char *csv_path, const char *schema_path, SeligDataset **out);

/**
 * Parses a panel from in-memory CSV and schema JSON text.
 *
 * # Safety
 * Strings must be NUL-terminated; `out` must be writable.
 */
SeligStatus selig_dataset_from_text(const char *csv_text,
                                    const char *schema_json,
                                    SeligDataset **out);

/**
 * Draws one panel from the built-in simulation design.
 *
 * # Safety
 * `out` must be writable.
 */
SeligStatus selig_dataset_simulate(size_t n,
                                   double delta,
                                   bool binary_outcome,
                                   bool misspecified,
                                   uint64_t seed,
                                   SeligDataset **out);

/**
 * Number of units; 0 for NULL.
 *
 * # Safety
 * `ds` must be NULL or a live dataset handle.
 */
size_t selig_dataset_units(const SeligDataset *ds);

/**
 * Number of periods; 0 for NULL.
 *
 * # Safety
 * `ds` must be NULL or a live dataset handle.
 */
size_t selig_dataset_horizon(const SeligDataset *ds);

/**
 * # Safety
 * `ds` must be NULL or a handle not yet freed.
 */
void selig_dataset_free(SeligDataset *ds);

/**
 * One estimate. `features` may be NULL (main effects). `std_error`
 * receives the influence-function standard error for `dr`, NaN otherwise;
 * it may be NULL.
 *
 * # Safety
 * `ds` must be a live handle; strings NUL-terminated; `estimate_out`
 * writable.
 */
SeligStatus selig_estimate(const SeligDataset *ds,
                           const char *estimand,
                           const char *method,
                           const char *features,
                           double *estimate_out,
                           double *std_error);

/**
 * One estimate with a percentile bootstrap interval.
 *
 * # Safety
 * As [`selig_estimate`]; `low` and `high` must be writable.
 */
SeligStatus selig_estimate_ci(const SeligDataset *ds,
                              const char *estimand,
                              const char *method,
                              const char *features,
                              size_t replicates,
                              double level,
                              uint64_t seed,
                              double *estimate_out,
                              double *low,
                              double *high);

/**
 * Estimates for newline-separated estimands and comma-separated methods,
 * stored in estimand-major order.
 *
 * # Safety
 * As [`selig_estimate`]; `out` must be writable.
 */
SeligStatus selig_report_new(const SeligDataset *ds,
                             const char *estimands,
                             const char *methods,
                             const char *features,
                             SeligReport **out);

/**
 * Number of rows; 0 for NULL.
 *
 * # Safety
 * `r` must be NULL or a live report handle.
 */
size_t selig_report_len(const SeligReport *r);

/**
 * Point estimate of row `i`.
 *
 * # Safety
 * `r` must be a live handle; `value` writable.
 */
SeligStatus selig_report_estimate(const SeligReport *r, size_t i, double *value);

/**
 * Label of row `i` as `estimand/method`; free with [`selig_string_free`].
 *
 * # Safety
 * `r` must be a live handle; `out` writable.
 */
SeligStatus selig_report_label(const SeligReport *r, size_t i, char **out);

/**
 * # Safety
 * `r` must be NULL or a handle not yet freed.
 */
void selig_report_free(SeligReport *r);

/**
 * Frees a string returned by this library.
 *
 * # Safety
 * `s` must be NULL or a string from this library not yet freed.
 */
void selig_string_free(char *s);

/**
 * Exact truth of an estimand on a finite population (`d1`, `d2` or a
 * population file).
 *
 * # Safety
 * Strings NUL-terminated; `value` writable.
 */
SeligStatus selig_oracle_truth(const char *population, const char *estimand, double *value);

#endif  /* SELIG_H */
