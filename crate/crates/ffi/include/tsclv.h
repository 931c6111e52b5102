#ifndef TSCLV_H
#define TSCLV_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  TSCLV_STATUS_OK = 0,
  TSCLV_STATUS_NULL_POINTER = 1,
  TSCLV_STATUS_INVALID_UTF8 = 2,
  TSCLV_STATUS_SHAPE = 3,
  TSCLV_STATUS_DEGENERATE = 4,
  TSCLV_STATUS_CONFIG = 5,
  TSCLV_STATUS_INPUT = 6,
  TSCLV_STATUS_RANGE = 7,
  TSCLV_STATUS_CONSTRAINT = 8,
  TSCLV_STATUS_EMPTY_INPUT = 9,
  TSCLV_STATUS_PREREQUISITE = 10,
  TSCLV_STATUS_ALL_FITS_FAILED = 11,
  TSCLV_STATUS_FORMAT = 12,
  TSCLV_STATUS_IO = 13,
  TSCLV_STATUS_BUFFER_TOO_SMALL = 14,
  TSCLV_STATUS_PANIC = 99,
} TsclvStatus;

/**
 * Partition of the entities of a distance matrix.
 */
typedef struct TsclvClustering TsclvClustering;

/**
 * Symmetric pairwise distance matrix.
 */
typedef struct TsclvDistanceMatrix TsclvDistanceMatrix;

/**
 * Weekly series for a set of named entities.
 */
typedef struct TsclvSeriesMatrix TsclvSeriesMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next tsclv call on the same thread.
 */
const char *tsclv_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tsclv_version(void);

/**
 * Build a series matrix from `n` rows of `t` values in row-major order.
 * `labels` holds `n` entity names, or is NULL for `e1`, `e2`, ...
 * The week grid starts at `start_year`-W`start_week`.
 *
 * # Safety
 * `values` must point to `n * t` doubles and `labels`, when non-NULL, to
 * `n` NUL-terminated strings.
 */
TsclvStatus tsclv_series_matrix_new(const double *values,
                                    size_t n,
                                    size_t t,
                                    const char *const *labels,
                                    int32_t start_year,
                                    uint32_t start_week,
                                    TsclvSeriesMatrix **out);

/**
 * Parse a transaction CSV with the default column names and bucket it
 * into ISO weeks spanning the observed dates.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
TsclvStatus tsclv_series_matrix_from_transactions(const char *path, TsclvSeriesMatrix **out);

/**
 * Number of entities, or 0 for NULL.
 *
 * # Safety
 * `sm` must be NULL or a live handle.
 */
size_t tsclv_series_matrix_n(const TsclvSeriesMatrix *sm);

/**
 * Number of weeks, or 0 for NULL.
 *
 * # Safety
 * `sm` must be NULL or a live handle.
 */
size_t tsclv_series_matrix_t(const TsclvSeriesMatrix *sm);

/**
 * Copy row `i` into `buf`, which holds `len` doubles.
 *
 * # Safety
 * `sm` must be a live handle and `buf` must hold `len` doubles.
 */
TsclvStatus tsclv_series_matrix_row(const TsclvSeriesMatrix *sm, size_t i, double *buf, size_t len);

/**
 * # Safety
 * `sm` must be NULL or a handle not yet freed.
 */
void tsclv_series_matrix_free(TsclvSeriesMatrix *sm);

/**
 * Distance between two series under `measure` (e.g. "EUCL", "DTW").
 *
 * # Safety
 * `measure` must be NUL-terminated; `x` and `y` must hold `nx` and `ny`
 * doubles.
 */
TsclvStatus tsclv_distance(const char *measure,
                           const double *x,
                           size_t nx,
                           const double *y,
                           size_t ny,
                           double *out);

/**
 * Pairwise distances between every pair of rows of `sm`.
 *
 * # Safety
 * `sm` must be a live handle and `measure` NUL-terminated.
 */
TsclvStatus tsclv_distance_matrix_compute(const TsclvSeriesMatrix *sm,
                                          const char *measure,
                                          TsclvDistanceMatrix **out);

/**
 * Number of entities, or 0 for NULL.
 *
 * # Safety
 * `dm` must be NULL or a live handle.
 */
size_t tsclv_distance_matrix_n(const TsclvDistanceMatrix *dm);

/**
 * # Safety
 * `dm` must be a live handle.
 */
TsclvStatus tsclv_distance_matrix_get(const TsclvDistanceMatrix *dm,
                                      size_t i,
                                      size_t j,
                                      double *out);

/**
 * Copy the full row-major `n * n` matrix into `buf`.
 *
 * # Safety
 * `dm` must be a live handle and `buf` must hold `len` doubles.
 */
TsclvStatus tsclv_distance_matrix_copy(const TsclvDistanceMatrix *dm, double *buf, size_t len);

/**
 * # Safety
 * `dm` must be NULL or a handle not yet freed.
 */
void tsclv_distance_matrix_free(TsclvDistanceMatrix *dm);

/**
 * Cluster into `k` groups. `method` is "hierarchical", "partitional" or
 * "fuzzy"; other settings take their defaults.
 *
 * # Safety
 * `dm` must be a live handle and `method` NUL-terminated.
 */
TsclvStatus tsclv_cluster(const TsclvDistanceMatrix *dm,
                          const char *method,
                          size_t k,
                          uint64_t seed,
                          TsclvClustering **out);

/**
 * Number of clusters, or 0 for NULL.
 *
 * # Safety
 * `c` must be NULL or a live handle.
 */
size_t tsclv_clustering_k(const TsclvClustering *c);

/**
 * Copy the cluster index of every entity into `buf`.
 *
 * # Safety
 * `c` must be a live handle and `buf` must hold `len` values.
 */
TsclvStatus tsclv_clustering_assignment(const TsclvClustering *c, size_t *buf, size_t len);

/**
 * Sim index of `a` against `b`.
 *
 * # Safety
 * `a` and `b` must be live handles.
 */
TsclvStatus tsclv_sim_index(const TsclvClustering *a, const TsclvClustering *b, double *out);

/**
 * Mean silhouette of `c` under `dm`.
 *
 * # Safety
 * `dm` and `c` must be live handles.
 */
TsclvStatus tsclv_silhouette(const TsclvDistanceMatrix *dm, const TsclvClustering *c, double *out);

/**
 * # Safety
 * `c` must be NULL or a handle not yet freed.
 */
void tsclv_clustering_free(TsclvClustering *c);

/**
 * Select an ARIMA order by AIC over `p <= p_max`, `d <= d_max`,
 * `q <= q_max` and forecast `horizon` steps into `forecast_out`.
 * `order_out` receives `{p, d, q}`.
 *
 * # Safety
 * `x` must hold `n` doubles, `forecast_out` `horizon` doubles and
 * `order_out` three values.
 */
TsclvStatus tsclv_arima_forecast(const double *x,
                                 size_t n,
                                 size_t p_max,
                                 size_t d_max,
                                 size_t q_max,
                                 size_t horizon,
                                 double *forecast_out,
                                 size_t *order_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TSCLV_H */
