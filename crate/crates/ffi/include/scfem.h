#ifndef SCFEM_H
#define SCFEM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ScfemStatus {
  SCFEM_STATUS_OK = 0,
  SCFEM_STATUS_NULL_POINTER = 1,
  SCFEM_STATUS_INVALID_ARGUMENT = 2,
  SCFEM_STATUS_CONFIG = 3,
  SCFEM_STATUS_NUMERICAL = 4,
  SCFEM_STATUS_IO = 5,
  SCFEM_STATUS_CONTRACT = 6,
  SCFEM_STATUS_BUFFER_TOO_SMALL = 7,
  SCFEM_STATUS_PANIC = 8,
} ScfemStatus;

typedef enum ScfemRunStatus {
  SCFEM_RUN_STATUS_CONVERGED = 0,
  SCFEM_RUN_STATUS_MAX_ITERATIONS = 1,
  SCFEM_RUN_STATUS_FAILED = 2,
} ScfemRunStatus;

typedef enum ScfemRefinement {
  SCFEM_REFINEMENT_SPATIAL = 0,
  SCFEM_REFINEMENT_PARAMETRIC = 1,
  SCFEM_REFINEMENT_FINAL = 2,
} ScfemRefinement;

/**
 * A downward-closed multi-index set.
 */
typedef struct ScfemIndexSet ScfemIndexSet;

/**
 * A finished adaptive run.
 */
typedef struct ScfemRun ScfemRun;

/**
 * One iteration of a run; estimates are NaN when not computed.
 */
typedef struct ScfemRecord {
  size_t iter;
  enum ScfemRefinement kind;
  size_t dof;
  size_t dof_total_vertices;
  double mu_bar;
  double tau_bar;
  double mu;
  double tau;
  double eta;
  size_t n_colpts;
  size_t n_triangles;
  double wall_ms;
} ScfemRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *scfem_version(void);

/**
 * Copy of the calling thread's last error message, or null if none.
 * Release with [`scfem_string_free`].
 */
char *scfem_last_error(void);

/**
 * # Safety
 * `s` must be null or come from this library.
 */
void scfem_string_free(char *s);

/**
 * The set `{(1, ..., 1)}` in `dim` dimensions.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum ScfemStatus scfem_index_set_root(size_t dim, struct ScfemIndexSet **out);

/**
 * Build a set from `count` row-major multi-indices of length `dim`.
 *
 * # Safety
 * `entries` must hold `count * dim` values; `out` must be valid.
 */
enum ScfemStatus scfem_index_set_from_entries(const uint32_t *entries,
                                              size_t count,
                                              size_t dim,
                                              struct ScfemIndexSet **out);

/**
 * # Safety
 * `set` must be null or a live handle.
 */
void scfem_index_set_free(struct ScfemIndexSet *set);

/**
 * # Safety
 * Pointers must be valid.
 */
enum ScfemStatus scfem_index_set_len(const struct ScfemIndexSet *set, size_t *len);

/**
 * # Safety
 * Pointers must be valid.
 */
enum ScfemStatus scfem_index_set_dim(const struct ScfemIndexSet *set, size_t *dim);

/**
 * Write all indices, lexicographically sorted and row-major, into `buf`
 * of capacity `cap` values (`len * dim` are needed).
 *
 * # Safety
 * `buf` must hold `cap` values.
 */
enum ScfemStatus scfem_index_set_entries(const struct ScfemIndexSet *set,
                                         uint32_t *buf,
                                         size_t cap);

/**
 * `I ∪ R(I)` as a new handle. The margin alone is not downward closed;
 * read it with [`scfem_index_set_margin_entries`].
 *
 * # Safety
 * Pointers must be valid.
 */
enum ScfemStatus scfem_index_set_with_margin(const struct ScfemIndexSet *set,
                                             struct ScfemIndexSet **out);

/**
 * Write the reduced margin (sorted, row-major) into `buf`; `count`
 * receives the number of indices. Fails with `BUFFER_TOO_SMALL` (after
 * setting `count`) when `cap < count * dim`.
 *
 * # Safety
 * Pointers must be valid; `buf` may be null when `cap` is 0.
 */
enum ScfemStatus scfem_index_set_margin_entries(const struct ScfemIndexSet *set,
                                                uint32_t *buf,
                                                size_t cap,
                                                size_t *count);

/**
 * `I ∪ added`, where every added index must lie in the reduced margin.
 *
 * # Safety
 * `entries` must hold `count * dim` values; pointers must be valid.
 */
enum ScfemStatus scfem_index_set_enrich(const struct ScfemIndexSet *set,
                                        const uint32_t *entries,
                                        size_t count,
                                        struct ScfemIndexSet **out);

/**
 * Downward-closedness test for `count` row-major indices of length `dim`.
 *
 * # Safety
 * `entries` must hold `count * dim` values; `result` must be valid.
 */
enum ScfemStatus scfem_is_monotone(const uint32_t *entries, size_t count, size_t dim, bool *result);

/**
 * Run with a flat `key = value` configuration (same keys as the CLI).
 * A run that fails part-way still yields a handle; check its status.
 *
 * # Safety
 * `config` must be a NUL-terminated string; `out` must be valid.
 */
enum ScfemStatus scfem_run_from_config(const char *config, struct ScfemRun **out);

/**
 * Run a model problem with default marking parameters. `m = 0` selects
 * the problem's default dimension.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be valid.
 */
enum ScfemStatus scfem_run(const char *problem,
                           const char *family,
                           double tol,
                           size_t m,
                           size_t max_iter,
                           struct ScfemRun **out);

/**
 * # Safety
 * `run` must be null or a live handle.
 */
void scfem_run_free(struct ScfemRun *run);

/**
 * # Safety
 * Pointers must be valid.
 */
enum ScfemStatus scfem_run_status(const struct ScfemRun *run, enum ScfemRunStatus *status);

/**
 * # Safety
 * Pointers must be valid.
 */
enum ScfemStatus scfem_run_record_count(const struct ScfemRun *run, size_t *count);

/**
 * # Safety
 * Pointers must be valid.
 */
enum ScfemStatus scfem_run_record(const struct ScfemRun *run, size_t k, struct ScfemRecord *record);

/**
 * Write `run.csv`, `manifest.json`, `convergence.svg` (two or more
 * records) and `mesh_final.txt` into `dir`, creating it if needed.
 *
 * # Safety
 * `dir` must be a NUL-terminated path.
 */
enum ScfemStatus scfem_run_write_outputs(const struct ScfemRun *run, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCFEM_H */
