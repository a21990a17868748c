#ifndef WAVEGATE_H
#define WAVEGATE_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Values 2 to 4 coincide with the CLI exit codes.
 */
typedef enum WgStatus {
  WG_STATUS_OK = 0,
  /**
   * Null pointer or wrong buffer length.
   */
  WG_STATUS_INVALID_ARGUMENT = 1,
  WG_STATUS_PARAMETER_DOMAIN = 2,
  WG_STATUS_CFL_VIOLATION = 3,
  WG_STATUS_NUMERICAL = 4,
  /**
   * A Rust panic was caught at the boundary.
   */
  WG_STATUS_INTERNAL = 5,
} WgStatus;

typedef struct WgPencil WgPencil;

typedef struct WgScheme WgScheme;

typedef struct WgTable WgTable;

typedef struct WgRunSummary {
  uintptr_t steps;
  double final_time;
  double e_total_initial;
  double e_total_final;
  double observed_integral;
  double max_relative_drift;
} WgRunSummary;

/**
 * One dispersion sample of one branch.
 */
typedef struct WgDispersionSample {
  double xi;
  double sigma;
  double omega;
  double vg;
} WgDispersionSample;

typedef struct WgObservability {
  double c_t;
  double mu_min;
  uintptr_t deflated_dim;
} WgObservability;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *wg_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *wg_version(void);

/**
 * Writes the local blocks `M, K0, K-1, K+1` row-major; each buffer holds `(k+1)^2` entries.
 *
 * # Safety
 * Each output pointer must address `len` writable doubles.
 */
enum WgStatus wg_assemble(uintptr_t k,
                          double h,
                          double *m,
                          double *k0,
                          double *km1,
                          double *kp1,
                          uintptr_t len);

/**
 * Largest stable Courant number for degree `k`.
 *
 * # Safety
 * `lambda_max` must be a valid pointer.
 */
enum WgStatus wg_cfl_lambda_max(uintptr_t k, double *lambda_max);

/**
 * Leapfrog scheme on the periodic mesh `[x_lo, x_hi)` with cell size `h`.
 *
 * # Safety
 * `scheme` must be a valid pointer; on success it receives a handle owned by the caller.
 */
enum WgStatus wg_scheme_new(uintptr_t k,
                            double h,
                            double lambda,
                            double x_lo,
                            double x_hi,
                            struct WgScheme **scheme);

/**
 * # Safety
 * `scheme` must come from [`wg_scheme_new`] and not be used afterwards. Null is ignored.
 */
void wg_scheme_free(struct WgScheme *scheme);

/**
 * Number of doubles in one time level, `J (k+1)`. Zero for a null handle.
 *
 * # Safety
 * `scheme` must be null or a live handle.
 */
uintptr_t wg_scheme_state_len(const struct WgScheme *scheme);

/**
 * Number of cells. Zero for a null handle.
 *
 * # Safety
 * `scheme` must be null or a live handle.
 */
uintptr_t wg_scheme_cells(const struct WgScheme *scheme);

/**
 * Time step. NaN for a null handle.
 *
 * # Safety
 * `scheme` must be null or a live handle.
 */
double wg_scheme_dt(const struct WgScheme *scheme);

/**
 * Total energy and energy observed outside `(a, b)` of the level pair.
 *
 * # Safety
 * `un` and `unp1` must address `len` doubles; outputs must be valid pointers.
 */
enum WgStatus wg_scheme_energy(const struct WgScheme *scheme,
                               const double *un,
                               const double *unp1,
                               uintptr_t len,
                               double a,
                               double b,
                               double *e_total,
                               double *e_obs);

/**
 * Advances the level pair to time `t_final` and overwrites `un`, `unp1` with the final pair.
 *
 * # Safety
 * `un` and `unp1` must address `len` writable doubles; `summary` must be a valid pointer.
 */
enum WgStatus wg_scheme_run(const struct WgScheme *scheme,
                            double *un,
                            double *unp1,
                            uintptr_t len,
                            double t_final,
                            double a,
                            double b,
                            struct WgRunSummary *summary);

/**
 * Dispersion branches on the default wavenumber grid of `[-pi/h, pi/h]`.
 *
 * # Safety
 * `table` must be a valid pointer; on success it receives a handle owned by the caller.
 */
enum WgStatus wg_dispersion_new(uintptr_t k, double h, double lambda, struct WgTable **table);

/**
 * # Safety
 * `table` must come from [`wg_dispersion_new`] and not be used afterwards. Null is ignored.
 */
void wg_table_free(struct WgTable *table);

/**
 * Number of wavenumber samples. Zero for a null handle.
 *
 * # Safety
 * `table` must be null or a live handle.
 */
uintptr_t wg_table_len(const struct WgTable *table);

/**
 * Number of branches, `k + 1`. Zero for a null handle.
 *
 * # Safety
 * `table` must be null or a live handle.
 */
uintptr_t wg_table_branches(const struct WgTable *table);

/**
 * Index of the physical branch.
 *
 * # Safety
 * `table` must be a live handle and `index` a valid pointer.
 */
enum WgStatus wg_table_physical_branch(const struct WgTable *table, uintptr_t *index);

/**
 * # Safety
 * `table` must be a live handle and `sample` a valid pointer.
 */
enum WgStatus wg_table_sample(const struct WgTable *table,
                              uintptr_t branch,
                              uintptr_t i,
                              struct WgDispersionSample *sample);

/**
 * Gramian pencil of the observation outside `(a, b)` over `[0, t_final]`.
 *
 * # Safety
 * `scheme` must be a live handle and `pencil` a valid pointer.
 */
enum WgStatus wg_pencil_new(const struct WgScheme *scheme,
                            double a,
                            double b,
                            double t_final,
                            struct WgPencil **pencil);

/**
 * # Safety
 * `pencil` must come from [`wg_pencil_new`] and not be used afterwards. Null is ignored.
 */
void wg_pencil_free(struct WgPencil *pencil);

/**
 * Pencil dimension `2 J (k+1)`. Zero for a null handle.
 *
 * # Safety
 * `pencil` must be null or a live handle.
 */
uintptr_t wg_pencil_dim(const struct WgPencil *pencil);

/**
 * Copies the energy form `A` or the observation form `G` (column-major, `dim^2` entries).
 *
 * # Safety
 * `a` and `g` must each be null or address `len` writable doubles.
 */
enum WgStatus wg_pencil_forms(const struct WgPencil *pencil, double *a, double *g, uintptr_t len);

/**
 * Observability constant with deflation tolerance `tol` relative to the largest energy eigenvalue.
 *
 * # Safety
 * `pencil` must be a live handle and `result` a valid pointer.
 */
enum WgStatus wg_pencil_observability(const struct WgPencil *pencil,
                                      double tol,
                                      struct WgObservability *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WAVEGATE_H */
