/* C interface to the starksim solvers. */

#ifndef STARKSIM_H
#define STARKSIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a starksim call.
 */
typedef enum StarksimStatus {
  STARKSIM_STATUS_OK = 0,
  /**
   * A parameter violated its documented range.
   */
  STARKSIM_STATUS_INVALID_ARGUMENT = 1,
  /**
   * The solver failed numerically (instability, non-convergence).
   */
  STARKSIM_STATUS_NUMERICAL_FAILURE = 2,
  /**
   * A required pointer was NULL.
   */
  STARKSIM_STATUS_NULL_POINTER = 3,
  /**
   * A string argument was not valid UTF-8.
   */
  STARKSIM_STATUS_UTF8_ERROR = 4,
  /**
   * The callee panicked; state may be inconsistent.
   */
  STARKSIM_STATUS_INTERNAL_ERROR = 5,
} StarksimStatus;

/**
 * Opaque harmonic-noise trajectory.
 */
typedef struct StarksimNoisePath StarksimNoisePath;

/**
 * Opaque ground-band survival series (times, means, standard errors).
 */
typedef struct StarksimSurvivalSeries StarksimSurvivalSeries;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version of the underlying library, as a static NUL-terminated string.
 */
const char *starksim_version(void);

/**
 * Generate a harmonic-noise trajectory started from the stationary
 * distribution.
 *
 * On success writes a handle to `out`; free it with
 * `starksim_noise_path_free`.
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle pointer.
 */
enum StarksimStatus starksim_noise_path_generate(double gamma,
                                                 double omega0,
                                                 double temperature,
                                                 double t_total,
                                                 double dt,
                                                 uint64_t seed,
                                                 struct StarksimNoisePath **out);

/**
 * Number of samples in a trajectory; 0 for a NULL handle.
 * # Safety
 * `path` must be NULL or a handle from `starksim_noise_path_generate`.
 */
size_t starksim_noise_path_len(const struct StarksimNoisePath *path);

/**
 * Read sample `index` as `(t, phi, mu)`.
 * # Safety
 * `path` must be NULL or a live handle; `t`, `phi`, `mu` must be NULL or
 * valid writable doubles.
 */
enum StarksimStatus starksim_noise_path_sample(const struct StarksimNoisePath *path,
                                               size_t index,
                                               double *t,
                                               double *phi,
                                               double *mu);

/**
 * Release a trajectory handle. NULL is a no-op.
 * # Safety
 * `path` must be NULL or a handle not freed before; the handle is invalid
 * afterwards.
 */
void starksim_noise_path_free(struct StarksimNoisePath *path);

/**
 * The single-lattice Landau-Zener survival `1 - exp(-pi v0^2 / (2 f0))`.
 * # Safety
 * `out` must be NULL or a valid writable double.
 */
enum StarksimStatus starksim_lz_formula(double v0, double f0, double *out);

/**
 * Monte Carlo effective band gap `v0 <sqrt(2 (cos phi + 1))>` over
 * `phi ~ Normal(0, var_phi)`; writes the mean and the standard deviation
 * of the gap distribution.
 * # Safety
 * `mean` and `std` must be NULL or valid writable doubles.
 */
enum StarksimStatus starksim_effective_band_gap(double v0,
                                                double var_phi,
                                                uint64_t n_samples,
                                                uint64_t seed,
                                                double *mean,
                                                double *std);

/**
 * Noisy Landau-Zener survival estimate across the band edge: ensemble mean
 * and standard error of the tail-averaged survival over `n_realizations`
 * noise realizations.
 * # Safety
 * `mean` and `std` must be NULL or valid writable doubles.
 */
enum StarksimStatus starksim_lz_survival(double v0,
                                         double f0,
                                         double gamma,
                                         double omega0,
                                         double temperature,
                                         uint32_t n_realizations,
                                         uint64_t seed,
                                         double *mean,
                                         double *std);

/**
 * Run a full noise-ensemble propagation described by a flat
 * `key = value` config string and return its survival series handle.
 *
 * # Safety
 * `config_text` must point to a NUL-terminated string.
 */
enum StarksimStatus starksim_run_survival(const char *config_text,
                                          uint64_t seed,
                                          struct StarksimSurvivalSeries **out);

/**
 * Number of measurement points in a survival series; 0 for NULL.
 * # Safety
 * `series` must be NULL or a handle from `starksim_run_survival`.
 */
size_t starksim_survival_len(const struct StarksimSurvivalSeries *series);

/**
 * Read measurement `index` as `(t, p_sur, std)`; `std` is the standard
 * error of the ensemble mean (0 when the series is a single run).
 * # Safety
 * `series` must be NULL or a live handle; `t`, `p_sur`, `std` must be NULL
 * or valid writable doubles.
 */
enum StarksimStatus starksim_survival_point(const struct StarksimSurvivalSeries *series,
                                            size_t index,
                                            double *t,
                                            double *p_sur,
                                            double *std);

/**
 * Release a survival-series handle. NULL is a no-op.
 * # Safety
 * `series` must be NULL or a handle not freed before; the handle is
 * invalid afterwards.
 */
void starksim_survival_free(struct StarksimSurvivalSeries *series);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STARKSIM_H */
