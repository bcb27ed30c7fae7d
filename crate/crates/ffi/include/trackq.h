/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef TRACKQ_H
#define TRACKQ_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TrackqStatus {
  TRACKQ_STATUS_OK = 0,
  TRACKQ_STATUS_NULL_POINTER = 1,
  TRACKQ_STATUS_INVALID_ARGUMENT = 2,
  TRACKQ_STATUS_NO_BRACKET = 3,
  TRACKQ_STATUS_DOMAIN = 4,
  TRACKQ_STATUS_SINGULAR = 5,
  TRACKQ_STATUS_BUFFER_TOO_SMALL = 6,
  TRACKQ_STATUS_INTERNAL = 7,
} TrackqStatus;

/**
 * Exploratory constants at a fixed temperature.
 */
typedef struct TrackqExploratory TrackqExploratory;

/**
 * Market parameters with their classical solution.
 */
typedef struct TrackqModel TrackqModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length excluding the NUL.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t trackq_last_error_message(char *buf, size_t len);

/**
 * Builds a model with `dim` assets. `sigma` is row-major `dim × dim`.
 *
 * # Safety
 * `mu` and `eta` must point to `dim` values, `sigma` to `dim²` values, and
 * `out` must be writable.
 */
enum TrackqStatus trackq_model_new(size_t dim,
                                   const double *mu,
                                   const double *sigma,
                                   double sigma_z,
                                   double kappa,
                                   const double *eta,
                                   double rho,
                                   struct TrackqModel **out);

/**
 * # Safety
 * `model` must be null or a handle from [`trackq_model_new`] not yet freed.
 */
void trackq_model_free(struct TrackqModel *model);

/**
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum TrackqStatus trackq_model_dim(const struct TrackqModel *model, size_t *out);

/**
 * Root `λ ∈ (0, 1)` of the classical characteristic equation.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum TrackqStatus trackq_lambda(const struct TrackqModel *model, double *out);

/**
 * Classical value `u(y)`.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum TrackqStatus trackq_classical_value(const struct TrackqModel *model, double y, double *out);

/**
 * Classical feedback action at `y`, written to `out[0..dim]`.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for `len` values.
 */
enum TrackqStatus trackq_classical_policy(const struct TrackqModel *model,
                                          double y,
                                          double *out,
                                          size_t len);

/**
 * Exploratory constants at temperature `gamma`.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum TrackqStatus trackq_exploratory_new(const struct TrackqModel *model,
                                         double gamma,
                                         struct TrackqExploratory **out);

/**
 * # Safety
 * `handle` must be null or a handle from [`trackq_exploratory_new`] not yet
 * freed.
 */
void trackq_exploratory_free(struct TrackqExploratory *handle);

/**
 * Scalar constants `ξ*` and `ψ3*`.
 *
 * # Safety
 * `handle` must be live; `xi` and `psi3` writable.
 */
enum TrackqStatus trackq_exploratory_scalars(const struct TrackqExploratory *handle,
                                             double *xi,
                                             double *psi3);

/**
 * `ψ1*` into `out[0..dim]`.
 *
 * # Safety
 * `handle` must be live and `out` valid for `len` values.
 */
enum TrackqStatus trackq_exploratory_psi1(const struct TrackqExploratory *handle,
                                          double *out,
                                          size_t len);

/**
 * `ψ2*` row-major into `out[0..dim²]`.
 *
 * # Safety
 * `handle` must be live and `out` valid for `len` values.
 */
enum TrackqStatus trackq_exploratory_psi2(const struct TrackqExploratory *handle,
                                          double *out,
                                          size_t len);

/**
 * Exploratory value `v(y) = ln(1+y) + ξ*`.
 *
 * # Safety
 * `handle` must be live and `out` writable.
 */
enum TrackqStatus trackq_exploratory_value(const struct TrackqExploratory *handle,
                                           double y,
                                           double *out);

/**
 * Exact q-function at `(y, a)` with discount `rho`.
 *
 * # Safety
 * `handle` must be live, `a` valid for `len` values and `out` writable.
 */
enum TrackqStatus trackq_exact_q(const struct TrackqExploratory *handle,
                                 double rho,
                                 double y,
                                 const double *a,
                                 size_t len,
                                 double *out);

/**
 * Mean and covariance of the optimal Gaussian policy at `y`; `mean` gets
 * `dim` values and `cov` gets `dim²` row-major values.
 *
 * # Safety
 * `handle` must be live; `mean` valid for `mean_len` and `cov` for `cov_len`
 * values.
 */
enum TrackqStatus trackq_exploratory_policy(const struct TrackqExploratory *handle,
                                            double y,
                                            double *mean,
                                            size_t mean_len,
                                            double *cov,
                                            size_t cov_len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *trackq_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRACKQ_H */
