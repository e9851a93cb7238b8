#ifndef POLYMOMENT_H
#define POLYMOMENT_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum {
  PM_STATUS_OK = 0,
  PM_STATUS_NULL_POINTER = 1,
  PM_STATUS_INVALID_ARGUMENT = 2,
  PM_STATUS_UTF8_ERROR = 3,
  PM_STATUS_NUMERICAL_ERROR = 4,
  PM_STATUS_VALIDATION_FAILED = 5,
  PM_STATUS_PANIC = 6,
} PmStatus;

/**
 * Payoff selector for the pricing calls.
 */
typedef enum {
  PM_PAYOFF_KIND_CALL = 0,
  PM_PAYOFF_KIND_PUT = 1,
} PmPayoffKind;

/**
 * Library context: run configuration plus the OU process built from it.
 */
typedef struct PmContext PmContext;

/**
 * A forward curve resampled onto the context grid.
 */
typedef struct PmCurve PmCurve;

/**
 * Pricing diagnostics mirrored into plain C fields.
 */
typedef struct {
  double bernstein_sup_error;
  double basis_agreement_residual;
  double domain_exit_prob;
  /**
   * 1 when the forward evaluation extrapolated beyond the grid.
   */
  uint8_t extrapolated;
} PmPriceDiagnostics;

/**
 * Verdicts of the non-commutative counterexample.
 */
typedef struct {
  /**
   * 1 when a·e₁₂ = e₂₁ is inconsistent (the process is not polynomial).
   */
  uint8_t part1_inconsistent;
  /**
   * Least-squares Frobenius residual of that system.
   */
  double part1_residual;
  /**
   * Row-major closed form of D²f(y)(e₁₁,e₂₂).
   */
  double d2_closed_form[4];
  /**
   * 1 when the generalized-quadratic second derivative vanishes.
   */
  uint8_t d2_generalized_quadratic_zero;
  /**
   * 1 when the two disagree (the process is not generalized polynomial).
   */
  uint8_t part2_contradiction;
} PmCounterexampleVerdict;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version string of the library; static storage, do not free.
 */
const char *pm_version(void);

/**
 * Message of the most recent failure on this thread; valid until the next
 * failing call. Do not free.
 */
const char *pm_last_error_message(void);

/**
 * Create a context with the default configuration.
 *
 * # Safety
 * `out` must be a valid pointer to a `PmContext*` slot.
 */
PmStatus pm_context_new_default(PmContext **out);

/**
 * Create a context from a JSON configuration document (strict: unknown
 * keys are rejected).
 *
 * # Safety
 * `json` must be a valid NUL-terminated string and `out` a valid slot.
 */
PmStatus pm_context_new_from_json(const char *json, PmContext **out);

/**
 * Release a context.
 *
 * # Safety
 * `ctx` must have been returned by a `pm_context_new_*` call and not yet
 * freed; a null pointer is ignored.
 */
void pm_context_free(PmContext *ctx);

/**
 * Number of grid nodes of the context (the length of curve value arrays).
 *
 * # Safety
 * `ctx` must be a live context handle; `out` a valid slot.
 */
PmStatus pm_context_grid_size(const PmContext *ctx, size_t *out);

/**
 * Wrap node values (length = grid size) as a forward curve.
 *
 * # Safety
 * `values` must point to `len` readable doubles; `out` must be valid.
 */
PmStatus pm_curve_from_values(const PmContext *ctx,
                              const double *values,
                              size_t len,
                              PmCurve **out);

/**
 * Load a forward curve from a CSV file (header `maturity,price`) and
 * resample it onto the context grid.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; `out` a valid slot.
 */
PmStatus pm_curve_from_csv(const PmContext *ctx, const char *path, PmCurve **out);

/**
 * Release a curve.
 *
 * # Safety
 * `curve` must have been returned by a `pm_curve_*` constructor and not yet
 * freed; a null pointer is ignored.
 */
void pm_curve_free(PmCurve *curve);

/**
 * Conditional moment E[X^k(t) | ℱ_s] of the forward curve observed at s,
 * written into `out_values` (length = grid size).
 *
 * # Safety
 * `ctx` and `curve` must be live handles; `out_values` must point to
 * `out_len` writable doubles.
 */
PmStatus pm_cond_moment_ou(const PmContext *ctx,
                           const PmCurve *curve,
                           uint32_t k,
                           double s,
                           double t,
                           double *out_values,
                           size_t out_len);

/**
 * Closed-form option price by the Bernstein-moment formula. `degree = 0`
 * uses the configured default; `domain_m ≤ 0` selects 4× the forward level
 * at the relevant maturity.
 *
 * # Safety
 * Handles must be live; `out_price` must be valid; `out_diagnostics` may be
 * null when the diagnostics are not wanted.
 */
PmStatus pm_price_option(const PmContext *ctx,
                         const PmCurve *curve,
                         PmPayoffKind kind,
                         double strike,
                         uint32_t degree,
                         double domain_m,
                         double s,
                         double t,
                         double x,
                         double *out_price,
                         PmPriceDiagnostics *out_diagnostics);

/**
 * Frozen-path Monte Carlo price of the exact payoff, with standard error.
 *
 * # Safety
 * Handles must be live; `out_price` and `out_se` must be valid pointers.
 */
PmStatus pm_price_mc(const PmContext *ctx,
                     const PmCurve *curve,
                     PmPayoffKind kind,
                     double strike,
                     uint32_t degree,
                     double domain_m,
                     double s,
                     double t,
                     double x,
                     size_t n_paths,
                     uint64_t seed,
                     double *out_price,
                     double *out_se);

/**
 * Run both parts of the non-commutative counterexample for a matrix Lévy
 * process with the given per-increment entry mean and variance.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
PmStatus pm_counterexample(double entry_mean, double entry_variance, PmCounterexampleVerdict *out);

/**
 * Even norm moment E‖X⊥(s;t)‖^{2k} of the OU convolution.
 *
 * # Safety
 * `ctx` must be live; `out` must be a valid pointer.
 */
PmStatus pm_norm_even_moment(const PmContext *ctx, uint32_t k, double s, double t, double *out);

/**
 * Run the full validation suite; `out_failures` receives the number of
 * failed gates. Returns `ValidationFailed` when any gate fails.
 *
 * # Safety
 * `ctx` must be live; `out_failures` may be null.
 */
PmStatus pm_validate(const PmContext *ctx, uint64_t seed, size_t *out_failures);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POLYMOMENT_H */
