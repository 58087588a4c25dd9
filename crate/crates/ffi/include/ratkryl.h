#ifndef RATKRYL_H
#define RATKRYL_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RkStatus {
  RK_STATUS_OK = 0,
  RK_STATUS_NULL_POINTER = 1,
  RK_STATUS_INVALID_ARGUMENT = 2,
  RK_STATUS_UNKNOWN_PROBLEM = 3,
  RK_STATUS_BUFFER_TOO_SMALL = 4,
  RK_STATUS_SOLVER_FAILED = 5,
  RK_STATUS_PANIC = 6,
} RkStatus;

typedef enum RkMethod {
  RK_METHOD_CGNE = 0,
  RK_METHOD_LANCZOS_KR = 1,
  RK_METHOD_RATIONAL_CG = 2,
} RkMethod;

typedef enum RkAlphaKind {
  /**
   * `α_k = 10^{-(k+1)}`.
   */
  RK_ALPHA_KIND_PAPER_DEFAULT = 0,
  /**
   * `α_k = a·q^{s−k}`.
   */
  RK_ALPHA_KIND_GEOMETRIC = 1,
  /**
   * `values[0..n_values]`.
   */
  RK_ALPHA_KIND_EXPLICIT = 2,
} RkAlphaKind;

typedef enum RkStopReason {
  RK_STOP_REASON_DISCREPANCY = 0,
  RK_STOP_REASON_BUDGET = 1,
  RK_STOP_REASON_BREAKDOWN = 2,
  RK_STOP_REASON_STAGNATION = 3,
  RK_STOP_REASON_ORACLE_BEST = 4,
} RkStopReason;

/**
 * A test problem: operator, exact solution and exact data.
 */
typedef struct RkProblem RkProblem;

/**
 * Iteration history of one solver run.
 */
typedef struct RkTrace RkTrace;

/**
 * Shift schedule for the rational steps.
 */
typedef struct RkAlphas {
  enum RkAlphaKind kind;
  double a;
  double q;
  int32_t s;
  const double *values;
  size_t n_values;
} RkAlphas;

/**
 * Stops at `n_max`, or earlier once `‖Ax − y‖ ≤ tau·delta_abs` when
 * `use_discrepancy` is set.
 */
typedef struct RkStopping {
  size_t n_max;
  bool use_discrepancy;
  double tau;
  double delta_abs;
} RkStopping;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next library call on the same thread.
 */
const char *rk_last_error_message(void);

/**
 * Builds one of the named test problems (`deriv2`, `shaw`, `phillips`,
 * `gravity`) of size `n`.
 *
 * # Safety
 * `name` must be a nul-terminated string; `out` must be writable.
 */
enum RkStatus rk_problem_make(const char *name, size_t n, struct RkProblem **out);

/**
 * Builds a problem from a row-major `rows × cols` matrix and an exact
 * solution of length `cols`; the data is `A·x_exact`.
 *
 * # Safety
 * `a` must hold `rows·cols` doubles and `x_exact` `cols` doubles.
 */
enum RkStatus rk_problem_from_dense(size_t rows,
                                    size_t cols,
                                    const double *a,
                                    const double *x_exact,
                                    struct RkProblem **out);

/**
 * Replaces the exact solution by `AᵀA·x_exact` in a new handle.
 *
 * # Safety
 * `problem` must be a live handle; `out` must be writable.
 */
enum RkStatus rk_problem_smooth(const struct RkProblem *problem, struct RkProblem **out);

/**
 * Number of rows of the operator, or 0 for a null handle.
 *
 * # Safety
 * `problem` must be null or a live handle.
 */
size_t rk_problem_rows(const struct RkProblem *problem);

/**
 * Number of columns of the operator, or 0 for a null handle.
 *
 * # Safety
 * `problem` must be null or a live handle.
 */
size_t rk_problem_cols(const struct RkProblem *problem);

/**
 * Copies the exact data (`rows` values).
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum RkStatus rk_problem_copy_y(const struct RkProblem *problem, double *buf, size_t len);

/**
 * Copies the exact solution (`cols` values).
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum RkStatus rk_problem_copy_x_exact(const struct RkProblem *problem, double *buf, size_t len);

/**
 * Writes noisy data with `‖y_δ − y‖ = delta_rel·‖y‖` to `y_out` and the
 * absolute noise level to `delta_abs` (may be null). Deterministic in `seed`.
 *
 * # Safety
 * `y_out` must hold `len` doubles.
 */
enum RkStatus rk_problem_add_noise(const struct RkProblem *problem,
                                   double delta_rel,
                                   uint64_t seed,
                                   double *y_out,
                                   size_t len,
                                   double *delta_abs);

/**
 * # Safety
 * `problem` must be null or a handle not yet freed.
 */
void rk_problem_free(struct RkProblem *problem);

/**
 * Runs an iterative solver on `y` (the exact data when `y` is null).
 * `alphas` may be null for the default schedule; it is ignored by CGNE.
 *
 * # Safety
 * Pointers must be null or valid as described; `y` must hold `y_len` doubles.
 */
enum RkStatus rk_solve(const struct RkProblem *problem,
                       enum RkMethod method,
                       const double *y,
                       size_t y_len,
                       const struct RkAlphas *alphas,
                       const struct RkStopping *stop,
                       struct RkTrace **out);

/**
 * Tikhonov solution `(AᵀA + αI)⁻¹Aᵀy` written to `x_out` (`cols` values).
 *
 * # Safety
 * `y` must hold `y_len` doubles (or be null); `x_out` must hold `len` doubles.
 */
enum RkStatus rk_tikhonov(const struct RkProblem *problem,
                          const double *y,
                          size_t y_len,
                          double alpha,
                          double *x_out,
                          size_t len);

/**
 * Number of recorded iterations, or 0 for a null handle.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
size_t rk_trace_len(const struct RkTrace *trace);

/**
 * # Safety
 * `trace` must be a live handle; `out` must be writable.
 */
enum RkStatus rk_trace_stop_reason(const struct RkTrace *trace, enum RkStopReason *out);

/**
 * Iteration index `n` (1-based) of the reported solution, or 0 for a null handle.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
size_t rk_trace_selected_n(const struct RkTrace *trace);

/**
 * Copies `‖Ax_n − y‖` for every recorded iteration.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum RkStatus rk_trace_copy_residuals(const struct RkTrace *trace, double *buf, size_t len);

/**
 * Copies the reported solution (`cols` values).
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum RkStatus rk_trace_copy_x(const struct RkTrace *trace, double *buf, size_t len);

/**
 * # Safety
 * `trace` must be null or a handle not yet freed.
 */
void rk_trace_free(struct RkTrace *trace);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RATKRYL_H */
