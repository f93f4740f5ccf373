#ifndef REFCOND_H
#define REFCOND_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RcStatus {
  RC_STATUS_OK = 0,
  RC_STATUS_NULL_POINTER = 1,
  RC_STATUS_INVALID_ARGUMENT = 2,
  RC_STATUS_DIMENSION = 3,
  RC_STATUS_CONFIG = 4,
  RC_STATUS_NUMERICAL = 5,
  RC_STATUS_INFEASIBLE = 6,
  RC_STATUS_IO = 7,
  RC_STATUS_BUFFER_TOO_SMALL = 8,
  RC_STATUS_PANIC = 9,
} RcStatus;

typedef enum RcControllerKind {
  RC_CONTROLLER_KIND_NO_PREVIEW = 0,
  RC_CONTROLLER_KIND_AVERAGE_REF = 1,
  RC_CONTROLLER_KIND_REF_COND = 2,
  RC_CONTROLLER_KIND_PREVIEW = 3,
} RcControllerKind;

/*
 A condensation map `S` (or `S_W`) for one problem.
 */
typedef struct RcCondenser RcCondenser;

/*
 A receding-horizon controller that keeps its warm start between steps.
 */
typedef struct RcController RcController;

/*
 A tracking problem: model, weights, horizon and input bounds.
 */
typedef struct RcProblem RcProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Copies the last error message on this thread into `buf` (NUL-terminated,
 truncated to `len - 1` bytes) and returns the full message length.

 # Safety
 `buf` must be null or point to `len` writable bytes.
 */
size_t rc_last_error_message(char *buf, size_t len);

/*
 Parses a TOML problem description.

 # Safety
 `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum RcStatus rc_problem_from_toml(const char *toml, struct RcProblem **out);

/*
 Builds a problem from row-major matrices `A (nx x nx)`, `B (nx x nu)`,
 `C (nr x nx)`, `Q (nr x nr)`, `R (nu x nu)` and per-input bounds (which may
 be infinite; pass null for unbounded).

 # Safety
 Every non-null pointer must reference the stated number of doubles.
 */
enum RcStatus rc_problem_new(size_t nx,
                             size_t nu,
                             size_t nr,
                             const double *a,
                             const double *b,
                             const double *c,
                             double ts,
                             const double *q,
                             const double *r,
                             size_t horizon,
                             const double *u_min,
                             const double *u_max,
                             struct RcProblem **out);

/*
 # Safety
 `problem` must be null or a handle from this library, not yet freed.
 */
void rc_problem_free(struct RcProblem *problem);

/*
 # Safety
 `problem` must be a live handle; output pointers may be null.
 */
enum RcStatus rc_problem_dims(const struct RcProblem *problem,
                              size_t *nx,
                              size_t *nu,
                              size_t *nr,
                              size_t *horizon);

/*
 Writes `Fx` (`N nu x nx`) and `Fr` (`N nu x N nr`) row-major; either
 output may be null to skip it.

 # Safety
 `problem` must be a live handle; non-null buffers must hold the given lengths.
 */
enum RcStatus rc_problem_gains(const struct RcProblem *problem,
                               double *fx,
                               size_t fx_len,
                               double *fr,
                               size_t fr_len);

/*
 Closed-loop ISE of `kind` on the problem's configured reference signal.

 # Safety
 `problem` must be a live handle; `ise` must be writable.
 */
enum RcStatus rc_problem_simulate_ise(const struct RcProblem *problem,
                                      enum RcControllerKind kind,
                                      double rho,
                                      double t_final,
                                      double *ise);

/*
 Builds `S_W` with first-block weight `rho`, or the unweighted `S` when
 `rho == 0`.

 # Safety
 `problem` must be a live handle; `out` must be writable.
 */
enum RcStatus rc_condenser_new(const struct RcProblem *problem,
                               double rho,
                               struct RcCondenser **out);

/*
 # Safety
 `condenser` must be null or a live handle.
 */
void rc_condenser_free(struct RcCondenser *condenser);

/*
 Writes `S` (`nr x N nr`) row-major and reports whether `Fr I` had full
 column rank (1) or not (0).

 # Safety
 `condenser` must be a live handle; `s` must hold `len` doubles; `rank_ok` may be null.
 */
enum RcStatus rc_condenser_matrix(const struct RcCondenser *condenser,
                                  double *s,
                                  size_t len,
                                  int *rank_ok);

/*
 `setpoint = S window`.

 # Safety
 `window` must hold `window_len` doubles and `setpoint` `setpoint_len`.
 */
enum RcStatus rc_condenser_apply(const struct RcCondenser *condenser,
                                 const double *window,
                                 size_t window_len,
                                 double *setpoint,
                                 size_t setpoint_len);

/*
 Controller using the problem's model, weights, horizon and input bounds.
 `rho` selects the condensation for `RefCond` (0 for unweighted).

 # Safety
 `problem` must be a live handle; `out` must be writable.
 */
enum RcStatus rc_controller_new(const struct RcProblem *problem,
                                enum RcControllerKind kind,
                                double rho,
                                struct RcController **out);

/*
 # Safety
 `controller` must be null or a live handle.
 */
void rc_controller_free(struct RcController *controller);

/*
 Clears the warm start.

 # Safety
 `controller` must be a live handle.
 */
enum RcStatus rc_controller_reset(struct RcController *controller);

/*
 Solves the MPC problem at state `x` given the current reference sample
 and the preview window `(r_{k+1}, ..., r_{k+N})`, and writes `u_0`.

 # Safety
 Each buffer must hold its stated length.
 */
enum RcStatus rc_controller_step(struct RcController *controller,
                                 const double *x,
                                 size_t x_len,
                                 const double *current,
                                 size_t current_len,
                                 const double *window,
                                 size_t window_len,
                                 double *u,
                                 size_t u_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REFCOND_H */
