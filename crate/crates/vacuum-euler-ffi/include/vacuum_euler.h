/* C interface to the vacuum-euler moving-domain gas simulator. */

#ifndef VACUUM_EULER_H
#define VACUUM_EULER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Which per-node array to copy out of a state.
 */
typedef enum {
  VE_FIELD_NODES = 0,
  VE_FIELD_Q = 1,
  VE_FIELD_V = 2,
  VE_FIELD_SIGMA = 3,
} VeField;

/**
 * Status code returned by every fallible entry point.
 */
typedef enum {
  VE_STATUS_OK = 0,
  VE_STATUS_NULL_POINTER = 1,
  VE_STATUS_INVALID_ARGUMENT = 2,
  VE_STATUS_FOLDED_FLOW = 3,
  VE_STATUS_CONTINUATION_VIOLATION = 4,
  VE_STATUS_UNSUPPORTED = 5,
  VE_STATUS_PANIC = 6,
} VeStatus;

/**
 * Opaque snapshot handle.
 */
typedef struct VeState VeState;

/**
 * Opaque recorded-run handle.
 */
typedef struct VeTrajectory VeTrajectory;

/**
 * Scalar diagnostics of one state (second-order energy at level 1).
 */
typedef struct {
  double e_phys;
  double entropy_mass;
  double e2_high;
  double e2_low;
  double a_star;
  double b_control;
  double c_min;
} VeEnergyReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the most recent error message for this thread into `buf` as a
 * NUL-terminated string, truncating to `cap` bytes. Returns the full
 * message length in bytes (excluding the terminator), which may exceed
 * `cap`; call with a null `buf` to query the needed size.
 *
 * # Safety
 * `buf` must be null or valid for writes of `cap` bytes.
 */
size_t ve_last_error_message(char *buf, size_t cap);

/**
 * Builds the parabolic profile state `q = b (r^2 - x^2)`, `v = a x`,
 * `sigma = sigma_bar` on a fresh uniform grid of `node_count` nodes.
 *
 * # Safety
 * `out` must be a valid pointer; on success it receives an owned handle
 * that must be released with `ve_state_free`.
 */
VeStatus ve_state_affine(double a,
                         double b,
                         double r,
                         double sigma_bar,
                         double beta,
                         size_t node_count,
                         VeState **out);

/**
 * Builds a state from caller-provided arrays of length `len`. `nodes`
 * must be strictly increasing, `q` nonnegative with zero endpoints, and
 * `sigma` strictly positive.
 *
 * # Safety
 * `nodes`, `q`, `v`, `sigma` must be valid for reads of `len` doubles;
 * `out` must be valid; the returned handle must be released with
 * `ve_state_free`.
 */
VeStatus ve_state_from_arrays(const double *nodes,
                              const double *q,
                              const double *v,
                              const double *sigma,
                              size_t len,
                              double beta,
                              VeState **out);

/**
 * Releases a state handle. Null is a no-op.
 *
 * # Safety
 * `state` must be null or a handle produced by this library and not yet
 * freed.
 */
void ve_state_free(VeState *state);

/**
 * Number of grid nodes, or 0 for a null handle.
 *
 * # Safety
 * `state` must be null or a live handle.
 */
size_t ve_state_len(const VeState *state);

/**
 * Writes the domain endpoints.
 *
 * # Safety
 * `state` must be a live handle; `lo` and `hi` must be valid for writes.
 */
VeStatus ve_state_domain(const VeState *state, double *lo, double *hi);

/**
 * Copies one per-node array into `buf`, which must hold exactly
 * `ve_state_len(state)` doubles.
 *
 * # Safety
 * `state` must be a live handle; `buf` must be valid for writes of `len`
 * doubles.
 */
VeStatus ve_state_field(const VeState *state, VeField field, double *buf, size_t len);

/**
 * Fills the scalar diagnostics of a state.
 *
 * # Safety
 * `state` must be a live handle; `report` must be valid for writes.
 */
VeStatus ve_state_energy(const VeState *state, VeEnergyReport *report);

/**
 * Runs the explicit stepper from `initial` up to `t_final` with step
 * `eps`, resampling onto `uniform_count` nodes after each step. A run cut
 * short by the continuation criterion still succeeds; inspect
 * `ve_trajectory_violation`.
 *
 * # Safety
 * `initial` must be a live handle; `out` must be valid; the returned
 * handle must be released with `ve_trajectory_free`.
 */
VeStatus ve_simulate(const VeState *initial,
                     double t_final,
                     double eps,
                     size_t uniform_count,
                     VeTrajectory **out);

/**
 * Releases a trajectory handle. Null is a no-op.
 *
 * # Safety
 * `traj` must be null or a handle produced by this library and not yet
 * freed.
 */
void ve_trajectory_free(VeTrajectory *traj);

/**
 * Number of stored snapshots, or 0 for a null handle.
 *
 * # Safety
 * `traj` must be null or a live handle.
 */
size_t ve_trajectory_snapshot_count(const VeTrajectory *traj);

/**
 * Writes the time of snapshot `idx`.
 *
 * # Safety
 * `traj` must be a live handle; `t` must be valid for writes.
 */
VeStatus ve_trajectory_time(const VeTrajectory *traj, size_t idx, double *t);

/**
 * Copies snapshot `idx` into a fresh state handle.
 *
 * # Safety
 * `traj` must be a live handle; `out` must be valid; the returned handle
 * must be released with `ve_state_free`.
 */
VeStatus ve_trajectory_state(const VeTrajectory *traj, size_t idx, VeState **out);

/**
 * Returns 1 and fills the outputs (when non-null) if the run was
 * truncated by the continuation criterion, else returns 0.
 *
 * # Safety
 * `traj` must be a live handle; `t`, `c`, `threshold` must each be null
 * or valid for writes.
 */
int32_t ve_trajectory_violation(const VeTrajectory *traj, double *t, double *c, double *threshold);

/**
 * Evaluates the full and reduced distance functionals of two states over
 * their common support.
 *
 * # Safety
 * `s1` and `s2` must be live handles; `d_full` and `d_reduced` must be
 * valid for writes.
 */
VeStatus ve_distance(const VeState *s1, const VeState *s2, double *d_full, double *d_reduced);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* VACUUM_EULER_H */
