#ifndef CARNOT_HEAT_H
#define CARNOT_HEAT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum CarnotStatus {
  CARNOT_STATUS_OK = 0,
  CARNOT_STATUS_NULL_POINTER = 1,
  CARNOT_STATUS_INVALID_ARGUMENT = 2,
  CARNOT_STATUS_CONFIG = 3,
  CARNOT_STATUS_PRECONDITION = 4,
  CARNOT_STATUS_INFEASIBLE = 5,
  CARNOT_STATUS_SINGULAR_COEFFICIENT = 6,
  CARNOT_STATUS_BLOW_UP = 7,
  CARNOT_STATUS_MAX_STEPS_EXHAUSTED = 8,
  CARNOT_STATUS_IO = 9,
  CARNOT_STATUS_OUT_OF_RANGE = 10,
  CARNOT_STATUS_PANIC = 11,
} CarnotStatus;

/**
 * Parsed run configuration.
 */
typedef struct CarnotConfig CarnotConfig;

/**
 * Problem instance together with its solver settings.
 */
typedef struct CarnotSpec CarnotSpec;

/**
 * Recorded states of one run.
 */
typedef struct CarnotTrajectory CarnotTrajectory;

/**
 * Outcome of evolving `scale·u0` and `u0` side by side.
 */
typedef struct CarnotCompareReport {
  double max_violation;
  double violation_time;
  double tolerance;
  double sup_v;
  bool ordered;
} CarnotCompareReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library from the same thread.
 */
const char *carnot_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *carnot_version(void);

/**
 * Parse configuration text. Relative paths inside resolve against the
 * current directory.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum CarnotStatus carnot_config_parse(const char *text, struct CarnotConfig **out);

/**
 * Load a configuration file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum CarnotStatus carnot_config_from_file(const char *path, struct CarnotConfig **out);

/**
 * # Safety
 * `cfg` must come from a `carnot_config_*` constructor, or be null.
 */
void carnot_config_free(struct CarnotConfig *cfg);

/**
 * Build the problem described by `cfg`, with the mesh halved `refine` times
 * and `seed` used by random initial data.
 *
 * # Safety
 * `cfg` must be a live config handle and `out` a valid pointer.
 */
enum CarnotStatus carnot_spec_build(const struct CarnotConfig *cfg,
                                    uint32_t refine,
                                    uint64_t seed,
                                    struct CarnotSpec **out);

/**
 * # Safety
 * `spec` must come from [`carnot_spec_build`], or be null.
 */
void carnot_spec_free(struct CarnotSpec *spec);

/**
 * Number of grid nodes, i.e. the length of every state vector.
 *
 * # Safety
 * `spec` must be a live spec handle or null (yields 0).
 */
size_t carnot_spec_node_count(const struct CarnotSpec *spec);

/**
 * Integrate to the horizon. A blow-up still produces a trajectory; query
 * it with [`carnot_trajectory_blew_up`].
 *
 * # Safety
 * `spec` must be a live spec handle and `out` a valid pointer.
 */
enum CarnotStatus carnot_solve(const struct CarnotSpec *spec, struct CarnotTrajectory **out);

/**
 * # Safety
 * `traj` must come from [`carnot_solve`], or be null.
 */
void carnot_trajectory_free(struct CarnotTrajectory *traj);

/**
 * Number of recorded states.
 *
 * # Safety
 * `traj` must be a live trajectory handle or null (yields 0).
 */
size_t carnot_trajectory_len(const struct CarnotTrajectory *traj);

/**
 * # Safety
 * `traj` must be a live trajectory handle or null (yields false).
 */
bool carnot_trajectory_blew_up(const struct CarnotTrajectory *traj);

/**
 * Time stamp of recorded state `k`.
 *
 * # Safety
 * `traj` must be a live trajectory handle and `time` a valid pointer.
 */
enum CarnotStatus carnot_trajectory_time(const struct CarnotTrajectory *traj,
                                         size_t k,
                                         double *time);

/**
 * Copy recorded state `k` into `buf`, which must hold `len` values with
 * `len` equal to the node count.
 *
 * # Safety
 * `traj` must be a live trajectory handle and `buf` valid for `len` writes.
 */
enum CarnotStatus carnot_trajectory_state(const struct CarnotTrajectory *traj,
                                          size_t k,
                                          double *buf,
                                          size_t len);

/**
 * Evolve `scale·u0` and `u0` in lockstep and report the largest excess
 * of the first over the second. `scale` must lie in `(0, 1]`.
 *
 * # Safety
 * `spec` must be a live spec handle and `out` a valid pointer.
 */
enum CarnotStatus carnot_compare_scaled(const struct CarnotSpec *spec,
                                        double scale,
                                        struct CarnotCompareReport *out);

/**
 * Barrier rate `sigma` and level `l` for the given exponents, horizontal
 * dimension `n1`, inner radius `eps` and radius `r_prime`.
 *
 * # Safety
 * `sigma` and `l` must be valid pointers.
 */
enum CarnotStatus carnot_barrier_params(double p,
                                        double q,
                                        double beta,
                                        size_t n1,
                                        double eps,
                                        double r_prime,
                                        double *sigma,
                                        double *l);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CARNOT_HEAT_H */
