#ifndef FTLE_VERIFY_H
#define FTLE_VERIFY_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum FvStatus {
  FV_STATUS_OK = 0,
  FV_STATUS_NULL_POINTER = 1,
  FV_STATUS_INVALID_UTF8 = 2,
  FV_STATUS_INVALID_PARAMETER = 3,
  FV_STATUS_INVALID_LAYOUT = 4,
  FV_STATUS_UNKNOWN_RULE = 5,
  FV_STATUS_SHAPE_MISMATCH = 6,
  FV_STATUS_EMPTY_REGION = 7,
  FV_STATUS_IO = 8,
  FV_STATUS_PARSE = 9,
  FV_STATUS_INVARIANT = 10,
  FV_STATUS_BUFFER_TOO_SMALL = 11,
  FV_STATUS_PANIC = 12,
  FV_STATUS_OTHER = 13,
} FvStatus;

/**
 * A grid world.
 */
typedef struct FvGridWorld FvGridWorld;

/**
 * A deterministic policy bound to the shape of the world it was built for.
 */
typedef struct FvPolicy FvPolicy;

/**
 * Metric parameters. `t_escape` of 0 means four times `t_int`.
 */
typedef struct FvMetricParams {
  size_t t_int;
  double h;
  double alpha;
  size_t n_sim;
  size_t t_escape;
  uint64_t seed;
} FvMetricParams;

/**
 * MBR, ASAS and TASAS. Infinite ASAS/TASAS mean no mass reached the goal.
 */
typedef struct FvMetrics {
  double mbr;
  double asas;
  double tasas;
  double h_goal;
  size_t boundary_size;
  size_t peak_count;
} FvMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *fv_last_error(void);

/**
 * Library version, static.
 */
const char *fv_version(void);

/**
 * One of `simple_wall`, `scattered_blocks`, `u_shape_trap`.
 *
 * # Safety
 * `name` is a NUL-terminated string; `out` is writable.
 */
enum FvStatus fv_world_builtin(const char *name, struct FvGridWorld **out);

/**
 * A world from layout text (`#` obstacle, `.` free, `G` goal, `S` start).
 *
 * # Safety
 * `text` is a NUL-terminated string; `out` is writable.
 */
enum FvStatus fv_world_parse(const char *text, struct FvGridWorld **out);

/**
 * # Safety
 * `world` comes from this library, or is null.
 */
void fv_world_free(struct FvGridWorld *world);

/**
 * # Safety
 * `world` is a live handle; the out pointers are writable.
 */
enum FvStatus fv_world_shape(const struct FvGridWorld *world, size_t *rows, size_t *cols);

/**
 * Goal cell.
 *
 * # Safety
 * `world` is a live handle; the out pointers are writable.
 */
enum FvStatus fv_world_goal(const struct FvGridWorld *world, size_t *row, size_t *col);

/**
 * Scripted policy from a rule string such as `shortest-path`, `greedy`,
 * `constant:right` or `trap-cycle:5,1;6,1`.
 *
 * # Safety
 * `world` is a live handle; `rule` is a NUL-terminated string; `out` is writable.
 */
enum FvStatus fv_policy_scripted(const struct FvGridWorld *world,
                                 const char *rule,
                                 struct FvPolicy **out);

/**
 * Tabular policy from a checkpoint CSV, checked against the world.
 *
 * # Safety
 * `world` is a live handle; `path` is a NUL-terminated string; `out` is writable.
 */
enum FvStatus fv_policy_load(const struct FvGridWorld *world,
                             const char *path,
                             struct FvPolicy **out);

/**
 * # Safety
 * `policy` comes from this library, or is null.
 */
void fv_policy_free(struct FvPolicy *policy);

/**
 * Action index (0 up, 1 down, 2 left, 3 right) at a cell.
 *
 * # Safety
 * `policy` is a live handle; `action` is writable.
 */
enum FvStatus fv_policy_action(const struct FvPolicy *policy,
                               size_t row,
                               size_t col,
                               uint32_t *action);

/**
 * FTLE field in row-major order; masked cells are NaN. `len` must be at
 * least rows*cols.
 *
 * # Safety
 * Handles are live; `values` points to `len` writable doubles.
 */
enum FvStatus fv_ftle_field(const struct FvGridWorld *world,
                            const struct FvPolicy *policy,
                            size_t t_int,
                            double h,
                            double *values,
                            size_t len);

/**
 * Defaults: t_int 30, h 1, alpha 0.25, n_sim 100, t_escape 0, seed 0.
 */
struct FvMetricParams fv_metric_params_default(void);

/**
 * MBR, ASAS and TASAS from one start per free cell, against the world's goal.
 *
 * # Safety
 * Handles are live; `params` is readable and `out` writable.
 */
enum FvStatus fv_metrics(const struct FvGridWorld *world,
                         const struct FvPolicy *policy,
                         const struct FvMetricParams *params,
                         struct FvMetrics *out);

/**
 * Largest certified δ for a region with maximal FTLE `sigma_max`.
 *
 * # Safety
 * `delta` is writable.
 */
enum FvStatus fv_certify_delta(double sigma_max, size_t t_int, double epsilon, double *delta);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FTLE_VERIFY_H */
