#ifndef SEAHAUL_H
#define SEAHAUL_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SeahaulStatus {
  SEAHAUL_STATUS_OK = 0,
  SEAHAUL_STATUS_NULL_POINTER = 1,
  SEAHAUL_STATUS_INVALID_ARGUMENT = 2,
  SEAHAUL_STATUS_INVALID_UTF8 = 3,
  SEAHAUL_STATUS_CONFIG = 4,
  SEAHAUL_STATUS_DEGENERATE = 5,
  SEAHAUL_STATUS_NON_FINITE = 6,
  SEAHAUL_STATUS_IO = 7,
  SEAHAUL_STATUS_BUFFER_TOO_SMALL = 8,
  SEAHAUL_STATUS_FINISHED = 9,
  SEAHAUL_STATUS_PANIC = 10,
} SeahaulStatus;

typedef enum SeahaulPhase {
  SEAHAUL_PHASE_TAKE_OFF = 0,
  SEAHAUL_PHASE_SEARCH = 1,
  SEAHAUL_PHASE_LAND = 2,
  SEAHAUL_PHASE_ADSORB = 3,
  SEAHAUL_PHASE_RETURN = 4,
  SEAHAUL_PHASE_DONE = 5,
  SEAHAUL_PHASE_ABORTED = 6,
} SeahaulPhase;

/**
 * A simulated mission with the full onboard stack.
 */
typedef struct SeahaulRun SeahaulRun;

/**
 * One control tick as seen from outside.
 */
typedef struct SeahaulTick {
  double t;
  uint32_t phase;
  /**
   * True position in the world frame.
   */
  double truth[3];
  double true_yaw;
  /**
   * Nonzero when `estimate` holds a fused pose.
   */
  uint8_t has_estimate;
  double estimate[3];
  /**
   * Commanded body velocity and yaw rate.
   */
  double command[4];
} SeahaulTick;

typedef struct SeahaulWaypoint {
  double x;
  double y;
  double z;
  double yaw;
} SeahaulWaypoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next seahaul call on the same thread.
 */
const char *seahaul_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *seahaul_version(void);

/**
 * Creates a mission. `scenario_json` may be null for the competition
 * replica scenario.
 *
 * # Safety
 * `scenario_json` must be null or a valid NUL-terminated string. `out` must
 * be valid for writes.
 */
enum SeahaulStatus seahaul_run_new(const char *scenario_json,
                                   uint64_t seed,
                                   struct SeahaulRun **out);

/**
 * # Safety
 * `run` must be null or a handle from [`seahaul_run_new`] not yet freed.
 */
void seahaul_run_free(struct SeahaulRun *run);

/**
 * Advances one control tick. Returns `Finished` without stepping once the
 * mission is done or aborted. `tick` may be null.
 *
 * # Safety
 * `run` must be a live handle and `tick` null or valid for writes.
 */
enum SeahaulStatus seahaul_run_step(struct SeahaulRun *run, struct SeahaulTick *tick);

/**
 * Steps until the mission finishes.
 *
 * # Safety
 * `run` must be a live handle.
 */
enum SeahaulStatus seahaul_run_to_end(struct SeahaulRun *run);

/**
 * # Safety
 * `run` must be a live handle and `phase` valid for writes.
 */
enum SeahaulStatus seahaul_run_phase(const struct SeahaulRun *run, enum SeahaulPhase *phase);

/**
 * Writes the run summary as a JSON string. Release it with
 * [`seahaul_string_free`].
 *
 * # Safety
 * `run` must be a live handle and `json` valid for writes.
 */
enum SeahaulStatus seahaul_run_summary_json(const struct SeahaulRun *run, char **json);

/**
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void seahaul_string_free(char *s);

/**
 * Spiral search waypoints over a deck. When `capacity` is too small the
 * required count is still written to `count` and `BufferTooSmall` is
 * returned.
 *
 * # Safety
 * `out` must be valid for `capacity` writes (may be null when `capacity`
 * is 0) and `count` valid for one write.
 */
enum SeahaulStatus seahaul_plan_search(double center_x,
                                       double center_y,
                                       double deck_yaw,
                                       double size_x,
                                       double size_y,
                                       double deck_height,
                                       double altitude,
                                       double v_fov,
                                       double h_fov,
                                       struct SeahaulWaypoint *out,
                                       size_t capacity,
                                       size_t *count);

/**
 * Least-squares position from ranges to `n` anchors given as packed xyz
 * triples.
 *
 * # Safety
 * `anchors` must hold `3 * n` values, `ranges` `n` values and `position`
 * room for 3.
 */
enum SeahaulStatus seahaul_multilaterate(const double *anchors,
                                         const double *ranges,
                                         size_t n,
                                         double *position);

/**
 * Attachment test on rotor speed samples (4 per sample, packed). Writes 1
 * to `attached` when the post-adsorption load exceeds the pre-landing load
 * by more than `delta`.
 *
 * # Safety
 * `pre` and `post` must hold `4 * pre_len` and `4 * post_len` values and
 * `attached` must be valid for one write.
 */
enum SeahaulStatus seahaul_attachment_check(const double *pre,
                                            size_t pre_len,
                                            const double *post,
                                            size_t post_len,
                                            double delta,
                                            uint8_t *attached);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEAHAUL_H */
