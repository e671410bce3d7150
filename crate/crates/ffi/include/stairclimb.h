#ifndef STAIRCLIMB_H
#define STAIRCLIMB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum ScStatus {
  SC_STATUS_OK = 0,
  SC_STATUS_NULL_POINTER = 1,
  SC_STATUS_INVALID_ARGUMENT = 2,
  SC_STATUS_IO = 3,
  SC_STATUS_BUFFER_TOO_SMALL = 4,
  SC_STATUS_PANIC = 5,
} ScStatus;

/**
 * How a step ended.
 */
typedef enum ScDone {
  SC_DONE_RUNNING = 0,
  SC_DONE_TIMEOUT = 1,
  SC_DONE_FALL = 2,
  SC_DONE_DIVERGED = 3,
} ScDone;

/**
 * A task environment on a fixed terrain.
 */
typedef struct ScEnv ScEnv;

/**
 * A policy loaded from a checkpoint.
 */
typedef struct ScPolicy ScPolicy;

typedef struct ScStep {
  double reward;
  double distance;
  enum ScDone done;
} ScStep;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Observation length.
 */
size_t sc_obs_dim(void);

/**
 * Action length.
 */
size_t sc_action_dim(void);

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to fit) and returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t sc_last_error(char *buf, size_t len);

/**
 * Creates an environment with default settings on `terrain` (`flat`,
 * `step:<height>` or `<kind>:<level>`) and resets it.
 *
 * # Safety
 * `terrain` must be a NUL-terminated string; `out` must be writable.
 */
enum ScStatus sc_env_new(const char *terrain, uint64_t seed, struct ScEnv **out);

/**
 * # Safety
 * `env` must be null or a handle from [`sc_env_new`] not yet freed.
 */
void sc_env_free(struct ScEnv *env);

/**
 * Starts a new episode.
 *
 * # Safety
 * `env` must be a live handle.
 */
enum ScStatus sc_env_reset(struct ScEnv *env);

/**
 * Sets the terrain-boolean observation (0 or 1).
 *
 * # Safety
 * `env` must be a live handle.
 */
enum ScStatus sc_env_set_terrain_bool(struct ScEnv *env, uint8_t value);

/**
 * Writes the current (noisy, delayed) observation into `obs[0..sc_obs_dim()]`.
 *
 * # Safety
 * `env` must be a live handle and `obs` must point to `len` writable doubles.
 */
enum ScStatus sc_env_observe(struct ScEnv *env, double *obs, size_t len);

/**
 * Advances one control tick with normalised actions in [-1, 1].
 *
 * # Safety
 * `env` must be a live handle, `action` must point to `len` doubles and `out` must be writable.
 */
enum ScStatus sc_env_step(struct ScEnv *env, const double *action, size_t len, struct ScStep *out);

/**
 * Loads the actor of a checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ScStatus sc_policy_load(const char *path, struct ScPolicy **out);

/**
 * # Safety
 * `policy` must be null or a handle from [`sc_policy_load`] not yet freed.
 */
void sc_policy_free(struct ScPolicy *policy);

/**
 * Mean action for one observation.
 *
 * # Safety
 * `policy` must be a live handle; `obs` must point to `obs_len` doubles and
 * `action` to `action_len` writable doubles.
 */
enum ScStatus sc_policy_act(struct ScPolicy *policy,
                            const double *obs,
                            size_t obs_len,
                            double *action,
                            size_t action_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STAIRCLIMB_H */
