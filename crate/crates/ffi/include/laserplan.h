#ifndef LASERPLAN_H
#define LASERPLAN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Bumped whenever a signature or struct layout in this file changes.
 */
#define LP_ABI_VERSION 1

typedef enum {
  LP_STATUS_OK = 0,
  LP_STATUS_NULL_POINTER = 1,
  LP_STATUS_INVALID_ARGUMENT = 2,
  LP_STATUS_INVALID_SCENARIO = 3,
  LP_STATUS_OUT_OF_RANGE = 4,
  LP_STATUS_EPISODE_OVER = 5,
  LP_STATUS_NOT_RESET = 6,
  LP_STATUS_BUFFER_TOO_SMALL = 7,
  LP_STATUS_PANIC = 99,
} LpStatus;

/**
 * Opaque environment handle.
 */
typedef struct LpEnv LpEnv;

/**
 * Vector lengths of an observation.
 */
typedef struct {
  size_t features;
  size_t context;
} LpObsDims;

/**
 * Outcome of one `lp_env_step`.
 */
typedef struct {
  double reward;
  bool terminated;
  bool truncated;
  bool accepted;
} LpStepResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

uint32_t lp_abi_version(void);

/**
 * Creates an environment for a builtin scenario name. Observations use the
 * feature encoding; `context` toggles the design-context vector.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
LpStatus lp_env_new_builtin(const char *name, bool context, LpEnv **out);

/**
 * Creates an environment from a scenario JSON document.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
LpStatus lp_env_new_json(const char *json, bool context, LpEnv **out);

/**
 * Releases a handle. Null is a no-op.
 *
 * # Safety
 * `env` must come from an `lp_env_new_*` call and not be freed twice.
 */
void lp_env_free(LpEnv *env);

/**
 * # Safety
 * `env` and `out` must be valid pointers.
 */
LpStatus lp_env_action_count(const LpEnv *env, size_t *out);

/**
 * # Safety
 * `env` and `out` must be valid pointers.
 */
LpStatus lp_env_obs_dims(const LpEnv *env, LpObsDims *out);

/**
 * Starts a new episode.
 *
 * # Safety
 * `env` must be a valid handle.
 */
LpStatus lp_env_reset(LpEnv *env, uint64_t seed);

/**
 * Applies one action id; `out` may be null when the result is not needed.
 *
 * # Safety
 * `env` must be a valid handle; `out` null or valid.
 */
LpStatus lp_env_step(LpEnv *env, int64_t action, LpStepResult *out);

/**
 * Copies the latest observation into caller buffers sized by `lp_env_obs_dims`.
 * Either buffer may be null to skip it.
 *
 * # Safety
 * Non-null buffers must hold at least the given number of floats.
 */
LpStatus lp_env_copy_obs(const LpEnv *env,
                         float *features,
                         size_t features_len,
                         float *context,
                         size_t context_len);

/**
 * FNV-1a hash of the current cell states.
 *
 * # Safety
 * `env` and `out` must be valid pointers.
 */
LpStatus lp_env_layout_hash(const LpEnv *env, uint64_t *out);

/**
 * Copies the calling thread's last error message, NUL-terminated and
 * truncated to `len - 1` bytes. Returns the full message length.
 *
 * # Safety
 * `buf` must be null or hold `len` bytes.
 */
size_t lp_last_error(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LASERPLAN_H */
