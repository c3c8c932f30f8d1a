#ifndef LINKFORGE_H
#define LINKFORGE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum LfStatus {
  LF_STATUS_OK = 0,
  LF_STATUS_NULL_POINTER = 1,
  LF_STATUS_INVALID_ARGUMENT = 2,
  LF_STATUS_CONFIG = 3,
  LF_STATUS_SOLVER = 4,
  LF_STATUS_NON_FINITE = 5,
  LF_STATUS_IO = 6,
  LF_STATUS_PANIC = 7,
} LfStatus;

typedef struct LfEnv LfEnv;

typedef struct LfModel LfModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length without the NUL.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t lf_last_error(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *lf_version(void);

// Load and validate a model file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum LfStatus lf_model_load(const char *path, struct LfModel **out);

// Parse and validate a model from a JSON string.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum LfStatus lf_model_from_json(const char *json, struct LfModel **out);

// # Safety
// `model` must be null or a handle from `lf_model_load`/`lf_model_from_json`
// that has not been freed.
void lf_model_free(struct LfModel *model);

// # Safety
// `model` must be a live handle.
size_t lf_model_num_joints(const struct LfModel *model);

// # Safety
// `model` must be a live handle.
size_t lf_model_num_actuators(const struct LfModel *model);

// Nominal kinematic configuration; writes `min(len, num_joints)` values.
//
// # Safety
// `model` must be a live handle; `out` must point to `len` writable doubles.
enum LfStatus lf_model_nominal(const struct LfModel *model, double *out, size_t len);

// Solve the passive angles of a named five-bar for inputs `theta1`, `theta4`,
// warm-started from the nominal pose. `out` receives theta2, theta3 and the
// closure residual norm.
//
// # Safety
// `model` must be a live handle, `mechanism` a NUL-terminated string and
// `out` must point to 3 writable doubles.
enum LfStatus lf_five_bar_solve(const struct LfModel *model,
                                const char *mechanism,
                                double theta1,
                                double theta4,
                                double *out);

// Create a batch of `n_envs` environments for `variant` ("simplified",
// "4-bar", "5-bar", "differential", "all"). `config_json` may be null for
// the default configuration; `seed` replaces its seed.
//
// # Safety
// `model` must be a live handle; string arguments NUL-terminated or null
// where allowed; `out` writable.
enum LfStatus lf_env_create(const struct LfModel *model,
                            const char *variant,
                            const char *config_json,
                            size_t n_envs,
                            uint64_t seed,
                            struct LfEnv **out);

// # Safety
// `env` must be null or a live handle from `lf_env_create`.
void lf_env_free(struct LfEnv *env);

// # Safety
// `env` must be a live handle.
size_t lf_env_num_envs(const struct LfEnv *env);

// # Safety
// `env` must be a live handle.
size_t lf_env_obs_len(const struct LfEnv *env);

// # Safety
// `env` must be a live handle.
size_t lf_env_num_actions(const struct LfEnv *env);

// Start a new episode in every environment. `obs` may be null; otherwise it
// receives `num_envs * obs_len` values and `obs_len` must equal that count.
//
// # Safety
// `env` must be a live handle; `obs` null or `obs_len` writable doubles.
enum LfStatus lf_env_reset(struct LfEnv *env, double *obs, size_t obs_len);

// Step every environment. `actions` holds `num_envs * num_actions` values.
// `obs`, `rewards` (`num_envs` doubles) and `dones` (`num_envs` bytes) may
// each be null.
//
// # Safety
// `env` must be a live handle and every non-null buffer sized as described.
enum LfStatus lf_env_step(struct LfEnv *env,
                          const double *actions,
                          size_t actions_len,
                          double *obs,
                          size_t obs_len,
                          double *rewards,
                          uint8_t *dones);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LINKFORGE_H */
