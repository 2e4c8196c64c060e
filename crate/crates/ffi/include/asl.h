/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef ASL_H
#define ASL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AslStatus {
  ASL_STATUS_OK = 0,
  ASL_STATUS_NULL_POINTER = 1,
  ASL_STATUS_INVALID_ARGUMENT = 2,
  ASL_STATUS_SHAPE = 3,
  ASL_STATUS_DOMAIN = 4,
  ASL_STATUS_DEGENERATE = 5,
  ASL_STATUS_IO = 6,
  ASL_STATUS_CONFIG = 7,
  ASL_STATUS_CHECKPOINT = 8,
  ASL_STATUS_EPISODE_OVER = 9,
  ASL_STATUS_PANIC = 10,
  ASL_STATUS_OTHER = 11,
} AslStatus;

// An environment with its declared transforms.
typedef struct AslEnv AslEnv;

// The deterministic part of a trained policy plus its noise scale.
typedef struct AslPolicy AslPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length excluding the NUL,
// or 0 when there is no error.
size_t asl_last_error_message(char *buf, size_t len);

// Static name of a status code.
const char *asl_status_name(enum AslStatus status);

// Unperturbed environment by name: `"crawler"` or `"triangle"`.
enum AslStatus asl_env_new(const char *kind, struct AslEnv **out);

// Environment described by a scenario file, perturbation included.
enum AslStatus asl_env_from_scenario(const char *path, struct AslEnv **out);

void asl_env_free(struct AslEnv *env);

// Observation length, or 0 for NULL.
size_t asl_env_obs_dim(const struct AslEnv *env);

// Action length, or 0 for NULL.
size_t asl_env_act_dim(const struct AslEnv *env);

// Number of declared symmetry transforms, or 0 for NULL.
size_t asl_env_num_transforms(const struct AslEnv *env);

// Starts an episode toward `goal`; initial-state noise comes from `seed`.
enum AslStatus asl_env_reset(struct AslEnv *env,
                             size_t goal,
                             uint64_t seed,
                             double *obs_out,
                             size_t obs_len);

// Advances one step. `done` receives bit 0 for termination and bit 1 for
// truncation; after either, the episode must be reset.
enum AslStatus asl_env_step(struct AslEnv *env,
                            const double *action,
                            size_t act_len,
                            double *obs_out,
                            size_t obs_len,
                            double *reward,
                            uint32_t *done);

// Applies transform `j` to a state.
enum AslStatus asl_env_transform_state(const struct AslEnv *env,
                                       size_t j,
                                       const double *state,
                                       double *out,
                                       size_t len);

// Applies the declared action map of transform `j`.
enum AslStatus asl_env_transform_action(const struct AslEnv *env,
                                        size_t j,
                                        const double *action,
                                        double *out,
                                        size_t len);

// Policy stored in a training checkpoint.
enum AslStatus asl_policy_load(const char *path, struct AslPolicy **out);

void asl_policy_free(struct AslPolicy *policy);

// Deterministic action (the Gaussian mean) for one observation.
enum AslStatus asl_policy_mean(const struct AslPolicy *policy,
                               const double *obs,
                               size_t obs_len,
                               double *out,
                               size_t act_len);

// Mean return of `episodes` deterministic episodes over the environment's
// evaluation goals, round robin.
enum AslStatus asl_evaluate(const struct AslEnv *env,
                            const struct AslPolicy *policy,
                            size_t episodes,
                            uint64_t seed,
                            double *mean_return);

// Log density of `x` under a diagonal Gaussian.
enum AslStatus asl_gaussian_log_density(const double *x,
                                        const double *mu,
                                        const double *sigma,
                                        size_t n,
                                        double *out);

// Least-squares line `y = m x + b`.
enum AslStatus asl_ols_fit_mb(const double *xs, const double *ys, size_t n, double *m, double *b);

// Whether the value gate lets a transformed sample through (`*open` = 1).
enum AslStatus asl_value_gate(double v, double v_sym, double k_v, uint8_t *open);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ASL_H */
