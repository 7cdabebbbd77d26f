/*
 * mtsim - Mutual-Taught alignment simulation laboratory.
 *
 * C interface to the simulation core. All functions are synchronous and
 * deterministic given their seed inputs. Objects returned through out
 * parameters are owned by the caller and must be released with the matching
 * free function. On failure, functions return a nonzero status and leave a
 * human-readable message in mtsim_last_error() (thread-local).
 */

#ifndef MTSIM_H
#define MTSIM_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status values double as process exit codes for the CLI. */
typedef enum mtsim_status {
    MTSIM_OK = 0,
    MTSIM_ERR_CONFIG = 1,   /* invalid configuration or malformed JSON */
    MTSIM_ERR_RUNTIME = 2,  /* failure while running */
    MTSIM_ERR_VERIFY = 3    /* verification (gradcheck) did not pass */
} mtsim_status;

typedef struct mtsim_env mtsim_env; /* opaque: one built synthetic world */

const char* mtsim_version(void);

/* Message describing the most recent failure on this thread; never NULL. */
const char* mtsim_last_error(void);

/* Frees strings returned through char** out parameters. */
void mtsim_string_free(char* s);

/* Builds an environment from an EnvConfig JSON document. */
mtsim_status mtsim_env_create(const char* env_config_json, mtsim_env** out_env);

/* Restores an environment from its JSON serialization. */
mtsim_status mtsim_env_from_json(const char* env_json, mtsim_env** out_env);

void mtsim_env_free(mtsim_env* env);

/* Serializes the full environment (config echo, reward table, lengths,
 * partitions, base models) to a single JSON document. */
mtsim_status mtsim_env_to_json(const mtsim_env* env, char** out_json);

/* Stable content hash of the serialized environment. */
uint64_t mtsim_env_fingerprint(const mtsim_env* env);

/* Runs the co-training loop on an environment with a LoopConfig JSON
 * document; returns per-iteration reports plus final-state metrics as JSON. */
mtsim_status mtsim_loop_run(const mtsim_env* env, const char* loop_config_json, uint64_t seed,
                            char** out_report_json);

/* Runs a full experiment from an ExperimentConfig JSON document, writing
 * config.echo.json, iterations.jsonl, and summary.csv.
 *
 *   method_override: optional method name replacing the configured one
 *                    ("mutual-taught", "offline-dpo", "iter-dpo-fixed-rm");
 *                    pass NULL to keep the config value.
 *   out_dir_override: optional output directory; NULL keeps the config value.
 *   has_seed_override/seed_override: replace the seed list with one seed.
 *   write_env: nonzero also writes env.json per seed.
 */
mtsim_status mtsim_experiment_run(const char* experiment_config_json, const char* method_override,
                                  const char* out_dir_override, int has_seed_override,
                                  uint64_t seed_override, int write_env);

/* Finite-difference verification of the DPO and Bradley-Terry gradients.
 * `corruption` deliberately perturbs one analytic entry (testing hook; pass
 * 0 for a real check). Returns MTSIM_ERR_VERIFY when the check fails. */
mtsim_status mtsim_gradcheck(uint64_t seed, int instances, double corruption, char** out_report_json);

/* Runs one ablation axis ("filter" or "rm-data") over the config's seeds
 * against shared per-seed environments; writes ablation.csv. */
mtsim_status mtsim_ablate(const char* experiment_config_json, const char* axis,
                          const char* out_dir_override);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* MTSIM_H */
