/* C interface to the snmdp library. All functions return an snmdp_status;
 * on failure snmdp_last_error() describes the problem (per thread). */
#ifndef SNMDP_H
#define SNMDP_H

#include <stddef.h>
#include <stdint.h>

#if defined(SNMDP_BUILDING)
#define SNMDP_API __attribute__((visibility("default")))
#else
#define SNMDP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
  SNMDP_OK = 0,
  SNMDP_ERR_CONFIG = 1,  /* invalid configuration or argument */
  SNMDP_ERR_CHECK = 2,   /* a property or acceptance check failed */
  SNMDP_ERR_RUNTIME = 3  /* numerical or I/O failure */
} snmdp_status;

typedef struct snmdp_experiment snmdp_experiment;

SNMDP_API const char* snmdp_version(void);
SNMDP_API const char* snmdp_last_error(void);

SNMDP_API size_t snmdp_subcommand_count(void);
SNMDP_API const char* snmdp_subcommand_name(size_t index);

/* ---- experiments ---- */

SNMDP_API snmdp_status snmdp_experiment_from_file(const char* subcommand, const char* path, snmdp_experiment** out);
SNMDP_API snmdp_status snmdp_experiment_from_string(const char* subcommand, const char* toml_text,
                                                    snmdp_experiment** out);
SNMDP_API void snmdp_experiment_destroy(snmdp_experiment* ex);

SNMDP_API snmdp_status snmdp_experiment_set_seed(snmdp_experiment* ex, uint64_t seed);
/* 0 uses every available core. */
SNMDP_API snmdp_status snmdp_experiment_set_workers(snmdp_experiment* ex, unsigned workers);
SNMDP_API snmdp_status snmdp_experiment_set_out_dir(snmdp_experiment* ex, const char* dir);

/* Returns SNMDP_OK, SNMDP_ERR_CHECK or SNMDP_ERR_RUNTIME. */
SNMDP_API snmdp_status snmdp_experiment_run(snmdp_experiment* ex);
/* Valid until the next run or destroy. */
SNMDP_API const char* snmdp_experiment_summary(const snmdp_experiment* ex);
SNMDP_API size_t snmdp_experiment_file_count(const snmdp_experiment* ex);
SNMDP_API const char* snmdp_experiment_file(const snmdp_experiment* ex, size_t index);
SNMDP_API uint64_t snmdp_experiment_config_hash(const snmdp_experiment* ex);
SNMDP_API uint64_t snmdp_experiment_seed(const snmdp_experiment* ex);

/* ---- primitives ---- */

/* Dirichlet(1) transitions and uniform rewards; p and r hold n*m*n entries
 * indexed (s*m + a)*n + s'. */
SNMDP_API snmdp_status snmdp_random_mdp(size_t n_states, size_t n_actions, double reward_min, double reward_max,
                                        uint64_t seed, double* p, double* r);

/* Value of the merged policy under deterministic state noise s -> target[s]
 * (NULL for no noise). policy holds n*m action probabilities. */
SNMDP_API snmdp_status snmdp_policy_value(size_t n_states, size_t n_actions, const double* p, const double* r,
                                          double gamma, const double* policy, const size_t* noise_target,
                                          double* value_out);

/* p-Wasserstein distance between two finite distributions; p = INFINITY for
 * the sup distance. Atoms need not be sorted. */
SNMDP_API snmdp_status snmdp_wasserstein(const double* atoms_a, const double* probs_a, size_t n_a,
                                         const double* atoms_b, const double* probs_b, size_t n_b, double p,
                                         double* out);

/* One step of the control dynamics; state has 4 (CartPole) or 2 (Mountain
 * Car) entries. terminated excludes the step cap. */
SNMDP_API snmdp_status snmdp_cartpole_step(const double* state, int action, double* next_state, double* reward,
                                           int* terminated);
SNMDP_API snmdp_status snmdp_mountaincar_step(const double* state, int action, double* next_state, double* reward,
                                              int* terminated);

#ifdef __cplusplus
}
#endif

#endif /* SNMDP_H */
