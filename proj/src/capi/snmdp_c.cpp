#include "snmdp/snmdp.h"

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "snmdp/distribution.hpp"
#include "snmdp/envs.hpp"
#include "snmdp/error.hpp"
#include "snmdp/harness.hpp"
#include "snmdp/tabular.hpp"

#ifndef SNMDP_VERSION
#define SNMDP_VERSION "0.0.0"
#endif

struct snmdp_experiment {
  snmdp::harness::Experiment experiment;
  snmdp::harness::RunOptions options;
  snmdp::harness::Outcome outcome;
  std::vector<std::string> files;
};

namespace {

thread_local std::string g_last_error;

snmdp_status fail(snmdp_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

// Runs f, mapping exceptions to status codes.
template <class F>
snmdp_status guarded(F&& f) {
  try {
    g_last_error.clear();
    return f();
  } catch (const snmdp::ConfigError& e) {
    return fail(SNMDP_ERR_CONFIG, e.what());
  } catch (const snmdp::PropertyFailure& e) {
    return fail(SNMDP_ERR_CHECK, e.what());
  } catch (const std::exception& e) {
    return fail(SNMDP_ERR_RUNTIME, e.what());
  } catch (...) {
    return fail(SNMDP_ERR_RUNTIME, "unknown error");
  }
}

void require(bool cond, const char* what) {
  if (!cond) throw snmdp::ConfigError(what);
}

snmdp_status control_step(snmdp::ControlTask task, const double* state, int action, double* next_state,
                          double* reward, int* terminated) {
  return guarded([&] {
    require(state && next_state && reward && terminated, "null argument");
    const Eigen::Index dim = task == snmdp::ControlTask::cartpole ? 4 : 2;
    const Eigen::VectorXd s = Eigen::Map<const Eigen::VectorXd>(state, dim);
    const snmdp::StepResult r =
        task == snmdp::ControlTask::cartpole ? snmdp::cartpole_step(s, action) : snmdp::mountaincar_step(s, action);
    Eigen::Map<Eigen::VectorXd>(next_state, dim) = r.next_state;
    *reward = r.reward;
    *terminated = r.terminated ? 1 : 0;
    return SNMDP_OK;
  });
}

}  // namespace

extern "C" {

const char* snmdp_version(void) { return SNMDP_VERSION; }

const char* snmdp_last_error(void) { return g_last_error.c_str(); }

size_t snmdp_subcommand_count(void) { return snmdp::harness::all_subcommands().size(); }

const char* snmdp_subcommand_name(size_t index) {
  const auto& subs = snmdp::harness::all_subcommands();
  return index < subs.size() ? snmdp::harness::to_string(subs[index]) : nullptr;
}

snmdp_status snmdp_experiment_from_file(const char* subcommand, const char* path, snmdp_experiment** out) {
  return guarded([&] {
    require(subcommand && path && out, "null argument");
    *out = nullptr;
    auto ex = snmdp::harness::Experiment::from_file(snmdp::harness::subcommand_from_string(subcommand), path);
    *out = new snmdp_experiment{std::move(ex), {}, {}, {}};
    return SNMDP_OK;
  });
}

snmdp_status snmdp_experiment_from_string(const char* subcommand, const char* toml_text, snmdp_experiment** out) {
  return guarded([&] {
    require(subcommand && toml_text && out, "null argument");
    *out = nullptr;
    auto ex = snmdp::harness::Experiment::from_string(snmdp::harness::subcommand_from_string(subcommand), toml_text);
    *out = new snmdp_experiment{std::move(ex), {}, {}, {}};
    return SNMDP_OK;
  });
}

void snmdp_experiment_destroy(snmdp_experiment* ex) { delete ex; }

snmdp_status snmdp_experiment_set_seed(snmdp_experiment* ex, uint64_t seed) {
  return guarded([&] {
    require(ex, "null experiment");
    ex->options.seed = seed;
    return SNMDP_OK;
  });
}

snmdp_status snmdp_experiment_set_workers(snmdp_experiment* ex, unsigned workers) {
  return guarded([&] {
    require(ex, "null experiment");
    ex->options.workers = workers;
    return SNMDP_OK;
  });
}

snmdp_status snmdp_experiment_set_out_dir(snmdp_experiment* ex, const char* dir) {
  return guarded([&] {
    require(ex && dir && *dir, "null experiment or empty directory");
    ex->options.out_dir = dir;
    return SNMDP_OK;
  });
}

snmdp_status snmdp_experiment_run(snmdp_experiment* ex) {
  return guarded([&] {
    require(ex, "null experiment");
    snmdp::harness::init_logging();
    ex->outcome = ex->experiment.run(ex->options);
    ex->files.clear();
    for (const auto& f : ex->outcome.files) ex->files.push_back(f.string());
    const auto status = static_cast<snmdp_status>(ex->outcome.status);
    if (status != SNMDP_OK) g_last_error = ex->outcome.summary;
    return status;
  });
}

const char* snmdp_experiment_summary(const snmdp_experiment* ex) { return ex ? ex->outcome.summary.c_str() : ""; }

size_t snmdp_experiment_file_count(const snmdp_experiment* ex) { return ex ? ex->files.size() : 0; }

const char* snmdp_experiment_file(const snmdp_experiment* ex, size_t index) {
  return ex && index < ex->files.size() ? ex->files[index].c_str() : nullptr;
}

uint64_t snmdp_experiment_config_hash(const snmdp_experiment* ex) { return ex ? ex->experiment.config_hash() : 0; }

uint64_t snmdp_experiment_seed(const snmdp_experiment* ex) {
  return ex ? ex->options.seed.value_or(ex->experiment.config_seed()) : 0;
}

snmdp_status snmdp_random_mdp(size_t n_states, size_t n_actions, double reward_min, double reward_max, uint64_t seed,
                              double* p, double* r) {
  return guarded([&] {
    require(p && r, "null argument");
    require(n_states > 0 && n_actions > 0, "need at least one state and action");
    require(reward_max >= reward_min, "empty reward range");
    const snmdp::TabularMDP mdp =
        snmdp::make_tabular({snmdp::RandomMdpSpec{n_states, n_actions, reward_min, reward_max, seed}, 0.9});
    std::copy(mdp.transition().begin(), mdp.transition().end(), p);
    std::copy(mdp.reward().begin(), mdp.reward().end(), r);
    return SNMDP_OK;
  });
}

snmdp_status snmdp_policy_value(size_t n_states, size_t n_actions, const double* p, const double* r, double gamma,
                                const double* policy, const size_t* noise_target, double* value_out) {
  return guarded([&] {
    require(p && r && policy && value_out, "null argument");
    require(n_states > 0 && n_actions > 0, "need at least one state and action");
    const std::size_t cells = n_states * n_actions * n_states;
    const snmdp::TabularMDP mdp(n_states, n_actions, std::vector<double>(p, p + cells),
                                std::vector<double>(r, r + cells), gamma);
    Eigen::MatrixXd probs(static_cast<Eigen::Index>(n_states), static_cast<Eigen::Index>(n_actions));
    for (std::size_t s = 0; s < n_states; ++s)
      for (std::size_t a = 0; a < n_actions; ++a)
        probs(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = policy[s * n_actions + a];
    const snmdp::Policy pi(probs);
    snmdp::TabularNoise noise = snmdp::TabularNoise::identity(n_states);
    if (noise_target) {
      std::vector<std::size_t> target(noise_target, noise_target + n_states);
      for (std::size_t t : target) require(t < n_states, "noise target out of range");
      noise = snmdp::TabularNoise::deterministic(target);
    }
    const Eigen::VectorXd v = snmdp::merged_policy_value(mdp, pi, noise);
    Eigen::Map<Eigen::VectorXd>(value_out, v.size()) = v;
    return SNMDP_OK;
  });
}

snmdp_status snmdp_wasserstein(const double* atoms_a, const double* probs_a, size_t n_a, const double* atoms_b,
                               const double* probs_b, size_t n_b, double p, double* out) {
  return guarded([&] {
    require(atoms_a && probs_a && atoms_b && probs_b && out, "null argument");
    require(n_a > 0 && n_b > 0, "distributions need at least one atom");
    require(p >= 1.0, "p must be >= 1");
    auto build = [](const double* x, const double* w, size_t n) {
      std::vector<std::pair<double, double>> weighted;
      for (size_t i = 0; i < n; ++i) weighted.emplace_back(x[i], w[i]);
      return snmdp::AtomDistribution::from_weighted(std::move(weighted), 0.0);
    };
    *out = snmdp::wasserstein_p(build(atoms_a, probs_a, n_a), build(atoms_b, probs_b, n_b), p);
    return SNMDP_OK;
  });
}

snmdp_status snmdp_cartpole_step(const double* state, int action, double* next_state, double* reward,
                                 int* terminated) {
  return control_step(snmdp::ControlTask::cartpole, state, action, next_state, reward, terminated);
}

snmdp_status snmdp_mountaincar_step(const double* state, int action, double* next_state, double* reward,
                                    int* terminated) {
  return control_step(snmdp::ControlTask::mountaincar, state, action, next_state, reward, terminated);
}

}  // extern "C"
