#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>

#include <Eigen/Dense>

#include "snmdp/mdp.hpp"
#include "snmdp/rng.hpp"

namespace snmdp {

struct ChainSpec {
  std::size_t n = 5;
};

struct RandomMdpSpec {
  std::size_t n_states = 4;
  std::size_t n_actions = 2;
  double reward_min = 0.0;
  double reward_max = 1.0;
  std::uint64_t seed = 0;
};

struct TabularEnvSpec {
  std::variant<ChainSpec, RandomMdpSpec> kind;
  double gamma = 0.9;
};

// Chain: actions left (0) / right (1) move with probability 0.9 and stay
// otherwise; reward 1 on every transition into the rightmost state, which is
// absorbing under "right". Random: Dirichlet(1) transition rows and uniform
// rewards, fully determined by the seed.
TabularMDP make_tabular(const TabularEnvSpec& spec);

// Row-wise Dirichlet(1) vector of length n.
std::vector<double> dirichlet_row(Rng& rng, std::size_t n);

Policy random_policy(Rng& rng, std::size_t n_states, std::size_t n_actions);

// Allowed sets B(s) = {s} plus up to max_set_size - 1 other states, with a
// Dirichlet(1) kernel over each set.
TabularNoise random_tabular_noise(Rng& rng, std::size_t n_states, std::size_t max_set_size);
AllowedSets random_allowed_sets(Rng& rng, std::size_t n_states, std::size_t max_set_size);

// ---- classic control -------------------------------------------------------

enum class ControlTask { cartpole, mountaincar };

const char* to_string(ControlTask t);
ControlTask control_task_from_string(const std::string& name);

inline constexpr std::size_t kEpisodeCap = 200;

struct StepResult {
  Eigen::VectorXd next_state;
  double reward = 0.0;
  bool terminated = false;  // failure or goal; no bootstrapping past it
  bool truncated = false;   // step cap reached
  bool done() const { return terminated || truncated; }
};

// Euler-integrated pole on a cart: gravity 9.8, cart 1.0, pole 0.1,
// half-length 0.5, force +-10 (action 1 pushes right), dt 0.02. Reward 1;
// terminated once |angle| > 12 degrees or |position| > 2.4.
StepResult cartpole_step(const Eigen::VectorXd& state, int action);

// velocity += 0.001 (action - 1) - 0.0025 cos(3 position), clipped to
// [-0.07, 0.07]; position += velocity, clipped to [-1.2, 0.6], with the
// velocity zeroed at the left wall. Reward -1; terminated at position >= 0.5.
StepResult mountaincar_step(const Eigen::VectorXd& state, int action);

// Stateful wrapper adding resets and the episode cap. Dynamics are
// deterministic; only reset draws from the RNG.
class ControlEnv {
 public:
  explicit ControlEnv(ControlTask task, std::size_t cap = kEpisodeCap);

  ControlTask task() const { return task_; }
  std::size_t n_actions() const { return task_ == ControlTask::cartpole ? 2 : 3; }
  std::size_t state_dim() const { return task_ == ControlTask::cartpole ? 4 : 2; }
  std::size_t steps() const { return steps_; }
  const Eigen::VectorXd& state() const { return state_; }

  // CartPole: U[-0.05, 0.05]^4; Mountain Car: position U[-0.6, -0.4], v = 0.
  const Eigen::VectorXd& reset(Rng& rng);
  // Starts an episode from a given state (tests and replays).
  void reset_to(const Eigen::VectorXd& state);
  StepResult step(int action);

 private:
  ControlTask task_;
  std::size_t cap_;
  std::size_t steps_ = 0;
  bool done_ = true;
  Eigen::VectorXd state_;
};

}  // namespace snmdp
