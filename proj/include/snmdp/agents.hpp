#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "snmdp/envs.hpp"
#include "snmdp/heads.hpp"
#include "snmdp/noise.hpp"
#include "snmdp/rng.hpp"

namespace snmdp {

enum class LossKind { least_squares, histogram };
enum class HeadMode { linear, nonlinear };
enum class NoiseSite { none, current, next, both };
// How the bootstrapped histogram target is mapped back onto the bins.
// `bin_mass`: each shifted bin centre puts its mass in the bin containing it.
// `overlap`: each bin's mass is spread uniformly over its shifted interval and
// split by overlap, so shifts smaller than a bin are not lost.
enum class TargetProjection { bin_mass, overlap };

const char* to_string(LossKind k);
const char* to_string(HeadMode m);
const char* to_string(NoiseSite s);
const char* to_string(TargetProjection p);
LossKind loss_kind_from_string(const std::string& name);
HeadMode head_mode_from_string(const std::string& name);
NoiseSite noise_site_from_string(const std::string& name);
TargetProjection target_projection_from_string(const std::string& name);

struct AgentConfig {
  LossKind loss_kind = LossKind::least_squares;
  std::size_t k = 20;  // histogram bins
  HeadMode head_mode = HeadMode::nonlinear;
  std::size_t width = 32;
  std::size_t depth = 2;
  Activation activation = Activation::tanh;
  std::optional<double> norm_bound;  // required for histogram agents
  double v_min = 0.0;
  double v_max = 100.0;
  TargetProjection target_projection = TargetProjection::overlap;
  double gamma = 0.99;
  double learning_rate = 1e-3;
  std::size_t replay_capacity = 10'000;
  std::size_t batch_size = 32;
  std::size_t target_sync = 100;
  std::size_t learning_starts = 1'000;
  double epsilon_start = 1.0;
  double epsilon_end = 0.02;
  double exploration_fraction = 0.1;
  std::size_t total_steps = 200'000;

  void validate() const;
  std::size_t outputs_per_action() const { return loss_kind == LossKind::histogram ? k : 1; }
  // Linear decay from epsilon_start to epsilon_end over the first
  // exploration_fraction of total_steps.
  double epsilon_at(std::size_t step) const;
};

struct Transition {
  Eigen::VectorXd observed_state;
  int action = 0;
  double reward = 0.0;
  Eigen::VectorXd observed_next_state;
  bool done = false;  // terminal: no bootstrapping
};

// Fixed-capacity FIFO; at(0) is the oldest stored transition.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const;
  // Uniform with replacement.
  std::vector<std::size_t> sample_indices(Rng& rng, std::size_t n) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
  std::vector<Transition> data_;
};

struct QGrads {
  LayerGrads torso;
  Eigen::MatrixXd d_rows;
  Eigen::VectorXd d_bias;
};

// scores = rows * phi(x) + bias, laid out as n_actions blocks of
// outputs_per_action entries. Linear mode uses phi(x) = x.
class QNetwork {
 public:
  QNetwork(NonlinearFeatureMap torso, Eigen::MatrixXd rows, Eigen::VectorXd bias, std::size_t n_actions);
  static QNetwork random(Rng& rng, const AgentConfig& config, std::size_t state_dim, std::size_t n_actions);

  std::size_t n_actions() const { return n_actions_; }
  std::size_t outputs_per_action() const { return static_cast<std::size_t>(rows_.rows()) / n_actions_; }
  std::size_t state_dim() const { return torso_.input_dim(); }
  const NonlinearFeatureMap& torso() const { return torso_; }
  const Eigen::MatrixXd& rows() const { return rows_; }
  const Eigen::VectorXd& bias() const { return bias_; }
  void set_rows(Eigen::MatrixXd rows) { rows_ = std::move(rows); }
  void set_bias(Eigen::VectorXd bias) { bias_ = std::move(bias); }

  Eigen::MatrixXd scores(const Eigen::MatrixXd& x, FeatureCache* cache = nullptr) const;
  // dL/dx for the batch given dL/dscores; fills parameter gradients when asked.
  Eigen::MatrixXd backward(const FeatureCache& cache, const Eigen::MatrixXd& d_scores, QGrads* grads) const;
  void sgd_step(const QGrads& grads, double lr);
  void project_rows(double l);
  double lipschitz_bound() const { return torso_.lipschitz_bound(); }

  // Flattened (torso unless linear, rows, bias).
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& theta);
  static Eigen::VectorXd flatten(const QGrads& grads, bool include_torso);

 private:
  NonlinearFeatureMap torso_;
  Eigen::MatrixXd rows_;
  Eigen::VectorXd bias_;
  std::size_t n_actions_;
};

struct UpdateDiagnostics {
  double loss = 0.0;
  double mean_state_grad_norm = 0.0;
  double max_state_grad_norm = 0.0;
  // k l L for histogram agents, +inf otherwise.
  double grad_bound = 0.0;
  std::size_t bound_violations = 0;
  bool finite = true;
};

// Bootstrapped histogram target: point mass at r when done, otherwise the
// target-head distribution q shifted by r and scaled by gamma.
TargetHistogram histogram_td_target(const Eigen::VectorXd& q, double reward, bool done, double gamma, double v_min,
                                    double v_max, TargetProjection projection);

class Agent {
 public:
  Agent(const AgentConfig& config, std::size_t state_dim, std::size_t n_actions, Rng& init_rng);

  const AgentConfig& config() const { return config_; }
  std::size_t n_actions() const { return online_.n_actions(); }
  const QNetwork& online() const { return online_; }
  const QNetwork& target() const { return target_; }
  QNetwork& online() { return online_; }
  std::size_t updates() const { return updates_; }
  Eigen::VectorXd bin_centers() const;

  // Q estimates: w^T x per action, or the histogram expectation.
  Eigen::VectorXd q_values(const Eigen::VectorXd& x) const;
  Eigen::VectorXd target_q_values(const Eigen::VectorXd& x) const;
  // Per action softmax, k x n_actions (histogram agents).
  Eigen::MatrixXd distributions(const Eigen::VectorXd& x) const;
  // epsilon-greedy; greedy ties go to the lowest action index.
  int act(const Eigen::VectorXd& x, double epsilon, Rng& rng) const;

  // One SGD step. Least squares: 1/2 sum (U - Q(s,a))^2. Histogram: mean
  // cross-entropy to the projected bootstrapped target. Syncs the target
  // network every target_sync updates.
  UpdateDiagnostics update(const std::vector<const Transition*>& batch);
  // Loss of the current online network on a batch, with the same targets.
  double batch_loss(const std::vector<const Transition*>& batch) const;
  // Gradient of batch_loss with respect to the online parameters.
  Eigen::VectorXd batch_loss_gradient(const std::vector<const Transition*>& batch) const;
  void sync_target() { target_ = online_; }

  // softmax(Q / temperature) logits with the analytic cross-entropy gradient.
  PolicyLogits policy_logits(double temperature) const;

 private:
  struct BatchPass;
  BatchPass forward_pass(const std::vector<const Transition*>& batch, bool need_grads) const;

  AgentConfig config_;
  QNetwork online_;
  QNetwork target_;
  std::size_t updates_ = 0;
};

struct NoiseInjection {
  NoiseSite site = NoiseSite::none;
  ContinuousNoise noise = GaussianNoise{0.0};
  double pgd_temperature = 1.0;

  double strength() const;
  std::string kind() const;  // gaussian | pgd
};

// Observation of a true state under the injection's noise. PGD attacks the
// supplied logits; Gaussian draws from rng.
Eigen::VectorXd perturb_observation(const Eigen::VectorXd& state, const NoiseInjection& injection,
                                    const PolicyLogits* logits, Rng& rng);

struct EpisodeResult {
  double ret = 0.0;
  std::size_t steps = 0;
  bool completed = true;  // false when the callback stopped the episode
  std::vector<Transition> transitions;
  std::vector<Eigen::VectorXd> true_states;  // visited true states, reset first
};

using ActionFn = std::function<int(const Eigen::VectorXd& observation)>;
using LogitsFn = std::function<PolicyLogits()>;
// Returns false to stop the episode after this transition.
using TransitionFn = std::function<bool(const Transition&)>;

// Runs one episode. The true state drives the dynamics; observations are
// perturbed per injection.site. Under `both` each visited state is perturbed
// once and that observation serves as both next state and next current state.
EpisodeResult run_episode(ControlEnv& env, const NoiseInjection& injection, const ActionFn& act,
                          const LogitsFn& adversary, Rng& env_rng, Rng& noise_rng, const TransitionFn& on_transition = {},
                          bool record = true);

struct EpisodeLog {
  std::size_t episode = 0;
  double ret = 0.0;
  std::size_t steps = 0;
  std::size_t updates = 0;
  double mean_state_grad_norm = 0.0;  // over the episode's updates
};

struct TrainResult {
  std::vector<EpisodeLog> episodes;
  bool diverged = false;
  std::size_t total_updates = 0;
  std::size_t bound_violations = 0;
  double max_grad_to_bound = 0.0;  // histogram agents
  bool target_sync_consistent = true;

  // Mean return over the last `fraction` of completed episodes.
  double final_return(double fraction = 0.1) const;
};

struct TrainConfig {
  ControlTask env = ControlTask::cartpole;
  std::size_t episode_cap = kEpisodeCap;
  AgentConfig agent;
  NoiseInjection injection;
};

// Independent streams for initialisation, resets, exploration, replay
// sampling and noise are derived from seed.
TrainResult train(const TrainConfig& config, std::uint64_t seed);

struct ChiSquare {
  double statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
};
// Goodness of fit of counts to the uniform distribution.
ChiSquare chi_square_uniform(const std::vector<std::size_t>& counts);

}  // namespace snmdp
