#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace snmdp {

inline constexpr double kProbTol = 1e-12;

// Finite MDP (S, A, R, P, gamma). Transition and reward are dense (s, a, s')
// arrays in row-major order.
class TabularMDP {
 public:
  TabularMDP(std::size_t n_states, std::size_t n_actions, std::vector<double> transition,
             std::vector<double> reward, double gamma);

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  double gamma() const { return gamma_; }

  double p(std::size_t s, std::size_t a, std::size_t next) const {
    return transition_[index(s, a, next)];
  }
  double r(std::size_t s, std::size_t a, std::size_t next) const {
    return reward_[index(s, a, next)];
  }
  // sum_{s'} p(s'|s,a) R(s,a,s')
  double expected_reward(std::size_t s, std::size_t a) const;
  double min_reward() const;
  double max_reward() const;

  const std::vector<double>& transition() const { return transition_; }
  const std::vector<double>& reward() const { return reward_; }

 private:
  std::size_t index(std::size_t s, std::size_t a, std::size_t next) const {
    return (s * n_actions_ + a) * n_states_ + next;
  }

  std::size_t n_states_;
  std::size_t n_actions_;
  std::vector<double> transition_;
  std::vector<double> reward_;
  double gamma_;
};

// Stochastic policy pi(a|s), stored as an S x A row-stochastic matrix.
class Policy {
 public:
  explicit Policy(Eigen::MatrixXd probs);

  static Policy uniform(std::size_t n_states, std::size_t n_actions);
  static Policy deterministic(std::size_t n_actions, const std::vector<std::size_t>& action_of_state);

  std::size_t n_states() const { return static_cast<std::size_t>(probs_.rows()); }
  std::size_t n_actions() const { return static_cast<std::size_t>(probs_.cols()); }
  double operator()(std::size_t s, std::size_t a) const { return probs_(s, a); }
  const Eigen::MatrixXd& matrix() const { return probs_; }

 private:
  Eigen::MatrixXd probs_;
};

using AllowedSets = std::vector<std::vector<std::size_t>>;

// Observation-noise kernel N(v|s) over allowed sets B(s). Every B(s) contains
// s; the kernel vanishes outside B(s).
class TabularNoise {
 public:
  TabularNoise(AllowedSets allowed, Eigen::MatrixXd kernel);

  static TabularNoise identity(std::size_t n_states);
  // Deterministic mechanism v(s) = target[s]; allowed sets default to
  // {s, target[s]} when not given.
  static TabularNoise deterministic(const std::vector<std::size_t>& target);
  static TabularNoise deterministic(AllowedSets allowed, const std::vector<std::size_t>& target);

  std::size_t n_states() const { return allowed_.size(); }
  const AllowedSets& allowed() const { return allowed_; }
  const std::vector<std::size_t>& allowed(std::size_t s) const { return allowed_[s]; }
  double operator()(std::size_t s, std::size_t v) const { return kernel_(s, v); }
  const Eigen::MatrixXd& kernel() const { return kernel_; }
  bool is_deterministic() const;

 private:
  AllowedSets allowed_;
  Eigen::MatrixXd kernel_;
};

// pi'(a|s) = sum_v N(v|s) pi(a|v)
Policy merged_policy(const TabularMDP& mdp, const Policy& pi, const TabularNoise& noise);

// Deterministic noise that, for every state s, observes the v in B(s) that
// minimises sum_a pi(a|v) values(s, a). Ties go to the lowest state index.
TabularNoise greedy_adversarial_noise(const TabularMDP& mdp, const Policy& pi,
                                      const Eigen::MatrixXd& values, const AllowedSets& allowed);

// Merged-policy quantities: P'(s, s') and R'(s).
Eigen::MatrixXd merged_transition(const TabularMDP& mdp, const Policy& merged);
Eigen::VectorXd merged_reward(const TabularMDP& mdp, const Policy& merged);

// Q_V(s, a) = sum_{s'} p(s'|s,a) [R(s,a,s') + gamma V(s')]
Eigen::MatrixXd action_values(const TabularMDP& mdp, const Eigen::VectorXd& v);

}  // namespace snmdp
