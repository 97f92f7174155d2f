#include "snmdp/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "snmdp/error.hpp"

namespace snmdp {

TabularMDP::TabularMDP(std::size_t n_states, std::size_t n_actions, std::vector<double> transition,
                       std::vector<double> reward, double gamma)
    : n_states_(n_states),
      n_actions_(n_actions),
      transition_(std::move(transition)),
      reward_(std::move(reward)),
      gamma_(gamma) {
  require(n_states_ > 0 && n_actions_ > 0, "mdp: state and action counts must be positive");
  const std::size_t n = n_states_ * n_actions_ * n_states_;
  require(transition_.size() == n, "mdp: transition has " + std::to_string(transition_.size()) +
                                       " entries, expected " + std::to_string(n));
  require(reward_.size() == n, "mdp: reward has " + std::to_string(reward_.size()) +
                                   " entries, expected " + std::to_string(n));
  require(gamma_ > 0.0 && gamma_ < 1.0, "mdp: gamma must lie strictly inside (0, 1)");
  for (double r : reward_) require(std::isfinite(r), "mdp: non-finite reward");
  for (std::size_t s = 0; s < n_states_; ++s) {
    for (std::size_t a = 0; a < n_actions_; ++a) {
      double total = 0.0;
      for (std::size_t next = 0; next < n_states_; ++next) {
        const double q = p(s, a, next);
        require(q >= 0.0 && q <= 1.0, "mdp: transition entry outside [0, 1]");
        total += q;
      }
      require(std::abs(total - 1.0) <= kProbTol,
              "mdp: transition row (" + std::to_string(s) + ", " + std::to_string(a) +
                  ") does not sum to 1");
    }
  }
}

double TabularMDP::expected_reward(std::size_t s, std::size_t a) const {
  double total = 0.0;
  for (std::size_t next = 0; next < n_states_; ++next) total += p(s, a, next) * r(s, a, next);
  return total;
}

double TabularMDP::min_reward() const { return *std::min_element(reward_.begin(), reward_.end()); }
double TabularMDP::max_reward() const { return *std::max_element(reward_.begin(), reward_.end()); }

Policy::Policy(Eigen::MatrixXd probs) : probs_(std::move(probs)) {
  require(probs_.rows() > 0 && probs_.cols() > 0, "policy: empty probability table");
  for (Eigen::Index s = 0; s < probs_.rows(); ++s) {
    for (Eigen::Index a = 0; a < probs_.cols(); ++a)
      require(probs_(s, a) >= 0.0 && probs_(s, a) <= 1.0, "policy: probability outside [0, 1]");
    require(std::abs(probs_.row(s).sum() - 1.0) <= kProbTol,
            "policy: row " + std::to_string(s) + " does not sum to 1");
  }
}

Policy Policy::uniform(std::size_t n_states, std::size_t n_actions) {
  return Policy(Eigen::MatrixXd::Constant(n_states, n_actions, 1.0 / static_cast<double>(n_actions)));
}

Policy Policy::deterministic(std::size_t n_actions, const std::vector<std::size_t>& action_of_state) {
  Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(action_of_state.size(), n_actions);
  for (std::size_t s = 0; s < action_of_state.size(); ++s) {
    require(action_of_state[s] < n_actions, "policy: action index out of range");
    probs(s, action_of_state[s]) = 1.0;
  }
  return Policy(std::move(probs));
}

TabularNoise::TabularNoise(AllowedSets allowed, Eigen::MatrixXd kernel)
    : allowed_(std::move(allowed)), kernel_(std::move(kernel)) {
  const auto n = allowed_.size();
  require(n > 0, "noise: no states");
  require(kernel_.rows() == static_cast<Eigen::Index>(n) && kernel_.cols() == static_cast<Eigen::Index>(n),
          "noise: kernel must be |S| x |S|");
  for (std::size_t s = 0; s < n; ++s) {
    auto& set = allowed_[s];
    require(!set.empty(), "noise: empty allowed set B(" + std::to_string(s) + ")");
    std::sort(set.begin(), set.end());
    set.erase(std::unique(set.begin(), set.end()), set.end());
    require(set.back() < n, "noise: allowed state out of range");
    require(std::binary_search(set.begin(), set.end(), s),
            "noise: B(" + std::to_string(s) + ") must contain s");
    double total = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      const double q = kernel_(s, v);
      require(q >= 0.0 && q <= 1.0, "noise: kernel entry outside [0, 1]");
      if (!std::binary_search(set.begin(), set.end(), v))
        require(q == 0.0, "noise: kernel has mass outside B(" + std::to_string(s) + ")");
      total += q;
    }
    require(std::abs(total - 1.0) <= kProbTol, "noise: kernel row " + std::to_string(s) + " does not sum to 1");
  }
}

TabularNoise TabularNoise::identity(std::size_t n_states) {
  AllowedSets allowed(n_states);
  for (std::size_t s = 0; s < n_states; ++s) allowed[s] = {s};
  return TabularNoise(std::move(allowed), Eigen::MatrixXd::Identity(n_states, n_states));
}

TabularNoise TabularNoise::deterministic(const std::vector<std::size_t>& target) {
  AllowedSets allowed(target.size());
  for (std::size_t s = 0; s < target.size(); ++s) allowed[s] = {s, target[s]};
  return deterministic(std::move(allowed), target);
}

TabularNoise TabularNoise::deterministic(AllowedSets allowed, const std::vector<std::size_t>& target) {
  const auto n = target.size();
  require(allowed.size() == n, "noise: allowed sets and targets differ in size");
  Eigen::MatrixXd kernel = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t s = 0; s < n; ++s) {
    require(target[s] < n, "noise: target state out of range");
    kernel(s, target[s]) = 1.0;
  }
  return TabularNoise(std::move(allowed), std::move(kernel));
}

bool TabularNoise::is_deterministic() const {
  for (Eigen::Index s = 0; s < kernel_.rows(); ++s)
    if (kernel_.row(s).maxCoeff() != 1.0) return false;
  return true;
}

Policy merged_policy(const TabularMDP& mdp, const Policy& pi, const TabularNoise& noise) {
  require(pi.n_states() == mdp.n_states() && pi.n_actions() == mdp.n_actions(),
          "merged_policy: policy dimensions do not match the MDP");
  require(noise.n_states() == mdp.n_states(), "merged_policy: noise dimensions do not match the MDP");
  Eigen::MatrixXd merged = noise.kernel() * pi.matrix();
  // Re-normalise away the few ulps of drift so the result validates at 1e-12.
  for (Eigen::Index s = 0; s < merged.rows(); ++s) merged.row(s) /= merged.row(s).sum();
  return Policy(std::move(merged));
}

TabularNoise greedy_adversarial_noise(const TabularMDP& mdp, const Policy& pi,
                                      const Eigen::MatrixXd& values, const AllowedSets& allowed) {
  const auto n = mdp.n_states();
  require(values.rows() == static_cast<Eigen::Index>(n) &&
              values.cols() == static_cast<Eigen::Index>(mdp.n_actions()),
          "greedy_adversarial_noise: values must be |S| x |A|");
  require(allowed.size() == n, "greedy_adversarial_noise: allowed sets do not match the MDP");
  std::vector<std::size_t> target(n);
  for (std::size_t s = 0; s < n; ++s) {
    require(!allowed[s].empty(), "greedy_adversarial_noise: empty allowed set B(" + std::to_string(s) + ")");
    std::vector<std::size_t> set = allowed[s];
    std::sort(set.begin(), set.end());
    std::size_t best = set.front();
    double best_value = pi.matrix().row(best).dot(values.row(s));
    for (std::size_t i = 1; i < set.size(); ++i) {
      const double value = pi.matrix().row(set[i]).dot(values.row(s));
      if (value < best_value) {
        best_value = value;
        best = set[i];
      }
    }
    target[s] = best;
  }
  return TabularNoise::deterministic(allowed, target);
}

Eigen::MatrixXd merged_transition(const TabularMDP& mdp, const Policy& merged) {
  const auto n = mdp.n_states();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t a = 0; a < mdp.n_actions(); ++a)
      for (std::size_t next = 0; next < n; ++next) out(s, next) += merged(s, a) * mdp.p(s, a, next);
  return out;
}

Eigen::VectorXd merged_reward(const TabularMDP& mdp, const Policy& merged) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(mdp.n_states());
  for (std::size_t s = 0; s < mdp.n_states(); ++s)
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) out(s) += merged(s, a) * mdp.expected_reward(s, a);
  return out;
}

Eigen::MatrixXd action_values(const TabularMDP& mdp, const Eigen::VectorXd& v) {
  require(v.size() == static_cast<Eigen::Index>(mdp.n_states()), "action_values: value vector size mismatch");
  Eigen::MatrixXd q(mdp.n_states(), mdp.n_actions());
  for (std::size_t s = 0; s < mdp.n_states(); ++s)
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      double total = 0.0;
      for (std::size_t next = 0; next < mdp.n_states(); ++next)
        total += mdp.p(s, a, next) * (mdp.r(s, a, next) + mdp.gamma() * v(next));
      q(s, a) = total;
    }
  return q;
}

}  // namespace snmdp
