#include "snmdp/tabular.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "snmdp/error.hpp"

namespace snmdp {

namespace {

void check_dims(const TabularMDP& mdp, const Policy& pi, const Eigen::VectorXd& v) {
  require(pi.n_states() == mdp.n_states() && pi.n_actions() == mdp.n_actions(),
          "bellman_backup: policy dimensions do not match the MDP");
  require(v.size() == static_cast<Eigen::Index>(mdp.n_states()), "bellman_backup: value vector size mismatch");
}

Eigen::VectorXd backup_with_merged(const TabularMDP& mdp, const Policy& merged, const Eigen::VectorXd& v) {
  const Eigen::MatrixXd q = action_values(mdp, v);
  Eigen::VectorXd out(mdp.n_states());
  for (std::size_t s = 0; s < mdp.n_states(); ++s) out(s) = merged.matrix().row(s).dot(q.row(s));
  return out;
}

}  // namespace

Eigen::VectorXd bellman_backup(const TabularMDP& mdp, const Policy& pi, const TabularNoise& noise,
                               const Eigen::VectorXd& v) {
  check_dims(mdp, pi, v);
  return backup_with_merged(mdp, merged_policy(mdp, pi, noise), v);
}

AdversarialBackup adversarial_backup(const TabularMDP& mdp, const Policy& pi, const AllowedSets& allowed,
                                     const Eigen::VectorXd& v) {
  check_dims(mdp, pi, v);
  TabularNoise noise = greedy_adversarial_noise(mdp, pi, action_values(mdp, v), allowed);
  Eigen::VectorXd next = backup_with_merged(mdp, merged_policy(mdp, pi, noise), v);
  return {std::move(next), std::move(noise)};
}

Eigen::VectorXd solve_fixed_point(const TabularMDP& mdp, const Policy& pi, const TabularNoise& noise, double tol,
                                  const std::optional<Eigen::VectorXd>& init) {
  require(tol > 0.0, "solve_fixed_point: tol must be positive");
  const Policy merged = merged_policy(mdp, pi, noise);
  Eigen::VectorXd v = init.value_or(Eigen::VectorXd::Zero(mdp.n_states()));
  check_dims(mdp, pi, v);
  for (std::size_t it = 0; it < kFixedPointIterationCap; ++it) {
    Eigen::VectorXd next = backup_with_merged(mdp, merged, v);
    const double change = (next - v).lpNorm<Eigen::Infinity>();
    v = std::move(next);
    if (change <= tol) return v;
  }
  throw ConvergenceError("solve_fixed_point: no convergence within " + std::to_string(kFixedPointIterationCap) +
                         " sweeps");
}

AdversarialSolution adversarial_fixed_point(const TabularMDP& mdp, const Policy& pi, const AllowedSets& allowed,
                                            double tol) {
  require(tol > 0.0, "adversarial_fixed_point: tol must be positive");
  require(allowed.size() == mdp.n_states(), "adversarial_fixed_point: allowed sets do not match the MDP");
  // Starting at V_pi (identity noise is always admissible) makes the greedy
  // sequence monotonically non-increasing.
  Eigen::VectorXd v = solve_fixed_point(mdp, pi, TabularNoise::identity(mdp.n_states()), tol * (1.0 - mdp.gamma()));
  double max_increase = -std::numeric_limits<double>::infinity();
  for (std::size_t it = 1; it <= kFixedPointIterationCap; ++it) {
    AdversarialBackup step = adversarial_backup(mdp, pi, allowed, v);
    max_increase = std::max(max_increase, (step.v - v).maxCoeff());
    const double change = (step.v - v).lpNorm<Eigen::Infinity>();
    v = std::move(step.v);
    if (change <= tol) {
      TabularNoise noise = greedy_adversarial_noise(mdp, pi, action_values(mdp, v), allowed);
      return {std::move(v), std::move(noise), it, max_increase};
    }
  }
  throw ConvergenceError("adversarial_fixed_point: no convergence within " +
                         std::to_string(kFixedPointIterationCap) + " sweeps");
}

Eigen::VectorXd merged_policy_value(const TabularMDP& mdp, const Policy& pi, const TabularNoise& noise) {
  const Policy merged = merged_policy(mdp, pi, noise);
  const Eigen::MatrixXd p = merged_transition(mdp, merged);
  const Eigen::VectorXd r = merged_reward(mdp, merged);
  const auto n = static_cast<Eigen::Index>(mdp.n_states());
  const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - mdp.gamma() * p;
  return system.partialPivLu().solve(r);
}

}  // namespace snmdp
