#pragma once

#include <cstddef>
#include <optional>

#include <Eigen/Dense>

#include "snmdp/mdp.hpp"

namespace snmdp {

// One synchronous sweep of the noisy-observation Bellman expectation operator:
// (TV)(s) = sum_a pi'(a|s) sum_{s'} p(s'|s,a) [R(s,a,s') + gamma V(s')],
// with pi' the merged policy.
Eigen::VectorXd bellman_backup(const TabularMDP& mdp, const Policy& pi, const TabularNoise& noise,
                               const Eigen::VectorXd& v);

struct AdversarialBackup {
  Eigen::VectorXd v;
  TabularNoise noise;
};

// Greedy adversarial sweep: the adversary re-selects v*(s) in B(s) against
// Q_V, then the backup is taken under that deterministic noise.
AdversarialBackup adversarial_backup(const TabularMDP& mdp, const Policy& pi, const AllowedSets& allowed,
                                     const Eigen::VectorXd& v);

inline constexpr std::size_t kFixedPointIterationCap = 1'000'000;

// Fixed-point iteration from `init` (zeros by default) until the sup-norm
// change is <= tol. The result satisfies ||TV - V||_inf <= tol.
Eigen::VectorXd solve_fixed_point(const TabularMDP& mdp, const Policy& pi, const TabularNoise& noise, double tol,
                                  const std::optional<Eigen::VectorXd>& init = std::nullopt);

struct AdversarialSolution {
  Eigen::VectorXd v;
  TabularNoise noise;
  std::size_t iterations = 0;
  // Largest elementwise increase observed between consecutive iterates; a
  // monotone descent keeps this <= 0 up to round-off.
  double max_increase = 0.0;
};

// Alternates greedy adversarial selection and backups, starting from the
// noise-free value of pi, until the sup-norm change is <= tol.
AdversarialSolution adversarial_fixed_point(const TabularMDP& mdp, const Policy& pi, const AllowedSets& allowed,
                                            double tol);

// Direct solve of (I - gamma P') V = R' for the merged policy.
Eigen::VectorXd merged_policy_value(const TabularMDP& mdp, const Policy& pi, const TabularNoise& noise);

}  // namespace snmdp
