#pragma once

#include <cstdint>

#include "snmdp/envs.hpp"
#include "snmdp/mdp.hpp"
#include "snmdp/rng.hpp"

namespace snmdp::testing {

inline TabularMDP random_mdp(std::uint64_t seed, std::size_t n_states, std::size_t n_actions, double gamma = 0.9,
                             double rmin = -1.0, double rmax = 1.0) {
  return make_tabular({RandomMdpSpec{n_states, n_actions, rmin, rmax, seed}, gamma});
}

// Independent evaluation of a stationary policy: build P_pi and r_pi with
// explicit loops and solve the linear system.
inline Eigen::VectorXd evaluate_policy(const TabularMDP& mdp, const Eigen::MatrixXd& pi) {
  const auto n = static_cast<Eigen::Index>(mdp.n_states());
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
  for (std::size_t s = 0; s < mdp.n_states(); ++s)
    for (std::size_t a = 0; a < mdp.n_actions(); ++a)
      for (std::size_t next = 0; next < mdp.n_states(); ++next) {
        p(s, next) += pi(s, a) * mdp.p(s, a, next);
        r(s) += pi(s, a) * mdp.p(s, a, next) * mdp.r(s, a, next);
      }
  return (Eigen::MatrixXd::Identity(n, n) - mdp.gamma() * p).fullPivLu().solve(r);
}

// Explicit double sum: sum_v N(v|s) pi(a|v).
inline Eigen::MatrixXd merged_by_enumeration(const Eigen::MatrixXd& kernel, const Eigen::MatrixXd& pi) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(pi.rows(), pi.cols());
  for (Eigen::Index s = 0; s < pi.rows(); ++s)
    for (Eigen::Index a = 0; a < pi.cols(); ++a)
      for (Eigen::Index v = 0; v < kernel.cols(); ++v) out(s, a) += kernel(s, v) * pi(v, a);
  return out;
}

}  // namespace snmdp::testing
