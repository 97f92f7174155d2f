#include "snmdp/noise.hpp"

#include <algorithm>
#include <cmath>

#include "snmdp/error.hpp"

namespace snmdp {

Eigen::VectorXd apply_gaussian(const Eigen::VectorXd& state, double std, Rng& rng) {
  require(std >= 0.0, "apply_gaussian: std must be non-negative");
  Eigen::VectorXd out = state;
  if (std == 0.0) return out;
  std::normal_distribution<double> normal(0.0, std);
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) += normal(rng);
  return out;
}

int least_chosen_action(const Eigen::VectorXd& logits) {
  require(logits.size() > 0, "least_chosen_action: no actions");
  int best = 0;
  for (Eigen::Index i = 1; i < logits.size(); ++i)
    if (logits(i) < logits(best)) best = static_cast<int>(i);
  return best;
}

double cross_entropy_to_action(const Eigen::VectorXd& logits, int target) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits(target);
}

Eigen::VectorXd finite_difference_cross_entropy_grad(const PolicyLogits& policy, const Eigen::VectorXd& x,
                                                     int target, double step) {
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = step * std::max(1.0, std::abs(x(i)));
    probe(i) = x(i) + h;
    const double up = cross_entropy_to_action(policy.logits(probe), target);
    probe(i) = x(i) - h;
    const double down = cross_entropy_to_action(policy.logits(probe), target);
    probe(i) = x(i);
    grad(i) = (up - down) / (2.0 * h);
  }
  return grad;
}

Eigen::VectorXd pgd_perturbation(const Eigen::VectorXd& state, const PolicyLogits& policy,
                                 const PgdOptions& options) {
  require(options.epsilon >= 0.0, "pgd_perturbation: epsilon must be non-negative");
  require(options.iterations >= 1, "pgd_perturbation: iterations must be positive");
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(state.size());
  if (options.epsilon == 0.0) return eta;
  const double step = options.step_size.value_or(options.epsilon / options.iterations);
  require(step > 0.0, "pgd_perturbation: step size must be positive");

  const int target = least_chosen_action(policy.logits(state));
  auto objective = [&](const Eigen::VectorXd& e) {
    return cross_entropy_to_action(policy.logits(state + e), target);
  };
  auto gradient = [&](const Eigen::VectorXd& e) {
    return policy.cross_entropy_grad ? policy.cross_entropy_grad(state + e, target)
                                     : finite_difference_cross_entropy_grad(policy, state + e, target);
  };
  auto project = [&](Eigen::VectorXd e) {
    return e.cwiseMax(-options.epsilon).cwiseMin(options.epsilon).eval();
  };

  double current = options.backtrack ? objective(eta) : 0.0;
  for (int it = 0; it < options.iterations; ++it) {
    const Eigen::VectorXd direction = gradient(eta).unaryExpr([](double g) {
      return static_cast<double>((g > 0.0) - (g < 0.0));
    });
    if (!options.backtrack) {
      eta = project(eta - step * direction);
      continue;
    }
    double trial_step = step;
    for (int halving = 0; halving < 40; ++halving, trial_step *= 0.5) {
      Eigen::VectorXd candidate = project(eta - trial_step * direction);
      const double value = objective(candidate);
      if (value <= current) {
        eta = std::move(candidate);
        current = value;
        break;
      }
    }
  }
  return eta;
}

}  // namespace snmdp
