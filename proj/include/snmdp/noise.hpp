#pragma once

#include <functional>
#include <optional>
#include <variant>

#include <Eigen/Dense>

#include "snmdp/rng.hpp"

namespace snmdp {

struct GaussianNoise {
  double std = 0.0;
};

struct PgdNoise {
  double epsilon = 0.0;
  int iterations = 3;
  // Defaults to epsilon / iterations.
  std::optional<double> step_size;
};

// Observation perturbation for continuous states.
using ContinuousNoise = std::variant<GaussianNoise, PgdNoise>;

// Per-action policy logits at a state, with an optional analytic gradient of
// the cross-entropy -log softmax(logits(x))[target] with respect to x. When the
// gradient is absent, central finite differences are used.
struct PolicyLogits {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> logits;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, int)> cross_entropy_grad;
};

struct PgdOptions {
  double epsilon = 0.0;
  int iterations = 3;
  std::optional<double> step_size;
  // Halve the step until J does not increase (used by the monotone-descent
  // check); plain projected sign-gradient steps otherwise.
  bool backtrack = false;
};

Eigen::VectorXd apply_gaussian(const Eigen::VectorXd& state, double std, Rng& rng);

// Index of the action with the lowest policy probability (lowest logit), ties
// to the lowest index.
int least_chosen_action(const Eigen::VectorXd& logits);

// -log softmax(logits)[target], computed as logsumexp - logit.
double cross_entropy_to_action(const Eigen::VectorXd& logits, int target);

// Perturbation eta with ||eta||_inf <= epsilon that pushes the policy toward
// its least-chosen action at the unperturbed state.
Eigen::VectorXd pgd_perturbation(const Eigen::VectorXd& state, const PolicyLogits& policy,
                                 const PgdOptions& options);

// Central-difference gradient of the cross-entropy objective.
Eigen::VectorXd finite_difference_cross_entropy_grad(const PolicyLogits& policy, const Eigen::VectorXd& x,
                                                     int target, double step = 1e-5);

}  // namespace snmdp
