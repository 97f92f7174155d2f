#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "snmdp/mdp.hpp"
#include "snmdp/rng.hpp"

namespace snmdp {

// Finite-support return distribution: strictly increasing atoms with
// non-negative probabilities summing to one.
class AtomDistribution {
 public:
  AtomDistribution(std::vector<double> atoms, std::vector<double> probs);

  static AtomDistribution point_mass(double x);
  // Sorts weighted atoms, merges neighbours closer than `merge_tol` into their
  // mass-weighted mean and drops zero-mass atoms. Masses must sum to one.
  static AtomDistribution from_weighted(std::vector<std::pair<double, double>> weighted, double merge_tol = 1e-9);

  std::size_t size() const { return atoms_.size(); }
  const std::vector<double>& atoms() const { return atoms_; }
  const std::vector<double>& probs() const { return probs_; }
  double mean() const;

  // Distribution of scale * X + shift (scale may be negative or zero).
  AtomDistribution affine(double scale, double shift) const;

 private:
  std::vector<double> atoms_;
  std::vector<double> probs_;
};

inline constexpr double kInfinityNorm = std::numeric_limits<double>::infinity();

// p-Wasserstein distance between two atom distributions, computed exactly from
// their piecewise-constant quantile functions. p = kInfinityNorm gives the sup.
double wasserstein_p(const AtomDistribution& d1, const AtomDistribution& d2, double p);

// Distribution of X + Y for independent X and Y.
AtomDistribution convolve(const AtomDistribution& x, const AtomDistribution& y, double merge_tol = 1e-9);

// q * X + (1 - q) * delta_0, i.e. the law of I*X for an independent indicator
// I ~ Bernoulli(q).
AtomDistribution indicator_product(const AtomDistribution& x, double q);

// Table of return distributions Z(s, a).
class ValueDistributionTable {
 public:
  ValueDistributionTable(std::size_t n_states, std::size_t n_actions, std::vector<AtomDistribution> entries);

  static ValueDistributionTable constant(std::size_t n_states, std::size_t n_actions, const AtomDistribution& d);

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  const AtomDistribution& operator()(std::size_t s, std::size_t a) const { return entries_[s * n_actions_ + a]; }
  Eigen::MatrixXd expectations() const;
  std::size_t max_atoms() const;

 private:
  std::size_t n_states_;
  std::size_t n_actions_;
  std::vector<AtomDistribution> entries_;
};

// sup_{s,a} d_p(Z1(s,a), Z2(s,a))
double max_wasserstein(const ValueDistributionTable& z1, const ValueDistributionTable& z2, double p);

struct CompressionOptions {
  double merge_tol = 1e-9;
  std::size_t cap = 512;
  // Grid used once the atom count exceeds `cap`. A degenerate range (lo >= hi)
  // disables the projection.
  double grid_lo = 0.0;
  double grid_hi = 0.0;

  static CompressionOptions for_mdp(const TabularMDP& mdp, std::size_t cap = 512);
  static CompressionOptions exact() { return {1e-9, std::numeric_limits<std::size_t>::max(), 0.0, 0.0}; }
};

// Linear split of each atom's mass between its two neighbouring grid points on
// a uniform grid of `points` over [lo, hi]. Preserves total mass, and the mean
// for atoms inside the range; atoms outside are clamped to the ends.
AtomDistribution project_to_grid(const std::vector<std::pair<double, double>>& weighted, double lo, double hi,
                                 std::size_t points);

// One sweep of the distributional noisy-observation Bellman operator:
// Z(s,a) <- R(s,a,S') + gamma Z(S', A'), S' ~ p(.|s,a), V ~ N(.|S'),
// A' ~ pi(.|V). With `adversarial`, N is replaced by the greedy adversarial
// noise against the expectations of `z` over the allowed sets of `noise`.
ValueDistributionTable dist_bellman_backup(const TabularMDP& mdp, const Policy& pi, const TabularNoise& noise,
                                           const ValueDistributionTable& z, bool adversarial,
                                           const CompressionOptions& compression = CompressionOptions::exact());

struct DistributionalSolution {
  ValueDistributionTable z;
  std::size_t iterations = 0;
  double final_change = 0.0;
};

// Iterates dist_bellman_backup from point masses at zero until the max
// 1-Wasserstein change between sweeps is <= tol.
DistributionalSolution dist_solve_fixed_point(const TabularMDP& mdp, const Policy& pi, const TabularNoise& noise,
                                              bool adversarial, double tol, const CompressionOptions& compression,
                                              std::size_t max_iterations = 100'000);

struct PropertyCheck {
  std::size_t instance = 0;
  std::string property;
  double p = 1.0;
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = true;
};

struct PropertyReport {
  std::vector<PropertyCheck> checks;
  bool all_pass() const;
  // Human-readable description of the first failing check, empty if none.
  std::string first_counterexample() const;
};

// Randomised verification of the Wasserstein properties used by the
// distributional contraction argument: scaling, translation by an independent
// variable, and the partition inequality, each with 1e-9 slack.
PropertyReport wasserstein_property_suite(Rng& rng, std::size_t instances = 50);

AtomDistribution random_atom_distribution(Rng& rng, std::size_t max_atoms, double lo, double hi);

}  // namespace snmdp
