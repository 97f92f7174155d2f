#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "snmdp/distribution.hpp"

namespace snmdp {

struct ContractionOptions {
  std::size_t trials = 100;  // random MDPs for the ratio and fixed-point batteries
  std::size_t min_states = 2;
  std::size_t max_states = 6;
  std::size_t min_actions = 2;
  std::size_t max_actions = 3;
  double gamma = 0.9;
  double reward_min = -1.0;
  double reward_max = 1.0;
  std::size_t max_set_size = 3;     // |B(s)|, including s
  std::size_t pairs_per_mdp = 1;    // per metric
  double value_range = 10.0;        // random V in [-r, r]
  std::size_t max_atoms = 3;        // random table entries
  std::vector<double> p_values = {1.0, kInfinityNorm};
  bool distributional = true;
  bool adversarial = true;
  double fixed_point_tol = 1e-12;
  double dist_fixed_point_tol = 1e-8;
  std::size_t atom_cap = 512;
  std::size_t property_instances = 50;
  // Adversarial minimality battery against exhaustive enumeration.
  std::size_t minimality_trials = 20;
  std::size_t minimality_max_states = 4;
  std::size_t minimality_max_set_size = 2;

  void validate() const;
};

// One CSV row: ratio is the measured quantity, bound its allowed maximum.
struct ContractionRow {
  std::size_t pair_id = 0;
  std::size_t mdp_id = 0;
  std::string metric;
  double ratio = 0.0;
  double bound = 0.0;
  bool pass = true;
};

struct MetricSummary {
  std::string metric;
  std::size_t count = 0;
  std::size_t failures = 0;
  double max_ratio = 0.0;
  double bound = 0.0;
};

struct ContractionReport {
  std::vector<ContractionRow> rows;
  std::vector<std::string> counterexamples;  // one description per failing row

  bool all_pass() const;
  // Summaries in first-appearance order; `prefix` filters metric names.
  std::vector<MetricSummary> summarize(const std::string& prefix = "") const;
};

// Metrics:
//   expectation_random, expectation_adversarial: ||TV1 - TV2|| / ||V1 - V2||
//   fixed_point_random, fixed_point_adversarial: sup error against the direct
//     merged-policy solve
//   dist_w<p>_random, dist_w<p>_adversarial: d_p(TZ1, TZ2) / d_p(Z1, Z2)
//   dist_fixed_point: sup error of fixed-point expectations against Q
//   property_<name>_w<p>: Wasserstein property suite, ratio = lhs, bound = rhs
//   adversarial_minimality: sup error against exhaustive enumeration
// MDP i draws from make_stream(seed, i), so rows do not depend on other trials.
ContractionReport tabular_contraction_suite(std::uint64_t seed, const ContractionOptions& options);

}  // namespace snmdp
