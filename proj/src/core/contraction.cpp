#include "snmdp/contraction.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "snmdp/envs.hpp"
#include "snmdp/error.hpp"
#include "snmdp/tabular.hpp"

namespace snmdp {

namespace {

constexpr double kRatioSlack = 1e-10;
constexpr double kFixedPointBound = 1e-8;
constexpr double kDistFixedPointBound = 1e-6;
constexpr double kPropertySlack = 1e-9;
constexpr std::uint64_t kPropertyStream = 1'000'000'000ULL;
constexpr std::uint64_t kMinimalityStream = 2'000'000'000ULL;

std::string p_name(double p) {
  if (std::isinf(p)) return "inf";
  std::ostringstream os;
  os << p;
  return os.str();
}

double sup_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

std::size_t uniform_size(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

Eigen::VectorXd random_values(Rng& rng, std::size_t n, double range) {
  std::uniform_real_distribution<double> u(-range, range);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = u(rng);
  return v;
}

ValueDistributionTable random_table(Rng& rng, std::size_t n, std::size_t m, std::size_t max_atoms, double range) {
  std::vector<AtomDistribution> entries;
  entries.reserve(n * m);
  for (std::size_t i = 0; i < n * m; ++i) entries.push_back(random_atom_distribution(rng, max_atoms, -range, range));
  return ValueDistributionTable(n, m, std::move(entries));
}

void for_each_selection(const AllowedSets& allowed, const std::function<void(const std::vector<std::size_t>&)>& f) {
  std::vector<std::size_t> pos(allowed.size(), 0), target(allowed.size());
  while (true) {
    for (std::size_t s = 0; s < allowed.size(); ++s) target[s] = allowed[s][pos[s]];
    f(target);
    std::size_t s = 0;
    while (s < allowed.size() && ++pos[s] == allowed[s].size()) pos[s++] = 0;
    if (s == allowed.size()) return;
  }
}

class Recorder {
 public:
  explicit Recorder(ContractionReport& report) : report_(report) {}

  void add(std::size_t mdp, const std::string& metric, double ratio, double bound) {
    ContractionRow row{report_.rows.size(), mdp, metric, ratio, bound, ratio <= bound};
    if (!row.pass) {
      std::ostringstream os;
      os.precision(17);
      os << "pair " << row.pair_id << " mdp " << mdp << " " << metric << ": " << ratio << " > " << bound;
      report_.counterexamples.push_back(os.str());
    }
    report_.rows.push_back(std::move(row));
  }

 private:
  ContractionReport& report_;
};

}  // namespace

void ContractionOptions::validate() const {
  if (min_states == 0 || min_states > max_states) throw ConfigError("tabular-contract: need 1 <= min_states <= max_states");
  if (min_actions == 0 || min_actions > max_actions)
    throw ConfigError("tabular-contract: need 1 <= min_actions <= max_actions");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("tabular-contract: gamma must be in (0, 1)");
  if (!(reward_max >= reward_min)) throw ConfigError("tabular-contract: empty reward range");
  if (max_set_size == 0 || minimality_max_set_size == 0) throw ConfigError("tabular-contract: set sizes must be positive");
  if (minimality_max_states == 0) throw ConfigError("tabular-contract: minimality_max_states must be positive");
  if (!(value_range > 0.0) || max_atoms == 0) throw ConfigError("tabular-contract: value range and atoms must be positive");
  if (!(fixed_point_tol > 0.0) || !(dist_fixed_point_tol > 0.0)) throw ConfigError("tabular-contract: tolerances must be positive");
  if (atom_cap < 2) throw ConfigError("tabular-contract: atom cap must be at least 2");
  for (double p : p_values)
    if (!(p >= 1.0)) throw ConfigError("tabular-contract: p values must be >= 1");
}

bool ContractionReport::all_pass() const {
  for (const auto& r : rows)
    if (!r.pass) return false;
  return true;
}

std::vector<MetricSummary> ContractionReport::summarize(const std::string& prefix) const {
  std::vector<MetricSummary> out;
  for (const auto& r : rows) {
    if (r.metric.compare(0, prefix.size(), prefix) != 0) continue;
    auto it = std::find_if(out.begin(), out.end(), [&](const MetricSummary& s) { return s.metric == r.metric; });
    if (it == out.end()) {
      out.push_back({r.metric, 0, 0, -std::numeric_limits<double>::infinity(), r.bound});
      it = out.end() - 1;
    }
    ++it->count;
    if (!r.pass) ++it->failures;
    it->max_ratio = std::max(it->max_ratio, r.ratio);
    it->bound = std::max(it->bound, r.bound);
  }
  return out;
}

ContractionReport tabular_contraction_suite(std::uint64_t seed, const ContractionOptions& o) {
  o.validate();
  ContractionReport report;
  Recorder rec(report);
  const double ratio_bound = o.gamma + kRatioSlack;

  for (std::size_t i = 0; i < o.trials; ++i) {
    Rng rng = make_stream(seed, i);
    const std::size_t n = uniform_size(rng, o.min_states, o.max_states);
    const std::size_t m = uniform_size(rng, o.min_actions, o.max_actions);
    const TabularMDP mdp = make_tabular({RandomMdpSpec{n, m, o.reward_min, o.reward_max, rng()}, o.gamma});
    const Policy pi = random_policy(rng, n, m);
    const TabularNoise noise = random_tabular_noise(rng, n, o.max_set_size);

    for (std::size_t pair = 0; pair < o.pairs_per_mdp; ++pair) {
      const Eigen::VectorXd v1 = random_values(rng, n, o.value_range);
      const Eigen::VectorXd v2 = random_values(rng, n, o.value_range);
      const double base = sup_norm(v1 - v2);
      rec.add(i, "expectation_random",
              sup_norm(bellman_backup(mdp, pi, noise, v1) - bellman_backup(mdp, pi, noise, v2)) / base, ratio_bound);
      if (o.adversarial)
        rec.add(i, "expectation_adversarial",
                sup_norm(adversarial_backup(mdp, pi, noise.allowed(), v1).v -
                         adversarial_backup(mdp, pi, noise.allowed(), v2).v) /
                    base,
                ratio_bound);
    }

    const Eigen::VectorXd direct = merged_policy_value(mdp, pi, noise);
    rec.add(i, "fixed_point_random", sup_norm(solve_fixed_point(mdp, pi, noise, o.fixed_point_tol) - direct),
            kFixedPointBound);
    if (o.adversarial) {
      const auto adv = adversarial_fixed_point(mdp, pi, noise.allowed(), o.fixed_point_tol);
      rec.add(i, "fixed_point_adversarial", sup_norm(adv.v - merged_policy_value(mdp, pi, adv.noise)),
              kFixedPointBound);
    }

    if (!o.distributional) continue;
    for (std::size_t pair = 0; pair < o.pairs_per_mdp; ++pair) {
      const auto z1 = random_table(rng, n, m, o.max_atoms, o.value_range);
      const auto z2 = random_table(rng, n, m, o.max_atoms, o.value_range);
      for (bool adversarial : {false, true}) {
        if (adversarial && !o.adversarial) continue;
        const auto t1 = dist_bellman_backup(mdp, pi, noise, z1, adversarial);
        const auto t2 = dist_bellman_backup(mdp, pi, noise, z2, adversarial);
        for (double p : o.p_values)
          rec.add(i, "dist_w" + p_name(p) + (adversarial ? "_adversarial" : "_random"),
                  max_wasserstein(t1, t2, p) / max_wasserstein(z1, z2, p), ratio_bound);
      }
    }
    const auto sol = dist_solve_fixed_point(mdp, pi, noise, false, o.dist_fixed_point_tol,
                                            CompressionOptions::for_mdp(mdp, o.atom_cap));
    rec.add(i, "dist_fixed_point", (sol.z.expectations() - action_values(mdp, direct)).cwiseAbs().maxCoeff(),
            kDistFixedPointBound);
  }

  if (o.property_instances > 0) {
    Rng rng = make_stream(seed, kPropertyStream);
    const PropertyReport props = wasserstein_property_suite(rng, o.property_instances);
    for (const auto& c : props.checks)
      rec.add(c.instance, "property_" + c.property + "_w" + p_name(c.p), c.lhs, c.rhs + kPropertySlack);
  }

  for (std::size_t i = 0; i < o.minimality_trials; ++i) {
    Rng rng = make_stream(seed, kMinimalityStream + i);
    const std::size_t n = uniform_size(rng, std::min<std::size_t>(2, o.minimality_max_states), o.minimality_max_states);
    const std::size_t m = uniform_size(rng, o.min_actions, o.max_actions);
    const TabularMDP mdp = make_tabular({RandomMdpSpec{n, m, o.reward_min, o.reward_max, rng()}, o.gamma});
    const Policy pi = random_policy(rng, n, m);
    const AllowedSets allowed = random_allowed_sets(rng, n, o.minimality_max_set_size);
    Eigen::VectorXd best = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), std::numeric_limits<double>::infinity());
    for_each_selection(allowed, [&](const std::vector<std::size_t>& target) {
      best = best.cwiseMin(solve_fixed_point(mdp, pi, TabularNoise::deterministic(allowed, target), o.fixed_point_tol));
    });
    const auto adv = adversarial_fixed_point(mdp, pi, allowed, o.fixed_point_tol);
    rec.add(i, "adversarial_minimality", sup_norm(adv.v - best), kFixedPointBound);
  }
  return report;
}

}  // namespace snmdp
