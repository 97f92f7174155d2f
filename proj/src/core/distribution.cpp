#include "snmdp/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "snmdp/error.hpp"

namespace snmdp {

namespace {

constexpr double kMassTol = 1e-10;
// Quantile breakpoints closer than this (in probability) are treated as
// coincident by the sup-distance; finite p is unaffected at this scale.
constexpr double kBreakpointTol = 1e-12;

using Weighted = std::vector<std::pair<double, double>>;

AtomDistribution merge_sorted(const Weighted& sorted, double merge_tol) {
  std::vector<double> atoms;
  std::vector<double> probs;
  atoms.reserve(sorted.size());
  probs.reserve(sorted.size());
  double cluster_start = 0.0;
  double mass = 0.0;
  double moment = 0.0;
  bool open = false;
  auto flush = [&] {
    if (!open || mass <= 0.0) return;
    double x = moment / mass;
    if (!atoms.empty() && x <= atoms.back()) x = std::nextafter(atoms.back(), kInfinityNorm);
    atoms.push_back(x);
    probs.push_back(mass);
  };
  for (const auto& [x, m] : sorted) {
    if (m <= 0.0) continue;
    if (open && x - cluster_start <= merge_tol) {
      mass += m;
      moment += m * x;
      continue;
    }
    flush();
    open = true;
    cluster_start = x;
    mass = m;
    moment = m * x;
  }
  flush();
  require(!atoms.empty(), "atom distribution: no positive mass");
  return AtomDistribution(std::move(atoms), std::move(probs));
}

// Bottom-up merge of consecutive sorted runs delimited by `bounds`.
void merge_runs(Weighted& data, std::vector<std::size_t> bounds) {
  while (bounds.size() > 2) {
    std::vector<std::size_t> next;
    next.reserve(bounds.size() / 2 + 2);
    std::size_t i = 0;
    for (; i + 2 < bounds.size(); i += 2) {
      std::inplace_merge(data.begin() + static_cast<std::ptrdiff_t>(bounds[i]),
                         data.begin() + static_cast<std::ptrdiff_t>(bounds[i + 1]),
                         data.begin() + static_cast<std::ptrdiff_t>(bounds[i + 2]));
      next.push_back(bounds[i]);
    }
    for (; i < bounds.size() - 1; ++i) next.push_back(bounds[i]);
    next.push_back(bounds.back());
    bounds = std::move(next);
  }
}

std::vector<double> cumulative(const AtomDistribution& d) {
  std::vector<double> c(d.size());
  std::partial_sum(d.probs().begin(), d.probs().end(), c.begin());
  c.back() = 1.0;
  return c;
}

}  // namespace

AtomDistribution::AtomDistribution(std::vector<double> atoms, std::vector<double> probs)
    : atoms_(std::move(atoms)), probs_(std::move(probs)) {
  require(!atoms_.empty(), "atom distribution: empty support");
  require(atoms_.size() == probs_.size(), "atom distribution: atoms and probs differ in length");
  double total = 0.0;
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    require(std::isfinite(atoms_[i]), "atom distribution: non-finite atom");
    require(probs_[i] >= 0.0, "atom distribution: negative probability");
    if (i > 0) require(atoms_[i] > atoms_[i - 1], "atom distribution: atoms must be strictly increasing");
    total += probs_[i];
  }
  require(std::abs(total - 1.0) <= kMassTol, "atom distribution: probabilities do not sum to 1");
}

AtomDistribution AtomDistribution::point_mass(double x) { return AtomDistribution({x}, {1.0}); }

AtomDistribution AtomDistribution::from_weighted(std::vector<std::pair<double, double>> weighted, double merge_tol) {
  std::sort(weighted.begin(), weighted.end());
  return merge_sorted(weighted, merge_tol);
}

double AtomDistribution::mean() const {
  double m = 0.0;
  for (std::size_t i = 0; i < atoms_.size(); ++i) m += atoms_[i] * probs_[i];
  return m;
}

AtomDistribution AtomDistribution::affine(double scale, double shift) const {
  Weighted w;
  w.reserve(atoms_.size());
  for (std::size_t i = 0; i < atoms_.size(); ++i) w.emplace_back(scale * atoms_[i] + shift, probs_[i]);
  return from_weighted(std::move(w), 0.0);
}

double wasserstein_p(const AtomDistribution& d1, const AtomDistribution& d2, double p) {
  require(p >= 1.0, "wasserstein_p: p must be >= 1");
  const bool sup = std::isinf(p);
  const auto c1 = cumulative(d1);
  const auto c2 = cumulative(d2);
  const auto& a1 = d1.atoms();
  const auto& a2 = d2.atoms();
  std::size_t i = 0;
  std::size_t j = 0;
  double omega = 0.0;
  double acc = 0.0;
  while (i < a1.size() && j < a2.size()) {
    const double next = std::min(c1[i], c2[j]);
    const double len = next - omega;
    if (len > 0.0) {
      const double diff = std::abs(a1[i] - a2[j]);
      if (sup) {
        if (len > kBreakpointTol) acc = std::max(acc, diff);
      } else if (p == 1.0) {
        acc += len * diff;
      } else {
        acc += len * std::pow(diff, p);
      }
      omega = next;
    }
    if (c1[i] <= next) ++i;
    if (c2[j] <= next) ++j;
  }
  if (sup || p == 1.0) return acc;
  return std::pow(acc, 1.0 / p);
}

AtomDistribution convolve(const AtomDistribution& x, const AtomDistribution& y, double merge_tol) {
  Weighted w;
  w.reserve(x.size() * y.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      w.emplace_back(x.atoms()[i] + y.atoms()[j], x.probs()[i] * y.probs()[j]);
  return AtomDistribution::from_weighted(std::move(w), merge_tol);
}

AtomDistribution indicator_product(const AtomDistribution& x, double q) {
  require(q >= 0.0 && q <= 1.0, "indicator_product: q must lie in [0, 1]");
  Weighted w;
  w.reserve(x.size() + 1);
  for (std::size_t i = 0; i < x.size(); ++i) w.emplace_back(x.atoms()[i], q * x.probs()[i]);
  w.emplace_back(0.0, 1.0 - q);
  return AtomDistribution::from_weighted(std::move(w), 0.0);
}

ValueDistributionTable::ValueDistributionTable(std::size_t n_states, std::size_t n_actions,
                                               std::vector<AtomDistribution> entries)
    : n_states_(n_states), n_actions_(n_actions), entries_(std::move(entries)) {
  require(entries_.size() == n_states_ * n_actions_, "value distribution table: wrong entry count");
}

ValueDistributionTable ValueDistributionTable::constant(std::size_t n_states, std::size_t n_actions,
                                                        const AtomDistribution& d) {
  return ValueDistributionTable(n_states, n_actions, std::vector<AtomDistribution>(n_states * n_actions, d));
}

Eigen::MatrixXd ValueDistributionTable::expectations() const {
  Eigen::MatrixXd out(n_states_, n_actions_);
  for (std::size_t s = 0; s < n_states_; ++s)
    for (std::size_t a = 0; a < n_actions_; ++a) out(s, a) = (*this)(s, a).mean();
  return out;
}

std::size_t ValueDistributionTable::max_atoms() const {
  std::size_t m = 0;
  for (const auto& e : entries_) m = std::max(m, e.size());
  return m;
}

double max_wasserstein(const ValueDistributionTable& z1, const ValueDistributionTable& z2, double p) {
  require(z1.n_states() == z2.n_states() && z1.n_actions() == z2.n_actions(),
          "max_wasserstein: table dimensions differ");
  double out = 0.0;
  for (std::size_t s = 0; s < z1.n_states(); ++s)
    for (std::size_t a = 0; a < z1.n_actions(); ++a) out = std::max(out, wasserstein_p(z1(s, a), z2(s, a), p));
  return out;
}

CompressionOptions CompressionOptions::for_mdp(const TabularMDP& mdp, std::size_t cap) {
  const double scale = 1.0 / (1.0 - mdp.gamma());
  double lo = std::min(0.0, mdp.min_reward()) * scale;
  double hi = std::max(0.0, mdp.max_reward()) * scale;
  if (hi <= lo) hi = lo + 1.0;
  return {1e-9, cap, lo, hi};
}

AtomDistribution project_to_grid(const std::vector<std::pair<double, double>>& weighted, double lo, double hi,
                                 std::size_t points) {
  require(points >= 2 && hi > lo, "project_to_grid: need at least two grid points over a non-empty range");
  const double spacing = (hi - lo) / static_cast<double>(points - 1);
  std::vector<double> mass(points, 0.0);
  for (const auto& [x, m] : weighted) {
    const double pos = (std::clamp(x, lo, hi) - lo) / spacing;
    auto i = static_cast<std::size_t>(std::floor(pos));
    if (i >= points - 1) i = points - 2;
    const double frac = std::clamp(pos - static_cast<double>(i), 0.0, 1.0);
    mass[i] += m * (1.0 - frac);
    mass[i + 1] += m * frac;
  }
  std::vector<double> atoms;
  std::vector<double> probs;
  for (std::size_t i = 0; i < points; ++i) {
    if (mass[i] <= 0.0) continue;
    atoms.push_back(lo + spacing * static_cast<double>(i));
    probs.push_back(mass[i]);
  }
  return AtomDistribution(std::move(atoms), std::move(probs));
}

ValueDistributionTable dist_bellman_backup(const TabularMDP& mdp, const Policy& pi, const TabularNoise& noise,
                                           const ValueDistributionTable& z, bool adversarial,
                                           const CompressionOptions& compression) {
  const auto n_s = mdp.n_states();
  const auto n_a = mdp.n_actions();
  require(z.n_states() == n_s && z.n_actions() == n_a, "dist_bellman_backup: table dimensions do not match the MDP");
  const Policy merged = adversarial
                            ? merged_policy(mdp, pi, greedy_adversarial_noise(mdp, pi, z.expectations(), noise.allowed()))
                            : merged_policy(mdp, pi, noise);
  const bool grid = compression.grid_hi > compression.grid_lo;
  const double gamma = mdp.gamma();

  std::vector<AtomDistribution> out;
  out.reserve(n_s * n_a);
  Weighted data;
  std::vector<std::size_t> bounds;
  for (std::size_t s = 0; s < n_s; ++s) {
    for (std::size_t a = 0; a < n_a; ++a) {
      data.clear();
      bounds.assign(1, 0);
      for (std::size_t next = 0; next < n_s; ++next) {
        const double p = mdp.p(s, a, next);
        if (p == 0.0) continue;
        const double reward = mdp.r(s, a, next);
        for (std::size_t an = 0; an < n_a; ++an) {
          const double w = p * merged(next, an);
          if (w == 0.0) continue;
          const auto& d = z(next, an);
          for (std::size_t i = 0; i < d.size(); ++i) data.emplace_back(reward + gamma * d.atoms()[i], w * d.probs()[i]);
          bounds.push_back(data.size());
        }
      }
      if (grid && data.size() > compression.cap) {
        // Projection is linear in mass, so merging near-coincident atoms first
        // changes the result only by the merge tolerance.
        out.push_back(project_to_grid(data, compression.grid_lo, compression.grid_hi, compression.cap));
        continue;
      }
      merge_runs(data, bounds);
      AtomDistribution d = merge_sorted(data, compression.merge_tol);
      if (grid && d.size() > compression.cap) {
        Weighted w;
        for (std::size_t i = 0; i < d.size(); ++i) w.emplace_back(d.atoms()[i], d.probs()[i]);
        d = project_to_grid(w, compression.grid_lo, compression.grid_hi, compression.cap);
      }
      out.push_back(std::move(d));
    }
  }
  return ValueDistributionTable(n_s, n_a, std::move(out));
}

DistributionalSolution dist_solve_fixed_point(const TabularMDP& mdp, const Policy& pi, const TabularNoise& noise,
                                              bool adversarial, double tol, const CompressionOptions& compression,
                                              std::size_t max_iterations) {
  require(tol > 0.0, "dist_solve_fixed_point: tol must be positive");
  ValueDistributionTable z =
      ValueDistributionTable::constant(mdp.n_states(), mdp.n_actions(), AtomDistribution::point_mass(0.0));
  for (std::size_t it = 1; it <= max_iterations; ++it) {
    ValueDistributionTable next = dist_bellman_backup(mdp, pi, noise, z, adversarial, compression);
    const double change = max_wasserstein(next, z, 1.0);
    z = std::move(next);
    if (change <= tol) return {std::move(z), it, change};
  }
  throw ConvergenceError("dist_solve_fixed_point: no convergence within " + std::to_string(max_iterations) +
                         " sweeps");
}

bool PropertyReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const PropertyCheck& c) { return c.pass; });
}

std::string PropertyReport::first_counterexample() const {
  for (const auto& c : checks) {
    if (c.pass) continue;
    std::ostringstream os;
    os.precision(17);
    os << "instance " << c.instance << " property " << c.property << " p=" << c.p << ": lhs " << c.lhs
       << " > rhs " << c.rhs;
    return os.str();
  }
  return {};
}

AtomDistribution random_atom_distribution(Rng& rng, std::size_t max_atoms, double lo, double hi) {
  const auto n = 1 + static_cast<std::size_t>(rng() % max_atoms);
  std::uniform_real_distribution<double> where(lo, hi);
  std::exponential_distribution<double> gamma1(1.0);
  Weighted w;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double m = gamma1(rng) + 1e-3;
    w.emplace_back(where(rng), m);
    total += m;
  }
  for (auto& [x, m] : w) m /= total;
  return AtomDistribution::from_weighted(std::move(w), 0.0);
}

PropertyReport wasserstein_property_suite(Rng& rng, std::size_t instances) {
  constexpr double kSlack = 1e-9;
  const double ps[] = {1.0, 2.0, kInfinityNorm};
  PropertyReport report;
  std::uniform_real_distribution<double> scalar(-3.0, 3.0);
  std::exponential_distribution<double> gamma1(1.0);
  for (std::size_t inst = 0; inst < instances; ++inst) {
    const AtomDistribution u = random_atom_distribution(rng, 6, -5.0, 5.0);
    const AtomDistribution v = random_atom_distribution(rng, 6, -5.0, 5.0);
    double a = scalar(rng);
    AtomDistribution shift = random_atom_distribution(rng, 4, -2.0, 2.0);
    if (inst == 0) a = 0.0;
    if (inst == 1) {
      a = 1.0;
      shift = AtomDistribution::point_mass(0.0);
    }
    const std::size_t pieces = 2 + static_cast<std::size_t>(rng() % 3);
    std::vector<double> q(pieces);
    double total = 0.0;
    for (auto& x : q) total += (x = gamma1(rng) + 1e-3);
    for (auto& x : q) x /= total;

    for (double p : ps) {
      const double base = wasserstein_p(u, v, p);
      const double scaled = wasserstein_p(u.affine(a, 0.0), v.affine(a, 0.0), p);
      report.checks.push_back({inst, "scaling", p, scaled, std::abs(a) * base, scaled <= std::abs(a) * base + kSlack});
      const double shifted = wasserstein_p(convolve(shift, u), convolve(shift, v), p);
      report.checks.push_back({inst, "translation", p, shifted, base, shifted <= base + kSlack});
      double parts = 0.0;
      for (double qi : q) parts += wasserstein_p(indicator_product(u, qi), indicator_product(v, qi), p);
      report.checks.push_back({inst, "partition", p, base, parts, base <= parts + kSlack});
    }
  }
  return report;
}

}  // namespace snmdp
