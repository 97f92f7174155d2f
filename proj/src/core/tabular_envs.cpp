#include <algorithm>
#include <numeric>

#include "snmdp/envs.hpp"
#include "snmdp/error.hpp"

namespace snmdp {

namespace {

TabularMDP make_chain(const ChainSpec& spec, double gamma) {
  require(spec.n >= 2, "chain: need at least two states");
  const std::size_t n = spec.n;
  std::vector<double> p(n * 2 * n, 0.0);
  std::vector<double> r(n * 2 * n, 0.0);
  auto at = [n](std::size_t s, std::size_t a, std::size_t next) { return (s * 2 + a) * n + next; };
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t left = s == 0 ? 0 : s - 1;
    const std::size_t right = std::min(s + 1, n - 1);
    p[at(s, 0, left)] += 0.9;
    p[at(s, 0, s)] += 0.1;
    p[at(s, 1, right)] += 0.9;
    p[at(s, 1, s)] += 0.1;
    for (std::size_t a = 0; a < 2; ++a) r[at(s, a, n - 1)] = 1.0;
  }
  return TabularMDP(n, 2, std::move(p), std::move(r), gamma);
}

TabularMDP make_random(const RandomMdpSpec& spec, double gamma) {
  require(spec.n_states > 0 && spec.n_actions > 0, "random mdp: counts must be positive");
  require(spec.reward_max >= spec.reward_min, "random mdp: empty reward range");
  Rng rng(splitmix64(spec.seed));
  const std::size_t n = spec.n_states;
  std::vector<double> p;
  p.reserve(n * spec.n_actions * n);
  for (std::size_t row = 0; row < n * spec.n_actions; ++row) {
    auto d = dirichlet_row(rng, n);
    p.insert(p.end(), d.begin(), d.end());
  }
  std::uniform_real_distribution<double> reward(spec.reward_min, spec.reward_max);
  std::vector<double> r(p.size());
  for (auto& x : r) x = reward(rng);
  return TabularMDP(n, spec.n_actions, std::move(p), std::move(r), gamma);
}

}  // namespace

TabularMDP make_tabular(const TabularEnvSpec& spec) {
  return std::visit(
      [&](const auto& kind) {
        if constexpr (std::is_same_v<std::decay_t<decltype(kind)>, ChainSpec>)
          return make_chain(kind, spec.gamma);
        else
          return make_random(kind, spec.gamma);
      },
      spec.kind);
}

std::vector<double> dirichlet_row(Rng& rng, std::size_t n) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> row(n);
  double total = 0.0;
  for (auto& x : row) total += (x = e(rng));
  for (auto& x : row) x /= total;
  return row;
}

Policy random_policy(Rng& rng, std::size_t n_states, std::size_t n_actions) {
  Eigen::MatrixXd probs(n_states, n_actions);
  for (std::size_t s = 0; s < n_states; ++s) {
    const auto row = dirichlet_row(rng, n_actions);
    for (std::size_t a = 0; a < n_actions; ++a) probs(s, a) = row[a];
  }
  return Policy(std::move(probs));
}

AllowedSets random_allowed_sets(Rng& rng, std::size_t n_states, std::size_t max_set_size) {
  require(max_set_size >= 1, "random_allowed_sets: set size must be positive");
  AllowedSets allowed(n_states);
  for (std::size_t s = 0; s < n_states; ++s) {
    std::vector<std::size_t> others(n_states);
    std::iota(others.begin(), others.end(), std::size_t{0});
    others.erase(others.begin() + static_cast<std::ptrdiff_t>(s));
    std::shuffle(others.begin(), others.end(), rng);
    const std::size_t extra = std::min(others.size(), static_cast<std::size_t>(rng() % max_set_size));
    allowed[s] = {s};
    allowed[s].insert(allowed[s].end(), others.begin(), others.begin() + static_cast<std::ptrdiff_t>(extra));
    std::sort(allowed[s].begin(), allowed[s].end());
  }
  return allowed;
}

TabularNoise random_tabular_noise(Rng& rng, std::size_t n_states, std::size_t max_set_size) {
  AllowedSets allowed = random_allowed_sets(rng, n_states, max_set_size);
  Eigen::MatrixXd kernel = Eigen::MatrixXd::Zero(n_states, n_states);
  for (std::size_t s = 0; s < n_states; ++s) {
    const auto row = dirichlet_row(rng, allowed[s].size());
    for (std::size_t i = 0; i < row.size(); ++i) kernel(s, allowed[s][i]) = row[i];
  }
  return TabularNoise(std::move(allowed), std::move(kernel));
}

}  // namespace snmdp
