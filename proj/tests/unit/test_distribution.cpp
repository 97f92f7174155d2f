#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "snmdp/distribution.hpp"
#include "snmdp/error.hpp"
#include "snmdp/tabular.hpp"

using namespace snmdp;
using snmdp::testing::merged_by_enumeration;
using snmdp::testing::random_mdp;

namespace {

double cdf(const AtomDistribution& d, double x) {
  double c = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d.atoms()[i] <= x) c += d.probs()[i];
  return c;
}

// d_1 as the area between CDFs, integrated on a fine grid.
double w1_by_cdf_grid(const AtomDistribution& a, const AtomDistribution& b, double lo, double hi, int n) {
  const double h = (hi - lo) / n;
  double area = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = lo + (i + 0.5) * h;
    area += std::abs(cdf(a, x) - cdf(b, x)) * h;
  }
  return area;
}

// Quantile function evaluated by bisection on the level grid.
double quantile(const AtomDistribution& d, double u) {
  double c = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    c += d.probs()[i];
    if (u < c) return d.atoms()[i];
  }
  return d.atoms().back();
}

double wp_by_levels(const AtomDistribution& a, const AtomDistribution& b, double p, int n) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = (i + 0.5) / n;
    acc += std::pow(std::abs(quantile(a, u) - quantile(b, u)), p) / n;
  }
  return std::pow(acc, 1.0 / p);
}

}  // namespace

TEST_CASE("AtomDistribution validation and construction") {
  CHECK_THROWS_AS(AtomDistribution({0.0, 1.0}, {0.5, 0.4}), ConfigError);
  CHECK_THROWS_AS(AtomDistribution({1.0, 0.0}, {0.5, 0.5}), ConfigError);
  CHECK_THROWS_AS(AtomDistribution({0.0}, {-1.0}), ConfigError);
  const auto d = AtomDistribution::from_weighted({{2.0, 0.25}, {1.0, 0.5}, {2.0 + 1e-12, 0.25}});
  REQUIRE(d.size() == 2);
  CHECK(d.atoms()[0] == 1.0);
  CHECK(d.probs()[1] == doctest::Approx(0.5));
  CHECK(d.mean() == doctest::Approx(1.5));
}

TEST_CASE("wasserstein identity and point masses") {
  Rng rng(1);
  const auto d = random_atom_distribution(rng, 6, -3, 3);
  for (double p : {1.0, 2.0, 3.0, kInfinityNorm}) {
    CHECK(wasserstein_p(d, d, p) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(wasserstein_p(AtomDistribution::point_mass(-1.5), AtomDistribution::point_mass(2.0), p) ==
          doctest::Approx(3.5).epsilon(1e-14));
  }
}

TEST_CASE("two-atom example agrees with CDF-area integration") {
  const AtomDistribution a({0.0, 1.0}, {0.5, 0.5});
  const AtomDistribution b({0.0, 1.0}, {0.25, 0.75});
  const double oracle = w1_by_cdf_grid(a, b, -1.0, 2.0, 1'000'000);
  CHECK(std::abs(oracle - 0.25) < 1e-5);
  CHECK(wasserstein_p(a, b, 1.0) == doctest::Approx(oracle).epsilon(1e-6));
  CHECK(wasserstein_p(a, b, kInfinityNorm) == doctest::Approx(1.0));
}

TEST_CASE("wasserstein matches a quantile-level oracle on random pairs") {
  for (int i = 0; i < 30; ++i) {
    Rng rng(100 + i);
    const auto a = random_atom_distribution(rng, 5, -2, 2);
    const auto b = random_atom_distribution(rng, 5, -2, 2);
    const double oracle = w1_by_cdf_grid(a, b, -3, 3, 200'000);
    CHECK(std::abs(wasserstein_p(a, b, 1.0) - oracle) < 1e-4);
    CHECK(std::abs(wasserstein_p(a, b, 2.0) - wp_by_levels(a, b, 2.0, 200'000)) < 1e-3);
  }
}

TEST_CASE("wasserstein is symmetric and satisfies the triangle inequality") {
  for (int i = 0; i < 100; ++i) {
    Rng rng(400 + i);
    const auto a = random_atom_distribution(rng, 6, -5, 5);
    const auto b = random_atom_distribution(rng, 6, -5, 5);
    const auto c = random_atom_distribution(rng, 6, -5, 5);
    for (double p : {1.0, 2.0, kInfinityNorm}) {
      CHECK(wasserstein_p(a, b, p) == wasserstein_p(b, a, p));
      CHECK(wasserstein_p(a, c, p) <= wasserstein_p(a, b, p) + wasserstein_p(b, c, p) + 1e-12);
    }
  }
}

TEST_CASE("convolution and indicator product") {
  const AtomDistribution x({0.0, 1.0}, {0.5, 0.5});
  const auto y = convolve(x, x);
  REQUIRE(y.size() == 3);
  CHECK(y.probs()[1] == doctest::Approx(0.5));
  const auto z = indicator_product(AtomDistribution({1.0, 2.0}, {0.5, 0.5}), 0.4);
  REQUIRE(z.size() == 3);
  CHECK(z.atoms()[0] == 0.0);
  CHECK(z.probs()[0] == doctest::Approx(0.6));
  CHECK(z.mean() == doctest::Approx(0.4 * 1.5));
}

TEST_CASE("wasserstein property suite holds") {
  Rng rng(2024);
  const auto report = wasserstein_property_suite(rng, 50);
  CHECK(report.checks.size() >= 50 * 3 * 3);
  CHECK_MESSAGE(report.all_pass(), report.first_counterexample());
}

TEST_CASE("grid projection preserves mass and mean") {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    std::vector<std::pair<double, double>> weighted;
    double total = 0.0, mean = 0.0;
    for (int j = 0; j < 40; ++j) {
      const double x = -4 + 8 * uniform01(rng), w = uniform01(rng);
      weighted.emplace_back(x, w);
      total += w;
    }
    for (auto& [x, w] : weighted) w /= total, mean += x * w;
    const auto d = project_to_grid(weighted, -5, 5, 17);
    CHECK(d.size() <= 17);
    CHECK(d.mean() == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("near-zero discount reduces the distributional backup to immediate rewards") {
  const TabularMDP mdp(2, 1, {0.3, 0.7, 1.0, 0.0}, {1.0, 2.0, 5.0, 6.0}, 1e-12);
  const auto z0 = ValueDistributionTable::constant(2, 1, AtomDistribution::point_mass(3.0));
  const auto z1 = dist_bellman_backup(mdp, Policy::uniform(2, 1), TabularNoise::identity(2), z0, false);
  REQUIRE(z1(0, 0).size() == 2);
  CHECK(z1(0, 0).atoms()[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(z1(0, 0).probs()[0] == doctest::Approx(0.3));
  CHECK(z1(0, 0).atoms()[1] == doctest::Approx(2.0).epsilon(1e-9));
  REQUIRE(z1(1, 0).size() == 1);
  CHECK(z1(1, 0).atoms()[0] == doctest::Approx(5.0).epsilon(1e-9));
}

TEST_CASE("distributional backup is consistent with the scalar action-value backup") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 800);
    const auto mdp = random_mdp(seed, 4, 2, 0.9);
    const Policy pi = random_policy(rng, 4, 2);
    const TabularNoise noise = random_tabular_noise(rng, 4, 3);
    std::vector<AtomDistribution> entries;
    for (int i = 0; i < 8; ++i) entries.push_back(random_atom_distribution(rng, 4, -2, 2));
    const ValueDistributionTable z(4, 2, entries);
    const Eigen::MatrixXd q = z.expectations();
    const Eigen::MatrixXd merged = merged_by_enumeration(noise.kernel(), pi.matrix());
    const auto next = dist_bellman_backup(mdp, pi, noise, z, false);
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t a = 0; a < 2; ++a) {
        double expected = 0.0;
        for (std::size_t sp = 0; sp < 4; ++sp) {
          double cont = 0.0;
          for (std::size_t ap = 0; ap < 2; ++ap) cont += merged(sp, ap) * q(sp, ap);
          expected += mdp.p(s, a, sp) * (mdp.r(s, a, sp) + mdp.gamma() * cont);
        }
        CHECK(std::abs(next(s, a).mean() - expected) <= 1e-10);
      }
  }
}

TEST_CASE("distributional backup contracts in sup-Wasserstein") {
  for (std::uint64_t i = 0; i < 100; ++i) {
    Rng rng(3000 + i);
    const std::size_t n = 2 + i % 3;
    const auto mdp = random_mdp(i, n, 2, 0.8);
    const Policy pi = random_policy(rng, n, 2);
    const TabularNoise noise = random_tabular_noise(rng, n, 2);
    std::vector<AtomDistribution> e1, e2;
    for (std::size_t k = 0; k < n * 2; ++k) {
      e1.push_back(random_atom_distribution(rng, 3, -3, 3));
      e2.push_back(random_atom_distribution(rng, 3, -3, 3));
    }
    const ValueDistributionTable z1(n, 2, e1), z2(n, 2, e2);
    const auto t1 = dist_bellman_backup(mdp, pi, noise, z1, false);
    const auto t2 = dist_bellman_backup(mdp, pi, noise, z2, false);
    for (double p : {1.0, kInfinityNorm})
      CHECK(max_wasserstein(t1, t2, p) <= mdp.gamma() * max_wasserstein(z1, z2, p) + 1e-9);
  }
}

TEST_CASE("distributional fixed point has the scalar fixed point as its mean") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed + 900);
    const auto mdp = random_mdp(seed, 3, 2, 0.8, 0.0, 1.0);
    const Policy pi = random_policy(rng, 3, 2);
    const TabularNoise noise = random_tabular_noise(rng, 3, 2);
    const auto sol = dist_solve_fixed_point(mdp, pi, noise, false, 1e-8, CompressionOptions::for_mdp(mdp, 256));
    const Eigen::VectorXd v = merged_policy_value(mdp, pi, noise);
    const Eigen::MatrixXd q = action_values(mdp, v);
    CHECK((sol.z.expectations() - q).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(sol.z.max_atoms() <= 256);
  }
}

TEST_CASE("expectation-greedy adversarial backup is not Lipschitz in sup-Wasserstein") {
  // Every transition lands in state 1; observing 0 there flips pi to action 1.
  const TabularMDP mdp(2, 2, {0, 1, 0, 1, 0, 1, 0, 1}, std::vector<double>(8, 0.0), 0.9);
  const Policy pi = Policy::deterministic(2, {1, 0});
  const TabularNoise noise = TabularNoise::deterministic({0, 0});
  const AtomDistribution spread({-1.0, 1.0}, {0.5, 0.5});
  const auto zero = AtomDistribution::point_mass(0.0);
  const auto near = AtomDistribution::point_mass(0.01);
  const ValueDistributionTable z1(2, 2, {zero, zero, spread, near});
  const ValueDistributionTable z2(2, 2, {zero, zero, spread.affine(1.0, 0.02), near});
  const double before = max_wasserstein(z1, z2, 1.0);
  const double after = max_wasserstein(dist_bellman_backup(mdp, pi, noise, z1, true),
                                       dist_bellman_backup(mdp, pi, noise, z2, true), 1.0);
  CHECK(before == doctest::Approx(0.02));
  CHECK(after > 10.0 * mdp.gamma() * before);
  // With the selection held fixed the same pair contracts.
  const auto fixed = TabularNoise::identity(2);
  CHECK(max_wasserstein(dist_bellman_backup(mdp, pi, fixed, z1, false), dist_bellman_backup(mdp, pi, fixed, z2, false),
                        1.0) <= mdp.gamma() * before + 1e-12);
}
