#include <doctest.h>

#include <cmath>

#include "snmdp/error.hpp"
#include "snmdp/noise.hpp"

using namespace snmdp;

namespace {

// Linear-softmax policy logits W x with its closed-form cross-entropy gradient
// W^T (softmax(Wx) - e_t).
struct LinearSoftmax {
  Eigen::MatrixXd w;

  PolicyLogits policy(bool analytic) const {
    PolicyLogits out;
    const Eigen::MatrixXd weights = w;
    out.logits = [weights](const Eigen::VectorXd& x) -> Eigen::VectorXd { return weights * x; };
    if (analytic) {
      out.cross_entropy_grad = [weights](const Eigen::VectorXd& x, int t) -> Eigen::VectorXd {
        Eigen::VectorXd z = weights * x;
        Eigen::VectorXd f = (z.array() - z.maxCoeff()).exp();
        f /= f.sum();
        f(t) -= 1.0;
        return weights.transpose() * f;
      };
    }
    return out;
  }
};

Eigen::VectorXd sign(const Eigen::VectorXd& v) {
  return v.unaryExpr([](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

}  // namespace

TEST_CASE("gaussian noise with zero std is the identity") {
  Rng rng(1);
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(4, -1, 2);
  CHECK(apply_gaussian(x, 0.0, rng) == x);
  CHECK_THROWS_AS(apply_gaussian(x, -0.1, rng), ConfigError);
}

TEST_CASE("gaussian noise is reproducible under a fixed seed") {
  Rng a(42), b(42);
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(4);
  CHECK(apply_gaussian(x, 0.3, a) == apply_gaussian(x, 0.3, b));
}

TEST_CASE("gaussian noise empirical moments") {
  Rng rng(7);
  const double sd = 0.5;
  const int n = 1'000'000;
  Eigen::VectorXd x(1);
  x << 2.0;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double e = apply_gaussian(x, sd, rng)(0) - 2.0;
    sum += e;
    sq += e * e;
  }
  CHECK(std::abs(sum / n) <= 3.0 * sd / std::sqrt(double(n)));
  CHECK(std::abs(std::sqrt(sq / n) - sd) <= 0.01 * sd);
}

TEST_CASE("least chosen action and cross-entropy") {
  Eigen::VectorXd z(3);
  z << 0.3, -1.0, -1.0;
  CHECK(least_chosen_action(z) == 1);
  const double lse = std::log(std::exp(0.3) + 2 * std::exp(-1.0));
  CHECK(cross_entropy_to_action(z, 1) == doctest::Approx(lse + 1.0).epsilon(1e-14));
}

TEST_CASE("pgd with zero budget is zero") {
  LinearSoftmax m{Eigen::MatrixXd::Random(3, 4)};
  const Eigen::VectorXd x = Eigen::VectorXd::Random(4);
  CHECK(pgd_perturbation(x, m.policy(true), {0.0, 3, std::nullopt, false}).isZero());
  CHECK_THROWS_AS(pgd_perturbation(x, m.policy(true), {-0.1, 3, std::nullopt, false}), ConfigError);
}

TEST_CASE("single large pgd step equals the signed closed-form gradient") {
  for (int trial = 0; trial < 20; ++trial) {
    std::srand(trial + 1);
    LinearSoftmax m{Eigen::MatrixXd::Random(3, 4)};
    const Eigen::VectorXd x = Eigen::VectorXd::Random(4);
    const double eps = 0.05;
    const Eigen::VectorXd z = m.w * x;
    const int target = least_chosen_action(z);
    Eigen::VectorXd f = (z.array() - z.maxCoeff()).exp();
    f /= f.sum();
    f(target) -= 1.0;
    const Eigen::VectorXd expected = -eps * sign(m.w.transpose() * f);
    for (bool analytic : {true, false}) {
      const auto eta = pgd_perturbation(x, m.policy(analytic), {eps, 1, 10 * eps, false});
      CHECK((eta - expected).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("finite differences agree with the analytic gradient") {
  LinearSoftmax m{Eigen::MatrixXd::Random(2, 3)};
  const Eigen::VectorXd x = Eigen::VectorXd::Random(3);
  const auto exact = m.policy(true).cross_entropy_grad(x, 1);
  const auto fd = finite_difference_cross_entropy_grad(m.policy(false), x, 1);
  CHECK((exact - fd).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("pgd respects the budget across random policies") {
  for (int trial = 0; trial < 200; ++trial) {
    std::srand(100 + trial);
    LinearSoftmax m{5.0 * Eigen::MatrixXd::Random(2 + trial % 3, 4)};
    const Eigen::VectorXd x = Eigen::VectorXd::Random(4);
    const double eps = 0.01 + 0.2 * (trial % 7);
    const auto eta = pgd_perturbation(x, m.policy(trial % 2 == 0), {eps, 1 + trial % 5, std::nullopt, false});
    CHECK(eta.cwiseAbs().maxCoeff() <= eps + 1e-15);
  }
}

TEST_CASE("backtracking pgd never increases the objective") {
  for (int trial = 0; trial < 100; ++trial) {
    std::srand(500 + trial);
    LinearSoftmax m{3.0 * Eigen::MatrixXd::Random(3, 4)};
    const Eigen::VectorXd x = Eigen::VectorXd::Random(4);
    const auto policy = m.policy(true);
    const int target = least_chosen_action(policy.logits(x));
    const double before = cross_entropy_to_action(policy.logits(x), target);
    const auto eta = pgd_perturbation(x, policy, {0.1, 5, std::nullopt, true});
    CHECK(cross_entropy_to_action(policy.logits(x + eta), target) <= before + 1e-12);
  }
}
