#include <doctest.h>

#include <cmath>
#include <functional>

#include "snmdp/error.hpp"
#include "snmdp/heads.hpp"

using namespace snmdp;

namespace {

Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                   double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double step = h * std::max(1.0, std::abs(x(i)));
    probe(i) = x(i) + step;
    const double up = f(probe);
    probe(i) = x(i) - step;
    const double down = f(probe);
    probe(i) = x(i);
    g(i) = (up - down) / (2 * step);
  }
  return g;
}

double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-300});
}

Eigen::VectorXd random_vector(Rng& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = d(rng);
  return v;
}

TargetHistogram random_target(Rng& rng, std::size_t k) {
  Eigen::VectorXd p = random_vector(rng, static_cast<Eigen::Index>(k)).cwiseAbs();
  return {p / p.sum()};
}

}  // namespace

TEST_CASE("least-squares state gradient") {
  LinearValueHead head{Eigen::VectorXd::Zero(3), std::nullopt};
  head.w(0) = 1.0;
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
  const auto g = ve_gradient_wrt_state(head, x, 3.0);
  CHECK(g(0) == -3.0);
  CHECK(g.tail(2).isZero());

  Rng rng(2);
  head.w = random_vector(rng, 3);
  const Eigen::VectorXd y = random_vector(rng, 3);
  CHECK(ve_gradient_wrt_state(head, y, head.value(y)).isZero());
  for (int i = 0; i < 20; ++i) {
    head.w = random_vector(rng, 5);
    const Eigen::VectorXd z = random_vector(rng, 5);
    const double u = random_vector(rng, 1)(0);
    const auto fd = central_difference([&](const Eigen::VectorXd& v) { return ve_loss(head, v, u); }, z);
    CHECK(relative_error(ve_gradient_wrt_state(head, z, u), fd) < 1e-7);
    CHECK(ve_gradient_wrt_state(head, z, u).norm() ==
          doctest::Approx(std::abs(u - head.value(z)) * head.w.norm()).epsilon(1e-12));
    LinearValueHead probe = head;
    const auto fdw = central_difference(
        [&](const Eigen::VectorXd& w) {
          probe.w = w;
          return ve_loss(probe, z, u);
        },
        head.w);
    CHECK(relative_error(ve_gradient_wrt_params(head, z, u), fdw) < 1e-7);
  }
}

TEST_CASE("nonlinear least-squares gradient") {
  Rng rng(3);
  SUBCASE("identity map reduces to the linear case") {
    const auto phi = NonlinearFeatureMap::identity(4);
    const Eigen::VectorXd theta = random_vector(rng, 4), x = random_vector(rng, 4);
    LinearValueHead head{theta, std::nullopt};
    CHECK(ve_gradient_wrt_state_nonlinear(phi, theta, x, 0.3) == ve_gradient_wrt_state(head, x, 0.3));
  }
  SUBCASE("matches finite differences and the l L bound") {
    for (Activation act : {Activation::tanh, Activation::softplus}) {
      const auto phi = NonlinearFeatureMap::random(rng, 4, 8, 2, act);
      const double L = phi.lipschitz_bound();
      for (int i = 0; i < 1000; ++i) {
        const Eigen::VectorXd theta = random_vector(rng, 8), x = random_vector(rng, 4, 2.0);
        const double u = random_vector(rng, 1)(0);
        const auto g = ve_gradient_wrt_state_nonlinear(phi, theta, x, u);
        const double residual = u - phi.forward(x).dot(theta);
        CHECK(g.norm() <= std::abs(residual) * theta.norm() * L * (1 + 1e-12));
        if (i < 20) {
          const auto fd = central_difference(
              [&](const Eigen::VectorXd& v) {
                const double r = u - phi.forward(v).dot(theta);
                return 0.5 * r * r;
              },
              x);
          CHECK(relative_error(g, fd) < 1e-6);
        }
      }
    }
  }
}

TEST_CASE("Lipschitz bound dominates observed difference quotients") {
  Rng rng(4);
  const auto phi = NonlinearFeatureMap::random(rng, 3, 16, 2, Activation::tanh);
  const double L = phi.lipschitz_bound();
  CHECK(phi.cheap_lipschitz_bound() >= L / 1.0201 - 1e-12);
  for (int i = 0; i < 2000; ++i) {
    const Eigen::VectorXd a = random_vector(rng, 3, 3.0), b = random_vector(rng, 3, 3.0);
    CHECK((phi.forward(a) - phi.forward(b)).norm() <= L * (a - b).norm());
  }
}

TEST_CASE("feature-map parameter gradients match finite differences") {
  Rng rng(5);
  auto phi = NonlinearFeatureMap::random(rng, 3, 5, 2, Activation::softplus);
  for (auto& layer : phi.layers()) layer.b = random_vector(rng, layer.b.size(), 0.3);
  const Eigen::VectorXd x = random_vector(rng, 3), c = random_vector(rng, 5);
  FeatureCache cache;
  phi.forward_batch(x, &cache);
  LayerGrads grads;
  phi.backward(cache, c, &grads);
  const Eigen::VectorXd analytic = NonlinearFeatureMap::flatten(grads);
  auto copy = phi;
  const auto fd = central_difference(
      [&](const Eigen::VectorXd& theta) {
        copy.set_parameters(theta);
        return copy.forward(x).dot(c);
      },
      phi.parameters());
  CHECK(relative_error(analytic, fd) < 1e-6);
}

TEST_CASE("unboundedness witnesses") {
  const auto w = ve_unboundedness_witness(1.0, 10.0);
  CHECK(w.x.norm() == doctest::Approx(11.0));
  CHECK(w.grad_norm > 10.0);
  for (double l : {0.5, 1.0, 5.0})
    for (double M : {1.0, 1e3, 1e8}) {
      const auto wit = ve_unboundedness_witness(l, M);
      CHECK(wit.head.w.norm() == doctest::Approx(l));
      CHECK(ve_gradient_wrt_state(wit.head, wit.x, wit.target).norm() > M);
      const auto td = ve_td_unboundedness_witness(l, M, 1.0, 0.99);
      CHECK(td.x_next.isZero());
      CHECK(ve_gradient_wrt_state(td.head, td.x, td.target).norm() > M);
    }
  Rng rng(6);
  const auto phi = NonlinearFeatureMap::random(rng, 4, 32, 2, Activation::softplus);
  const auto nl = ve_unboundedness_witness_nonlinear(phi, 1.0, 1e6, rng);
  CHECK(nl.theta.norm() == doctest::Approx(1.0));
  CHECK(ve_gradient_wrt_state_nonlinear(phi, nl.theta, nl.x, nl.target).norm() > 1e6);
}

TEST_CASE("histogram forward") {
  Eigen::MatrixXd same(3, 2);
  same << 1, 2, 1, 2, 1, 2;
  const HistogramHead uniform(HistogramHead::Linear{same}, 0.0, 1.0, 10.0);
  const auto f = histogram_forward(uniform, Eigen::Vector2d(0.3, -0.7));
  for (int i = 0; i < 3; ++i) CHECK(f(i) == doctest::Approx(1.0 / 3.0));

  Eigen::Vector2d scores(0.0, std::log(3.0));
  const auto g = softmax(scores);
  CHECK(g(0) == doctest::Approx(0.25));
  CHECK(g(1) == doctest::Approx(0.75));

  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    const auto head = HistogramHead::random_linear(rng, 20, 4, 5.0);
    const auto h = histogram_forward(head, random_vector(rng, 4, 100.0));
    CHECK(std::abs(h.sum() - 1.0) <= 1e-12);
    CHECK((h.array() >= 0.0).all());
  }
  // Dyadic scores: adding 1024 is exact, so the stabilised softmax is
  // bit-identical.
  const Eigen::VectorXd s = (random_vector(rng, 7) * 1024.0).array().round() / 1024.0;
  CHECK(softmax(s) == softmax((s.array() + 1024.0).matrix()));
  const Eigen::VectorXd t = random_vector(rng, 7);
  CHECK((softmax(t) - softmax((t.array() + 1024.0).matrix())).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("histogram loss") {
  Rng rng(8);
  const auto p = random_target(rng, 6);
  double entropy = 0.0;
  for (int i = 0; i < 6; ++i) entropy -= p.p(i) * std::log(p.p(i));
  CHECK(histogram_loss(p, p.p) == doctest::Approx(entropy).epsilon(1e-14));

  TargetHistogram one{Eigen::VectorXd::Zero(4)};
  one.p(2) = 1.0;
  const Eigen::Vector4d f(0.1, 0.2, 0.3, 0.4);
  CHECK(histogram_loss(one, f) == doctest::Approx(-std::log(0.3)));

  for (int i = 0; i < 50; ++i) {
    const auto q = random_target(rng, 9);
    const auto r = random_target(rng, 9);
    long double oracle = 0.0L;
    for (int j = 0; j < 9; ++j) oracle -= static_cast<long double>(q.p(j)) * std::log(static_cast<long double>(r.p(j)));
    CHECK(std::abs(histogram_loss(q, r.p) - static_cast<double>(oracle)) <= 1e-12);
    CHECK(histogram_loss(q, r.p) >= histogram_loss(q, q.p) - 1e-14);
  }
  CHECK_THROWS_AS(histogram_loss(one, Eigen::Vector4d(0.5, 0.5, 0.0, 0.0)), NumericError);
}

TEST_CASE("histogram gradients") {
  Rng rng(9);
  for (bool linear : {true, false}) {
    for (int i = 0; i < 20; ++i) {
      const auto head = linear ? HistogramHead::random_linear(rng, 5, 3, 2.0)
                               : HistogramHead::random_nonlinear(rng, 5, 3, 6, 2.0, Activation::tanh);
      const Eigen::VectorXd x = random_vector(rng, 3);
      const auto p = random_target(rng, 5);
      const auto loss_at = [&](const Eigen::VectorXd& v) { return histogram_loss_from_scores(p, head.scores(v)); };
      CHECK(relative_error(histogram_grad_wrt_state(head, x, p), central_difference(loss_at, x)) < 1e-7);

      const Eigen::MatrixXd rows = head.rows();
      const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(rows.data(), rows.size());
      const auto feature = linear ? x : std::get<HistogramHead::Nonlinear>(head.mode()).phi.forward(x);
      const auto fd_rows = central_difference(
          [&](const Eigen::VectorXd& r) {
            const Eigen::MatrixXd m = Eigen::Map<const Eigen::MatrixXd>(r.data(), rows.rows(), rows.cols());
            return histogram_loss_from_scores(p, m * feature);
          },
          flat);
      const Eigen::MatrixXd g_rows = histogram_grad_wrt_rows(head, x, p);
      CHECK(relative_error(Eigen::Map<const Eigen::VectorXd>(g_rows.data(), g_rows.size()), fd_rows) < 1e-6);

      if (!linear) {
        auto phi = std::get<HistogramHead::Nonlinear>(head.mode()).phi;
        const auto fd = central_difference(
            [&](const Eigen::VectorXd& theta) {
              phi.set_parameters(theta);
              return histogram_loss_from_scores(p, head.rows() * phi.forward(x));
            },
            phi.parameters());
        CHECK(relative_error(histogram_grad_wrt_feature_params(head, x, p), fd) < 1e-6);
      }
    }
  }
  const auto head = HistogramHead::random_linear(rng, 4, 3, 1.0);
  const Eigen::VectorXd x = random_vector(rng, 3);
  CHECK(histogram_grad_wrt_state(head, x, {histogram_forward(head, x)}).norm() < 1e-15);
}

TEST_CASE("histogram state gradient respects k l and k l L at extreme inputs") {
  GradientBoundOptions options;
  options.k_values = {2, 20};
  options.l_values = {0.5, 5.0};
  options.draws = 2000;
  const auto report = gradient_bound_analysis(11, options);
  CHECK(report.summaries.size() == 8);
  for (const auto& s : report.summaries) {
    CHECK(s.histogram_within);
    CHECK(s.witness_exceeds);
    CHECK(s.max_histogram_grad > 0.0);
  }
}

TEST_CASE("row-norm projection") {
  Eigen::MatrixXd inside(2, 2);
  inside << 0.1, 0.2, -0.3, 0.1;
  CHECK(project_row_norms(inside, 1.0) == inside);
  Eigen::MatrixXd twice(1, 2);
  twice << 1.2, 1.6;
  const auto halved = project_row_norms(twice, 1.0);
  CHECK(halved(0, 0) == doctest::Approx(0.6));
  CHECK(halved(0, 1) == doctest::Approx(0.8));
  Rng rng(10);
  for (int i = 0; i < 50; ++i) {
    Eigen::MatrixXd m(6, 4);
    for (int r = 0; r < 6; ++r) m.row(r) = random_vector(rng, 4, 3.0).transpose();
    const auto out = project_row_norms(m, 1.5);
    for (int r = 0; r < 6; ++r) {
      CHECK(out.row(r).norm() <= 1.5 + 1e-12);
      CHECK(out.row(r).dot(m.row(r)) == doctest::Approx(out.row(r).norm() * m.row(r).norm()));
    }
    CHECK(project_row_norms(out, 1.5) == out);
  }
  CHECK_THROWS_AS(project_row_norms(inside, 0.0), ConfigError);
}

TEST_CASE("target projection onto bins") {
  // Bins of width 0.25 on [0, 1]; centre of bin 3 is 0.875.
  const auto one = project_target_distribution(AtomDistribution::point_mass(0.875), 0.0, 1.0, 4);
  CHECK(one.p(3) == 1.0);
  const auto edge = project_target_distribution(AtomDistribution::point_mass(0.5), 0.0, 1.0, 4);
  CHECK(edge.p(1) == 1.0);
  const auto low = project_target_distribution(AtomDistribution::point_mass(-3.0), 0.0, 1.0, 4);
  CHECK(low.p(0) == 1.0);
  const auto high = project_target_distribution(AtomDistribution::point_mass(9.0), 0.0, 1.0, 4);
  CHECK(high.p(3) == 1.0);

  Rng rng(12);
  for (int i = 0; i < 50; ++i) {
    const auto d = random_atom_distribution(rng, 10, -0.5, 1.5);
    const auto t = project_target_distribution(d, 0.0, 1.0, 8);
    Eigen::VectorXd oracle = Eigen::VectorXd::Zero(8);
    for (std::size_t j = 0; j < d.size(); ++j) {
      const double x = d.atoms()[j];
      int bin = 0;
      for (int b = 0; b < 8; ++b)
        if (x > b / 8.0) bin = b;
      oracle(bin) += d.probs()[j];
    }
    CHECK((t.p - oracle).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(std::abs(t.p.sum() - 1.0) < 1e-12);
  }
}
