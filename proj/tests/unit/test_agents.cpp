#include <doctest.h>

#include <cmath>

#include "snmdp/agents.hpp"
#include "snmdp/error.hpp"

using namespace snmdp;

namespace {

AgentConfig small_config(LossKind kind, HeadMode mode) {
  AgentConfig c;
  c.loss_kind = kind;
  c.head_mode = mode;
  c.k = 5;
  c.width = 6;
  c.depth = 2;
  c.norm_bound = 2.0;
  c.v_min = -2.0;
  c.v_max = 8.0;
  c.gamma = 0.9;
  c.learning_rate = 1e-2;
  c.total_steps = 1000;
  return c;
}

std::vector<Transition> random_transitions(Rng& rng, std::size_t n, std::size_t dim, int n_actions) {
  std::normal_distribution<double> g;
  std::vector<Transition> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].observed_state = Eigen::VectorXd::NullaryExpr(static_cast<Eigen::Index>(dim), [&] { return g(rng); });
    out[i].observed_next_state =
        Eigen::VectorXd::NullaryExpr(static_cast<Eigen::Index>(dim), [&] { return g(rng); });
    out[i].action = static_cast<int>(rng() % static_cast<std::uint64_t>(n_actions));
    out[i].reward = g(rng);
    out[i].done = i % 4 == 3;
  }
  return out;
}

std::vector<const Transition*> pointers(const std::vector<Transition>& ts) {
  std::vector<const Transition*> out;
  for (const auto& t : ts) out.push_back(&t);
  return out;
}

// Perturb one online parameter at a time and compare central differences.
double gradient_relative_error(Agent& agent, const std::vector<const Transition*>& batch) {
  const Eigen::VectorXd theta = agent.online().parameters();
  const Eigen::VectorXd analytic = agent.batch_loss_gradient(batch);
  REQUIRE(analytic.size() == theta.size());
  Eigen::VectorXd numeric(theta.size());
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Eigen::VectorXd t = theta;
    t(i) += h;
    agent.online().set_parameters(t);
    const double up = agent.batch_loss(batch);
    t(i) -= 2 * h;
    agent.online().set_parameters(t);
    const double down = agent.batch_loss(batch);
    numeric(i) = (up - down) / (2 * h);
  }
  agent.online().set_parameters(theta);
  return (analytic - numeric).norm() / std::max(1e-12, numeric.norm());
}

}  // namespace

TEST_CASE("agent config validation") {
  AgentConfig c;
  CHECK_NOTHROW(c.validate());
  c.loss_kind = LossKind::histogram;
  CHECK_THROWS_AS(c.validate(), ConfigError);  // no norm bound
  c.norm_bound = 1.0;
  CHECK_NOTHROW(c.validate());
  c.k = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.k = 20;
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(noise_site_from_string("sideways"), ConfigError);
  CHECK(noise_site_from_string("both") == NoiseSite::both);
}

TEST_CASE("exploration decays linearly over the first 10% of steps") {
  AgentConfig c;
  c.total_steps = 1000;
  CHECK(c.epsilon_at(0) == 1.0);
  CHECK(c.epsilon_at(50) == doctest::Approx(1.0 - 0.5 * 0.98));
  CHECK(c.epsilon_at(100) == doctest::Approx(0.02));
  CHECK(c.epsilon_at(900) == doctest::Approx(0.02));
}

TEST_CASE("replay buffer is FIFO at capacity") {
  ReplayBuffer buffer(3);
  for (int i = 0; i < 5; ++i) buffer.push(Transition{Eigen::VectorXd::Constant(1, i), i, 0.0, {}, false});
  REQUIRE(buffer.size() == 3);
  CHECK(buffer.at(0).action == 2);
  CHECK(buffer.at(1).action == 3);
  CHECK(buffer.at(2).action == 4);
  CHECK_THROWS_AS(buffer.at(3), ConfigError);
}

TEST_CASE("replay sampling is uniform with replacement") {
  ReplayBuffer buffer(50);
  for (int i = 0; i < 80; ++i) buffer.push(Transition{Eigen::VectorXd::Zero(1), i, 0.0, {}, false});
  Rng rng(21);
  std::vector<std::size_t> counts(50, 0);
  const auto idx = buffer.sample_indices(rng, 100'000);
  for (auto i : idx) ++counts[i];
  const auto chi = chi_square_uniform(counts);
  CHECK(chi.p_value > 0.01);
  // Repeats occur, so sampling is with replacement.
  const auto few = buffer.sample_indices(rng, 60);
  std::vector<int> seen(50, 0);
  bool repeat = false;
  for (auto i : few) repeat = repeat || seen[i]++ > 0;
  CHECK(repeat);
}

TEST_CASE("chi-square p-value against tabulated quantiles") {
  // (60 - 50)^2 / 50 * 2 = 4; P(chi2_1 > 4) = erfc(sqrt(2)).
  const auto c = chi_square_uniform({60, 40});
  CHECK(c.statistic == doctest::Approx(4.0));
  CHECK(c.dof == 1);
  CHECK(c.p_value == doctest::Approx(std::erfc(std::sqrt(2.0))).epsilon(1e-12));
  const auto u = chi_square_uniform({25, 25, 25, 25, 25});
  CHECK(u.statistic == 0.0);
  CHECK(u.p_value == doctest::Approx(1.0));
  CHECK(chi_square_uniform({200, 0, 0, 0, 0}).p_value < 1e-100);
}

TEST_CASE("act: epsilon 1 is uniform, epsilon 0 is greedy with low-index ties") {
  Rng init(1);
  AgentConfig c = small_config(LossKind::least_squares, HeadMode::linear);
  c.norm_bound.reset();
  Agent agent(c, 2, 3, init);
  Rng rng(2);
  const Eigen::VectorXd x = Eigen::Vector2d(0.3, -0.7);
  std::vector<std::size_t> counts(3, 0);
  for (int i = 0; i < 10'000; ++i) ++counts[static_cast<std::size_t>(agent.act(x, 1.0, rng))];
  CHECK(chi_square_uniform(counts).p_value > 0.01);

  Eigen::MatrixXd rows(3, 2);
  rows << 1.0, 0.0, 0.5, 0.0, 1.0, 0.0;
  agent.online().set_rows(rows);
  agent.online().set_bias(Eigen::VectorXd::Zero(3));
  const Eigen::VectorXd pos = Eigen::Vector2d(1.0, 5.0);
  for (int i = 0; i < 100; ++i) CHECK(agent.act(pos, 0.0, rng) == 0);  // tie between 0 and 2
  CHECK(agent.act(-pos, 0.0, rng) == 1);
}

TEST_CASE("histogram greedy action matches an independent expectation oracle") {
  Rng init(3);
  AgentConfig c = small_config(LossKind::histogram, HeadMode::nonlinear);
  Agent agent(c, 3, 4, init);
  Rng rng(4);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::VectorXd x = Eigen::Vector3d(g(rng), g(rng), g(rng)) * 3.0;
    // Oracle: explicit exponentials over the raw scores, long double sums.
    const Eigen::VectorXd s = agent.online().scores(x).col(0);
    int best = 0;
    long double best_q = -1e300L;
    for (int a = 0; a < 4; ++a) {
      long double z = 0, q = 0;
      for (int i = 0; i < 5; ++i) z += std::exp(static_cast<long double>(s(a * 5 + i)));
      for (int i = 0; i < 5; ++i) {
        const long double centre = -2.0L + (i + 0.5L) * 2.0L;
        q += std::exp(static_cast<long double>(s(a * 5 + i))) / z * centre;
      }
      CHECK(static_cast<double>(q) == doctest::Approx(agent.q_values(x)(a)).epsilon(1e-12));
      if (q > best_q) {
        best_q = q;
        best = a;
      }
    }
    CHECK(agent.act(x, 0.0, rng) == best);
  }
}

TEST_CASE("least-squares update matches a hand SGD step") {
  Rng init(5);
  AgentConfig c = small_config(LossKind::least_squares, HeadMode::linear);
  c.norm_bound.reset();
  c.learning_rate = 0.1;
  Agent agent(c, 2, 2, init);
  Eigen::MatrixXd rows(2, 2);
  rows << 0.1, 0.2, 0.3, -0.1;
  agent.online().set_rows(rows);
  agent.online().set_bias(Eigen::VectorXd::Zero(2));
  agent.sync_target();
  const Transition t{Eigen::Vector2d(1.0, 2.0), 0, 1.0, Eigen::Vector2d(0.5, -1.0), false};
  // Q(x,0) = 0.5; target Q(x') = (-0.15, 0.25), U = 1 + 0.9 * 0.25 = 1.225.
  const double delta = 0.5 - 1.225;
  const auto diag = agent.update({&t});
  CHECK(diag.loss == doctest::Approx(0.5 * delta * delta).epsilon(1e-14));
  CHECK(diag.mean_state_grad_norm == doctest::Approx(std::abs(delta) * std::hypot(0.1, 0.2)).epsilon(1e-14));
  const auto& r = agent.online().rows();
  CHECK(r(0, 0) == doctest::Approx(0.1 - 0.1 * delta * 1.0).epsilon(1e-14));
  CHECK(r(0, 1) == doctest::Approx(0.2 - 0.1 * delta * 2.0).epsilon(1e-14));
  CHECK(r(1, 0) == 0.3);
  CHECK(r(1, 1) == -0.1);
  CHECK(agent.online().bias()(0) == doctest::Approx(-0.1 * delta).epsilon(1e-14));
  // The target network is untouched by the update.
  CHECK(agent.target().rows() == rows);

  SUBCASE("terminal transitions do not bootstrap") {
    Agent fresh(c, 2, 2, init);
    fresh.online().set_rows(rows);
    fresh.online().set_bias(Eigen::VectorXd::Zero(2));
    fresh.sync_target();
    const Transition end{Eigen::Vector2d(1.0, 2.0), 0, 1.0, Eigen::Vector2d(0.5, -1.0), true};
    CHECK(fresh.update({&end}).loss == doctest::Approx(0.5 * 0.25).epsilon(1e-14));
  }
}

TEST_CASE("least-squares update with exact targets leaves parameters unchanged") {
  Rng init(6);
  AgentConfig c = small_config(LossKind::least_squares, HeadMode::nonlinear);
  c.norm_bound.reset();
  Agent agent(c, 3, 2, init);
  const Eigen::VectorXd x = Eigen::Vector3d(0.2, -0.4, 1.0);
  Transition t{x, 1, agent.q_values(x)(1), Eigen::Vector3d::Zero(), true};
  const Eigen::VectorXd before = agent.online().parameters();
  const auto diag = agent.update({&t});
  CHECK(diag.loss == 0.0);
  CHECK(agent.online().parameters() == before);
}

TEST_CASE("parameter gradients match finite differences") {
  Rng rng(7);
  for (auto kind : {LossKind::least_squares, LossKind::histogram})
    for (auto mode : {HeadMode::linear, HeadMode::nonlinear}) {
      CAPTURE(to_string(kind));
      CAPTURE(to_string(mode));
      Agent agent(small_config(kind, mode), 3, 2, rng);
      // Move the online network away from the target.
      const auto warm = random_transitions(rng, 16, 3, 2);
      for (int i = 0; i < 5; ++i) agent.update(pointers(warm));
      const auto batch = random_transitions(rng, 8, 3, 2);
      CHECK(gradient_relative_error(agent, pointers(batch)) < 1e-6);
    }
}

TEST_CASE("histogram targets") {
  const Eigen::VectorXd q = (Eigen::VectorXd(5) << 0.1, 0.2, 0.4, 0.2, 0.1).finished();
  SUBCASE("terminal collapses to one-hot at the reward bin") {
    for (auto proj : {TargetProjection::overlap, TargetProjection::bin_mass}) {
      const auto p = histogram_td_target(q, 3.3, true, 0.9, -2.0, 8.0, proj);
      CHECK(p.p(2) == 1.0);
      CHECK(p.p.sum() == 1.0);
    }
  }
  SUBCASE("bin mass follows the containing bin of each shifted centre") {
    // Centres -1, 1, 3, 5, 7 -> 0.5 + 0.5 c = 0, 1, 2, 3, 4; boundary atoms 0 and 2 go down.
    const auto p = histogram_td_target(q, 0.5, false, 0.5, -2.0, 8.0, TargetProjection::bin_mass);
    const Eigen::VectorXd expected = (Eigen::VectorXd(5) << 0.1, 0.6, 0.3, 0.0, 0.0).finished();
    CHECK((p.p - expected).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("overlap mapping by direct integration") {
    Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
      Eigen::VectorXd w = Eigen::VectorXd::NullaryExpr(5, [&] { return -std::log(uniform01(rng)); });
      w /= w.sum();
      const double r = 6.0 * uniform01(rng) - 3.0, gamma = uniform01(rng);
      const auto p = histogram_td_target(w, r, false, gamma, -2.0, 8.0, TargetProjection::overlap);
      // Oracle: midpoint-rule integration of the shifted piecewise-uniform density.
      Eigen::VectorXd oracle = Eigen::VectorXd::Zero(5);
      const int n = 2000;
      for (int j = 0; j < 5; ++j)
        for (int s = 0; s < n; ++s) {
          const double v = r + gamma * (-2.0 + 2.0 * (j + (s + 0.5) / n));
          const double t = std::clamp((v + 2.0) / 2.0, 0.0, 4.999999);
          oracle(static_cast<int>(t)) += w(j) / n;
        }
      CHECK(p.p.sum() == doctest::Approx(1.0).epsilon(1e-14));
      CHECK((p.p - oracle).cwiseAbs().maxCoeff() < 2e-3);
      CHECK(p.p.minCoeff() >= 0.0);
    }
  }
  SUBCASE("overlap mapping keeps the mean within half a bin inside the support") {
    const auto p = histogram_td_target(q, 1.0, false, 0.5, -2.0, 8.0, TargetProjection::overlap);
    const Eigen::VectorXd centres = (Eigen::VectorXd(5) << -1, 1, 3, 5, 7).finished();
    // Shifted support [0, 5] lies inside [-2, 8]: masses 0.3, 0.6, 0.1 on bins 1..3.
    const Eigen::VectorXd expected = (Eigen::VectorXd(5) << 0.0, 0.3, 0.6, 0.1, 0.0).finished();
    CHECK((p.p - expected).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(std::abs(p.p.dot(centres) - (1.0 + 0.5 * q.dot(centres))) <= 1.0);
  }
}

TEST_CASE("histogram update with matching prediction has zero row gradient") {
  Rng init(9);
  AgentConfig c = small_config(LossKind::histogram, HeadMode::linear);
  c.k = 4;
  c.v_min = 0.0;
  c.v_max = 4.0;
  Agent agent(c, 2, 2, init);
  // Zero rows and biases set to log p make f = p at any state.
  const Eigen::Vector4d p(0.0, 0.0, 1.0, 0.0);
  Eigen::VectorXd bias = Eigen::VectorXd::Constant(8, -800.0);
  bias(2) = 0.0;
  agent.online().set_rows(Eigen::MatrixXd::Zero(8, 2));
  agent.online().set_bias(bias);
  // Terminal reward 2.5 sits in bin 2.
  const Transition t{Eigen::Vector2d(0.4, -1.0), 0, 2.5, Eigen::Vector2d::Zero(), true};
  const Eigen::VectorXd grad = agent.batch_loss_gradient({&t});
  CHECK(grad.cwiseAbs().maxCoeff() < 1e-300);
  CHECK(agent.distributions(t.observed_state).col(0).isApprox(p));
}

TEST_CASE("policy logits gradient matches finite differences") {
  Rng rng(10);
  for (auto kind : {LossKind::least_squares, LossKind::histogram}) {
    Agent agent(small_config(kind, HeadMode::nonlinear), 3, 3, rng);
    const auto logits = agent.policy_logits(0.7);
    for (int trial = 0; trial < 10; ++trial) {
      const Eigen::VectorXd x = Eigen::Vector3d::Random();
      const int target = trial % 3;
      const Eigen::VectorXd analytic = logits.cross_entropy_grad(x, target);
      PolicyLogits numeric_only{logits.logits, {}};
      const Eigen::VectorXd numeric = finite_difference_cross_entropy_grad(numeric_only, x, target, 1e-6);
      CHECK((analytic - numeric).norm() <= 1e-6 * std::max(1e-8, numeric.norm()));
    }
  }
}

TEST_CASE("run_episode noise sites") {
  Rng init(11);
  AgentConfig c = small_config(LossKind::least_squares, HeadMode::nonlinear);
  c.norm_bound.reset();
  Agent agent(c, 4, 2, init);
  ControlEnv env(ControlTask::cartpole);
  // Scripted policy driven by the observation, so perturbations matter.
  const ActionFn scripted = [](const Eigen::VectorXd& obs) { return obs(2) + 0.5 * obs(3) > 0.0 ? 1 : 0; };
  const LogitsFn adversary = [&] { return agent.policy_logits(1.0); };
  auto run = [&](const NoiseInjection& inj) {
    Rng env_rng(12), noise_rng(13);
    return run_episode(env, inj, scripted, adversary, env_rng, noise_rng);
  };

  const auto clean = run(NoiseInjection{});
  REQUIRE(clean.transitions.size() == clean.steps);
  CHECK(clean.ret == static_cast<double>(clean.steps));
  for (std::size_t t = 0; t < clean.transitions.size(); ++t) {
    CHECK(clean.transitions[t].observed_state == clean.true_states[t]);
    CHECK(clean.transitions[t].observed_next_state == clean.true_states[t + 1]);
  }

  SUBCASE("zero-strength noise reproduces the clean run") {
    for (auto site : {NoiseSite::current, NoiseSite::next, NoiseSite::both}) {
      const auto g = run(NoiseInjection{site, GaussianNoise{0.0}});
      const auto a = run(NoiseInjection{site, PgdNoise{0.0, 3, std::nullopt}});
      for (const auto* ep : {&g, &a}) {
        REQUIRE(ep->steps == clean.steps);
        for (std::size_t t = 0; t < clean.transitions.size(); ++t) {
          CHECK(ep->transitions[t].observed_state == clean.transitions[t].observed_state);
          CHECK(ep->transitions[t].observed_next_state == clean.transitions[t].observed_next_state);
          CHECK(ep->transitions[t].action == clean.transitions[t].action);
        }
      }
    }
  }

  SUBCASE("both reuses the perturbed next observation as the next current one") {
    for (NoiseInjection inj : {NoiseInjection{NoiseSite::both, GaussianNoise{0.05}},
                               NoiseInjection{NoiseSite::both, PgdNoise{0.05, 3, std::nullopt}}}) {
      const auto ep = run(inj);
      REQUIRE(ep.steps > 2);
      for (std::size_t t = 0; t + 1 < ep.transitions.size(); ++t)
        CHECK(ep.transitions[t].observed_next_state == ep.transitions[t + 1].observed_state);
      for (std::size_t t = 0; t < ep.transitions.size(); ++t) {
        CHECK(ep.transitions[t].observed_state != ep.true_states[t]);
        CHECK((ep.transitions[t].observed_state - ep.true_states[t]).cwiseAbs().maxCoeff() < 0.5);
      }
    }
  }

  SUBCASE("current and next perturb only their own slot") {
    const auto cur = run(NoiseInjection{NoiseSite::current, GaussianNoise{0.05}});
    const auto nxt = run(NoiseInjection{NoiseSite::next, GaussianNoise{0.05}});
    for (std::size_t t = 0; t < cur.transitions.size(); ++t) {
      CHECK(cur.transitions[t].observed_next_state == cur.true_states[t + 1]);
      CHECK(cur.transitions[t].observed_state != cur.true_states[t]);
    }
    // The scripted policy acts on clean states under `next`, matching the clean run.
    REQUIRE(nxt.steps == clean.steps);
    for (std::size_t t = 0; t < nxt.transitions.size(); ++t) {
      CHECK(nxt.transitions[t].observed_state == clean.true_states[t]);
      CHECK(nxt.transitions[t].observed_next_state != clean.true_states[t + 1]);
    }
  }

  SUBCASE("pgd stays within the epsilon ball") {
    const auto ep = run(NoiseInjection{NoiseSite::current, PgdNoise{0.1, 3, std::nullopt}});
    for (std::size_t t = 0; t < ep.transitions.size(); ++t)
      CHECK((ep.transitions[t].observed_state - ep.true_states[t]).cwiseAbs().maxCoeff() <= 0.1 + 1e-15);
  }
}

TEST_CASE("target network syncs exactly and is frozen between syncs") {
  Rng rng(14);
  AgentConfig c = small_config(LossKind::histogram, HeadMode::nonlinear);
  c.target_sync = 3;
  Agent agent(c, 3, 2, rng);
  const auto batch = random_transitions(rng, 8, 3, 2);
  Eigen::VectorXd frozen = agent.target().parameters();
  for (int u = 1; u <= 9; ++u) {
    agent.update(pointers(batch));
    if (u % 3 == 0) {
      CHECK(agent.target().parameters() == agent.online().parameters());
      frozen = agent.target().parameters();
    } else {
      CHECK(agent.target().parameters() == frozen);
      CHECK(agent.target().parameters() != agent.online().parameters());
    }
  }
}

TEST_CASE("row norms stay within the bound after updates") {
  Rng rng(15);
  AgentConfig c = small_config(LossKind::histogram, HeadMode::nonlinear);
  c.learning_rate = 5.0;
  Agent agent(c, 3, 2, rng);
  const auto batch = random_transitions(rng, 16, 3, 2);
  for (int u = 0; u < 20; ++u) {
    agent.update(pointers(batch));
    CHECK(agent.online().rows().rowwise().norm().maxCoeff() <= 2.0);
  }
}

TEST_CASE("short training runs: histogram gradients within k l L, reproducible") {
  TrainConfig cfg;
  cfg.agent.loss_kind = LossKind::histogram;
  cfg.agent.norm_bound = 5.0;
  cfg.agent.v_max = 20.0;
  cfg.agent.gamma = 0.95;
  cfg.agent.learning_rate = 3.2e-2;
  cfg.agent.total_steps = 3000;
  cfg.agent.learning_starts = 200;
  cfg.injection = NoiseInjection{NoiseSite::both, GaussianNoise{0.1}};
  const auto a = train(cfg, 99);
  CHECK_FALSE(a.diverged);
  CHECK(a.total_updates == 3000 - 199);
  CHECK(a.bound_violations == 0);
  CHECK(a.max_grad_to_bound > 0.0);
  CHECK(a.max_grad_to_bound <= 1.0);
  CHECK(a.target_sync_consistent);
  const auto b = train(cfg, 99);
  REQUIRE(a.episodes.size() == b.episodes.size());
  for (std::size_t i = 0; i < a.episodes.size(); ++i) {
    CHECK(a.episodes[i].ret == b.episodes[i].ret);
    CHECK(a.episodes[i].mean_state_grad_norm == b.episodes[i].mean_state_grad_norm);
  }
  const auto other = train(cfg, 100);
  bool differs = other.episodes.size() != a.episodes.size();
  for (std::size_t i = 0; !differs && i < a.episodes.size(); ++i) differs = a.episodes[i].ret != other.episodes[i].ret;
  CHECK(differs);
}
