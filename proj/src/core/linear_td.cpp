#include "snmdp/linear_td.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "snmdp/envs.hpp"
#include "snmdp/error.hpp"

namespace snmdp {

namespace {

bool uses_current(NoiseCase c) { return c == NoiseCase::current || c == NoiseCase::both; }
bool uses_next(NoiseCase c) { return c == NoiseCase::next || c == NoiseCase::both; }

Eigen::MatrixXd current_features(const LinearTDSystem& sys, NoiseCase c) {
  return uses_current(c) ? Eigen::MatrixXd(sys.X + sys.E) : sys.X;
}
Eigen::MatrixXd next_features(const LinearTDSystem& sys, NoiseCase c) {
  return uses_next(c) ? Eigen::MatrixXd(sys.X + sys.E) : sys.X;
}

// Positivity pattern of P^k for k up to the Wielandt bound (n-1)^2 + 1.
bool is_primitive(const Eigen::MatrixXd& p) {
  const auto n = p.rows();
  using Pattern = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;
  const Pattern base = (p.array() > 0.0).cast<int>();
  Pattern power = base;
  const Eigen::Index bound = (n - 1) * (n - 1) + 1;
  for (Eigen::Index k = 1; k < bound; ++k) {
    if ((power.array() > 0).all()) return true;
    power = ((power * base).array() > 0).cast<int>();
  }
  return (power.array() > 0).all();
}

Eigen::VectorXd random_normal_vector(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

Eigen::MatrixXd random_normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace

void LinearTDSystem::validate() const {
  const auto n = X.rows();
  require(n > 0 && X.cols() > 0, "LinearTDSystem: empty feature matrix");
  require(P.rows() == n && P.cols() == n, "LinearTDSystem: P must be |S| x |S|");
  require(mu.size() == n, "LinearTDSystem: mu must have |S| entries");
  require(E.rows() == n && E.cols() == X.cols(), "LinearTDSystem: E must match X");
  require(R.rows() == n && R.cols() == n, "LinearTDSystem: R must be |S| x |S|");
  require(gamma > 0.0 && gamma < 1.0, "LinearTDSystem: gamma must lie in (0, 1)");
  require((P.array() >= 0.0).all(), "LinearTDSystem: negative transition probability");
  for (Eigen::Index s = 0; s < n; ++s)
    require(std::abs(P.row(s).sum() - 1.0) <= 1e-12, "LinearTDSystem: P rows must sum to 1");
  require((mu.array() >= 0.0).all() && std::abs(mu.sum() - 1.0) <= 1e-12,
          "LinearTDSystem: mu must be a probability vector");
  require((mu.transpose() * P - mu.transpose()).cwiseAbs().maxCoeff() <= 1e-10,
          "LinearTDSystem: mu is not stationary for P");
}

LinearTDSystem make_linear_system(Eigen::MatrixXd X, Eigen::MatrixXd P, Eigen::MatrixXd R, double gamma,
                                  Eigen::MatrixXd E) {
  LinearTDSystem sys;
  sys.mu = stationary_distribution(P);
  sys.X = std::move(X);
  sys.P = std::move(P);
  sys.R = std::move(R);
  sys.E = std::move(E);
  sys.gamma = gamma;
  sys.validate();
  return sys;
}

const char* to_string(NoiseCase c) {
  switch (c) {
    case NoiseCase::none: return "none";
    case NoiseCase::current: return "current";
    case NoiseCase::next: return "next";
    case NoiseCase::both: return "both";
  }
  return "none";
}

NoiseCase noise_case_from_string(const std::string& name) {
  for (NoiseCase c : kAllNoiseCases)
    if (name == to_string(c)) return c;
  throw ConfigError("unknown noise case '" + name + "' (expected none, current, next or both)");
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& P) {
  require(P.rows() == P.cols() && P.rows() > 0, "stationary_distribution: P must be square and non-empty");
  if (!is_primitive(P)) throw AnalysisError("stationary_distribution: chain is reducible or periodic");
  const auto n = P.rows();
  Eigen::RowVectorXd mu = Eigen::RowVectorXd::Constant(n, 1.0 / static_cast<double>(n));
  constexpr std::size_t kMaxIterations = 10'000'000;
  for (std::size_t it = 0;; ++it) {
    Eigen::RowVectorXd next = mu * P;
    next /= next.sum();
    const double change = (next - mu).cwiseAbs().maxCoeff();
    mu = std::move(next);
    if (change <= 1e-13) break;
    if (it == kMaxIterations) throw ConvergenceError("stationary_distribution: power iteration did not converge");
  }
  if ((mu * P - mu).cwiseAbs().maxCoeff() > 1e-10)
    throw AnalysisError("stationary_distribution: residual above 1e-10");
  return mu.transpose();
}

Eigen::MatrixXd build_convergence_matrix(const LinearTDSystem& sys, NoiseCase c) {
  sys.validate();
  const Eigen::MatrixXd xt = current_features(sys, c);
  const Eigen::MatrixXd xn = next_features(sys, c);
  const auto n = sys.X.rows();
  const auto d = sys.X.cols();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index s = 0; s < n; ++s)
    for (Eigen::Index sp = 0; sp < n; ++sp) {
      const double w = sys.mu(s) * sys.P(s, sp);
      if (w == 0.0) continue;
      m.noalias() += w * xt.row(s).transpose() * (xt.row(s) - sys.gamma * xn.row(sp));
    }

  const Eigen::MatrixXd D = sys.D();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd XE = sys.X + sys.E;
  const Eigen::MatrixXd A = sys.X.transpose() * D * (I - sys.gamma * sys.P) * sys.X;
  const Eigen::MatrixXd A_both = XE.transpose() * D * (I - sys.gamma * sys.P) * XE;
  Eigen::MatrixXd factored;
  switch (c) {
    case NoiseCase::none: factored = A; break;
    case NoiseCase::current: factored = A_both + sys.gamma * XE.transpose() * D * sys.P * sys.E; break;
    case NoiseCase::next: factored = A - sys.gamma * sys.X.transpose() * D * sys.P * sys.E; break;
    case NoiseCase::both: factored = A_both; break;
  }
  const double scale = 1.0 + m.cwiseAbs().maxCoeff();
  if ((m - factored).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw NumericError(std::string("build_convergence_matrix: sum and factored form disagree for case ") +
                       to_string(c));
  return m;
}

Eigen::VectorXd build_convergence_vector(const LinearTDSystem& sys, NoiseCase c) {
  sys.validate();
  const Eigen::MatrixXd xt = current_features(sys, c);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(sys.X.cols());
  for (Eigen::Index s = 0; s < sys.X.rows(); ++s)
    for (Eigen::Index sp = 0; sp < sys.X.rows(); ++sp)
      b += sys.mu(s) * sys.P(s, sp) * sys.R(s, sp) * xt.row(s).transpose();
  return b;
}

Eigen::VectorXd td_fixed_point(const LinearTDSystem& sys, NoiseCase c) {
  const Eigen::MatrixXd a = build_convergence_matrix(sys, c);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible()) throw AnalysisError("td_fixed_point: singular convergence matrix");
  return lu.solve(build_convergence_vector(sys, c));
}

Eigen::VectorXd jacobi_eigenvalues(const Eigen::MatrixXd& symmetric, double tol) {
  require(symmetric.rows() == symmetric.cols(), "jacobi_eigenvalues: matrix must be square");
  Eigen::MatrixXd a = symmetric;
  const auto n = a.rows();
  const double norm = std::max(a.norm(), std::numeric_limits<double>::min());
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (std::sqrt(2.0 * off) <= tol * norm) break;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double cs = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * cs;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = cs * akp - sn * akq;
          a(k, q) = sn * akp + cs * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = cs * apk - sn * aqk;
          a(q, k) = sn * apk + cs * aqk;
        }
      }
  }
  Eigen::VectorXd eig = a.diagonal();
  std::sort(eig.data(), eig.data() + eig.size());
  return eig;
}

DefinitenessResult is_positive_definite(const Eigen::MatrixXd& m, double threshold) {
  require(m.rows() == m.cols() && m.rows() > 0, "is_positive_definite: matrix must be square");
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  const double min_eig = jacobi_eigenvalues(sym)(0);
  return {min_eig > threshold, min_eig};
}

TdTrajectory td_simulate(const LinearTDSystem& sys, NoiseCase c, std::size_t steps, const StepSchedule& schedule,
                         Rng& rng) {
  sys.validate();
  require(schedule.a > 0.0 && schedule.b > 0.0, "td_simulate: schedule needs a, b > 0");
  const auto n = static_cast<std::size_t>(sys.X.rows());
  const auto d = static_cast<std::size_t>(sys.X.cols());
  const Eigen::MatrixXd xt = current_features(sys, c);
  const Eigen::MatrixXd xn = next_features(sys, c);
  // Row-major copies for the inner loop.
  std::vector<double> cur(n * d), nxt(n * d), reward(n * n);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t k = 0; k < d; ++k) {
      cur[s * d + k] = xt(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(k));
      nxt[s * d + k] = xn(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(k));
    }
    for (std::size_t j = 0; j < n; ++j)
      reward[s * n + j] = sys.R(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j));
  }
  // Cumulative rows; |S| is small, so a branch-free count replaces the search.
  std::vector<double> cumulative(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      acc += sys.P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      cumulative[i * n + j] = acc;
    }
  }
  auto sample_row = [&](const double* row, std::size_t count) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53 * row[count - 1];
    std::size_t j = 0;
    for (std::size_t k = 0; k + 1 < count; ++k) j += static_cast<std::size_t>(u >= row[k]);
    return j;
  };
  std::vector<double> mu_cumulative(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) mu_cumulative[i] = acc += sys.mu(static_cast<Eigen::Index>(i));
  std::size_t s = sample_row(mu_cumulative.data(), n);

  TdTrajectory out;
  std::vector<double> w(d, 0.0);
  auto snapshot = [&] { return Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(d)).eval(); };
  out.steps.push_back(0);
  out.weights.push_back(snapshot());
  std::size_t next_checkpoint = 1;
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t sp = sample_row(&cumulative[s * n], n);
    const double* x_cur = &cur[s * d];
    const double* x_next = &nxt[sp * d];
    double v_cur = 0.0, v_next = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      v_cur += w[k] * x_cur[k];
      v_next += w[k] * x_next[k];
    }
    const double step = schedule(t) * (reward[s * n + sp] + sys.gamma * v_next - v_cur);
    double largest = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      w[k] += step * x_cur[k];
      largest = std::max(largest, std::abs(w[k]));
    }
    s = sp;
    const std::size_t done = t + 1;
    const bool blown = !(largest <= kDivergenceThreshold);
    if (done == next_checkpoint || done == steps || blown) {
      out.steps.push_back(done);
      out.weights.push_back(snapshot());
      if (done == next_checkpoint) next_checkpoint *= 2;
    }
    if (blown) {
      out.diverged = true;
      break;
    }
  }
  return out;
}

InfluenceResult influence_function(const Eigen::MatrixXd& a, const Eigen::VectorXd& x_t,
                                   const Eigen::VectorXd& x_next, double reward, const Eigen::VectorXd& w,
                                   double gamma) {
  require(a.rows() == a.cols() && a.rows() == x_t.size() && x_t.size() == x_next.size() && w.size() == x_t.size(),
          "influence_function: dimension mismatch");
  const Eigen::MatrixXd ata = a.transpose() * a;
  const double min_sv = Eigen::JacobiSVD<Eigen::MatrixXd>(ata).singularValues().minCoeff();
  if (!(min_sv > 1e-12)) throw AnalysisError("influence_function: A^T A is singular");
  const Eigen::VectorXd d = x_t - gamma * x_next;
  const Eigen::VectorXd g = d * (x_t.squaredNorm() * (reward - d.dot(w)));
  return {ata.ldlt().solve(g), std::nullopt};
}

Eigen::VectorXd contaminated_refit(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& x_t,
                                   const Eigen::VectorXd& x_next, double reward, double gamma, double eps) {
  const Eigen::VectorXd d = x_t - gamma * x_next;
  const Eigen::MatrixXd x_a = d * x_t.transpose();
  const Eigen::VectorXd y_b = reward * x_t;
  const Eigen::MatrixXd lhs = (1.0 - eps) * a.transpose() * a + eps * x_a * x_a.transpose();
  const Eigen::VectorXd rhs = (1.0 - eps) * a.transpose() * b + eps * x_a * y_b;
  return lhs.fullPivLu().solve(rhs);
}

CorollaryResult corollary_tradeoff(const Eigen::VectorXd& x_t, const Eigen::VectorXd& x_next, double reward,
                                   const Eigen::VectorXd& w, const Eigen::VectorXd& eta, double gamma) {
  require(x_t.size() == x_next.size() && x_t.size() == w.size() && x_t.size() == eta.size(),
          "corollary_tradeoff: dimension mismatch");
  auto psi0 = [&](const Eigen::VectorXd& cur, const Eigen::VectorXd& nxt) -> Eigen::VectorXd {
    const Eigen::VectorXd d = cur - gamma * nxt;
    return d * (cur.squaredNorm() * (reward - d.dot(w)));
  };
  const Eigen::VectorXd base = psi0(x_t, x_next);
  CorollaryResult out;
  out.delta_current = psi0(x_t + eta, x_next) - base;
  out.delta_next = psi0(x_t, x_next + eta) - base;
  out.lhs = gamma * out.delta_current + out.delta_next;
  const Eigen::VectorXd d = x_t - gamma * x_next;
  out.rhs = 2.0 * gamma * d * (eta.dot(x_t) * (reward - d.dot(w)));
  out.residual = (out.lhs - out.rhs).norm();
  out.large_perturbation = eta.norm() > 0.1 * x_t.norm();
  return out;
}

LinearTDSystem random_linear_system(Rng& rng, const RandomSystemSpec& spec) {
  require(spec.min_dim >= 1 && spec.min_dim <= spec.max_dim, "random_linear_system: bad dimension range");
  require(spec.max_states >= spec.max_dim + 2, "random_linear_system: max_states must be at least max_dim + 2");
  require(!spec.rho.empty(), "random_linear_system: rho list is empty");
  const std::size_t d = uniform_index(rng, spec.min_dim, spec.max_dim);
  const std::size_t n = uniform_index(rng, d + 2, spec.max_states);
  const auto ni = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd X = random_normal_matrix(rng, ni, static_cast<Eigen::Index>(d));
  Eigen::MatrixXd P(ni, ni);
  for (Eigen::Index s = 0; s < ni; ++s) {
    const auto row = dirichlet_row(rng, n);
    for (Eigen::Index j = 0; j < ni; ++j)
      P(s, j) = (1.0 - spec.uniform_mix) * row[static_cast<std::size_t>(j)] + spec.uniform_mix / static_cast<double>(n);
    P.row(s) /= P.row(s).sum();
  }
  Eigen::MatrixXd R(ni, ni);
  for (Eigen::Index i = 0; i < ni; ++i)
    for (Eigen::Index j = 0; j < ni; ++j) R(i, j) = uniform01(rng);
  const double rho = spec.rho[uniform_index(rng, 0, spec.rho.size() - 1)];
  Eigen::MatrixXd E = random_normal_matrix(rng, ni, static_cast<Eigen::Index>(d));
  E *= rho * X.norm() / E.norm();
  return make_linear_system(std::move(X), std::move(P), std::move(R), spec.gamma, std::move(E));
}

CaseCondition case_condition(const LinearTDSystem& sys, NoiseCase c) {
  const auto a = is_positive_definite(build_convergence_matrix(sys, NoiseCase::none));
  CaseCondition out{a.positive, a.min_eig, a.min_eig};
  const Eigen::MatrixXd DPE = sys.D() * sys.P * sys.E;
  if (c == NoiseCase::current) {
    const auto extra = is_positive_definite((sys.X + sys.E).transpose() * DPE);
    out.min_eig_condition = extra.min_eig;
    out.holds = a.positive && extra.positive;
  } else if (c == NoiseCase::next) {
    const auto extra = is_positive_definite(-sys.X.transpose() * DPE);
    out.min_eig_condition = extra.min_eig;
    out.holds = a.positive && extra.positive;
  }
  return out;
}

StepSchedule adapted_schedule(const LinearTDSystem& sys, NoiseCase c) {
  double lambda = is_positive_definite(build_convergence_matrix(sys, c)).min_eig;
  if (!(lambda > 1e-8)) lambda = std::max(is_positive_definite(build_convergence_matrix(sys, NoiseCase::none)).min_eig, 1e-8);
  const Eigen::MatrixXd xt = current_features(sys, c);
  const Eigen::MatrixXd xn = next_features(sys, c);
  const double cur = xt.rowwise().norm().maxCoeff();
  const double nxt = xn.rowwise().norm().maxCoeff();
  const double a = 2.0 / lambda;
  // Keeps alpha_t ||x_t|| ||x_t - g x_t+1|| <= 1/2 from the first step.
  const double b = std::max(1.0, 2.0 * a * cur * (cur + sys.gamma * nxt));
  return {a, b};
}

std::size_t adapted_steps(const LinearTDSystem& sys, NoiseCase c, const StepSchedule& schedule, std::size_t seeds,
                          std::size_t min_steps, std::size_t max_steps) {
  // Burn-in: (b / (b + T))^{a lambda} with a lambda = 2 is below 1/400.
  double wanted = 20.0 * schedule.b;
  try {
    // Asymptotic per-seed variance ~ a^2 sigma^2 |x|^2 / (3 T) at a lambda = 2.
    const Eigen::VectorXd w = td_fixed_point(sys, c);
    const Eigen::MatrixXd xt = current_features(sys, c);
    const Eigen::MatrixXd xn = next_features(sys, c);
    double sigma2 = 0.0;
    for (Eigen::Index i = 0; i < sys.X.rows(); ++i)
      for (Eigen::Index j = 0; j < sys.X.rows(); ++j) {
        const double delta = sys.R(i, j) + sys.gamma * xn.row(j).dot(w) - xt.row(i).dot(w);
        sigma2 += sys.mu(i) * sys.P(i, j) * delta * delta;
      }
    const double x2 = xt.rowwise().squaredNorm().maxCoeff();
    const double target_sd = 0.02 * std::max(w.norm(), 1e-12);
    const double noise = schedule.a * schedule.a * sigma2 * x2 /
                         (3.0 * static_cast<double>(std::max<std::size_t>(seeds, 1)) * target_sd * target_sd);
    wanted = std::max(wanted, noise);
  } catch (const AnalysisError&) {
  }
  return std::clamp(static_cast<std::size_t>(std::min(wanted, 1e15)), min_steps, max_steps);
}

std::vector<ConvergenceRow> td_convergence_analysis(std::uint64_t master_seed, const ConvergenceOptions& options) {
  std::vector<ConvergenceRow> rows;
  for (std::size_t id = 0; id < options.systems; ++id) {
    auto part = td_convergence_system(master_seed, id, options);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  return rows;
}

std::vector<ConvergenceRow> td_convergence_system(std::uint64_t master_seed, std::size_t id,
                                                  const ConvergenceOptions& options) {
  std::vector<ConvergenceRow> rows;
  {
    Rng system_rng = make_stream(master_seed, id);
    const LinearTDSystem sys = random_linear_system(system_rng, options.system);
    for (NoiseCase c : kAllNoiseCases) {
      ConvergenceRow row;
      row.system_id = id;
      row.noise_case = c;
      const CaseCondition cond = case_condition(sys, c);
      row.min_eig_a = cond.min_eig_a;
      row.min_eig_condition = cond.min_eig_condition;
      row.condition_holds = cond.holds;
      const StepSchedule schedule = adapted_schedule(sys, c);
      const std::size_t steps = adapted_steps(sys, c, schedule, options.seeds, options.min_steps, options.max_steps);
      std::optional<Eigen::VectorXd> target;
      try {
        target = td_fixed_point(sys, c);
      } catch (const AnalysisError&) {
      }
      Eigen::VectorXd mean_final = Eigen::VectorXd::Zero(sys.X.cols());
      for (std::size_t seed = 0; seed < options.seeds; ++seed) {
        Rng rng = make_stream(derive_seed(master_seed, id), static_cast<std::uint64_t>(c) * 1'000'003ULL + seed);
        const TdTrajectory traj = td_simulate(sys, c, steps, schedule, rng);
        if (traj.diverged) ++row.diverged_seeds;
        mean_final += traj.final_w() / static_cast<double>(options.seeds);
      }
      row.final_residual = (row.diverged_seeds > 0 || !target)
                               ? std::numeric_limits<double>::infinity()
                               : (mean_final - *target).norm() / std::max(target->norm(), 1e-12);
      row.empirical_converged = row.diverged_seeds == 0 && row.final_residual < options.converged_residual;
      rows.push_back(row);
    }
  }
  return rows;
}

ContingencyTable contingency(const std::vector<ConvergenceRow>& rows, std::optional<NoiseCase> c) {
  ContingencyTable t;
  for (const auto& r : rows)
    if (!c || r.noise_case == *c) ++t.counts[r.condition_holds ? 1 : 0][r.empirical_converged ? 1 : 0];
  return t;
}

LinearTDSystem divergent_next_case_system(const LinearTDSystem& base, double c) {
  LinearTDSystem sys = base;
  const Eigen::MatrixXd dp = base.D() * base.P;
  sys.E = c * dp.completeOrthogonalDecomposition().pseudoInverse() * base.X;
  sys.validate();
  return sys;
}

std::vector<DivergenceProbe> divergence_sweep(const LinearTDSystem& base, const std::vector<double>& scales,
                                              std::size_t steps, std::uint64_t seed) {
  std::vector<DivergenceProbe> out;
  const Eigen::VectorXd w_td = td_fixed_point(base, NoiseCase::none);
  const StepSchedule schedule = adapted_schedule(base, NoiseCase::none);
  for (std::size_t i = 0; i < scales.size(); ++i) {
    const LinearTDSystem sys = divergent_next_case_system(base, scales[i]);
    DivergenceProbe probe;
    probe.c = scales[i];
    probe.min_eig_condition = case_condition(sys, NoiseCase::next).min_eig_condition;
    Rng rng_none = make_stream(seed, 2 * i);
    Rng rng_next = make_stream(seed, 2 * i + 1);
    const auto none = td_simulate(sys, NoiseCase::none, steps, schedule, rng_none);
    const auto next = td_simulate(sys, NoiseCase::next, steps, schedule, rng_next);
    probe.flagged_divergent = next.diverged;
    probe.distance_none = (none.final_w() - w_td).norm();
    probe.distance_next = next.diverged ? std::numeric_limits<double>::infinity() : (next.final_w() - w_td).norm();
    out.push_back(probe);
  }
  return out;
}

constexpr double kMinInfluenceSingular = 1.0;

std::vector<InfluenceRateRow> influence_rate_check(std::uint64_t seed, std::size_t instances,
                                                   const std::vector<double>& eps_values) {
  std::vector<InfluenceRateRow> out;
  for (std::size_t i = 0; i < instances; ++i) {
    Rng rng = make_stream(seed, i);
    const auto d = static_cast<Eigen::Index>(uniform_index(rng, 2, 4));
    // Redraw near-singular A: the second-order term scales with 1/sigma_min(A)^2.
    Eigen::MatrixXd a;
    do {
      a = 2.0 * Eigen::MatrixXd::Identity(d, d) + 0.5 * random_normal_matrix(rng, d, d);
    } while (Eigen::JacobiSVD<Eigen::MatrixXd>(a).singularValues().minCoeff() < kMinInfluenceSingular);
    const Eigen::VectorXd b = random_normal_vector(rng, d);
    const Eigen::VectorXd x_t = random_normal_vector(rng, d);
    const Eigen::VectorXd x_next = random_normal_vector(rng, d);
    const double reward = uniform01(rng);
    const double gamma = 0.9;
    const Eigen::VectorXd w0 = contaminated_refit(a, b, x_t, x_next, reward, gamma, 0.0);
    const Eigen::VectorXd psi = influence_function(a, x_t, x_next, reward, w0, gamma).psi;
    double previous = std::numeric_limits<double>::quiet_NaN();
    double previous_eps = 0.0;
    for (double eps : eps_values) {
      const Eigen::VectorXd we = contaminated_refit(a, b, x_t, x_next, reward, gamma, eps);
      InfluenceRateRow row{i, eps, ((we - w0) / eps - psi).norm() / std::max(psi.norm(), 1e-300),
                           std::numeric_limits<double>::quiet_NaN()};
      if (!std::isnan(previous)) row.observed_order = std::log(previous / row.error) / std::log(previous_eps / eps);
      previous = row.error;
      previous_eps = eps;
      out.push_back(row);
    }
  }
  return out;
}

std::vector<CorollaryRow> corollary_sweep(std::uint64_t seed, std::size_t instances, double eta_scale) {
  std::vector<CorollaryRow> out;
  for (std::size_t i = 0; i < instances; ++i) {
    Rng rng = make_stream(seed, i);
    const auto d = static_cast<Eigen::Index>(uniform_index(rng, 1, 4));
    const Eigen::VectorXd x_t = random_normal_vector(rng, d);
    const Eigen::VectorXd x_next = random_normal_vector(rng, d);
    const Eigen::VectorXd w = random_normal_vector(rng, d);
    const double reward = uniform01(rng);
    Eigen::VectorXd eta = random_normal_vector(rng, d);
    eta *= eta_scale * x_t.norm() / eta.norm();
    const double r1 = corollary_tradeoff(x_t, x_next, reward, w, eta, 0.9).residual;
    const double r2 = corollary_tradeoff(x_t, x_next, reward, w, 0.5 * eta, 0.9).residual;
    out.push_back({i, r1, r2});
  }
  return out;
}

}  // namespace snmdp
