#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "snmdp/rng.hpp"

namespace snmdp {

// Linear TD(0) system on a finite Markov chain: features X (|S| x d, rows
// x(s)), on-policy transition matrix P, stationary distribution mu, feature
// perturbations E (rows e(s)) and per-transition rewards R(s, s').
struct LinearTDSystem {
  Eigen::MatrixXd X;
  Eigen::MatrixXd P;
  Eigen::VectorXd mu;
  Eigen::MatrixXd E;
  Eigen::MatrixXd R;
  double gamma = 0.9;

  std::size_t n_states() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(X.cols()); }
  Eigen::MatrixXd D() const { return mu.asDiagonal(); }

  // Throws ConfigError on inconsistent dimensions or invalid P, mu, gamma.
  void validate() const;
};

// Fills mu from P and validates.
LinearTDSystem make_linear_system(Eigen::MatrixXd X, Eigen::MatrixXd P, Eigen::MatrixXd R, double gamma,
                                  Eigen::MatrixXd E);

enum class NoiseCase { none, current, next, both };

const char* to_string(NoiseCase c);
NoiseCase noise_case_from_string(const std::string& name);
inline constexpr NoiseCase kAllNoiseCases[] = {NoiseCase::none, NoiseCase::current, NoiseCase::next,
                                               NoiseCase::both};

// mu with mu^T P = mu^T, by power iteration. The chain must be primitive.
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& P);

// Expected TD update matrix for the given perturbation site:
//   none    A         = X^T D (I - gP) X
//   current A_t       = A_{t,t+1} + g (X+E)^T D P E
//   next    A_{t+1}   = A - g X^T D P E
//   both    A_{t,t+1} = (X+E)^T D (I - gP) (X+E)
// Built from the transition sums and cross-checked against these forms.
Eigen::MatrixXd build_convergence_matrix(const LinearTDSystem& sys, NoiseCase c);

// b = sum_s mu(s) sum_s' P(s,s') R(s,s') x~(s), x~ the feature multiplying the
// TD error for the case.
Eigen::VectorXd build_convergence_vector(const LinearTDSystem& sys, NoiseCase c);

// Fixed point of the expected update, A_case^{-1} b_case.
Eigen::VectorXd td_fixed_point(const LinearTDSystem& sys, NoiseCase c);

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
Eigen::VectorXd jacobi_eigenvalues(const Eigen::MatrixXd& symmetric, double tol = 1e-14);

struct DefinitenessResult {
  bool positive = false;
  double min_eig = 0.0;
};

// Positive definiteness via the smallest eigenvalue of (M + M^T)/2.
DefinitenessResult is_positive_definite(const Eigen::MatrixXd& m, double threshold = 1e-10);

// alpha_t = a / (b + t)
struct StepSchedule {
  double a = 1.0;
  double b = 100.0;
  double operator()(std::size_t t) const { return a / (b + static_cast<double>(t)); }
};

inline constexpr double kDivergenceThreshold = 1e12;

struct TdTrajectory {
  std::vector<std::size_t> steps;
  std::vector<Eigen::VectorXd> weights;
  bool diverged = false;
  Eigen::VectorXd final_w() const { return weights.back(); }
};

// Simulates TD(0) from w_0 = 0 and S_0 ~ mu, adding e(s) to the current
// and/or next features per case. Records w at steps 0, 1, 2, 4, ... and at the
// last step; stops early once any |w_i| exceeds the divergence threshold.
TdTrajectory td_simulate(const LinearTDSystem& sys, NoiseCase c, std::size_t steps, const StepSchedule& schedule,
                         Rng& rng);

struct InfluenceResult {
  Eigen::VectorXd psi;
  std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> residual_pair;
};

// psi = (A^T A)^{-1} d_t (x_t^T x_t) (R - d_t^T w), d_t = x_t - g x_next.
InfluenceResult influence_function(const Eigen::MatrixXd& a, const Eigen::VectorXd& x_t,
                                   const Eigen::VectorXd& x_next, double reward, const Eigen::VectorXd& w,
                                   double gamma);

// Minimiser of (1-eps)||b - A w||^2 + eps ||y_b - x_A^T w||^2 with
// x_A = d_t x_t^T and y_b = R x_t.
Eigen::VectorXd contaminated_refit(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& x_t,
                                   const Eigen::VectorXd& x_next, double reward, double gamma, double eps);

struct CorollaryResult {
  Eigen::VectorXd lhs;  // g * dpsi_t + dpsi_{t+1}, exact
  Eigen::VectorXd rhs;  // 2 g d_t (eta^T x_t) (R - d_t^T w)
  double residual = 0.0;
  bool large_perturbation = false;  // ||eta|| > 0.1 ||x_t||
  Eigen::VectorXd delta_current;
  Eigen::VectorXd delta_next;
};

CorollaryResult corollary_tradeoff(const Eigen::VectorXd& x_t, const Eigen::VectorXd& x_next, double reward,
                                   const Eigen::VectorXd& w, const Eigen::VectorXd& eta, double gamma);

// ---- randomised analyses -------------------------------------------------

struct RandomSystemSpec {
  std::size_t min_dim = 1;
  std::size_t max_dim = 4;
  std::size_t max_states = 8;
  double gamma = 0.9;
  // Uniform mixing weight added to Dirichlet rows keeps the chain primitive.
  double uniform_mix = 0.1;
  std::vector<double> rho = {0.01, 0.05, 0.1};
};

// X ~ N(0,1), Dirichlet rows mixed with uniform, R ~ U[0,1], E ~ N(0,1)
// rescaled to ||E||_F = rho ||X||_F.
LinearTDSystem random_linear_system(Rng& rng, const RandomSystemSpec& spec);

// Sufficient convergence conditions per case: none/both need A PD, current additionally
// (X+E)^T D P E PD, next additionally -X^T D P E PD.
struct CaseCondition {
  bool holds = false;
  double min_eig_a = 0.0;
  double min_eig_condition = 0.0;
};
CaseCondition case_condition(const LinearTDSystem& sys, NoiseCase c);

// Schedule adapted to the case matrix: a = 2 / lambda_min(sym A_case) and b
// large enough that the first steps are stable.
StepSchedule adapted_schedule(const LinearTDSystem& sys, NoiseCase c);
// Horizon covering burn-in and bringing the predicted standard deviation of
// the seed-averaged final iterate to 2% of ||w*_case||.
std::size_t adapted_steps(const LinearTDSystem& sys, NoiseCase c, const StepSchedule& schedule, std::size_t seeds,
                          std::size_t min_steps, std::size_t max_steps);

struct ConvergenceRow {
  std::size_t system_id = 0;
  NoiseCase noise_case = NoiseCase::none;
  double min_eig_a = 0.0;
  double min_eig_condition = 0.0;
  bool condition_holds = false;
  bool empirical_converged = false;
  // ||mean over seeds of w_T - w*_case|| / ||w*_case||; infinite once a seed diverges
  double final_residual = 0.0;
  std::size_t diverged_seeds = 0;
};

struct ConvergenceOptions {
  std::size_t systems = 200;
  std::size_t seeds = 10;
  std::size_t min_steps = 20'000;
  std::size_t max_steps = 2'000'000;
  double converged_residual = 0.1;
  RandomSystemSpec system;
};

std::vector<ConvergenceRow> td_convergence_analysis(std::uint64_t master_seed, const ConvergenceOptions& options);
// Rows of one system (all four cases); system `id` draws only from streams
// derived from (master_seed, id).
std::vector<ConvergenceRow> td_convergence_system(std::uint64_t master_seed, std::size_t id,
                                                  const ConvergenceOptions& options);

struct ContingencyTable {
  // [condition holds][converged]
  std::size_t counts[2][2] = {{0, 0}, {0, 0}};
};
ContingencyTable contingency(const std::vector<ConvergenceRow>& rows, std::optional<NoiseCase> c = std::nullopt);

// Case (ii) instance with E = c (DP)^{-1} X, so -X^T D P E = -c X^T X is
// negative definite.
LinearTDSystem divergent_next_case_system(const LinearTDSystem& base, double c);

struct DivergenceProbe {
  double c = 0.0;
  double min_eig_condition = 0.0;
  bool flagged_divergent = false;
  double distance_next = 0.0;  // ||w_T - w_TD|| under case next
  double distance_none = 0.0;  // same under case none
  bool diverges() const { return flagged_divergent || distance_next > 10.0 * distance_none; }
};

std::vector<DivergenceProbe> divergence_sweep(const LinearTDSystem& base, const std::vector<double>& scales,
                                              std::size_t steps, std::uint64_t seed);

struct InfluenceRateRow {
  std::size_t instance = 0;
  double eps = 0.0;
  double error = 0.0;          // || (w_eps - w_0)/eps - psi || / ||psi||
  double observed_order = 0.0;  // log10(error(10 eps) / error(eps)), NaN for the first eps
};

// Instances use A = 2I + 0.5 N(0,1), redrawn until sigma_min(A) >= 1.
std::vector<InfluenceRateRow> influence_rate_check(std::uint64_t seed, std::size_t instances,
                                                   const std::vector<double>& eps_values);

struct CorollaryRow {
  std::size_t instance = 0;
  double residual = 0.0;
  double residual_half = 0.0;
  bool pass() const { return residual_half <= residual / 3.0; }
};

std::vector<CorollaryRow> corollary_sweep(std::uint64_t seed, std::size_t instances, double eta_scale = 1e-3);

}  // namespace snmdp
