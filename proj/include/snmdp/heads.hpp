#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "snmdp/distribution.hpp"
#include "snmdp/rng.hpp"

namespace snmdp {

// Smooth activations with slope bounded by 1.
enum class Activation { tanh, softplus };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct DenseLayer {
  Eigen::MatrixXd W;  // out x in
  Eigen::VectorXd b;
};

struct FeatureCache {
  std::vector<Eigen::MatrixXd> inputs;  // per layer input, columns are samples
  std::vector<Eigen::MatrixXd> pre;     // per layer pre-activation
  Eigen::MatrixXd output;
};

struct LayerGrads {
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;
};

// phi(x) = act(W_n ... act(W_1 x + b_1) ... + b_n). Batched operations take
// one sample per column.
class NonlinearFeatureMap {
 public:
  NonlinearFeatureMap() = default;
  NonlinearFeatureMap(std::vector<DenseLayer> layers, Activation activation);

  // Glorot-uniform weights, zero biases.
  static NonlinearFeatureMap random(Rng& rng, std::size_t input_dim, std::size_t width, std::size_t depth,
                                    Activation activation);
  // Single identity layer with no activation; phi(x) = x and L = 1.
  static NonlinearFeatureMap identity(std::size_t dim);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  Activation activation() const { return activation_; }
  bool is_identity() const { return identity_; }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x, FeatureCache* cache = nullptr) const;

  // Given dL/dphi for a cached batch, returns dL/dx and, when `grads` is
  // non-null, fills parameter gradients summed over the batch.
  Eigen::MatrixXd backward(const FeatureCache& cache, const Eigen::MatrixXd& grad_output,
                           LayerGrads* grads = nullptr) const;

  // Upper bound on the Lipschitz constant: product of exact spectral norms,
  // with a 1% margin, times the activation slope bound (1).
  double lipschitz_bound() const;
  // Cheaper bound using min(||W||_F, sqrt(||W||_1 ||W||_inf)) per layer.
  double cheap_lipschitz_bound() const;

  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& theta);
  std::size_t parameter_count() const;
  static Eigen::VectorXd flatten(const LayerGrads& grads);

 private:
  std::vector<DenseLayer> layers_;
  Activation activation_ = Activation::tanh;
  bool identity_ = false;
};

// ---- least-squares value heads ----------------------------------------

struct LinearValueHead {
  Eigen::VectorXd w;
  std::optional<double> norm_bound;

  double value(const Eigen::VectorXd& x) const { return w.dot(x); }
  // Euclidean projection onto ||w|| <= l when a bound is configured.
  void project();
};

// 1/2 (U - w^T x)^2
double ve_loss(const LinearValueHead& head, const Eigen::VectorXd& x, double target);
// -(U - w^T x) w
Eigen::VectorXd ve_gradient_wrt_state(const LinearValueHead& head, const Eigen::VectorXd& x, double target);
// -(U - w^T x) x
Eigen::VectorXd ve_gradient_wrt_params(const LinearValueHead& head, const Eigen::VectorXd& x, double target);

// -(U - phi(x)^T theta) d/dx(phi(x)^T theta)
Eigen::VectorXd ve_gradient_wrt_state_nonlinear(const NonlinearFeatureMap& phi, const Eigen::VectorXd& theta,
                                                const Eigen::VectorXd& x, double target);

struct UnboundednessWitness {
  LinearValueHead head;
  Eigen::VectorXd x;
  Eigen::VectorXd x_next;  // set by the TD-target variant
  double target = 0.0;
  double grad_norm = 0.0;
};

// ||w|| = l along e_1 and x = t w with U = 0, t chosen so |U - w^T x| l > M.
UnboundednessWitness ve_unboundedness_witness(double l, double M, std::size_t dim = 4);
// TD-target form: x_next = 0 and U = r + gamma w^T x_next = r, x_t scaled
// along -w until the gradient norm exceeds M.
UnboundednessWitness ve_td_unboundedness_witness(double l, double M, double reward, double gamma,
                                                 std::size_t dim = 4);

struct NonlinearWitness {
  Eigen::VectorXd theta;
  Eigen::VectorXd x;
  double target = 0.0;
  double grad_norm = 0.0;
};

// Scales a random direction until the nonlinear least-squares state gradient
// exceeds M, with ||theta|| = l and U = 0. Needs an unbounded activation.
NonlinearWitness ve_unboundedness_witness_nonlinear(const NonlinearFeatureMap& phi, double l, double M, Rng& rng);

// ---- histogram head ------------------------------------------------------

// Row-wise Euclidean projection onto norm <= l.
Eigen::MatrixXd project_row_norms(const Eigen::MatrixXd& m, double l);

struct TargetHistogram {
  Eigen::VectorXd p;
  void validate() const;
};

// f_i = softmax(scores)_i with scores_i = w_i^T x (linear) or
// theta_i^T phi(x) (nonlinear); bins partition [v_min, v_max] uniformly.
class HistogramHead {
 public:
  struct Linear {
    Eigen::MatrixXd W;  // k x d
  };
  struct Nonlinear {
    NonlinearFeatureMap phi;
    Eigen::MatrixXd theta;  // k x m
  };

  HistogramHead(std::variant<Linear, Nonlinear> mode, double v_min, double v_max, double l);

  static HistogramHead random_linear(Rng& rng, std::size_t k, std::size_t dim, double l, double v_min = 0.0,
                                     double v_max = 1.0);
  static HistogramHead random_nonlinear(Rng& rng, std::size_t k, std::size_t dim, std::size_t width, double l,
                                        Activation activation, double v_min = 0.0, double v_max = 1.0);

  std::size_t k() const;
  std::size_t input_dim() const;
  double l() const { return l_; }
  double v_min() const { return v_min_; }
  double v_max() const { return v_max_; }
  bool is_linear() const { return std::holds_alternative<Linear>(mode_); }
  const std::variant<Linear, Nonlinear>& mode() const { return mode_; }
  // Final-layer rows (W or theta).
  const Eigen::MatrixXd& rows() const;
  void set_rows(const Eigen::MatrixXd& rows);

  Eigen::VectorXd bin_centers() const;
  // k l for linear heads, k l L for nonlinear heads.
  double gradient_bound() const;
  // Lipschitz bound of the feature map (1 for linear heads).
  double lipschitz_bound() const;

  Eigen::VectorXd scores(const Eigen::VectorXd& x) const;

 private:
  std::variant<Linear, Nonlinear> mode_;
  double v_min_;
  double v_max_;
  double l_;
  double lipschitz_ = 1.0;
};

// Numerically stabilised softmax.
Eigen::VectorXd softmax(const Eigen::VectorXd& scores);
Eigen::VectorXd log_softmax(const Eigen::VectorXd& scores);

Eigen::VectorXd histogram_forward(const HistogramHead& head, const Eigen::VectorXd& x);
// Expected value sum_i f_i c_i over bin centres.
double histogram_expectation(const HistogramHead& head, const Eigen::VectorXd& f);

// -sum_i p_i log f_i
double histogram_loss(const TargetHistogram& p, const Eigen::VectorXd& f);
// Same loss from scores, with log f = score - logsumexp.
double histogram_loss_from_scores(const TargetHistogram& p, const Eigen::VectorXd& scores);

// d/dx of the loss: -sum_i (p_i - f_i) d/dx(score_i).
Eigen::VectorXd histogram_grad_wrt_state(const HistogramHead& head, const Eigen::VectorXd& x,
                                         const TargetHistogram& p);
// d/d(rows) of the loss: -(p - f) phi(x)^T, k x m.
Eigen::MatrixXd histogram_grad_wrt_rows(const HistogramHead& head, const Eigen::VectorXd& x,
                                        const TargetHistogram& p);
// Gradient with respect to the feature-map parameters (nonlinear heads).
Eigen::VectorXd histogram_grad_wrt_feature_params(const HistogramHead& head, const Eigen::VectorXd& x,
                                                  const TargetHistogram& p);

// Each atom's mass goes to the uniform bin containing it; boundary atoms go to
// the lower bin and out-of-range atoms to the end bins.
TargetHistogram project_target_distribution(const AtomDistribution& atoms, double v_min, double v_max,
                                            std::size_t k);
std::size_t histogram_bin(double x, double v_min, double v_max, std::size_t k);

// ---- gradient-bound analysis -------------------------------------------

struct GradientBoundRow {
  std::size_t trial = 0;
  std::string loss_kind;  // histogram | least_squares
  std::string mode;       // linear | nonlinear
  std::size_t k = 0;
  double l = 0.0;
  double input_scale = 0.0;
  double grad_norm = 0.0;
  double bound = 0.0;
  bool within_bound = true;
};

struct GradientBoundOptions {
  std::vector<std::size_t> k_values = {2, 20, 51};
  std::vector<double> l_values = {0.5, 1.0, 5.0};
  std::size_t draws = 10'000;
  std::size_t dim = 4;
  std::size_t width = 32;
  double max_input_norm = 1e6;
  // Witness must exceed witness_factor * bound.
  double witness_factor = 10.0;
};

struct GradientBoundSummary {
  std::string mode;
  std::size_t k = 0;
  double l = 0.0;
  double bound = 0.0;
  double max_histogram_grad = 0.0;
  double witness_grad = 0.0;
  bool histogram_within = true;
  bool witness_exceeds = false;
};

struct GradientBoundReport {
  std::vector<GradientBoundSummary> summaries;
  std::vector<GradientBoundRow> rows;  // one row per draw when requested
  bool all_pass() const;
};

// For each (mode, k, l): random heads with rows on the l-sphere (the worst
// case within the constraint), random targets, and inputs with norms swept
// log-uniformly up to max_input_norm, including inputs aligned with head rows.
GradientBoundReport gradient_bound_analysis(std::uint64_t seed, const GradientBoundOptions& options,
                                            bool keep_rows = false);

}  // namespace snmdp
