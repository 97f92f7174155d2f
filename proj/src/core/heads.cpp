#include "snmdp/heads.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "snmdp/envs.hpp"
#include "snmdp/error.hpp"

namespace snmdp {

namespace {

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation a) {
  return a == Activation::tanh ? z.array().tanh().matrix().eval() : z.unaryExpr(&softplus).eval();
}

Eigen::MatrixXd activation_slope(const Eigen::MatrixXd& z, Activation a) {
  if (a == Activation::tanh) return (1.0 - z.array().tanh().square()).matrix();
  return z.unaryExpr(&sigmoid);
}

// Largest singular value from the smaller Gram matrix.
double spectral_norm(const Eigen::MatrixXd& w) {
  const Eigen::MatrixXd gram = w.rows() <= w.cols() ? Eigen::MatrixXd(w * w.transpose())
                                                    : Eigen::MatrixXd(w.transpose() * w);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff()));
}

Eigen::VectorXd random_unit(Rng& rng, std::size_t dim) {
  std::normal_distribution<double> n;
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = n(rng);
  return v / v.norm();
}

Eigen::MatrixXd random_rows_on_sphere(Rng& rng, std::size_t k, std::size_t dim, double l) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < k; ++i) m.row(static_cast<Eigen::Index>(i)) = l * random_unit(rng, dim).transpose();
  return m;
}

}  // namespace

const char* to_string(Activation a) { return a == Activation::tanh ? "tanh" : "softplus"; }

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "softplus") return Activation::softplus;
  throw ConfigError("unknown activation '" + name + "' (expected tanh or softplus)");
}

// ---- feature map -----------------------------------------------------------

NonlinearFeatureMap::NonlinearFeatureMap(std::vector<DenseLayer> layers, Activation activation)
    : layers_(std::move(layers)), activation_(activation) {
  require(!layers_.empty(), "NonlinearFeatureMap: at least one layer required");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    require(layers_[i].b.size() == layers_[i].W.rows(), "NonlinearFeatureMap: bias size mismatch");
    if (i > 0) require(layers_[i].W.cols() == layers_[i - 1].W.rows(), "NonlinearFeatureMap: layer size mismatch");
  }
}

NonlinearFeatureMap NonlinearFeatureMap::random(Rng& rng, std::size_t input_dim, std::size_t width,
                                                std::size_t depth, Activation activation) {
  require(input_dim > 0 && width > 0 && depth > 0, "NonlinearFeatureMap::random: sizes must be positive");
  std::vector<DenseLayer> layers;
  std::size_t in = input_dim;
  for (std::size_t i = 0; i < depth; ++i) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + width));
    std::uniform_real_distribution<double> u(-limit, limit);
    DenseLayer layer{Eigen::MatrixXd(width, in), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(width))};
    for (Eigen::Index r = 0; r < layer.W.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.W.cols(); ++c) layer.W(r, c) = u(rng);
    layers.push_back(std::move(layer));
    in = width;
  }
  return NonlinearFeatureMap(std::move(layers), activation);
}

NonlinearFeatureMap NonlinearFeatureMap::identity(std::size_t dim) {
  const auto n = static_cast<Eigen::Index>(dim);
  NonlinearFeatureMap map({DenseLayer{Eigen::MatrixXd::Identity(n, n), Eigen::VectorXd::Zero(n)}}, Activation::tanh);
  map.identity_ = true;
  return map;
}

std::size_t NonlinearFeatureMap::input_dim() const { return static_cast<std::size_t>(layers_.front().W.cols()); }
std::size_t NonlinearFeatureMap::output_dim() const { return static_cast<std::size_t>(layers_.back().W.rows()); }

Eigen::VectorXd NonlinearFeatureMap::forward(const Eigen::VectorXd& x) const { return forward_batch(x).col(0); }

Eigen::MatrixXd NonlinearFeatureMap::forward_batch(const Eigen::MatrixXd& x, FeatureCache* cache) const {
  require(static_cast<std::size_t>(x.rows()) == input_dim(), "NonlinearFeatureMap: input dimension mismatch");
  if (identity_) {
    if (cache) {
      cache->inputs = {x};
      cache->pre = {x};
      cache->output = x;
    }
    return x;
  }
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Eigen::MatrixXd a = x;
  for (const auto& layer : layers_) {
    Eigen::MatrixXd z = layer.W * a;
    z.colwise() += layer.b;
    if (cache) {
      cache->inputs.push_back(std::move(a));
      cache->pre.push_back(z);
    }
    a = activate(z, activation_);
  }
  if (cache) cache->output = a;
  return a;
}

Eigen::MatrixXd NonlinearFeatureMap::backward(const FeatureCache& cache, const Eigen::MatrixXd& grad_output,
                                              LayerGrads* grads) const {
  if (identity_) {
    if (grads) {
      grads->dW = {grad_output * cache.inputs[0].transpose()};
      grads->db = {grad_output.rowwise().sum()};
    }
    return grad_output;
  }
  if (grads) {
    grads->dW.assign(layers_.size(), Eigen::MatrixXd());
    grads->db.assign(layers_.size(), Eigen::VectorXd());
  }
  Eigen::MatrixXd g = grad_output;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    g = g.cwiseProduct(activation_slope(cache.pre[i], activation_));
    if (grads) {
      grads->dW[i].noalias() = g * cache.inputs[i].transpose();
      grads->db[i] = g.rowwise().sum();
    }
    g = layers_[i].W.transpose() * g;
  }
  return g;
}

double NonlinearFeatureMap::lipschitz_bound() const {
  if (identity_) return 1.0;
  double bound = 1.0;
  for (const auto& layer : layers_) bound *= 1.01 * spectral_norm(layer.W);
  return bound;
}

double NonlinearFeatureMap::cheap_lipschitz_bound() const {
  if (identity_) return 1.0;
  double bound = 1.0;
  for (const auto& layer : layers_) {
    const double one = layer.W.cwiseAbs().colwise().sum().maxCoeff();
    const double inf = layer.W.cwiseAbs().rowwise().sum().maxCoeff();
    bound *= std::min(layer.W.norm(), std::sqrt(one * inf));
  }
  return bound;
}

std::size_t NonlinearFeatureMap::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += static_cast<std::size_t>(layer.W.size() + layer.b.size());
  return n;
}

Eigen::VectorXd NonlinearFeatureMap::parameters() const {
  Eigen::VectorXd theta(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index at = 0;
  for (const auto& layer : layers_) {
    theta.segment(at, layer.W.size()) = Eigen::Map<const Eigen::VectorXd>(layer.W.data(), layer.W.size());
    at += layer.W.size();
    theta.segment(at, layer.b.size()) = layer.b;
    at += layer.b.size();
  }
  return theta;
}

void NonlinearFeatureMap::set_parameters(const Eigen::VectorXd& theta) {
  require(static_cast<std::size_t>(theta.size()) == parameter_count(), "set_parameters: size mismatch");
  Eigen::Index at = 0;
  for (auto& layer : layers_) {
    Eigen::Map<Eigen::VectorXd>(layer.W.data(), layer.W.size()) = theta.segment(at, layer.W.size());
    at += layer.W.size();
    layer.b = theta.segment(at, layer.b.size());
    at += layer.b.size();
  }
}

Eigen::VectorXd NonlinearFeatureMap::flatten(const LayerGrads& grads) {
  Eigen::Index n = 0;
  for (std::size_t i = 0; i < grads.dW.size(); ++i) n += grads.dW[i].size() + grads.db[i].size();
  Eigen::VectorXd out(n);
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < grads.dW.size(); ++i) {
    out.segment(at, grads.dW[i].size()) = Eigen::Map<const Eigen::VectorXd>(grads.dW[i].data(), grads.dW[i].size());
    at += grads.dW[i].size();
    out.segment(at, grads.db[i].size()) = grads.db[i];
    at += grads.db[i].size();
  }
  return out;
}

// ---- least squares ---------------------------------------------------------

void LinearValueHead::project() {
  if (!norm_bound) return;
  const double n = w.norm();
  if (!(n > *norm_bound)) return;
  w *= *norm_bound / n;
  while (w.norm() > *norm_bound) w *= std::nextafter(1.0, 0.0);
}

double ve_loss(const LinearValueHead& head, const Eigen::VectorXd& x, double target) {
  const double r = target - head.value(x);
  return 0.5 * r * r;
}

Eigen::VectorXd ve_gradient_wrt_state(const LinearValueHead& head, const Eigen::VectorXd& x, double target) {
  require(head.w.size() == x.size(), "ve_gradient_wrt_state: dimension mismatch");
  return -(target - head.value(x)) * head.w;
}

Eigen::VectorXd ve_gradient_wrt_params(const LinearValueHead& head, const Eigen::VectorXd& x, double target) {
  require(head.w.size() == x.size(), "ve_gradient_wrt_params: dimension mismatch");
  return -(target - head.value(x)) * x;
}

Eigen::VectorXd ve_gradient_wrt_state_nonlinear(const NonlinearFeatureMap& phi, const Eigen::VectorXd& theta,
                                                const Eigen::VectorXd& x, double target) {
  require(static_cast<std::size_t>(theta.size()) == phi.output_dim(), "ve_gradient_wrt_state_nonlinear: theta size");
  FeatureCache cache;
  const Eigen::VectorXd features = phi.forward_batch(x, &cache).col(0);
  const double residual = target - features.dot(theta);
  return phi.backward(cache, -residual * theta).col(0);
}

UnboundednessWitness ve_unboundedness_witness(double l, double M, std::size_t dim) {
  require(l > 0.0 && M > 0.0 && dim > 0, "ve_unboundedness_witness: l, M and dim must be positive");
  UnboundednessWitness out;
  out.head.w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  out.head.w(0) = l;
  out.head.norm_bound = l;
  const double t = (M + 1.0) / (l * l);
  out.x = t * out.head.w / l;
  out.x_next = Eigen::VectorXd::Zero(out.x.size());
  out.target = 0.0;
  out.grad_norm = ve_gradient_wrt_state(out.head, out.x, out.target).norm();
  return out;
}

UnboundednessWitness ve_td_unboundedness_witness(double l, double M, double reward, double gamma,
                                                 std::size_t dim) {
  require(l > 0.0 && M > 0.0 && dim > 0, "ve_td_unboundedness_witness: l, M and dim must be positive");
  UnboundednessWitness out;
  out.head.w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  out.head.w(0) = l;
  out.head.norm_bound = l;
  out.x_next = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  out.target = reward + gamma * out.head.value(out.x_next);
  const double t = std::max(0.0, ((M + 1.0) / l - reward) / l);
  out.x = -t * out.head.w / l;
  out.grad_norm = ve_gradient_wrt_state(out.head, out.x, out.target).norm();
  return out;
}

NonlinearWitness ve_unboundedness_witness_nonlinear(const NonlinearFeatureMap& phi, double l, double M, Rng& rng) {
  require(l > 0.0 && M > 0.0, "ve_unboundedness_witness_nonlinear: l and M must be positive");
  for (int attempt = 0; attempt < 64; ++attempt) {
    const Eigen::VectorXd u = random_unit(rng, phi.input_dim());
    const Eigen::VectorXd far = phi.forward(1e3 * u);
    if (!(far.norm() > 0.0)) continue;
    NonlinearWitness out;
    out.theta = l * far / far.norm();
    for (double t = 1.0; t < 1e300; t *= 2.0) {
      out.x = t * u;
      out.grad_norm = ve_gradient_wrt_state_nonlinear(phi, out.theta, out.x, 0.0).norm();
      if (!std::isfinite(out.grad_norm)) break;
      if (out.grad_norm > M) return out;
    }
  }
  throw AnalysisError("ve_unboundedness_witness_nonlinear: gradient stays bounded (saturating activation?)");
}

// ---- histogram -------------------------------------------------------------

Eigen::MatrixXd project_row_norms(const Eigen::MatrixXd& m, double l) {
  require(l > 0.0, "project_row_norms: l must be positive");
  Eigen::MatrixXd out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (!(n > l)) continue;
    out.row(i) *= l / n;
    // Round-off can leave the norm an ulp above l; shrink until it is not, so
    // that a second projection is the identity.
    while (out.row(i).norm() > l) out.row(i) *= std::nextafter(1.0, 0.0);
  }
  return out;
}

void TargetHistogram::validate() const {
  require(p.size() >= 1 && (p.array() >= 0.0).all(), "TargetHistogram: masses must be non-negative");
  require(std::abs(p.sum() - 1.0) <= 1e-10, "TargetHistogram: masses must sum to 1");
}

HistogramHead::HistogramHead(std::variant<Linear, Nonlinear> mode, double v_min, double v_max, double l)
    : mode_(std::move(mode)), v_min_(v_min), v_max_(v_max), l_(l) {
  require(v_max > v_min, "HistogramHead: support must satisfy v_min < v_max");
  require(l > 0.0, "HistogramHead: norm bound must be positive");
  require(this->k() >= 2, "HistogramHead: at least two bins required");
  if (auto* nl = std::get_if<Nonlinear>(&mode_)) {
    require(static_cast<std::size_t>(nl->theta.cols()) == nl->phi.output_dim(), "HistogramHead: theta width mismatch");
    lipschitz_ = nl->phi.lipschitz_bound();
  }
  set_rows(rows());
}

HistogramHead HistogramHead::random_linear(Rng& rng, std::size_t k, std::size_t dim, double l, double v_min,
                                           double v_max) {
  return HistogramHead(Linear{random_rows_on_sphere(rng, k, dim, l)}, v_min, v_max, l);
}

HistogramHead HistogramHead::random_nonlinear(Rng& rng, std::size_t k, std::size_t dim, std::size_t width, double l,
                                              Activation activation, double v_min, double v_max) {
  NonlinearFeatureMap phi = NonlinearFeatureMap::random(rng, dim, width, 2, activation);
  return HistogramHead(Nonlinear{std::move(phi), random_rows_on_sphere(rng, k, width, l)}, v_min, v_max, l);
}

std::size_t HistogramHead::k() const { return static_cast<std::size_t>(rows().rows()); }

std::size_t HistogramHead::input_dim() const {
  if (const auto* lin = std::get_if<Linear>(&mode_)) return static_cast<std::size_t>(lin->W.cols());
  return std::get<Nonlinear>(mode_).phi.input_dim();
}

const Eigen::MatrixXd& HistogramHead::rows() const {
  if (const auto* lin = std::get_if<Linear>(&mode_)) return lin->W;
  return std::get<Nonlinear>(mode_).theta;
}

void HistogramHead::set_rows(const Eigen::MatrixXd& rows) {
  Eigen::MatrixXd& target = std::holds_alternative<Linear>(mode_) ? std::get<Linear>(mode_).W
                                                                  : std::get<Nonlinear>(mode_).theta;
  require(rows.rows() == target.rows() && rows.cols() == target.cols(), "HistogramHead::set_rows: shape mismatch");
  target = project_row_norms(rows, l_);
}

Eigen::VectorXd HistogramHead::bin_centers() const {
  const auto k = static_cast<Eigen::Index>(this->k());
  const double h = (v_max_ - v_min_) / static_cast<double>(k);
  Eigen::VectorXd c(k);
  for (Eigen::Index i = 0; i < k; ++i) c(i) = v_min_ + (static_cast<double>(i) + 0.5) * h;
  return c;
}

double HistogramHead::lipschitz_bound() const { return lipschitz_; }

double HistogramHead::gradient_bound() const { return static_cast<double>(k()) * l_ * lipschitz_; }

Eigen::VectorXd HistogramHead::scores(const Eigen::VectorXd& x) const {
  require(static_cast<std::size_t>(x.size()) == input_dim(), "HistogramHead: input dimension mismatch");
  if (const auto* lin = std::get_if<Linear>(&mode_)) return lin->W * x;
  const auto& nl = std::get<Nonlinear>(mode_);
  return nl.theta * nl.phi.forward(x);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& scores) {
  Eigen::VectorXd f = (scores.array() - scores.maxCoeff()).exp();
  return f / f.sum();
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& scores) {
  const double m = scores.maxCoeff();
  const double lse = m + std::log((scores.array() - m).exp().sum());
  return scores.array() - lse;
}

Eigen::VectorXd histogram_forward(const HistogramHead& head, const Eigen::VectorXd& x) {
  return softmax(head.scores(x));
}

double histogram_expectation(const HistogramHead& head, const Eigen::VectorXd& f) {
  return f.dot(head.bin_centers());
}

double histogram_loss(const TargetHistogram& p, const Eigen::VectorXd& f) {
  require(p.p.size() == f.size(), "histogram_loss: size mismatch");
  double loss = 0.0;
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    if (!(f(i) > 0.0)) throw NumericError("histogram_loss: non-positive predicted probability");
    if (p.p(i) > 0.0) loss -= p.p(i) * std::log(f(i));
  }
  return loss;
}

double histogram_loss_from_scores(const TargetHistogram& p, const Eigen::VectorXd& scores) {
  require(p.p.size() == scores.size(), "histogram_loss_from_scores: size mismatch");
  return -p.p.dot(log_softmax(scores));
}

Eigen::VectorXd histogram_grad_wrt_state(const HistogramHead& head, const Eigen::VectorXd& x,
                                         const TargetHistogram& p) {
  require(static_cast<std::size_t>(p.p.size()) == head.k(), "histogram_grad_wrt_state: target size");
  if (const auto* lin = std::get_if<HistogramHead::Linear>(&head.mode())) {
    const Eigen::VectorXd f = softmax(lin->W * x);
    return lin->W.transpose() * (f - p.p);
  }
  const auto& nl = std::get<HistogramHead::Nonlinear>(head.mode());
  FeatureCache cache;
  const Eigen::VectorXd phi = nl.phi.forward_batch(x, &cache).col(0);
  const Eigen::VectorXd f = softmax(nl.theta * phi);
  return nl.phi.backward(cache, nl.theta.transpose() * (f - p.p)).col(0);
}

Eigen::MatrixXd histogram_grad_wrt_rows(const HistogramHead& head, const Eigen::VectorXd& x,
                                        const TargetHistogram& p) {
  const Eigen::VectorXd f = histogram_forward(head, x);
  if (head.is_linear()) return (f - p.p) * x.transpose();
  const auto& nl = std::get<HistogramHead::Nonlinear>(head.mode());
  return (f - p.p) * nl.phi.forward(x).transpose();
}

Eigen::VectorXd histogram_grad_wrt_feature_params(const HistogramHead& head, const Eigen::VectorXd& x,
                                                  const TargetHistogram& p) {
  require(!head.is_linear(), "histogram_grad_wrt_feature_params: linear heads have no feature parameters");
  const auto& nl = std::get<HistogramHead::Nonlinear>(head.mode());
  FeatureCache cache;
  const Eigen::VectorXd phi = nl.phi.forward_batch(x, &cache).col(0);
  const Eigen::VectorXd f = softmax(nl.theta * phi);
  LayerGrads grads;
  nl.phi.backward(cache, nl.theta.transpose() * (f - p.p), &grads);
  return NonlinearFeatureMap::flatten(grads);
}

std::size_t histogram_bin(double x, double v_min, double v_max, std::size_t k) {
  if (!(x > v_min)) return 0;
  if (x >= v_max) return k - 1;
  const double t = (x - v_min) / (v_max - v_min) * static_cast<double>(k);
  const double up = std::ceil(t);
  const auto i = static_cast<std::size_t>(up) - 1;
  return std::min(i, k - 1);
}

TargetHistogram project_target_distribution(const AtomDistribution& atoms, double v_min, double v_max,
                                            std::size_t k) {
  require(k >= 2, "project_target_distribution: k must be at least 2");
  require(v_max > v_min, "project_target_distribution: empty support");
  TargetHistogram out{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k))};
  for (std::size_t i = 0; i < atoms.size(); ++i)
    out.p(static_cast<Eigen::Index>(histogram_bin(atoms.atoms()[i], v_min, v_max, k))) += atoms.probs()[i];
  return out;
}

// ---- gradient-bound analysis -------------------------------------------

bool GradientBoundReport::all_pass() const {
  for (const auto& s : summaries)
    if (!s.histogram_within || !s.witness_exceeds) return false;
  return !summaries.empty();
}

GradientBoundReport gradient_bound_analysis(std::uint64_t seed, const GradientBoundOptions& options,
                                            bool keep_rows) {
  GradientBoundReport report;
  std::size_t config = 0;
  for (const char* mode : {"linear", "nonlinear"})
    for (std::size_t k : options.k_values)
      for (double l : options.l_values) {
        Rng rng = make_stream(seed, config++);
        const bool linear = std::string(mode) == "linear";
        const HistogramHead head =
            linear ? HistogramHead::random_linear(rng, k, options.dim, l)
                   : HistogramHead::random_nonlinear(rng, k, options.dim, options.width, l, Activation::softplus);
        GradientBoundSummary summary;
        summary.mode = mode;
        summary.k = k;
        summary.l = l;
        summary.bound = head.gradient_bound();
        const double log_max = std::log10(options.max_input_norm);
        for (std::size_t trial = 0; trial < options.draws; ++trial) {
          const double scale = std::pow(10.0, -3.0 + (log_max + 3.0) * uniform01(rng));
          Eigen::VectorXd direction = random_unit(rng, options.dim);
          // Every third draw aligns x with a head row (linear) or takes the
          // largest input norm, pushing f towards a one-hot.
          if (trial % 3 == 1 && linear)
            direction = head.rows().row(static_cast<Eigen::Index>(rng() % k)).transpose() / l;
          const double s = trial % 3 == 2 ? options.max_input_norm : scale;
          const Eigen::VectorXd x = s * direction;
          TargetHistogram p;
          if (trial % 2 == 0) {
            // One-hot at the least likely bin maximises |p - f|.
            const Eigen::VectorXd f = histogram_forward(head, x);
            Eigen::Index lo = 0;
            f.minCoeff(&lo);
            p.p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
            p.p(lo) = 1.0;
          } else {
            const auto row = dirichlet_row(rng, k);
            p.p = Eigen::Map<const Eigen::VectorXd>(row.data(), static_cast<Eigen::Index>(k));
          }
          const double g = histogram_grad_wrt_state(head, x, p).norm();
          const bool within = g <= summary.bound * (1.0 + 1e-12);
          summary.max_histogram_grad = std::max(summary.max_histogram_grad, g);
          summary.histogram_within = summary.histogram_within && within;
          if (keep_rows) report.rows.push_back({trial, "histogram", mode, k, l, s, g, summary.bound, within});
        }
        const double threshold = options.witness_factor * summary.bound;
        if (linear) {
          summary.witness_grad = ve_unboundedness_witness(l, threshold, options.dim).grad_norm;
        } else {
          const auto& nl = std::get<HistogramHead::Nonlinear>(head.mode());
          summary.witness_grad = ve_unboundedness_witness_nonlinear(nl.phi, l, threshold, rng).grad_norm;
        }
        summary.witness_exceeds = summary.witness_grad > threshold;
        if (keep_rows)
          report.rows.push_back({options.draws, "least_squares", mode, k, l, 0.0, summary.witness_grad, threshold,
                                 !summary.witness_exceeds});
        report.summaries.push_back(summary);
      }
  return report;
}

}  // namespace snmdp
