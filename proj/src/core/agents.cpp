#include "snmdp/agents.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/special_functions/gamma.hpp>

#include "snmdp/error.hpp"

namespace snmdp {

namespace {

[[noreturn]] void unknown(const char* what, const std::string& name, const char* expected) {
  throw ConfigError(std::string("unknown ") + what + " '" + name + "' (expected " + expected + ")");
}

int argmax_lowest(const Eigen::VectorXd& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return static_cast<int>(best);
}

Eigen::MatrixXd glorot(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = u(rng);
  return m;
}

Eigen::MatrixXd stack_states(const std::vector<const Transition*>& batch, bool next) {
  const Eigen::Index d = batch.front()->observed_state.size();
  Eigen::MatrixXd x(d, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b)
    x.col(static_cast<Eigen::Index>(b)) = next ? batch[b]->observed_next_state : batch[b]->observed_state;
  return x;
}

}  // namespace

const char* to_string(LossKind k) { return k == LossKind::histogram ? "histogram" : "least_squares"; }
const char* to_string(HeadMode m) { return m == HeadMode::linear ? "linear" : "nonlinear"; }
const char* to_string(TargetProjection p) { return p == TargetProjection::overlap ? "overlap" : "bin_mass"; }
const char* to_string(NoiseSite s) {
  switch (s) {
    case NoiseSite::none: return "none";
    case NoiseSite::current: return "current";
    case NoiseSite::next: return "next";
    case NoiseSite::both: return "both";
  }
  return "none";
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "least_squares") return LossKind::least_squares;
  if (name == "histogram") return LossKind::histogram;
  unknown("loss kind", name, "least_squares or histogram");
}

HeadMode head_mode_from_string(const std::string& name) {
  if (name == "linear") return HeadMode::linear;
  if (name == "nonlinear") return HeadMode::nonlinear;
  unknown("head mode", name, "linear or nonlinear");
}

NoiseSite noise_site_from_string(const std::string& name) {
  if (name == "none") return NoiseSite::none;
  if (name == "current") return NoiseSite::current;
  if (name == "next") return NoiseSite::next;
  if (name == "both") return NoiseSite::both;
  unknown("noise site", name, "none, current, next or both");
}

TargetProjection target_projection_from_string(const std::string& name) {
  if (name == "overlap") return TargetProjection::overlap;
  if (name == "bin_mass") return TargetProjection::bin_mass;
  unknown("target projection", name, "overlap or bin_mass");
}

// ---- config -------------------------------------------------------------

void AgentConfig::validate() const {
  if (loss_kind == LossKind::histogram) {
    if (k < 2) throw ConfigError("agent: histogram agents need k >= 2");
    if (!norm_bound) throw ConfigError("agent: histogram agents need a norm bound l");
    if (!(v_max > v_min)) throw ConfigError("agent: support needs v_min < v_max");
  }
  if (norm_bound && !(*norm_bound > 0.0)) throw ConfigError("agent: norm bound must be positive");
  if (head_mode == HeadMode::nonlinear && (width == 0 || depth == 0))
    throw ConfigError("agent: nonlinear heads need positive width and depth");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("agent: gamma must be in (0, 1)");
  if (!(learning_rate > 0.0)) throw ConfigError("agent: learning rate must be positive");
  if (replay_capacity == 0 || batch_size == 0 || target_sync == 0 || total_steps == 0)
    throw ConfigError("agent: replay capacity, batch size, target sync and total steps must be positive");
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 && epsilon_end <= 1.0))
    throw ConfigError("agent: exploration rates must be in [0, 1]");
  if (!(exploration_fraction > 0.0 && exploration_fraction <= 1.0))
    throw ConfigError("agent: exploration fraction must be in (0, 1]");
}

double AgentConfig::epsilon_at(std::size_t step) const {
  const double horizon = exploration_fraction * static_cast<double>(total_steps);
  const double t = std::min(1.0, static_cast<double>(step) / horizon);
  return epsilon_start + t * (epsilon_end - epsilon_start);
}

// ---- replay --------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  require(capacity > 0, "ReplayBuffer: capacity must be positive");
  data_.reserve(capacity);
}

void ReplayBuffer::push(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
  }
  size_ = data_.size();
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  require(i < size_, "ReplayBuffer::at: index out of range");
  return data_[(head_ + i) % capacity_];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(Rng& rng, std::size_t n) const {
  require(size_ > 0, "ReplayBuffer::sample_indices: buffer is empty");
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  std::vector<std::size_t> out(n);
  for (auto& i : out) i = pick(rng);
  return out;
}

// ---- network -------------------------------------------------------------

QNetwork::QNetwork(NonlinearFeatureMap torso, Eigen::MatrixXd rows, Eigen::VectorXd bias, std::size_t n_actions)
    : torso_(std::move(torso)), rows_(std::move(rows)), bias_(std::move(bias)), n_actions_(n_actions) {
  require(n_actions > 0, "QNetwork: need at least one action");
  require(rows_.rows() % static_cast<Eigen::Index>(n_actions) == 0 && rows_.rows() > 0,
          "QNetwork: rows must split evenly across actions");
  require(static_cast<std::size_t>(rows_.cols()) == torso_.output_dim(), "QNetwork: row width mismatch");
  require(bias_.size() == rows_.rows(), "QNetwork: bias size mismatch");
}

QNetwork QNetwork::random(Rng& rng, const AgentConfig& config, std::size_t state_dim, std::size_t n_actions) {
  NonlinearFeatureMap torso = config.head_mode == HeadMode::linear
                                  ? NonlinearFeatureMap::identity(state_dim)
                                  : NonlinearFeatureMap::random(rng, state_dim, config.width, config.depth,
                                                                config.activation);
  const auto out = static_cast<Eigen::Index>(n_actions * config.outputs_per_action());
  const auto m = static_cast<Eigen::Index>(torso.output_dim());
  QNetwork net(std::move(torso), glorot(rng, out, m), Eigen::VectorXd::Zero(out), n_actions);
  if (config.norm_bound) net.project_rows(*config.norm_bound);
  return net;
}

Eigen::MatrixXd QNetwork::scores(const Eigen::MatrixXd& x, FeatureCache* cache) const {
  Eigen::MatrixXd phi = torso_.forward_batch(x, cache);
  Eigen::MatrixXd s = rows_ * phi;
  s.colwise() += bias_;
  return s;
}

Eigen::MatrixXd QNetwork::backward(const FeatureCache& cache, const Eigen::MatrixXd& d_scores, QGrads* grads) const {
  if (grads) {
    grads->d_rows.noalias() = d_scores * cache.output.transpose();
    grads->d_bias = d_scores.rowwise().sum();
  }
  const Eigen::MatrixXd d_phi = rows_.transpose() * d_scores;
  if (torso_.is_identity()) return d_phi;
  return torso_.backward(cache, d_phi, grads ? &grads->torso : nullptr);
}

void QNetwork::sgd_step(const QGrads& grads, double lr) {
  rows_.noalias() -= lr * grads.d_rows;
  bias_.noalias() -= lr * grads.d_bias;
  if (torso_.is_identity()) return;
  auto& layers = torso_.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].W.noalias() -= lr * grads.torso.dW[i];
    layers[i].b.noalias() -= lr * grads.torso.db[i];
  }
}

void QNetwork::project_rows(double l) { rows_ = project_row_norms(rows_, l); }

Eigen::VectorXd QNetwork::parameters() const {
  const Eigen::VectorXd torso = torso_.is_identity() ? Eigen::VectorXd() : torso_.parameters();
  Eigen::VectorXd out(torso.size() + rows_.size() + bias_.size());
  out << torso, Eigen::Map<const Eigen::VectorXd>(rows_.data(), rows_.size()), bias_;
  return out;
}

void QNetwork::set_parameters(const Eigen::VectorXd& theta) {
  const Eigen::Index t = torso_.is_identity() ? 0 : static_cast<Eigen::Index>(torso_.parameter_count());
  require(theta.size() == t + rows_.size() + bias_.size(), "QNetwork::set_parameters: size mismatch");
  if (t > 0) torso_.set_parameters(theta.head(t));
  Eigen::Map<Eigen::VectorXd>(rows_.data(), rows_.size()) = theta.segment(t, rows_.size());
  bias_ = theta.tail(bias_.size());
}

Eigen::VectorXd QNetwork::flatten(const QGrads& grads, bool include_torso) {
  const Eigen::VectorXd torso = include_torso ? NonlinearFeatureMap::flatten(grads.torso) : Eigen::VectorXd();
  Eigen::VectorXd out(torso.size() + grads.d_rows.size() + grads.d_bias.size());
  out << torso, Eigen::Map<const Eigen::VectorXd>(grads.d_rows.data(), grads.d_rows.size()), grads.d_bias;
  return out;
}

// ---- histogram targets ---------------------------------------------------

TargetHistogram histogram_td_target(const Eigen::VectorXd& q, double reward, bool done, double gamma, double v_min,
                                    double v_max, TargetProjection projection) {
  const auto k = static_cast<std::size_t>(q.size());
  require(k >= 2, "histogram_td_target: need at least two bins");
  TargetHistogram out{Eigen::VectorXd::Zero(q.size())};
  if (done) {
    out.p(static_cast<Eigen::Index>(histogram_bin(reward, v_min, v_max, k))) = 1.0;
    return out;
  }
  const double width = (v_max - v_min) / static_cast<double>(k);
  if (projection == TargetProjection::bin_mass) {
    for (std::size_t j = 0; j < k; ++j) {
      const double atom = reward + gamma * (v_min + (static_cast<double>(j) + 0.5) * width);
      out.p(static_cast<Eigen::Index>(histogram_bin(atom, v_min, v_max, k))) += q(static_cast<Eigen::Index>(j));
    }
    return out;
  }
  const auto last = static_cast<Eigen::Index>(k) - 1;
  for (std::size_t j = 0; j < k; ++j) {
    const double mass = q(static_cast<Eigen::Index>(j));
    if (mass == 0.0) continue;
    const double lo = reward + gamma * (v_min + static_cast<double>(j) * width);
    const double hi = reward + gamma * (v_min + static_cast<double>(j + 1) * width);
    const double len = hi - lo;
    // Mass outside the support goes to the end bins.
    if (lo < v_min) out.p(0) += mass * (std::min(hi, v_min) - lo) / len;
    if (hi > v_max) out.p(last) += mass * (hi - std::max(lo, v_max)) / len;
    const double a = std::max(lo, v_min), b = std::min(hi, v_max);
    if (!(b > a)) continue;
    const auto first = static_cast<Eigen::Index>(histogram_bin(a, v_min, v_max, k));
    for (Eigen::Index i = std::min(first, last); i <= last; ++i) {
      const double bin_lo = v_min + static_cast<double>(i) * width;
      const double bin_hi = i == last ? v_max : bin_lo + width;
      if (bin_lo >= b) break;
      const double overlap = std::min(b, bin_hi) - std::max(a, bin_lo);
      if (overlap > 0.0) out.p(i) += mass * overlap / len;
    }
  }
  out.p /= out.p.sum();
  return out;
}

// ---- agent ---------------------------------------------------------------

struct Agent::BatchPass {
  double loss = 0.0;
  Eigen::MatrixXd d_state;  // per-sample loss gradients with respect to observed states
  QGrads grads;             // gradient of the batch objective
  bool finite = true;
};

Agent::Agent(const AgentConfig& config, std::size_t state_dim, std::size_t n_actions, Rng& init_rng)
    : config_(config),
      online_((config.validate(), QNetwork::random(init_rng, config, state_dim, n_actions))),
      target_(online_) {}

Eigen::VectorXd Agent::bin_centers() const {
  const auto k = static_cast<Eigen::Index>(config_.k);
  const double width = (config_.v_max - config_.v_min) / static_cast<double>(k);
  Eigen::VectorXd c(k);
  for (Eigen::Index i = 0; i < k; ++i) c(i) = config_.v_min + (static_cast<double>(i) + 0.5) * width;
  return c;
}

namespace {

Eigen::VectorXd expectations(const Eigen::VectorXd& scores, std::size_t n_actions, std::size_t k,
                             const Eigen::VectorXd& centers) {
  Eigen::VectorXd q(static_cast<Eigen::Index>(n_actions));
  const auto kk = static_cast<Eigen::Index>(k);
  for (std::size_t a = 0; a < n_actions; ++a)
    q(static_cast<Eigen::Index>(a)) = softmax(scores.segment(static_cast<Eigen::Index>(a) * kk, kk)).dot(centers);
  return q;
}

}  // namespace

Eigen::VectorXd Agent::q_values(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd s = online_.scores(x).col(0);
  if (config_.loss_kind == LossKind::least_squares) return s;
  return expectations(s, n_actions(), config_.k, bin_centers());
}

Eigen::VectorXd Agent::target_q_values(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd s = target_.scores(x).col(0);
  if (config_.loss_kind == LossKind::least_squares) return s;
  return expectations(s, n_actions(), config_.k, bin_centers());
}

Eigen::MatrixXd Agent::distributions(const Eigen::VectorXd& x) const {
  require(config_.loss_kind == LossKind::histogram, "Agent::distributions: histogram agents only");
  const Eigen::VectorXd s = online_.scores(x).col(0);
  const auto k = static_cast<Eigen::Index>(config_.k);
  Eigen::MatrixXd f(k, static_cast<Eigen::Index>(n_actions()));
  for (Eigen::Index a = 0; a < f.cols(); ++a) f.col(a) = softmax(s.segment(a * k, k));
  return f;
}

int Agent::act(const Eigen::VectorXd& x, double epsilon, Rng& rng) const {
  if (uniform01(rng) < epsilon) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(n_actions()) - 1);
    return pick(rng);
  }
  return argmax_lowest(q_values(x));
}

Agent::BatchPass Agent::forward_pass(const std::vector<const Transition*>& batch, bool need_grads) const {
  require(!batch.empty(), "Agent::update: batch must be non-empty");
  const auto n = static_cast<Eigen::Index>(batch.size());
  const Eigen::MatrixXd x = stack_states(batch, false);
  const Eigen::MatrixXd xn = stack_states(batch, true);
  const Eigen::MatrixXd target_scores = target_.scores(xn);
  FeatureCache cache;
  const Eigen::MatrixXd s = online_.scores(x, &cache);
  Eigen::MatrixXd d_scores = Eigen::MatrixXd::Zero(s.rows(), s.cols());
  BatchPass out;
  double scale = 1.0;

  if (config_.loss_kind == LossKind::least_squares) {
    for (Eigen::Index b = 0; b < n; ++b) {
      const Transition& t = *batch[static_cast<std::size_t>(b)];
      const double next = t.done ? 0.0 : target_scores.col(b).maxCoeff();
      const double u = t.reward + config_.gamma * next;
      const double delta = s(t.action, b) - u;
      out.loss += 0.5 * delta * delta;
      d_scores(t.action, b) = delta;
    }
  } else {
    const auto k = static_cast<Eigen::Index>(config_.k);
    const Eigen::VectorXd centers = bin_centers();
    for (Eigen::Index b = 0; b < n; ++b) {
      const Transition& t = *batch[static_cast<std::size_t>(b)];
      TargetHistogram p;
      if (t.done) {
        p = histogram_td_target(Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k)), t.reward, true,
                                config_.gamma, config_.v_min, config_.v_max, config_.target_projection);
      } else {
        const Eigen::VectorXd col = target_scores.col(b);
        const int a_star = argmax_lowest(expectations(col, n_actions(), config_.k, centers));
        p = histogram_td_target(softmax(col.segment(a_star * k, k)), t.reward, false, config_.gamma, config_.v_min,
                                config_.v_max, config_.target_projection);
      }
      const Eigen::VectorXd block = s.col(b).segment(t.action * k, k);
      out.loss += histogram_loss_from_scores(p, block);
      d_scores.col(b).segment(t.action * k, k) = softmax(block) - p.p;
    }
    out.loss /= static_cast<double>(n);
    scale = 1.0 / static_cast<double>(n);
  }
  out.finite = std::isfinite(out.loss);
  out.d_state = online_.backward(cache, d_scores, need_grads ? &out.grads : nullptr);
  if (need_grads && scale != 1.0) {
    out.grads.d_rows *= scale;
    out.grads.d_bias *= scale;
    for (auto& w : out.grads.torso.dW) w *= scale;
    for (auto& v : out.grads.torso.db) v *= scale;
  }
  return out;
}

double Agent::batch_loss(const std::vector<const Transition*>& batch) const {
  return forward_pass(batch, false).loss;
}

Eigen::VectorXd Agent::batch_loss_gradient(const std::vector<const Transition*>& batch) const {
  return QNetwork::flatten(forward_pass(batch, true).grads, !online_.torso().is_identity());
}

UpdateDiagnostics Agent::update(const std::vector<const Transition*>& batch) {
  BatchPass pass = forward_pass(batch, true);
  UpdateDiagnostics diag;
  diag.loss = pass.loss;
  diag.finite = pass.finite;
  diag.grad_bound = config_.loss_kind == LossKind::histogram
                        ? static_cast<double>(config_.k) * *config_.norm_bound * online_.lipschitz_bound()
                        : std::numeric_limits<double>::infinity();
  const Eigen::VectorXd norms = pass.d_state.colwise().norm().transpose();
  diag.mean_state_grad_norm = norms.mean();
  diag.max_state_grad_norm = norms.maxCoeff();
  for (Eigen::Index b = 0; b < norms.size(); ++b)
    if (!(norms(b) <= diag.grad_bound)) ++diag.bound_violations;
  if (!pass.finite) return diag;

  online_.sgd_step(pass.grads, config_.learning_rate);
  if (config_.norm_bound) online_.project_rows(*config_.norm_bound);
  ++updates_;
  if (updates_ % config_.target_sync == 0) sync_target();
  return diag;
}

PolicyLogits Agent::policy_logits(double temperature) const {
  require(temperature > 0.0, "policy_logits: temperature must be positive");
  PolicyLogits out;
  out.logits = [this, temperature](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return q_values(x) / temperature;
  };
  out.cross_entropy_grad = [this, temperature](const Eigen::VectorXd& x, int target) -> Eigen::VectorXd {
    FeatureCache cache;
    const Eigen::VectorXd s = online_.scores(x, &cache).col(0);
    const auto na = static_cast<Eigen::Index>(n_actions());
    Eigen::VectorXd q;
    Eigen::MatrixXd d_scores = Eigen::MatrixXd::Zero(s.size(), 1);
    if (config_.loss_kind == LossKind::least_squares) {
      q = s;
    } else {
      q = expectations(s, n_actions(), config_.k, bin_centers());
    }
    Eigen::VectorXd g = softmax(q / temperature);
    g(target) -= 1.0;
    g /= temperature;
    if (config_.loss_kind == LossKind::least_squares) {
      d_scores.col(0) = g;
    } else {
      // dQ_a / ds_{a,j} = f_j (c_j - Q_a)
      const auto k = static_cast<Eigen::Index>(config_.k);
      const Eigen::VectorXd centers = bin_centers();
      for (Eigen::Index a = 0; a < na; ++a) {
        const Eigen::VectorXd f = softmax(s.segment(a * k, k));
        d_scores.col(0).segment(a * k, k) = g(a) * f.cwiseProduct((centers.array() - q(a)).matrix());
      }
    }
    return online_.backward(cache, d_scores, nullptr).col(0);
  };
  return out;
}

// ---- noise and episodes ------------------------------------------------

double NoiseInjection::strength() const {
  if (const auto* g = std::get_if<GaussianNoise>(&noise)) return site == NoiseSite::none ? 0.0 : g->std;
  return site == NoiseSite::none ? 0.0 : std::get<PgdNoise>(noise).epsilon;
}

std::string NoiseInjection::kind() const { return std::holds_alternative<GaussianNoise>(noise) ? "gaussian" : "pgd"; }

Eigen::VectorXd perturb_observation(const Eigen::VectorXd& state, const NoiseInjection& injection,
                                    const PolicyLogits* logits, Rng& rng) {
  if (const auto* g = std::get_if<GaussianNoise>(&injection.noise)) {
    if (g->std == 0.0) return state;
    return apply_gaussian(state, g->std, rng);
  }
  const auto& pgd = std::get<PgdNoise>(injection.noise);
  if (pgd.epsilon == 0.0) return state;
  require(logits != nullptr, "perturb_observation: PGD needs policy logits");
  return state + pgd_perturbation(state, *logits, PgdOptions{pgd.epsilon, pgd.iterations, pgd.step_size, false});
}

EpisodeResult run_episode(ControlEnv& env, const NoiseInjection& injection, const ActionFn& act,
                          const LogitsFn& adversary, Rng& env_rng, Rng& noise_rng, const TransitionFn& on_transition,
                          bool record) {
  const bool perturb_current = injection.site == NoiseSite::current || injection.site == NoiseSite::both;
  const bool perturb_next = injection.site == NoiseSite::next || injection.site == NoiseSite::both;
  const bool pgd = std::holds_alternative<PgdNoise>(injection.noise);
  auto observe = [&](const Eigen::VectorXd& s) {
    if (!pgd) return perturb_observation(s, injection, nullptr, noise_rng);
    const PolicyLogits logits = adversary();
    return perturb_observation(s, injection, &logits, noise_rng);
  };

  EpisodeResult out;
  Eigen::VectorXd state = env.reset(env_rng);
  if (record) out.true_states.push_back(state);
  Eigen::VectorXd obs = perturb_current ? observe(state) : state;
  while (true) {
    const int action = act(obs);
    const StepResult r = env.step(action);
    out.ret += r.reward;
    ++out.steps;
    Transition t{obs, action, r.reward, perturb_next ? observe(r.next_state) : r.next_state, r.terminated};
    if (record) out.true_states.push_back(r.next_state);
    const bool keep_going = on_transition ? on_transition(t) : true;
    if (r.done()) {
      if (record) out.transitions.push_back(std::move(t));
      break;
    }
    if (injection.site == NoiseSite::both)
      obs = t.observed_next_state;
    else
      obs = perturb_current ? observe(r.next_state) : r.next_state;
    if (record) out.transitions.push_back(std::move(t));
    if (!keep_going) {
      out.completed = false;
      break;
    }
  }
  return out;
}

// ---- training --------------------------------------------------------------

double TrainResult::final_return(double fraction) const {
  if (episodes.empty()) return 0.0;
  const auto n = episodes.size();
  const auto tail = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n))));
  double total = 0.0;
  for (std::size_t i = n - tail; i < n; ++i) total += episodes[i].ret;
  return total / static_cast<double>(tail);
}

TrainResult train(const TrainConfig& config, std::uint64_t seed) {
  const AgentConfig& ac = config.agent;
  ac.validate();
  Rng init_rng(derive_seed(seed, 0));
  Rng env_rng(derive_seed(seed, 1));
  Rng explore_rng(derive_seed(seed, 2));
  Rng replay_rng(derive_seed(seed, 3));
  Rng noise_rng(derive_seed(seed, 4));

  ControlEnv env(config.env, config.episode_cap);
  Agent agent(ac, env.state_dim(), env.n_actions(), init_rng);
  ReplayBuffer replay(ac.replay_capacity);
  TrainResult result;
  std::size_t step = 0;
  const double temperature = config.injection.pgd_temperature;

  const ActionFn act = [&](const Eigen::VectorXd& obs) { return agent.act(obs, ac.epsilon_at(step), explore_rng); };
  const LogitsFn adversary = [&]() { return agent.policy_logits(temperature); };

  std::vector<const Transition*> batch(ac.batch_size);
  while (step < ac.total_steps && !result.diverged) {
    EpisodeLog log;
    double grad_sum = 0.0;
    const TransitionFn on_transition = [&](const Transition& t) {
      replay.push(t);
      ++step;
      if (replay.size() >= std::max(ac.learning_starts, ac.batch_size)) {
        const auto idx = replay.sample_indices(replay_rng, ac.batch_size);
        for (std::size_t i = 0; i < idx.size(); ++i) batch[i] = &replay.at(idx[i]);
        const UpdateDiagnostics d = agent.update(batch);
        if (!d.finite) {
          result.diverged = true;
          return false;
        }
        ++log.updates;
        grad_sum += d.mean_state_grad_norm;
        result.bound_violations += d.bound_violations;
        if (std::isfinite(d.grad_bound))
          result.max_grad_to_bound = std::max(result.max_grad_to_bound, d.max_state_grad_norm / d.grad_bound);
        if (agent.updates() % ac.target_sync == 0 &&
            agent.target().parameters() != agent.online().parameters())
          result.target_sync_consistent = false;
      }
      return step < ac.total_steps;
    };
    const EpisodeResult ep = run_episode(env, config.injection, act, adversary, env_rng, noise_rng, on_transition,
                                         false);
    if (!ep.completed) break;
    log.episode = result.episodes.size();
    log.ret = ep.ret;
    log.steps = ep.steps;
    log.mean_state_grad_norm = log.updates ? grad_sum / static_cast<double>(log.updates) : 0.0;
    result.episodes.push_back(log);
    // A finished episode whose last step exhausted the budget still counts.
    if (step >= ac.total_steps) break;
  }
  result.total_updates = agent.updates();
  return result;
}

ChiSquare chi_square_uniform(const std::vector<std::size_t>& counts) {
  require(counts.size() >= 2, "chi_square_uniform: need at least two cells");
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  require(total > 0.0, "chi_square_uniform: no observations");
  const double expected = total / static_cast<double>(counts.size());
  ChiSquare out;
  for (auto c : counts) {
    const double d = static_cast<double>(c) - expected;
    out.statistic += d * d / expected;
  }
  out.dof = counts.size() - 1;
  out.p_value = boost::math::gamma_q(0.5 * static_cast<double>(out.dof), 0.5 * out.statistic);
  return out;
}

}  // namespace snmdp
