#include <algorithm>
#include <cmath>
#include <numbers>

#include "snmdp/envs.hpp"
#include "snmdp/error.hpp"

namespace snmdp {

namespace {

constexpr double kGravity = 9.8;
constexpr double kCartMass = 1.0;
constexpr double kPoleMass = 0.1;
constexpr double kTotalMass = kCartMass + kPoleMass;
constexpr double kHalfLength = 0.5;
constexpr double kPoleMassLength = kPoleMass * kHalfLength;
constexpr double kForce = 10.0;
constexpr double kTau = 0.02;
constexpr double kAngleLimit = 12.0 * 2.0 * std::numbers::pi / 360.0;
constexpr double kPositionLimit = 2.4;

constexpr double kMinPosition = -1.2;
constexpr double kMaxPosition = 0.6;
constexpr double kMaxSpeed = 0.07;
constexpr double kGoalPosition = 0.5;

}  // namespace

const char* to_string(ControlTask t) { return t == ControlTask::cartpole ? "cartpole" : "mountaincar"; }

ControlTask control_task_from_string(const std::string& name) {
  if (name == "cartpole") return ControlTask::cartpole;
  if (name == "mountaincar") return ControlTask::mountaincar;
  throw ConfigError("unknown environment '" + name + "' (expected cartpole or mountaincar)");
}

StepResult cartpole_step(const Eigen::VectorXd& state, int action) {
  require(state.size() == 4, "cartpole_step: state must have 4 entries");
  require(action == 0 || action == 1, "cartpole_step: action must be 0 or 1");
  const double x = state(0), x_dot = state(1), theta = state(2), theta_dot = state(3);
  const double force = action == 1 ? kForce : -kForce;
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  const double temp = (force + kPoleMassLength * theta_dot * theta_dot * sin_t) / kTotalMass;
  const double theta_acc =
      (kGravity * sin_t - cos_t * temp) / (kHalfLength * (4.0 / 3.0 - kPoleMass * cos_t * cos_t / kTotalMass));
  const double x_acc = temp - kPoleMassLength * theta_acc * cos_t / kTotalMass;

  StepResult out;
  out.next_state.resize(4);
  out.next_state << x + kTau * x_dot, x_dot + kTau * x_acc, theta + kTau * theta_dot, theta_dot + kTau * theta_acc;
  out.reward = 1.0;
  out.terminated = std::abs(out.next_state(0)) > kPositionLimit || std::abs(out.next_state(2)) > kAngleLimit;
  return out;
}

StepResult mountaincar_step(const Eigen::VectorXd& state, int action) {
  require(state.size() == 2, "mountaincar_step: state must have 2 entries");
  require(action >= 0 && action <= 2, "mountaincar_step: action must be 0, 1 or 2");
  double position = state(0), velocity = state(1);
  velocity += 0.001 * (action - 1) - 0.0025 * std::cos(3.0 * position);
  velocity = std::clamp(velocity, -kMaxSpeed, kMaxSpeed);
  position += velocity;
  position = std::clamp(position, kMinPosition, kMaxPosition);
  if (position == kMinPosition && velocity < 0.0) velocity = 0.0;

  StepResult out;
  out.next_state.resize(2);
  out.next_state << position, velocity;
  out.reward = -1.0;
  out.terminated = position >= kGoalPosition;
  return out;
}

ControlEnv::ControlEnv(ControlTask task, std::size_t cap) : task_(task), cap_(cap) {
  require(cap > 0, "ControlEnv: episode cap must be positive");
}

const Eigen::VectorXd& ControlEnv::reset(Rng& rng) {
  if (task_ == ControlTask::cartpole) {
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    state_.resize(4);
    for (Eigen::Index i = 0; i < 4; ++i) state_(i) = u(rng);
  } else {
    std::uniform_real_distribution<double> u(-0.6, -0.4);
    state_.resize(2);
    state_ << u(rng), 0.0;
  }
  steps_ = 0;
  done_ = false;
  return state_;
}

void ControlEnv::reset_to(const Eigen::VectorXd& state) {
  require(static_cast<std::size_t>(state.size()) == state_dim(), "ControlEnv::reset_to: wrong state size");
  state_ = state;
  steps_ = 0;
  done_ = false;
}

StepResult ControlEnv::step(int action) {
  if (done_) throw ConfigError("ControlEnv::step called on a finished episode; reset first");
  StepResult out = task_ == ControlTask::cartpole ? cartpole_step(state_, action) : mountaincar_step(state_, action);
  ++steps_;
  out.truncated = !out.terminated && steps_ >= cap_;
  state_ = out.next_state;
  done_ = out.done();
  return out;
}

}  // namespace snmdp
