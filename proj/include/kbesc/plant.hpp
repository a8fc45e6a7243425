#pragma once

#include <kbesc/kernel.hpp>
#include <kbesc/types.hpp>

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>

namespace kbesc {

/// Finite-dimensional plant  x' = g(x, theta),  y = h(x, theta).
/// ODE plants ignore theta in the output; static maps have no state and read
/// the held input instead.
struct PlantModel {
  using Dynamics = std::function<Vector(const Vector& x, const Vector& theta)>;
  using Output = std::function<double(const Vector& x, const Vector& theta)>;
  using Map = std::function<double(const Vector& theta)>;

  std::string name;
  Eigen::Index state_dim = 0;
  Eigen::Index input_dim = 0;
  Dynamics dynamics;
  Output output;
  /// Closed-form steady-state map, when known.
  Map truth;

  bool has_truth() const { return static_cast<bool>(truth); }
  bool is_static() const { return state_dim == 0; }
};

struct PlantState {
  double t = 0.0;
  Vector x;
  Vector theta_applied;
};

inline constexpr double kDivergenceBound = 1e12;

/// Called after every integrator step with the new state.
using StepObserver = std::function<void(const PlantState&)>;

/// Fixed-step RK4 under constant theta over [t, t + duration]; the last step is
/// shortened so the end time is hit exactly.
inline PlantState integrate(const PlantModel& model, PlantState state, const Vector& theta, double duration,
                            double dt, const StepObserver& observer = {}) {
  if (!(duration > 0.0) || !(dt > 0.0) || dt > duration) {
    throw Error("integrate: require 0 < dt <= duration");
  }
  if (theta.size() != model.input_dim) throw DimensionMismatch("integrate: input dimension");
  if (state.x.size() != model.state_dim) throw DimensionMismatch("integrate: state dimension");
  state.theta_applied = theta;
  const double t_end = state.t + duration;
  if (model.is_static()) {
    state.t = t_end;
    if (observer) observer(state);
    return state;
  }
  const auto steps = static_cast<long long>(std::ceil(duration / dt - 1e-9));
  const double t0 = state.t;
  for (long long i = 0; i < steps; ++i) {
    const double t_next = i + 1 == steps ? t_end : t0 + static_cast<double>(i + 1) * dt;
    const double h = t_next - state.t;
    const Vector& x = state.x;
    const Vector k1 = model.dynamics(x, theta);
    const Vector k2 = model.dynamics(x + 0.5 * h * k1, theta);
    const Vector k3 = model.dynamics(x + 0.5 * h * k2, theta);
    const Vector k4 = model.dynamics(x + h * k3, theta);
    state.x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    state.t = t_next;
    if (!state.x.allFinite() || state.x.lpNorm<Eigen::Infinity>() > kDivergenceBound) {
      throw SimulationDivergence("integrate: state diverged at t = " + std::to_string(state.t));
    }
    if (observer) observer(state);
  }
  return state;
}

inline double measure(const PlantModel& model, const PlantState& state) {
  return model.output(state.x, state.theta_applied);
}

/// x1' = -4 x1^3 + 0.5 (theta1 - theta1*)^6
/// x2' = 2 x1 - 5 x2^3 + (theta2 - theta2*)^2
/// y   = -exp(-0.1 x2^3)
/// with steady-state map f(theta) = -exp(-|theta - theta*|^2 / 50).
inline PlantModel benchmark_plant(Vector theta_star = Vector::Zero(0)) {
  if (theta_star.size() == 0) {
    theta_star = Vector(2);
    theta_star << 3.0, 1.0;
  }
  if (theta_star.size() != 2) throw DimensionMismatch("benchmark plant: theta_star must have two entries");
  PlantModel m;
  m.name = "benchmark_eq34";
  m.state_dim = 2;
  m.input_dim = 2;
  m.dynamics = [ts = theta_star](const Vector& x, const Vector& th) {
    const double d1 = th(0) - ts(0), d2 = th(1) - ts(1);
    Vector dx(2);
    dx(0) = -4.0 * x(0) * x(0) * x(0) + 0.5 * std::pow(d1, 6);
    dx(1) = 2.0 * x(0) - 5.0 * x(1) * x(1) * x(1) + d2 * d2;
    return dx;
  };
  m.output = [](const Vector& x, const Vector&) { return -std::exp(-0.1 * x(1) * x(1) * x(1)); };
  m.truth = [ts = theta_star, k = KernelSpec::squared_exponential(5.0)](const Vector& th) {
    return -kernel::eval(k, th, ts);
  };
  return m;
}

/// Memoryless plant y = f(theta); waiting times only advance the clock.
inline PlantModel static_map(PlantModel::Map f, Eigen::Index input_dim, PlantModel::Map truth = {}) {
  PlantModel m;
  m.name = "static";
  m.state_dim = 0;
  m.input_dim = input_dim;
  m.dynamics = [](const Vector& x, const Vector&) { return Vector::Zero(x.size()); };
  m.output = [f](const Vector&, const Vector& th) { return f(th); };
  m.truth = truth ? std::move(truth) : f;
  return m;
}

/// Samples of the plant trajectory streamed to an observer.
struct TracePoint {
  double t;
  const Vector& x;
  const Vector& theta;
  double y;
};
using TraceHook = std::function<void(const TracePoint&)>;

/// A live plant: owns the state and enforces the hold-then-sample protocol.
class PlantSession {
 public:
  PlantSession(PlantModel model, Vector x0, double dt) : model_(std::move(model)), dt_(dt) {
    if (!(dt > 0.0)) throw Error("plant session: dt must be positive");
    if (x0.size() != model_.state_dim) throw DimensionMismatch("plant session: initial state dimension");
    state_.x = std::move(x0);
    state_.theta_applied = Vector::Zero(model_.input_dim);
  }

  /// Every `decimation`-th integrator step (and every sample) is reported.
  void set_trace_hook(TraceHook hook, std::size_t decimation = 1) {
    hook_ = std::move(hook);
    decimation_ = std::max<std::size_t>(decimation, 1);
  }

  /// Holds theta for `duration` and returns the output at the end of the interval.
  double hold_and_sample(const Vector& theta, double duration) {
    StepObserver obs;
    if (hook_ && !model_.is_static()) {
      obs = [this](const PlantState& s) {
        if (++steps_ % decimation_ == 0) emit(s);
      };
    }
    state_ = integrate(model_, std::move(state_), theta, duration, std::min(dt_, duration), obs);
    ++samples_;
    if (hook_ && (model_.is_static() || steps_ % decimation_ != 0)) emit(state_);
    return measure(model_, state_);
  }

  const PlantModel& model() const { return model_; }
  const PlantState& state() const { return state_; }
  std::size_t samples_taken() const { return samples_; }
  double dt() const { return dt_; }

 private:
  void emit(const PlantState& s) const { hook_({s.t, s.x, s.theta_applied, measure(model_, s)}); }

  PlantModel model_;
  PlantState state_;
  double dt_;
  TraceHook hook_;
  std::size_t decimation_ = 1;
  std::size_t steps_ = 0;
  std::size_t samples_ = 0;
};

}  // namespace kbesc
