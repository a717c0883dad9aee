#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "rtpl/control.hpp"
#include "rtpl/dynamics.hpp"
#include "rtpl/rbf_network.hpp"
#include "rtpl/smrls.hpp"

namespace rtpl {

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SimConfig {
  double dt = 0.005;            // control and sampling period
  std::size_t substeps = 1;     // RK4 steps per control period
  double duration = 100.0;
  Eigen::VectorXd x0 = Eigen::Vector2d(std::numbers::pi / 60.0, 0.0);
  double weight_log_interval = 1.0;
  bool keep_weight_history = false;  // every step, in memory only

  std::size_t steps() const { return static_cast<std::size_t>(std::llround(duration / dt)); }

  void validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("sim: dt must be positive");
    if (!(duration > 0.0)) throw std::invalid_argument("sim: duration must be positive");
    if (substeps < 1) throw std::invalid_argument("sim: substeps must be >= 1");
  }
};

/// Classical RK4 with the input held over the step.
inline Eigen::VectorXd integrate_step(const Plant& plant, const Eigen::VectorXd& x, double u, double dt,
                                      double t = 0.0) {
  if (!(dt > 0.0)) throw std::invalid_argument("integrate_step: dt must be positive");
  const Eigen::VectorXd k1 = plant.derivative(x, u, t);
  const Eigen::VectorXd k2 = plant.derivative(x + 0.5 * dt * k1, u, t + 0.5 * dt);
  const Eigen::VectorXd k3 = plant.derivative(x + 0.5 * dt * k2, u, t + 0.5 * dt);
  const Eigen::VectorXd k4 = plant.derivative(x + dt * k3, u, t + dt);
  Eigen::VectorXd next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) throw DivergenceError("state became non-finite at t=" + std::to_string(t + dt));
  return next;
}

struct Controller {
  BacksteppingGains gains;
  RbfNetwork network;
  Learner learner = PdLearner{};
};

inline constexpr double kAbsent = std::numeric_limits<double>::quiet_NaN();

struct TraceRow {
  double t;
  Eigen::Vector2d x;
  Eigen::Vector2d xd;
  Eigen::Vector2d xd_normalized;
  Eigen::Vector2d e;
  double u;
  double w_norm;
  double p_true;
  double p_hat;
  double k_e = kAbsent;
  double p_lmin = kAbsent;
  double p_lmax = kAbsent;

  double p_err() const { return p_true - p_hat; }
};

struct Trace {
  std::string method;
  double dt = 0.0;
  std::vector<TraceRow> rows;
  WeightHistory weights;  // thinned
};

struct RunResult {
  Trace trace;
  Controller controller;
  WeightHistory history;  // every step when requested
  double gain_lmin_observed = kAbsent;
};

/// Runs the loop one control period at a time: errors, control, log,
/// plant integration, then the learner update with the pre-integration e_n.
inline RunResult run_closed_loop(const Plant& plant, const Trajectory& traj, Controller controller,
                                 const SimConfig& config) {
  config.validate();
  controller.gains.validate();
  if (static_cast<std::size_t>(config.x0.size()) != plant.order || controller.gains.order() != plant.order)
    throw std::invalid_argument("run: plant order, gains, and initial state disagree");
  if (config.duration > traj.duration() * (1.0 + 1e-12))
    throw std::invalid_argument("run: duration exceeds trajectory duration");
  if (auto* rt = std::get_if<RtplLearner>(&controller.learner); rt && rt->memory.neurons() != controller.network.size())
    throw std::invalid_argument("run: memory size does not match network");
  if (auto* sg = std::get_if<SgdLearner>(&controller.learner);
      sg && static_cast<std::size_t>(sg->gamma.size()) != controller.network.size())
    throw std::invalid_argument("run: Gamma size does not match network");
  if (auto* fz = std::get_if<FrozenLearner>(&controller.learner))
    controller.network.set_weights(fz->weights);

  RunResult result;
  Trace& trace = result.trace;
  trace.method = method_name(controller.learner);
  trace.dt = config.dt;

  const std::size_t steps = config.steps();
  const auto log_stride =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(config.weight_log_interval / config.dt)));
  const double sub_dt = config.dt / static_cast<double>(config.substeps);
  const bool network_term = !std::holds_alternative<PdLearner>(controller.learner);
  trace.rows.reserve(steps + 1);

  Eigen::VectorXd x = config.x0;
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * config.dt;
    const ReferenceSample ref = traj.sample(t);
    const Eigen::VectorXd xd = ref.state();
    const Eigen::VectorXd xdn = traj.normalize(xd);
    const Eigen::VectorXd e = tracking_errors(x, xd, controller.gains);
    const Eigen::VectorXd phi = controller.network.regressor(xdn);
    const Eigen::VectorXd& w = controller.network.weights();
    const double p_hat = network_term ? w.dot(phi) : 0.0;
    const double u = control_output(e, controller.gains, p_hat);

    TraceRow row{t, x, xd, xdn, e, u, w.norm(), true_feedforward(plant, ref, t), p_hat};
    if (auto* rt = std::get_if<RtplLearner>(&controller.learner)) {
      row.k_e = eta(t, rt->gain) * phi.dot(rt->memory.gain() * phi);
      const GainBounds b = p_bounds(rt->memory);
      row.p_lmin = b.min;
      row.p_lmax = b.max;
      if (!(b.max <= rt->memory.p0() * (1.0 + 1e-9)) || !(b.min > 0.0))
        throw std::logic_error("gain matrix left (0, p0] at t=" + std::to_string(t));
      if (std::isnan(result.gain_lmin_observed) || b.min < result.gain_lmin_observed)
        result.gain_lmin_observed = b.min;
    }
    trace.rows.push_back(row);
    if (k % log_stride == 0 || k == steps) trace.weights.push(t, w);
    if (config.keep_weight_history) result.history.push(t, w);
    if (k == steps) break;

    for (std::size_t s = 0; s < config.substeps; ++s)
      x = integrate_step(plant, x, u, sub_dt, t + static_cast<double>(s) * sub_dt);

    const double e_n = e[e.size() - 1];
    std::visit(
        [&](auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, SgdLearner>) {
            controller.network.set_weights(sgd_update(controller.network.weights(), l.gamma, phi, e_n, config.dt));
          } else if constexpr (std::is_same_v<L, RtplLearner>) {
            rtpl_update(l.memory, controller.network, xdn, e_n, t, l.gain);
          }
        },
        controller.learner);
  }
  result.controller = std::move(controller);
  return result;
}

// ---------------------------------------------------------------------------
// Metrics

/// Left Riemann sum of value^2 dt.
inline double ise(std::span<const double> series, double dt) {
  if (series.empty()) throw std::invalid_argument("ise: empty series");
  double acc = 0.0;
  for (double v : series) acc += v * v;
  return acc * dt;
}

enum class Signal { TrackingError, ApproximationError };

inline double signal_value(const TraceRow& r, Signal s) {
  return s == Signal::TrackingError ? r.e[0] : r.p_err();
}

/// ISE of a trace signal over rows with t0 <= t < t1.
inline double ise_window(const Trace& trace, Signal s, double t0, double t1) {
  std::vector<double> v;
  const double tol = 1e-9 * trace.dt;
  for (const auto& r : trace.rows)
    if (r.t >= t0 - tol && r.t < t1 - tol) v.push_back(signal_value(r, s));
  return ise(v, trace.dt);
}

struct Metrics {
  double ise_e1 = 0.0;
  double ise_p = 0.0;
  double max_abs_e1 = 0.0;
  std::vector<double> weight_distance;  // |W(t) - W(T)| at each thinned sample
};

/// Integrals run over [0, T): the final row closes the interval.
inline Metrics compute_metrics(const Trace& trace) {
  if (trace.rows.size() < 2) throw std::invalid_argument("metrics: trace too short");
  Metrics m;
  const double end = trace.rows.back().t;
  m.ise_e1 = ise_window(trace, Signal::TrackingError, 0.0, end);
  m.ise_p = ise_window(trace, Signal::ApproximationError, 0.0, end);
  for (const auto& r : trace.rows) m.max_abs_e1 = std::max(m.max_abs_e1, std::abs(r.e[0]));
  if (!trace.weights.weights.empty()) {
    const Eigen::VectorXd& last = trace.weights.weights.back();
    for (const auto& w : trace.weights.weights) m.weight_distance.push_back((w - last).norm());
  }
  return m;
}

struct Gramian {
  Eigen::MatrixXd matrix;
  double lambda_min;
};

/// sum phi phi^T dt over regressor samples with index in [first, first + count),
/// optionally restricted to a neuron subset.
inline Gramian pe_gramian(const std::vector<Eigen::VectorXd>& regressors, double dt, std::size_t first,
                          std::size_t count, const std::vector<std::size_t>& subset = {}) {
  if (count == 0 || first + count > regressors.size())
    throw std::out_of_range("pe_gramian: window outside regressor history");
  const auto n = static_cast<Eigen::Index>(subset.empty() ? regressors[first].size() : subset.size());
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd v(n);
  for (std::size_t k = first; k < first + count; ++k) {
    if (subset.empty()) {
      v = regressors[k];
    } else {
      for (Eigen::Index i = 0; i < n; ++i) v[i] = regressors[k][static_cast<Eigen::Index>(subset[static_cast<std::size_t>(i)])];
    }
    g.noalias() += v * v.transpose() * dt;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g, Eigen::EigenvaluesOnly);
  return {g, eig.eigenvalues().minCoeff()};
}

/// Regressors the network sees along a trace, one per row.
inline std::vector<Eigen::VectorXd> regressor_history(const Trace& trace, const RbfNetwork& net) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(trace.rows.size());
  for (const auto& r : trace.rows) out.push_back(net.regressor(r.xd_normalized));
  return out;
}

}  // namespace rtpl
