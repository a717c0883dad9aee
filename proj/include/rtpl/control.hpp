#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "rtpl/rbf_network.hpp"
#include "rtpl/smrls.hpp"

namespace rtpl {

struct BacksteppingGains {
  std::vector<double> k{2.0, 5.0};

  std::size_t order() const { return k.size(); }

  void validate() const {
    if (k.size() < 2) throw std::invalid_argument("gains: need at least k1 and k2");
    for (double ki : k)
      if (!(ki > 0.0)) throw std::invalid_argument("gains: all k_i must be positive");
  }
};

/// Backstepping error coordinates for a second-order plant:
/// e1 = x_d1 - x1, alpha1 = k1 e1 + x_d2, e2 = alpha1 - x2.
/// Higher orders need derivatives of the virtual controls and are rejected.
inline Eigen::VectorXd tracking_errors(const Eigen::VectorXd& x, const Eigen::VectorXd& xd,
                                       const BacksteppingGains& gains) {
  if (x.size() != 2 || xd.size() != 2 || gains.order() != 2)
    throw std::invalid_argument("tracking_errors: only order-2 systems are supported");
  const double e1 = xd[0] - x[0];
  const double alpha1 = gains.k[0] * e1 + xd[1];
  return Eigen::Vector2d(e1, alpha1 - x[1]);
}

/// u = k_n e_n + e_{n-1} + feedforward
inline double control_output(const Eigen::VectorXd& e, const BacksteppingGains& gains,
                             double feedforward = 0.0) {
  const auto n = e.size();
  return gains.k[static_cast<std::size_t>(n - 1)] * e[n - 1] + e[n - 2] + feedforward;
}

inline double control_output(const Eigen::VectorXd& e, const Eigen::VectorXd& phi,
                             const Eigen::VectorXd& weights, const BacksteppingGains& gains) {
  return control_output(e, gains, weights.dot(phi));
}

/// Explicit-Euler step of W' = Gamma phi e_n with diagonal Gamma.
inline Eigen::VectorXd sgd_update(const Eigen::VectorXd& weights, const Eigen::VectorXd& gamma_diag,
                                  const Eigen::VectorXd& phi, double e_n, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("sgd_update: dt must be positive");
  return weights + (gamma_diag.array() * phi.array()).matrix() * (e_n * dt);
}

struct RtplGain {
  double eta0 = 5.0;
  double ramp = 2.0;  // T0, seconds to reach eta0

  bool operator==(const RtplGain&) const = default;
};

/// Linear ramp from 0 to eta0 over [0, T0], then constant.
inline double eta(double t, double eta0, double ramp) {
  if (t <= ramp) return eta0 * std::max(t, 0.0) / ramp;
  return eta0;
}

inline double eta(double t, const RtplGain& g) { return eta(t, g.eta0, g.ramp); }

/// Feeds the estimated desired output F = eta(t) e_n + W.phi into the
/// selective memory and copies the new weights back into the network.
/// Returns F.
inline double rtpl_update(SmrlsState& memory, RbfNetwork& net, const Eigen::VectorXd& xd_normalized,
                          double e_n, double t, const RtplGain& gain) {
  if (memory.neurons() != net.size()) throw std::invalid_argument("rtpl_update: network/memory size mismatch");
  const Eigen::VectorXd phi = net.regressor(xd_normalized);
  const double target = eta(t, gain) * e_n + memory.weights().dot(phi);
  memory.step(phi, target, xd_normalized);
  net.set_weights(memory.weights());
  return target;
}

/// K_E = eta(t) phi^T P phi over the full regressor.
inline double equivalent_gain(const SmrlsState& memory, const RbfNetwork& net,
                              const Eigen::VectorXd& xd_normalized, double t, const RtplGain& gain) {
  const Eigen::VectorXd phi = net.regressor(xd_normalized);
  return eta(t, gain) * phi.dot(memory.gain() * phi);
}

// ---------------------------------------------------------------------------
// Learners and knowledge

struct PdLearner {};

struct SgdLearner {
  Eigen::VectorXd gamma;  // diagonal of Gamma
};

struct RtplLearner {
  RtplGain gain;
  SmrlsState memory;
};

struct FrozenLearner {
  Eigen::VectorXd weights;
};

using Learner = std::variant<PdLearner, SgdLearner, RtplLearner, FrozenLearner>;

inline std::string method_name(const Learner& l) {
  struct {
    std::string operator()(const PdLearner&) const { return "PD"; }
    std::string operator()(const SgdLearner&) const { return "SGDL"; }
    std::string operator()(const RtplLearner&) const { return "RTPL"; }
    std::string operator()(const FrozenLearner&) const { return "Frozen"; }
  } v;
  return std::visit(v, l);
}

struct KnowledgeSnapshot {
  Eigen::VectorXd weights;
  std::string method;
  double learned_for = 0.0;  // seconds of learning behind the weights
  std::vector<std::pair<std::size_t, PartitionRecord>> memory;  // RTPL only
};

/// Time-indexed weight samples on a uniform grid.
struct WeightHistory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> weights;

  void push(double t, const Eigen::VectorXd& w) {
    times.push_back(t);
    weights.push_back(w);
  }
};

/// Average of W over [t0, t0 + span] by the trapezoidal rule.
inline KnowledgeSnapshot extract_integral(const WeightHistory& history, double t0, double span,
                                          const std::string& method = "SGDL") {
  if (history.times.size() < 2 || !(span > 0.0))
    throw std::invalid_argument("extract_integral: need a nonempty window and at least two samples");
  const double step = history.times[1] - history.times[0];
  const double tol = 1e-6 * step;
  const double t1 = t0 + span;
  if (t0 < history.times.front() - tol || t1 > history.times.back() + tol)
    throw std::out_of_range("extract_integral: window outside weight history");

  const auto first = std::lower_bound(history.times.begin(), history.times.end(), t0 - tol) - history.times.begin();
  const auto last = std::upper_bound(history.times.begin(), history.times.end(), t1 + tol) - history.times.begin() - 1;
  if (last <= first) throw std::out_of_range("extract_integral: window shorter than one sample");

  Eigen::VectorXd acc = Eigen::VectorXd::Zero(history.weights[static_cast<std::size_t>(first)].size());
  for (auto i = first; i < last; ++i) {
    const auto a = static_cast<std::size_t>(i);
    acc += 0.5 * (history.times[a + 1] - history.times[a]) * (history.weights[a] + history.weights[a + 1]);
  }
  const double covered = history.times[static_cast<std::size_t>(last)] - history.times[static_cast<std::size_t>(first)];
  return {acc / covered, method, t1, {}};
}

/// The current RTPL weights, plus the memory that produced them.
inline KnowledgeSnapshot extract_final(const SmrlsState& memory, double learned_for = 0.0) {
  KnowledgeSnapshot snap{memory.weights(), "RTPL", learned_for, {}};
  const auto& recs = memory.records();
  for (std::size_t i = 0; i < recs.size(); ++i)
    if (recs[i].occupied) snap.memory.emplace_back(i, recs[i]);
  return snap;
}

}  // namespace rtpl
