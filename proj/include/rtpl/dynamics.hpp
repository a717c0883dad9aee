#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/Splines>

namespace rtpl {

// ---------------------------------------------------------------------------
// Plants

/// Brunovsky-form plant: x_i' = x_{i+1}, x_n' = f(x, t) + g(x, t) u.
/// Time enters only through the parameter schedule.
struct Plant {
  using Field = std::function<double(const Eigen::VectorXd&, double)>;

  std::size_t order = 2;
  Field drift;
  Field input_gain;

  Eigen::VectorXd derivative(const Eigen::VectorXd& x, double u, double t) const {
    Eigen::VectorXd dx(x.size());
    for (Eigen::Index i = 0; i + 1 < x.size(); ++i) dx[i] = x[i + 1];
    dx[x.size() - 1] = drift(x, t) + input_gain(x, t) * u;
    return dx;
  }
};

struct PendulumParams {
  double cart_mass = 0.1;   // kg
  double mass = 0.02;       // kg
  double half_length = 0.2; // m
  double gravity = 9.8;     // m/s^2

  bool operator==(const PendulumParams&) const = default;
};

inline double pendulum_f(const Eigen::VectorXd& x, const PendulumParams& p) {
  const double total = p.cart_mass + p.mass;
  const double c = std::cos(x[0]);
  const double s = std::sin(x[0]);
  const double denom = p.half_length * (4.0 / 3.0 - p.mass * c * c / total);
  return (p.gravity * s - p.mass * p.half_length * x[1] * x[1] * c * s / total) / denom;
}

inline double pendulum_g(const Eigen::VectorXd& x, const PendulumParams& p) {
  const double total = p.cart_mass + p.mass;
  const double c = std::cos(x[0]);
  const double denom = p.half_length * (4.0 / 3.0 - p.mass * c * c / total);
  return (c / total) / denom;
}

/// Half-length jumps from 0.2 m to 0.8 m at t = 50 s (the jump instant is
/// already perturbed).
inline PendulumParams perturbation_schedule(double t) {
  PendulumParams p;
  p.half_length = t < 50.0 ? 0.2 : 0.8;
  return p;
}

using ParamSchedule = std::function<PendulumParams(double)>;

inline Plant pendulum_plant(ParamSchedule schedule) {
  Plant plant;
  plant.order = 2;
  plant.drift = [schedule](const Eigen::VectorXd& x, double t) { return pendulum_f(x, schedule(t)); };
  plant.input_gain = [schedule](const Eigen::VectorXd& x, double t) { return pendulum_g(x, schedule(t)); };
  return plant;
}

inline Plant pendulum_plant(PendulumParams params = {}) {
  return pendulum_plant([params](double) { return params; });
}

// ---------------------------------------------------------------------------
// Reference trajectories

/// x_d1, x_d2 = x_d1', and x_d2'.
struct ReferenceSample {
  double position;
  double velocity;
  double acceleration;

  Eigen::VectorXd state() const { return Eigen::Vector2d(position, velocity); }
};

/// Per-dimension scaling onto [-1,1] with clamping of spill.
struct Normalization {
  std::vector<double> scale{1.0, 1.0};

  Eigen::VectorXd apply(const Eigen::VectorXd& raw) const {
    Eigen::VectorXd out(raw.size());
    for (Eigen::Index i = 0; i < raw.size(); ++i)
      out[i] = std::clamp(raw[i] * scale[static_cast<std::size_t>(i)], -1.0, 1.0);
    return out;
  }

  /// Map that fits a symmetric range of half-width `max_abs[d]` onto [-1,1].
  static Normalization from_range(const std::vector<double>& max_abs) {
    Normalization n;
    n.scale.clear();
    for (double m : max_abs) {
      if (!(m > 0.0)) throw std::invalid_argument("normalization: degenerate range");
      n.scale.push_back(1.0 / m);
    }
    return n;
  }

  bool operator==(const Normalization&) const = default;
};

enum class TrajectoryKind { Sinusoid, GrowingSinusoid, RandomSpline };

/// Serializable trajectory definition.
struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::Sinusoid;
  std::uint64_t seed = 1;
  std::size_t knots = 20;
  double duration = 100.0;

  bool operator==(const TrajectorySpec&) const = default;
};

inline std::string to_string(TrajectoryKind k) {
  switch (k) {
    case TrajectoryKind::Sinusoid: return "sinusoid";
    case TrajectoryKind::GrowingSinusoid: return "growing-sinusoid";
    case TrajectoryKind::RandomSpline: return "spline";
  }
  return "?";
}

inline TrajectoryKind trajectory_kind_from_string(const std::string& s) {
  if (s == "sinusoid") return TrajectoryKind::Sinusoid;
  if (s == "growing-sinusoid") return TrajectoryKind::GrowingSinusoid;
  if (s == "spline") return TrajectoryKind::RandomSpline;
  throw std::invalid_argument("unknown trajectory type '" + s + "'");
}

class Trajectory {
 public:
  explicit Trajectory(const TrajectorySpec& spec) : spec_(spec) {
    if (!(spec.duration > 0.0)) throw std::invalid_argument("trajectory: duration must be positive");
    if (spec.kind == TrajectoryKind::RandomSpline) {
      if (spec.knots < 4) throw std::invalid_argument("trajectory: spline needs at least 4 control points");
      // Clamped uniform cubic B-spline (a NURBS with unit weights) over
      // control points drawn from [-1,1]; the curve stays in their hull.
      // Two leading and two trailing equal points make it start and end at rest,
      // and the start is pinned to the upright position.
      std::mt19937_64 rng(spec.seed);
      std::uniform_real_distribution<double> uniform(-1.0, 1.0);
      const auto k = static_cast<Eigen::Index>(spec.knots);
      Spline::ControlPointVectorType ctrl(1, k);
      for (Eigen::Index i = 0; i < k; ++i) ctrl(0, i) = uniform(rng);
      ctrl(0, 0) = ctrl(0, 1) = 0.0;
      ctrl(0, k - 1) = ctrl(0, k - 2);
      Spline::KnotVectorType knots(k + 4);
      const double spans = static_cast<double>(k - 3);
      for (Eigen::Index i = 0; i < k + 4; ++i)
        knots[i] = std::clamp(static_cast<double>(i - 3) / spans, 0.0, 1.0);
      spline_ = std::make_shared<const Spline>(knots, ctrl);
    }
    range_ = compute_range();
    normalization_ = Normalization::from_range(range_);
  }

  const TrajectorySpec& spec() const { return spec_; }
  double duration() const { return spec_.duration; }

  /// Largest |x_d1| and |x_d2| over the whole duration.
  const std::vector<double>& range() const { return range_; }
  const Normalization& normalization() const { return normalization_; }
  void set_normalization(Normalization n) { normalization_ = std::move(n); }

  ReferenceSample sample(double t) const {
    if (t < 0.0 || t > spec_.duration * (1.0 + 1e-12))
      throw std::out_of_range("trajectory: t=" + std::to_string(t) + " outside [0, " +
                              std::to_string(spec_.duration) + "]");
    return evaluate(t);
  }

  Eigen::VectorXd normalize(const Eigen::VectorXd& raw) const { return normalization_.apply(raw); }

 private:
  using Spline = Eigen::Spline<double, 1, 3>;

  ReferenceSample evaluate(double t) const {
    switch (spec_.kind) {
      case TrajectoryKind::Sinusoid:
        return {std::sin(t), std::cos(t), -std::sin(t)};
      case TrajectoryKind::GrowingSinusoid: {
        const double a = 20.0 + t;
        return {a * std::sin(t) / 120.0, (a * std::cos(t) + std::sin(t)) / 120.0,
                (2.0 * std::cos(t) - a * std::sin(t)) / 120.0};
      }
      case TrajectoryKind::RandomSpline: {
        const double u = std::clamp(t / spec_.duration, 0.0, 1.0);
        const auto d = spline_->derivatives(u, 2);
        const double rate = 1.0 / spec_.duration;
        return {d(0, 0), d(0, 1) * rate, d(0, 2) * rate * rate};
      }
    }
    return {0.0, 0.0, 0.0};
  }

  std::vector<double> compute_range() const {
    if (spec_.kind == TrajectoryKind::Sinusoid) return {1.0, 1.0};
    constexpr double kProbe = 1e-3;
    std::vector<double> r{0.0, 0.0};
    const auto steps = static_cast<std::size_t>(std::ceil(spec_.duration / kProbe));
    for (std::size_t k = 0; k <= steps; ++k) {
      const auto s = evaluate(std::min(spec_.duration, static_cast<double>(k) * kProbe));
      r[0] = std::max(r[0], std::abs(s.position));
      r[1] = std::max(r[1], std::abs(s.velocity));
    }
    return r;
  }

  TrajectorySpec spec_;
  std::shared_ptr<const Spline> spline_;
  std::vector<double> range_;
  Normalization normalization_;
};

/// Feedforward that holds the plant on the reference: (x_d2' - f(x_d)) / g(x_d).
/// Ground truth for metrics only.
inline double true_feedforward(const Plant& plant, const ReferenceSample& ref, double t) {
  const Eigen::VectorXd xd = ref.state();
  const double g = plant.input_gain(xd, t);
  if (!(g > 0.0)) throw std::domain_error("true_feedforward: input gain is not positive at x_d");
  return (ref.acceleration - plant.drift(xd, t)) / g;
}

}  // namespace rtpl
