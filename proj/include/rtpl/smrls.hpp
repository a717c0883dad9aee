#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace rtpl {

/// Uniform partition of a box into disjoint cells. Row-major cell order,
/// first dimension slowest.
struct PartitionGrid {
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<std::size_t> counts;

  std::size_t dimension() const { return counts.size(); }

  std::size_t total() const {
    std::size_t n = 1;
    for (auto c : counts) n *= c;
    return n;
  }

  void validate() const {
    if (lower.size() != counts.size() || upper.size() != counts.size() || counts.empty())
      throw std::invalid_argument("partition grid: bounds and counts must share a nonzero dimension");
    for (std::size_t d = 0; d < counts.size(); ++d) {
      if (counts[d] < 1) throw std::invalid_argument("partition grid: counts must be >= 1");
      if (!(lower[d] < upper[d])) throw std::invalid_argument("partition grid: lower must be below upper");
    }
  }

  /// Per-dimension cell coordinates; out-of-range inputs land in the boundary cell.
  std::vector<std::size_t> cell(const Eigen::VectorXd& x) const {
    if (static_cast<std::size_t>(x.size()) != counts.size())
      throw std::invalid_argument("partition grid: point dimension mismatch");
    std::vector<std::size_t> c(counts.size());
    for (std::size_t d = 0; d < counts.size(); ++d) {
      const double u = (x[static_cast<Eigen::Index>(d)] - lower[d]) / (upper[d] - lower[d]) *
                       static_cast<double>(counts[d]);
      const double last = static_cast<double>(counts[d] - 1);
      c[d] = static_cast<std::size_t>(std::clamp(std::floor(u), 0.0, last));
    }
    return c;
  }

  std::size_t locate(const Eigen::VectorXd& x) const {
    const auto c = cell(x);
    std::size_t index = 0;
    for (std::size_t d = 0; d < counts.size(); ++d) index = index * counts[d] + c[d];
    return index;
  }

  bool operator==(const PartitionGrid&) const = default;
};

/// Latest synthesized sample held by one partition. Unoccupied records are
/// all-zero so that the update applies uniformly.
struct PartitionRecord {
  bool occupied = false;
  Eigen::VectorXd phi;
  double target = 0.0;
};

/// Selective-memory recursive least squares.
///
/// Keeps one (regressor, target) sample per input partition. Each step adds
/// the new sample's rank-one information and removes the sample it displaces,
/// so P^-1 = I/p0 + sum over occupied partitions of phi phi^T at all times.
/// P is propagated by two Sherman-Morrison updates; P^-1 is accumulated
/// additively and serves as the fallback when the downdate is ill-conditioned.
class SmrlsState {
 public:
  static constexpr double kDowndateGuard = 1e-12;

  SmrlsState(double p0, std::size_t neurons, PartitionGrid grid)
      : p0_(p0), grid_(std::move(grid)) {
    if (!(p0 > 0.0)) throw std::invalid_argument("smrls: p0 must be positive");
    if (neurons == 0) throw std::invalid_argument("smrls: need at least one neuron");
    grid_.validate();
    const auto n = static_cast<Eigen::Index>(neurons);
    weights_ = Eigen::VectorXd::Zero(n);
    gain_ = Eigen::MatrixXd::Identity(n, n) * p0;
    gain_inv_ = Eigen::MatrixXd::Identity(n, n) / p0;
    records_.assign(grid_.total(), PartitionRecord{false, Eigen::VectorXd::Zero(n), 0.0});
  }

  std::size_t neurons() const { return static_cast<std::size_t>(weights_.size()); }
  double p0() const { return p0_; }
  const PartitionGrid& grid() const { return grid_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  const Eigen::MatrixXd& gain() const { return gain_; }
  const Eigen::MatrixXd& gain_inverse() const { return gain_inv_; }
  const std::vector<PartitionRecord>& records() const { return records_; }
  std::size_t occupied() const { return occupied_; }
  std::size_t fallback_count() const { return fallbacks_; }

  /// Re-derive P from P^-1 every `interval` steps (0 disables).
  void set_resync_interval(std::size_t interval) { resync_interval_ = interval; }

  /// One selective-memory update with regressor `phi`, desired output
  /// `target`, and partition key `key`.
  void step(const Eigen::VectorXd& phi, double target, const Eigen::VectorXd& key) {
    if (phi.size() != weights_.size()) throw std::invalid_argument("smrls: regressor length mismatch");
    PartitionRecord& rec = records_[grid_.locate(key)];

    gain_inv_.noalias() += phi * phi.transpose();
    if (rec.occupied) gain_inv_.noalias() -= rec.phi * rec.phi.transpose();

    const Eigen::VectorXd v = gain_ * phi;
    gain_.noalias() -= (v * v.transpose()) / (1.0 + phi.dot(v));
    if (rec.occupied && !rec.phi.isZero(0.0)) {
      const Eigen::VectorXd va = gain_ * rec.phi;
      const double denom = 1.0 - rec.phi.dot(va);
      if (denom <= kDowndateGuard) {
        resync();
        ++fallbacks_;
      } else {
        gain_.noalias() += (va * va.transpose()) / denom;
      }
    }
    if (resync_interval_ != 0 && ++since_resync_ >= resync_interval_) resync();

    const double err_new = target - weights_.dot(phi);
    const double err_old = rec.target - weights_.dot(rec.phi);
    weights_ += gain_ * (phi * err_new - rec.phi * err_old);

    if (!rec.occupied) ++occupied_;
    rec.occupied = true;
    rec.phi = phi;
    rec.target = target;
  }

  /// Rebuild a state from stored memory (snapshot load). P^-1 and P are
  /// recomputed from the records.
  static SmrlsState restore(double p0, PartitionGrid grid, Eigen::VectorXd weights,
                            std::vector<std::pair<std::size_t, PartitionRecord>> occupied) {
    SmrlsState s(p0, static_cast<std::size_t>(weights.size()), std::move(grid));
    s.weights_ = std::move(weights);
    for (auto& [index, rec] : occupied) {
      if (index >= s.records_.size()) throw std::invalid_argument("smrls: record index out of range");
      if (rec.phi.size() != s.weights_.size()) throw std::invalid_argument("smrls: record length mismatch");
      s.gain_inv_.noalias() += rec.phi * rec.phi.transpose();
      rec.occupied = true;
      if (!s.records_[index].occupied) ++s.occupied_;
      s.records_[index] = std::move(rec);
    }
    s.resync();
    return s;
  }

 private:
  void resync() {
    gain_ = gain_inv_.llt().solve(Eigen::MatrixXd::Identity(gain_inv_.rows(), gain_inv_.cols()));
    gain_ = 0.5 * (gain_ + gain_.transpose()).eval();
    since_resync_ = 0;
  }

  double p0_;
  PartitionGrid grid_;
  Eigen::VectorXd weights_;
  Eigen::MatrixXd gain_;
  Eigen::MatrixXd gain_inv_;
  std::vector<PartitionRecord> records_;
  std::size_t occupied_ = 0;
  std::size_t fallbacks_ = 0;
  std::size_t resync_interval_ = 0;
  std::size_t since_resync_ = 0;
};

/// Direct least-squares solution over the stored memory:
/// (I/p0 + sum phi phi^T)^-1 (sum phi F). Independent of the recursion.
inline Eigen::VectorXd batch_ls_oracle(const SmrlsState& state) {
  const auto n = static_cast<Eigen::Index>(state.neurons());
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) / state.p0();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (const auto& rec : state.records()) {
    if (!rec.occupied) continue;
    a.noalias() += rec.phi * rec.phi.transpose();
    b += rec.phi * rec.target;
  }
  return a.ldlt().solve(b);
}

struct GainBounds {
  double min;
  double max;
};

/// Extreme eigenvalues of P.
inline GainBounds p_bounds(const SmrlsState& state) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(state.gain(), Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  return {ev.minCoeff(), ev.maxCoeff()};
}

}  // namespace rtpl
