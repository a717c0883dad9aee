#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rtpl {

/// Axis-aligned box with an evenly spaced neuron count per dimension.
struct LatticeSpec {
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
      throw std::invalid_argument("lattice: bounds and counts must share a nonzero dimension");
    for (std::size_t d = 0; d < counts.size(); ++d) {
      if (counts[d] < 2)
        throw std::invalid_argument("lattice: need at least 2 neurons in dimension " + std::to_string(d));
      if (!(lower[d] < upper[d]))
        throw std::invalid_argument("lattice: lower must be below upper in dimension " + std::to_string(d));
    }
  }

  bool operator==(const LatticeSpec&) const = default;
};

/// Gaussian RBF network, linear in its weights.
///
/// Centers are stored column-wise (q x N). Only the weights change after
/// construction.
class RbfNetwork {
 public:
  RbfNetwork() = default;

  RbfNetwork(Eigen::MatrixXd centers, Eigen::VectorXd widths)
      : centers_(std::move(centers)), widths_(std::move(widths)),
        weights_(Eigen::VectorXd::Zero(centers_.cols())) {
    if (widths_.size() != centers_.cols())
      throw std::invalid_argument("rbf: one width per center required");
    if ((widths_.array() <= 0.0).any())
      throw std::invalid_argument("rbf: widths must be positive");
  }

  std::size_t size() const { return static_cast<std::size_t>(centers_.cols()); }
  std::size_t input_dim() const { return static_cast<std::size_t>(centers_.rows()); }

  const Eigen::MatrixXd& centers() const { return centers_; }
  const Eigen::VectorXd& widths() const { return widths_; }
  const Eigen::VectorXd& weights() const { return weights_; }

  void set_weights(const Eigen::VectorXd& w) {
    if (w.size() != weights_.size())
      throw std::invalid_argument("rbf: weight length does not match neuron count");
    weights_ = w;
  }

  /// phi_i(x) = exp(-|x - c_i|^2 / (2 sigma_i^2))
  Eigen::VectorXd regressor(const Eigen::VectorXd& x) const {
    check_dim(x);
    Eigen::VectorXd phi(centers_.cols());
    for (Eigen::Index i = 0; i < centers_.cols(); ++i) {
      const double d2 = (x - centers_.col(i)).squaredNorm();
      phi[i] = std::exp(-d2 / (2.0 * widths_[i] * widths_[i]));
    }
    return phi;
  }

  double evaluate(const Eigen::VectorXd& x) const { return weights_.dot(regressor(x)); }

  /// Indices whose activation at x reaches `threshold`. Diagnostic only.
  std::vector<std::size_t> active_subset(const Eigen::VectorXd& x, double threshold = 0.5) const {
    if (!(threshold > 0.0 && threshold < 1.0))
      throw std::invalid_argument("rbf: active threshold must lie in (0,1)");
    const Eigen::VectorXd phi = regressor(x);
    std::vector<std::size_t> active;
    for (Eigen::Index i = 0; i < phi.size(); ++i)
      if (phi[i] >= threshold) active.push_back(static_cast<std::size_t>(i));
    return active;
  }

 private:
  void check_dim(const Eigen::VectorXd& x) const {
    if (x.size() != centers_.rows())
      throw std::invalid_argument("rbf: input has dimension " + std::to_string(x.size()) +
                                  ", network expects " + std::to_string(centers_.rows()));
  }

  Eigen::MatrixXd centers_;
  Eigen::VectorXd widths_;
  Eigen::VectorXd weights_;
};

/// Endpoint-inclusive Cartesian grid of centers with a shared width and zero
/// weights. The first dimension varies slowest.
inline RbfNetwork build_lattice(const LatticeSpec& spec, double width) {
  spec.validate();
  if (!(width > 0.0)) throw std::invalid_argument("lattice: width must be positive");

  const std::size_t q = spec.dimension();
  const std::size_t n = spec.total();
  Eigen::MatrixXd centers(q, n);
  std::vector<std::size_t> idx(q, 0);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t d = 0; d < q; ++d) {
      const double step = (spec.upper[d] - spec.lower[d]) / static_cast<double>(spec.counts[d] - 1);
      centers(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k)) =
          idx[d] + 1 == spec.counts[d] ? spec.upper[d] : spec.lower[d] + step * static_cast<double>(idx[d]);
    }
    for (std::size_t d = q; d-- > 0;) {
      if (++idx[d] < spec.counts[d]) break;
      idx[d] = 0;
    }
  }
  return RbfNetwork(std::move(centers), Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), width));
}

}  // namespace rtpl
