#include <random>

#include <gtest/gtest.h>

#include "rtpl/rbf_network.hpp"
#include "rtpl/smrls.hpp"
#include "test_support.hpp"

using rtpl::PartitionGrid;
using rtpl::SmrlsState;

namespace {

PartitionGrid unit_grid(std::size_t n = 100) { return {{-1.0, -1.0}, {1.0, 1.0}, {n, n}}; }

Eigen::VectorXd one() { return Eigen::VectorXd::Constant(1, 1.0); }

}  // namespace

TEST(SmrlsInit, GainIsScaledIdentity) {
  SmrlsState s(100.0, 25, unit_grid());
  EXPECT_TRUE(s.weights().isZero(0.0));
  EXPECT_TRUE(s.gain().isApprox(100.0 * Eigen::MatrixXd::Identity(25, 25)));
  EXPECT_TRUE(s.gain_inverse().isApprox(0.01 * Eigen::MatrixXd::Identity(25, 25)));
  const auto b = rtpl::p_bounds(s);
  EXPECT_DOUBLE_EQ(b.min, 100.0);
  EXPECT_DOUBLE_EQ(b.max, 100.0);
  EXPECT_EQ(s.occupied(), 0u);
  EXPECT_EQ(s.records().size(), 10000u);

  SmrlsState tiny(1.0, 1, unit_grid());
  EXPECT_DOUBLE_EQ(tiny.gain()(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(tiny.gain_inverse()(0, 0), 1.0);
}

TEST(SmrlsInit, RejectsBadArguments) {
  EXPECT_THROW(SmrlsState(0.0, 3, unit_grid()), std::invalid_argument);
  EXPECT_THROW(SmrlsState(-1.0, 3, unit_grid()), std::invalid_argument);
  EXPECT_THROW(SmrlsState(1.0, 0, unit_grid()), std::invalid_argument);
  EXPECT_THROW(SmrlsState(1.0, 3, PartitionGrid{{1.0}, {-1.0}, {4}}), std::invalid_argument);
}

TEST(PartitionGridLocate, CornersAndCenter) {
  const auto g = unit_grid();
  EXPECT_EQ(g.cell(Eigen::Vector2d(-1.0, -1.0)), (std::vector<std::size_t>{0, 0}));
  EXPECT_EQ(g.cell(Eigen::Vector2d(0.0, 0.0)), (std::vector<std::size_t>{50, 50}));
  EXPECT_EQ(g.cell(Eigen::Vector2d(1.0, 1.0)), (std::vector<std::size_t>{99, 99}));
  EXPECT_EQ(g.locate(Eigen::Vector2d(0.0, 0.0)), 5050u);
  EXPECT_EQ(g.locate(Eigen::Vector2d(-1.0, 1.0)), 99u);
  // out-of-range inputs clamp to the boundary cell
  EXPECT_EQ(g.cell(Eigen::Vector2d(-7.0, 3.0)), (std::vector<std::size_t>{0, 99}));
  EXPECT_THROW(g.locate(Eigen::Vector3d(0, 0, 0)), std::invalid_argument);
}

TEST(SmrlsStep, ScalarTwoStepExample) {
  SmrlsState s(100.0, 1, unit_grid());
  const Eigen::Vector2d key(0.1, 0.1);
  s.step(one(), 2.0, key);
  EXPECT_NEAR(s.gain_inverse()(0, 0), 1.01, 1e-12);
  EXPECT_NEAR(s.weights()[0], 1.980198, 5e-7);
  EXPECT_NEAR(s.weights()[0], 2.0 / 1.01, 1e-12);

  s.step(one(), 3.0, key);
  EXPECT_NEAR(s.gain_inverse()(0, 0), 1.01, 1e-12);
  EXPECT_NEAR(s.weights()[0], 2.970297, 5e-7);
  EXPECT_NEAR(s.weights()[0], 3.0 / 1.01, 1e-12);
  EXPECT_EQ(s.occupied(), 1u);

  EXPECT_NEAR(rtpl::batch_ls_oracle(s)[0], 2.970297, 5e-7);
  const auto b = rtpl::p_bounds(s);
  EXPECT_NEAR(b.min, 0.990099, 5e-7);
  EXPECT_NEAR(b.max, 0.990099, 5e-7);
}

TEST(BatchOracle, EmptyAndTwoPartitions) {
  SmrlsState s(100.0, 1, unit_grid());
  EXPECT_EQ(rtpl::batch_ls_oracle(s)[0], 0.0);
  s.step(one(), 2.0, Eigen::Vector2d(-0.5, -0.5));
  s.step(one(), 4.0, Eigen::Vector2d(0.5, 0.5));
  EXPECT_NEAR(rtpl::batch_ls_oracle(s)[0], 2.985075, 5e-7);
  EXPECT_NEAR(s.weights()[0], 6.0 / 2.01, 1e-12);
}

TEST(SmrlsStep, ZeroRegressorIsNoOp) {
  SmrlsState s(100.0, 3, unit_grid());
  s.step(Eigen::Vector3d(0.2, 0.7, 0.1), 1.5, Eigen::Vector2d(0.3, 0.3));
  const Eigen::VectorXd w = s.weights();
  const Eigen::MatrixXd p = s.gain();
  s.step(Eigen::Vector3d::Zero(), 9.0, Eigen::Vector2d(-0.3, 0.3));
  EXPECT_EQ(s.weights(), w);
  EXPECT_EQ(s.gain(), p);
  EXPECT_EQ(s.occupied(), 2u);
}

TEST(SmrlsStep, RepresentingSameSampleIsNoOp) {
  SmrlsState s(100.0, 3, unit_grid());
  const Eigen::Vector3d phi(0.4, 0.9, 0.2);
  const Eigen::Vector2d key(0.25, -0.75);
  s.step(Eigen::Vector3d(0.1, 0.1, 0.8), -0.3, Eigen::Vector2d(-0.5, 0.5));
  s.step(phi, 0.6, key);
  const Eigen::VectorXd w = s.weights();
  const Eigen::MatrixXd p = s.gain();
  s.step(phi, 0.6, key);
  EXPECT_TRUE(s.weights().isApprox(w, 1e-12));
  EXPECT_TRUE(s.gain().isApprox(p, 1e-12));
}

TEST(SmrlsStep, RegressorLengthMismatchThrows) {
  SmrlsState s(100.0, 3, unit_grid());
  EXPECT_THROW(s.step(Eigen::Vector2d(1, 1), 1.0, Eigen::Vector2d(0, 0)), std::invalid_argument);
}

// Streams of lattice regressors keyed by the same point the network sees.
TEST(SmrlsProperties, RandomizedStreams) {
  std::mt19937_64 rng(2024);
  for (int stream = 0; stream < 12; ++stream) {
    const std::size_t side = 2 + static_cast<std::size_t>(stream % 4);  // up to 25 neurons
    const double width = 0.2 + 0.15 * static_cast<double>(stream % 5);
    const auto net = rtpl::build_lattice({{-1, -1}, {1, 1}, {side, side}}, width);
    const std::size_t cells = 3 + static_cast<std::size_t>(stream % 9);
    SmrlsState s(1.0 + 40.0 * static_cast<double>(stream % 3), net.size(), unit_grid(cells));

    std::size_t occupied = 0;
    for (int k = 0; k < 600; ++k) {
      const Eigen::VectorXd x = test_support::uniform_point(rng, 2);
      s.step(net.regressor(x), test_support::uniform(rng, -3.0, 3.0), x);

      const Eigen::MatrixXd& p = s.gain();
      ASSERT_LE((p - p.transpose()).cwiseAbs().maxCoeff(), 1e-10);
      const auto n = p.rows();
      ASSERT_LE((p * s.gain_inverse() - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-8);
      const auto b = rtpl::p_bounds(s);
      ASSERT_LE(b.max, s.p0() * (1.0 + 1e-9));
      ASSERT_GT(b.min, 0.0);
      ASSERT_GE(s.occupied(), occupied);
      ASSERT_LE(s.occupied(), s.grid().total());
      occupied = s.occupied();
    }
    EXPECT_LE(test_support::relative_deviation(s.weights(), rtpl::batch_ls_oracle(s)), 1e-6);
  }
}

TEST(SmrlsRestore, RebuildsSameState) {
  std::mt19937_64 rng(5);
  const auto net = rtpl::build_lattice({{-1, -1}, {1, 1}, {4, 4}}, 0.5);
  SmrlsState s(100.0, net.size(), unit_grid(10));
  for (int k = 0; k < 300; ++k) {
    const Eigen::VectorXd x = test_support::uniform_point(rng, 2);
    s.step(net.regressor(x), test_support::uniform(rng, -1.0, 1.0), x);
  }
  std::vector<std::pair<std::size_t, rtpl::PartitionRecord>> recs;
  for (std::size_t i = 0; i < s.records().size(); ++i)
    if (s.records()[i].occupied) recs.emplace_back(i, s.records()[i]);
  const auto r = SmrlsState::restore(100.0, unit_grid(10), s.weights(), recs);
  EXPECT_EQ(r.occupied(), s.occupied());
  EXPECT_TRUE(r.gain().isApprox(s.gain(), 1e-8));
  EXPECT_TRUE(r.gain_inverse().isApprox(s.gain_inverse(), 1e-12));

  // continuing both with the same stream keeps them together
  auto a = s;
  auto b = r;
  for (int k = 0; k < 50; ++k) {
    const Eigen::VectorXd x = test_support::uniform_point(rng, 2);
    const double f = test_support::uniform(rng, -1.0, 1.0);
    a.step(net.regressor(x), f, x);
    b.step(net.regressor(x), f, x);
  }
  EXPECT_LE(test_support::relative_deviation(b.weights(), a.weights()), 1e-8);
}

TEST(SmrlsResync, PeriodicResyncMatchesOracle) {
  std::mt19937_64 rng(9);
  const auto net = rtpl::build_lattice({{-1, -1}, {1, 1}, {3, 3}}, 0.4);
  SmrlsState s(100.0, net.size(), unit_grid(6));
  s.set_resync_interval(17);
  for (int k = 0; k < 500; ++k) {
    const Eigen::VectorXd x = test_support::uniform_point(rng, 2);
    s.step(net.regressor(x), test_support::uniform(rng, -2.0, 2.0), x);
  }
  EXPECT_LE(test_support::relative_deviation(s.weights(), rtpl::batch_ls_oracle(s)), 1e-6);
}
