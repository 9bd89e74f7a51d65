#include <tad/mmd.hpp>

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace tad;
using tad::testing::grad_check;
using tad::testing::random_matrix;

namespace {

// Independent quadratic double-loop reference, scalar arithmetic only.
double mmd2_reference(const Matrix& x, const Matrix& y, const std::vector<double>& bw) {
  auto kernel_mean = [&](const Matrix& a, const Matrix& b, double sigma) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index j = 0; j < b.rows(); ++j) {
        double d2 = 0.0;
        for (Eigen::Index k = 0; k < a.cols(); ++k) {
          const double diff = a(i, k) - b(j, k);
          d2 += diff * diff;
        }
        acc += std::exp(-d2 / (2.0 * sigma * sigma));
      }
    }
    return acc / static_cast<double>(a.rows() * b.rows());
  };
  double total = 0.0;
  for (double sigma : bw)
    total += kernel_mean(x, x, sigma) + kernel_mean(y, y, sigma) - 2.0 * kernel_mean(x, y, sigma);
  return total / static_cast<double>(bw.size());
}

TEST(Mmd, IdenticalSetsAreZero) {
  Rng rng(21);
  Matrix x = random_matrix(7, 4, rng);
  EXPECT_NEAR(mmd2(x, x, {1.0, 3.0}), 0.0, 1e-10);
}

TEST(Mmd, SinglePointClosedForm) {
  Matrix x(1, 2), y(1, 2);
  x << 1, 0;
  y << 0, 1;
  // 2 - 2 exp(-||x-y||^2 / (2 sigma^2)) with sigma = 1, ||x-y||^2 = 2.
  EXPECT_NEAR(mmd2(x, y, {1.0}), 1.2642411176571153, 1e-12);
}

TEST(Mmd, SymmetricInArguments) {
  Rng rng(22);
  Matrix x = random_matrix(5, 3, rng), y = random_matrix(8, 3, rng);
  const std::vector<double> bw = {0.5, 2.0};
  EXPECT_EQ(mmd2(x, y, bw), mmd2(y, x, bw));
}

TEST(Mmd, MatchesDoubleLoopReferenceOnRandomInstances) {
  Rng rng(23);
  for (int it = 0; it < 100; ++it) {
    const auto n = static_cast<Eigen::Index>(1 + rng.uniform_index(20));
    const auto m = static_cast<Eigen::Index>(1 + rng.uniform_index(20));
    const auto d = static_cast<Eigen::Index>(1 + rng.uniform_index(8));
    Matrix x = random_matrix(n, d, rng, -2, 2);
    Matrix y = random_matrix(m, d, rng, -2, 2);
    const std::vector<double> bw = {rng.uniform(0.3, 1.0), rng.uniform(1.0, 4.0)};
    const double got = mmd2(x, y, bw);
    const double want = mmd2_reference(x, y, bw);
    const double rel = std::abs(got - want) / std::max(1.0, std::abs(want));
    EXPECT_LT(rel, 1e-10) << "instance " << it;
    EXPECT_GE(got, -1e-12);
  }
}

TEST(Mmd, RejectsBadBandwidthsAndEmptySets) {
  Matrix x = Matrix::Ones(2, 2), y = Matrix::Zero(2, 2);
  EXPECT_THROW(mmd2(x, y, {}), ConfigError);
  EXPECT_THROW(mmd2(x, y, {0.0}), ConfigError);
  EXPECT_THROW(mmd2(x, y, {-1.0}), ConfigError);
  EXPECT_THROW(mmd2(Matrix(0, 2), y, {1.0}), ConfigError);
}

TEST(Mmd, GradientMatchesFiniteDifferences) {
  Rng rng(24);
  std::vector<Matrix> in = {random_matrix(4, 3, rng), random_matrix(5, 3, rng)};
  double err = grad_check(in, [](ad::Tape& t2, const std::vector<ad::Var>& v) {
    return mmd2(t2, v[0], v[1], {0.7, 2.0});
  });
  EXPECT_LT(err, 1e-4);
}

TEST(Mmd, MedianHeuristicBandwidths) {
  Matrix f(3, 1);
  f << 0, 1, 3;  // pairwise distances 1, 2, 3 -> median 2
  EXPECT_DOUBLE_EQ(median_pairwise_distance(f), 2.0);
  auto bw = scaled_bandwidths(f);
  ASSERT_EQ(bw.size(), 5u);
  EXPECT_DOUBLE_EQ(bw[0], 2.0);
  EXPECT_DOUBLE_EQ(bw[4], 32.0);
  // Degenerate identical batch falls back to the unscaled ladder.
  Matrix same = Matrix::Ones(4, 2);
  auto bw2 = scaled_bandwidths(same);
  EXPECT_DOUBLE_EQ(bw2[0], 1.0);
}

}  // namespace
