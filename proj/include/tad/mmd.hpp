#pragma once

#include <tad/autodiff.hpp>
#include <tad/common.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

// Squared maximum mean discrepancy between two feature sets, biased
// (V-statistic) estimator with a mixture of Gaussian kernels:
//   mean_sigma [ mean k(x,x') + mean k(y,y') - 2 mean k(x,y) ],
//   k(a,b) = exp(-||a-b||^2 / (2 sigma^2)).
// The V-statistic is non-negative and well defined down to n = m = 1.

namespace tad {

namespace mmd_detail {

inline void check_bandwidths(const std::vector<double>& bandwidths) {
  if (bandwidths.empty()) throw ConfigError("mmd2: no bandwidths");
  for (double b : bandwidths)
    if (!(b > 0.0)) throw ConfigError("mmd2: bandwidths must be positive");
}

// n x m matrix of squared distances as a graph node: r_i + c_j - 2 x y^T.
inline ad::Var pairwise_sqdist(const ad::Var& x, const ad::Var& y) {
  using namespace ad;
  Var rx = row_sums(mul(x, x));
  Var ry = row_sums(mul(y, y));
  return sub(cross_add(rx, ry), scale(matmul_nt(x, y), 2.0));
}

}  // namespace mmd_detail

inline ad::Var mmd2(ad::Tape& tape, const ad::Var& x, const ad::Var& y,
                    const std::vector<double>& bandwidths) {
  using namespace ad;
  mmd_detail::check_bandwidths(bandwidths);
  if (x.rows() < 1 || y.rows() < 1) throw ConfigError("mmd2: empty feature set");
  if (x.cols() != y.cols()) throw ConfigError("mmd2: feature dimension mismatch");
  Var d_xx = mmd_detail::pairwise_sqdist(x, x);
  Var d_yy = mmd_detail::pairwise_sqdist(y, y);
  Var d_xy = mmd_detail::pairwise_sqdist(x, y);
  Var acc = tape.scalar_constant(0.0);
  for (double sigma : bandwidths) {
    const double c = -1.0 / (2.0 * sigma * sigma);
    Var term = sub(add(mean(vexp(scale(d_xx, c))), mean(vexp(scale(d_yy, c)))),
                   scale(mean(vexp(scale(d_xy, c))), 2.0));
    acc = add(acc, term);
  }
  return scale(acc, 1.0 / static_cast<double>(bandwidths.size()));
}

inline double mmd2(const Matrix& x, const Matrix& y, const std::vector<double>& bandwidths) {
  // Canonical argument order makes the summation order, and therefore the
  // result, bit-identical under argument swap.
  auto lex_less = [](const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) return a.rows() < b.rows();
    if (a.cols() != b.cols()) return a.cols() < b.cols();
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      if (a.data()[i] != b.data()[i]) return a.data()[i] < b.data()[i];
    }
    return false;
  };
  const Matrix& first = lex_less(y, x) ? y : x;
  const Matrix& second = lex_less(y, x) ? x : y;
  ad::Tape tape;
  return mmd2(tape, tape.constant(first), tape.constant(second), bandwidths).scalar();
}

// Median of pairwise Euclidean distances; the classic bandwidth heuristic.
inline double median_pairwise_distance(const Matrix& feats) {
  const Eigen::Index n = feats.rows();
  std::vector<double> dists;
  dists.reserve(static_cast<size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) dists.push_back((feats.row(i) - feats.row(j)).norm());
  if (dists.empty()) return 1.0;
  std::sort(dists.begin(), dists.end());
  const size_t mid = dists.size() / 2;
  return dists.size() % 2 ? dists[mid] : 0.5 * (dists[mid - 1] + dists[mid]);
}

// Base bandwidths {1, 2, 4, 8, 16} scaled by the median pairwise distance.
inline std::vector<double> scaled_bandwidths(const Matrix& feats) {
  double med = median_pairwise_distance(feats);
  if (med < 1e-8) med = 1.0;  // degenerate batch
  std::vector<double> out;
  for (double base : {1.0, 2.0, 4.0, 8.0, 16.0}) out.push_back(base * med);
  return out;
}

}  // namespace tad
