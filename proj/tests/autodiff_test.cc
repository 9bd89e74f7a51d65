#include <tad/autodiff.hpp>
#include <tad/nn.hpp>

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace tad;
using tad::testing::grad_check;
using tad::testing::random_matrix;

namespace {

TEST(Autodiff, AddSubMulValues) {
  ad::Tape tape;
  Matrix a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 5, 6, 7, 8;
  auto va = tape.leaf(a), vb = tape.leaf(b);
  EXPECT_EQ(ad::add(va, vb).value()(1, 1), 12.0);
  EXPECT_EQ(ad::sub(va, vb).value()(0, 0), -4.0);
  EXPECT_EQ(ad::mul(va, vb).value()(0, 1), 12.0);
}

TEST(Autodiff, MatmulGrad) {
  Rng rng(7);
  std::vector<Matrix> in = {random_matrix(3, 4, rng), random_matrix(4, 2, rng)};
  double err = grad_check(in, [](ad::Tape&, const std::vector<ad::Var>& v) {
    return ad::sum(ad::vtanh(ad::matmul(v[0], v[1])));
  });
  EXPECT_LT(err, 1e-6);
}

TEST(Autodiff, MatmulNtGrad) {
  Rng rng(8);
  std::vector<Matrix> in = {random_matrix(3, 5, rng), random_matrix(4, 5, rng)};
  double err = grad_check(in, [](ad::Tape&, const std::vector<ad::Var>& v) {
    return ad::mean(ad::matmul_nt(v[0], v[1]));
  });
  EXPECT_LT(err, 1e-6);
}

TEST(Autodiff, RowvecBiasGrad) {
  Rng rng(9);
  std::vector<Matrix> in = {random_matrix(4, 3, rng), random_matrix(1, 3, rng)};
  double err = grad_check(in, [](ad::Tape&, const std::vector<ad::Var>& v) {
    return ad::sum(ad::sigmoid(ad::add_rowvec(v[0], v[1])));
  });
  EXPECT_LT(err, 1e-6);
}

TEST(Autodiff, SoftmaxFamilyGrad) {
  Rng rng(10);
  std::vector<Matrix> in = {random_matrix(3, 5, rng, -2, 2)};
  double err = grad_check(in, [](ad::Tape&, const std::vector<ad::Var>& v) {
    auto p = ad::softmax_rows(v[0]);
    auto ls = ad::log_softmax_rows(v[0]);
    auto lse = ad::logsumexp_rows(ad::scale(v[0], 0.7));
    return ad::add(ad::mean(ad::mul(p, ls)), ad::mean(lse));
  });
  EXPECT_LT(err, 1e-5);
}

TEST(Autodiff, SoftmaxRowsSumToOne) {
  Rng rng(11);
  ad::Tape tape;
  auto x = tape.leaf(random_matrix(6, 9, rng, -30, 30));
  Matrix p = ad::softmax_rows(x).value();
  for (Eigen::Index i = 0; i < p.rows(); ++i) EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
  EXPECT_GE(p.minCoeff(), 0.0);
}

TEST(Autodiff, ConcatSliceGatherGrad) {
  Rng rng(12);
  std::vector<Matrix> in = {random_matrix(3, 2, rng), random_matrix(3, 4, rng)};
  double err = grad_check(in, [](ad::Tape&, const std::vector<ad::Var>& v) {
    auto c = ad::concat_cols(v[0], v[1]);
    auto s = ad::slice_cols(c, 1, 3);
    auto g = ad::gather_cols(c, {0, 5, 2});
    return ad::add(ad::sum(ad::mul(s, s)), ad::sum(g));
  });
  EXPECT_LT(err, 1e-6);
}

TEST(Autodiff, CrossAddExpGrad) {
  Rng rng(13);
  std::vector<Matrix> in = {random_matrix(4, 1, rng), random_matrix(3, 1, rng)};
  double err = grad_check(in, [](ad::Tape&, const std::vector<ad::Var>& v) {
    return ad::mean(ad::vexp(ad::scale(ad::cross_add(v[0], v[1]), -0.5)));
  });
  EXPECT_LT(err, 1e-6);
}

TEST(Autodiff, MaxSegmentsValueAndGrad) {
  ad::Tape tape;
  Matrix x(6, 2);
  x << 1, 9, 5, 2, 3, 7, 0, 0, -1, 4, 2, 1;
  auto v = tape.leaf(x);
  auto m = ad::max_segments(v, 3);
  ASSERT_EQ(m.rows(), 2);
  EXPECT_EQ(m.value()(0, 0), 5.0);
  EXPECT_EQ(m.value()(0, 1), 9.0);
  EXPECT_EQ(m.value()(1, 0), 2.0);
  EXPECT_EQ(m.value()(1, 1), 4.0);

  Rng rng(14);
  std::vector<Matrix> in = {random_matrix(8, 3, rng)};
  double err = grad_check(in, [](ad::Tape&, const std::vector<ad::Var>& v2) {
    return ad::sum(ad::mul(ad::max_segments(v2[0], 4), ad::max_segments(v2[0], 4)));
  });
  EXPECT_LT(err, 1e-6);
}

TEST(Autodiff, Im2colSegmentsShapeAndGrad) {
  ad::Tape tape;
  Matrix x(8, 2);  // two segments of four rows
  for (int i = 0; i < 8; ++i) {
    x(i, 0) = i;
    x(i, 1) = 10 + i;
  }
  auto u = ad::im2col_segments(tape.leaf(x), 3, 4);
  ASSERT_EQ(u.rows(), 4);  // 2 segments * (4 - 3 + 1)
  ASSERT_EQ(u.cols(), 6);
  // First window of second segment starts at row 4.
  EXPECT_EQ(u.value()(2, 0), 4.0);
  EXPECT_EQ(u.value()(2, 5), 16.0);

  Rng rng(15);
  std::vector<Matrix> in = {random_matrix(10, 2, rng), random_matrix(6, 3, rng)};
  double err = grad_check(in, [](ad::Tape&, const std::vector<ad::Var>& v) {
    auto cols = ad::im2col_segments(v[0], 3, 5);
    auto conv = ad::relu(ad::matmul(cols, v[1]));
    return ad::sum(ad::max_segments(conv, 3));
  });
  EXPECT_LT(err, 1e-5);
}

TEST(Autodiff, StackTimestepsRoundTrip) {
  ad::Tape tape;
  Matrix s0(2, 2), s1(2, 2);
  s0 << 1, 2, 3, 4;
  s1 << 5, 6, 7, 8;
  auto stacked = ad::stack_timesteps({tape.leaf(s0), tape.leaf(s1)});
  ASSERT_EQ(stacked.rows(), 4);
  // Sample-major: sample 0 rows first.
  EXPECT_EQ(stacked.value()(0, 0), 1.0);
  EXPECT_EQ(stacked.value()(1, 0), 5.0);
  EXPECT_EQ(stacked.value()(2, 0), 3.0);
  EXPECT_EQ(stacked.value()(3, 0), 7.0);

  Rng rng(16);
  std::vector<Matrix> in = {random_matrix(3, 2, rng), random_matrix(3, 2, rng)};
  double err = grad_check(in, [](ad::Tape&, const std::vector<ad::Var>& v) {
    auto st = ad::stack_timesteps({v[0], v[1]});
    return ad::sum(ad::mul(st, st));
  });
  EXPECT_LT(err, 1e-6);
}

TEST(Autodiff, LstmStepGrad) {
  Rng rng(17);
  const int d_in = 3, d_h = 4, batch = 2;
  std::vector<Matrix> in = {random_matrix(batch, d_in, rng), random_matrix(d_in + d_h, 4 * d_h, rng),
                            random_matrix(1, 4 * d_h, rng)};
  double err = grad_check(in, [&](ad::Tape& t, const std::vector<ad::Var>& v) {
    auto st = nn::lstm_zero_state(t, batch, d_h);
    auto s1 = nn::lstm_step(v[0], st, v[1], v[2]);
    auto s2 = nn::lstm_step(v[0], s1, v[1], v[2]);
    return ad::sum(ad::mul(s2.h, s2.h));
  });
  EXPECT_LT(err, 1e-5);
}

TEST(Autodiff, GradsSkipConstants) {
  ad::Tape tape;
  auto c = tape.constant(Matrix::Ones(2, 2));
  auto x = tape.leaf(Matrix::Ones(2, 2));
  auto y = ad::sum(ad::mul(c, x));
  tape.backward(y);
  EXPECT_FALSE(tape.node(c.index()).grad_ready);
  EXPECT_TRUE(tape.node(x.index()).grad_ready);
}

TEST(Autodiff, AdamReducesQuadratic) {
  nn::ParamStore store;
  Rng rng(18);
  store.add("x", random_matrix(3, 3, rng));
  nn::AdamConfig cfg;
  cfg.lr = 0.1;
  for (long t = 1; t <= 200; ++t) {
    ad::Tape tape;
    auto bound = nn::bind(tape, store);
    auto loss = ad::sum(ad::mul(bound["x"], bound["x"]));
    tape.backward(loss);
    nn::adam_step(bound, cfg, t);
  }
  EXPECT_LT(store.at("x").value.norm(), 1e-3);
}

}  // namespace
