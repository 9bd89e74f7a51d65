#pragma once

#include <tad/autodiff.hpp>
#include <tad/common.hpp>
#include <tad/rng.hpp>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace tad::nn {

struct Param {
  Matrix value;
  // Adam state.
  Matrix m;
  Matrix v;
};

// Insertion-ordered named parameters; the order fixes both the update
// sequence and the checkpoint blob layout, which keeps runs reproducible.
class ParamStore {
public:
  Param& add(const std::string& name, Matrix init) {
    for (auto& [n, p] : params_)
      if (n == name) throw ConfigError("duplicate parameter: " + name);
    Param p;
    p.m = Matrix::Zero(init.rows(), init.cols());
    p.v = Matrix::Zero(init.rows(), init.cols());
    p.value = std::move(init);
    params_.emplace_back(name, std::move(p));
    return params_.back().second;
  }

  Param& at(const std::string& name) {
    for (auto& [n, p] : params_)
      if (n == name) return p;
    throw ConfigError("unknown parameter: " + name);
  }
  const Param& at(const std::string& name) const {
    for (const auto& [n, p] : params_)
      if (n == name) return p;
    throw ConfigError("unknown parameter: " + name);
  }

  std::vector<std::pair<std::string, Param>>& items() { return params_; }
  const std::vector<std::pair<std::string, Param>>& items() const { return params_; }
  size_t size() const { return params_.size(); }

private:
  std::vector<std::pair<std::string, Param>> params_;
};

// Per-step binding of parameters as tape leaves.
struct BoundParams {
  std::vector<std::pair<Param*, ad::Var>> entries;
  std::vector<std::string> names;

  ad::Var operator[](const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return entries[i].second;
    throw ConfigError("unbound parameter: " + name);
  }
};

inline BoundParams bind(ad::Tape& tape, ParamStore& store, bool trainable = true) {
  BoundParams out;
  for (auto& [name, p] : store.items()) {
    out.entries.emplace_back(&p, tape.leaf(p.value, trainable));
    out.names.push_back(name);
  }
  return out;
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;  // 0 disables clipping
};

// One Adam update over bound parameters whose gradients exist; `t` is the
// 1-based step counter for bias correction.
inline void adam_step(BoundParams& bound, const AdamConfig& cfg, long t) {
  // Global grad-norm clip across all parameters.
  double scale_factor = 1.0;
  if (cfg.clip_norm > 0) {
    double sq = 0.0;
    for (auto& [param, var] : bound.entries) {
      const ad::Node& n = var.tape()->node(var.index());
      if (!n.grad_ready) continue;
      sq += n.grad.squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (norm > cfg.clip_norm) scale_factor = cfg.clip_norm / norm;
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& [param, var] : bound.entries) {
    const ad::Node& n = var.tape()->node(var.index());
    if (!n.grad_ready) continue;
    const Matrix g = n.grad * scale_factor;
    param->m = cfg.beta1 * param->m + (1.0 - cfg.beta1) * g;
    param->v = cfg.beta2 * param->v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const Matrix mhat = param->m / bc1;
    const Matrix vhat = param->v / bc2;
    param->value -= cfg.lr * (mhat.array() / (vhat.array().sqrt() + cfg.eps)).matrix();
  }
}

inline Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double r = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-r, r);
  return m;
}

// Gate layout in the fused LSTM weight: [input | forget | cell | output].
struct LstmState {
  ad::Var h;
  ad::Var c;
};

inline LstmState lstm_zero_state(ad::Tape& tape, Eigen::Index batch, Eigen::Index hidden) {
  return {tape.constant(Matrix::Zero(batch, hidden)), tape.constant(Matrix::Zero(batch, hidden))};
}

// One step of a fused-weight LSTM cell: w is (d_in + d_h) x 4 d_h, b is 1 x 4 d_h.
inline LstmState lstm_step(const ad::Var& x, const LstmState& prev, const ad::Var& w, const ad::Var& b) {
  using namespace ad;
  const Eigen::Index d_h = prev.h.cols();
  Var z = add_rowvec(matmul(concat_cols(x, prev.h), w), b);
  Var i_gate = sigmoid(slice_cols(z, 0, d_h));
  Var f_gate = sigmoid(slice_cols(z, d_h, d_h));
  Var g_cell = vtanh(slice_cols(z, 2 * d_h, d_h));
  Var o_gate = sigmoid(slice_cols(z, 3 * d_h, d_h));
  Var c = add(mul(f_gate, prev.c), mul(i_gate, g_cell));
  Var h = mul(o_gate, vtanh(c));
  return {h, c};
}

inline void add_lstm_params(ParamStore& store, const std::string& prefix, Eigen::Index d_in,
                            Eigen::Index d_h, Rng& rng) {
  store.add(prefix + "_w", glorot_uniform(d_in + d_h, 4 * d_h, rng));
  Matrix b = Matrix::Zero(1, 4 * d_h);
  // Forget-gate bias starts at 1 so memory survives early training.
  b.middleCols(d_h, d_h).setOnes();
  store.add(prefix + "_b", std::move(b));
}

inline void add_dense_params(ParamStore& store, const std::string& prefix, Eigen::Index d_in,
                             Eigen::Index d_out, Rng& rng) {
  store.add(prefix + "_w", glorot_uniform(d_in, d_out, rng));
  store.add(prefix + "_b", Matrix::Zero(1, d_out));
}

inline ad::Var dense(const ad::Var& x, const BoundParams& p, const std::string& prefix) {
  return ad::add_rowvec(ad::matmul(x, p[prefix + "_w"]), p[prefix + "_b"]);
}

}  // namespace tad::nn
