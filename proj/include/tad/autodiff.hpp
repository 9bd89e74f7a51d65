#pragma once

#include <tad/common.hpp>

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

// Reverse-mode autodiff over Eigen double matrices. A Tape owns the graph for
// one forward/backward pass; Vars are cheap (tape pointer + node index)
// handles. Ops cover exactly what the models here need: dense layers, LSTM
// cells, 1-d convolution via im2col, pooling, stable softmax family, and the
// reductions the loss terms are built from.

namespace tad::ad {

class Tape;

class Var {
public:
  Var() = default;
  Var(Tape* tape, int idx) : tape_(tape), idx_(idx) {}

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
  bool valid() const { return tape_ != nullptr; }

  Tape* tape() const { return tape_; }
  int index() const { return idx_; }

private:
  Tape* tape_ = nullptr;
  int idx_ = -1;
};

struct Node {
  Matrix value;
  Matrix grad;  // allocated on demand during backward
  std::vector<int> parents;
  // Propagates this node's grad into its parents' grads.
  std::function<void(Tape&, const Node&)> backward;
  bool requires_grad = false;
  bool grad_ready = false;
};

class Tape {
public:
  Var leaf(Matrix v, bool requires_grad = true) {
    Node n;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    return push(std::move(n));
  }

  Var constant(Matrix v) { return leaf(std::move(v), false); }

  Var scalar_constant(double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  Node& node(int idx) { return nodes_[static_cast<size_t>(idx)]; }
  const Node& node(int idx) const { return nodes_[static_cast<size_t>(idx)]; }
  size_t size() const { return nodes_.size(); }

  Var push(Node n) {
    for (int p : n.parents) {
      if (node(p).requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
  }

  // Accumulate g into the grad of node idx if it participates in the graph.
  void accumulate(int idx, const Matrix& g) {
    Node& n = node(idx);
    if (!n.requires_grad) return;
    if (!n.grad_ready) {
      n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
      n.grad_ready = true;
    }
    n.grad += g;
  }

  // Backpropagate from a 1x1 root.
  void backward(const Var& root) {
    if (root.tape() != this) throw NumericError("backward: var from another tape");
    const int r = root.index();
    if (node(r).value.size() != 1) throw NumericError("backward: root must be scalar");
    Matrix one(1, 1);
    one(0, 0) = 1.0;
    node(r).grad = one;
    node(r).grad_ready = true;
    node(r).requires_grad = true;
    for (int i = r; i >= 0; --i) {
      Node& n = node(i);
      if (!n.grad_ready || !n.backward) continue;
      n.backward(*this, n);
    }
  }

private:
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->node(idx_).value; }
inline const Matrix& Var::grad() const {
  const Node& n = tape_->node(idx_);
  if (!n.grad_ready) throw NumericError("grad accessed before backward reached this node");
  return n.grad;
}
inline double Var::scalar() const {
  if (value().size() != 1) throw NumericError("scalar() on non-scalar var");
  return value()(0, 0);
}

namespace detail {
inline Tape& tape_of(const Var& a) { return *a.tape(); }
inline void check_same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw NumericError("vars belong to different tapes");
}
}  // namespace detail

// ---- elementwise binary ----

inline Var add(const Var& a, const Var& b) {
  detail::check_same_tape(a, b);
  Node n;
  n.value = a.value() + b.value();
  n.parents = {a.index(), b.index()};
  int ai = a.index(), bi = b.index();
  n.backward = [ai, bi](Tape& t, const Node& self) {
    t.accumulate(ai, self.grad);
    t.accumulate(bi, self.grad);
  };
  return detail::tape_of(a).push(std::move(n));
}

inline Var sub(const Var& a, const Var& b) {
  detail::check_same_tape(a, b);
  Node n;
  n.value = a.value() - b.value();
  n.parents = {a.index(), b.index()};
  int ai = a.index(), bi = b.index();
  n.backward = [ai, bi](Tape& t, const Node& self) {
    t.accumulate(ai, self.grad);
    t.accumulate(bi, -self.grad);
  };
  return detail::tape_of(a).push(std::move(n));
}

inline Var mul(const Var& a, const Var& b) {
  detail::check_same_tape(a, b);
  Node n;
  n.value = a.value().cwiseProduct(b.value());
  n.parents = {a.index(), b.index()};
  int ai = a.index(), bi = b.index();
  n.backward = [ai, bi](Tape& t, const Node& self) {
    t.accumulate(ai, self.grad.cwiseProduct(t.node(bi).value));
    t.accumulate(bi, self.grad.cwiseProduct(t.node(ai).value));
  };
  return detail::tape_of(a).push(std::move(n));
}

inline Var scale(const Var& a, double s) {
  Node n;
  n.value = a.value() * s;
  n.parents = {a.index()};
  int ai = a.index();
  n.backward = [ai, s](Tape& t, const Node& self) { t.accumulate(ai, self.grad * s); };
  return detail::tape_of(a).push(std::move(n));
}

inline Var neg(const Var& a) { return scale(a, -1.0); }

// ---- matrix products ----

inline Var matmul(const Var& a, const Var& b) {
  detail::check_same_tape(a, b);
  if (a.cols() != b.rows()) throw NumericError("matmul: inner dimension mismatch");
  Node n;
  n.value = a.value() * b.value();
  n.parents = {a.index(), b.index()};
  int ai = a.index(), bi = b.index();
  n.backward = [ai, bi](Tape& t, const Node& self) {
    t.accumulate(ai, self.grad * t.node(bi).value.transpose());
    t.accumulate(bi, t.node(ai).value.transpose() * self.grad);
  };
  return detail::tape_of(a).push(std::move(n));
}

// a * b^T
inline Var matmul_nt(const Var& a, const Var& b) {
  detail::check_same_tape(a, b);
  if (a.cols() != b.cols()) throw NumericError("matmul_nt: dimension mismatch");
  Node n;
  n.value = a.value() * b.value().transpose();
  n.parents = {a.index(), b.index()};
  int ai = a.index(), bi = b.index();
  n.backward = [ai, bi](Tape& t, const Node& self) {
    t.accumulate(ai, self.grad * t.node(bi).value);
    t.accumulate(bi, self.grad.transpose() * t.node(ai).value);
  };
  return detail::tape_of(a).push(std::move(n));
}

// Broadcast-add a 1 x k row vector to every row.
inline Var add_rowvec(const Var& a, const Var& b) {
  detail::check_same_tape(a, b);
  if (b.rows() != 1 || b.cols() != a.cols()) throw NumericError("add_rowvec: shape mismatch");
  Node n;
  n.value = a.value().rowwise() + Eigen::RowVectorXd(b.value().row(0));
  n.parents = {a.index(), b.index()};
  int ai = a.index(), bi = b.index();
  n.backward = [ai, bi](Tape& t, const Node& self) {
    t.accumulate(ai, self.grad);
    t.accumulate(bi, self.grad.colwise().sum());
  };
  return detail::tape_of(a).push(std::move(n));
}

// ---- elementwise unary ----

inline Var vtanh(const Var& a) {
  Node n;
  n.value = a.value().array().tanh().matrix();
  n.parents = {a.index()};
  int ai = a.index();
  n.backward = [ai](Tape& t, const Node& self) {
    t.accumulate(ai, (self.grad.array() * (1.0 - self.value.array().square())).matrix());
  };
  return detail::tape_of(a).push(std::move(n));
}

inline Var sigmoid(const Var& a) {
  Node n;
  n.value = (0.5 * (a.value().array() * 0.5).tanh() + 0.5).matrix();
  n.parents = {a.index()};
  int ai = a.index();
  n.backward = [ai](Tape& t, const Node& self) {
    t.accumulate(ai, (self.grad.array() * self.value.array() * (1.0 - self.value.array())).matrix());
  };
  return detail::tape_of(a).push(std::move(n));
}

inline Var relu(const Var& a) {
  Node n;
  n.value = a.value().cwiseMax(0.0);
  n.parents = {a.index()};
  int ai = a.index();
  n.backward = [ai](Tape& t, const Node& self) {
    const Matrix& x = t.node(ai).value;
    t.accumulate(ai, (self.grad.array() * (x.array() > 0.0).cast<double>()).matrix());
  };
  return detail::tape_of(a).push(std::move(n));
}

inline Var vexp(const Var& a) {
  Node n;
  n.value = a.value().array().exp().matrix();
  n.parents = {a.index()};
  int ai = a.index();
  n.backward = [ai](Tape& t, const Node& self) {
    t.accumulate(ai, self.grad.cwiseProduct(self.value));
  };
  return detail::tape_of(a).push(std::move(n));
}

inline Var vlog(const Var& a) {
  Node n;
  n.value = a.value().array().log().matrix();
  n.parents = {a.index()};
  int ai = a.index();
  n.backward = [ai](Tape& t, const Node& self) {
    t.accumulate(ai, self.grad.cwiseQuotient(t.node(ai).value));
  };
  return detail::tape_of(a).push(std::move(n));
}

// ---- shape ops ----

inline Var concat_cols(const Var& a, const Var& b) {
  detail::check_same_tape(a, b);
  if (a.rows() != b.rows()) throw NumericError("concat_cols: row mismatch");
  Node n;
  n.value.resize(a.rows(), a.cols() + b.cols());
  n.value << a.value(), b.value();
  n.parents = {a.index(), b.index()};
  int ai = a.index(), bi = b.index();
  const Eigen::Index ac = a.cols(), bc = b.cols();
  n.backward = [ai, bi, ac, bc](Tape& t, const Node& self) {
    t.accumulate(ai, self.grad.leftCols(ac));
    t.accumulate(bi, self.grad.rightCols(bc));
  };
  return detail::tape_of(a).push(std::move(n));
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw NumericError("concat_cols: empty list");
  Var out = parts[0];
  for (size_t i = 1; i < parts.size(); ++i) out = concat_cols(out, parts[i]);
  return out;
}

inline Var slice_cols(const Var& a, Eigen::Index c0, Eigen::Index n_cols) {
  if (c0 < 0 || c0 + n_cols > a.cols()) throw NumericError("slice_cols: out of range");
  Node n;
  n.value = a.value().middleCols(c0, n_cols);
  n.parents = {a.index()};
  int ai = a.index();
  n.backward = [ai, c0, n_cols](Tape& t, const Node& self) {
    Matrix g = Matrix::Zero(t.node(ai).value.rows(), t.node(ai).value.cols());
    g.middleCols(c0, n_cols) = self.grad;
    t.accumulate(ai, g);
  };
  return detail::tape_of(a).push(std::move(n));
}

// ---- reductions ----

inline Var sum(const Var& a) {
  Node n;
  n.value = Matrix::Constant(1, 1, a.value().sum());
  n.parents = {a.index()};
  int ai = a.index();
  n.backward = [ai](Tape& t, const Node& self) {
    const Node& p = t.node(ai);
    t.accumulate(ai, Matrix::Constant(p.value.rows(), p.value.cols(), self.grad(0, 0)));
  };
  return detail::tape_of(a).push(std::move(n));
}

inline Var mean(const Var& a) {
  const double inv = 1.0 / static_cast<double>(a.value().size());
  return scale(sum(a), inv);
}

// Sum over each row -> n x 1.
inline Var row_sums(const Var& a) {
  Node n;
  n.value = a.value().rowwise().sum();
  n.parents = {a.index()};
  int ai = a.index();
  n.backward = [ai](Tape& t, const Node& self) {
    const Node& p = t.node(ai);
    t.accumulate(ai, self.grad * Eigen::RowVectorXd::Ones(p.value.cols()));
  };
  return detail::tape_of(a).push(std::move(n));
}

// ---- stable softmax family (per row) ----

namespace detail {
inline Matrix log_softmax_rows_value(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    const double lse = m + std::log((x.row(i).array() - m).exp().sum());
    out.row(i) = x.row(i).array() - lse;
  }
  return out;
}
}  // namespace detail

inline Var log_softmax_rows(const Var& a) {
  Node n;
  n.value = detail::log_softmax_rows_value(a.value());
  n.parents = {a.index()};
  int ai = a.index();
  n.backward = [ai](Tape& t, const Node& self) {
    // dx = g - softmax(x) * rowsum(g)
    const Matrix p = self.value.array().exp().matrix();
    const Vector gsum = self.grad.rowwise().sum();
    t.accumulate(ai, self.grad - (p.array().colwise() * gsum.array()).matrix());
  };
  return detail::tape_of(a).push(std::move(n));
}

inline Var softmax_rows(const Var& a) {
  Node n;
  n.value = detail::log_softmax_rows_value(a.value()).array().exp().matrix();
  n.parents = {a.index()};
  int ai = a.index();
  n.backward = [ai](Tape& t, const Node& self) {
    // dx = y .* (g - rowsum(g .* y))
    const Matrix& y = self.value;
    const Vector dot = (self.grad.cwiseProduct(y)).rowwise().sum();
    t.accumulate(ai, y.cwiseProduct(self.grad - (Matrix::Ones(y.rows(), y.cols()).array().colwise() * dot.array()).matrix()));
  };
  return detail::tape_of(a).push(std::move(n));
}

// Row-wise log-sum-exp -> n x 1.
inline Var logsumexp_rows(const Var& a) {
  Node n;
  n.value.resize(a.rows(), 1);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double m = a.value().row(i).maxCoeff();
    n.value(i, 0) = m + std::log((a.value().row(i).array() - m).exp().sum());
  }
  n.parents = {a.index()};
  int ai = a.index();
  n.backward = [ai](Tape& t, const Node& self) {
    const Matrix& x = t.node(ai).value;
    Matrix p = (x.array().colwise() - self.value.col(0).array()).exp().matrix();
    t.accumulate(ai, (p.array().colwise() * self.grad.col(0).array()).matrix());
  };
  return detail::tape_of(a).push(std::move(n));
}

// Pick one column per row -> n x 1.
inline Var gather_cols(const Var& a, std::vector<int> col_per_row) {
  if (static_cast<Eigen::Index>(col_per_row.size()) != a.rows())
    throw NumericError("gather_cols: index count mismatch");
  for (int c : col_per_row)
    if (c < 0 || c >= a.cols()) throw NumericError("gather_cols: column out of range");
  Node n;
  n.value.resize(a.rows(), 1);
  for (Eigen::Index i = 0; i < a.rows(); ++i) n.value(i, 0) = a.value()(i, col_per_row[static_cast<size_t>(i)]);
  n.parents = {a.index()};
  int ai = a.index();
  n.backward = [ai, idx = std::move(col_per_row)](Tape& t, const Node& self) {
    const Node& p = t.node(ai);
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, idx[static_cast<size_t>(i)]) = self.grad(i, 0);
    t.accumulate(ai, g);
  };
  return detail::tape_of(a).push(std::move(n));
}

// out(i, j) = a(i, 0) + b(j, 0); a is n x 1, b is m x 1.
inline Var cross_add(const Var& a, const Var& b) {
  detail::check_same_tape(a, b);
  if (a.cols() != 1 || b.cols() != 1) throw NumericError("cross_add: expects column vectors");
  Node n;
  n.value = a.value() * Eigen::RowVectorXd::Ones(b.rows()) +
            Vector::Ones(a.rows()) * b.value().transpose();
  n.parents = {a.index(), b.index()};
  int ai = a.index(), bi = b.index();
  n.backward = [ai, bi](Tape& t, const Node& self) {
    t.accumulate(ai, self.grad.rowwise().sum());
    t.accumulate(bi, self.grad.colwise().sum().transpose());
  };
  return detail::tape_of(a).push(std::move(n));
}

// Max over each consecutive block of seg_rows rows -> (rows/seg_rows) x cols.
// Ties resolve to the first maximal row, fixing the backward scatter.
inline Var max_segments(const Var& a, Eigen::Index seg_rows) {
  if (seg_rows <= 0 || a.rows() % seg_rows != 0) throw NumericError("max_segments: bad segment size");
  const Eigen::Index n_seg = a.rows() / seg_rows;
  Node n;
  n.value.resize(n_seg, a.cols());
  std::vector<Eigen::Index> argmax(static_cast<size_t>(n_seg * a.cols()));
  for (Eigen::Index s = 0; s < n_seg; ++s) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      Eigen::Index best = s * seg_rows;
      double bv = a.value()(best, c);
      for (Eigen::Index r = s * seg_rows + 1; r < (s + 1) * seg_rows; ++r) {
        if (a.value()(r, c) > bv) {
          bv = a.value()(r, c);
          best = r;
        }
      }
      n.value(s, c) = bv;
      argmax[static_cast<size_t>(s * a.cols() + c)] = best;
    }
  }
  n.parents = {a.index()};
  int ai = a.index();
  n.backward = [ai, argmax = std::move(argmax)](Tape& t, const Node& self) {
    const Node& p = t.node(ai);
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    for (Eigen::Index s = 0; s < self.grad.rows(); ++s)
      for (Eigen::Index c = 0; c < self.grad.cols(); ++c)
        g(argmax[static_cast<size_t>(s * self.grad.cols() + c)], c) += self.grad(s, c);
    t.accumulate(ai, g);
  };
  return detail::tape_of(a).push(std::move(n));
}

// Sliding-window unroll within each consecutive segment of seg_rows rows.
// Input is (n_seg * seg_rows) x d; output is (n_seg * (seg_rows - w + 1)) x (w * d).
// Used to express 1-d convolution over token positions as a single matmul.
inline Var im2col_segments(const Var& a, Eigen::Index window, Eigen::Index seg_rows) {
  if (window <= 0 || seg_rows < window) throw NumericError("im2col_segments: window larger than segment");
  if (a.rows() % seg_rows != 0) throw NumericError("im2col_segments: bad segment size");
  const Eigen::Index n_seg = a.rows() / seg_rows;
  const Eigen::Index steps = seg_rows - window + 1;
  const Eigen::Index d = a.cols();
  Node n;
  n.value.resize(n_seg * steps, window * d);
  for (Eigen::Index s = 0; s < n_seg; ++s)
    for (Eigen::Index t0 = 0; t0 < steps; ++t0)
      for (Eigen::Index k = 0; k < window; ++k)
        n.value.block(s * steps + t0, k * d, 1, d) = a.value().row(s * seg_rows + t0 + k);
  n.parents = {a.index()};
  int ai = a.index();
  n.backward = [ai, window, seg_rows, steps, d](Tape& t, const Node& self) {
    const Node& p = t.node(ai);
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    const Eigen::Index n_seg2 = p.value.rows() / seg_rows;
    for (Eigen::Index s = 0; s < n_seg2; ++s)
      for (Eigen::Index t0 = 0; t0 < steps; ++t0)
        for (Eigen::Index k = 0; k < window; ++k)
          g.row(s * seg_rows + t0 + k) += self.grad.block(s * steps + t0, k * d, 1, d);
    t.accumulate(ai, g);
  };
  return detail::tape_of(a).push(std::move(n));
}

// Reorder per-timestep batches into sample-major stacking: steps[t] is
// batch x d; output row i * T + t is sample i at step t.
inline Var stack_timesteps(const std::vector<Var>& steps) {
  if (steps.empty()) throw NumericError("stack_timesteps: empty");
  const Eigen::Index batch = steps[0].rows();
  const Eigen::Index d = steps[0].cols();
  const Eigen::Index T = static_cast<Eigen::Index>(steps.size());
  Node n;
  n.value.resize(batch * T, d);
  std::vector<int> parent_idx;
  parent_idx.reserve(steps.size());
  for (Eigen::Index t0 = 0; t0 < T; ++t0) {
    detail::check_same_tape(steps[0], steps[static_cast<size_t>(t0)]);
    if (steps[static_cast<size_t>(t0)].rows() != batch || steps[static_cast<size_t>(t0)].cols() != d)
      throw NumericError("stack_timesteps: inconsistent step shapes");
    for (Eigen::Index i = 0; i < batch; ++i)
      n.value.row(i * T + t0) = steps[static_cast<size_t>(t0)].value().row(i);
    parent_idx.push_back(steps[static_cast<size_t>(t0)].index());
    n.parents.push_back(steps[static_cast<size_t>(t0)].index());
  }
  n.backward = [parent_idx, batch, T, d](Tape& t, const Node& self) {
    for (Eigen::Index t0 = 0; t0 < T; ++t0) {
      Matrix g(batch, d);
      for (Eigen::Index i = 0; i < batch; ++i) g.row(i) = self.grad.row(i * T + t0);
      t.accumulate(parent_idx[static_cast<size_t>(t0)], g);
    }
  };
  return detail::tape_of(steps[0]).push(std::move(n));
}

}  // namespace tad::ad
