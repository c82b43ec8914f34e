#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "dtts/common.hpp"
#include "dtts/rng.hpp"

namespace dtts::nn {

// Reverse-mode autodiff over dense row-major matrices.
//
// A Tape owns every intermediate value of one forward pass (define-by-run);
// creation order is a valid topological order, so backward() just walks the
// node list in reverse. Tapes are independent: batch items can be evaluated
// on separate tapes concurrently as long as parameter values are not
// mutated meanwhile.
template <typename Real>
class Tape;

template <typename Real>
struct Var {
  Tape<Real>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr; }
  const Mat<Real>& value() const { return tape->value(id); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Real scalar() const { return value()(0, 0); }
};

template <typename Real>
class Tape {
 public:
  Var<Real> leaf(Mat<Real> value, bool needs_grad = false) {
    return alloc(std::move(value), needs_grad);
  }

  Var<Real> alloc(Mat<Real> value, bool needs_grad) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, needs_grad});
    return Var<Real>{this, static_cast<int>(nodes_.size()) - 1};
  }

  void on_backward(Var<Real> v, std::function<void()> fn) {
    nodes_[v.id].backprop = std::move(fn);
  }

  const Mat<Real>& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  // Gradient buffer, allocated and zeroed on first touch.
  Mat<Real>& grad_ref(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Mat<Real>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  const Mat<Real>& grad(Var<Real> v) { return grad_ref(v.id); }

  // Backpropagate from a 1x1 loss node.
  void backward(Var<Real> loss) {
    require(loss.rows() == 1 && loss.cols() == 1, "backward: loss must be scalar");
    grad_ref(loss.id)(0, 0) = Real(1);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.backprop && n.grad.size() != 0) n.backprop();
    }
  }

  size_t size() const { return nodes_.size(); }

  void register_param(const void* key, Var<Real> v) {
    param_nodes_.emplace_back(key, v.id);
  }

  Var<Real> find_param(const void* key) {
    for (auto& [k, id] : param_nodes_)
      if (k == key) return Var<Real>{this, id};
    return {};
  }

  // Visits (key, grad) for every parameter used on this tape, in first-use
  // order. Grad may be empty if the parameter never received gradient.
  template <typename Fn>
  void for_each_param_grad(Fn&& fn) {
    for (auto& [key, id] : param_nodes_) fn(key, nodes_[id].grad);
  }

 private:
  struct Node {
    Mat<Real> value;
    Mat<Real> grad;
    std::function<void()> backprop;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<const void*, int>> param_nodes_;
};

namespace ops_detail {

template <typename Real>
Tape<Real>* same_tape(Var<Real> a, Var<Real> b) {
  require(a.tape == b.tape, "op: operands belong to different tapes");
  return a.tape;
}

}  // namespace ops_detail

// ---------------------------------------------------------------------------
// Elementwise / broadcast ops
// ---------------------------------------------------------------------------

template <typename Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
  Tape<Real>* t = ops_detail::same_tape(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Var<Real> out = t->alloc(a.value() + b.value(), t->needs_grad(a.id) || t->needs_grad(b.id));
  if (out.tape->needs_grad(out.id))
    t->on_backward(out, [t, a, b, out] {
      const Mat<Real>& g = t->grad_ref(out.id);
      if (t->needs_grad(a.id)) t->grad_ref(a.id) += g;
      if (t->needs_grad(b.id)) t->grad_ref(b.id) += g;
    });
  return out;
}

template <typename Real>
Var<Real> sub(Var<Real> a, Var<Real> b) {
  Tape<Real>* t = ops_detail::same_tape(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  Var<Real> out = t->alloc(a.value() - b.value(), t->needs_grad(a.id) || t->needs_grad(b.id));
  if (t->needs_grad(out.id))
    t->on_backward(out, [t, a, b, out] {
      const Mat<Real>& g = t->grad_ref(out.id);
      if (t->needs_grad(a.id)) t->grad_ref(a.id) += g;
      if (t->needs_grad(b.id)) t->grad_ref(b.id) -= g;
    });
  return out;
}

template <typename Real>
Var<Real> mul(Var<Real> a, Var<Real> b) {
  Tape<Real>* t = ops_detail::same_tape(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  Var<Real> out = t->alloc(a.value().cwiseProduct(b.value()),
                           t->needs_grad(a.id) || t->needs_grad(b.id));
  if (t->needs_grad(out.id))
    t->on_backward(out, [t, a, b, out] {
      const Mat<Real>& g = t->grad_ref(out.id);
      if (t->needs_grad(a.id)) t->grad_ref(a.id) += g.cwiseProduct(b.value());
      if (t->needs_grad(b.id)) t->grad_ref(b.id) += g.cwiseProduct(a.value());
    });
  return out;
}

template <typename Real>
Var<Real> scale(Var<Real> a, Real c) {
  Tape<Real>* t = a.tape;
  Var<Real> out = t->alloc(a.value() * c, t->needs_grad(a.id));
  if (t->needs_grad(out.id))
    t->on_backward(out, [t, a, out, c] { t->grad_ref(a.id) += c * t->grad_ref(out.id); });
  return out;
}

// Broadcast-add a 1xC row vector to every row of a.
template <typename Real>
Var<Real> add_rowvec(Var<Real> a, Var<Real> r) {
  Tape<Real>* t = ops_detail::same_tape(a, r);
  require(r.rows() == 1 && r.cols() == a.cols(), "add_rowvec: bad vector shape");
  Mat<Real> v = a.value();
  v.rowwise() += r.value().row(0);
  Var<Real> out = t->alloc(std::move(v), t->needs_grad(a.id) || t->needs_grad(r.id));
  if (t->needs_grad(out.id))
    t->on_backward(out, [t, a, r, out] {
      const Mat<Real>& g = t->grad_ref(out.id);
      if (t->needs_grad(a.id)) t->grad_ref(a.id) += g;
      if (t->needs_grad(r.id)) t->grad_ref(r.id) += g.colwise().sum();
    });
  return out;
}

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

template <typename Real>
Var<Real> matmul(Var<Real> a, Var<Real> b) {
  Tape<Real>* t = ops_detail::same_tape(a, b);
  require(a.cols() == b.rows(), "matmul: inner dims differ");
  Var<Real> out = t->alloc(a.value() * b.value(), t->needs_grad(a.id) || t->needs_grad(b.id));
  if (t->needs_grad(out.id))
    t->on_backward(out, [t, a, b, out] {
      const Mat<Real>& g = t->grad_ref(out.id);
      if (t->needs_grad(a.id)) t->grad_ref(a.id).noalias() += g * b.value().transpose();
      if (t->needs_grad(b.id)) t->grad_ref(b.id).noalias() += a.value().transpose() * g;
    });
  return out;
}

template <typename Real>
Var<Real> transpose(Var<Real> a) {
  Tape<Real>* t = a.tape;
  Var<Real> out = t->alloc(a.value().transpose(), t->needs_grad(a.id));
  if (t->needs_grad(out.id))
    t->on_backward(out, [t, a, out] {
      t->grad_ref(a.id) += t->grad_ref(out.id).transpose();
    });
  return out;
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

template <typename Real>
Var<Real> relu(Var<Real> a) {
  Tape<Real>* t = a.tape;
  Var<Real> out = t->alloc(a.value().cwiseMax(Real(0)), t->needs_grad(a.id));
  if (t->needs_grad(out.id))
    t->on_backward(out, [t, a, out] {
      t->grad_ref(a.id).array() +=
          t->grad_ref(out.id).array() * (a.value().array() > Real(0)).template cast<Real>();
    });
  return out;
}

template <typename Real>
Var<Real> sigmoid(Var<Real> a) {
  Tape<Real>* t = a.tape;
  Mat<Real> s = (Real(1) / (Real(1) + (-a.value().array()).exp())).matrix();
  Var<Real> out = t->alloc(std::move(s), t->needs_grad(a.id));
  if (t->needs_grad(out.id))
    t->on_backward(out, [t, a, out] {
      const auto& s = out.value().array();
      t->grad_ref(a.id).array() += t->grad_ref(out.id).array() * s * (Real(1) - s);
    });
  return out;
}

// x * sigmoid(x)
template <typename Real>
Var<Real> swish(Var<Real> a) {
  Tape<Real>* t = a.tape;
  Mat<Real> s = (Real(1) / (Real(1) + (-a.value().array()).exp())).matrix();
  Mat<Real> y = a.value().cwiseProduct(s);
  Var<Real> sv = t->alloc(std::move(s), false);
  Var<Real> out = t->alloc(std::move(y), t->needs_grad(a.id));
  if (t->needs_grad(out.id))
    t->on_backward(out, [t, a, sv, out] {
      const auto& s = sv.value().array();
      const auto& x = a.value().array();
      t->grad_ref(a.id).array() +=
          t->grad_ref(out.id).array() * (s + x * s * (Real(1) - s));
    });
  return out;
}

template <typename Real>
Var<Real> exp_of(Var<Real> a) {
  Tape<Real>* t = a.tape;
  Var<Real> out = t->alloc(a.value().array().exp().matrix(), t->needs_grad(a.id));
  if (t->needs_grad(out.id))
    t->on_backward(out, [t, a, out] {
      t->grad_ref(a.id).array() += t->grad_ref(out.id).array() * out.value().array();
    });
  return out;
}

// Gated linear unit over columns: input [A | B] with 2C columns,
// output A .* sigmoid(B) with C columns.
template <typename Real>
Var<Real> glu_cols(Var<Real> a) {
  Tape<Real>* t = a.tape;
  require(a.cols() % 2 == 0, "glu_cols: even column count required");
  const Eigen::Index c = a.cols() / 2;
  Mat<Real> lin = a.value().leftCols(c);
  Mat<Real> gate = (Real(1) / (Real(1) + (-a.value().rightCols(c).array()).exp())).matrix();
  Var<Real> gv = t->alloc(std::move(gate), false);
  Var<Real> out = t->alloc(lin.cwiseProduct(gv.value()), t->needs_grad(a.id));
  if (t->needs_grad(out.id))
    t->on_backward(out, [t, a, gv, out, c] {
      const Mat<Real>& g = t->grad_ref(out.id);
      const auto& s = gv.value().array();
      Mat<Real>& ga = t->grad_ref(a.id);
      ga.leftCols(c).array() += g.array() * s;
      ga.rightCols(c).array() +=
          g.array() * a.value().leftCols(c).array() * s * (Real(1) - s);
    });
  return out;
}

template <typename Real>
Var<Real> softmax_rows(Var<Real> a) {
  Tape<Real>* t = a.tape;
  Mat<Real> s = a.value();
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    auto row = s.row(i).array();
    row -= row.maxCoeff();
    row = row.exp();
    row /= row.sum();
  }
  Var<Real> out = t->alloc(std::move(s), t->needs_grad(a.id));
  if (t->needs_grad(out.id))
    t->on_backward(out, [t, a, out] {
      const Mat<Real>& g = t->grad_ref(out.id);
      const Mat<Real>& s = out.value();
      Mat<Real>& ga = t->grad_ref(a.id);
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        Real dot = g.row(i).dot(s.row(i));
        ga.row(i).array() += s.row(i).array() * (g.row(i).array() - dot);
      }
    });
  return out;
}

template <typename Real>
Var<Real> log_softmax_rows(Var<Real> a) {
  Tape<Real>* t = a.tape;
  Mat<Real> ls = a.value();
  for (Eigen::Index i = 0; i < ls.rows(); ++i) {
    auto row = ls.row(i).array();
    Real m = row.maxCoeff();
    Real lse = m + std::log((row - m).exp().sum());
    row -= lse;
  }
  Var<Real> out = t->alloc(std::move(ls), t->needs_grad(a.id));
  if (t->needs_grad(out.id))
    t->on_backward(out, [t, a, out] {
      const Mat<Real>& g = t->grad_ref(out.id);
      const Mat<Real>& ls = out.value();
      Mat<Real>& ga = t->grad_ref(a.id);
      for (Eigen::Index i = 0; i < ls.rows(); ++i) {
        Real gsum = g.row(i).sum();
        ga.row(i).array() += g.row(i).array() - ls.row(i).array().exp() * gsum;
      }
    });
  return out;
}

// Per-row layer normalization over channels, no learned affine.
template <typename Real>
Var<Real> layer_norm_rows(Var<Real> a, Real eps = Real(1e-5)) {
  Tape<Real>* t = a.tape;
  const Eigen::Index c = a.cols();
  Mat<Real> xhat(a.rows(), c);
  Mat<Real> inv_std(a.rows(), 1);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    auto row = a.value().row(i).array();
    Real mu = row.mean();
    Real var = (row - mu).square().mean();
    Real is = Real(1) / std::sqrt(var + eps);
    inv_std(i, 0) = is;
    xhat.row(i) = ((row - mu) * is).matrix();
  }
  Var<Real> isv = t->alloc(std::move(inv_std), false);
  Var<Real> out = t->alloc(std::move(xhat), t->needs_grad(a.id));
  if (t->needs_grad(out.id))
    t->on_backward(out, [t, a, isv, out, c] {
      const Mat<Real>& g = t->grad_ref(out.id);
      const Mat<Real>& xh = out.value();
      Mat<Real>& ga = t->grad_ref(a.id);
      for (Eigen::Index i = 0; i < xh.rows(); ++i) {
        Real gmean = g.row(i).mean();
        Real gxmean = g.row(i).dot(xh.row(i)) / Real(c);
        ga.row(i).array() += isv.value()(i, 0) *
            (g.row(i).array() - gmean - xh.row(i).array() * gxmean);
      }
    });
  return out;
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

template <typename Real>
Var<Real> gather_rows(Var<Real> table, std::vector<int> ids) {
  Tape<Real>* t = table.tape;
  Mat<Real> v(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < table.rows(), "gather_rows: id out of range");
    v.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  Var<Real> out = t->alloc(std::move(v), t->needs_grad(table.id));
  if (t->needs_grad(out.id))
    t->on_backward(out, [t, table, out, ids = std::move(ids)] {
      const Mat<Real>& g = t->grad_ref(out.id);
      Mat<Real>& gt = t->grad_ref(table.id);
      for (size_t i = 0; i < ids.size(); ++i)
        gt.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
    });
  return out;
}

// Length regulator: row i of x is repeated counts[i] times, order preserved.
template <typename Real>
Var<Real> repeat_rows(Var<Real> x, const std::vector<int>& counts) {
  Tape<Real>* t = x.tape;
  require(static_cast<Eigen::Index>(counts.size()) == x.rows(),
          "repeat_rows: counts length != rows");
  Eigen::Index total = 0;
  for (int c : counts) {
    require(c >= 0, "repeat_rows: negative count");
    total += c;
  }
  Mat<Real> v(total, x.cols());
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (int k = 0; k < counts[static_cast<size_t>(i)]; ++k) v.row(r++) = x.value().row(i);
  Var<Real> out = t->alloc(std::move(v), t->needs_grad(x.id));
  if (t->needs_grad(out.id))
    t->on_backward(out, [t, x, out, counts] {
      const Mat<Real>& g = t->grad_ref(out.id);
      Mat<Real>& gx = t->grad_ref(x.id);
      Eigen::Index r = 0;
      for (Eigen::Index i = 0; i < gx.rows(); ++i)
        for (int k = 0; k < counts[static_cast<size_t>(i)]; ++k) gx.row(i) += g.row(r++);
    });
  return out;
}

template <typename Real>
Var<Real> slice_rows(Var<Real> x, Eigen::Index start, Eigen::Index n) {
  Tape<Real>* t = x.tape;
  require(start >= 0 && start + n <= x.rows(), "slice_rows: range out of bounds");
  Var<Real> out = t->alloc(x.value().middleRows(start, n), t->needs_grad(x.id));
  if (t->needs_grad(out.id))
    t->on_backward(out, [t, x, out, start, n] {
      t->grad_ref(x.id).middleRows(start, n) += t->grad_ref(out.id);
    });
  return out;
}

// Row-major reshape; the element order is preserved.
template <typename Real>
Var<Real> reshape(Var<Real> a, Eigen::Index rows, Eigen::Index cols) {
  Tape<Real>* t = a.tape;
  require(rows * cols == a.value().size(), "reshape: element count mismatch");
  Mat<Real> v(rows, cols);
  std::copy(a.value().data(), a.value().data() + a.value().size(), v.data());
  Var<Real> out = t->alloc(std::move(v), t->needs_grad(a.id));
  if (t->needs_grad(out.id))
    t->on_backward(out, [t, a, out] {
      const Mat<Real>& g = t->grad_ref(out.id);
      Mat<Real>& ga = t->grad_ref(a.id);
      for (Eigen::Index i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i];
    });
  return out;
}

template <typename Real>
Var<Real> sum_all(Var<Real> a) {
  Tape<Real>* t = a.tape;
  Mat<Real> v(1, 1);
  v(0, 0) = a.value().sum();
  Var<Real> out = t->alloc(std::move(v), t->needs_grad(a.id));
  if (t->needs_grad(out.id))
    t->on_backward(out, [t, a, out] {
      t->grad_ref(a.id).array() += t->grad_ref(out.id)(0, 0);
    });
  return out;
}

template <typename Real>
Var<Real> mean_all(Var<Real> a) {
  return scale(sum_all(a), Real(1) / static_cast<Real>(a.value().size()));
}

template <typename Real>
Var<Real> stop_grad(Var<Real> a) {
  return a.tape->alloc(a.value(), false);
}

// Inverted dropout; pass keep probability via p and an explicit stream.
// p == 0 is an exact no-op (evaluation mode).
template <typename Real>
Var<Real> dropout(Var<Real> a, Real p, RngStream& rng) {
  if (p <= Real(0)) return a;
  Tape<Real>* t = a.tape;
  Mat<Real> mask(a.rows(), a.cols());
  const Real inv_keep = Real(1) / (Real(1) - p);
  for (Eigen::Index i = 0; i < mask.rows(); ++i)
    for (Eigen::Index j = 0; j < mask.cols(); ++j)
      mask(i, j) = rng.uniform() >= static_cast<double>(p) ? inv_keep : Real(0);
  Var<Real> mv = t->alloc(std::move(mask), false);
  return mul(a, mv);
}

// ---------------------------------------------------------------------------
// Distance / convolution ops
// ---------------------------------------------------------------------------

// out[t, i] = ||q_t - k_i||^2
template <typename Real>
Var<Real> pairwise_sqdist(Var<Real> q, Var<Real> k) {
  Tape<Real>* t = ops_detail::same_tape(q, k);
  require(q.cols() == k.cols(), "pairwise_sqdist: dim mismatch");
  Mat<Real> qs = q.value().rowwise().squaredNorm();
  Mat<Real> ks = k.value().rowwise().squaredNorm();
  Mat<Real> v = (-2 * q.value() * k.value().transpose());
  v.colwise() += qs.col(0);
  v.rowwise() += ks.col(0).transpose();
  Var<Real> out = t->alloc(std::move(v), t->needs_grad(q.id) || t->needs_grad(k.id));
  if (t->needs_grad(out.id))
    t->on_backward(out, [t, q, k, out] {
      const Mat<Real>& g = t->grad_ref(out.id);
      if (t->needs_grad(q.id)) {
        Mat<Real> rsum = g.rowwise().sum();
        Mat<Real>& gq = t->grad_ref(q.id);
        gq.noalias() += Real(2) * (q.value().cwiseProduct(rsum.replicate(1, q.cols())) -
                                   g * k.value());
      }
      if (t->needs_grad(k.id)) {
        Mat<Real> csum = g.colwise().sum().transpose();
        Mat<Real>& gk = t->grad_ref(k.id);
        gk.noalias() += Real(2) * (k.value().cwiseProduct(csum.replicate(1, k.cols())) -
                                   g.transpose() * q.value());
      }
    });
  return out;
}

namespace ops_detail {

// im2col for 1D conv with same zero padding: row t holds the window around t,
// laid out channel-major (column index = ci * k + j).
template <typename Real>
Mat<Real> im2col(const Mat<Real>& x, int k) {
  const Eigen::Index rows = x.rows(), cin = x.cols();
  const int pad = (k - 1) / 2;
  Mat<Real> col = Mat<Real>::Zero(rows, cin * k);
  for (int j = 0; j < k; ++j) {
    Eigen::Index src0 = std::max<Eigen::Index>(0, pad - j);
    Eigen::Index dst0 = std::max<Eigen::Index>(0, j - pad);
    Eigen::Index n = rows - src0 - dst0;
    if (n <= 0) continue;
    for (Eigen::Index ci = 0; ci < cin; ++ci)
      col.block(src0, ci * k + j, n, 1) = x.block(dst0, ci, n, 1);
  }
  return col;
}

}  // namespace ops_detail

// 1D convolution over time with same zero padding (odd k).
// x: T x Cin, w: Cout x (Cin*k). Bias is added separately via add_rowvec.
template <typename Real>
Var<Real> conv1d(Var<Real> x, Var<Real> w, int k) {
  Tape<Real>* t = ops_detail::same_tape(x, w);
  require(k % 2 == 1, "conv1d: kernel must be odd");
  require(w.cols() == x.cols() * k, "conv1d: weight shape mismatch");
  Mat<Real> col = ops_detail::im2col(x.value(), k);
  Var<Real> colv = t->alloc(std::move(col), false);
  Var<Real> out = t->alloc(colv.value() * w.value().transpose(),
                           t->needs_grad(x.id) || t->needs_grad(w.id));
  if (t->needs_grad(out.id))
    t->on_backward(out, [t, x, w, colv, out, k] {
      const Mat<Real>& g = t->grad_ref(out.id);
      if (t->needs_grad(w.id)) t->grad_ref(w.id).noalias() += g.transpose() * colv.value();
      if (t->needs_grad(x.id)) {
        Mat<Real> gcol = g * w.value();  // T x (Cin*k)
        Mat<Real>& gx = t->grad_ref(x.id);
        const int pad = (k - 1) / 2;
        const Eigen::Index rows = gx.rows(), cin = gx.cols();
        for (int j = 0; j < k; ++j) {
          Eigen::Index src0 = std::max<Eigen::Index>(0, pad - j);
          Eigen::Index dst0 = std::max<Eigen::Index>(0, j - pad);
          Eigen::Index n = rows - src0 - dst0;
          if (n <= 0) continue;
          for (Eigen::Index ci = 0; ci < cin; ++ci)
            gx.block(dst0, ci, n, 1) += gcol.block(src0, ci * k + j, n, 1);
        }
      }
    });
  return out;
}

// Depthwise 1D convolution: each channel has its own k-tap kernel.
// x: T x C, w: C x k (same zero padding, odd k).
template <typename Real>
Var<Real> depthwise_conv1d(Var<Real> x, Var<Real> w) {
  Tape<Real>* t = ops_detail::same_tape(x, w);
  const int k = static_cast<int>(w.cols());
  require(k % 2 == 1, "depthwise_conv1d: kernel must be odd");
  require(w.rows() == x.cols(), "depthwise_conv1d: channel mismatch");
  const int pad = (k - 1) / 2;
  const Eigen::Index rows = x.rows();
  Mat<Real> v = Mat<Real>::Zero(rows, x.cols());
  for (int j = 0; j < k; ++j) {
    Eigen::Index src0 = std::max<Eigen::Index>(0, j - pad);
    Eigen::Index dst0 = std::max<Eigen::Index>(0, pad - j);
    Eigen::Index n = rows - src0 - dst0;
    if (n <= 0) continue;
    v.middleRows(dst0, n).array() +=
        x.value().middleRows(src0, n).array().rowwise() *
        w.value().col(j).transpose().array();
  }
  Var<Real> out = t->alloc(std::move(v), t->needs_grad(x.id) || t->needs_grad(w.id));
  if (t->needs_grad(out.id))
    t->on_backward(out, [t, x, w, out, k, pad, rows] {
      const Mat<Real>& g = t->grad_ref(out.id);
      for (int j = 0; j < k; ++j) {
        Eigen::Index src0 = std::max<Eigen::Index>(0, j - pad);
        Eigen::Index dst0 = std::max<Eigen::Index>(0, pad - j);
        Eigen::Index n = rows - src0 - dst0;
        if (n <= 0) continue;
        if (t->needs_grad(w.id))
          t->grad_ref(w.id).col(j) +=
              (g.middleRows(dst0, n).array() * x.value().middleRows(src0, n).array())
                  .colwise().sum().transpose().matrix();
        if (t->needs_grad(x.id))
          t->grad_ref(x.id).middleRows(src0, n).array() +=
              g.middleRows(dst0, n).array().rowwise() *
              w.value().col(j).transpose().array();
      }
    });
  return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Mean absolute error. Optional per-row weights: the mean then runs over
// weighted rows only (sum_t w_t * sum_c |.| / (sum_t w_t * C)).
template <typename Real>
Var<Real> l1_mean(Var<Real> pred, const Mat<Real>& target,
                  const std::vector<Real>* row_weights = nullptr) {
  Tape<Real>* t = pred.tape;
  require(pred.rows() == target.rows() && pred.cols() == target.cols(),
          "l1_mean: shape mismatch");
  Mat<Real> diff = pred.value() - target;
  Real denom;
  Real total = 0;
  if (row_weights) {
    require(static_cast<Eigen::Index>(row_weights->size()) == pred.rows(),
            "l1_mean: weight length mismatch");
    Real wsum = 0;
    for (Eigen::Index i = 0; i < diff.rows(); ++i) {
      total += (*row_weights)[static_cast<size_t>(i)] * diff.row(i).array().abs().sum();
      wsum += (*row_weights)[static_cast<size_t>(i)];
    }
    denom = std::max(wsum * static_cast<Real>(pred.cols()), Real(1e-12));
  } else {
    total = diff.array().abs().sum();
    denom = static_cast<Real>(diff.size());
  }
  Mat<Real> v(1, 1);
  v(0, 0) = total / denom;
  Var<Real> out = t->alloc(std::move(v), t->needs_grad(pred.id));
  if (t->needs_grad(out.id)) {
    // Keep sign matrix; zero where diff == 0 (subgradient choice).
    Mat<Real> sgn = diff.array().sign().matrix();
    if (row_weights)
      for (Eigen::Index i = 0; i < sgn.rows(); ++i)
        sgn.row(i) *= (*row_weights)[static_cast<size_t>(i)];
    Var<Real> sv = t->alloc(std::move(sgn), false);
    t->on_backward(out, [t, pred, sv, out, denom] {
      t->grad_ref(pred.id) += (t->grad_ref(out.id)(0, 0) / denom) * sv.value();
    });
  }
  return out;
}

// Summed binary cross-entropy on logits (targets in {0,1}), with the
// probability clamped to [1e-7, 1 - 1e-7] inside the logs.
template <typename Real>
Var<Real> bce_logits_sum(Var<Real> logits, const Mat<Real>& targets) {
  Tape<Real>* t = logits.tape;
  require(logits.rows() == targets.rows() && logits.cols() == targets.cols(),
          "bce_logits_sum: shape mismatch");
  const Real pmin = Real(1e-7), pmax = Real(1) - Real(1e-7);
  Mat<Real> p = (Real(1) / (Real(1) + (-logits.value().array()).exp())).matrix();
  Real loss = 0;
  Mat<Real> gbuf(p.rows(), p.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      Real pc = std::min(std::max(p(i, j), pmin), pmax);
      Real tv = targets(i, j);
      loss -= tv * std::log(pc) + (Real(1) - tv) * std::log(Real(1) - pc);
      // d/dlogit inside the clamp region is (p - t); zero where clamped.
      gbuf(i, j) = (p(i, j) > pmin && p(i, j) < pmax) ? (p(i, j) - tv) : Real(0);
    }
  Mat<Real> v(1, 1);
  v(0, 0) = loss;
  Var<Real> out = t->alloc(std::move(v), t->needs_grad(logits.id));
  if (t->needs_grad(out.id)) {
    Var<Real> gv = t->alloc(std::move(gbuf), false);
    t->on_backward(out, [t, logits, gv, out] {
      t->grad_ref(logits.id) += t->grad_ref(out.id)(0, 0) * gv.value();
    });
  }
  return out;
}

}  // namespace dtts::nn
