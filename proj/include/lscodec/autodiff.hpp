// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "lscodec/common.hpp"

namespace lsc {

/// Handle into a Tape. Only valid for the tape that produced it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode autodiff over dense matrices. The tape is rebuilt every step:
/// operations record their inputs and a backward closure, and backward() runs
/// the closures in reverse creation order. Values are computed eagerly so the
/// tape doubles as the forward pass.
///
/// All matrices are (rows x cols); sequence data uses rows for time steps and
/// cols for channels. Real is float for training and double for
/// finite-difference gradient checks.
template <typename Real>
class Tape {
 public:
  using Mat = MatX<Real>;

  struct Node {
    Mat value;
    Mat grad;
    std::function<void()> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void reset() {
    nodes_.clear();
    leaves_.clear();
  }

  std::size_t size() const { return nodes_.size(); }

  const Mat& value(Var v) const { return at(v).value; }
  const Mat& grad(Var v) const { return at(v).grad; }

  /// Trainable leaf. The external gradient accumulator receives this pass's
  /// gradient when backward() finishes.
  Var leaf(const Mat& value, Mat* external_grad) {
    Var v = push(value);
    if (external_grad != nullptr) {
      check_arg(external_grad->rows() == value.rows() && external_grad->cols() == value.cols(),
                "external gradient shape mismatch");
      leaves_.push_back({v.id, external_grad});
    }
    return v;
  }

  /// Non-differentiable input.
  Var constant(Mat value) { return push(std::move(value)); }

  Var add(Var a, Var b) {
    same_shape(a, b, "add");
    Var out = push(at(a).value + at(b).value);
    record(out, [this, out, a, b] {
      at(a).grad += at(out).grad;
      at(b).grad += at(out).grad;
    });
    return out;
  }

  Var sub(Var a, Var b) {
    same_shape(a, b, "sub");
    Var out = push(at(a).value - at(b).value);
    record(out, [this, out, a, b] {
      at(a).grad += at(out).grad;
      at(b).grad -= at(out).grad;
    });
    return out;
  }

  /// Elementwise product.
  Var cmul(Var a, Var b) {
    same_shape(a, b, "cmul");
    Var out = push(at(a).value.cwiseProduct(at(b).value));
    record(out, [this, out, a, b] {
      at(a).grad += at(out).grad.cwiseProduct(at(b).value);
      at(b).grad += at(out).grad.cwiseProduct(at(a).value);
    });
    return out;
  }

  Var scale(Var a, Real s) {
    Var out = push(Mat(at(a).value * s));
    record(out, [this, out, a, s] { at(a).grad += at(out).grad * s; });
    return out;
  }

  Var add_scalar(Var a, Real s) {
    Var out = push(Mat((at(a).value.array() + s).matrix()));
    record(out, [this, out, a] { at(a).grad += at(out).grad; });
    return out;
  }

  /// Broadcasts a (1 x C) row over every row of X.
  Var add_rowvec(Var x, Var row) {
    check_arg(at(row).value.rows() == 1 && at(row).value.cols() == at(x).value.cols(),
              "add_rowvec: row must be 1 x cols(X)");
    Mat y = at(x).value;
    y.rowwise() += at(row).value.row(0);
    Var out = push(std::move(y));
    record(out, [this, out, x, row] {
      at(x).grad += at(out).grad;
      at(row).grad.row(0) += at(out).grad.colwise().sum();
    });
    return out;
  }

  /// C = A * B.
  Var matmul(Var a, Var b) {
    check_arg(at(a).value.cols() == at(b).value.rows(), "matmul: inner dimensions differ");
    Var out = push(Mat(at(a).value * at(b).value));
    record(out, [this, out, a, b] {
      at(a).grad.noalias() += at(out).grad * at(b).value.transpose();
      at(b).grad.noalias() += at(a).value.transpose() * at(out).grad;
    });
    return out;
  }

  /// C = A * B^T.
  Var matmul_nt(Var a, Var b) {
    check_arg(at(a).value.cols() == at(b).value.cols(), "matmul_nt: inner dimensions differ");
    Var out = push(Mat(at(a).value * at(b).value.transpose()));
    record(out, [this, out, a, b] {
      at(a).grad.noalias() += at(out).grad * at(b).value;
      at(b).grad.noalias() += at(out).grad.transpose() * at(a).value;
    });
    return out;
  }

  Var slice_cols(Var a, int start, int n) {
    check_arg(start >= 0 && n > 0 && start + n <= at(a).value.cols(),
              "slice_cols: range out of bounds");
    Var out = push(Mat(at(a).value.middleCols(start, n)));
    record(out, [this, out, a, start, n] { at(a).grad.middleCols(start, n) += at(out).grad; });
    return out;
  }

  Var slice_rows(Var a, int start, int n) {
    check_arg(start >= 0 && n > 0 && start + n <= at(a).value.rows(),
              "slice_rows: range out of bounds");
    Var out = push(Mat(at(a).value.middleRows(start, n)));
    record(out, [this, out, a, start, n] { at(a).grad.middleRows(start, n) += at(out).grad; });
    return out;
  }

  Var concat_cols(Var a, Var b) {
    check_arg(at(a).value.rows() == at(b).value.rows(), "concat_cols: row counts differ");
    Mat v(at(a).value.rows(), at(a).value.cols() + at(b).value.cols());
    v << at(a).value, at(b).value;
    Var out = push(std::move(v));
    const int ca = static_cast<int>(at(a).value.cols());
    const int cb = static_cast<int>(at(b).value.cols());
    record(out, [this, out, a, b, ca, cb] {
      at(a).grad += at(out).grad.leftCols(ca);
      at(b).grad += at(out).grad.rightCols(cb);
    });
    return out;
  }

  /// Keeps rows offset, offset+stride, ... producing floor(rows/stride) rows,
  /// the row-wise dual of a strided convolution (used for residual skips).
  Var subsample_rows(Var a, int stride, int offset) {
    const auto rows_in = at(a).value.rows();
    check_arg(stride >= 1 && offset >= 0 && offset < stride, "subsample_rows: bad stride/offset");
    const auto rows_out = rows_in / stride;
    check_arg(rows_out >= 1, "subsample_rows: input too short");
    Mat v(rows_out, at(a).value.cols());
    for (Eigen::Index r = 0; r < rows_out; ++r) v.row(r) = at(a).value.row(r * stride + offset);
    Var out = push(std::move(v));
    record(out, [this, out, a, stride, offset] {
      for (Eigen::Index r = 0; r < at(out).grad.rows(); ++r)
        at(a).grad.row(r * stride + offset) += at(out).grad.row(r);
    });
    return out;
  }

  /// Duplicates every row `repeat` times in place order (r0, r0, r1, r1, ...).
  Var repeat_rows(Var a, int repeat) {
    check_arg(repeat >= 1, "repeat_rows: repeat must be >= 1");
    const auto rows = at(a).value.rows();
    Mat v(rows * repeat, at(a).value.cols());
    for (Eigen::Index r = 0; r < rows; ++r)
      for (int j = 0; j < repeat; ++j) v.row(r * repeat + j) = at(a).value.row(r);
    Var out = push(std::move(v));
    record(out, [this, out, a, repeat] {
      const auto rows_in = at(a).grad.rows();
      for (Eigen::Index r = 0; r < rows_in; ++r)
        for (int j = 0; j < repeat; ++j) at(a).grad.row(r) += at(out).grad.row(r * repeat + j);
    });
    return out;
  }

  Var sigmoid(Var a) {
    Mat y = ((-at(a).value.array()).exp() + Real(1)).inverse().matrix();
    Var out = push(std::move(y));
    record(out, [this, out, a] {
      const auto y2 = at(out).value.array();
      at(a).grad.array() += at(out).grad.array() * y2 * (Real(1) - y2);
    });
    return out;
  }

  Var tanh_act(Var a) {
    Var out = push(Mat(at(a).value.array().tanh().matrix()));
    record(out, [this, out, a] {
      at(a).grad.array() += at(out).grad.array() * (Real(1) - at(out).value.array().square());
    });
    return out;
  }

  /// x * sigmoid(x), the swish activation.
  Var silu(Var a) {
    Mat sig = ((-at(a).value.array()).exp() + Real(1)).inverse().matrix();
    Var out = push(Mat(at(a).value.cwiseProduct(sig)));
    record(out, [this, out, a, sig = std::move(sig)] {
      const auto s = sig.array();
      const auto x = at(a).value.array();
      at(a).grad.array() += at(out).grad.array() * (s + x * s * (Real(1) - s));
    });
    return out;
  }

  /// Elementwise sqrt(x + eps); eps keeps the gradient finite at zero.
  Var sqrt_act(Var a, Real eps = Real(1e-8)) {
    Var out = push(Mat((at(a).value.array() + eps).sqrt().matrix()));
    record(out, [this, out, a] {
      at(a).grad.array() += at(out).grad.array() * Real(0.5) / at(out).value.array();
    });
    return out;
  }

  Var exp_act(Var a) {
    Var out = push(Mat(at(a).value.array().exp().matrix()));
    record(out,
           [this, out, a] { at(a).grad.array() += at(out).grad.array() * at(out).value.array(); });
    return out;
  }

  /// Hard clamp. Gradient is identity strictly inside the interval and zero
  /// at or beyond the bounds.
  Var clamp(Var a, Real lo, Real hi) {
    check_arg(lo < hi, "clamp: lo must be below hi");
    Var out = push(Mat(at(a).value.array().min(hi).max(lo).matrix()));
    record(out, [this, out, a, lo, hi] {
      const auto x = at(a).value.array();
      at(a).grad.array() += at(out).grad.array() * (x > lo).template cast<Real>() *
                            (x < hi).template cast<Real>();
    });
    return out;
  }

  /// Per-row layer normalization with learned gain and bias (both 1 x C).
  Var layer_norm(Var x, Var gamma, Var beta, Real eps = Real(1e-5)) {
    const auto& xv = at(x).value;
    check_arg(at(gamma).value.rows() == 1 && at(gamma).value.cols() == xv.cols(),
              "layer_norm: gamma must be 1 x C");
    check_arg(at(beta).value.rows() == 1 && at(beta).value.cols() == xv.cols(),
              "layer_norm: beta must be 1 x C");
    const Real inv_c = Real(1) / static_cast<Real>(xv.cols());
    VecX<Real> mean = xv.rowwise().mean();
    Mat centered = xv;
    centered.colwise() -= mean;
    VecX<Real> inv_std =
        ((centered.array().square().rowwise().sum() * inv_c) + eps).sqrt().inverse().matrix();
    Mat xhat = (centered.array().colwise() * inv_std.array()).matrix();
    Mat y = (xhat.array().rowwise() * at(gamma).value.row(0).array()).matrix();
    y.rowwise() += at(beta).value.row(0);
    Var out = push(std::move(y));
    record(out, [this, out, x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std),
                 inv_c] {
      const Mat& dy = at(out).grad;
      at(beta).grad.row(0) += dy.colwise().sum();
      at(gamma).grad.row(0) += dy.cwiseProduct(xhat).colwise().sum();
      Mat dxhat = (dy.array().rowwise() * at(gamma).value.row(0).array()).matrix();
      VecX<Real> sum_dxhat = dxhat.rowwise().sum();
      VecX<Real> sum_dxhat_xhat = dxhat.cwiseProduct(xhat).rowwise().sum();
      Mat dx = dxhat;
      dx.colwise() -= Eigen::Matrix<Real, Eigen::Dynamic, 1>(sum_dxhat * inv_c);
      dx -= (xhat.array().colwise() * (sum_dxhat_xhat.array() * inv_c)).matrix();
      at(x).grad += (dx.array().colwise() * inv_std.array()).matrix();
    });
    return out;
  }

  Var softmax_rows(Var a) {
    const auto& xv = at(a).value;
    Mat y(xv.rows(), xv.cols());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
      const Real m = xv.row(r).maxCoeff();
      y.row(r) = (xv.row(r).array() - m).exp().matrix();
      y.row(r) /= y.row(r).sum();
    }
    Var out = push(std::move(y));
    record(out, [this, out, a] {
      const Mat& y2 = at(out).value;
      const Mat& dy = at(out).grad;
      for (Eigen::Index r = 0; r < y2.rows(); ++r) {
        const Real dot = dy.row(r).dot(y2.row(r));
        at(a).grad.row(r).array() += (dy.row(r).array() - dot) * y2.row(r).array();
      }
    });
    return out;
  }

  /// 1-D convolution over time (rows). x is (T x Cin), weight is
  /// (Cout x Cin*k) with input channels varying fastest within a tap, bias is
  /// (1 x Cout). Total padding is kernel - stride split evenly, which yields
  /// floor(T / stride) output rows.
  Var conv1d(Var x, Var weight, Var bias, int kernel, int stride) {
    const auto& xv = at(x).value;
    const int cin = static_cast<int>(xv.cols());
    check_arg(kernel >= stride && stride >= 1, "conv1d: need kernel >= stride >= 1");
    check_arg(at(weight).value.cols() == static_cast<Eigen::Index>(cin) * kernel,
              "conv1d: weight columns must be Cin*kernel");
    const int cout = static_cast<int>(at(weight).value.rows());
    check_arg(at(bias).value.rows() == 1 && at(bias).value.cols() == cout,
              "conv1d: bias must be 1 x Cout");
    const int t_in = static_cast<int>(xv.rows());
    check_arg(t_in >= stride, "conv1d: input shorter than stride");
    const int pad_left = (kernel - stride) / 2;
    const int t_out = t_in / stride;

    Mat patches = Mat::Zero(t_out, static_cast<Eigen::Index>(cin) * kernel);
    for (int t = 0; t < t_out; ++t) {
      for (int j = 0; j < kernel; ++j) {
        const int src = t * stride + j - pad_left;
        if (src >= 0 && src < t_in)
          patches.row(t).segment(static_cast<Eigen::Index>(j) * cin, cin) = xv.row(src);
      }
    }
    Mat y = patches * at(weight).value.transpose();
    y.rowwise() += at(bias).value.row(0);
    Var out = push(std::move(y));
    record(out, [this, out, x, weight, bias, patches = std::move(patches), kernel, stride, pad_left,
                 cin, t_in, t_out] {
      const Mat& dy = at(out).grad;
      at(bias).grad.row(0) += dy.colwise().sum();
      at(weight).grad.noalias() += dy.transpose() * patches;
      Mat dpatches = dy * at(weight).value;
      for (int t = 0; t < t_out; ++t) {
        for (int j = 0; j < kernel; ++j) {
          const int src = t * stride + j - pad_left;
          if (src >= 0 && src < t_in)
            at(x).grad.row(src) += dpatches.row(t).segment(static_cast<Eigen::Index>(j) * cin, cin);
        }
      }
    });
    return out;
  }

  /// Depthwise 1-D convolution, stride 1, length preserving. weight is
  /// (C x kernel).
  Var depthwise_conv1d(Var x, Var weight, int kernel) {
    const auto& xv = at(x).value;
    const int c = static_cast<int>(xv.cols());
    check_arg(at(weight).value.rows() == c && at(weight).value.cols() == kernel,
              "depthwise_conv1d: weight must be C x kernel");
    const int t_in = static_cast<int>(xv.rows());
    const int pad_left = (kernel - 1) / 2;
    Mat y = Mat::Zero(t_in, c);
    for (int t = 0; t < t_in; ++t) {
      for (int j = 0; j < kernel; ++j) {
        const int src = t + j - pad_left;
        if (src >= 0 && src < t_in)
          y.row(t).array() += xv.row(src).array() * at(weight).value.col(j).transpose().array();
      }
    }
    Var out = push(std::move(y));
    record(out, [this, out, x, weight, kernel, pad_left, t_in] {
      const Mat& dy = at(out).grad;
      for (int t = 0; t < t_in; ++t) {
        for (int j = 0; j < kernel; ++j) {
          const int src = t + j - pad_left;
          if (src < 0 || src >= t_in) continue;
          at(x).grad.row(src).array() +=
              dy.row(t).array() * at(weight).value.col(j).transpose().array();
          at(weight).grad.col(j) +=
              (dy.row(t).array() * at(x).value.row(src).array()).matrix().transpose();
        }
      }
    });
    return out;
  }

  /// Scalar mean over every element. Result is 1 x 1.
  Var mean_all(Var a) {
    const Real inv_n = Real(1) / static_cast<Real>(at(a).value.size());
    Mat y(1, 1);
    y(0, 0) = at(a).value.sum() * inv_n;
    Var out = push(std::move(y));
    record(out, [this, out, a, inv_n] { at(a).grad.array() += at(out).grad(0, 0) * inv_n; });
    return out;
  }

  Var sum_all(Var a) {
    Mat y(1, 1);
    y(0, 0) = at(a).value.sum();
    Var out = push(std::move(y));
    record(out, [this, out, a] { at(a).grad.array() += at(out).grad(0, 0); });
    return out;
  }

  /// Mean absolute error against a fixed target. Result is 1 x 1.
  Var l1_loss(Var pred, const Mat& target) {
    const auto& pv = at(pred).value;
    check_arg(pv.rows() == target.rows() && pv.cols() == target.cols(), "l1_loss: shape mismatch");
    const Real inv_n = Real(1) / static_cast<Real>(pv.size());
    Mat diff = pv - target;
    Mat y(1, 1);
    y(0, 0) = diff.array().abs().sum() * inv_n;
    Var out = push(std::move(y));
    record(out, [this, out, pred, diff = std::move(diff), inv_n] {
      at(pred).grad.array() += at(out).grad(0, 0) * inv_n * diff.array().sign();
    });
    return out;
  }

  /// Mean negative log likelihood of integer targets under row softmax.
  /// logits is (T x K); targets.size() must be T. Result is 1 x 1.
  Var cross_entropy(Var logits, const std::vector<int>& targets) {
    const auto& lv = at(logits).value;
    check_arg(static_cast<Eigen::Index>(targets.size()) == lv.rows(),
              "cross_entropy: one target per row required");
    const int k = static_cast<int>(lv.cols());
    for (int t : targets) check_arg(t >= 0 && t < k, "cross_entropy: target out of range");
    Mat probs(lv.rows(), lv.cols());
    Real nll = 0;
    for (Eigen::Index r = 0; r < lv.rows(); ++r) {
      const Real m = lv.row(r).maxCoeff();
      probs.row(r) = (lv.row(r).array() - m).exp().matrix();
      probs.row(r) /= probs.row(r).sum();
      nll -= std::log(std::max(probs(r, targets[static_cast<std::size_t>(r)]),
                               std::numeric_limits<Real>::min()));
    }
    const Real inv_t = Real(1) / static_cast<Real>(lv.rows());
    Mat y(1, 1);
    y(0, 0) = nll * inv_t;
    Var out = push(std::move(y));
    record(out, [this, out, logits, probs = std::move(probs), targets, inv_t] {
      Mat d = probs;
      for (Eigen::Index r = 0; r < d.rows(); ++r)
        d(r, targets[static_cast<std::size_t>(r)]) -= Real(1);
      at(logits).grad += at(out).grad(0, 0) * inv_t * d;
    });
    return out;
  }

  /// Straight-through estimator: forward emits the fixed quantized values,
  /// backward passes the gradient to the pre-quantization input unchanged.
  Var straight_through(Var z, const Mat& quantized) {
    const auto& zv = at(z).value;
    check_arg(zv.rows() == quantized.rows() && zv.cols() == quantized.cols(),
              "straight_through: shape mismatch");
    Var out = push(quantized);
    record(out, [this, out, z] { at(z).grad += at(out).grad; });
    return out;
  }

  /// Differentiable surrogate of straight_through for gradient checking:
  /// with the quantizer assignment frozen, q(z) = z + (q0 - z0) where the
  /// offset is constant, so finite differences see the same pass-through
  /// Jacobian the estimator uses.
  Var st_offset(Var z, const Mat& offset) {
    const auto& zv = at(z).value;
    check_arg(zv.rows() == offset.rows() && zv.cols() == offset.cols(),
              "st_offset: shape mismatch");
    Var out = push(Mat(zv + offset));
    record(out, [this, out, z] { at(z).grad += at(out).grad; });
    return out;
  }

  /// Runs the reverse sweep from a scalar node and flushes leaf gradients to
  /// their external accumulators.
  void backward(Var loss) {
    check_arg(at(loss).value.size() == 1, "backward: loss must be scalar");
    for (auto& n : nodes_) n.grad.setZero(n.value.rows(), n.value.cols());
    at(loss).grad(0, 0) = Real(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
      if (it->backward) it->backward();
    for (const auto& [id, external] : leaves_)
      *external += nodes_[static_cast<std::size_t>(id)].grad;
  }

 private:
  Var push(Mat value) {
    Node n;
    n.value = std::move(value);
    n.grad.setZero(n.value.rows(), n.value.cols());
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  void record(Var v, std::function<void()> fn) { at(v).backward = std::move(fn); }

  void same_shape(Var a, Var b, const char* op) {
    check_arg(at(a).value.rows() == at(b).value.rows() && at(a).value.cols() == at(b).value.cols(),
              std::string(op) + ": shape mismatch");
  }

  Node& at(Var v) {
    check_arg(v.id >= 0 && v.id < static_cast<int>(nodes_.size()), "invalid tape handle");
    return nodes_[static_cast<std::size_t>(v.id)];
  }
  const Node& at(Var v) const {
    check_arg(v.id >= 0 && v.id < static_cast<int>(nodes_.size()), "invalid tape handle");
    return nodes_[static_cast<std::size_t>(v.id)];
  }

  std::vector<Node> nodes_;
  std::vector<std::pair<int, Mat*>> leaves_;
};

}  // namespace lsc
