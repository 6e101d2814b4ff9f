// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal reverse-mode automatic differentiation over row-major matrices.
//
// A Tape records every operation of one forward pass. Backward() walks the
// tape in reverse and accumulates gradients into the Parameters that were
// bound with Tape::Param(). Values are double precision; parameters are kept
// float32-representable by the optimizer.

#pragma once

#include <deque>
#include <functional>
#include <unordered_map>
#include <span>
#include <string>
#include <vector>

#include "s2c/common.hpp"

namespace s2c::ad {

struct Parameter {
  std::string name;
  Mat value;
  mutable Mat grad;  // accumulated by Tape::Backward through const bindings
  bool trainable = true;  // false for running statistics

  void ZeroGrad() const { grad = Mat::Zero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a tape. Cheap to copy.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Mat& value() const;
  /// Gradient after Tape::Backward(); empty if none reached this node.
  const Mat& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int)>;

  explicit Tape(bool training = true) : training_(training) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool training() const { return training_; }

  Var Constant(Mat value);
  /// A free leaf that receives gradients (used for probes in tests).
  Var Leaf(Mat value);
  /// Binds a parameter; its gradient is added to p.grad on Backward().
  /// Binding the same parameter twice returns the same node.
  Var Param(const Parameter& p);

  void Backward(const Var& root, double seed = 1.0);

  // Operation plumbing.
  Var Push(Mat value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var Push(Mat value, std::span<const Var> inputs, BackwardFn fn);
  const Mat& value(int id) const { return nodes_[std::size_t(id)].value; }
  const Mat& grad(int id) const { return nodes_[std::size_t(id)].grad; }
  bool requires_grad(int id) const { return nodes_[std::size_t(id)].requires_grad; }

  template <typename Derived>
  void Accumulate(int id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[std::size_t(id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  /// Adds g into a block of node id's gradient, allocating zeros if needed.
  template <typename Derived>
  void AccumulateBlock(int id, Eigen::Index r0, Eigen::Index c0,
                       const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[std::size_t(id)];
    if (!n.requires_grad) return;
    EnsureGrad(n);
    n.grad.block(r0, c0, g.rows(), g.cols()) += g;
  }

  Mat& MutableGrad(int id) {
    Node& n = nodes_[std::size_t(id)];
    EnsureGrad(n);
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    const Parameter* param = nullptr;
    BackwardFn backward;
  };

  static void EnsureGrad(Node& n) {
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  }

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, int> bound_;
  bool training_;
};

// ---- operations -----------------------------------------------------------

Var MatMul(const Var& a, const Var& b);
Var Add(const Var& a, const Var& b);
Var Sub(const Var& a, const Var& b);
Var Mul(const Var& a, const Var& b);
Var Scale(const Var& a, double s);
/// a (T x C) + row (1 x C) broadcast over rows.
Var AddRow(const Var& a, const Var& row);
Var Tanh(const Var& a);
Var Sigmoid(const Var& a);
Var Relu(const Var& a);
Var LeakyRelu(const Var& a, double slope);
Var Square(const Var& a);

Var ConcatCols(std::span<const Var> parts);
Var ConcatRows(std::span<const Var> parts);
Var SliceRows(const Var& a, Eigen::Index r0, Eigen::Index n);
Var SliceCols(const Var& a, Eigen::Index c0, Eigen::Index n);
/// Row-major reinterpretation to rows x cols.
Var Reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);
Var Transpose(const Var& a);
/// Replicates each row `times` times consecutively.
Var RepeatRows(const Var& a, int times);
Var GatherRows(const Var& a, std::span<const int> index);

/// Unfolds a (T x C) sequence into (T_out x k*C) patches for 1-D convolution
/// with zero padding: T_out = (T + pad_l + pad_r - k) / stride + 1.
Var Im2Col(const Var& a, int kernel, int stride, int pad_left, int pad_right);

/// Identity forward, zero derivative backward.
Var StopGradient(const Var& a);
/// Forward value of `quantized`; the incoming gradient is copied to `z`
/// unchanged and nothing flows to `quantized`.
Var StraightThrough(const Var& z, const Var& quantized);

Var Sum(const Var& a);
Var Mean(const Var& a);
/// Euclidean norm of each row, T x 1. Gradient is zero at a zero row.
Var RowNorms(const Var& a);
/// Overwrites the given columns with `fill` (no gradient through them).
Var FillColumns(const Var& a, std::span<const int> cols, double fill);

/// Row-wise softmax. Columns with mask[c] == false get weight exactly 0.
/// An empty mask means every column is valid.
Var SoftmaxRows(const Var& a, const std::vector<bool>& mask = {});

/// Mean over rows of -log softmax(logits[t])[targets[t]].
Var CrossEntropy(const Var& logits, std::span<const int> targets);

/// Per-column normalization over rows. In training mode uses the batch
/// statistics and updates the running estimates; otherwise uses them.
Var BatchNorm(const Var& x, const Var& gamma, const Var& beta,
              Parameter& running_mean, Parameter& running_var,
              double momentum, double eps);

}  // namespace s2c::ad
