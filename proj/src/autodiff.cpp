// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2c/autodiff.hpp"

#include <cmath>
#include <limits>

namespace s2c::ad {
namespace {

void CheckSame(const Var& a, const Var& b, const char* op) {
  if (a.tape() != b.tape()) throw Error(std::string(op) + ": operands on different tapes");
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                std::to_string(b.cols()));
}

}  // namespace

const Mat& Var::value() const { return tape_->value(id_); }
const Mat& Var::grad() const { return tape_->grad(id_); }

Var Tape::Constant(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), false, nullptr, nullptr});
  return Var(this, int(nodes_.size()) - 1);
}

Var Tape::Leaf(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), true, nullptr, nullptr});
  return Var(this, int(nodes_.size()) - 1);
}

Var Tape::Param(const Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var(this, it->second);
  const bool trainable = p.trainable;
  bound_[&p] = int(nodes_.size());
  nodes_.push_back(Node{p.value, Mat(), trainable, trainable ? &p : nullptr, nullptr});
  return Var(this, int(nodes_.size()) - 1);
}

Var Tape::Push(Mat value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return Push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
              std::move(fn));
}

Var Tape::Push(Mat value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (const Var& v : inputs) {
    if (v.tape() != this) throw Error("operand belongs to a different tape");
    needs = needs || requires_grad(v.id());
  }
  nodes_.push_back(Node{std::move(value), Mat(), needs, nullptr,
                        needs ? std::move(fn) : BackwardFn()});
  return Var(this, int(nodes_.size()) - 1);
}

void Tape::Backward(const Var& root, double seed) {
  if (root.tape() != this) throw Error("Backward: root on another tape");
  Node& r = nodes_[std::size_t(root.id())];
  if (!r.requires_grad) return;
  r.grad = Mat::Constant(r.value.rows(), r.value.cols(), seed);
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[std::size_t(id)];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param != nullptr) {
      if (n.param->grad.size() == 0) n.param->ZeroGrad();
      n.param->grad += n.grad;
    }
  }
}

// ---- arithmetic -----------------------------------------------------------

Var MatMul(const Var& a, const Var& b) {
  if (a.cols() != b.rows())
    throw Error("MatMul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                std::to_string(b.rows()));
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  return t.Push(a.value() * b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad(self);
    if (t.requires_grad(ia)) t.Accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.Accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var Add(const Var& a, const Var& b) {
  CheckSame(a, b, "Add");
  const int ia = a.id(), ib = b.id();
  return a.tape()->Push(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    t.Accumulate(ia, t.grad(self));
    t.Accumulate(ib, t.grad(self));
  });
}

Var Sub(const Var& a, const Var& b) {
  CheckSame(a, b, "Sub");
  const int ia = a.id(), ib = b.id();
  return a.tape()->Push(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    t.Accumulate(ia, t.grad(self));
    t.Accumulate(ib, -t.grad(self));
  });
}

Var Mul(const Var& a, const Var& b) {
  CheckSame(a, b, "Mul");
  const int ia = a.id(), ib = b.id();
  return a.tape()->Push(a.value().cwiseProduct(b.value()), {a, b},
                        [ia, ib](Tape& t, int self) {
                          const Mat& g = t.grad(self);
                          t.Accumulate(ia, g.cwiseProduct(t.value(ib)));
                          t.Accumulate(ib, g.cwiseProduct(t.value(ia)));
                        });
}

Var Scale(const Var& a, double s) {
  const int ia = a.id();
  return a.tape()->Push(a.value() * s, {a}, [ia, s](Tape& t, int self) {
    t.Accumulate(ia, t.grad(self) * s);
  });
}

Var AddRow(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw Error("AddRow: row must be 1 x " + std::to_string(a.cols()));
  const int ia = a.id(), ib = row.id();
  Mat out = a.value().rowwise() + row.value().row(0);
  return a.tape()->Push(std::move(out), {a, row}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad(self);
    t.Accumulate(ia, g);
    if (t.requires_grad(ib)) t.Accumulate(ib, g.colwise().sum());
  });
}

Var Tanh(const Var& a) {
  const int ia = a.id();
  Mat y = a.value().array().tanh().matrix();
  return a.tape()->Push(std::move(y), {a}, [ia](Tape& t, int self) {
    const Mat& y = t.value(self);
    t.Accumulate(ia, (t.grad(self).array() * (1.0 - y.array().square())).matrix());
  });
}

Var Sigmoid(const Var& a) {
  const int ia = a.id();
  Mat y = a.value().unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  return a.tape()->Push(std::move(y), {a}, [ia](Tape& t, int self) {
    const Mat& y = t.value(self);
    t.Accumulate(ia, (t.grad(self).array() * y.array() * (1.0 - y.array())).matrix());
  });
}

Var Relu(const Var& a) { return LeakyRelu(a, 0.0); }

Var LeakyRelu(const Var& a, double slope) {
  const int ia = a.id();
  Mat y = a.value().unaryExpr([slope](double v) { return v > 0 ? v : slope * v; });
  return a.tape()->Push(std::move(y), {a}, [ia, slope](Tape& t, int self) {
    const Mat& x = t.value(ia);
    Mat g = t.grad(self);
    for (Eigen::Index i = 0; i < g.size(); ++i)
      if (!(x.data()[i] > 0)) g.data()[i] *= slope;
    t.Accumulate(ia, g);
  });
}

Var Square(const Var& a) {
  const int ia = a.id();
  return a.tape()->Push(a.value().array().square().matrix(), {a}, [ia](Tape& t, int self) {
    t.Accumulate(ia, (2.0 * t.grad(self).array() * t.value(ia).array()).matrix());
  });
}

// ---- shape ----------------------------------------------------------------

Var ConcatCols(std::span<const Var> parts) {
  if (parts.empty()) throw Error("ConcatCols: no inputs");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw Error("ConcatCols: row mismatch");
    cols += p.cols();
  }
  Mat out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    spans.emplace_back(p.id(), c);
    c += p.cols();
  }
  return parts[0].tape()->Push(std::move(out), parts, [spans](Tape& t, int self) {
    const Mat& g = t.grad(self);
    for (auto [id, c0] : spans)
      if (t.requires_grad(id)) t.Accumulate(id, g.middleCols(c0, t.value(id).cols()));
  });
}

Var ConcatRows(std::span<const Var> parts) {
  if (parts.empty()) throw Error("ConcatRows: no inputs");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw Error("ConcatRows: column mismatch");
    rows += p.rows();
  }
  Mat out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    spans.emplace_back(p.id(), r);
    r += p.rows();
  }
  return parts[0].tape()->Push(std::move(out), parts, [spans](Tape& t, int self) {
    const Mat& g = t.grad(self);
    for (auto [id, r0] : spans)
      if (t.requires_grad(id)) t.Accumulate(id, g.middleRows(r0, t.value(id).rows()));
  });
}

Var SliceRows(const Var& a, Eigen::Index r0, Eigen::Index n) {
  if (r0 < 0 || n < 0 || r0 + n > a.rows()) throw Error("SliceRows: out of range");
  const int ia = a.id();
  return a.tape()->Push(a.value().middleRows(r0, n), {a}, [ia, r0](Tape& t, int self) {
    t.AccumulateBlock(ia, r0, 0, t.grad(self));
  });
}

Var SliceCols(const Var& a, Eigen::Index c0, Eigen::Index n) {
  if (c0 < 0 || n < 0 || c0 + n > a.cols()) throw Error("SliceCols: out of range");
  const int ia = a.id();
  return a.tape()->Push(a.value().middleCols(c0, n), {a}, [ia, c0](Tape& t, int self) {
    t.AccumulateBlock(ia, 0, c0, t.grad(self));
  });
}

Var Reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) throw Error("Reshape: size mismatch");
  const int ia = a.id();
  const Eigen::Index r0 = a.rows(), c0 = a.cols();
  Mat out = Eigen::Map<const Mat>(a.value().data(), rows, cols);
  return a.tape()->Push(std::move(out), {a}, [ia, r0, c0](Tape& t, int self) {
    t.Accumulate(ia, Eigen::Map<const Mat>(t.grad(self).data(), r0, c0));
  });
}

Var Transpose(const Var& a) {
  const int ia = a.id();
  return a.tape()->Push(a.value().transpose(), {a}, [ia](Tape& t, int self) {
    t.Accumulate(ia, t.grad(self).transpose());
  });
}

Var RepeatRows(const Var& a, int times) {
  if (times < 1) throw Error("RepeatRows: factor must be >= 1");
  const int ia = a.id();
  const Eigen::Index rows = a.rows();
  Mat out(rows * times, a.cols());
  for (Eigen::Index r = 0; r < rows; ++r)
    for (int j = 0; j < times; ++j) out.row(r * times + j) = a.value().row(r);
  return a.tape()->Push(std::move(out), {a}, [ia, rows, times](Tape& t, int self) {
    const Mat& g = t.grad(self);
    Mat acc = Mat::Zero(rows, g.cols());
    for (Eigen::Index r = 0; r < rows; ++r)
      for (int j = 0; j < times; ++j) acc.row(r) += g.row(r * times + j);
    t.Accumulate(ia, acc);
  });
}

Var GatherRows(const Var& a, std::span<const int> index) {
  std::vector<int> idx(index.begin(), index.end());
  Mat out(Eigen::Index(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= a.rows()) throw Error("GatherRows: index out of range");
    out.row(Eigen::Index(i)) = a.value().row(idx[i]);
  }
  const int ia = a.id();
  return a.tape()->Push(std::move(out), {a}, [ia, idx](Tape& t, int self) {
    const Mat& g = t.grad(self);
    Mat& ga = t.MutableGrad(ia);
    for (std::size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(Eigen::Index(i));
  });
}

Var Im2Col(const Var& a, int kernel, int stride, int pad_left, int pad_right) {
  const Eigen::Index T = a.rows(), C = a.cols();
  const Eigen::Index span = T + pad_left + pad_right - kernel;
  if (kernel < 1 || stride < 1 || span < 0) throw Error("Im2Col: bad geometry");
  const Eigen::Index out_rows = span / stride + 1;
  Mat out = Mat::Zero(out_rows, kernel * C);
  const Mat& x = a.value();
  for (Eigen::Index o = 0; o < out_rows; ++o)
    for (int j = 0; j < kernel; ++j) {
      const Eigen::Index src = o * stride + j - pad_left;
      if (src >= 0 && src < T) out.block(o, j * C, 1, C) = x.row(src);
    }
  const int ia = a.id();
  return a.tape()->Push(std::move(out), {a},
                        [ia, kernel, stride, pad_left, T, C, out_rows](Tape& t, int self) {
                          const Mat& g = t.grad(self);
                          Mat& ga = t.MutableGrad(ia);
                          for (Eigen::Index o = 0; o < out_rows; ++o)
                            for (int j = 0; j < kernel; ++j) {
                              const Eigen::Index src = o * stride + j - pad_left;
                              if (src >= 0 && src < T) ga.row(src) += g.block(o, j * C, 1, C);
                            }
                        });
}

Var StopGradient(const Var& a) { return a.tape()->Constant(a.value()); }

Var StraightThrough(const Var& z, const Var& quantized) {
  CheckSame(z, quantized, "StraightThrough");
  const int iz = z.id();
  Tape& t = *z.tape();
  return t.Push(quantized.value(), {z}, [iz](Tape& t, int self) {
    t.Accumulate(iz, t.grad(self));
  });
}

// ---- reductions -----------------------------------------------------------

Var Sum(const Var& a) {
  const int ia = a.id();
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->Push(std::move(out), {a}, [ia](Tape& t, int self) {
    const Mat& x = t.value(ia);
    t.Accumulate(ia, Mat::Constant(x.rows(), x.cols(), t.grad(self)(0, 0)));
  });
}

Var Mean(const Var& a) {
  const double n = double(a.value().size());
  if (n == 0) throw Error("Mean of empty matrix");
  return Scale(Sum(a), 1.0 / n);
}

Var RowNorms(const Var& a) {
  const int ia = a.id();
  Mat out = a.value().rowwise().norm();
  return a.tape()->Push(std::move(out), {a}, [ia](Tape& t, int self) {
    const Mat& x = t.value(ia);
    const Mat& n = t.value(self);
    const Mat& g = t.grad(self);
    Mat gx = Mat::Zero(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      if (n(r, 0) > 0) gx.row(r) = x.row(r) * (g(r, 0) / n(r, 0));
    t.Accumulate(ia, gx);
  });
}

Var FillColumns(const Var& a, std::span<const int> cols, double fill) {
  std::vector<int> c(cols.begin(), cols.end());
  Mat out = a.value();
  for (int col : c) {
    if (col < 0 || col >= out.cols()) throw Error("FillColumns: column out of range");
    out.col(col).setConstant(fill);
  }
  const int ia = a.id();
  return a.tape()->Push(std::move(out), {a}, [ia, c](Tape& t, int self) {
    Mat g = t.grad(self);
    for (int col : c) g.col(col).setZero();
    t.Accumulate(ia, g);
  });
}

Var SoftmaxRows(const Var& a, const std::vector<bool>& mask) {
  const Mat& x = a.value();
  if (!mask.empty() && Eigen::Index(mask.size()) != x.cols())
    throw Error("SoftmaxRows: mask size mismatch");
  Mat y = Mat::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (mask.empty() || mask[std::size_t(c)]) m = std::max(m, x(r, c));
    if (!std::isfinite(m)) throw Error("softmax: all positions masked");
    double z = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (mask.empty() || mask[std::size_t(c)]) {
        y(r, c) = std::exp(x(r, c) - m);
        z += y(r, c);
      }
    y.row(r) /= z;
  }
  const int ia = a.id();
  return a.tape()->Push(std::move(y), {a}, [ia](Tape& t, int self) {
    const Mat& y = t.value(self);
    const Mat& g = t.grad(self);
    Mat gx(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = g.row(r).dot(y.row(r));
      gx.row(r) = y.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
    }
    t.Accumulate(ia, gx);
  });
}

Var CrossEntropy(const Var& logits, std::span<const int> targets) {
  const Mat& x = logits.value();
  if (Eigen::Index(targets.size()) != x.rows())
    throw Error("CrossEntropy: need one target per row");
  if (x.rows() == 0) throw Error("CrossEntropy: empty sequence");
  std::vector<int> tgt(targets.begin(), targets.end());
  Mat prob(x.rows(), x.cols());
  double loss = 0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const int y = tgt[std::size_t(r)];
    if (y < 0 || y >= x.cols())
      throw Error("target token " + std::to_string(y) + " outside vocabulary of " +
                  std::to_string(x.cols()));
    const double m = x.row(r).maxCoeff();
    double z = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) z += std::exp(x(r, c) - m);
    const double lse = m + std::log(z);
    for (Eigen::Index c = 0; c < x.cols(); ++c) prob(r, c) = std::exp(x(r, c) - lse);
    loss += lse - x(r, y);
  }
  const double T = double(x.rows());
  Mat out(1, 1);
  out(0, 0) = loss / T;
  const int ia = logits.id();
  return logits.tape()->Push(std::move(out), {logits},
                             [ia, tgt, prob = std::move(prob), T](Tape& t, int self) {
                               Mat g = prob;
                               for (std::size_t r = 0; r < tgt.size(); ++r)
                                 g(Eigen::Index(r), tgt[r]) -= 1.0;
                               t.Accumulate(ia, g * (t.grad(self)(0, 0) / T));
                             });
}

Var BatchNorm(const Var& x, const Var& gamma, const Var& beta,
              Parameter& running_mean, Parameter& running_var, double momentum,
              double eps) {
  Tape& tape = *x.tape();
  const Mat& v = x.value();
  const Eigen::Index C = v.cols();
  if (gamma.cols() != C || beta.cols() != C) throw Error("BatchNorm: width mismatch");
  Eigen::RowVectorXd mean, var;
  if (tape.training() && v.rows() > 0) {
    mean = v.colwise().mean();
    var = (v.rowwise() - mean).array().square().colwise().mean();
    running_mean.value = (1 - momentum) * running_mean.value + momentum * Mat(mean);
    running_var.value = (1 - momentum) * running_var.value + momentum * Mat(var);
    RoundToFloat(running_mean.value);
    RoundToFloat(running_var.value);
  } else {
    mean = running_mean.value.row(0);
    var = running_var.value.row(0);
  }
  const Eigen::RowVectorXd inv_std = (var.array() + eps).rsqrt().matrix();
  Mat xhat = ((v.rowwise() - mean).array().rowwise() * inv_std.array()).matrix();
  Mat y = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix().rowwise() +
          beta.value().row(0);
  const bool batch_stats = tape.training();
  const int ix = x.id(), ig = gamma.id(), ib = beta.id();
  return tape.Push(std::move(y), {x, gamma, beta},
                   [ix, ig, ib, xhat = std::move(xhat), inv_std, batch_stats](Tape& t, int self) {
                     const Mat& g = t.grad(self);
                     const Eigen::RowVectorXd gam = t.value(ig).row(0);
                     if (t.requires_grad(ig))
                       t.Accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
                     if (t.requires_grad(ib)) t.Accumulate(ib, g.colwise().sum());
                     if (!t.requires_grad(ix)) return;
                     Mat gxhat = (g.array().rowwise() * gam.array()).matrix();
                     if (!batch_stats) {
                       t.Accumulate(ix, (gxhat.array().rowwise() * inv_std.array()).matrix());
                       return;
                     }
                     const Eigen::RowVectorXd m1 = gxhat.colwise().mean();
                     const Eigen::RowVectorXd m2 = gxhat.cwiseProduct(xhat).colwise().mean();
                     Mat gx = gxhat.rowwise() - m1;
                     gx -= (xhat.array().rowwise() * m2.array()).matrix();
                     t.Accumulate(ix, (gx.array().rowwise() * inv_std.array()).matrix());
                   });
}

}  // namespace s2c::ad
