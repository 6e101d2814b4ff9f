// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2c/nn.hpp"

#include <cmath>
#include <numbers>

namespace s2c::nn {
namespace {

uint64_t SplitMix(uint64_t& x) {
  uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t Rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

Parameter MakeParam(const std::string& name, Mat value, bool trainable = true) {
  RoundToFloat(value);
  Parameter p;
  p.name = name;
  p.value = std::move(value);
  p.trainable = trainable;
  return p;
}

}  // namespace

Rng::Rng(uint64_t seed) {
  uint64_t x = seed;
  for (auto& s : s_) s = SplitMix(x);
}

uint64_t Rng::Next() {
  const uint64_t result = Rotl(s_[1] * 5, 7) * 9;
  const uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = Rotl(s_[3], 45);
  return result;
}

double Rng::Uniform() { return double(Next() >> 11) * 0x1.0p-53; }

double Rng::Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

double Rng::Normal() {
  double u1 = Uniform();
  while (u1 <= 0.0) u1 = Uniform();
  const double u2 = Uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int Rng::Index(int n) { return int(Next() % uint64_t(n)); }

Mat UniformMat(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.Uniform(-bound, bound);
  return m;
}

// ---- Linear ---------------------------------------------------------------

void Linear::Init(const std::string& name, int in, int out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(double(in));
  weight = MakeParam(name + ".weight", UniformMat(in, out, bound, rng));
  bias = MakeParam(name + ".bias", UniformMat(1, out, bound, rng));
}

void Linear::Collect(ParamList& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

Var Linear::Forward(Tape& t, const Var& x) const {
  return ad::AddRow(ad::MatMul(x, t.Param(weight)), t.Param(bias));
}

// ---- Conv1d ---------------------------------------------------------------

void Conv1d::Init(const std::string& name, int in, int out, int k, int s, bool same,
                  Rng& rng) {
  kernel = k;
  stride = s;
  same_padding = same;
  const double bound = 1.0 / std::sqrt(double(in * k));
  weight = MakeParam(name + ".weight", UniformMat(k * in, out, bound, rng));
  bias = MakeParam(name + ".bias", UniformMat(1, out, bound, rng));
}

void Conv1d::Collect(ParamList& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

Var Conv1d::Forward(Tape& t, const Var& x) const {
  const int pad_l = same_padding ? (kernel - 1) / 2 : 0;
  const int pad_r = same_padding ? kernel - 1 - pad_l : 0;
  Var cols = kernel == 1 && stride == 1 ? x : ad::Im2Col(x, kernel, stride, pad_l, pad_r);
  return ad::AddRow(ad::MatMul(cols, t.Param(weight)), t.Param(bias));
}

// ---- ConvTranspose1d ------------------------------------------------------

void ConvTranspose1d::Init(const std::string& name, int in, int out, int s, Rng& rng) {
  stride = s;
  out_channels = out;
  const double bound = 1.0 / std::sqrt(double(in));
  weight = MakeParam(name + ".weight", UniformMat(in, s * out, bound, rng));
  bias = MakeParam(name + ".bias", UniformMat(1, out, bound, rng));
}

void ConvTranspose1d::Collect(ParamList& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

Var ConvTranspose1d::Forward(Tape& t, const Var& x) const {
  Var y = ad::MatMul(x, t.Param(weight));
  y = ad::Reshape(y, x.rows() * stride, out_channels);
  return ad::AddRow(y, t.Param(bias));
}

// ---- BatchNorm1d ----------------------------------------------------------

void BatchNorm1d::Init(const std::string& name, int channels) {
  gamma = MakeParam(name + ".gamma", Mat::Ones(1, channels));
  beta = MakeParam(name + ".beta", Mat::Zero(1, channels));
  running_mean = MakeParam(name + ".running_mean", Mat::Zero(1, channels), false);
  running_var = MakeParam(name + ".running_var", Mat::Ones(1, channels), false);
}

void BatchNorm1d::Collect(ParamList& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
  out.push_back(&running_mean);
  out.push_back(&running_var);
}

Var BatchNorm1d::Forward(Tape& t, const Var& x) const {
  return ad::BatchNorm(x, t.Param(gamma), t.Param(beta), running_mean, running_var,
                       momentum, eps);
}

// ---- LSTM -----------------------------------------------------------------

void Lstm::Init(const std::string& name, int in, int h, Rng& rng) {
  hidden = h;
  const double bound = 1.0 / std::sqrt(double(h));
  w_input = MakeParam(name + ".w_input", UniformMat(in, 4 * h, bound, rng));
  w_hidden = MakeParam(name + ".w_hidden", UniformMat(h, 4 * h, bound, rng));
  Mat b = UniformMat(1, 4 * h, bound, rng);
  b.middleCols(h, h).setOnes();  // forget gate starts open
  bias = MakeParam(name + ".bias", std::move(b));
}

void Lstm::Collect(ParamList& out) {
  out.push_back(&w_input);
  out.push_back(&w_hidden);
  out.push_back(&bias);
}

Lstm::State Lstm::ZeroState(Tape& t) const {
  return {t.Constant(Mat::Zero(1, hidden)), t.Constant(Mat::Zero(1, hidden))};
}

Lstm::State Lstm::Step(Tape& t, const Var& input_proj, const State& prev) const {
  const int H = hidden;
  Var gates = ad::Add(input_proj, ad::MatMul(prev.h, t.Param(w_hidden)));
  Var i = ad::Sigmoid(ad::SliceCols(gates, 0, H));
  Var f = ad::Sigmoid(ad::SliceCols(gates, H, H));
  Var g = ad::Tanh(ad::SliceCols(gates, 2 * H, H));
  Var o = ad::Sigmoid(ad::SliceCols(gates, 3 * H, H));
  Var c = ad::Add(ad::Mul(f, prev.c), ad::Mul(i, g));
  Var h = ad::Mul(o, ad::Tanh(c));
  return {h, c};
}

Var Lstm::Forward(Tape& t, const Var& x, bool reverse) const {
  const Eigen::Index T = x.rows();
  if (T == 0) throw Error("LSTM over empty sequence");
  Var proj = ad::AddRow(ad::MatMul(x, t.Param(w_input)), t.Param(bias));
  std::vector<Var> hs(static_cast<std::size_t>(T));
  State s = ZeroState(t);
  for (Eigen::Index k = 0; k < T; ++k) {
    const Eigen::Index step = reverse ? T - 1 - k : k;
    s = Step(t, ad::SliceRows(proj, step, 1), s);
    hs[std::size_t(step)] = s.h;
  }
  return ad::ConcatRows(hs);
}

void BiLstm::Init(const std::string& name, int in, int hidden, Rng& rng) {
  forward.Init(name + ".fwd", in, hidden, rng);
  backward.Init(name + ".bwd", in, hidden, rng);
}

void BiLstm::Collect(ParamList& out) {
  forward.Collect(out);
  backward.Collect(out);
}

Var BiLstm::Forward(Tape& t, const Var& x) const {
  const Var parts[] = {forward.Forward(t, x, false), backward.Forward(t, x, true)};
  return ad::ConcatCols(parts);
}

// ---- optimizer ------------------------------------------------------------

void ZeroGrads(const ParamList& params) {
  for (Parameter* p : params) p->ZeroGrad();
}

std::size_t CountParameters(const ParamList& params) {
  std::size_t n = 0;
  for (const Parameter* p : params)
    if (p->trainable) n += std::size_t(p->value.size());
  return n;
}

double Adam::Step(const ParamList& params) {
  if (m_.empty()) {
    for (const Parameter* p : params) {
      m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (m_.size() != params.size()) throw Error("Adam: parameter list changed");
  double sq = 0;
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    if (p->grad.size() == 0) p->ZeroGrad();
    sq += p->grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  const double scale = (clip_norm_ > 0 && norm > clip_norm_) ? clip_norm_ / norm : 1.0;
  ++t_;
  const double bc1 = 1 - std::pow(beta1_, double(t_));
  const double bc2 = 1 - std::pow(beta2_, double(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter* p = params[i];
    if (!p->trainable) continue;
    const Mat g = p->grad * scale;
    m_[i] = beta1_ * m_[i] + (1 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1 - beta2_) * g.cwiseProduct(g);
    p->value.array() -= lr_ * (m_[i].array() / bc1) /
                        ((v_[i].array() / bc2).sqrt() + eps_);
    RoundToFloat(p->value);
    p->ZeroGrad();
  }
  return norm;
}

}  // namespace s2c::nn
