// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

// Neural network building blocks on top of the autodiff tape.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2c/autodiff.hpp"

namespace s2c::nn {

using ad::Parameter;
using ad::Tape;
using ad::Var;
using ParamList = std::vector<Parameter*>;

/// Platform-independent deterministic generator (SplitMix64 seeding into
/// xoshiro256**); distributions are implemented here so identical seeds give
/// identical streams regardless of the standard library.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0);
  uint64_t Next();
  double Uniform();                       // [0, 1)
  double Uniform(double lo, double hi);
  double Normal();                        // N(0, 1)
  int Index(int n);                       // [0, n)

 private:
  uint64_t s_[4];
};

Mat UniformMat(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng);

struct Linear {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out

  void Init(const std::string& name, int in, int out, Rng& rng);
  void Collect(ParamList& out);
  Var Forward(Tape& t, const Var& x) const;
};

/// 1-D convolution over time. Weight layout is (kernel*in) x out.
struct Conv1d {
  Parameter weight;
  Parameter bias;
  int kernel = 1;
  int stride = 1;
  bool same_padding = true;

  void Init(const std::string& name, int in, int out, int kernel, int stride,
            bool same_padding, Rng& rng);
  void Collect(ParamList& out);
  Var Forward(Tape& t, const Var& x) const;
};

/// Transposed 1-D convolution with kernel == stride: every input frame
/// expands into `stride` output frames, so T_out = stride * T_in.
struct ConvTranspose1d {
  Parameter weight;  // in x (stride*out)
  Parameter bias;    // 1 x out
  int stride = 2;
  int out_channels = 0;

  void Init(const std::string& name, int in, int out, int stride, Rng& rng);
  void Collect(ParamList& out);
  Var Forward(Tape& t, const Var& x) const;
};

struct BatchNorm1d {
  Parameter gamma;
  Parameter beta;
  mutable Parameter running_mean;  // updated by training-mode forwards
  mutable Parameter running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  void Init(const std::string& name, int channels);
  void Collect(ParamList& out);
  Var Forward(Tape& t, const Var& x) const;
};

/// Single-direction LSTM layer, gate order (input, forget, cell, output).
struct Lstm {
  Parameter w_input;   // in x 4H
  Parameter w_hidden;  // H x 4H
  Parameter bias;      // 1 x 4H
  int hidden = 0;

  void Init(const std::string& name, int in, int hidden, Rng& rng);
  void Collect(ParamList& out);
  /// Runs over all rows of x; returns T x H hidden states (in input order).
  Var Forward(Tape& t, const Var& x, bool reverse = false) const;

  struct State {
    Var h;  // 1 x H
    Var c;  // 1 x H
  };
  State ZeroState(Tape& t) const;
  /// One step given the 1 x 4H input projection (x W_input + bias).
  State Step(Tape& t, const Var& input_proj, const State& prev) const;
};

struct BiLstm {
  Lstm forward;
  Lstm backward;

  void Init(const std::string& name, int in, int hidden, Rng& rng);
  void Collect(ParamList& out);
  /// T x 2H: forward states then backward states.
  Var Forward(Tape& t, const Var& x) const;
};

/// Adam with optional global gradient-norm clipping. Parameters are rounded
/// to float32 after every update.
class Adam {
 public:
  Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
       double clip_norm = 0.0)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), clip_norm_(clip_norm) {}

  /// Applies one update using the accumulated grads and zeroes them.
  /// Returns the pre-clipping global gradient norm.
  double Step(const ParamList& params);
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_, clip_norm_;
  long t_ = 0;
  std::vector<Mat> m_, v_;
};

void ZeroGrads(const ParamList& params);
std::size_t CountParameters(const ParamList& params);

}  // namespace s2c::nn
