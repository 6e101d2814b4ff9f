// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

// Codebook inverter: code embeddings (each repeated r times) -> linear
// magnitude spectrogram, followed by Griffin-Lim for waveform synthesis.
//
// Architecture: 1x1 input projection, residual multiscale blocks, stacked
// bidirectional LSTMs, residual multiscale blocks, linear output layer.

#pragma once

#include <string>
#include <vector>

#include "s2c/features.hpp"
#include "s2c/nn.hpp"

namespace s2c {

struct InverterConfig {
  int code_dim = 64;
  int upsample = 8;  // r, equal to the VQ-VAE time reduction
  int channels = 256;
  std::vector<int> kernels{1, 3, 5, 7};
  int pre_blocks = 2;
  int post_blocks = 2;
  int lstm_layers = 2;
  int lstm_hidden = 256;
  int output_dim = 1025;
  double leaky_slope = 0.2;
  double learning_rate = 1e-3;
  int batch_size = 32;

  void Validate() const;
};

/// Row t*r + j of the result is codebook[codes[t]] for j in [0, r).
Mat UpsampleCodes(const CodeSequence& codes, const Mat& codebook, int r);

/// Trims (or zero-pads) a groundtruth spectrogram to `length` frames and
/// returns how many leading frames are real: min(T_X, length).
struct AlignedTarget {
  Mat frames;
  Eigen::Index valid = 0;
};
AlignedTarget AlignTarget(const Mat& target, Eigen::Index length);

/// Mean over the first `valid` frames of ||target_t - pred_t||_2
/// (all frames when valid < 0).
ad::Var InverterLoss(const ad::Var& pred, const ad::Var& target, Eigen::Index valid = -1);

class InverterModel {
 public:
  InverterModel() = default;
  /// `codebook` (K x code_dim) is copied and stays frozen.
  InverterModel(const InverterConfig& cfg, const Mat& codebook, uint64_t seed);
  InverterModel(const InverterModel&) = delete;
  InverterModel& operator=(const InverterModel&) = delete;
  InverterModel(InverterModel&&) = default;
  InverterModel& operator=(InverterModel&&) = default;

  const InverterConfig& config() const { return cfg_; }
  const Mat& codebook() const { return codebook_; }
  nn::ParamList Params();
  std::vector<std::pair<std::string, Mat*>> NamedTensors();

  /// Output magnitudes are the network output times this constant.
  void SetOutputScale(double s);
  double output_scale() const { return output_scale_(0, 0); }

  /// Raw (unclamped) prediction, (|codes| * r) x output_dim.
  ad::Var ForwardVar(ad::Tape& t, const CodeSequence& codes) const;
  /// One prediction per sequence. In training mode the normalization
  /// statistics are pooled over all frames of the batch.
  std::vector<ad::Var> ForwardBatch(ad::Tape& t,
                                    const std::vector<const CodeSequence*>& codes) const;
  /// Sets every normalization layer's running statistics to the exact
  /// statistics of `codes` taken as one batch.
  void RecalibrateNorm(const std::vector<const CodeSequence*>& codes);
  /// Inference: eval mode, values clamped to >= 0.
  FeatureSequence Invert(const CodeSequence& codes) const;

 private:
  struct Block {
    std::vector<nn::Conv1d> branches;
    nn::BatchNorm1d norm;
    void Init(const std::string& name, const InverterConfig& cfg, nn::Rng& rng);
    void Collect(nn::ParamList& out);
    std::vector<ad::Var> Forward(ad::Tape& t, const std::vector<ad::Var>& xs,
                                 double slope) const;
  };

  InverterConfig cfg_;
  Mat codebook_;
  Mat output_scale_ = Mat::Ones(1, 1);
  nn::Conv1d in_proj_;
  std::vector<Block> pre_;
  std::vector<nn::BiLstm> lstm_;
  nn::Linear mid_proj_;
  std::vector<Block> post_;
  nn::Linear out_;
};

struct SynthesisResult {
  FeatureSequence spectrogram;
  Waveform wav;
  double spectral_convergence = 0;
};

SynthesisResult Synthesize(const CodeSequence& codes, const InverterModel& m,
                           const FeatureConfig& cfg);

class InverterTrainer {
 public:
  InverterTrainer(InverterModel& model, uint64_t seed);

  /// One Adam step on (codes, groundtruth linear spectrogram) pairs. Returns
  /// the frame-weighted mean loss over the batch.
  double Step(const std::vector<const CodeSequence*>& codes,
              const std::vector<const Mat*>& targets);

 private:
  InverterModel& model_;
  nn::Adam opt_;
};

}  // namespace s2c
