// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

// Vector-quantized autoencoder for unsupervised unit discovery.
//
//   encoder:  x (T_X x 39) -> z (T_Y x D_e),  T_Y = ceil(T_X / time_reduction)
//   quantize: c_t = argmin_i ||z_t - e_i||_2,  ties -> smallest index
//   decoder:  (e_c, speaker) -> x_hat (T_Y*time_reduction x 39)
//
// The codebook is learned with exponential moving averages only; the loss
// gradient never reaches it.

#pragma once

#include <string>
#include <vector>

#include "s2c/nn.hpp"

namespace s2c {

struct VQVAEConfig {
  int codebook_size = 64;  // K
  int code_dim = 64;       // D_e
  int time_reduction = 8;
  /// Per-block strides; empty means the default factorization of
  /// time_reduction (4 -> 2,2; 8 -> 2,2,2; 12 -> 2,2,3).
  std::vector<int> stride_schedule;
  int num_speakers = 1;  // L
  int speaker_dim = 16;  // D_v
  double gamma = 0.25;
  double ema_decay = 0.999;
  double ema_epsilon = 1e-5;
  int channels = 256;
  int input_dim = 39;
  double learning_rate = 1e-3;
  int batch_size = 32;

  std::vector<int> Strides() const;
  void Validate() const;
};

/// Default stride factorization: as many 2s as possible, then the remaining
/// prime factors in ascending order.
std::vector<int> DefaultStrides(int time_reduction);

struct Codebook {
  Mat vectors;     // K x D_e
  Mat ema_counts;  // 1 x K  (N_i)
  Mat ema_sums;    // K x D_e (m_i)

  int size() const { return int(vectors.rows()); }
  int dim() const { return int(vectors.cols()); }
  bool initialized() const { return ema_counts.size() > 0 && ema_counts.sum() > 0; }
};

struct QuantizationResult {
  CodeSequence codes;
  Mat quantized;  // rows are exact copies of codebook rows
  Mat pre_quant;  // z
  Mat distances;  // T_Y x K squared L2 distances
};

/// Nearest codebook row per frame under L2 distance; ties go to the smallest
/// index.
QuantizationResult Quantize(const Mat& z, const Codebook& cb);

/// EMA update of counts, sums and vectors with Laplace-smoothed counts:
///   N_i <- lambda N_i + (1-lambda) n_i
///   m_i <- lambda m_i + (1-lambda) sum_{t: c_t=i} z_t
///   e_i <- m_i / ((N_i + eps) / (sum N + K eps) * sum N)
void EmaCodebookUpdate(Codebook& cb, const Mat& z_batch, const CodeSequence& codes,
                       double decay, double epsilon);

/// exp(-sum p_i log p_i) of the code usage histogram; 1 for an empty batch.
double CodebookPerplexity(const CodeSequence& codes, int codebook_size);

struct LossBreakdown {
  ad::Var recon;   // mean squared error over frames and dims
  ad::Var commit;  // mean over t of ||z_t - sg(e_c)||^2
  ad::Var total;   // recon + gamma * commit
};

LossBreakdown VqvaeLoss(const ad::Var& x, const ad::Var& x_hat, const ad::Var& z,
                        const ad::Var& e_c, double gamma);

struct VqvaeMetrics {
  double recon = 0;
  double commit = 0;
  double total = 0;
  double perplexity = 1;
};

class VQVAEModel {
 public:
  VQVAEModel() = default;
  VQVAEModel(const VQVAEConfig& cfg, uint64_t seed);
  VQVAEModel(const VQVAEModel&) = delete;
  VQVAEModel& operator=(const VQVAEModel&) = delete;
  VQVAEModel(VQVAEModel&&) = default;
  VQVAEModel& operator=(VQVAEModel&&) = default;

  const VQVAEConfig& config() const { return cfg_; }
  Codebook& codebook() { return codebook_; }
  const Codebook& codebook() const { return codebook_; }
  ad::Parameter& speaker_table() { return speaker_table_; }

  /// Encoder parameters (theta).
  nn::ParamList EncoderParams();
  /// Decoder parameters (phi), including the speaker table V.
  nn::ParamList DecoderParams();
  /// Every parameter trained by gradient descent.
  nn::ParamList TrainableParams();
  /// Everything persisted in a checkpoint, in a stable order.
  std::vector<std::pair<std::string, Mat*>> NamedTensors();

  /// Replicates the final frame until the length is a multiple of the time
  /// reduction. Throws on empty input.
  Mat PadInput(const Mat& x) const;

  ad::Var EncodeVar(ad::Tape& t, const Mat& x) const;
  ad::Var DecodeVar(ad::Tape& t, const ad::Var& q, int speaker) const;

  /// Continuous pre-quantization representation z, T_Y x D_e.
  Mat Encode(const Mat& x) const;
  /// Decoded features, T_Y*time_reduction x input_dim.
  Mat Decode(const Mat& quantized, int speaker) const;
  CodeSequence ExtractCodes(const Mat& x) const;

  struct Forward {
    ad::Var z;
    ad::Var codebook;      // leaf holding E; its gradient must stay zero
    ad::Var quantized;     // e_c gathered from `codebook`
    ad::Var decoder_input; // straight-through(z, e_c)
    ad::Var x;             // target (unpadded)
    ad::Var x_hat;         // decoder output trimmed to T_X
    CodeSequence codes;
    LossBreakdown loss;
  };
  Forward Run(ad::Tape& t, const Mat& x, int speaker) const;

  /// Sets the codebook to K encoder outputs drawn from `batch` and resets
  /// the EMA accumulators (counts 1, sums = vectors).
  void InitCodebookFromBatch(const std::vector<const Mat*>& batch, nn::Rng& rng);

 private:
  struct ResBlock {
    nn::Conv1d conv3;
    nn::Conv1d conv1;
    void Init(const std::string& name, int ch, nn::Rng& rng);
    void Collect(nn::ParamList& out);
    ad::Var Forward(ad::Tape& t, const ad::Var& x) const;
  };

  VQVAEConfig cfg_;
  std::vector<int> strides_;
  // encoder
  nn::Conv1d enc_in_;
  std::vector<ResBlock> enc_blocks_;
  std::vector<nn::Conv1d> enc_down_;
  ResBlock enc_final_;
  nn::Conv1d enc_out_;
  // decoder
  nn::Conv1d dec_in_;
  std::vector<ResBlock> dec_blocks_;
  std::vector<nn::ConvTranspose1d> dec_up_;
  ResBlock dec_final_;
  nn::Conv1d dec_out_;
  std::vector<nn::Linear> speaker_proj_;  // one per decoder block input
  ad::Parameter speaker_table_;           // L x D_v

  Codebook codebook_;
};

/// Gradient-step state for one VQ-VAE training run.
class VqvaeTrainer {
 public:
  VqvaeTrainer(VQVAEModel& model, uint64_t seed);

  /// One update on a batch of normalized utterances (one speaker id each):
  /// forward, loss, Adam step on encoder/decoder/speakers, EMA codebook
  /// step. Initializes the codebook on the first call. Throws on NaN.
  VqvaeMetrics Step(const std::vector<const Mat*>& batch, const std::vector<int>& speakers);

 private:
  VQVAEModel& model_;
  nn::Adam opt_;
  nn::Rng rng_;
};

}  // namespace s2c
