// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

// Attentional sequence-to-sequence model from source speech features to
// target code sequences. Vocabulary: codes 0..K-1, BOS = K, EOS = K+1.

#pragma once

#include <string>
#include <vector>

#include "s2c/nn.hpp"

namespace s2c {

enum class AttentionKind { kMlp, kDot };

const char* AttentionKindName(AttentionKind k);
AttentionKind ParseAttentionKind(const std::string& s);

struct S2SConfig {
  int input_dim = 39;
  int codebook_size = 64;  // K
  int enc_layers = 3;
  int enc_hidden = 512;    // units per direction; M = 2 * enc_hidden
  int dec_hidden = 512;    // N
  int attention_dim = 256;
  int embed_dim = 128;
  AttentionKind attention = AttentionKind::kMlp;
  int pyramid_factor = 2;  // time downsampling applied before each upper layer
  int max_decode_len = 200;
  int beam = 1;
  double teacher_forcing = 1.0;
  double learning_rate = 1e-4;
  double clip_norm = 5.0;
  int batch_size = 32;

  int vocab() const { return codebook_size + 2; }
  int bos() const { return codebook_size; }
  int eos() const { return codebook_size + 1; }
  int encoder_width() const { return 2 * enc_hidden; }
  void Validate() const;
};

struct EncoderStates {
  ad::Var states;          // S' x M (rows past the valid length are zero)
  std::vector<bool> mask;  // true on valid positions
  int valid() const;
};

struct AttentionStep {
  ad::Var weights;  // 1 x S'
  ad::Var context;  // 1 x M
};

struct DecoderStepOut {
  ad::Var logits;  // 1 x vocab, BOS forced to -inf
  nn::Lstm::State state;
  AttentionStep attention;
};

struct TranslateResult {
  CodeSequence codes;
  double log_prob = 0;   // total log-probability including EOS
  bool truncated = false;
  Mat attention;         // output steps x S'
};

struct S2SMetrics {
  double loss = 0;
  double token_acc = 0;
  long tokens = 0;
};

/// Mean over rows of -log softmax(logits)[target]; throws if a target is
/// outside the vocabulary.
ad::Var S2SLoss(const ad::Var& logits, std::span<const int> targets);

class S2SModel {
 public:
  S2SModel() = default;
  S2SModel(const S2SConfig& cfg, uint64_t seed);
  S2SModel(const S2SModel&) = delete;
  S2SModel& operator=(const S2SModel&) = delete;
  S2SModel(S2SModel&&) = default;
  S2SModel& operator=(S2SModel&&) = default;

  const S2SConfig& config() const { return cfg_; }
  nn::ParamList Params();
  std::vector<std::pair<std::string, Mat*>> NamedTensors();

  /// Encodes the first `valid_len` rows of x (all rows when < 0); the
  /// remaining rows count as padding and are masked.
  EncoderStates Encode(ad::Tape& t, const Mat& x, int valid_len = -1) const;

  /// Score projection of the encoder states, computed once per utterance.
  ad::Var PrepareAttention(ad::Tape& t, const EncoderStates& enc) const;
  AttentionStep Attend(ad::Tape& t, const EncoderStates& enc, const ad::Var& keys,
                       const ad::Var& dec_state) const;

  nn::Lstm::State InitialState(ad::Tape& t) const;
  ad::Var InitialContext(ad::Tape& t) const;
  DecoderStepOut DecoderStep(ad::Tape& t, int prev_token, const ad::Var& prev_context,
                             const nn::Lstm::State& state, const EncoderStates& enc,
                             const ad::Var& keys) const;

  /// Teacher-forced logits for targets + EOS, (|y|+1) x vocab.
  ad::Var ForcedLogits(ad::Tape& t, const Mat& x, const CodeSequence& y,
                       int valid_len = -1) const;
  /// Teacher-forced NLL of y (EOS appended).
  double Loss(const Mat& x, const CodeSequence& y, int valid_len = -1) const;

  TranslateResult Translate(const Mat& x) const;
  TranslateResult Greedy(const Mat& x) const;
  TranslateResult BeamSearch(const Mat& x, int beam) const;

 private:
  S2SConfig cfg_;
  std::vector<nn::BiLstm> enc_;
  ad::Parameter embedding_;  // vocab x E
  nn::Lstm dec_;
  nn::Linear att_keys_;      // M -> A      (mlp) / unused (dot)
  nn::Linear att_query_;     // N -> A      (mlp) / N -> M (dot)
  ad::Parameter att_v_;      // A x 1
  nn::Linear combine_;       // N + M -> N
  nn::Linear output_;        // N -> vocab
};

class S2STrainer {
 public:
  S2STrainer(S2SModel& model, uint64_t seed);

  /// Teacher-forced update on (source features, target codes) pairs.
  /// The loss is the mean NLL over all target tokens in the batch.
  S2SMetrics Step(const std::vector<const Mat*>& sources,
                  const std::vector<const CodeSequence*>& targets);

 private:
  S2SModel& model_;
  nn::Adam opt_;
  nn::Rng rng_;
};

}  // namespace s2c
