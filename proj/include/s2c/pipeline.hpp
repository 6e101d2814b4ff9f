// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

// Three-stage training and inference over a run directory.
//
//   stage 1: corpus stats, VQ-VAE on target MFCC, code extraction for every
//            split, inverter from codes to target linear spectrograms
//   stage 2: seq2seq from source MFCC to the extracted target codes
//   stage 3: source wav -> codes -> spectrogram -> Griffin-Lim -> wav
//
// Run directory contents:
//   config.json  run.json
//   stats_src.sp2c  stats_tgt.sp2c
//   vqvae.ckpt  inverter.ckpt  s2s.ckpt
//   codes/tgt_<split>.{txt,ids}
//   metrics/{vqvae,inverter,s2s}.jsonl
//   eval/<split>.tsv  eval/<split>.json

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "s2c/checkpoint.hpp"
#include "s2c/config.hpp"
#include "s2c/corpus.hpp"
#include "s2c/eval.hpp"

namespace s2c {

/// Creates (or reopens) a run directory. A directory already holding a
/// config with a different hash is refused.
class RunDir {
 public:
  RunDir(const std::string& dir, const ExperimentConfig& cfg);
  /// Opens an existing run, reading its config.json.
  static RunDir Open(const std::string& dir);

  const std::string& dir() const { return dir_; }
  const ExperimentConfig& config() const { return cfg_; }
  const std::string& hash() const { return hash_; }
  std::string Path(const std::string& rel) const;
  bool Has(const std::string& rel) const;
  std::string CodeStem(Split s) const;

 private:
  RunDir() = default;
  std::string dir_;
  ExperimentConfig cfg_;
  std::string hash_;
};

/// Line-delimited JSON records, truncated on open.
class MetricsLog {
 public:
  explicit MetricsLog(const std::string& path);
  void Write(const Json& record);

 private:
  std::string path_;
};

struct UttFeatures {
  const ManifestEntry* entry = nullptr;
  Mat src_mfcc;
  Mat tgt_mfcc;
  Mat tgt_linear;
};

/// Features for the given entries; empty matrices for sides not requested.
std::vector<UttFeatures> ComputeFeatures(const Manifest& m,
                                         const std::vector<const ManifestEntry*>& entries,
                                         const FeatureConfig& cfg, bool src, bool tgt_mfcc,
                                         bool tgt_linear);

struct VqvaeStageResult {
  VqvaeMetrics first;
  VqvaeMetrics last;
  double heldout_perplexity = 1;
  int utterances_coded = 0;
};

struct InverterStageResult {
  double initial_loss = 0;  // mean L2 loss on the train split before training
  double final_loss = 0;
};

struct S2SStageResult {
  S2SMetrics first;
  S2SMetrics last;
  double dev_token_acc = 0;
};

VqvaeStageResult TrainVqvaeStage(const Manifest& m, const RunDir& run);
InverterStageResult TrainInverterStage(const Manifest& m, const RunDir& run);
S2SStageResult TrainS2SStage(const Manifest& m, const RunDir& run);

bool Stage1Complete(const RunDir& run);
bool Stage2Complete(const RunDir& run);

/// Positional token matches over reference length (1 for two empty
/// sequences).
double TokenAccuracy(const CodeSequence& hyp, const CodeSequence& ref);

/// Everything needed for inference, loaded once.
struct LoadedModels {
  ExperimentConfig cfg;
  CorpusStats src_stats;
  S2SModel s2s;
  InverterModel inverter;
};
LoadedModels LoadModels(const RunDir& run);

struct InferenceResult {
  TranslateResult translation;
  SynthesisResult synthesis;
};
/// Source waveform -> target codes -> target waveform.
InferenceResult RunInference(const Waveform& src, const LoadedModels& models,
                             bool synthesize = true);

struct RunEvaluation {
  EvalReport report;
  double token_acc = 0;        // mean positional accuracy
  double control_bleu = 0;     // hypotheses paired with cyclically shifted references
  int truncated = 0;
};

/// Translates every entry of a split and scores the codes against the
/// stage-1 extraction. Word-level BLEU is added when `hyp_transcripts`
/// (utt_id -> words) is given. Writes eval/<split>.{tsv,json}.
RunEvaluation EvaluateRun(const Manifest& m, const RunDir& run, Split split,
                          const std::map<std::string, Tokens>* hyp_transcripts = nullptr,
                          bool write_wavs = false);

struct GridRow {
  int codebook_size = 0;
  int time_reduction = 0;
  bool ok = false;
  double token_bleu = 0;
  double token_error_rate = 0;
  std::string error;
};

/// Trains and evaluates one cell per (K, time_reduction) under
/// root/grid/K<k>_TR<r>. Step counts are multiplied by `step_scale`.
/// A failing cell is recorded and the grid continues.
std::vector<GridRow> RunGrid(const Manifest& m, const ExperimentConfig& base,
                             const std::string& root, double step_scale, Split split,
                             const std::function<void(const GridRow&)>& on_row = {});
/// Tab-separated; failed cells print "-".
std::string FormatGrid(const std::vector<GridRow>& rows);

}  // namespace s2c
