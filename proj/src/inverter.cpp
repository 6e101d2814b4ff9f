// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2c/inverter.hpp"

#include <cmath>

namespace s2c {

using ad::Var;

void InverterConfig::Validate() const {
  if (code_dim < 1 || channels < 1 || output_dim < 1 || lstm_hidden < 1)
    throw Error("inverter", "dimensions must be positive");
  if (upsample < 1) throw Error("inverter", "upsample factor r must be >= 1");
  if (kernels.empty()) throw Error("inverter", "need at least one kernel size");
  for (int k : kernels)
    if (k < 1) throw Error("inverter", "kernel sizes must be positive");
  if (pre_blocks < 0 || post_blocks < 0 || lstm_layers < 0)
    throw Error("inverter", "block counts must be >= 0");
  if (batch_size < 1) throw Error("inverter", "batch_size must be >= 1");
}

Mat UpsampleCodes(const CodeSequence& codes, const Mat& codebook, int r) {
  if (r < 1) throw Error("inverter", "upsample factor r must be >= 1");
  Mat out(Eigen::Index(codes.size()) * r, codebook.cols());
  for (std::size_t t = 0; t < codes.size(); ++t) {
    const int c = codes[t];
    if (c < 0 || c >= codebook.rows())
      throw Error("inverter", "code " + std::to_string(c) + " outside codebook of size " +
                                  std::to_string(codebook.rows()));
    for (int j = 0; j < r; ++j) out.row(Eigen::Index(t) * r + j) = codebook.row(c);
  }
  return out;
}

AlignedTarget AlignTarget(const Mat& target, Eigen::Index length) {
  AlignedTarget a;
  a.valid = std::min(target.rows(), length);
  a.frames = Mat::Zero(length, target.cols());
  a.frames.topRows(a.valid) = target.topRows(a.valid);
  return a;
}

Var InverterLoss(const Var& pred, const Var& target, Eigen::Index valid) {
  if (pred.cols() != target.cols())
    throw Error("inverter", "loss: dimension mismatch " + std::to_string(pred.cols()) +
                                " vs " + std::to_string(target.cols()));
  if (pred.rows() != target.rows()) throw Error("inverter", "loss: length mismatch");
  const Eigen::Index n = valid < 0 ? pred.rows() : valid;
  if (n < 1 || n > pred.rows()) throw Error("inverter", "loss: invalid frame count");
  Var diff = ad::Sub(ad::SliceRows(target, 0, n), ad::SliceRows(pred, 0, n));
  return ad::Mean(ad::RowNorms(diff));
}

// ---- model ----------------------------------------------------------------

void InverterModel::Block::Init(const std::string& name, const InverterConfig& cfg,
                                nn::Rng& rng) {
  for (int k : cfg.kernels)
    branches.emplace_back().Init(name + ".k" + std::to_string(k), cfg.channels,
                                 cfg.channels, k, 1, true, rng);
  norm.Init(name + ".bn", cfg.channels);
}

void InverterModel::Block::Collect(nn::ParamList& out) {
  for (auto& b : branches) b.Collect(out);
  norm.Collect(out);
}

std::vector<Var> InverterModel::Block::Forward(ad::Tape& t, const std::vector<Var>& xs,
                                               double slope) const {
  std::vector<Var> hs;
  std::vector<Eigen::Index> lens;
  for (const Var& x : xs) {
    Var h = branches[0].Forward(t, x);
    for (std::size_t i = 1; i < branches.size(); ++i) h = ad::Add(h, branches[i].Forward(t, x));
    hs.push_back(h);
    lens.push_back(h.rows());
  }
  // statistics are pooled over every frame of the batch
  Var n = norm.Forward(t, hs.size() == 1 ? hs[0] : ad::ConcatRows(hs));
  std::vector<Var> out;
  Eigen::Index r0 = 0;
  for (std::size_t b = 0; b < xs.size(); ++b) {
    Var h = hs.size() == 1 ? n : ad::SliceRows(n, r0, lens[b]);
    r0 += lens[b];
    out.push_back(ad::Add(xs[b], ad::LeakyRelu(h, slope)));
  }
  return out;
}

InverterModel::InverterModel(const InverterConfig& cfg, const Mat& codebook, uint64_t seed)
    : cfg_(cfg), codebook_(codebook) {
  cfg_.Validate();
  if (codebook_.cols() != cfg_.code_dim)
    throw Error("inverter", "codebook dim " + std::to_string(codebook_.cols()) +
                                " != code_dim " + std::to_string(cfg_.code_dim));
  RoundToFloat(codebook_);
  nn::Rng rng(seed);
  in_proj_.Init("in_proj", cfg_.code_dim, cfg_.channels, 1, 1, true, rng);
  for (int i = 0; i < cfg_.pre_blocks; ++i)
    pre_.emplace_back().Init("pre" + std::to_string(i), cfg_, rng);
  int width = cfg_.channels;
  for (int l = 0; l < cfg_.lstm_layers; ++l) {
    lstm_.emplace_back().Init("lstm" + std::to_string(l), width, cfg_.lstm_hidden, rng);
    width = 2 * cfg_.lstm_hidden;
  }
  mid_proj_.Init("mid_proj", width, cfg_.channels, rng);
  for (int i = 0; i < cfg_.post_blocks; ++i)
    post_.emplace_back().Init("post" + std::to_string(i), cfg_, rng);
  out_.Init("out", cfg_.channels, cfg_.output_dim, rng);
}

nn::ParamList InverterModel::Params() {
  nn::ParamList out;
  in_proj_.Collect(out);
  for (auto& b : pre_) b.Collect(out);
  for (auto& l : lstm_) l.Collect(out);
  mid_proj_.Collect(out);
  for (auto& b : post_) b.Collect(out);
  out_.Collect(out);
  return out;
}

std::vector<std::pair<std::string, Mat*>> InverterModel::NamedTensors() {
  std::vector<std::pair<std::string, Mat*>> out;
  for (ad::Parameter* p : Params()) out.emplace_back(p->name, &p->value);
  out.emplace_back("codebook", &codebook_);
  out.emplace_back("output_scale", &output_scale_);
  return out;
}

void InverterModel::SetOutputScale(double s) {
  if (!(s > 0) || !std::isfinite(s)) throw Error("inverter", "output scale must be positive");
  output_scale_(0, 0) = double(float(s));
}

std::vector<Var> InverterModel::ForwardBatch(ad::Tape& t,
                                             const std::vector<const CodeSequence*>& codes) const {
  if (codes.empty()) throw Error("inverter", "empty batch");
  std::vector<Var> h;
  for (const CodeSequence* c : codes) {
    if (c->empty()) throw Error("inverter", "empty code sequence");
    h.push_back(in_proj_.Forward(t, t.Constant(UpsampleCodes(*c, codebook_, cfg_.upsample))));
  }
  for (const auto& b : pre_) h = b.Forward(t, h, cfg_.leaky_slope);
  if (!lstm_.empty()) {
    for (Var& x : h) {
      Var r = x;
      for (const auto& l : lstm_) r = l.Forward(t, r);
      x = ad::Add(x, mid_proj_.Forward(t, r));
    }
  }
  for (const auto& b : post_) h = b.Forward(t, h, cfg_.leaky_slope);
  for (Var& x : h) x = ad::Scale(out_.Forward(t, x), output_scale());
  return h;
}

Var InverterModel::ForwardVar(ad::Tape& t, const CodeSequence& codes) const {
  return ForwardBatch(t, {&codes}).front();
}

void InverterModel::RecalibrateNorm(const std::vector<const CodeSequence*>& codes) {
  std::vector<double> saved;
  for (auto* blocks : {&pre_, &post_})
    for (Block& b : *blocks) {
      saved.push_back(b.norm.momentum);
      b.norm.momentum = 1.0;
    }
  ad::Tape t(true);
  ForwardBatch(t, codes);
  std::size_t i = 0;
  for (auto* blocks : {&pre_, &post_})
    for (Block& b : *blocks) {
      b.norm.momentum = saved[i++];
      RoundToFloat(b.norm.running_mean.value);
      RoundToFloat(b.norm.running_var.value);
    }
}

FeatureSequence InverterModel::Invert(const CodeSequence& codes) const {
  ad::Tape t(false);
  FeatureSequence out;
  out.frames = ForwardVar(t, codes).value().cwiseMax(0.0);
  out.kind = cfg_.output_dim == 1025 ? FeatureKind::kLinear1025 : FeatureKind::kGeneric;
  return out;
}

SynthesisResult Synthesize(const CodeSequence& codes, const InverterModel& m,
                           const FeatureConfig& cfg) {
  SynthesisResult r;
  r.spectrogram = m.Invert(codes);
  r.spectrogram.frame_hop_ms = cfg.hop_ms;
  GriffinLimResult gl = GriffinLim(r.spectrogram.frames, cfg.griffin_lim_iters, cfg);
  r.wav = std::move(gl.wav);
  r.spectral_convergence = gl.spectral_convergence;
  return r;
}

// ---- training -------------------------------------------------------------

InverterTrainer::InverterTrainer(InverterModel& model, uint64_t /*seed*/)
    : model_(model), opt_(model.config().learning_rate) {}

double InverterTrainer::Step(const std::vector<const CodeSequence*>& codes,
                             const std::vector<const Mat*>& targets) {
  if (codes.empty() || codes.size() != targets.size())
    throw Error("inverter", "batch needs matching, nonempty code/target lists");
  const int r = model_.config().upsample;
  std::vector<AlignedTarget> aligned;
  double frames = 0;
  for (std::size_t b = 0; b < codes.size(); ++b) {
    aligned.push_back(AlignTarget(*targets[b], Eigen::Index(codes[b]->size()) * r));
    frames += double(aligned.back().valid);
  }
  ad::Tape t(true);
  const std::vector<Var> preds = model_.ForwardBatch(t, codes);
  std::vector<Var> weighted;
  double total = 0;
  for (std::size_t b = 0; b < codes.size(); ++b) {
    Var loss = InverterLoss(preds[b], t.Constant(aligned[b].frames), aligned[b].valid);
    if (!std::isfinite(loss.scalar()))
      throw Error("inverter", "non-finite loss " + std::to_string(loss.scalar()));
    const double w = double(aligned[b].valid) / frames;
    weighted.push_back(ad::Scale(loss, w));
    total += w * loss.scalar();
  }
  Var sum = weighted[0];
  for (std::size_t b = 1; b < weighted.size(); ++b) sum = ad::Add(sum, weighted[b]);
  t.Backward(sum);
  opt_.Step(model_.Params());
  return total;
}

}  // namespace s2c
