// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2c/vqvae.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace s2c {

using ad::Var;

std::vector<int> DefaultStrides(int time_reduction) {
  if (time_reduction < 1) throw Error("vqvae", "time_reduction must be >= 1");
  std::vector<int> out;
  int r = time_reduction;
  for (int p = 2; r > 1; ++p)
    while (r % p == 0) {
      out.push_back(p);
      r /= p;
    }
  return out;
}

std::vector<int> VQVAEConfig::Strides() const {
  return stride_schedule.empty() ? DefaultStrides(time_reduction) : stride_schedule;
}

void VQVAEConfig::Validate() const {
  if (codebook_size < 2) throw Error("vqvae", "codebook size K must be >= 2");
  if (code_dim < 1 || channels < 1 || input_dim < 1)
    throw Error("vqvae", "dimensions must be positive");
  if (time_reduction < 1) throw Error("vqvae", "time_reduction must be >= 1");
  const auto strides = Strides();
  const int prod = std::accumulate(strides.begin(), strides.end(), 1, std::multiplies<int>());
  if (prod != time_reduction)
    throw Error("vqvae", "product of stride_schedule (" + std::to_string(prod) +
                             ") != time_reduction (" + std::to_string(time_reduction) + ")");
  for (int s : strides)
    if (s < 1) throw Error("vqvae", "strides must be positive");
  if (num_speakers < 1 || speaker_dim < 1) throw Error("vqvae", "need at least one speaker");
  if (!(gamma > 0)) throw Error("vqvae", "gamma must be > 0");
  if (!(ema_decay >= 0 && ema_decay < 1)) throw Error("vqvae", "ema_decay must be in [0,1)");
  if (!(ema_epsilon >= 0)) throw Error("vqvae", "ema_epsilon must be >= 0");
  if (batch_size < 1) throw Error("vqvae", "batch_size must be >= 1");
}

// ---- quantization and codebook --------------------------------------------

QuantizationResult Quantize(const Mat& z, const Codebook& cb) {
  if (cb.vectors.cols() != z.cols())
    throw Error("vqvae", "code dim mismatch: z has " + std::to_string(z.cols()) +
                             ", codebook " + std::to_string(cb.vectors.cols()));
  const Eigen::Index T = z.rows(), K = cb.vectors.rows();
  QuantizationResult r;
  r.pre_quant = z;
  r.distances.resize(T, K);
  r.codes.resize(std::size_t(T));
  r.quantized.resize(T, z.cols());
  for (Eigen::Index t = 0; t < T; ++t) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < K; ++k) {
      const double d = (z.row(t) - cb.vectors.row(k)).squaredNorm();
      r.distances(t, k) = d;
      if (d < best_d) {  // strict: earlier index wins ties
        best_d = d;
        best = int(k);
      }
    }
    r.codes[std::size_t(t)] = best;
    r.quantized.row(t) = cb.vectors.row(best);
  }
  return r;
}

void EmaCodebookUpdate(Codebook& cb, const Mat& z_batch, const CodeSequence& codes,
                       double decay, double epsilon) {
  const Eigen::Index K = cb.vectors.rows(), D = cb.vectors.cols();
  if (Eigen::Index(codes.size()) != z_batch.rows())
    throw Error("vqvae", "EMA update: codes/z length mismatch");
  Eigen::RowVectorXd counts = Eigen::RowVectorXd::Zero(K);
  Mat sums = Mat::Zero(K, D);
  for (std::size_t t = 0; t < codes.size(); ++t) {
    const int c = codes[t];
    if (c < 0 || c >= K) throw Error("vqvae", "EMA update: invalid code index");
    counts(c) += 1.0;
    sums.row(c) += z_batch.row(Eigen::Index(t));
  }
  cb.ema_counts = decay * cb.ema_counts + (1.0 - decay) * Mat(counts);
  cb.ema_sums = decay * cb.ema_sums + (1.0 - decay) * sums;
  const double n = cb.ema_counts.sum();
  for (Eigen::Index i = 0; i < K; ++i) {
    const double smoothed = (cb.ema_counts(0, i) + epsilon) / (n + double(K) * epsilon) * n;
    if (smoothed > 0) cb.vectors.row(i) = cb.ema_sums.row(i) / smoothed;
  }
}

double CodebookPerplexity(const CodeSequence& codes, int codebook_size) {
  if (codes.empty()) return 1.0;
  std::vector<double> hist(std::size_t(codebook_size), 0.0);
  for (int c : codes) hist[std::size_t(c)] += 1.0;
  double h = 0;
  for (double n : hist)
    if (n > 0) {
      const double p = n / double(codes.size());
      h -= p * std::log(p);
    }
  return std::exp(h);
}

LossBreakdown VqvaeLoss(const Var& x, const Var& x_hat, const Var& z, const Var& e_c,
                        double gamma) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols())
    throw Error("vqvae", "loss: reconstruction shape mismatch");
  if (z.rows() != e_c.rows() || z.cols() != e_c.cols())
    throw Error("vqvae", "loss: z / e_c shape mismatch");
  LossBreakdown l;
  l.recon = ad::Mean(ad::Square(ad::Sub(x_hat, x)));
  l.commit = ad::Scale(ad::Sum(ad::Square(ad::Sub(z, ad::StopGradient(e_c)))),
                       1.0 / double(z.rows()));
  l.total = ad::Add(l.recon, ad::Scale(l.commit, gamma));
  return l;
}

// ---- model ----------------------------------------------------------------

void VQVAEModel::ResBlock::Init(const std::string& name, int ch, nn::Rng& rng) {
  conv3.Init(name + ".conv3", ch, ch, 3, 1, true, rng);
  conv1.Init(name + ".conv1", ch, ch, 1, 1, true, rng);
}

void VQVAEModel::ResBlock::Collect(nn::ParamList& out) {
  conv3.Collect(out);
  conv1.Collect(out);
}

Var VQVAEModel::ResBlock::Forward(ad::Tape& t, const Var& x) const {
  Var h = conv3.Forward(t, ad::Relu(x));
  h = conv1.Forward(t, ad::Relu(h));
  return ad::Add(x, h);
}

VQVAEModel::VQVAEModel(const VQVAEConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.Validate();
  strides_ = cfg_.Strides();
  nn::Rng rng(seed);
  const int C = cfg_.channels;

  enc_in_.Init("enc.in", cfg_.input_dim, C, 3, 1, true, rng);
  for (std::size_t i = 0; i < strides_.size(); ++i) {
    const std::string n = "enc.block" + std::to_string(i);
    enc_blocks_.emplace_back().Init(n, C, rng);
    enc_down_.emplace_back().Init(n + ".down", C, C, strides_[i], strides_[i], false, rng);
  }
  enc_final_.Init("enc.final", C, rng);
  enc_out_.Init("enc.out", C, cfg_.code_dim, 1, 1, true, rng);

  dec_in_.Init("dec.in", cfg_.code_dim, C, 3, 1, true, rng);
  for (std::size_t i = 0; i < strides_.size(); ++i) {
    const std::string n = "dec.block" + std::to_string(i);
    const int s = strides_[strides_.size() - 1 - i];
    dec_blocks_.emplace_back().Init(n, C, rng);
    dec_up_.emplace_back().Init(n + ".up", C, C, s, rng);
    speaker_proj_.emplace_back().Init(n + ".speaker", cfg_.speaker_dim, C, rng);
  }
  speaker_proj_.emplace_back().Init("dec.final.speaker", cfg_.speaker_dim, C, rng);
  dec_final_.Init("dec.final", C, rng);
  dec_out_.Init("dec.out", C, cfg_.input_dim, 3, 1, true, rng);

  Mat spk(cfg_.num_speakers, cfg_.speaker_dim);
  for (Eigen::Index i = 0; i < spk.size(); ++i) spk.data()[i] = 0.1 * rng.Normal();
  RoundToFloat(spk);
  speaker_table_.name = "speaker_table";
  speaker_table_.value = std::move(spk);

  const int K = cfg_.codebook_size, D = cfg_.code_dim;
  codebook_.vectors = nn::UniformMat(K, D, 1.0 / K, rng);
  RoundToFloat(codebook_.vectors);
  codebook_.ema_counts = Mat::Zero(1, K);
  codebook_.ema_sums = Mat::Zero(K, D);
}

nn::ParamList VQVAEModel::EncoderParams() {
  nn::ParamList out;
  enc_in_.Collect(out);
  for (std::size_t i = 0; i < enc_blocks_.size(); ++i) {
    enc_blocks_[i].Collect(out);
    enc_down_[i].Collect(out);
  }
  enc_final_.Collect(out);
  enc_out_.Collect(out);
  return out;
}

nn::ParamList VQVAEModel::DecoderParams() {
  nn::ParamList out;
  dec_in_.Collect(out);
  for (std::size_t i = 0; i < dec_blocks_.size(); ++i) {
    dec_blocks_[i].Collect(out);
    dec_up_[i].Collect(out);
  }
  dec_final_.Collect(out);
  dec_out_.Collect(out);
  for (auto& p : speaker_proj_) p.Collect(out);
  out.push_back(&speaker_table_);
  return out;
}

nn::ParamList VQVAEModel::TrainableParams() {
  nn::ParamList out = EncoderParams();
  for (ad::Parameter* p : DecoderParams()) out.push_back(p);
  return out;
}

std::vector<std::pair<std::string, Mat*>> VQVAEModel::NamedTensors() {
  std::vector<std::pair<std::string, Mat*>> out;
  for (ad::Parameter* p : TrainableParams()) out.emplace_back(p->name, &p->value);
  out.emplace_back("codebook.vectors", &codebook_.vectors);
  out.emplace_back("codebook.ema_counts", &codebook_.ema_counts);
  out.emplace_back("codebook.ema_sums", &codebook_.ema_sums);
  return out;
}

Mat VQVAEModel::PadInput(const Mat& x) const {
  if (x.rows() == 0) throw Error("vqvae", "empty input sequence");
  if (x.cols() != cfg_.input_dim)
    throw Error("vqvae", "input has " + std::to_string(x.cols()) + " dims, expected " +
                             std::to_string(cfg_.input_dim));
  const Eigen::Index r = cfg_.time_reduction;
  const Eigen::Index padded = (x.rows() + r - 1) / r * r;
  Mat out(padded, x.cols());
  out.topRows(x.rows()) = x;
  for (Eigen::Index i = x.rows(); i < padded; ++i) out.row(i) = x.row(x.rows() - 1);
  return out;
}

Var VQVAEModel::EncodeVar(ad::Tape& t, const Mat& x) const {
  Var h = enc_in_.Forward(t, t.Constant(PadInput(x)));
  for (std::size_t i = 0; i < strides_.size(); ++i) {
    h = enc_blocks_[i].Forward(t, h);
    h = enc_down_[i].Forward(t, ad::Relu(h));
  }
  h = enc_final_.Forward(t, h);
  return enc_out_.Forward(t, ad::Relu(h));
}

Var VQVAEModel::DecodeVar(ad::Tape& t, const Var& q, int speaker) const {
  if (speaker < 0 || speaker >= cfg_.num_speakers)
    throw Error("vqvae", "speaker id " + std::to_string(speaker) + " out of range [0," +
                             std::to_string(cfg_.num_speakers) + ")");
  const int idx[] = {speaker};
  Var v = ad::GatherRows(t.Param(speaker_table_), idx);
  Var h = dec_in_.Forward(t, q);
  for (std::size_t i = 0; i < dec_blocks_.size(); ++i) {
    h = ad::AddRow(h, speaker_proj_[i].Forward(t, v));
    h = dec_blocks_[i].Forward(t, h);
    h = dec_up_[i].Forward(t, ad::Relu(h));
  }
  h = ad::AddRow(h, speaker_proj_.back().Forward(t, v));
  h = dec_final_.Forward(t, h);
  return dec_out_.Forward(t, ad::Relu(h));
}

Mat VQVAEModel::Encode(const Mat& x) const {
  ad::Tape t(false);
  return EncodeVar(t, x).value();
}

Mat VQVAEModel::Decode(const Mat& quantized, int speaker) const {
  ad::Tape t(false);
  return DecodeVar(t, t.Constant(quantized), speaker).value();
}

CodeSequence VQVAEModel::ExtractCodes(const Mat& x) const {
  return Quantize(Encode(x), codebook_).codes;
}

VQVAEModel::Forward VQVAEModel::Run(ad::Tape& t, const Mat& x, int speaker) const {
  Forward f;
  f.z = EncodeVar(t, x);
  f.codes = Quantize(f.z.value(), codebook_).codes;
  f.codebook = t.Leaf(codebook_.vectors);
  f.quantized = ad::GatherRows(f.codebook, f.codes);
  f.decoder_input = ad::StraightThrough(f.z, f.quantized);
  Var decoded = DecodeVar(t, f.decoder_input, speaker);
  f.x = t.Constant(x);
  f.x_hat = ad::SliceRows(decoded, 0, x.rows());
  f.loss = VqvaeLoss(f.x, f.x_hat, f.z, f.quantized, cfg_.gamma);
  return f;
}

void VQVAEModel::InitCodebookFromBatch(const std::vector<const Mat*>& batch, nn::Rng& rng) {
  std::vector<Mat> zs;
  Eigen::Index total = 0;
  for (const Mat* x : batch) {
    zs.push_back(Encode(*x));
    total += zs.back().rows();
  }
  if (total == 0) throw Error("vqvae", "cannot initialize codebook from an empty batch");
  Mat pool(total, cfg_.code_dim);
  Eigen::Index r = 0;
  for (const Mat& z : zs) {
    pool.middleRows(r, z.rows()) = z;
    r += z.rows();
  }
  const int K = cfg_.codebook_size;
  std::vector<int> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  for (Eigen::Index i = total - 1; i > 0; --i)
    std::swap(order[std::size_t(i)], order[std::size_t(rng.Index(int(i) + 1))]);
  for (int k = 0; k < K; ++k) {
    codebook_.vectors.row(k) = pool.row(order[std::size_t(k % total)]);
    if (k >= total)  // more codes than frames: jitter the duplicates
      for (Eigen::Index d = 0; d < cfg_.code_dim; ++d)
        codebook_.vectors(k, d) += 1e-2 * rng.Normal();
  }
  RoundToFloat(codebook_.vectors);
  codebook_.ema_counts = Mat::Ones(1, K);
  codebook_.ema_sums = codebook_.vectors;
}

// ---- training -------------------------------------------------------------

VqvaeTrainer::VqvaeTrainer(VQVAEModel& model, uint64_t seed)
    : model_(model), opt_(model.config().learning_rate), rng_(seed ^ 0x5eedULL) {}

VqvaeMetrics VqvaeTrainer::Step(const std::vector<const Mat*>& batch,
                                const std::vector<int>& speakers) {
  if (batch.empty()) throw Error("vqvae", "empty training batch");
  if (speakers.size() != batch.size()) throw Error("vqvae", "one speaker id per utterance");
  if (!model_.codebook().initialized()) model_.InitCodebookFromBatch(batch, rng_);

  const VQVAEConfig& cfg = model_.config();
  nn::ParamList params = model_.TrainableParams();
  double frames = 0, codes_total = 0;
  for (const Mat* x : batch) {
    frames += double(x->rows());
    codes_total += double(model_.PadInput(*x).rows() / cfg.time_reduction);
  }

  VqvaeMetrics m;
  Mat z_all(0, cfg.code_dim);
  CodeSequence codes_all;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    ad::Tape t(true);
    auto f = model_.Run(t, *batch[b], speakers[b]);
    const double w_recon = double(batch[b]->rows()) / frames;
    const double w_commit = double(f.codes.size()) / codes_total;
    Var objective = ad::Add(ad::Scale(f.loss.recon, w_recon),
                            ad::Scale(f.loss.commit, cfg.gamma * w_commit));
    if (!std::isfinite(objective.scalar()))
      throw Error("vqvae", "non-finite loss (recon=" + std::to_string(f.loss.recon.scalar()) +
                               ", commit=" + std::to_string(f.loss.commit.scalar()) + ")");
    t.Backward(objective);
    m.recon += w_recon * f.loss.recon.scalar();
    m.commit += w_commit * f.loss.commit.scalar();
    const Mat& z = f.z.value();
    z_all.conservativeResize(z_all.rows() + z.rows(), Eigen::NoChange);
    z_all.bottomRows(z.rows()) = z;
    codes_all.insert(codes_all.end(), f.codes.begin(), f.codes.end());
  }
  m.total = m.recon + cfg.gamma * m.commit;
  m.perplexity = CodebookPerplexity(codes_all, cfg.codebook_size);
  opt_.Step(params);
  EmaCodebookUpdate(model_.codebook(), z_all, codes_all, cfg.ema_decay, cfg.ema_epsilon);
  RoundToFloat(model_.codebook().vectors);
  RoundToFloat(model_.codebook().ema_counts);
  RoundToFloat(model_.codebook().ema_sums);
  return m;
}

}  // namespace s2c
