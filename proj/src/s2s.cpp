// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2c/s2s.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace s2c {

using ad::Var;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log-softmax of one row of values (entries may be -inf).
Eigen::RowVectorXd LogSoftmax(const Mat& logits) {
  const double m = logits.row(0).maxCoeff();
  double z = 0;
  for (Eigen::Index c = 0; c < logits.cols(); ++c) z += std::exp(logits(0, c) - m);
  return (logits.row(0).array() - (m + std::log(z))).matrix();
}

int ArgMax(const Eigen::RowVectorXd& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = int(i);
  return best;
}

/// Concatenates groups of `factor` consecutive frames (last frame replicated
/// to fill the final group).
Var Pyramid(ad::Tape& t, const Var& h, int factor) {
  const Eigen::Index S = h.rows();
  const Eigen::Index groups = (S + factor - 1) / factor;
  Var padded = h;
  if (groups * factor != S) {
    std::vector<Var> parts{h};
    Var last = ad::SliceRows(h, S - 1, 1);
    for (Eigen::Index i = S; i < groups * factor; ++i) parts.push_back(last);
    padded = ad::ConcatRows(parts);
  }
  (void)t;
  return ad::Reshape(padded, groups, h.cols() * factor);
}

Eigen::Index Reduced(Eigen::Index len, int layers, int factor) {
  for (int l = 1; l < layers; ++l) len = (len + factor - 1) / factor;
  return len;
}

}  // namespace

const char* AttentionKindName(AttentionKind k) {
  return k == AttentionKind::kMlp ? "mlp" : "dot";
}

AttentionKind ParseAttentionKind(const std::string& s) {
  if (s == "mlp") return AttentionKind::kMlp;
  if (s == "dot") return AttentionKind::kDot;
  throw Error("s2s", "unknown attention kind '" + s + "' (expected mlp or dot)");
}

void S2SConfig::Validate() const {
  if (codebook_size < 2) throw Error("s2s", "codebook size must be >= 2");
  if (enc_layers < 1 || enc_hidden < 1 || dec_hidden < 1 || embed_dim < 1 ||
      attention_dim < 1 || input_dim < 1)
    throw Error("s2s", "layer sizes must be positive");
  if (pyramid_factor < 1) throw Error("s2s", "pyramid_factor must be >= 1");
  if (max_decode_len < 1) throw Error("s2s", "max_decode_len must be >= 1");
  if (beam < 1) throw Error("s2s", "beam must be >= 1");
  if (!(teacher_forcing >= 0 && teacher_forcing <= 1))
    throw Error("s2s", "teacher_forcing must be a probability");
  if (batch_size < 1) throw Error("s2s", "batch_size must be >= 1");
}

int EncoderStates::valid() const { return int(std::count(mask.begin(), mask.end(), true)); }

Var S2SLoss(const Var& logits, std::span<const int> targets) {
  return ad::CrossEntropy(logits, targets);
}

S2SModel::S2SModel(const S2SConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.Validate();
  nn::Rng rng(seed);
  const int H = cfg_.enc_hidden, M = cfg_.encoder_width(), N = cfg_.dec_hidden;
  for (int l = 0; l < cfg_.enc_layers; ++l) {
    const int in = l == 0 ? cfg_.input_dim : M * cfg_.pyramid_factor;
    enc_.emplace_back().Init("enc.layer" + std::to_string(l), in, H, rng);
  }
  embedding_.name = "dec.embedding";
  embedding_.value = nn::UniformMat(cfg_.vocab(), cfg_.embed_dim, 0.1, rng);
  RoundToFloat(embedding_.value);
  dec_.Init("dec.lstm", cfg_.embed_dim + M, N, rng);
  if (cfg_.attention == AttentionKind::kMlp) {
    att_keys_.Init("att.keys", M, cfg_.attention_dim, rng);
    att_query_.Init("att.query", N, cfg_.attention_dim, rng);
    att_v_.name = "att.v";
    att_v_.value = nn::UniformMat(cfg_.attention_dim, 1,
                                  1.0 / std::sqrt(double(cfg_.attention_dim)), rng);
    RoundToFloat(att_v_.value);
  } else {
    att_query_.Init("att.query", N, M, rng);
  }
  combine_.Init("dec.combine", N + M, N, rng);
  output_.Init("dec.output", N, cfg_.vocab(), rng);
}

nn::ParamList S2SModel::Params() {
  nn::ParamList out;
  for (auto& l : enc_) l.Collect(out);
  out.push_back(&embedding_);
  dec_.Collect(out);
  if (cfg_.attention == AttentionKind::kMlp) {
    att_keys_.Collect(out);
    att_query_.Collect(out);
    out.push_back(&att_v_);
  } else {
    att_query_.Collect(out);
  }
  combine_.Collect(out);
  output_.Collect(out);
  return out;
}

std::vector<std::pair<std::string, Mat*>> S2SModel::NamedTensors() {
  std::vector<std::pair<std::string, Mat*>> out;
  for (ad::Parameter* p : Params()) out.emplace_back(p->name, &p->value);
  return out;
}

EncoderStates S2SModel::Encode(ad::Tape& t, const Mat& x, int valid_len) const {
  if (x.rows() == 0) throw Error("s2s", "empty input sequence");
  if (x.cols() != cfg_.input_dim)
    throw Error("s2s", "input has " + std::to_string(x.cols()) + " dims, expected " +
                           std::to_string(cfg_.input_dim));
  const Eigen::Index valid = valid_len < 0 ? x.rows() : valid_len;
  if (valid < 1 || valid > x.rows()) throw Error("s2s", "invalid input length");

  Var h = t.Constant(x.topRows(valid));
  for (int l = 0; l < cfg_.enc_layers; ++l) {
    if (l > 0 && cfg_.pyramid_factor > 1) h = Pyramid(t, h, cfg_.pyramid_factor);
    h = enc_[std::size_t(l)].Forward(t, h);
  }
  const Eigen::Index full = Reduced(x.rows(), cfg_.enc_layers, cfg_.pyramid_factor);
  EncoderStates enc;
  enc.mask.assign(std::size_t(full), false);
  std::fill(enc.mask.begin(), enc.mask.begin() + h.rows(), true);
  if (full > h.rows()) {
    const Var parts[] = {h, t.Constant(Mat::Zero(full - h.rows(), h.cols()))};
    h = ad::ConcatRows(parts);
  }
  enc.states = h;
  return enc;
}

Var S2SModel::PrepareAttention(ad::Tape& t, const EncoderStates& enc) const {
  if (cfg_.attention == AttentionKind::kMlp) return att_keys_.Forward(t, enc.states);
  return ad::Transpose(enc.states);
}

AttentionStep S2SModel::Attend(ad::Tape& t, const EncoderStates& enc, const Var& keys,
                               const Var& dec_state) const {
  Var scores;
  if (cfg_.attention == AttentionKind::kMlp) {
    Var e = ad::Tanh(ad::AddRow(keys, att_query_.Forward(t, dec_state)));
    scores = ad::Transpose(ad::MatMul(e, t.Param(att_v_)));
  } else {
    scores = ad::MatMul(att_query_.Forward(t, dec_state), keys);
  }
  AttentionStep a;
  a.weights = ad::SoftmaxRows(scores, enc.mask);
  a.context = ad::MatMul(a.weights, enc.states);
  return a;
}

nn::Lstm::State S2SModel::InitialState(ad::Tape& t) const { return dec_.ZeroState(t); }

Var S2SModel::InitialContext(ad::Tape& t) const {
  return t.Constant(Mat::Zero(1, cfg_.encoder_width()));
}

DecoderStepOut S2SModel::DecoderStep(ad::Tape& t, int prev_token, const Var& prev_context,
                                     const nn::Lstm::State& state, const EncoderStates& enc,
                                     const Var& keys) const {
  if (prev_token < 0 || prev_token >= cfg_.vocab())
    throw Error("s2s", "token id " + std::to_string(prev_token) + " outside vocabulary");
  const int idx[] = {prev_token};
  const Var in[] = {ad::GatherRows(t.Param(embedding_), idx), prev_context};
  Var proj = ad::AddRow(ad::MatMul(ad::ConcatCols(in), t.Param(dec_.w_input)),
                        t.Param(dec_.bias));
  DecoderStepOut out;
  out.state = dec_.Step(t, proj, state);
  out.attention = Attend(t, enc, keys, out.state.h);
  const Var both[] = {out.state.h, out.attention.context};
  Var hidden = ad::Tanh(combine_.Forward(t, ad::ConcatCols(both)));
  const int bos[] = {cfg_.bos()};
  out.logits = ad::FillColumns(output_.Forward(t, hidden), bos, kNegInf);
  return out;
}

Var S2SModel::ForcedLogits(ad::Tape& t, const Mat& x, const CodeSequence& y,
                           int valid_len) const {
  for (int c : y)
    if (c < 0 || c >= cfg_.codebook_size)
      throw Error("s2s", "target code " + std::to_string(c) + " outside codebook");
  EncoderStates enc = Encode(t, x, valid_len);
  Var keys = PrepareAttention(t, enc);
  nn::Lstm::State state = InitialState(t);
  Var ctx = InitialContext(t);
  std::vector<Var> rows;
  int prev = cfg_.bos();
  for (std::size_t i = 0; i <= y.size(); ++i) {
    DecoderStepOut s = DecoderStep(t, prev, ctx, state, enc, keys);
    rows.push_back(s.logits);
    state = s.state;
    ctx = s.attention.context;
    if (i < y.size()) prev = y[i];
  }
  return ad::ConcatRows(rows);
}

double S2SModel::Loss(const Mat& x, const CodeSequence& y, int valid_len) const {
  ad::Tape t(false);
  std::vector<int> targets(y.begin(), y.end());
  targets.push_back(cfg_.eos());
  return S2SLoss(ForcedLogits(t, x, y, valid_len), targets).scalar();
}

TranslateResult S2SModel::Translate(const Mat& x) const {
  return cfg_.beam <= 1 ? Greedy(x) : BeamSearch(x, cfg_.beam);
}

TranslateResult S2SModel::Greedy(const Mat& x) const {
  ad::Tape t(false);
  EncoderStates enc = Encode(t, x);
  Var keys = PrepareAttention(t, enc);
  nn::Lstm::State state = InitialState(t);
  Var ctx = InitialContext(t);
  TranslateResult r;
  std::vector<Eigen::RowVectorXd> att;
  int prev = cfg_.bos();
  bool finished = false;
  for (int step = 0; step < cfg_.max_decode_len; ++step) {
    DecoderStepOut s = DecoderStep(t, prev, ctx, state, enc, keys);
    att.push_back(s.attention.weights.value().row(0));
    const Eigen::RowVectorXd logp = LogSoftmax(s.logits.value());
    const int tok = ArgMax(logp);
    r.log_prob += logp(tok);
    if (tok == cfg_.eos()) {
      finished = true;
      break;
    }
    r.codes.push_back(tok);
    prev = tok;
    state = s.state;
    ctx = s.attention.context;
  }
  if (!finished) r.truncated = true;
  r.attention.resize(Eigen::Index(att.size()), enc.states.rows());
  for (std::size_t i = 0; i < att.size(); ++i) r.attention.row(Eigen::Index(i)) = att[i];
  return r;
}

TranslateResult S2SModel::BeamSearch(const Mat& x, int beam) const {
  struct Hyp {
    CodeSequence codes;
    double log_prob = 0;
    nn::Lstm::State state;
    Var ctx;
    std::vector<Eigen::RowVectorXd> att;
    bool finished = false;
    double Score() const { return log_prob / double(codes.size() + 1); }
  };
  ad::Tape t(false);
  EncoderStates enc = Encode(t, x);
  Var keys = PrepareAttention(t, enc);
  std::vector<Hyp> active(1);
  active[0].state = InitialState(t);
  active[0].ctx = InitialContext(t);
  std::vector<Hyp> done;

  for (int step = 0; step < cfg_.max_decode_len && !active.empty(); ++step) {
    struct Cand {
      std::size_t parent;
      int token;
      double log_prob;
      DecoderStepOut out;
    };
    std::vector<Cand> cands;
    for (std::size_t h = 0; h < active.size(); ++h) {
      const Hyp& hyp = active[h];
      const int prev = hyp.codes.empty() ? cfg_.bos() : hyp.codes.back();
      DecoderStepOut s = DecoderStep(t, prev, hyp.ctx, hyp.state, enc, keys);
      const Eigen::RowVectorXd logp = LogSoftmax(s.logits.value());
      std::vector<int> order;
      for (int k = 0; k < cfg_.vocab(); ++k)
        if (k != cfg_.bos()) order.push_back(k);
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return logp(a) > logp(b); });
      for (int i = 0; i < beam && i < int(order.size()); ++i)
        cands.push_back({h, order[std::size_t(i)], hyp.log_prob + logp(order[std::size_t(i)]), s});
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Cand& a, const Cand& b) { return a.log_prob > b.log_prob; });
    std::vector<Hyp> next;
    for (const Cand& c : cands) {
      if (int(next.size()) >= beam) break;
      Hyp h = active[c.parent];
      h.log_prob = c.log_prob;
      h.att.push_back(c.out.attention.weights.value().row(0));
      if (c.token == cfg_.eos()) {
        h.finished = true;
        done.push_back(std::move(h));
        continue;
      }
      h.codes.push_back(c.token);
      h.state = c.out.state;
      h.ctx = c.out.attention.context;
      next.push_back(std::move(h));
    }
    active = std::move(next);
    if (int(done.size()) >= beam) break;
  }

  TranslateResult r;
  const Hyp* best = nullptr;
  for (const Hyp& h : done)
    if (best == nullptr || h.Score() > best->Score()) best = &h;
  if (best == nullptr) {
    for (const Hyp& h : active)
      if (best == nullptr || h.Score() > best->Score()) best = &h;
    r.truncated = true;
  }
  if (best == nullptr) {
    r.truncated = true;
    return r;
  }
  r.codes = best->codes;
  r.log_prob = best->log_prob;
  r.attention.resize(Eigen::Index(best->att.size()), enc.states.rows());
  for (std::size_t i = 0; i < best->att.size(); ++i)
    r.attention.row(Eigen::Index(i)) = best->att[i];
  return r;
}

// ---- training -------------------------------------------------------------

S2STrainer::S2STrainer(S2SModel& model, uint64_t seed)
    : model_(model),
      opt_(model.config().learning_rate, 0.9, 0.999, 1e-8, model.config().clip_norm),
      rng_(seed ^ 0x525ULL) {}

S2SMetrics S2STrainer::Step(const std::vector<const Mat*>& sources,
                            const std::vector<const CodeSequence*>& targets) {
  if (sources.empty() || sources.size() != targets.size())
    throw Error("s2s", "batch needs matching, nonempty source/target lists");
  const S2SConfig& cfg = model_.config();
  double total_tokens = 0;
  for (const CodeSequence* y : targets) total_tokens += double(y->size() + 1);

  S2SMetrics m;
  long correct = 0;
  for (std::size_t b = 0; b < sources.size(); ++b) {
    ad::Tape t(true);
    const CodeSequence& y = *targets[b];
    CodeSequence fed = y;
    if (cfg.teacher_forcing < 1.0) {
      // scheduled sampling: replace some inputs by the model's own guess
      Var probe = model_.ForcedLogits(t, *sources[b], y);
      for (std::size_t i = 0; i < y.size(); ++i)
        if (rng_.Uniform() >= cfg.teacher_forcing)
          fed[i] = ArgMax(probe.value().row(Eigen::Index(i))) % cfg.codebook_size;
    }
    Var logits = model_.ForcedLogits(t, *sources[b], fed);
    std::vector<int> tgt(y.begin(), y.end());
    tgt.push_back(cfg.eos());
    Var loss = S2SLoss(logits, tgt);
    if (!std::isfinite(loss.scalar()))
      throw Error("s2s", "non-finite loss " + std::to_string(loss.scalar()));
    const double w = double(tgt.size()) / total_tokens;
    t.Backward(loss, w);
    m.loss += w * loss.scalar();
    for (std::size_t i = 0; i < tgt.size(); ++i)
      if (ArgMax(logits.value().row(Eigen::Index(i))) == tgt[i]) ++correct;
  }
  m.tokens = long(total_tokens);
  m.token_acc = double(correct) / total_tokens;
  opt_.Step(model_.Params());
  return m;
}

}  // namespace s2c
