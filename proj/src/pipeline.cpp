// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2c/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "s2c/wav_io.hpp"

namespace s2c {
namespace fs = std::filesystem;
namespace {

uint64_t SubSeed(uint64_t seed, uint64_t tag) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Epoch-shuffled minibatches of indices.
class BatchSampler {
 public:
  BatchSampler(int n, int batch, uint64_t seed) : n_(n), batch_(std::min(batch, n)), rng_(seed) {}

  std::vector<int> Next() {
    std::vector<int> out;
    while (int(out.size()) < batch_) {
      if (pos_ >= order_.size()) Shuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void Shuffle() {
    order_.resize(size_t(n_));
    std::iota(order_.begin(), order_.end(), 0);
    for (int i = n_ - 1; i > 0; --i) std::swap(order_[size_t(i)], order_[size_t(rng_.Index(i + 1))]);
    pos_ = 0;
  }

  int n_;
  int batch_;
  nn::Rng rng_;
  std::vector<int> order_;
  size_t pos_ = 0;
};

void RoundStats(CorpusStats& s) {
  for (Eigen::Index i = 0; i < s.mean.size(); ++i) {
    s.mean[i] = double(float(s.mean[i]));
    s.std[i] = double(float(s.std[i]));
  }
}

CorpusStats FitAndSave(const std::vector<const Mat*>& mats, const std::string& path) {
  CorpusStats s = FitStats(mats);
  RoundStats(s);
  SaveStats(path, s);
  return s;
}

bool ShouldLog(int step, int total, int interval) {
  return step == 1 || step == total || step % interval == 0;
}

std::vector<Split> AllSplits() { return {Split::kTrain, Split::kDev, Split::kTest}; }

void Require(const RunDir& run, const std::string& rel, const std::string& what) {
  if (!run.Has(rel)) throw Error("pipeline", what + " (missing " + run.Path(rel) + ")");
}

double InverterEvalLoss(const InverterModel& inv, const std::vector<const CodeSequence*>& codes,
                        const std::vector<const Mat*>& targets) {
  double sum = 0;
  long frames = 0;
  for (size_t i = 0; i < codes.size(); ++i) {
    ad::Tape t(false);
    ad::Var pred = inv.ForwardVar(t, *codes[i]);
    AlignedTarget a = AlignTarget(*targets[i], pred.rows());
    const double l = InverterLoss(pred, t.Constant(a.frames), a.valid).scalar();
    sum += l * double(a.valid);
    frames += long(a.valid);
  }
  return frames ? sum / double(frames) : 0.0;
}

Json MetricsJson(const VqvaeMetrics& m) {
  return {{"recon", m.recon}, {"commit", m.commit}, {"total", m.total}, {"perplexity", m.perplexity}};
}

}  // namespace

// ---------------------------------------------------------------- RunDir

RunDir::RunDir(const std::string& dir, const ExperimentConfig& cfg)
    : dir_(dir), cfg_(cfg), hash_(ConfigHash(cfg)) {
  cfg_.Validate();
  const fs::path cfg_path = fs::path(dir) / "config.json";
  if (fs::exists(cfg_path)) {
    const std::string existing = ConfigHash(LoadExperimentConfig(cfg_path.string()));
    if (existing != hash_)
      throw Error("run", dir + " holds a run with config hash " + existing + ", not " + hash_);
  }
  for (const char* sub : {"", "metrics", "codes", "eval"}) fs::create_directories(fs::path(dir) / sub);
  SaveExperimentConfig(cfg_path.string(), cfg_);
  std::ofstream((fs::path(dir) / "run.json").string())
      << Json{{"config_hash", hash_}, {"seed", cfg_.seed}}.dump(2) << "\n";
}

RunDir RunDir::Open(const std::string& dir) {
  const fs::path cfg_path = fs::path(dir) / "config.json";
  if (!fs::exists(cfg_path)) throw Error("run", "no run at " + dir + " (config.json missing)");
  RunDir r;
  r.dir_ = dir;
  r.cfg_ = LoadExperimentConfig(cfg_path.string());
  r.hash_ = ConfigHash(r.cfg_);
  return r;
}

std::string RunDir::Path(const std::string& rel) const { return (fs::path(dir_) / rel).string(); }

bool RunDir::Has(const std::string& rel) const { return fs::exists(Path(rel)); }

std::string RunDir::CodeStem(Split s) const {
  return Path(std::string("codes/tgt_") + SplitName(s));
}

MetricsLog::MetricsLog(const std::string& path) : path_(path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("pipeline", "cannot write " + path);
}

void MetricsLog::Write(const Json& record) {
  std::ofstream out(path_, std::ios::app);
  out << record.dump() << "\n";
}

// -------------------------------------------------------------- features

std::vector<UttFeatures> ComputeFeatures(const Manifest& m,
                                         const std::vector<const ManifestEntry*>& entries,
                                         const FeatureConfig& cfg, bool src, bool tgt_mfcc,
                                         bool tgt_linear) {
  std::vector<UttFeatures> out;
  out.reserve(entries.size());
  for (const ManifestEntry* e : entries) {
    UttFeatures f;
    f.entry = e;
    try {
      if (src) f.src_mfcc = ComputeMfcc(ReadWav(m.Resolve(e->src_wav)), cfg).frames;
      if (tgt_mfcc || tgt_linear) {
        const Waveform w = ReadWav(m.Resolve(e->tgt_wav));
        if (tgt_mfcc) f.tgt_mfcc = ComputeMfcc(w, cfg).frames;
        if (tgt_linear) f.tgt_linear = ComputeLinearSpectrogram(w, cfg).frames;
      }
    } catch (const Error& err) {
      throw Error("features", e->utt_id + ": " + err.what());
    }
    out.push_back(std::move(f));
  }
  return out;
}

// ---------------------------------------------------------------- stage 1

VqvaeStageResult TrainVqvaeStage(const Manifest& m, const RunDir& run) {
  const ExperimentConfig& cfg = run.config();
  const auto train = m.Select(Split::kTrain);
  if (train.empty()) throw Error("vqvae", "manifest has no train entries");

  auto feats = ComputeFeatures(m, train, cfg.features, false, true, false);
  std::vector<const Mat*> raw;
  for (const auto& f : feats) raw.push_back(&f.tgt_mfcc);
  const CorpusStats stats = FitAndSave(raw, run.Path("stats_tgt.sp2c"));
  std::vector<Mat> xs;
  for (const auto& f : feats) xs.push_back(Normalize(f.tgt_mfcc, stats));

  VQVAEModel model(cfg.vqvae, SubSeed(cfg.seed, 1));
  VqvaeTrainer trainer(model, SubSeed(cfg.seed, 2));
  BatchSampler sampler(int(xs.size()), cfg.vqvae.batch_size, SubSeed(cfg.seed, 3));
  MetricsLog log(run.Path("metrics/vqvae.jsonl"));
  VqvaeStageResult res;
  for (int step = 1; step <= cfg.vqvae_steps; ++step) {
    std::vector<const Mat*> batch;
    for (int i : sampler.Next()) batch.push_back(&xs[size_t(i)]);
    const VqvaeMetrics met = trainer.Step(batch, std::vector<int>(batch.size(), 0));
    if (step == 1) res.first = met;
    res.last = met;
    if (ShouldLog(step, cfg.vqvae_steps, cfg.eval_interval)) {
      Json rec = MetricsJson(met);
      rec["stage"] = "vqvae";
      rec["step"] = step;
      log.Write(rec);
    }
  }
  if (!model.codebook().initialized()) {
    std::vector<const Mat*> all;
    for (const auto& x : xs) all.push_back(&x);
    nn::Rng rng(SubSeed(cfg.seed, 2));
    model.InitCodebookFromBatch(all, rng);
  }
  SaveVqvae(run.Path("vqvae.ckpt"), model);

  CodeSequence heldout;
  for (Split s : AllSplits()) {
    const auto entries = m.Select(s);
    auto fs_ = ComputeFeatures(m, entries, cfg.features, false, true, false);
    std::vector<std::string> ids;
    std::vector<CodeSequence> codes;
    for (const auto& f : fs_) {
      ids.push_back(f.entry->utt_id);
      codes.push_back(model.ExtractCodes(Normalize(f.tgt_mfcc, stats)));
      if (s != Split::kTrain) heldout.insert(heldout.end(), codes.back().begin(), codes.back().end());
    }
    WriteCodeFile(run.CodeStem(s), ids, codes);
    res.utterances_coded += int(ids.size());
  }
  res.heldout_perplexity = CodebookPerplexity(heldout, cfg.vqvae.codebook_size);
  log.Write({{"stage", "vqvae"},
             {"event", "codes"},
             {"utterances", res.utterances_coded},
             {"heldout_perplexity", res.heldout_perplexity}});
  return res;
}

InverterStageResult TrainInverterStage(const Manifest& m, const RunDir& run) {
  const ExperimentConfig& cfg = run.config();
  Require(run, "vqvae.ckpt", "inverter training needs a trained VQ-VAE");
  Require(run, "codes/tgt_train.txt", "inverter training needs extracted codes");
  const VQVAEModel vq = LoadVqvae(run.Path("vqvae.ckpt"), &cfg.vqvae);
  const auto code_map = ReadCodeFile(run.CodeStem(Split::kTrain));
  const auto train = m.Select(Split::kTrain);
  auto feats = ComputeFeatures(m, train, cfg.features, false, false, true);

  std::vector<CodeSequence> codes;
  std::vector<const Mat*> targets;
  double sq = 0;
  long n = 0;
  for (const auto& f : feats) {
    auto it = code_map.find(f.entry->utt_id);
    if (it == code_map.end()) throw Error("inverter", "no codes for " + f.entry->utt_id);
    codes.push_back(it->second);
    targets.push_back(&f.tgt_linear);
    sq += f.tgt_linear.squaredNorm();
    n += long(f.tgt_linear.size());
  }
  std::vector<const CodeSequence*> code_ptrs;
  for (const auto& c : codes) code_ptrs.push_back(&c);

  InverterModel inv(cfg.inverter, vq.codebook().vectors, SubSeed(cfg.seed, 4));
  inv.SetOutputScale(std::sqrt(sq / double(std::max(n, 1L))) + 1e-8);
  InverterStageResult res;
  res.initial_loss = InverterEvalLoss(inv, code_ptrs, targets);
  InverterTrainer trainer(inv, SubSeed(cfg.seed, 5));
  BatchSampler sampler(int(codes.size()), cfg.inverter.batch_size, SubSeed(cfg.seed, 6));
  MetricsLog log(run.Path("metrics/inverter.jsonl"));
  log.Write({{"stage", "inverter"}, {"step", 0}, {"eval_loss", res.initial_loss}});
  for (int step = 1; step <= cfg.inverter_steps; ++step) {
    std::vector<const CodeSequence*> bc;
    std::vector<const Mat*> bt;
    for (int i : sampler.Next()) {
      bc.push_back(code_ptrs[size_t(i)]);
      bt.push_back(targets[size_t(i)]);
    }
    const double loss = trainer.Step(bc, bt);
    if (ShouldLog(step, cfg.inverter_steps, cfg.eval_interval))
      log.Write({{"stage", "inverter"}, {"step", step}, {"loss", loss}});
  }
  inv.RecalibrateNorm(code_ptrs);
  res.final_loss = InverterEvalLoss(inv, code_ptrs, targets);
  log.Write({{"stage", "inverter"}, {"step", cfg.inverter_steps}, {"eval_loss", res.final_loss}});
  SaveInverter(run.Path("inverter.ckpt"), inv);
  return res;
}

bool Stage1Complete(const RunDir& run) {
  if (!run.Has("vqvae.ckpt") || !run.Has("inverter.ckpt") || !run.Has("stats_tgt.sp2c"))
    return false;
  for (Split s : AllSplits())
    if (!fs::exists(run.CodeStem(s) + ".txt") || !fs::exists(run.CodeStem(s) + ".ids")) return false;
  return true;
}

bool Stage2Complete(const RunDir& run) {
  return Stage1Complete(run) && run.Has("s2s.ckpt") && run.Has("stats_src.sp2c");
}

// ---------------------------------------------------------------- stage 2

double TokenAccuracy(const CodeSequence& hyp, const CodeSequence& ref) {
  if (ref.empty()) return hyp.empty() ? 1.0 : 0.0;
  size_t hit = 0;
  for (size_t i = 0; i < std::min(hyp.size(), ref.size()); ++i) hit += hyp[i] == ref[i];
  return double(hit) / double(ref.size());
}

S2SStageResult TrainS2SStage(const Manifest& m, const RunDir& run) {
  const ExperimentConfig& cfg = run.config();
  if (!Stage1Complete(run))
    throw Error("pipeline", "stage-1 artifacts missing in " + run.dir() +
                                " (run train-vqvae and train-inverter first)");
  const VQVAEModel vq = LoadVqvae(run.Path("vqvae.ckpt"), &cfg.vqvae);
  const CorpusStats tgt_stats = LoadStats(run.Path("stats_tgt.sp2c"));
  const auto train_codes = ReadCodeFile(run.CodeStem(Split::kTrain));
  const auto dev_codes = ReadCodeFile(run.CodeStem(Split::kDev));

  const auto train = m.Select(Split::kTrain);
  auto feats = ComputeFeatures(m, train, cfg.features, true, true, false);
  std::vector<const Mat*> raw;
  for (const auto& f : feats) {
    raw.push_back(&f.src_mfcc);
    auto it = train_codes.find(f.entry->utt_id);
    if (it == train_codes.end() ||
        it->second != vq.ExtractCodes(Normalize(f.tgt_mfcc, tgt_stats)))
      throw Error("pipeline", "stage-1 code cache is stale for " + f.entry->utt_id +
                                  "; rerun train-vqvae");
  }
  const CorpusStats stats = FitAndSave(raw, run.Path("stats_src.sp2c"));
  std::vector<Mat> xs;
  std::vector<CodeSequence> ys;
  for (const auto& f : feats) {
    xs.push_back(Normalize(f.src_mfcc, stats));
    ys.push_back(train_codes.at(f.entry->utt_id));
  }
  const auto dev = m.Select(Split::kDev);
  auto dev_feats = ComputeFeatures(m, dev, cfg.features, true, false, false);
  std::vector<Mat> dev_x;
  std::vector<const CodeSequence*> dev_y;
  for (const auto& f : dev_feats) {
    auto it = dev_codes.find(f.entry->utt_id);
    if (it == dev_codes.end()) throw Error("pipeline", "no dev codes for " + f.entry->utt_id);
    dev_x.push_back(Normalize(f.src_mfcc, stats));
    dev_y.push_back(&it->second);
  }

  S2SModel model(cfg.s2s, SubSeed(cfg.seed, 7));
  S2STrainer trainer(model, SubSeed(cfg.seed, 8));
  BatchSampler sampler(int(xs.size()), cfg.s2s.batch_size, SubSeed(cfg.seed, 9));
  MetricsLog log(run.Path("metrics/s2s.jsonl"));
  S2SStageResult res;
  auto dev_acc = [&]() {
    if (dev_x.empty()) return 0.0;
    double acc = 0;
    for (size_t i = 0; i < dev_x.size(); ++i)
      acc += TokenAccuracy(model.Translate(dev_x[i]).codes, *dev_y[i]);
    return acc / double(dev_x.size());
  };
  for (int step = 1; step <= cfg.s2s_steps; ++step) {
    std::vector<const Mat*> bx;
    std::vector<const CodeSequence*> by;
    for (int i : sampler.Next()) {
      bx.push_back(&xs[size_t(i)]);
      by.push_back(&ys[size_t(i)]);
    }
    const S2SMetrics met = trainer.Step(bx, by);
    if (step == 1) res.first = met;
    res.last = met;
    if (ShouldLog(step, cfg.s2s_steps, cfg.eval_interval)) {
      res.dev_token_acc = dev_acc();
      log.Write({{"stage", "s2s"},
                 {"step", step},
                 {"loss", met.loss},
                 {"token_acc", met.token_acc},
                 {"dev_token_acc", res.dev_token_acc}});
    }
  }
  if (cfg.s2s_steps == 0) res.dev_token_acc = dev_acc();
  SaveS2S(run.Path("s2s.ckpt"), model);
  return res;
}

// --------------------------------------------------------------- inference

LoadedModels LoadModels(const RunDir& run) {
  for (const char* f : {"vqvae.ckpt", "inverter.ckpt", "s2s.ckpt", "stats_src.sp2c"})
    Require(run, f, "inference needs all three trained models");
  const ExperimentConfig& cfg = run.config();
  return LoadedModels{cfg, LoadStats(run.Path("stats_src.sp2c")),
                      LoadS2S(run.Path("s2s.ckpt"), &cfg.s2s),
                      LoadInverter(run.Path("inverter.ckpt"), &cfg.inverter)};
}

InferenceResult RunInference(const Waveform& src, const LoadedModels& models, bool synthesize) {
  InferenceResult r;
  Mat x;
  try {
    x = Normalize(ComputeMfcc(src, models.cfg.features).frames, models.src_stats);
  } catch (const Error& e) {
    throw Error("inference", e.what());
  }
  r.translation = models.s2s.Translate(x);
  if (synthesize) {
    if (r.translation.codes.empty()) throw Error("inference", "decoder produced no codes");
    r.synthesis = Synthesize(r.translation.codes, models.inverter, models.cfg.features);
  }
  return r;
}

RunEvaluation EvaluateRun(const Manifest& m, const RunDir& run, Split split,
                          const std::map<std::string, Tokens>* hyp_transcripts, bool write_wavs) {
  const LoadedModels models = LoadModels(run);
  const auto ref_codes = ReadCodeFile(run.CodeStem(split));
  const auto entries = m.Select(split);
  if (entries.empty()) throw Error("eval", std::string("split ") + SplitName(split) + " is empty");
  if (write_wavs) fs::create_directories(run.Path(std::string("eval/wav_") + SplitName(split)));

  RunEvaluation out;
  std::vector<std::string> ids;
  std::map<std::string, Tokens> hyps, refs;
  std::vector<CodeSequence> hyp_list, ref_list;
  double acc = 0;
  for (const ManifestEntry* e : entries) {
    auto rit = ref_codes.find(e->utt_id);
    if (rit == ref_codes.end()) throw Error("eval", "no reference codes for " + e->utt_id);
    ids.push_back(e->utt_id);
    refs[e->utt_id] = ToTokens(rit->second);
    InferenceResult inf;
    try {
      inf = RunInference(ReadWav(m.Resolve(e->src_wav)), models,
                         write_wavs);
    } catch (const Error&) {
      continue;  // reported as missing
    }
    hyps[e->utt_id] = ToTokens(inf.translation.codes);
    hyp_list.push_back(inf.translation.codes);
    ref_list.push_back(rit->second);
    acc += TokenAccuracy(inf.translation.codes, rit->second);
    out.truncated += inf.translation.truncated;
    if (write_wavs)
      WriteWav(run.Path(std::string("eval/wav_") + SplitName(split) + "/" + e->utt_id + ".wav"),
               inf.synthesis.wav, WavEncoding::kPcm16);
  }
  out.report = Evaluate(ids, hyps, refs);
  out.token_acc = acc / double(entries.size());
  if (hyp_list.size() >= 2) {
    std::vector<CodeSequence> shifted(ref_list.begin() + 1, ref_list.end());
    shifted.push_back(ref_list.front());
    out.control_bleu = CorpusBleu(hyp_list, shifted).bleu;
  }
  if (hyp_transcripts) {
    std::vector<Tokens> h, r;
    for (const ManifestEntry* e : entries) {
      auto it = hyp_transcripts->find(e->utt_id);
      if (it == hyp_transcripts->end() || e->transcript_tgt.empty()) continue;
      h.push_back(it->second);
      Tokens ref;
      std::istringstream ss(e->transcript_tgt);
      for (std::string w; ss >> w;) ref.push_back(w);
      r.push_back(ref);
    }
    if (!h.empty()) out.report.word_bleu = CorpusBleu(h, r);
  }

  const std::string stem = run.Path(std::string("eval/") + SplitName(split));
  WriteReportTsv(stem + ".tsv", out.report);
  Json j{{"split", SplitName(split)},
         {"config_hash", run.hash()},
         {"code_bleu", out.report.corpus.bleu},
         {"precisions", out.report.corpus.precisions},
         {"brevity_penalty", out.report.corpus.brevity_penalty},
         {"token_error_rate", out.report.ter},
         {"exact_match", out.report.exact_match},
         {"token_acc", out.token_acc},
         {"control_bleu", out.control_bleu},
         {"truncated", out.truncated},
         {"missing", out.report.missing}};
  if (out.report.word_bleu) j["word_bleu"] = out.report.word_bleu->bleu;
  std::ofstream(stem + ".json") << j.dump(2) << "\n";
  return out;
}

// -------------------------------------------------------------------- grid

std::vector<GridRow> RunGrid(const Manifest& m, const ExperimentConfig& base,
                             const std::string& root, double step_scale, Split split,
                             const std::function<void(const GridRow&)>& on_row) {
  if (!(step_scale > 0)) throw Error("grid", "step scale must be positive");
  auto scale = [&](int s) { return s == 0 ? 0 : std::max(1, int(std::lround(s * step_scale))); };
  std::vector<GridRow> rows;
  for (int k : base.grid.codebook_sizes) {
    for (int r : base.grid.time_reductions) {
      GridRow row;
      row.codebook_size = k;
      row.time_reduction = r;
      try {
        ExperimentConfig c = base;
        c.vqvae.codebook_size = k;
        c.vqvae.time_reduction = r;
        c.vqvae.stride_schedule.clear();
        c.vqvae_steps = scale(base.vqvae_steps);
        c.inverter_steps = scale(base.inverter_steps);
        c.s2s_steps = scale(base.s2s_steps);
        c.Sync();
        c.Validate();
        char name[64];
        std::snprintf(name, sizeof(name), "K%d_TR%d_", k, r);
        RunDir run((fs::path(root) / "grid" / (name + ConfigHash(c))).string(), c);
        TrainVqvaeStage(m, run);
        TrainInverterStage(m, run);
        TrainS2SStage(m, run);
        const RunEvaluation ev = EvaluateRun(m, run, split);
        row.ok = true;
        row.token_bleu = ev.report.corpus.bleu;
        row.token_error_rate = ev.report.ter;
      } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
      }
      if (on_row) on_row(row);
      rows.push_back(row);
    }
  }
  return rows;
}

std::string FormatGrid(const std::vector<GridRow>& rows) {
  std::string s = "codebook\ttime_reduction\ttoken_BLEU\ttoken_error_rate\n";
  char buf[128];
  for (const auto& r : rows) {
    if (r.ok)
      std::snprintf(buf, sizeof(buf), "%d\t%d\t%.2f\t%.4f\n", r.codebook_size, r.time_reduction,
                    r.token_bleu, r.token_error_rate);
    else
      std::snprintf(buf, sizeof(buf), "%d\t%d\t-\t-\n", r.codebook_size, r.time_reduction);
    s += buf;
  }
  return s;
}

}  // namespace s2c
