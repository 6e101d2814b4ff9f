// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

// s2c: command-line driver for the speech-to-code pipeline.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "s2c/pipeline.hpp"
#include "s2c/wav_io.hpp"

namespace fs = std::filesystem;
using namespace s2c;

namespace {

struct Globals {
  std::optional<uint64_t> seed;
  std::string config;
  std::string run_dir;
  std::string manifest;
};

// key=value pairs for the one-line summary
class Summary {
 public:
  explicit Summary(std::string cmd) : line_("s2c " + std::move(cmd) + " status=ok") {}
  template <typename T>
  Summary& Add(const std::string& key, const T& value) {
    std::ostringstream ss;
    ss << value;
    std::string v = ss.str();
    if (v.find(' ') != std::string::npos) v = "\"" + v + "\"";
    line_ += " " + key + "=" + v;
    return *this;
  }
  Summary& AddF(const std::string& key, double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", value);
    return Add(key, std::string(buf));
  }
  void Print() const { std::cout << line_ << std::endl; }

 private:
  std::string line_;
};

std::string RootDir(const Globals& g) {
  if (!g.run_dir.empty()) return g.run_dir;
  if (const char* env = std::getenv("SP2C_RUN_DIR"); env && *env) return env;
  return "runs";
}

ExperimentConfig ResolveConfig(const Globals& g) {
  ExperimentConfig cfg;
  const fs::path root_cfg = fs::path(RootDir(g)) / "config.json";
  if (!g.config.empty())
    cfg = LoadExperimentConfig(g.config);
  else if (fs::exists(root_cfg))
    cfg = LoadExperimentConfig(root_cfg.string());
  else
    cfg = ExperimentConfig::Toy();
  if (g.seed) cfg.seed = *g.seed;
  cfg.Validate();
  return cfg;
}

// A root that already holds config.json with the same hash is the run
// itself; otherwise the run lives in root/<config hash>.
std::string RunPath(const Globals& g, const ExperimentConfig& cfg) {
  const fs::path root(RootDir(g));
  const fs::path root_cfg = root / "config.json";
  if (fs::exists(root_cfg) && ConfigHash(LoadExperimentConfig(root_cfg.string())) == ConfigHash(cfg))
    return root.string();
  return (root / ConfigHash(cfg)).string();
}

RunDir OpenRun(const Globals& g) {
  const ExperimentConfig cfg = ResolveConfig(g);
  return RunDir(RunPath(g, cfg), cfg);
}

std::string ManifestPath(const Globals& g, const RunDir* run) {
  if (!g.manifest.empty()) return g.manifest;
  if (run && run->Has("manifest.path")) {
    std::ifstream in(run->Path("manifest.path"));
    std::string p;
    std::getline(in, p);
    if (!p.empty()) return p;
  }
  return (fs::path(RootDir(g)) / "corpus" / "manifest.tsv").string();
}

Manifest LoadManifestFor(const Globals& g, const RunDir& run) {
  const std::string path = ManifestPath(g, &run);
  Manifest m = ReadManifest(path);
  std::ofstream(run.Path("manifest.path")) << fs::absolute(path).string() << "\n";
  return m;
}

std::string Stem(const std::string& path) {
  fs::path p(path);
  if (p.extension() == ".txt" || p.extension() == ".ids") p.replace_extension();
  return p.string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"speech2code: textless speech-to-speech translation through discrete codes"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Random seed (part of the config hash)");
  app.add_option("--config", g.config, "Experiment config JSON");
  app.add_option("--run-dir", g.run_dir, "Run root (env SP2C_RUN_DIR)");
  app.add_option("--manifest", g.manifest, "Corpus manifest TSV");

  // make-corpus
  auto* mk = app.add_subcommand("make-corpus", "Write the synthetic paired tone corpus");
  int pairs = 40;
  std::string corpus_out;
  mk->add_option("--pairs", pairs, "Number of utterance pairs")->check(CLI::PositiveNumber);
  mk->add_option("--out", corpus_out, "Output directory (default <run-dir>/corpus)");

  // extract-features
  auto* fx = app.add_subcommand("extract-features", "Write MFCC and spectrogram SP2C files");

  // stage training
  bool skip_existing = false;
  auto* tv = app.add_subcommand("train-vqvae", "Stage 1: VQ-VAE on target MFCC, extract codes");
  auto* ti = app.add_subcommand("train-inverter", "Stage 1: codebook inverter");
  auto* ts = app.add_subcommand("train-s2s", "Stage 2: seq2seq from source MFCC to target codes");
  for (auto* sc : {tv, ti, ts})
    sc->add_flag("--skip-existing", skip_existing, "Keep an existing checkpoint");

  // encode
  auto* enc = app.add_subcommand("encode", "Extract target codes (all splits, or the given WAVs)");
  std::vector<std::string> enc_wavs;
  std::string enc_out;
  enc->add_option("wavs", enc_wavs, "WAV files to encode");
  enc->add_option("--out", enc_out, "Output stem for <stem>.txt/<stem>.ids");

  // synthesize
  auto* syn = app.add_subcommand("synthesize", "Codes text file -> WAVs via inverter + Griffin-Lim");
  std::string syn_in, syn_out;
  bool syn_spec = false;
  syn->add_option("codes", syn_in, "Code file (<stem>.txt, optional <stem>.ids)")->required();
  syn->add_option("--out-dir", syn_out, "Output directory (default <run>/synth)");
  syn->add_flag("--spectrogram", syn_spec, "Also write the predicted spectrogram");

  // translate
  auto* tr = app.add_subcommand("translate", "Source WAV -> target codes and WAV");
  std::string tr_in, tr_out;
  int tr_beam = 0;
  tr->add_option("wav", tr_in, "Source WAV")->required();
  tr->add_option("--out", tr_out, "Output WAV (default <input stem>.translated.wav)");
  tr->add_option("--beam", tr_beam, "Beam width override")->check(CLI::NonNegativeNumber);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score translated codes on a split");
  std::string ev_split = "test", ev_hyp;
  bool ev_wavs = false;
  ev->add_option("--split", ev_split, "train|dev|test");
  ev->add_option("--hyp-transcripts", ev_hyp, "External word transcripts: <utt_id> words...");
  ev->add_flag("--wavs", ev_wavs, "Also synthesize WAVs");

  // grid
  auto* gr = app.add_subcommand("grid", "Train and score every (K, time_reduction) cell");
  double grid_scale = 1.0;
  std::string grid_split = "test";
  gr->add_option("--step-scale", grid_scale, "Multiplier on all step counts")
      ->check(CLI::PositiveNumber);
  gr->add_option("--split", grid_split, "Split scored per cell");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (*seed_opt) g.seed = seed_value;

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (*mk) {
      const ExperimentConfig cfg = ResolveConfig(g);
      const std::string out = corpus_out.empty() ? (fs::path(RootDir(g)) / "corpus").string()
                                                 : corpus_out;
      const Manifest m = MakeToyCorpus(out, cfg.seed, pairs);
      Summary(cmd)
          .Add("out", out)
          .Add("pairs", m.entries.size())
          .Add("wavs", 2 * m.entries.size())
          .Add("train", m.Select(Split::kTrain).size())
          .Add("dev", m.Select(Split::kDev).size())
          .Add("test", m.Select(Split::kTest).size())
          .Print();
    } else if (*fx) {
      const RunDir run = OpenRun(g);
      const Manifest m = LoadManifestFor(g, run);
      std::vector<const ManifestEntry*> all;
      for (const auto& e : m.entries) all.push_back(&e);
      const auto feats = ComputeFeatures(m, all, run.config().features, true, true, true);
      fs::create_directories(run.Path("features"));
      for (const auto& f : feats) {
        const std::string base = run.Path("features/" + f.entry->utt_id);
        WriteTensorFile(base + ".src.mfcc.sp2c", f.src_mfcc, FeatureKind::kMfcc39);
        WriteTensorFile(base + ".tgt.mfcc.sp2c", f.tgt_mfcc, FeatureKind::kMfcc39);
        WriteTensorFile(base + ".tgt.linear.sp2c", f.tgt_linear, FeatureKind::kLinear1025);
      }
      Summary(cmd).Add("run", run.dir()).Add("utterances", feats.size()).Print();
    } else if (*tv) {
      const RunDir run = OpenRun(g);
      const Manifest m = LoadManifestFor(g, run);
      if (skip_existing && run.Has("vqvae.ckpt")) {
        Summary(cmd).Add("run", run.dir()).Add("hash", run.hash()).Add("skipped", 1).Print();
      } else {
        const auto r = TrainVqvaeStage(m, run);
        Summary(cmd)
            .Add("run", run.dir())
            .Add("hash", run.hash())
            .AddF("recon_first", r.first.recon)
            .AddF("recon_last", r.last.recon)
            .AddF("perplexity", r.last.perplexity)
            .AddF("heldout_perplexity", r.heldout_perplexity)
            .Add("coded", r.utterances_coded)
            .Print();
      }
    } else if (*ti) {
      const RunDir run = OpenRun(g);
      const Manifest m = LoadManifestFor(g, run);
      if (skip_existing && run.Has("inverter.ckpt")) {
        Summary(cmd).Add("run", run.dir()).Add("hash", run.hash()).Add("skipped", 1).Print();
      } else {
        const auto r = TrainInverterStage(m, run);
        Summary(cmd)
            .Add("run", run.dir())
            .Add("hash", run.hash())
            .AddF("loss_initial", r.initial_loss)
            .AddF("loss_final", r.final_loss)
            .Print();
      }
    } else if (*ts) {
      const RunDir run = OpenRun(g);
      if (!Stage1Complete(run))
        throw Error("pipeline", "stage-1 artifacts missing in " + run.dir());
      const Manifest m = LoadManifestFor(g, run);
      if (skip_existing && run.Has("s2s.ckpt")) {
        Summary(cmd).Add("run", run.dir()).Add("hash", run.hash()).Add("skipped", 1).Print();
      } else {
        const auto r = TrainS2SStage(m, run);
        Summary(cmd)
            .Add("run", run.dir())
            .Add("hash", run.hash())
            .AddF("loss_first", r.first.loss)
            .AddF("loss_last", r.last.loss)
            .AddF("token_acc", r.last.token_acc)
            .AddF("dev_token_acc", r.dev_token_acc)
            .Print();
      }
    } else if (*enc) {
      const RunDir run = OpenRun(g);
      if (!run.Has("vqvae.ckpt") || !run.Has("stats_tgt.sp2c"))
        throw Error("pipeline", "stage-1 artifacts missing in " + run.dir());
      const VQVAEModel vq = LoadVqvae(run.Path("vqvae.ckpt"), &run.config().vqvae);
      const CorpusStats stats = LoadStats(run.Path("stats_tgt.sp2c"));
      std::vector<std::string> ids;
      std::vector<CodeSequence> codes;
      if (enc_wavs.empty()) {
        const Manifest m = LoadManifestFor(g, run);
        for (Split s : {Split::kTrain, Split::kDev, Split::kTest}) {
          std::vector<std::string> sid;
          std::vector<CodeSequence> sc;
          for (const auto& f : ComputeFeatures(m, m.Select(s), run.config().features, false, true,
                                               false)) {
            sid.push_back(f.entry->utt_id);
            sc.push_back(vq.ExtractCodes(Normalize(f.tgt_mfcc, stats)));
          }
          WriteCodeFile(run.CodeStem(s), sid, sc);
          ids.insert(ids.end(), sid.begin(), sid.end());
          codes.insert(codes.end(), sc.begin(), sc.end());
        }
      } else {
        for (const auto& w : enc_wavs) {
          ids.push_back(fs::path(w).stem().string());
          codes.push_back(vq.ExtractCodes(
              Normalize(ComputeMfcc(ReadWav(w), run.config().features).frames, stats)));
        }
        WriteCodeFile(enc_out.empty() ? run.Path("codes/encoded") : Stem(enc_out), ids, codes);
      }
      size_t tokens = 0;
      for (const auto& c : codes) tokens += c.size();
      Summary(cmd).Add("run", run.dir()).Add("utterances", ids.size()).Add("tokens", tokens).Print();
    } else if (*syn) {
      const RunDir run = OpenRun(g);
      if (!run.Has("inverter.ckpt")) throw Error("pipeline", "inverter checkpoint missing");
      const InverterModel inv = LoadInverter(run.Path("inverter.ckpt"), &run.config().inverter);
      const std::string stem = Stem(syn_in);
      std::vector<std::string> ids;
      std::vector<CodeSequence> seqs;
      if (fs::exists(stem + ".ids")) {
        for (const auto& [id, c] : ReadCodeFile(stem)) {
          ids.push_back(id);
          seqs.push_back(c);
        }
      } else {
        std::ifstream in(syn_in);
        if (!in) throw Error("synthesize", "cannot open " + syn_in);
        std::string line;
        for (int i = 0; std::getline(in, line); ++i) {
          ids.push_back("utt" + std::to_string(i));
          seqs.push_back(ParseCodeLine(line));
        }
      }
      const std::string out = syn_out.empty() ? run.Path("synth") : syn_out;
      fs::create_directories(out);
      double sc_sum = 0;
      for (size_t i = 0; i < ids.size(); ++i) {
        const SynthesisResult r = Synthesize(seqs[i], inv, run.config().features);
        WriteWav((fs::path(out) / (ids[i] + ".wav")).string(), r.wav, WavEncoding::kPcm16);
        if (syn_spec)
          WriteTensorFile((fs::path(out) / (ids[i] + ".linear.sp2c")).string(),
                          r.spectrogram.frames, FeatureKind::kLinear1025);
        sc_sum += r.spectral_convergence;
      }
      Summary(cmd)
          .Add("out", out)
          .Add("utterances", ids.size())
          .AddF("mean_sc", ids.empty() ? 0.0 : sc_sum / double(ids.size()))
          .Print();
    } else if (*tr) {
      const RunDir run = OpenRun(g);
      LoadedModels models = LoadModels(run);
      if (tr_beam > 0) {
        S2SConfig c = models.s2s.config();
        c.beam = tr_beam;
        S2SModel beam_model(c, 0);
        auto dst = beam_model.NamedTensors();
        auto src = models.s2s.NamedTensors();
        for (size_t i = 0; i < dst.size(); ++i) *dst[i].second = *src[i].second;
        models.s2s = std::move(beam_model);
      }
      const InferenceResult r = RunInference(ReadWav(tr_in), models);
      fs::path out = tr_out.empty() ? fs::path(tr_in).replace_extension(".translated.wav")
                                    : fs::path(tr_out);
      WriteWav(out.string(), r.synthesis.wav, WavEncoding::kPcm16);
      const std::string stem = fs::path(out).replace_extension().string();
      WriteCodeFile(stem + ".codes", {fs::path(tr_in).stem().string()}, {r.translation.codes});
      Json diag{{"log_prob", r.translation.log_prob},
                {"truncated", r.translation.truncated},
                {"spectral_convergence", r.synthesis.spectral_convergence},
                {"codes", r.translation.codes}};
      Json att = Json::array();
      for (Eigen::Index i = 0; i < r.translation.attention.rows(); ++i) {
        std::vector<double> row(r.translation.attention.row(i).data(),
                                r.translation.attention.row(i).data() +
                                    r.translation.attention.cols());
        att.push_back(row);
      }
      diag["attention"] = att;
      std::ofstream(stem + ".json") << diag.dump() << "\n";
      Summary(cmd)
          .Add("out", out.string())
          .Add("codes", stem + ".codes.txt")
          .Add("tokens", r.translation.codes.size())
          .AddF("log_prob", r.translation.log_prob)
          .Add("truncated", int(r.translation.truncated))
          .AddF("sc", r.synthesis.spectral_convergence)
          .Print();
    } else if (*ev) {
      const RunDir run = OpenRun(g);
      const Manifest m = LoadManifestFor(g, run);
      std::map<std::string, Tokens> hyp_words;
      if (!ev_hyp.empty()) {
        std::ifstream in(ev_hyp);
        if (!in) throw Error("eval", "cannot open " + ev_hyp);
        std::string line;
        while (std::getline(in, line)) {
          std::istringstream ss(line);
          std::string id;
          if (!(ss >> id)) continue;
          Tokens t;
          for (std::string w; ss >> w;) t.push_back(w);
          hyp_words[id] = t;
        }
      }
      const RunEvaluation r =
          EvaluateRun(m, run, ParseSplit(ev_split), ev_hyp.empty() ? nullptr : &hyp_words, ev_wavs);
      Summary s(cmd);
      s.Add("run", run.dir())
          .Add("split", ev_split)
          .AddF("code_bleu", r.report.corpus.bleu)
          .AddF("token_error_rate", r.report.ter)
          .AddF("token_acc", r.token_acc)
          .AddF("exact_match", r.report.exact_match)
          .AddF("control_bleu", r.control_bleu)
          .Add("missing", r.report.missing.size());
      if (r.report.word_bleu) s.AddF("word_bleu", r.report.word_bleu->bleu);
      s.Print();
    } else if (*gr) {
      const ExperimentConfig cfg = ResolveConfig(g);
      const std::string root = RootDir(g);
      const Manifest m = ReadManifest(ManifestPath(g, nullptr));
      const auto rows = RunGrid(m, cfg, root, grid_scale, ParseSplit(grid_split),
                                [](const GridRow& r) {
                                  if (!r.ok)
                                    std::cerr << "grid cell K=" << r.codebook_size
                                              << " TR=" << r.time_reduction
                                              << " failed: " << r.error << "\n";
                                });
      const std::string table = FormatGrid(rows);
      fs::create_directories(root);
      std::ofstream((fs::path(root) / "grid.tsv").string()) << table;
      std::cout << table;
      int failed = 0;
      for (const auto& r : rows) failed += !r.ok;
      Summary(cmd)
          .Add("rows", rows.size())
          .Add("failed", failed)
          .Add("table", (fs::path(root) / "grid.tsv").string())
          .Print();
    }
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    std::cout << "s2c " << cmd << " status=error stage=" << (e.stage().empty() ? "s2c" : e.stage())
              << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "[s2c] " << e.what() << "\n";
    std::cout << "s2c " << cmd << " status=error stage=s2c" << std::endl;
    return 1;
  }
  return 0;
}
