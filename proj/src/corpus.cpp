// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2c/corpus.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "s2c/nn.hpp"
#include "s2c/wav_io.hpp"

namespace s2c {
namespace fs = std::filesystem;

const char* SplitName(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "?";
}

Split ParseSplit(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "dev") return Split::kDev;
  if (s == "test") return Split::kTest;
  throw Error("manifest", "unknown split '" + s + "'");
}

std::vector<const ManifestEntry*> Manifest::Select(Split s) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == s) out.push_back(&e);
  return out;
}

std::string Manifest::Resolve(const std::string& rel) const {
  fs::path p(rel);
  if (p.is_absolute() || base_dir.empty()) return p.string();
  return (fs::path(base_dir) / p).string();
}

const ManifestEntry* Manifest::Find(const std::string& utt_id) const {
  for (const auto& e : entries)
    if (e.utt_id == utt_id) return &e;
  return nullptr;
}

void WriteManifest(const std::string& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw Error("manifest", "cannot write " + path);
  out << "utt_id\tsplit\tsrc_wav\ttgt_wav\ttranscript_src\ttranscript_tgt\n";
  for (const auto& e : m.entries)
    out << e.utt_id << '\t' << SplitName(e.split) << '\t' << e.src_wav << '\t' << e.tgt_wav << '\t'
        << e.transcript_src << '\t' << e.transcript_tgt << '\n';
}

Manifest ReadManifest(const std::string& path, bool check_files) {
  std::ifstream in(path);
  if (!in) throw Error("manifest", "cannot open " + path);
  Manifest m;
  m.base_dir = fs::path(path).parent_path().string();
  std::string line;
  std::set<std::string> seen;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || (lineno == 1 && line.rfind("utt_id", 0) == 0)) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, '\t')) cols.push_back(c);
    if (cols.size() < 4)
      throw Error("manifest", path + ":" + std::to_string(lineno) + ": expected >= 4 columns");
    ManifestEntry e;
    e.utt_id = cols[0];
    e.split = ParseSplit(cols[1]);
    e.src_wav = cols[2];
    e.tgt_wav = cols[3];
    if (cols.size() > 4) e.transcript_src = cols[4];
    if (cols.size() > 5) e.transcript_tgt = cols[5];
    if (!seen.insert(e.utt_id).second) throw Error("manifest", "duplicate utt_id " + e.utt_id);
    m.entries.push_back(std::move(e));
  }
  if (check_files) {
    for (const auto& e : m.entries)
      for (const auto& w : {e.src_wav, e.tgt_wav})
        if (!fs::exists(m.Resolve(w))) throw Error("manifest", "missing file " + m.Resolve(w));
  }
  return m;
}

std::string FormatCodes(const CodeSequence& codes) {
  std::string s;
  for (size_t i = 0; i < codes.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(codes[i]);
  }
  return s;
}

CodeSequence ParseCodeLine(const std::string& line) {
  CodeSequence out;
  std::istringstream ss(line);
  std::string w;
  while (ss >> w) {
    size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(w, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != w.size() || v < 0) throw Error("codes", "bad code token '" + w + "'");
    out.push_back(v);
  }
  return out;
}

void WriteCodeFile(const std::string& stem, const std::vector<std::string>& ids,
                   const std::vector<CodeSequence>& codes) {
  if (ids.size() != codes.size()) throw Error("codes", "id/sequence count mismatch");
  std::ofstream txt(stem + ".txt"), idf(stem + ".ids");
  if (!txt || !idf) throw Error("codes", "cannot write " + stem + ".{txt,ids}");
  for (size_t i = 0; i < ids.size(); ++i) {
    txt << FormatCodes(codes[i]) << '\n';
    idf << ids[i] << '\n';
  }
}

std::map<std::string, CodeSequence> ReadCodeFile(const std::string& stem) {
  std::ifstream txt(stem + ".txt"), idf(stem + ".ids");
  if (!txt || !idf) throw Error("codes", "cannot open " + stem + ".{txt,ids}");
  std::map<std::string, CodeSequence> out;
  std::string line, id;
  while (std::getline(idf, id)) {
    if (id.empty()) continue;
    if (!std::getline(txt, line)) throw Error("codes", stem + ".txt has fewer lines than ids");
    out[id] = ParseCodeLine(line);
  }
  return out;
}

namespace {

void AppendTone(std::vector<double>& out, double hz, double ms, double amp, double fade_ms,
                int sr) {
  const int n = int(std::lround(ms * sr / 1000.0));
  const int fade = int(std::lround(fade_ms * sr / 1000.0));
  for (int i = 0; i < n; ++i) {
    double g = 1.0;
    if (i < fade) g = double(i) / fade;
    if (n - 1 - i < fade) g = std::min(g, double(n - 1 - i) / fade);
    out.push_back(amp * g * std::sin(2 * std::numbers::pi * hz * i / sr));
  }
}

void AppendSilence(std::vector<double>& out, double ms, int sr) {
  out.insert(out.end(), size_t(std::lround(ms * sr / 1000.0)), 0.0);
}

std::string Words(const std::vector<int>& digits) {
  std::string s;
  for (size_t i = 0; i < digits.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(digits[i]);
  }
  return s;
}

}  // namespace

Manifest MakeToyCorpus(const std::string& dir, uint64_t seed, int n_pairs,
                       const ToyCorpusOptions& opt) {
  if (n_pairs < 1) throw Error("corpus", "n_pairs must be >= 1");
  fs::create_directories(fs::path(dir) / "wav" / "src");
  fs::create_directories(fs::path(dir) / "wav" / "tgt");
  nn::Rng rng(seed);
  const int n_train = int(std::lround(0.75 * n_pairs));
  const int n_dev = (n_pairs - n_train) / 2;

  Manifest m;
  m.base_dir = dir;
  std::set<std::vector<int>> used;
  for (int k = 0; k < n_pairs; ++k) {
    std::vector<int> digits;
    do {
      digits.clear();
      const int len = opt.min_digits + rng.Index(opt.max_digits - opt.min_digits + 1);
      for (int i = 0; i < len; ++i) digits.push_back(rng.Index(10));
    } while (!used.insert(digits).second);
    const double amp = rng.Uniform(0.4, 0.6);

    Waveform src, tgt;
    src.sample_rate = tgt.sample_rate = opt.sample_rate;
    AppendSilence(src.samples, opt.edge_silence_ms, opt.sample_rate);
    for (int d : digits)
      AppendTone(src.samples, opt.src_base_hz + d * opt.src_step_hz, opt.src_digit_ms, amp,
                 opt.fade_ms, opt.sample_rate);
    AppendSilence(src.samples, opt.edge_silence_ms, opt.sample_rate);
    std::vector<int> reversed(digits.rbegin(), digits.rend());
    AppendSilence(tgt.samples, opt.edge_silence_ms, opt.sample_rate);
    for (int d : reversed)
      AppendTone(tgt.samples, opt.tgt_base_hz + d * opt.tgt_step_hz, opt.tgt_digit_ms, amp,
                 opt.fade_ms, opt.sample_rate);
    AppendSilence(tgt.samples, opt.edge_silence_ms, opt.sample_rate);
    for (double& v : src.samples) v += opt.noise * rng.Normal();
    for (double& v : tgt.samples) v += opt.noise * rng.Normal();

    char id[32];
    std::snprintf(id, sizeof(id), "utt%04d", k);
    ManifestEntry e;
    e.utt_id = id;
    e.split = k < n_train ? Split::kTrain : (k < n_train + n_dev ? Split::kDev : Split::kTest);
    e.src_wav = std::string("wav/src/") + id + ".wav";
    e.tgt_wav = std::string("wav/tgt/") + id + ".wav";
    e.transcript_src = Words(digits);
    e.transcript_tgt = Words(reversed);
    WriteWav(m.Resolve(e.src_wav), src, WavEncoding::kPcm16);
    WriteWav(m.Resolve(e.tgt_wav), tgt, WavEncoding::kPcm16);
    m.entries.push_back(std::move(e));
  }
  WriteManifest((fs::path(dir) / "manifest.tsv").string(), m);
  return m;
}

}  // namespace s2c
