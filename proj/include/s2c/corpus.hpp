// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

// Paired corpus manifest, code-sequence files and the synthetic tone corpus.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "s2c/common.hpp"

namespace s2c {

enum class Split { kTrain, kDev, kTest };
const char* SplitName(Split s);
Split ParseSplit(const std::string& s);

struct ManifestEntry {
  std::string utt_id;
  Split split = Split::kTrain;
  std::string src_wav;  // relative to the manifest directory unless absolute
  std::string tgt_wav;
  std::string transcript_src;  // optional, space-separated words
  std::string transcript_tgt;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::string base_dir;

  std::vector<const ManifestEntry*> Select(Split s) const;
  std::string Resolve(const std::string& rel) const;
  const ManifestEntry* Find(const std::string& utt_id) const;
};

/// Columns: utt_id split src_wav tgt_wav transcript_src transcript_tgt.
void WriteManifest(const std::string& path, const Manifest& m);
/// Checks ids are unique and, when `check_files`, that every WAV exists.
Manifest ReadManifest(const std::string& path, bool check_files = true);

/// Code sequences as "<stem>.txt" (one line of space-separated codes per
/// utterance) plus "<stem>.ids" (matching utterance ids).
void WriteCodeFile(const std::string& stem, const std::vector<std::string>& ids,
                   const std::vector<CodeSequence>& codes);
std::map<std::string, CodeSequence> ReadCodeFile(const std::string& stem);
CodeSequence ParseCodeLine(const std::string& line);
std::string FormatCodes(const CodeSequence& codes);

struct ToyCorpusOptions {
  int sample_rate = 16000;
  double src_base_hz = 400, src_step_hz = 150;   // digit d -> base + d * step
  double tgt_base_hz = 2200, tgt_step_hz = 200;
  double src_digit_ms = 120, tgt_digit_ms = 160;
  double edge_silence_ms = 50;
  double fade_ms = 10;
  double noise = 1e-3;
  int min_digits = 3, max_digits = 6;
};

/// Writes WAVs under dir/wav/{src,tgt}/ and dir/manifest.tsv. Source speaks
/// each digit as a tone from band A; target speaks the digits in reverse
/// order with band B tones and longer durations. Splits are 75/12.5/12.5.
Manifest MakeToyCorpus(const std::string& dir, uint64_t seed, int n_pairs,
                       const ToyCorpusOptions& opt = {});

}  // namespace s2c
