// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

// Normalized toy-corpus features shared by the model tests.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "s2c/corpus.hpp"
#include "s2c/features.hpp"
#include "s2c/pipeline.hpp"

namespace s2c::testing {

inline std::string TempDir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("s2c_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

struct ToyData {
  Manifest manifest;
  std::vector<UttFeatures> train, test;
  std::vector<Mat> src, tgt, tgt_linear;  // train split, normalized MFCC
  std::vector<Mat> src_test, tgt_test;
};

/// 40-pair corpus, built once per process.
inline const ToyData& Toy() {
  static const ToyData data = [] {
    ToyData d;
    d.manifest = MakeToyCorpus(TempDir("toy_corpus"), 7, 40);
    const FeatureConfig fc;
    d.train = ComputeFeatures(d.manifest, d.manifest.Select(Split::kTrain), fc, true, true, true);
    d.test = ComputeFeatures(d.manifest, d.manifest.Select(Split::kTest), fc, true, true, false);
    std::vector<const Mat*> s, t;
    for (const auto& u : d.train) {
      s.push_back(&u.src_mfcc);
      t.push_back(&u.tgt_mfcc);
    }
    const CorpusStats ss = FitStats(s), ts = FitStats(t);
    for (const auto& u : d.train) {
      d.src.push_back(Normalize(u.src_mfcc, ss));
      d.tgt.push_back(Normalize(u.tgt_mfcc, ts));
      d.tgt_linear.push_back(u.tgt_linear);
    }
    for (const auto& u : d.test) {
      d.src_test.push_back(Normalize(u.src_mfcc, ss));
      d.tgt_test.push_back(Normalize(u.tgt_mfcc, ts));
    }
    return d;
  }();
  return data;
}

}  // namespace s2c::testing
