// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace s2c {

struct Waveform {
  std::vector<double> samples;  // amplitude in [-1, 1]
  int sample_rate = 16000;

  std::size_t size() const { return samples.size(); }
  double duration_sec() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

enum class WavEncoding { kPcm16, kFloat32 };

/// Reads mono RIFF/WAVE, PCM 16-bit or IEEE float32.
Waveform ReadWav(const std::string& path);

void WriteWav(const std::string& path, const Waveform& wav,
              WavEncoding encoding = WavEncoding::kPcm16);

}  // namespace s2c
