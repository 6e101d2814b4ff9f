// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

// Versioned model checkpoints.
//
//   "SP2K" | u32 version | u32 model type | u64 n + n bytes config JSON |
//   u32 count | count x (u32 n + n bytes name, SP2C tensor record)
//
// All integers little-endian. Tensors are float32, so a model whose
// parameters are float-representable round-trips bit-exactly.

#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "s2c/config.hpp"
#include "s2c/tensor_io.hpp"

namespace s2c {

inline constexpr uint32_t kCheckpointVersion = 1;

enum class ModelType : uint32_t { kVqvae = 1, kInverter = 2, kS2S = 3 };
const char* ModelTypeName(ModelType t);

struct CheckpointData {
  ModelType type = ModelType::kVqvae;
  Json config;
  std::vector<std::pair<std::string, Mat>> tensors;
};

void WriteCheckpoint(std::ostream& out, ModelType type, const Json& config,
                     const std::vector<std::pair<std::string, Mat*>>& tensors);
CheckpointData ReadCheckpoint(std::istream& in);
CheckpointData ReadCheckpointFile(const std::string& path);

/// Describes the first key whose value differs between two JSON objects
/// ("K: 32 vs 64"); empty when equal.
std::string FirstJsonDifference(const Json& a, const Json& b, const std::string& prefix = "");

void SaveVqvae(const std::string& path, VQVAEModel& m);
void SaveInverter(const std::string& path, InverterModel& m);
void SaveS2S(const std::string& path, S2SModel& m);

// When `expected` is given, a checkpoint written under a different config is
// rejected with the first differing key.
VQVAEModel LoadVqvae(const std::string& path, const VQVAEConfig* expected = nullptr);
InverterModel LoadInverter(const std::string& path, const InverterConfig* expected = nullptr);
S2SModel LoadS2S(const std::string& path, const S2SConfig* expected = nullptr);

}  // namespace s2c
