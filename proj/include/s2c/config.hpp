// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment configuration, its JSON form and its content hash.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2c/features.hpp"
#include "s2c/inverter.hpp"
#include "s2c/s2s.hpp"
#include "s2c/vqvae.hpp"

namespace s2c {

using Json = nlohmann::json;

struct GridAxes {
  std::vector<int> codebook_sizes{32, 64, 128};
  std::vector<int> time_reductions{4, 8, 12};
};

struct ExperimentConfig {
  FeatureConfig features;
  VQVAEConfig vqvae;
  InverterConfig inverter;
  S2SConfig s2s;
  uint64_t seed = 1;
  int vqvae_steps = 2000;
  int inverter_steps = 2000;
  int s2s_steps = 5000;
  int eval_interval = 100;
  GridAxes grid;

  /// Copies the values other sections derive from (K, D_e, r, feature
  /// dimensions) so the sections agree.
  void Sync();
  /// Throws if sections disagree (vocab = K + 2, r = time_reduction, ...).
  void Validate() const;

  /// Desk-scale preset used by the CLI and the acceptance run.
  static ExperimentConfig Toy();
};

Json ToJson(const FeatureConfig& c);
Json ToJson(const VQVAEConfig& c);
Json ToJson(const InverterConfig& c);
Json ToJson(const S2SConfig& c);
Json ToJson(const ExperimentConfig& c);

// Missing keys keep the value already in `c`.
void FromJson(const Json& j, FeatureConfig& c);
void FromJson(const Json& j, VQVAEConfig& c);
void FromJson(const Json& j, InverterConfig& c);
void FromJson(const Json& j, S2SConfig& c);
/// Starts from Toy(); derived keys absent from `j` are synced, present ones
/// are validated.
ExperimentConfig ExperimentFromJson(const Json& j);

ExperimentConfig LoadExperimentConfig(const std::string& path);
void SaveExperimentConfig(const std::string& path, const ExperimentConfig& c);

/// FNV-1a 64 of a canonical (sorted-key) JSON dump, as 16 hex digits.
std::string HashJson(const Json& j);
std::string ConfigHash(const ExperimentConfig& c);

}  // namespace s2c
