// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2c/config.hpp"

#include <cstdio>
#include <fstream>

namespace s2c {
namespace {

template <typename T>
void Get(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const std::exception& e) {
    throw Error("config", std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

Json ToJson(const FeatureConfig& c) {
  return {{"sample_rate", c.sample_rate}, {"win_ms", c.win_ms},
          {"hop_ms", c.hop_ms},           {"fft_size", c.fft_size},
          {"n_mels", c.n_mels},           {"n_mfcc", c.n_mfcc},
          {"delta_window", c.delta_window}, {"log_floor", c.log_floor},
          {"center", c.center},           {"griffin_lim_iters", c.griffin_lim_iters},
          {"griffin_lim_momentum", c.griffin_lim_momentum}};
}

void FromJson(const Json& j, FeatureConfig& c) {
  Get(j, "sample_rate", c.sample_rate);
  Get(j, "win_ms", c.win_ms);
  Get(j, "hop_ms", c.hop_ms);
  Get(j, "fft_size", c.fft_size);
  Get(j, "n_mels", c.n_mels);
  Get(j, "n_mfcc", c.n_mfcc);
  Get(j, "delta_window", c.delta_window);
  Get(j, "log_floor", c.log_floor);
  Get(j, "center", c.center);
  Get(j, "griffin_lim_iters", c.griffin_lim_iters);
  Get(j, "griffin_lim_momentum", c.griffin_lim_momentum);
}

Json ToJson(const VQVAEConfig& c) {
  return {{"K", c.codebook_size},
          {"D_e", c.code_dim},
          {"time_reduction", c.time_reduction},
          {"stride_schedule", c.Strides()},
          {"L", c.num_speakers},
          {"D_v", c.speaker_dim},
          {"gamma", c.gamma},
          {"ema_decay", c.ema_decay},
          {"ema_epsilon", c.ema_epsilon},
          {"channels", c.channels},
          {"input_dim", c.input_dim},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size}};
}

void FromJson(const Json& j, VQVAEConfig& c) {
  Get(j, "K", c.codebook_size);
  Get(j, "D_e", c.code_dim);
  const int old_tr = c.time_reduction;
  Get(j, "time_reduction", c.time_reduction);
  if (j.contains("stride_schedule"))
    Get(j, "stride_schedule", c.stride_schedule);
  else if (c.time_reduction != old_tr)
    c.stride_schedule.clear();
  Get(j, "L", c.num_speakers);
  Get(j, "D_v", c.speaker_dim);
  Get(j, "gamma", c.gamma);
  Get(j, "ema_decay", c.ema_decay);
  Get(j, "ema_epsilon", c.ema_epsilon);
  Get(j, "channels", c.channels);
  Get(j, "input_dim", c.input_dim);
  Get(j, "learning_rate", c.learning_rate);
  Get(j, "batch_size", c.batch_size);
}

Json ToJson(const InverterConfig& c) {
  return {{"code_dim", c.code_dim},       {"upsample", c.upsample},
          {"channels", c.channels},       {"kernels", c.kernels},
          {"pre_blocks", c.pre_blocks},   {"post_blocks", c.post_blocks},
          {"lstm_layers", c.lstm_layers}, {"lstm_hidden", c.lstm_hidden},
          {"output_dim", c.output_dim},   {"leaky_slope", c.leaky_slope},
          {"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}};
}

void FromJson(const Json& j, InverterConfig& c) {
  Get(j, "code_dim", c.code_dim);
  Get(j, "upsample", c.upsample);
  Get(j, "channels", c.channels);
  Get(j, "kernels", c.kernels);
  Get(j, "pre_blocks", c.pre_blocks);
  Get(j, "post_blocks", c.post_blocks);
  Get(j, "lstm_layers", c.lstm_layers);
  Get(j, "lstm_hidden", c.lstm_hidden);
  Get(j, "output_dim", c.output_dim);
  Get(j, "leaky_slope", c.leaky_slope);
  Get(j, "learning_rate", c.learning_rate);
  Get(j, "batch_size", c.batch_size);
}

Json ToJson(const S2SConfig& c) {
  return {{"input_dim", c.input_dim},
          {"codebook_size", c.codebook_size},
          {"vocab", c.vocab()},
          {"enc_layers", c.enc_layers},
          {"enc_hidden", c.enc_hidden},
          {"dec_hidden", c.dec_hidden},
          {"attention_dim", c.attention_dim},
          {"embed_dim", c.embed_dim},
          {"attention", AttentionKindName(c.attention)},
          {"pyramid_factor", c.pyramid_factor},
          {"max_decode_len", c.max_decode_len},
          {"beam", c.beam},
          {"teacher_forcing", c.teacher_forcing},
          {"learning_rate", c.learning_rate},
          {"clip_norm", c.clip_norm},
          {"batch_size", c.batch_size}};
}

void FromJson(const Json& j, S2SConfig& c) {
  Get(j, "input_dim", c.input_dim);
  Get(j, "codebook_size", c.codebook_size);
  Get(j, "enc_layers", c.enc_layers);
  Get(j, "enc_hidden", c.enc_hidden);
  Get(j, "dec_hidden", c.dec_hidden);
  Get(j, "attention_dim", c.attention_dim);
  Get(j, "embed_dim", c.embed_dim);
  if (j.contains("attention")) c.attention = ParseAttentionKind(j.at("attention").get<std::string>());
  Get(j, "pyramid_factor", c.pyramid_factor);
  Get(j, "max_decode_len", c.max_decode_len);
  Get(j, "beam", c.beam);
  Get(j, "teacher_forcing", c.teacher_forcing);
  Get(j, "learning_rate", c.learning_rate);
  Get(j, "clip_norm", c.clip_norm);
  Get(j, "batch_size", c.batch_size);
  if (j.contains("vocab") && j.at("vocab").get<int>() != c.vocab())
    throw Error("config", "s2s.vocab must equal codebook_size + 2");
}

Json ToJson(const ExperimentConfig& c) {
  return {{"features", ToJson(c.features)},
          {"vqvae", ToJson(c.vqvae)},
          {"inverter", ToJson(c.inverter)},
          {"s2s", ToJson(c.s2s)},
          {"seed", c.seed},
          {"vqvae_steps", c.vqvae_steps},
          {"inverter_steps", c.inverter_steps},
          {"s2s_steps", c.s2s_steps},
          {"eval_interval", c.eval_interval},
          {"grid", {{"K", c.grid.codebook_sizes}, {"time_reduction", c.grid.time_reductions}}}};
}

void ExperimentConfig::Sync() {
  vqvae.input_dim = features.mfcc_dim();
  s2s.input_dim = features.mfcc_dim();
  s2s.codebook_size = vqvae.codebook_size;
  inverter.code_dim = vqvae.code_dim;
  inverter.upsample = vqvae.time_reduction;
  inverter.output_dim = features.n_bins();
}

void ExperimentConfig::Validate() const {
  features.Validate();
  vqvae.Validate();
  inverter.Validate();
  s2s.Validate();
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error("config", what);
  };
  require(vqvae.input_dim == features.mfcc_dim(), "vqvae.input_dim must equal 3 * n_mfcc");
  require(s2s.input_dim == features.mfcc_dim(), "s2s.input_dim must equal 3 * n_mfcc");
  require(s2s.codebook_size == vqvae.codebook_size,
          "s2s vocab must be K + 2 (s2s.codebook_size != vqvae.K)");
  require(inverter.upsample == vqvae.time_reduction,
          "inverter r must equal vqvae.time_reduction");
  require(inverter.code_dim == vqvae.code_dim, "inverter.code_dim must equal vqvae.D_e");
  require(inverter.output_dim == features.n_bins(),
          "inverter.output_dim must equal fft_size/2 + 1");
  require(vqvae_steps >= 0 && inverter_steps >= 0 && s2s_steps >= 0, "step counts must be >= 0");
  require(eval_interval >= 1, "eval_interval must be >= 1");
  require(!grid.codebook_sizes.empty() && !grid.time_reductions.empty(), "grid axes must be nonempty");
}

ExperimentConfig ExperimentConfig::Toy() {
  ExperimentConfig c;
  c.vqvae.codebook_size = 32;
  c.vqvae.code_dim = 16;
  c.vqvae.time_reduction = 8;
  c.vqvae.channels = 48;
  c.vqvae.speaker_dim = 8;
  c.vqvae.ema_decay = 0.95;
  c.vqvae.batch_size = 8;
  c.vqvae.learning_rate = 2e-3;

  c.inverter.channels = 48;
  c.inverter.pre_blocks = 1;
  c.inverter.post_blocks = 1;
  c.inverter.lstm_layers = 1;
  c.inverter.lstm_hidden = 32;
  c.inverter.batch_size = 8;
  c.inverter.learning_rate = 3e-3;

  c.s2s.enc_layers = 2;
  c.s2s.enc_hidden = 48;
  c.s2s.dec_hidden = 96;
  c.s2s.attention_dim = 48;
  c.s2s.embed_dim = 24;
  c.s2s.max_decode_len = 64;
  c.s2s.learning_rate = 3e-3;
  c.s2s.batch_size = 6;

  c.vqvae_steps = 250;
  c.inverter_steps = 500;
  c.s2s_steps = 600;
  c.eval_interval = 100;
  c.Sync();
  return c;
}

ExperimentConfig ExperimentFromJson(const Json& j) {
  ExperimentConfig c = ExperimentConfig::Toy();
  if (!j.is_object()) throw Error("config", "config root must be an object");
  if (j.contains("features")) FromJson(j.at("features"), c.features);
  if (j.contains("vqvae")) FromJson(j.at("vqvae"), c.vqvae);
  if (j.contains("inverter")) FromJson(j.at("inverter"), c.inverter);
  if (j.contains("s2s")) FromJson(j.at("s2s"), c.s2s);
  Get(j, "seed", c.seed);
  Get(j, "vqvae_steps", c.vqvae_steps);
  Get(j, "inverter_steps", c.inverter_steps);
  Get(j, "s2s_steps", c.s2s_steps);
  Get(j, "eval_interval", c.eval_interval);
  if (j.contains("grid")) {
    Get(j.at("grid"), "K", c.grid.codebook_sizes);
    Get(j.at("grid"), "time_reduction", c.grid.time_reductions);
  }

  // derived keys: fill when absent, validate when present
  const Json empty = Json::object();
  const Json& jv = j.contains("vqvae") ? j.at("vqvae") : empty;
  const Json& js = j.contains("s2s") ? j.at("s2s") : empty;
  const Json& ji = j.contains("inverter") ? j.at("inverter") : empty;
  if (!jv.contains("input_dim")) c.vqvae.input_dim = c.features.mfcc_dim();
  if (!js.contains("input_dim")) c.s2s.input_dim = c.features.mfcc_dim();
  if (!js.contains("codebook_size")) c.s2s.codebook_size = c.vqvae.codebook_size;
  if (!ji.contains("code_dim")) c.inverter.code_dim = c.vqvae.code_dim;
  if (!ji.contains("upsample")) c.inverter.upsample = c.vqvae.time_reduction;
  if (!ji.contains("output_dim")) c.inverter.output_dim = c.features.n_bins();
  c.Validate();
  return c;
}

ExperimentConfig LoadExperimentConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("config", "cannot open config file " + path);
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw Error("config", "cannot parse " + path + ": " + e.what());
  }
  return ExperimentFromJson(j);
}

void SaveExperimentConfig(const std::string& path, const ExperimentConfig& c) {
  std::ofstream out(path);
  if (!out) throw Error("config", "cannot write " + path);
  out << ToJson(c).dump(2) << "\n";
}

std::string HashJson(const Json& j) {
  const std::string s = j.dump();
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string ConfigHash(const ExperimentConfig& c) { return HashJson(ToJson(c)); }

}  // namespace s2c
