// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2c/checkpoint.hpp"

#include <fstream>
#include <istream>
#include <ostream>

namespace s2c {
namespace {

constexpr char kMagic[4] = {'S', 'P', '2', 'K'};

template <typename T>
void Put(std::ostream& out, T v) {
  unsigned char b[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(uint64_t(v) >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T Take(std::istream& in) {
  unsigned char b[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) throw Error("checkpoint", "truncated file");
  uint64_t v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= uint64_t(b[i]) << (8 * i);
  return static_cast<T>(v);
}

std::string TakeString(std::istream& in, uint64_t n) {
  if (n > (uint64_t(1) << 30)) throw Error("checkpoint", "implausible string length");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), std::streamsize(n))) throw Error("checkpoint", "truncated file");
  return s;
}

void Fill(const std::string& path, const CheckpointData& data,
          const std::vector<std::pair<std::string, Mat*>>& dst) {
  if (data.tensors.size() != dst.size())
    throw Error("checkpoint", path + ": expected " + std::to_string(dst.size()) +
                                  " tensors, found " + std::to_string(data.tensors.size()));
  for (size_t i = 0; i < dst.size(); ++i) {
    const auto& [name, value] = data.tensors[i];
    if (name != dst[i].first)
      throw Error("checkpoint", path + ": tensor " + std::to_string(i) + " is '" + name +
                                    "', expected '" + dst[i].first + "'");
    Mat& target = *dst[i].second;
    if (value.rows() != target.rows() || value.cols() != target.cols())
      throw Error("checkpoint", path + ": shape mismatch for '" + name + "'");
    target = value;
  }
}

CheckpointData ReadTyped(const std::string& path, ModelType type) {
  CheckpointData data = ReadCheckpointFile(path);
  if (data.type != type)
    throw Error("checkpoint", path + " holds a " + ModelTypeName(data.type) + " model, expected " +
                                  ModelTypeName(type));
  return data;
}

void CheckConfig(const std::string& path, const Json& stored, const Json& expected) {
  const std::string diff = FirstJsonDifference(stored, expected);
  if (!diff.empty())
    throw Error("checkpoint", path + " was written with a different config (" + diff + ")");
}

void SaveFile(const std::string& path, ModelType type, const Json& cfg,
              const std::vector<std::pair<std::string, Mat*>>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("checkpoint", "cannot write " + path);
  WriteCheckpoint(out, type, cfg, tensors);
  if (!out) throw Error("checkpoint", "write failed for " + path);
}

}  // namespace

const char* ModelTypeName(ModelType t) {
  switch (t) {
    case ModelType::kVqvae: return "vqvae";
    case ModelType::kInverter: return "inverter";
    case ModelType::kS2S: return "s2s";
  }
  return "unknown";
}

void WriteCheckpoint(std::ostream& out, ModelType type, const Json& config,
                     const std::vector<std::pair<std::string, Mat*>>& tensors) {
  out.write(kMagic, 4);
  Put<uint32_t>(out, kCheckpointVersion);
  Put<uint32_t>(out, static_cast<uint32_t>(type));
  const std::string cfg = config.dump();
  Put<uint64_t>(out, cfg.size());
  out.write(cfg.data(), std::streamsize(cfg.size()));
  Put<uint32_t>(out, uint32_t(tensors.size()));
  for (const auto& [name, value] : tensors) {
    Put<uint32_t>(out, uint32_t(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    WriteTensor(out, *value, FeatureKind::kGeneric);
  }
}

CheckpointData ReadCheckpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4))
    throw Error("checkpoint", "bad magic (not a checkpoint file)");
  const uint32_t version = Take<uint32_t>(in);
  if (version != kCheckpointVersion)
    throw Error("checkpoint", "unsupported version " + std::to_string(version));
  CheckpointData data;
  const uint32_t type = Take<uint32_t>(in);
  if (type < 1 || type > 3) throw Error("checkpoint", "unknown model type " + std::to_string(type));
  data.type = static_cast<ModelType>(type);
  const std::string cfg = TakeString(in, Take<uint64_t>(in));
  try {
    data.config = Json::parse(cfg);
  } catch (const std::exception& e) {
    throw Error("checkpoint", std::string("corrupt config echo: ") + e.what());
  }
  const uint32_t count = Take<uint32_t>(in);
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = TakeString(in, Take<uint32_t>(in));
    TensorRecord rec = ReadTensor(in);
    data.tensors.emplace_back(std::move(name), std::move(rec.value));
  }
  return data;
}

CheckpointData ReadCheckpointFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint", "cannot open " + path);
  try {
    return ReadCheckpoint(in);
  } catch (const Error& e) {
    throw Error("checkpoint", path + ": " + e.message());
  }
}

std::string FirstJsonDifference(const Json& a, const Json& b, const std::string& prefix) {
  if (a.is_object() && b.is_object()) {
    for (auto it = a.begin(); it != a.end(); ++it) {
      const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
      if (!b.contains(it.key())) return key + ": missing in expected config";
      std::string d = FirstJsonDifference(it.value(), b.at(it.key()), key);
      if (!d.empty()) return d;
    }
    for (auto it = b.begin(); it != b.end(); ++it)
      if (!a.contains(it.key()))
        return (prefix.empty() ? it.key() : prefix + "." + it.key()) + ": missing in checkpoint";
    return "";
  }
  if (a == b) return "";
  return prefix + ": checkpoint has " + a.dump() + ", config has " + b.dump();
}

void SaveVqvae(const std::string& path, VQVAEModel& m) {
  SaveFile(path, ModelType::kVqvae, ToJson(m.config()), m.NamedTensors());
}

void SaveInverter(const std::string& path, InverterModel& m) {
  SaveFile(path, ModelType::kInverter, ToJson(m.config()), m.NamedTensors());
}

void SaveS2S(const std::string& path, S2SModel& m) {
  SaveFile(path, ModelType::kS2S, ToJson(m.config()), m.NamedTensors());
}

VQVAEModel LoadVqvae(const std::string& path, const VQVAEConfig* expected) {
  CheckpointData data = ReadTyped(path, ModelType::kVqvae);
  if (expected) CheckConfig(path, data.config, ToJson(*expected));
  VQVAEConfig cfg;
  FromJson(data.config, cfg);
  VQVAEModel m(cfg, 0);
  Fill(path, data, m.NamedTensors());
  return m;
}

InverterModel LoadInverter(const std::string& path, const InverterConfig* expected) {
  CheckpointData data = ReadTyped(path, ModelType::kInverter);
  if (expected) CheckConfig(path, data.config, ToJson(*expected));
  InverterConfig cfg;
  FromJson(data.config, cfg);
  const Mat* cb = nullptr;
  for (const auto& [name, value] : data.tensors)
    if (name == "codebook") cb = &value;
  if (!cb) throw Error("checkpoint", path + ": inverter checkpoint lacks a codebook");
  InverterModel m(cfg, *cb, 0);
  Fill(path, data, m.NamedTensors());
  return m;
}

S2SModel LoadS2S(const std::string& path, const S2SConfig* expected) {
  CheckpointData data = ReadTyped(path, ModelType::kS2S);
  if (expected) CheckConfig(path, data.config, ToJson(*expected));
  S2SConfig cfg;
  FromJson(data.config, cfg);
  S2SModel m(cfg, 0);
  Fill(path, data, m.NamedTensors());
  return m;
}

}  // namespace s2c
