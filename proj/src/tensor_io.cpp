// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2c/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace s2c {
namespace {

static_assert(std::endian::native == std::endian::little,
              "SP2C I/O assumes a little-endian host");

template <typename T>
void Put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T Get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error("truncated SP2C tensor");
  return v;
}

}  // namespace

const char* FeatureKindName(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kGeneric: return "generic";
    case FeatureKind::kMfcc39: return "mfcc39";
    case FeatureKind::kLinear1025: return "linear1025";
    case FeatureKind::kMel: return "mel";
  }
  return "unknown";
}

void WriteTensor(std::ostream& os, const Mat& m, FeatureKind kind) {
  os.write("SP2C", 4);
  Put<uint32_t>(os, kTensorVersion);
  Put<uint8_t>(os, static_cast<uint8_t>(kind));
  Put<uint32_t>(os, 2);
  Put<uint64_t>(os, uint64_t(m.rows()));
  Put<uint64_t>(os, uint64_t(m.cols()));
  std::vector<float> payload(std::size_t(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i)
    payload[std::size_t(i)] = static_cast<float>(m.data()[i]);
  os.write(reinterpret_cast<const char*>(payload.data()),
           std::streamsize(payload.size() * sizeof(float)));
}

TensorRecord ReadTensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SP2C", 4) != 0)
    throw Error("bad SP2C magic");
  const auto version = Get<uint32_t>(is);
  if (version != kTensorVersion)
    throw Error("unsupported SP2C version " + std::to_string(version));
  TensorRecord rec;
  const auto kind = Get<uint8_t>(is);
  if (kind > 3) throw Error("unknown SP2C kind code " + std::to_string(kind));
  rec.kind = static_cast<FeatureKind>(kind);
  const auto ndim = Get<uint32_t>(is);
  if (ndim == 0 || ndim > 8) throw Error("bad SP2C ndim");
  uint64_t total = 1;
  for (uint32_t i = 0; i < ndim; ++i) {
    rec.dims.push_back(Get<uint64_t>(is));
    total *= rec.dims.back();
  }
  if (total > (uint64_t(1) << 34)) throw Error("SP2C tensor too large");
  const uint64_t rows = ndim == 1 ? 1 : rec.dims[0];
  const uint64_t cols = rows == 0 ? 0 : total / rows;
  std::vector<float> payload(total);
  is.read(reinterpret_cast<char*>(payload.data()),
          std::streamsize(total * sizeof(float)));
  if (!is) throw Error("truncated SP2C payload");
  rec.value.resize(Eigen::Index(rows), Eigen::Index(cols));
  for (uint64_t i = 0; i < total; ++i) rec.value.data()[i] = payload[i];
  return rec;
}

void WriteTensorFile(const std::string& path, const Mat& m, FeatureKind kind) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path);
  WriteTensor(os, m, kind);
}

TensorRecord ReadTensorFile(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return ReadTensor(is);
}

}  // namespace s2c
