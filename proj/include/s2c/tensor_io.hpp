// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

// SP2C binary tensor container:
//   "SP2C" | u32 version=1 | u8 kind | u32 ndim | u64 dims[ndim] |
//   float32 little-endian payload, row-major.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "s2c/common.hpp"

namespace s2c {

enum class FeatureKind : uint8_t {
  kGeneric = 0,
  kMfcc39 = 1,
  kLinear1025 = 2,
  kMel = 3,
};

const char* FeatureKindName(FeatureKind kind);

inline constexpr uint32_t kTensorVersion = 1;

struct TensorRecord {
  FeatureKind kind = FeatureKind::kGeneric;
  std::vector<uint64_t> dims;
  Mat value;  // dims folded to (dims[0], prod(dims[1:])); 1-D maps to 1 x n
};

void WriteTensor(std::ostream& os, const Mat& m,
                 FeatureKind kind = FeatureKind::kGeneric);
TensorRecord ReadTensor(std::istream& is);

void WriteTensorFile(const std::string& path, const Mat& m, FeatureKind kind);
TensorRecord ReadTensorFile(const std::string& path);

}  // namespace s2c
