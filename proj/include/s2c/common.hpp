// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace s2c {

/// Time-major real matrix: one row per frame, one column per feature.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

/// Discrete unit indices in {0..K-1}. EOS is never stored in the payload.
using CodeSequence = std::vector<int>;

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what), message_(what) {}
  Error(const std::string& stage, const std::string& what)
      : std::runtime_error("[" + stage + "] " + what), stage_(stage), message_(what) {}

  const std::string& stage() const { return stage_; }
  /// The message without the stage tag.
  const std::string& message() const { return message_; }

 private:
  std::string stage_;
  std::string message_;
};

/// Rounds every entry to the nearest float32 value (parameters are stored
/// at float32 precision so checkpoints round-trip bit-exactly).
inline void RoundToFloat(Mat& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
}

}  // namespace s2c
