// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

// Deterministic DSP front end: STFT / iSTFT, linear and mel spectrograms,
// MFCC with regression deltas, Griffin-Lim phase reconstruction and corpus
// normalization statistics. All functions are pure and reentrant.

#pragma once

#include <complex>
#include <vector>

#include "s2c/common.hpp"
#include "s2c/tensor_io.hpp"
#include "s2c/wav_io.hpp"

namespace s2c {

struct FeatureConfig {
  int sample_rate = 16000;
  double win_ms = 25.0;
  double hop_ms = 10.0;
  int fft_size = 2048;
  int n_mels = 40;
  int n_mfcc = 13;
  int delta_window = 2;
  double log_floor = 1e-10;
  bool center = false;
  int griffin_lim_iters = 60;
  /// Fast Griffin-Lim acceleration; 0 gives the classic iteration.
  double griffin_lim_momentum = 0.99;

  int win_length() const;
  int hop_length() const;
  int n_bins() const { return fft_size / 2 + 1; }
  int mfcc_dim() const { return 3 * n_mfcc; }

  /// Throws Error when the configuration is inconsistent.
  void Validate() const;
};

struct FeatureSequence {
  Mat frames;  // T x D
  FeatureKind kind = FeatureKind::kGeneric;
  double frame_hop_ms = 10.0;

  Eigen::Index num_frames() const { return frames.rows(); }
  Eigen::Index dim() const { return frames.cols(); }
};

using ComplexMat =
    Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic,
                  Eigen::RowMajor>;

/// Number of analysis frames for a signal of `num_samples` samples.
/// Throws "utterance too short" when the signal is shorter than one window.
int NumFrames(std::size_t num_samples, const FeatureConfig& cfg);

/// Periodic Hann window of length cfg.win_length().
std::vector<double> AnalysisWindow(const FeatureConfig& cfg);

/// Complex STFT, T x (fft_size/2 + 1). Each frame is Hann-windowed and
/// zero-padded to fft_size.
ComplexMat Stft(const std::vector<double>& samples, const FeatureConfig& cfg);

/// Least-squares overlap-add inverse of Stft (window-square normalized).
/// Output length is (T-1)*hop + win (minus the centering pad if enabled).
std::vector<double> Istft(const ComplexMat& spec, const FeatureConfig& cfg);

FeatureSequence ComputeLinearSpectrogram(const Waveform& w,
                                         const FeatureConfig& cfg);

/// n_mels x n_bins triangular filters on the HTK mel scale, 0..Nyquist.
Mat MelFilterbank(const FeatureConfig& cfg);

/// Orthonormal DCT-II basis restricted to the first n_out coefficients
/// (n_out x n_in).
Mat DctMatrix(int n_out, int n_in);

/// Log mel filterbank energies of the magnitude spectrogram, T x n_mels.
FeatureSequence ComputeLogMel(const Waveform& w, const FeatureConfig& cfg);

/// 13 cepstra + deltas + delta-deltas, T x 39 for defaults.
FeatureSequence ComputeMfcc(const Waveform& w, const FeatureConfig& cfg);

/// Regression deltas with replicated edges:
///   d_t = sum_n n (c_{t+n} - c_{t-n}) / (2 sum_n n^2).
Mat ComputeDeltas(const Mat& seq, int window);

struct GriffinLimResult {
  Waveform wav;
  double spectral_convergence = 0.0;
  /// SC of every reconstructed waveform, iteration 0 first; size iters + 1.
  std::vector<double> sc_history;
};

/// Phase retrieval from zero initial phase. Each iteration projects onto
/// the target magnitude and inverts; with momentum, the accelerated step is
/// used when it does not increase SC, so SC never increases.
GriffinLimResult GriffinLim(const Mat& magnitude, int iters,
                            const FeatureConfig& cfg);

/// || |STFT(w)| - mag ||_F / || mag ||_F over the overlapping frames.
double SpectralConvergence(const std::vector<double>& samples, const Mat& mag,
                           const FeatureConfig& cfg);

struct CorpusStats {
  Vec mean;
  Vec std;  // floored at kStdFloor
  static constexpr double kStdFloor = 1e-6;
};

/// Population mean / standard deviation per feature dimension.
CorpusStats FitStats(const std::vector<FeatureSequence>& corpus);
CorpusStats FitStats(const std::vector<const Mat*>& corpus);
Mat Normalize(const Mat& x, const CorpusStats& stats);
Mat Denormalize(const Mat& x, const CorpusStats& stats);

void SaveStats(const std::string& path, const CorpusStats& stats);
CorpusStats LoadStats(const std::string& path);

}  // namespace s2c
