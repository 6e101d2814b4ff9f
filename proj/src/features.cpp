// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2c/features.hpp"

#include <fftw3.h>

#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>

namespace s2c {
namespace {

// FFTW planning is not thread-safe; execution with the new-array interface
// is. Plans are created once per size and kept for the process lifetime.
struct FftPlans {
  fftw_plan forward;
  fftw_plan inverse;
};

const FftPlans& PlansFor(int n) {
  static std::mutex mu;
  static std::map<int, FftPlans> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<double> real(static_cast<std::size_t>(n));
  std::vector<fftw_complex> cplx(std::size_t(n / 2 + 1));
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  FftPlans plans{
      fftw_plan_dft_r2c_1d(n, real.data(), cplx.data(), flags),
      fftw_plan_dft_c2r_1d(n, cplx.data(), real.data(), flags)};
  return cache.emplace(n, plans).first->second;
}

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> PadForCenter(const std::vector<double>& x, int pad) {
  const int n = int(x.size());
  std::vector<double> out(x.size() + 2 * std::size_t(pad));
  for (int i = 0; i < int(out.size()); ++i) {
    int j = i - pad;
    // reflect without repeating the edge sample
    while (j < 0 || j >= n) {
      if (j < 0) j = -j;
      if (j >= n) j = 2 * (n - 1) - j;
      if (n == 1) { j = 0; break; }
    }
    out[std::size_t(i)] = x[std::size_t(j)];
  }
  return out;
}

void CheckFinite(const std::vector<double>& x) {
  for (double v : x)
    if (!std::isfinite(v)) throw Error("waveform contains non-finite samples");
}

}  // namespace

int FeatureConfig::win_length() const {
  return int(std::lround(win_ms * sample_rate / 1000.0));
}

int FeatureConfig::hop_length() const {
  return int(std::lround(hop_ms * sample_rate / 1000.0));
}

void FeatureConfig::Validate() const {
  if (sample_rate <= 0) throw Error("features", "sample_rate must be positive");
  if (win_length() < 2) throw Error("features", "window too small");
  if (hop_length() < 1) throw Error("features", "hop must be at least one sample");
  if (hop_length() > win_length()) throw Error("features", "hop exceeds window");
  if (fft_size < win_length())
    throw Error("features", "fft_size smaller than the analysis window");
  if (n_mels < 1 || n_mfcc < 1 || n_mfcc > n_mels)
    throw Error("features", "need 1 <= n_mfcc <= n_mels");
  if (delta_window < 1) throw Error("features", "delta_window must be >= 1");
  if (!(log_floor > 0)) throw Error("features", "log_floor must be positive");
  if (griffin_lim_iters < 0) throw Error("features", "griffin_lim_iters < 0");
  if (!(griffin_lim_momentum >= 0 && griffin_lim_momentum < 1))
    throw Error("features", "griffin_lim_momentum must be in [0, 1)");
}

int NumFrames(std::size_t num_samples, const FeatureConfig& cfg) {
  const int win = cfg.win_length(), hop = cfg.hop_length();
  if (cfg.center) {
    if (num_samples == 0) throw Error("features", "utterance too short");
    return int(num_samples) / hop + 1;
  }
  if (num_samples < std::size_t(win))
    throw Error("features", "utterance too short");
  return int((num_samples - std::size_t(win)) / std::size_t(hop)) + 1;
}

std::vector<double> AnalysisWindow(const FeatureConfig& cfg) {
  const int n = cfg.win_length();
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    w[std::size_t(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

ComplexMat Stft(const std::vector<double>& samples, const FeatureConfig& cfg) {
  cfg.Validate();
  CheckFinite(samples);
  const int win = cfg.win_length(), hop = cfg.hop_length(), n = cfg.fft_size;
  const int frames = NumFrames(samples.size(), cfg);
  const std::vector<double> padded =
      cfg.center ? PadForCenter(samples, win / 2) : std::vector<double>{};
  const std::vector<double>& x = cfg.center ? padded : samples;
  const std::vector<double> window = AnalysisWindow(cfg);
  const FftPlans& plans = PlansFor(n);

  ComplexMat out(frames, cfg.n_bins());
  std::vector<double> buf(static_cast<std::size_t>(n));
  std::vector<fftw_complex> spec(std::size_t(cfg.n_bins()));
  for (int t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), 0.0);
    const std::size_t start = std::size_t(t) * std::size_t(hop);
    for (int i = 0; i < win && start + std::size_t(i) < x.size(); ++i)
      buf[std::size_t(i)] = x[start + std::size_t(i)] * window[std::size_t(i)];
    fftw_execute_dft_r2c(plans.forward, buf.data(), spec.data());
    for (int k = 0; k < cfg.n_bins(); ++k)
      out(t, k) = {spec[std::size_t(k)][0], spec[std::size_t(k)][1]};
  }
  return out;
}

std::vector<double> Istft(const ComplexMat& spec, const FeatureConfig& cfg) {
  cfg.Validate();
  if (spec.cols() != cfg.n_bins())
    throw Error("features", "iSTFT input has wrong number of bins");
  const int win = cfg.win_length(), hop = cfg.hop_length(), n = cfg.fft_size;
  const int frames = int(spec.rows());
  if (frames == 0) return {};
  const std::vector<double> window = AnalysisWindow(cfg);
  const FftPlans& plans = PlansFor(n);

  const std::size_t len = std::size_t(frames - 1) * std::size_t(hop) + std::size_t(win);
  std::vector<double> out(len, 0.0), wsum(len, 0.0);
  std::vector<double> buf(static_cast<std::size_t>(n));
  std::vector<fftw_complex> freq(std::size_t(cfg.n_bins()));
  for (int t = 0; t < frames; ++t) {
    for (int k = 0; k < cfg.n_bins(); ++k) {
      freq[std::size_t(k)][0] = spec(t, k).real();
      freq[std::size_t(k)][1] = spec(t, k).imag();
    }
    fftw_execute_dft_c2r(plans.inverse, freq.data(), buf.data());
    const std::size_t start = std::size_t(t) * std::size_t(hop);
    for (int i = 0; i < win; ++i) {
      const double w = window[std::size_t(i)];
      out[start + std::size_t(i)] += buf[std::size_t(i)] / n * w;
      wsum[start + std::size_t(i)] += w * w;
    }
  }
  for (std::size_t i = 0; i < len; ++i)
    out[i] = wsum[i] > 1e-10 ? out[i] / wsum[i] : 0.0;
  if (cfg.center) {
    const std::size_t pad = std::size_t(win / 2);
    const std::size_t keep = std::size_t(frames - 1) * std::size_t(hop);
    std::vector<double> trimmed(out.begin() + std::ptrdiff_t(std::min(pad, len)),
                                out.begin() + std::ptrdiff_t(std::min(pad + keep, len)));
    return trimmed;
  }
  return out;
}

FeatureSequence ComputeLinearSpectrogram(const Waveform& w,
                                         const FeatureConfig& cfg) {
  if (w.sample_rate != cfg.sample_rate)
    throw Error("features", "sample rate mismatch: wav " +
                                std::to_string(w.sample_rate) + " vs config " +
                                std::to_string(cfg.sample_rate));
  FeatureSequence seq;
  seq.frames = Stft(w.samples, cfg).cwiseAbs();
  seq.kind = FeatureKind::kLinear1025;
  seq.frame_hop_ms = cfg.hop_ms;
  return seq;
}

Mat MelFilterbank(const FeatureConfig& cfg) {
  const int bins = cfg.n_bins();
  const double nyquist = cfg.sample_rate / 2.0;
  const double mel_max = HzToMel(nyquist);
  std::vector<double> edges(std::size_t(cfg.n_mels + 2));
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    edges[std::size_t(i)] = MelToHz(mel_max * i / (cfg.n_mels + 1));

  Mat fb = Mat::Zero(cfg.n_mels, bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[std::size_t(m)], mid = edges[std::size_t(m + 1)],
                 hi = edges[std::size_t(m + 2)];
    for (int k = 0; k < bins; ++k) {
      const double f = double(k) * cfg.sample_rate / cfg.fft_size;
      const double up = (f - lo) / (mid - lo);
      const double down = (hi - f) / (hi - mid);
      fb(m, k) = std::max(0.0, std::min(up, down));
    }
  }
  return fb;
}

Mat DctMatrix(int n_out, int n_in) {
  Mat d(n_out, n_in);
  for (int k = 0; k < n_out; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / n_in) : std::sqrt(2.0 / n_in);
    for (int m = 0; m < n_in; ++m)
      d(k, m) = scale * std::cos(std::numbers::pi * k * (2 * m + 1) / (2.0 * n_in));
  }
  return d;
}

FeatureSequence ComputeLogMel(const Waveform& w, const FeatureConfig& cfg) {
  FeatureSequence spec = ComputeLinearSpectrogram(w, cfg);
  const Mat fb = MelFilterbank(cfg);
  Mat mel = spec.frames * fb.transpose();
  mel = mel.unaryExpr([&](double v) { return std::log(std::max(v, cfg.log_floor)); });
  return {std::move(mel), FeatureKind::kMel, cfg.hop_ms};
}

FeatureSequence ComputeMfcc(const Waveform& w, const FeatureConfig& cfg) {
  const FeatureSequence logmel = ComputeLogMel(w, cfg);
  const Mat dct = DctMatrix(cfg.n_mfcc, cfg.n_mels);
  const Mat cep = logmel.frames * dct.transpose();
  const Mat d1 = ComputeDeltas(cep, cfg.delta_window);
  const Mat d2 = ComputeDeltas(d1, cfg.delta_window);

  FeatureSequence out;
  out.frames.resize(cep.rows(), 3 * cep.cols());
  out.frames << cep, d1, d2;
  out.kind = cfg.n_mfcc == 13 ? FeatureKind::kMfcc39 : FeatureKind::kGeneric;
  out.frame_hop_ms = cfg.hop_ms;
  return out;
}

Mat ComputeDeltas(const Mat& seq, int window) {
  if (window < 1) throw Error("features", "delta window must be >= 1");
  const Eigen::Index T = seq.rows();
  double denom = 0.0;
  for (int n = 1; n <= window; ++n) denom += double(n) * n;
  denom *= 2.0;
  Mat out = Mat::Zero(T, seq.cols());
  for (Eigen::Index t = 0; t < T; ++t) {
    for (int n = 1; n <= window; ++n) {
      const Eigen::Index fwd = std::min<Eigen::Index>(t + n, T - 1);
      const Eigen::Index bwd = std::max<Eigen::Index>(t - n, 0);
      out.row(t) += double(n) * (seq.row(fwd) - seq.row(bwd));
    }
    out.row(t) /= denom;
  }
  return out;
}

double SpectralConvergence(const std::vector<double>& samples, const Mat& mag,
                           const FeatureConfig& cfg) {
  const Mat est = Stft(samples, cfg).cwiseAbs();
  const Eigen::Index T = std::min(est.rows(), mag.rows());
  const double denom = mag.topRows(T).norm();
  if (denom == 0.0) return est.topRows(T).norm() == 0.0 ? 0.0 : 1.0;
  return (est.topRows(T) - mag.topRows(T)).norm() / denom;
}

GriffinLimResult GriffinLim(const Mat& magnitude, int iters,
                            const FeatureConfig& cfg) {
  if (iters < 0) throw Error("griffin-lim", "iteration count must be >= 0");
  if (magnitude.cols() != cfg.n_bins())
    throw Error("griffin-lim", "magnitude has " + std::to_string(magnitude.cols()) +
                                   " bins, expected " + std::to_string(cfg.n_bins()));
  if (magnitude.rows() == 0) throw Error("griffin-lim", "empty magnitude");
  for (Eigen::Index i = 0; i < magnitude.size(); ++i) {
    const double v = magnitude.data()[i];
    if (std::isnan(v)) throw Error("griffin-lim", "NaN in magnitude");
    if (std::isinf(v)) throw Error("griffin-lim", "infinite magnitude");
    if (v < 0.0) throw Error("griffin-lim", "negative magnitude");
  }
  const double mag_norm = magnitude.norm();
  auto sc_of = [&](const ComplexMat& est) {
    if (mag_norm == 0.0) return 0.0;
    return (est.cwiseAbs() - magnitude).norm() / mag_norm;
  };

  auto project = [&](const ComplexMat& est) {
    ComplexMat out(est.rows(), est.cols());
    for (Eigen::Index i = 0; i < est.size(); ++i) {
      const std::complex<double> z = est.data()[i];
      const double a = std::abs(z);
      const std::complex<double> phase = a > 0.0 ? z / a : std::complex<double>(1.0, 0.0);
      out.data()[i] = magnitude.data()[i] * phase;
    }
    return out;
  };

  // zero-phase start; a momentum step is kept only when it does not raise SC
  GriffinLimResult result;
  std::vector<double> wav = Istft(magnitude.cast<std::complex<double>>(), cfg);
  ComplexMat est = Stft(wav, cfg);
  double sc = sc_of(est);
  result.sc_history.push_back(sc);
  ComplexMat prev;
  for (int it = 0; it < iters; ++it) {
    const ComplexMat proj = project(est);
    bool accepted = false;
    if (cfg.griffin_lim_momentum > 0.0 && prev.size() > 0) {
      std::vector<double> cand = Istft(proj + cfg.griffin_lim_momentum * (proj - prev), cfg);
      ComplexMat cand_est = Stft(cand, cfg);
      const double cand_sc = sc_of(cand_est);
      if (cand_sc <= sc) {
        wav = std::move(cand);
        est = std::move(cand_est);
        sc = cand_sc;
        accepted = true;
      }
    }
    if (!accepted) {
      wav = Istft(proj, cfg);
      est = Stft(wav, cfg);
      sc = sc_of(est);
    }
    prev = proj;
    result.sc_history.push_back(sc);
  }
  const double final_sc = sc;
  result.spectral_convergence = final_sc;
  result.wav.samples = std::move(wav);
  result.wav.sample_rate = cfg.sample_rate;
  return result;
}

CorpusStats FitStats(const std::vector<const Mat*>& corpus) {
  if (corpus.empty()) throw Error("features", "cannot fit stats on empty corpus");
  const Eigen::Index dim = corpus.front()->cols();
  Vec sum = Vec::Zero(dim), sq = Vec::Zero(dim);
  double count = 0;
  for (const Mat* m : corpus) {
    if (m->cols() != dim) throw Error("features", "dimension mismatch in corpus");
    sum += m->colwise().sum().transpose();
    count += double(m->rows());
  }
  if (count == 0) throw Error("features", "corpus has no frames");
  CorpusStats s;
  s.mean = sum / count;
  for (const Mat* m : corpus)
    sq += (m->rowwise() - s.mean.transpose()).array().square().colwise().sum().matrix().transpose();
  s.std = (sq / count).cwiseSqrt().cwiseMax(CorpusStats::kStdFloor);
  return s;
}

CorpusStats FitStats(const std::vector<FeatureSequence>& corpus) {
  std::vector<const Mat*> ptrs;
  for (const auto& f : corpus) ptrs.push_back(&f.frames);
  return FitStats(ptrs);
}

Mat Normalize(const Mat& x, const CorpusStats& stats) {
  if (x.cols() != stats.mean.size())
    throw Error("features", "dimension mismatch: features " + std::to_string(x.cols()) +
                                " vs stats " + std::to_string(stats.mean.size()));
  return ((x.rowwise() - stats.mean.transpose()).array().rowwise() /
          stats.std.transpose().array()).matrix();
}

Mat Denormalize(const Mat& x, const CorpusStats& stats) {
  if (x.cols() != stats.mean.size())
    throw Error("features", "dimension mismatch in denormalize");
  return ((x.array().rowwise() * stats.std.transpose().array()).matrix().rowwise() +
          stats.mean.transpose());
}

void SaveStats(const std::string& path, const CorpusStats& stats) {
  Mat m(2, stats.mean.size());
  m.row(0) = stats.mean.transpose();
  m.row(1) = stats.std.transpose();
  // stats are stored at float32 precision like every other tensor
  WriteTensorFile(path, m, FeatureKind::kGeneric);
}

CorpusStats LoadStats(const std::string& path) {
  TensorRecord rec = ReadTensorFile(path);
  if (rec.value.rows() != 2) throw Error("malformed stats file: " + path);
  CorpusStats s;
  s.mean = rec.value.row(0).transpose();
  s.std = rec.value.row(1).transpose().cwiseMax(CorpusStats::kStdFloor);
  return s;
}

}  // namespace s2c
