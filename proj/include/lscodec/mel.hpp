// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <vector>

#include "lscodec/common.hpp"
#include "lscodec/fft.hpp"
#include "lscodec/wave.hpp"

namespace lsc {

struct MelConfig {
  int sample_rate = 24000;
  int frame_rate = 50;
  int n_fft = 1024;
  int n_mels = 80;
  double fmin = 20.0;
  double fmax = 12000.0;
  double log_floor = 1e-5;

  int hop() const { return sample_rate / frame_rate; }

  void validate() const {
    check_arg(sample_rate > 0 && frame_rate > 0, "mel config rates must be positive");
    check_arg(sample_rate % frame_rate == 0, "sample rate must be divisible by frame rate");
    check_arg(n_fft > 0 && (n_fft & (n_fft - 1)) == 0, "n_fft must be a power of two");
    check_arg(n_mels > 0, "n_mels must be positive");
    check_arg(fmin >= 0 && fmax > fmin && fmax <= sample_rate / 2.0, "bad mel frequency range");
  }
};

/// Log-mel energies, frames over time as rows.
struct MelSpectrogram {
  MatD frames;  // T x n_mels
  int frame_rate = 50;

  std::int64_t num_frames() const { return frames.rows(); }
};

/// Per-band statistics used for cepstral normalization; computed once over
/// the training manifest and persisted with checkpoints.
struct MelNormStats {
  VecD mean;  // n_mels
  VecD var;   // n_mels

  bool valid() const { return mean.size() > 0 && mean.size() == var.size(); }
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Hz positions of the n_mels + 2 triangle edge points.
inline std::vector<double> mel_band_edges(const MelConfig& cfg) {
  cfg.validate();
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
  const double m_lo = hz_to_mel(cfg.fmin), m_hi = hz_to_mel(cfg.fmax);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(m_lo + (m_hi - m_lo) * static_cast<double>(i) / (cfg.n_mels + 1));
  return edges;
}

/// Hz position of each triangle peak, one per band.
inline std::vector<double> mel_band_centers_hz(const MelConfig& cfg) {
  const std::vector<double> edges = mel_band_edges(cfg);
  std::vector<double> centers(static_cast<std::size_t>(cfg.n_mels));
  for (int i = 0; i < cfg.n_mels; ++i) {
    centers[static_cast<std::size_t>(i)] = edges[static_cast<std::size_t>(i) + 1];
  }
  return centers;
}

/// Triangular filterbank, n_mels x (n_fft/2 + 1).
inline MatD mel_filterbank(const MelConfig& cfg) {
  const std::vector<double> edges = mel_band_edges(cfg);
  const int n_bins = cfg.n_fft / 2 + 1;
  MatD fb = MatD::Zero(cfg.n_mels, n_bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m) + 1];
    const double right = edges[static_cast<std::size_t>(m) + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
      if (f > left && f < right) {
        fb(m, k) = f <= center ? (f - left) / (center - left) : (right - f) / (right - center);
      }
    }
  }
  return fb;
}

/// Log-mel extraction: floor(len/hop) frames, each windowing n_fft samples
/// from t*hop with zero padding past the signal end.
inline MelSpectrogram extract_mel(const Waveform& wave, const MelConfig& cfg) {
  cfg.validate();
  wave.validate();
  check_arg(wave.sample_rate == cfg.sample_rate, "waveform not at the pipeline sample rate");
  check_arg(wave.size() >= cfg.n_fft, "waveform shorter than one analysis window");

  const int hop = cfg.hop();
  const std::int64_t n_frames = wave.size() / hop;
  const int n_bins = cfg.n_fft / 2 + 1;
  const MatD fb = mel_filterbank(cfg);

  std::vector<double> window(static_cast<std::size_t>(cfg.n_fft));
  for (int i = 0; i < cfg.n_fft; ++i)
    window[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / cfg.n_fft);

  MelSpectrogram mel;
  mel.frame_rate = cfg.frame_rate;
  mel.frames.resize(n_frames, cfg.n_mels);
  std::vector<double> frame(static_cast<std::size_t>(cfg.n_fft));
  VecD power(n_bins);
  for (std::int64_t t = 0; t < n_frames; ++t) {
    const std::int64_t start = t * hop;
    for (int i = 0; i < cfg.n_fft; ++i) {
      const std::int64_t k = start + i;
      frame[static_cast<std::size_t>(i)] =
          (k < wave.size() ? wave.samples[static_cast<std::size_t>(k)] : 0.0) *
          window[static_cast<std::size_t>(i)];
    }
    const auto spec = rfft(frame.data(), frame.size(), static_cast<std::size_t>(cfg.n_fft));
    for (int k = 0; k < n_bins; ++k) power(k) = std::norm(spec[static_cast<std::size_t>(k)]);
    VecD energies = fb * power;
    for (int m = 0; m < cfg.n_mels; ++m)
      mel.frames(t, m) = std::log(std::max(energies(m), cfg.log_floor));
  }
  return mel;
}

inline MelNormStats compute_mel_norm_stats(const std::vector<MelSpectrogram>& mels) {
  check_arg(!mels.empty(), "no mel spectrograms for normalization stats");
  const auto bands = mels.front().frames.cols();
  VecD sum = VecD::Zero(bands), sum_sq = VecD::Zero(bands);
  std::int64_t count = 0;
  for (const auto& m : mels) {
    check_arg(m.frames.cols() == bands, "inconsistent band counts");
    sum += m.frames.colwise().sum().transpose();
    sum_sq += m.frames.array().square().matrix().colwise().sum().transpose();
    count += m.frames.rows();
  }
  MelNormStats stats;
  stats.mean = sum / static_cast<double>(count);
  stats.var = sum_sq / static_cast<double>(count) - stats.mean.cwiseProduct(stats.mean);
  stats.var = stats.var.cwiseMax(0.0);
  return stats;
}

inline MelSpectrogram apply_mel_norm(const MelSpectrogram& mel, const MelNormStats& stats) {
  check_arg(stats.valid() && stats.mean.size() == mel.frames.cols(), "mel stats dimension mismatch");
  MelSpectrogram out = mel;
  for (Eigen::Index m = 0; m < out.frames.cols(); ++m) {
    const double sd = std::sqrt(stats.var(m) + 1e-8);
    out.frames.col(m) = (out.frames.col(m).array() - stats.mean(m)) / sd;
  }
  return out;
}

inline MelSpectrogram invert_mel_norm(const MelSpectrogram& mel, const MelNormStats& stats) {
  check_arg(stats.valid() && stats.mean.size() == mel.frames.cols(), "mel stats dimension mismatch");
  MelSpectrogram out = mel;
  for (Eigen::Index m = 0; m < out.frames.cols(); ++m) {
    const double sd = std::sqrt(stats.var(m) + 1e-8);
    out.frames.col(m) = out.frames.col(m).array() * sd + stats.mean(m);
  }
  return out;
}

}  // namespace lsc
