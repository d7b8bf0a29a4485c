// Licensed to the Apache Software Foundation (ASF) under one
// or more contributor license agreements.  See the NOTICE file
// distributed with this work for additional information
// regarding copyright ownership.  The ASF licenses this file
// to you under the Apache License, Version 2.0 (the
// "License"); you may not use this file except in compliance
// with the License.  You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LSCODEC_VOCODER_HPP
#define LSCODEC_VOCODER_HPP

#include <Eigen/SVD>
#include <cmath>
#include <complex>
#include <memory>
#include <string>
#include <vector>

#include "lscodec/common.hpp"
#include "lscodec/fft.hpp"
#include "lscodec/mel.hpp"
#include "lscodec/tokenstream.hpp"
#include "lscodec/wave.hpp"

namespace lsc {

/// Final synthesis stage. The decoder hands over everything it knows: the
/// token sequence, its predicted denormalized log-mel, and the prompt
/// waveform. A learned vocoder may consume the tokens and prompt directly;
/// the reference implementation only needs the mel.
class TokenVocoder {
 public:
  virtual ~TokenVocoder() = default;
  virtual Waveform synthesize(const TokenSequence& tokens, const MelSpectrogram& mel,
                              const Waveform* prompt) const = 0;
  virtual std::string name() const = 0;
};

namespace stft {

/// Frames at t*hop with zero padding past the end, matching mel analysis.
inline std::vector<std::vector<std::complex<double>>> analyze(const std::vector<double>& x,
                                                              std::int64_t num_frames,
                                                              const MelConfig& cfg,
                                                              const std::vector<double>& window) {
  const int hop = cfg.hop();
  std::vector<std::vector<std::complex<double>>> spec(static_cast<std::size_t>(num_frames));
  std::vector<double> frame(static_cast<std::size_t>(cfg.n_fft));
  for (std::int64_t t = 0; t < num_frames; ++t) {
    const std::int64_t start = t * hop;
    for (int i = 0; i < cfg.n_fft; ++i) {
      const std::int64_t k = start + i;
      frame[static_cast<std::size_t>(i)] =
          (k < static_cast<std::int64_t>(x.size()) ? x[static_cast<std::size_t>(k)] : 0.0) *
          window[static_cast<std::size_t>(i)];
    }
    spec[static_cast<std::size_t>(t)] =
        rfft(frame.data(), frame.size(), static_cast<std::size_t>(cfg.n_fft));
  }
  return spec;
}

/// Weighted overlap-add inverse with window-square normalization.
inline std::vector<double> resynthesize(
    const std::vector<std::vector<std::complex<double>>>& spec, const MelConfig& cfg,
    const std::vector<double>& window) {
  const int hop = cfg.hop();
  const std::int64_t num_frames = static_cast<std::int64_t>(spec.size());
  const std::size_t out_len =
      static_cast<std::size_t>((num_frames - 1) * hop + cfg.n_fft);
  std::vector<double> acc(out_len, 0.0);
  std::vector<double> wsum(out_len, 0.0);
  for (std::int64_t t = 0; t < num_frames; ++t) {
    const std::vector<double> frame =
        irfft(spec[static_cast<std::size_t>(t)], static_cast<std::size_t>(cfg.n_fft));
    const std::size_t start = static_cast<std::size_t>(t * hop);
    for (int i = 0; i < cfg.n_fft; ++i) {
      const double w = window[static_cast<std::size_t>(i)];
      acc[start + static_cast<std::size_t>(i)] += frame[static_cast<std::size_t>(i)] * w;
      wsum[start + static_cast<std::size_t>(i)] += w * w;
    }
  }
  for (std::size_t n = 0; n < out_len; ++n) {
    acc[n] /= std::max(wsum[n], 1e-8);
  }
  return acc;
}

}  // namespace stft

/// Phase reconstruction by iterative spectrogram inversion. Magnitudes come
/// from the mel through a pseudo-inverse of the filterbank; phases start at
/// zero (deterministic, no random init) and are refined by alternating
/// projections between the time domain and the fixed-magnitude constraint.
class GriffinLimVocoder : public TokenVocoder {
 public:
  explicit GriffinLimVocoder(MelConfig cfg = MelConfig(), int iterations = 32)
      : cfg_(cfg), iterations_(iterations) {
    check_arg(iterations_ >= 0, "GriffinLimVocoder: iterations must be non-negative");
    cfg_.validate();
    const MatD fb = mel_filterbank(cfg_);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(fb, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double cutoff = sv(0) * 1e-10;
    Eigen::VectorXd inv = sv;
    for (Eigen::Index i = 0; i < inv.size(); ++i) {
      inv(i) = sv(i) > cutoff ? 1.0 / sv(i) : 0.0;
    }
    pinv_ = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();

    window_.resize(static_cast<std::size_t>(cfg_.n_fft));
    for (int i = 0; i < cfg_.n_fft; ++i) {
      window_[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / cfg_.n_fft);
    }
  }

  Waveform synthesize(const TokenSequence&, const MelSpectrogram& mel,
                      const Waveform*) const override {
    check_arg(mel.frames.rows() >= 1, "vocoder: empty mel spectrogram");
    check_arg(mel.frames.cols() == cfg_.n_mels, "vocoder: mel band count mismatch");
    const std::int64_t t_frames = mel.frames.rows();
    const int n_bins = cfg_.n_fft / 2 + 1;

    // Log-mel to linear magnitude per frame.
    MatD mag(t_frames, n_bins);
    for (std::int64_t t = 0; t < t_frames; ++t) {
      const VecD mel_power = mel.frames.row(t).array().exp().matrix().transpose();
      VecD lin = pinv_ * mel_power;
      for (int k = 0; k < n_bins; ++k) {
        mag(t, k) = std::sqrt(std::max(lin(k), 0.0));
      }
    }

    std::vector<std::vector<std::complex<double>>> spec(static_cast<std::size_t>(t_frames));
    for (std::int64_t t = 0; t < t_frames; ++t) {
      auto& row = spec[static_cast<std::size_t>(t)];
      row.resize(static_cast<std::size_t>(n_bins));
      for (int k = 0; k < n_bins; ++k) {
        row[static_cast<std::size_t>(k)] = {mag(t, k), 0.0};
      }
    }

    std::vector<double> x;
    for (int it = 0; it < iterations_; ++it) {
      x = stft::resynthesize(spec, cfg_, window_);
      spec = stft::analyze(x, t_frames, cfg_, window_);
      for (std::int64_t t = 0; t < t_frames; ++t) {
        auto& row = spec[static_cast<std::size_t>(t)];
        for (int k = 0; k < n_bins; ++k) {
          const double m = std::abs(row[static_cast<std::size_t>(k)]);
          row[static_cast<std::size_t>(k)] =
              m > 1e-12 ? row[static_cast<std::size_t>(k)] * (mag(t, k) / m)
                        : std::complex<double>(mag(t, k), 0.0);
        }
      }
    }
    x = stft::resynthesize(spec, cfg_, window_);

    Waveform out;
    out.sample_rate = cfg_.sample_rate;
    out.samples.assign(static_cast<std::size_t>(t_frames * cfg_.hop()), 0.0);
    const std::size_t copy = std::min(out.samples.size(), x.size());
    for (std::size_t n = 0; n < copy; ++n) {
      out.samples[n] = x[n];
    }
    return out;
  }

  std::string name() const override { return "griffin-lim"; }

 private:
  MelConfig cfg_;
  int iterations_;
  MatD pinv_;  // n_bins x n_mels
  std::vector<double> window_;
};

inline std::unique_ptr<TokenVocoder> make_vocoder(const std::string& name, const MelConfig& cfg) {
  if (name == "griffin-lim") {
    return std::make_unique<GriffinLimVocoder>(cfg);
  }
  throw ConfigError("unknown vocoder: " + name);
}

}  // namespace lsc

#endif  // LSCODEC_VOCODER_HPP
