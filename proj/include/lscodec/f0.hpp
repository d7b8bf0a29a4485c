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

#ifndef LSCODEC_F0_HPP
#define LSCODEC_F0_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lscodec/common.hpp"
#include "lscodec/wave.hpp"

namespace lsc {

/// Frame-rate pitch track. f0_hz holds one value per frame and is zero
/// wherever the voiced flag is false.
struct PitchContour {
  VecD f0_hz;
  std::vector<std::uint8_t> voiced;
  int frame_rate = 0;

  std::size_t size() const { return voiced.size(); }
};

struct F0Config {
  int frame_rate = 50;
  double floor_hz = 50.0;
  double ceil_hz = 600.0;
  /// Frames whose best normalized autocorrelation falls below this are
  /// marked unvoiced.
  double voicing_threshold = 0.5;
  /// Frames quieter than this RMS are silence regardless of correlation.
  double energy_floor = 1e-4;

  void validate() const {
    check_arg(frame_rate >= 1, "F0Config: frame_rate must be positive");
    check_arg(floor_hz > 0 && ceil_hz > floor_hz, "F0Config: need 0 < floor_hz < ceil_hz");
    check_arg(voicing_threshold > 0 && voicing_threshold < 1,
              "F0Config: voicing_threshold must be in (0, 1)");
  }
};

namespace detail {

/// Quadratic-fit refinement of a peak at integer lag using its neighbors.
/// Returns the sub-sample offset in [-0.5, 0.5].
inline double parabolic_offset(double left, double mid, double right) {
  const double denom = left - 2.0 * mid + right;
  if (std::abs(denom) < 1e-12) {
    return 0.0;
  }
  const double off = 0.5 * (left - right) / denom;
  return std::max(-0.5, std::min(0.5, off));
}

}  // namespace detail

/// Estimates a pitch contour by normalized autocorrelation.
///
/// Each frame correlates a window of one maximum period against its
/// lag-shifted copy for every candidate lag. Among local maxima within 0.01
/// of the global best, the smallest lag wins; that resolves the harmonic
/// ambiguity where multiples of the true period also correlate strongly.
/// The winning lag is refined by parabolic interpolation.
///
/// The contour has floor(len / hop) frames, each centered on its frame
/// midpoint. Frames whose analysis span would cross the signal edge are
/// unvoiced.
inline PitchContour estimate_f0(const Waveform& wave, const F0Config& cfg = F0Config()) {
  cfg.validate();
  check_arg(wave.sample_rate % cfg.frame_rate == 0,
            "estimate_f0: sample rate must be divisible by frame rate");
  const int hop = wave.sample_rate / cfg.frame_rate;
  const int max_lag = static_cast<int>(std::floor(wave.sample_rate / cfg.floor_hz));
  const int min_lag = std::max(2, static_cast<int>(std::ceil(wave.sample_rate / cfg.ceil_hz)));
  check_arg(min_lag + 2 < max_lag, "estimate_f0: lag range is empty; check floor/ceil");
  const int win = max_lag;  // correlation window, one full period at the floor

  const std::vector<double>& x = wave.samples;
  const std::size_t len = x.size();
  const std::size_t num_frames = len / static_cast<std::size_t>(hop);

  PitchContour out;
  out.frame_rate = cfg.frame_rate;
  out.f0_hz = VecD::Zero(static_cast<Eigen::Index>(num_frames));
  out.voiced.assign(num_frames, 0);
  if (num_frames == 0) {
    return out;
  }

  // Prefix sums of squares make the per-lag energy terms O(1).
  std::vector<double> sq(len + 1, 0.0);
  for (std::size_t i = 0; i < len; ++i) {
    sq[i + 1] = sq[i] + x[i] * x[i];
  }
  const auto energy = [&sq](std::size_t begin, std::size_t count) {
    return sq[begin + count] - sq[begin];
  };

  const std::size_t span = static_cast<std::size_t>(win + max_lag);
  std::vector<double> nac(static_cast<std::size_t>(max_lag) + 2, 0.0);

  for (std::size_t t = 0; t < num_frames; ++t) {
    const std::size_t center = t * static_cast<std::size_t>(hop) +
                               static_cast<std::size_t>(hop) / 2;
    if (center < span / 2 || center + (span - span / 2) > len) {
      continue;  // analysis span crosses an edge
    }
    const std::size_t start = center - span / 2;

    const double e0 = energy(start, static_cast<std::size_t>(win));
    if (std::sqrt(e0 / win) < cfg.energy_floor) {
      continue;  // silence
    }

    double best = -1.0;
    for (int lag = min_lag - 1; lag <= max_lag; ++lag) {
      double num = 0.0;
      const double* a = x.data() + start;
      const double* b = a + lag;
      for (int n = 0; n < win; ++n) {
        num += a[n] * b[n];
      }
      const double el = energy(start + static_cast<std::size_t>(lag),
                               static_cast<std::size_t>(win));
      const double denom = std::sqrt(e0 * el);
      nac[static_cast<std::size_t>(lag)] = denom > 0 ? num / denom : 0.0;
      if (lag >= min_lag && nac[static_cast<std::size_t>(lag)] > best) {
        best = nac[static_cast<std::size_t>(lag)];
      }
    }
    if (best < cfg.voicing_threshold) {
      continue;
    }

    // Smallest local maximum within a tight band of the global best.
    int chosen = -1;
    for (int lag = min_lag; lag < max_lag; ++lag) {
      const double v = nac[static_cast<std::size_t>(lag)];
      if (v >= best - 0.01 && v >= nac[static_cast<std::size_t>(lag - 1)] &&
          v >= nac[static_cast<std::size_t>(lag + 1)]) {
        chosen = lag;
        break;
      }
    }
    if (chosen < 0) {
      chosen = max_lag;
    }

    double lag_refined = chosen;
    if (chosen > min_lag && chosen < max_lag) {
      lag_refined += detail::parabolic_offset(nac[static_cast<std::size_t>(chosen - 1)],
                                              nac[static_cast<std::size_t>(chosen)],
                                              nac[static_cast<std::size_t>(chosen + 1)]);
    }
    const double f0 = wave.sample_rate / lag_refined;
    if (f0 < cfg.floor_hz || f0 > cfg.ceil_hz) {
      continue;
    }
    out.f0_hz[static_cast<Eigen::Index>(t)] = f0;
    out.voiced[t] = 1;
  }
  return out;
}

/// Mean f0 over voiced frames, or zero when nothing is voiced.
inline double mean_voiced_f0(const PitchContour& c) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < c.size(); ++t) {
    if (c.voiced[t]) {
      sum += c.f0_hz[static_cast<Eigen::Index>(t)];
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

}  // namespace lsc

#endif  // LSCODEC_F0_HPP
