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

#include <algorithm>
#include <cmath>
#include <vector>

#include "lscodec/common.hpp"
#include "lscodec/wave.hpp"

namespace lsc {

enum class WindowKind { kHann };

struct WsolaParams {
  int frame_len = 0;
  int synth_hop = 0;
  int tolerance = 0;  // max deviation of an analysis offset from its nominal position
  WindowKind window = WindowKind::kHann;

  /// Standard settings: 25 ms frames, half-overlap, tolerance of half a hop.
  static WsolaParams defaults(int sample_rate) {
    WsolaParams p;
    p.frame_len = std::max(2, sample_rate * 25 / 1000);
    p.synth_hop = p.frame_len / 2;
    p.tolerance = p.synth_hop / 2;
    return p;
  }
};

namespace detail {

inline std::vector<double> make_window(WindowKind kind, int len) {
  std::vector<double> w(static_cast<std::size_t>(len));
  switch (kind) {
    case WindowKind::kHann:
      for (int i = 0; i < len; ++i)
        w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / len);
      break;
  }
  return w;
}

inline void validate_wsola_params(const WsolaParams& p) {
  check_arg(p.frame_len > 0, "wsola frame_len must be positive");
  check_arg(p.synth_hop > 0 && p.synth_hop <= p.frame_len, "wsola requires 0 < synth_hop <= frame_len");
  check_arg(p.tolerance >= 0, "wsola tolerance must be >= 0");
  // Overlap-added window copies must sum to a constant within 1% in the
  // steady-state region.
  const std::vector<double> w = make_window(p.window, p.frame_len);
  double lo = 1e30, hi = 0.0;
  for (int n = 0; n < p.synth_hop; ++n) {
    double s = 0.0;
    for (int start = n + p.frame_len; start >= 0; start -= p.synth_hop) {
      const int i = start - p.synth_hop;
      if (i >= 0 && i < p.frame_len) s += w[static_cast<std::size_t>(i)];
    }
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  check_arg(hi > 0.0 && (hi - lo) / hi <= 0.01, "wsola window does not satisfy COLA within 1%");
}

inline double norm_xcorr(const double* a, const double* b, int n) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int i = 0; i < n; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na * nb) + 1e-12);
}

}  // namespace detail

/// Time-stretches `wave` to exactly `target_len` samples without changing
/// pitch. Each synthesis frame is picked near its nominal analysis position,
/// shifted within +-tolerance to maximize normalized cross-correlation with
/// the natural continuation of the previous frame, then overlap-added.
inline Waveform wsola_stretch(const Waveform& wave, std::int64_t target_len,
                              const WsolaParams& params) {
  wave.validate();
  detail::validate_wsola_params(params);
  const std::int64_t n = wave.size();
  const int frame_len = params.frame_len;
  const int hop = params.synth_hop;
  check_arg(target_len > frame_len, "wsola target length must exceed frame_len");
  check_arg(n >= frame_len, "wsola input shorter than one frame");

  const std::vector<double> window = detail::make_window(params.window, frame_len);
  const double ratio = static_cast<double>(target_len) / static_cast<double>(n);

  // Frame fetch with zero padding past the input tail.
  auto fetch = [&](std::int64_t start, double* dst) {
    for (int i = 0; i < frame_len; ++i) {
      const std::int64_t k = start + i;
      dst[i] = (k >= 0 && k < n) ? wave.samples[static_cast<std::size_t>(k)] : 0.0;
    }
  };

  std::vector<double> out(static_cast<std::size_t>(target_len) + frame_len, 0.0);
  std::vector<double> winsum(out.size(), 0.0);
  std::vector<double> frame(static_cast<std::size_t>(frame_len));
  std::vector<double> cont(static_cast<std::size_t>(frame_len));
  std::vector<double> cand(static_cast<std::size_t>(frame_len));

  std::int64_t prev_pos = 0;
  for (std::int64_t synth = 0; synth < target_len; synth += hop) {
    std::int64_t pos;
    if (synth == 0) {
      pos = 0;  // first frame comes verbatim from the input start
    } else {
      const auto nominal =
          std::clamp<std::int64_t>(std::llround(static_cast<double>(synth) / ratio), 0, n - 1);
      fetch(prev_pos + hop, cont.data());
      double best = -2.0;
      std::int64_t best_pos = nominal;
      // Spiral order 0, -1, +1, -2, ... so ties prefer the smallest shift.
      for (int step = 0; step <= params.tolerance; ++step) {
        for (int sign = 0; sign < (step == 0 ? 1 : 2); ++sign) {
          const std::int64_t delta = (sign == 0) ? -step : step;
          const std::int64_t p = nominal + delta;
          if (p < 0 || p > n - 1) continue;
          fetch(p, cand.data());
          const double score = detail::norm_xcorr(cand.data(), cont.data(), frame_len);
          if (score > best) {
            best = score;
            best_pos = p;
          }
        }
      }
      pos = best_pos;
      check_arg(std::llabs(pos - nominal) <= params.tolerance, "wsola alignment bound violated");
    }
    fetch(pos, frame.data());
    for (int i = 0; i < frame_len; ++i) {
      out[static_cast<std::size_t>(synth + i)] += frame[static_cast<std::size_t>(i)] *
                                                  window[static_cast<std::size_t>(i)];
      winsum[static_cast<std::size_t>(synth + i)] += window[static_cast<std::size_t>(i)];
    }
    prev_pos = pos;
  }

  std::vector<double> result(static_cast<std::size_t>(target_len));
  for (std::int64_t i = 0; i < target_len; ++i) {
    const double ws = winsum[static_cast<std::size_t>(i)];
    result[static_cast<std::size_t>(i)] =
        ws > 1e-8 ? out[static_cast<std::size_t>(i)] / ws : 0.0;
  }
  return Waveform(std::move(result), wave.sample_rate);
}

}  // namespace lsc
