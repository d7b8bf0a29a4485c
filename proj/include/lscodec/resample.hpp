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
#include "lscodec/wave.hpp"

namespace lsc {

namespace detail {

/// Modified Bessel function of the first kind, order zero (power series).
inline double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  const double half_sq = 0.25 * x * x;
  for (int k = 1; k < 64; ++k) {
    term *= half_sq / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-16 * sum) break;
  }
  return sum;
}

inline double sinc(double t) {
  if (std::abs(t) < 1e-12) return 1.0;
  const double pt = M_PI * t;
  return std::sin(pt) / pt;
}

}  // namespace detail

struct ResampleParams {
  double kaiser_beta = 8.0;
  int taps = 64;  // total kernel support in input samples
};

/// Band-limited windowed-sinc interpolation of `wave` onto `out_len` evenly
/// spaced positions. The kernel cutoff shrinks to out_len/in_len when the
/// mapping skips through the input faster than one sample per output sample,
/// which is what keeps the mapping alias-free.
inline Waveform resample_to_length(const Waveform& wave, std::int64_t out_len,
                                   const ResampleParams& params = {}) {
  wave.validate();
  check_arg(out_len >= 1, "resample target length must be >= 1");
  const std::int64_t n = wave.size();
  const double step = static_cast<double>(n) / static_cast<double>(out_len);
  const double cutoff = std::min(1.0, 1.0 / step);
  const int half = params.taps / 2;
  const double i0_beta = detail::bessel_i0(params.kaiser_beta);

  std::vector<double> out(static_cast<std::size_t>(out_len));
  for (std::int64_t j = 0; j < out_len; ++j) {
    const double p = static_cast<double>(j) * step;
    const auto k_lo = static_cast<std::int64_t>(std::ceil(p)) - half;
    const auto k_hi = static_cast<std::int64_t>(std::floor(p)) + half;
    double acc = 0.0;
    for (std::int64_t k = std::max<std::int64_t>(0, k_lo); k <= std::min(n - 1, k_hi); ++k) {
      const double t = static_cast<double>(k) - p;
      const double u = t / half;
      const double win = detail::bessel_i0(params.kaiser_beta * std::sqrt(1.0 - u * u)) / i0_beta;
      acc += wave.samples[static_cast<std::size_t>(k)] * cutoff * detail::sinc(cutoff * t) * win;
    }
    out[static_cast<std::size_t>(j)] = acc;
  }
  return Waveform(std::move(out), wave.sample_rate);
}

}  // namespace lsc
