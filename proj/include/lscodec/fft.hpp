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
#include <complex>
#include <vector>

#include "lscodec/common.hpp"

namespace lsc {

/// In-place iterative radix-2 FFT. `x.size()` must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& x, bool inverse = false) {
  const std::size_t n = x.size();
  check_arg(n > 0 && (n & (n - 1)) == 0, "FFT size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = x[i + k];
        const std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& v : x) v *= inv_n;
  }
}

/// Forward FFT of a real frame zero-padded/truncated to n_fft; returns the
/// one-sided spectrum of n_fft/2 + 1 bins.
inline std::vector<std::complex<double>> rfft(const double* frame, std::size_t frame_len,
                                              std::size_t n_fft) {
  std::vector<std::complex<double>> x(n_fft, {0.0, 0.0});
  const std::size_t n = std::min(frame_len, n_fft);
  for (std::size_t i = 0; i < n; ++i) x[i] = {frame[i], 0.0};
  fft_inplace(x);
  x.resize(n_fft / 2 + 1);
  return x;
}

/// Inverse of `rfft` for a real signal: expands the one-sided spectrum by
/// conjugate symmetry and returns the n_fft real samples.
inline std::vector<double> irfft(const std::vector<std::complex<double>>& half,
                                 std::size_t n_fft) {
  check_arg(half.size() == n_fft / 2 + 1, "irfft: spectrum size mismatch");
  std::vector<std::complex<double>> x(n_fft);
  for (std::size_t i = 0; i < half.size(); ++i) x[i] = half[i];
  for (std::size_t i = 1; i < n_fft / 2; ++i) x[n_fft - i] = std::conj(half[i]);
  fft_inplace(x, true);
  std::vector<double> out(n_fft);
  for (std::size_t i = 0; i < n_fft; ++i) out[i] = x[i].real();
  return out;
}

}  // namespace lsc
