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
#include <string_view>

#include "lscodec/common.hpp"
#include "lscodec/resample.hpp"
#include "lscodec/rng.hpp"
#include "lscodec/wave.hpp"
#include "lscodec/wsola.hpp"

namespace lsc {

/// Duration scale factor for the speed effect. Training draws it uniformly
/// from a closed interval containing 1.
struct PerturbCoefficient {
  double beta = 1.0;
};

struct BetaInterval {
  double lo = 0.8;
  double hi = 1.2;

  void validate() const {
    check_arg(lo > 0.0 && lo <= hi, "beta interval must be positive and ordered");
    check_arg(lo <= 1.0 && hi >= 1.0, "beta interval must contain 1");
  }
};

/// Rate-based speed effect: scales duration by beta and every spectral
/// component from f to f/beta.
inline Waveform speed_scale(const Waveform& wave, PerturbCoefficient beta) {
  check_arg(beta.beta > 0.0, "speed_scale requires beta > 0");
  wave.validate();
  const auto out_len = std::llround(beta.beta * static_cast<double>(wave.size()));
  return resample_to_length(wave, out_len);
}

/// Timbre/pitch perturbation: speed effect followed by a pitch-preserving
/// WSOLA re-stretch back to the original duration. Output length equals the
/// input length exactly; net pitch scale is 1/beta.
inline Waveform perturb(const Waveform& wave, PerturbCoefficient beta,
                        const WsolaParams& params) {
  const std::int64_t original_len = wave.size();
  const Waveform scaled = speed_scale(wave, beta);
  return wsola_stretch(scaled, original_len, params);
}

inline Waveform perturb(const Waveform& wave, PerturbCoefficient beta) {
  return perturb(wave, beta, WsolaParams::defaults(wave.sample_rate));
}

/// Per-utterance beta draw, keyed by (global_seed, utterance_id) so neither
/// data-loading order nor worker count changes perturbations.
inline PerturbCoefficient draw_beta(const BetaInterval& interval, std::uint64_t global_seed,
                                    std::string_view utterance_id) {
  interval.validate();
  Rng rng(derive_seed(global_seed, utterance_id, /*salt=*/0xbe7a));
  return PerturbCoefficient{rng.uniform(interval.lo, interval.hi)};
}

}  // namespace lsc
