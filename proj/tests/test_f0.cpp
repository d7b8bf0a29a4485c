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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lscodec/f0.hpp"
#include "lscodec/rng.hpp"

using namespace lsc;

namespace {

constexpr int kSr = 24000;

Waveform make_tone(double hz, double seconds) {
  Waveform w;
  w.sample_rate = kSr;
  const auto n = static_cast<std::size_t>(seconds * kSr);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = 0.4 * std::sin(2.0 * M_PI * hz * static_cast<double>(i) / kSr);
  return w;
}

}  // namespace

TEST_CASE("pure tones are tracked within one percent", "[f0]") {
  for (double hz : {110.0, 150.0, 220.0, 330.0}) {
    const PitchContour c = estimate_f0(make_tone(hz, 0.6));
    REQUIRE(c.size() > 0);
    std::size_t voiced = 0;
    for (std::size_t t = 0; t < c.size(); ++t) {
      if (!c.voiced[t]) continue;
      ++voiced;
      REQUIRE(c.f0_hz[static_cast<Eigen::Index>(t)] == Catch::Approx(hz).epsilon(0.01));
    }
    // The interior of a steady tone must be solidly voiced.
    REQUIRE(voiced * 10 >= c.size() * 8);
  }
}

TEST_CASE("silence produces no voiced frames", "[f0]") {
  Waveform w;
  w.sample_rate = kSr;
  w.samples.assign(kSr / 2, 0.0);
  const PitchContour c = estimate_f0(w);
  for (std::size_t t = 0; t < c.size(); ++t) REQUIRE(c.voiced[t] == 0);
}

TEST_CASE("white noise is mostly unvoiced", "[f0]") {
  Rng rng(4);
  Waveform w;
  w.sample_rate = kSr;
  w.samples.resize(kSr / 2);
  for (auto& s : w.samples) s = rng.uniform(-0.4, 0.4);
  const PitchContour c = estimate_f0(w);
  std::size_t voiced = 0;
  for (std::size_t t = 0; t < c.size(); ++t) voiced += c.voiced[t];
  REQUIRE(voiced * 4 <= c.size());
}

TEST_CASE("unvoiced frames carry zero f0", "[f0]") {
  // Half a second of tone followed by half a second of silence.
  Waveform w = make_tone(200.0, 0.5);
  w.samples.resize(w.samples.size() * 2, 0.0);
  const PitchContour c = estimate_f0(w);
  for (std::size_t t = 0; t < c.size(); ++t) {
    if (!c.voiced[t]) REQUIRE(c.f0_hz[static_cast<Eigen::Index>(t)] == 0.0);
  }
}

TEST_CASE("contour rate follows the config", "[f0]") {
  F0Config cfg;
  cfg.frame_rate = 100;
  const Waveform w = make_tone(180.0, 0.5);
  const PitchContour c = estimate_f0(w, cfg);
  REQUIRE(c.frame_rate == 100);
  REQUIRE(static_cast<double>(c.size()) ==
          Catch::Approx(w.duration() * cfg.frame_rate).margin(2.0));
}

TEST_CASE("mean voiced f0 averages only voiced frames", "[f0]") {
  PitchContour c;
  c.frame_rate = 50;
  c.f0_hz = VecD(4);
  c.f0_hz << 100.0, 0.0, 200.0, 0.0;
  c.voiced = {1, 0, 1, 0};
  REQUIRE(mean_voiced_f0(c) == Catch::Approx(150.0));
}

TEST_CASE("f0 config validation rejects bad ranges", "[f0]") {
  F0Config cfg;
  cfg.floor_hz = 600.0;
  cfg.ceil_hz = 50.0;
  REQUIRE_THROWS_AS(cfg.validate(), InvalidArgumentError);
}
