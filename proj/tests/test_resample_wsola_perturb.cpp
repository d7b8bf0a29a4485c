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
#include <complex>
#include <vector>

#include "lscodec/f0.hpp"
#include "lscodec/perturb.hpp"
#include "lscodec/resample.hpp"
#include "lscodec/rng.hpp"
#include "lscodec/wsola.hpp"

using namespace lsc;

namespace {

constexpr int kSr = 24000;

Waveform make_tone(double hz, double seconds, int sr = kSr) {
  Waveform w;
  w.sample_rate = sr;
  const auto n = static_cast<std::size_t>(std::llround(seconds * sr));
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = 0.5 * std::sin(2.0 * M_PI * hz * static_cast<double>(i) / sr);
  return w;
}

Waveform make_chirp(double hz0, double hz1, double seconds, int sr = kSr) {
  Waveform w;
  w.sample_rate = sr;
  const auto n = static_cast<std::size_t>(std::llround(seconds * sr));
  w.samples.resize(n);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double frac = static_cast<double>(i) / static_cast<double>(n);
    const double hz = hz0 + (hz1 - hz0) * frac;
    phase += 2.0 * M_PI * hz / sr;
    w.samples[i] = 0.5 * std::sin(phase);
  }
  return w;
}

Waveform make_noise(double seconds, std::uint64_t seed, int sr = kSr) {
  Rng rng(seed);
  Waveform w;
  w.sample_rate = sr;
  const auto n = static_cast<std::size_t>(std::llround(seconds * sr));
  w.samples.resize(n);
  for (auto& s : w.samples) s = rng.uniform(-0.5, 0.5);
  return w;
}

// Dominant frequency by zero-padded FFT peak with parabolic refinement,
// measured over the middle of the signal to avoid edge effects.
double dominant_hz(const Waveform& w) {
  const std::size_t n_fft = 1 << 16;
  const std::size_t use = std::min<std::size_t>(w.samples.size(), n_fft);
  const std::size_t start = (w.samples.size() - use) / 2;
  std::vector<double> frame(use);
  for (std::size_t i = 0; i < use; ++i) {
    const double win = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / use);
    frame[i] = w.samples[start + i] * win;
  }
  const auto spec = rfft(frame.data(), frame.size(), n_fft);
  std::size_t peak = 1;
  for (std::size_t k = 1; k + 1 < spec.size(); ++k)
    if (std::abs(spec[k]) > std::abs(spec[peak])) peak = k;
  const double l = std::abs(spec[peak - 1]), m = std::abs(spec[peak]),
               r = std::abs(spec[peak + 1]);
  const double denom = l - 2.0 * m + r;
  const double off = denom == 0.0 ? 0.0 : 0.5 * (l - r) / denom;
  return (static_cast<double>(peak) + off) * w.sample_rate / static_cast<double>(n_fft);
}

double rms(const Waveform& w) {
  double acc = 0.0;
  for (double s : w.samples) acc += s * s;
  return std::sqrt(acc / static_cast<double>(w.samples.size()));
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = std::min(a.size(), b.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < n; ++i) {
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
    sab += (a[i] - ma) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("speed effect shifts pitch and length together", "[perturb]") {
  const Waveform tone = make_tone(220.0, 1.0);
  const Waveform out = speed_scale(tone, {0.8});
  REQUIRE(out.size() == std::llround(0.8 * static_cast<double>(tone.size())));
  const double hz = dominant_hz(out);
  REQUIRE(hz == Catch::Approx(275.0).epsilon(0.02));
}

TEST_CASE("unit speed scale is the identity up to resampling error", "[perturb]") {
  const Waveform tone = make_tone(330.0, 0.5);
  const Waveform out = speed_scale(tone, {1.0});
  REQUIRE(out.size() == tone.size());
  double max_diff = 0.0;
  for (std::size_t i = 0; i < tone.samples.size(); ++i)
    max_diff = std::max(max_diff, std::abs(out.samples[i] - tone.samples[i]));
  REQUIRE(max_diff < 1e-6);
}

TEST_CASE("speed scale length arithmetic is exact", "[perturb]") {
  Waveform w = make_noise(2.0, 9);
  REQUIRE(w.size() == 48000);
  REQUIRE(speed_scale(w, {1.2}).size() == 57600);
}

TEST_CASE("speed scale validates its inputs", "[perturb]") {
  const Waveform tone = make_tone(220.0, 0.1);
  REQUIRE_THROWS_AS(speed_scale(tone, {0.0}), InvalidArgumentError);
  REQUIRE_THROWS_AS(speed_scale(tone, {-1.0}), InvalidArgumentError);
  Waveform empty;
  empty.sample_rate = kSr;
  REQUIRE_THROWS_AS(speed_scale(empty, {1.0}), InvalidArgumentError);
}

TEST_CASE("wsola stretch hits the target length and keeps pitch", "[wsola]") {
  const Waveform tone = make_tone(275.0, 0.8);
  const auto target = static_cast<std::int64_t>(kSr);
  const Waveform out = wsola_stretch(tone, target, WsolaParams::defaults(kSr));
  REQUIRE(out.size() == target);
  REQUIRE(dominant_hz(out) == Catch::Approx(275.0).epsilon(0.01));
}

TEST_CASE("stretching to the own length is nearly transparent", "[wsola]") {
  const Waveform tone = make_tone(440.0, 0.6);
  const Waveform out = wsola_stretch(tone, tone.size(), WsolaParams::defaults(kSr));
  REQUIRE(out.size() == tone.size());
  REQUIRE(dominant_hz(out) == Catch::Approx(440.0).epsilon(0.01));
  REQUIRE(rms(out) == Catch::Approx(rms(tone)).epsilon(0.01));
}

TEST_CASE("white noise stretch meets the length contract exactly", "[wsola]") {
  const Waveform noise = make_noise(0.7, 4);
  const auto target = static_cast<std::int64_t>(std::llround(1.25 * static_cast<double>(noise.size())));
  REQUIRE(wsola_stretch(noise, target, WsolaParams::defaults(kSr)).size() == target);
}

TEST_CASE("wsola rejects targets at or below one frame", "[wsola]") {
  const Waveform tone = make_tone(220.0, 0.5);
  const WsolaParams p = WsolaParams::defaults(kSr);
  REQUIRE_THROWS_AS(wsola_stretch(tone, p.frame_len, p), InvalidArgumentError);
}

TEST_CASE("perturbation preserves length for every beta", "[perturb]") {
  const Waveform tone = make_tone(180.0, 0.9);
  for (double beta : {0.8, 0.9, 1.0, 1.1, 1.2}) {
    REQUIRE(perturb(tone, {beta}).size() == tone.size());
  }
}

TEST_CASE("perturbation scales pitch by the reciprocal of beta", "[perturb]") {
  const Waveform tone = make_tone(220.0, 1.0);
  const Waveform out = perturb(tone, {0.8});
  REQUIRE(out.size() == tone.size());
  REQUIRE(dominant_hz(out) == Catch::Approx(275.0).epsilon(0.02));
}

TEST_CASE("unit beta perturbation correlates with the source", "[perturb]") {
  const Waveform tone = make_tone(220.0, 1.0);
  const Waveform out = perturb(tone, {1.0});
  REQUIRE(out.size() == tone.size());
  REQUIRE(correlation(out.samples, tone.samples) > 0.99);
}

TEST_CASE("perturbation keeps the pitch contour shape of a chirp", "[perturb]") {
  const Waveform chirp = make_chirp(100.0, 200.0, 1.2);
  const Waveform out = perturb(chirp, {1.2});
  REQUIRE(out.size() == chirp.size());

  F0Config f0c;
  const PitchContour src = estimate_f0(chirp, f0c);
  const PitchContour got = estimate_f0(out, f0c);

  std::vector<double> a, b;
  for (std::size_t t = 0; t < std::min(src.size(), got.size()); ++t) {
    if (src.voiced[t] && got.voiced[t]) {
      a.push_back(std::log(src.f0_hz[static_cast<Eigen::Index>(t)]));
      b.push_back(std::log(got.f0_hz[static_cast<Eigen::Index>(t)]));
    }
  }
  REQUIRE(a.size() > 20);
  REQUIRE(correlation(a, b) > 0.95);
}

TEST_CASE("perturbation is deterministic", "[perturb]") {
  const Waveform tone = make_chirp(120.0, 180.0, 0.8);
  const Waveform a = perturb(tone, {0.9});
  const Waveform b = perturb(tone, {0.9});
  REQUIRE(a.samples == b.samples);
}

TEST_CASE("beta draws are reproducible, keyed by utterance", "[perturb]") {
  const BetaInterval interval;
  const PerturbCoefficient a = draw_beta(interval, 1234, "utt_0001");
  const PerturbCoefficient b = draw_beta(interval, 1234, "utt_0001");
  const PerturbCoefficient c = draw_beta(interval, 1234, "utt_0002");
  REQUIRE(a.beta == b.beta);
  REQUIRE(a.beta != c.beta);
  REQUIRE(a.beta >= interval.lo);
  REQUIRE(a.beta < interval.hi);
}

TEST_CASE("beta intervals must be positive and contain one", "[perturb]") {
  REQUIRE_THROWS_AS((BetaInterval{0.5, 0.9}.validate()), InvalidArgumentError);
  REQUIRE_THROWS_AS((BetaInterval{1.1, 1.5}.validate()), InvalidArgumentError);
  REQUIRE_THROWS_AS((BetaInterval{-0.2, 1.2}.validate()), InvalidArgumentError);
  REQUIRE_NOTHROW(BetaInterval{1.0, 1.0}.validate());
}
