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
#include <vector>

#include "lscodec/metrics.hpp"

using namespace lsc;

namespace {

PitchContour contour(std::initializer_list<double> f0, std::initializer_list<int> voiced) {
  PitchContour c;
  c.frame_rate = 50;
  c.f0_hz = VecD(static_cast<Eigen::Index>(f0.size()));
  Eigen::Index i = 0;
  for (double v : f0) c.f0_hz[i++] = v;
  for (int v : voiced) c.voiced.push_back(static_cast<std::uint8_t>(v));
  return c;
}

}  // namespace

TEST_CASE("bitrate formula on the published configurations", "[metrics]") {
  REQUIRE(bitrate_bps(1, 50, 300) == 450);
  REQUIRE(bitrate_bps(1, 25, 1024) == 250);
  REQUIRE(bitrate_bps(2, 75, 1024) == 1500);
}

TEST_CASE("bitrate rounds vocabulary size up to whole bits", "[metrics]") {
  REQUIRE(bitrate_bps(1, 50, 1) == 0);
  REQUIRE(bitrate_bps(1, 50, 2) == 50);
  REQUIRE(bitrate_bps(1, 50, 3) == 100);
  REQUIRE(bitrate_bps(1, 50, 1025) == 550);
}

TEST_CASE("bitrate validates its arguments", "[metrics]") {
  REQUIRE_THROWS_AS(bitrate_bps(0, 50, 300), InvalidArgumentError);
  REQUIRE_THROWS_AS(bitrate_bps(1, 0, 300), InvalidArgumentError);
  REQUIRE_THROWS_AS(bitrate_bps(1, 50, 0), InvalidArgumentError);
}

TEST_CASE("identical contours give zero gross pitch error", "[metrics]") {
  const PitchContour a = contour({100, 110, 120, 130, 140}, {1, 1, 1, 1, 1});
  const MetricResult r = gross_pitch_error(a, a);
  REQUIRE(r.defined);
  REQUIRE(r.value == 0.0);
  REQUIRE(r.covoicing_rate == 1.0);
}

TEST_CASE("one gross frame in five reads twenty percent", "[metrics]") {
  const PitchContour ref = contour({100, 100, 100, 100, 100}, {1, 1, 1, 1, 1});
  // Final frame is off by 25 percent, beyond the 20 percent criterion.
  const PitchContour est = contour({100, 100, 100, 100, 125}, {1, 1, 1, 1, 1});
  const MetricResult r = gross_pitch_error(ref, est);
  REQUIRE(r.defined);
  REQUIRE(r.value == 0.2);
}

TEST_CASE("a nineteen percent deviation is not gross", "[metrics]") {
  const PitchContour ref = contour({100, 100, 100, 100, 100}, {1, 1, 1, 1, 1});
  const PitchContour est = contour({100, 100, 100, 100, 119}, {1, 1, 1, 1, 1});
  const MetricResult r = gross_pitch_error(ref, est);
  REQUIRE(r.defined);
  REQUIRE(r.value == 0.0);
}

TEST_CASE("gross pitch error skips frames unvoiced on either side", "[metrics]") {
  const PitchContour ref = contour({100, 0, 100, 100}, {1, 0, 1, 1});
  const PitchContour est = contour({100, 200, 0, 300}, {1, 1, 0, 1});
  const MetricResult r = gross_pitch_error(ref, est);
  REQUIRE(r.defined);
  REQUIRE(r.covoicing_rate == 0.5);
  REQUIRE(r.value == 0.5);  // frames 0 (fine) and 3 (gross)
}

TEST_CASE("no co-voiced frames leaves the metric undefined", "[metrics]") {
  const PitchContour ref = contour({100, 100}, {1, 0});
  const PitchContour est = contour({100, 100}, {0, 1});
  REQUIRE_FALSE(gross_pitch_error(ref, est).defined);
  REQUIRE_FALSE(pitch_correlation(ref, est).defined);
}

TEST_CASE("mismatched contour shapes are rejected", "[metrics]") {
  const PitchContour a = contour({100, 100}, {1, 1});
  const PitchContour b = contour({100, 100, 100}, {1, 1, 1});
  REQUIRE_THROWS_AS(gross_pitch_error(a, b), InvalidArgumentError);
}

TEST_CASE("linearly related contours correlate exactly", "[metrics]") {
  const PitchContour ref = contour({100, 120, 140, 160}, {1, 1, 1, 1});
  const PitchContour up = contour({205, 245, 285, 325}, {1, 1, 1, 1});
  const MetricResult pos = pitch_correlation(ref, up);
  REQUIRE(pos.defined);
  REQUIRE(pos.value == Catch::Approx(1.0).margin(1e-12));

  const PitchContour down = contour({160, 140, 120, 100}, {1, 1, 1, 1});
  const MetricResult neg = pitch_correlation(ref, down);
  REQUIRE(neg.defined);
  REQUIRE(neg.value == Catch::Approx(-1.0).margin(1e-12));
}

TEST_CASE("constant contours have undefined correlation", "[metrics]") {
  const PitchContour ref = contour({100, 100, 100}, {1, 1, 1});
  const PitchContour est = contour({90, 120, 100}, {1, 1, 1});
  REQUIRE_FALSE(pitch_correlation(ref, est).defined);
}

TEST_CASE("word error rate counts each edit type", "[metrics]") {
  REQUIRE(word_error_rate("the cat sat", "the cat sat") == 0.0);
  REQUIRE(word_error_rate("the cat sat", "the dog sat") == Catch::Approx(1.0 / 3.0));
  REQUIRE(word_error_rate("the cat sat", "the cat") == Catch::Approx(1.0 / 3.0));
  REQUIRE(word_error_rate("the cat sat", "the big cat sat") == Catch::Approx(1.0 / 3.0));
  REQUIRE(word_error_rate("a b", "c d e") == Catch::Approx(1.5));
  REQUIRE(word_error_rate("", "anything") == 1.0);
  REQUIRE(word_error_rate("", "") == 0.0);
}

TEST_CASE("cosine similarity behaves on aligned and orthogonal vectors", "[metrics]") {
  VecD a(3), b(3), c(3);
  a << 1, 0, 0;
  b << 2, 0, 0;
  c << 0, 3, 0;
  REQUIRE(cosine_similarity(a, b) == Catch::Approx(1.0));
  REQUIRE(cosine_similarity(a, c) == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(cosine_similarity(a, VecD(-a)) == Catch::Approx(-1.0));
  VecD zero = VecD::Zero(3);
  REQUIRE_THROWS_AS(cosine_similarity(a, zero), InvalidArgumentError);
  VecD shorter(2);
  shorter << 1, 0;
  REQUIRE_THROWS_AS(cosine_similarity(a, shorter), InvalidArgumentError);
}

TEST_CASE("mel statistics embedder separates registers", "[metrics]") {
  MelConfig cfg;
  const auto tone = [&](double hz) {
    Waveform w;
    w.sample_rate = cfg.sample_rate;
    w.samples.resize(static_cast<std::size_t>(cfg.sample_rate / 2));
    for (std::size_t i = 0; i < w.samples.size(); ++i)
      w.samples[i] = 0.4 * std::sin(2.0 * M_PI * hz * static_cast<double>(i) / cfg.sample_rate);
    return w;
  };
  MelStatsEmbedder emb(cfg);
  const VecD low_a = emb.embed(tone(110.0), "a");
  const VecD low_b = emb.embed(tone(112.0), "b");
  const VecD high = emb.embed(tone(440.0), "c");
  REQUIRE(cosine_similarity(low_a, low_b) > cosine_similarity(low_a, high));
}

TEST_CASE("csv rows leave undefined metrics empty", "[metrics]") {
  EvalRow row;
  row.utterance_id = "utt_7";
  row.has_wer = true;
  row.wer = 0.25;
  row.pcorr.defined = true;
  row.pcorr.value = 0.5;
  REQUIRE(eval_csv_header() == "utterance_id,wer,gpe,pcorr,secs");
  REQUIRE(eval_csv_row(row) == "utt_7,0.25,,0.5,");
}

TEST_CASE("spectral tilt separates bright from dark spectra", "[metrics]") {
  MelConfig cfg;
  const std::vector<double> centers = mel_band_centers_hz(cfg);
  MatD bright(1, cfg.n_mels), dark(1, cfg.n_mels);
  for (int c = 0; c < cfg.n_mels; ++c) {
    const double oct = std::log2(centers[static_cast<std::size_t>(c)] / centers[0]);
    bright(0, c) = -0.1 * oct;
    dark(0, c) = -1.5 * oct;
  }
  REQUIRE(spectral_tilt_db_per_octave(bright, cfg) > spectral_tilt_db_per_octave(dark, cfg));
}
