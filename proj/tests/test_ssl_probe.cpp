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
#include <filesystem>
#include <string>
#include <vector>

#include "lscodec/config.hpp"
#include "lscodec/probe.hpp"
#include "lscodec/rng.hpp"
#include "lscodec/ssl.hpp"

namespace fs = std::filesystem;
using namespace lsc;

namespace {

Waveform tone(double hz, double seconds, int sr = 24000) {
  Waveform w;
  w.sample_rate = sr;
  const std::size_t n = static_cast<std::size_t>(seconds * sr);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = 0.4 * std::sin(2.0 * M_PI * hz * static_cast<double>(i) / sr);
  return w;
}

MelConfig desk_mel() { return mel_config_for(ModelSpec{}); }

/// Three well-separated speakers: per-speaker mean offsets much larger than
/// the within-utterance noise.
ProbeDataset separable_dataset(int utts_per_speaker, std::uint64_t seed) {
  ProbeDataset data;
  data.speaker_ids = {"spk_a", "spk_b", "spk_c"};
  Rng rng(seed);
  for (int s = 0; s < 3; ++s) {
    for (int u = 0; u < utts_per_speaker; ++u) {
      ProbeExample ex;
      ex.utterance_id = "u" + std::to_string(s) + "_" + std::to_string(u);
      ex.speaker_index = s;
      ex.features.resize(12, 8);
      for (int t = 0; t < 12; ++t)
        for (int d = 0; d < 8; ++d)
          ex.features(t, d) = 3.0 * s * (d % 2 == 0 ? 1.0 : -1.0) + 0.3 * rng.normal();
      data.examples.push_back(std::move(ex));
    }
  }
  return data;
}

}  // namespace

TEST_CASE("surrogate features are deterministic in the seed", "[ssl]") {
  const Waveform w = tone(220.0, 0.5);
  SurrogateSSLProvider a(desk_mel(), 16, 99);
  SurrogateSSLProvider b(desk_mel(), 16, 99);
  SurrogateSSLProvider c(desk_mel(), 16, 100);

  const SSLFeatureSeq fa = a.features(w, "utt", 6);
  const SSLFeatureSeq fb = b.features(w, "utt", 6);
  const SSLFeatureSeq fc = c.features(w, "utt", 6);
  REQUIRE((fa.frames - fb.frames).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((fa.frames - fc.frames).cwiseAbs().maxCoeff() > 1e-6);
  REQUIRE(fa.dim() == 16);
  REQUIRE(fa.frame_rate == 50);
  REQUIRE(fa.num_frames() > 0);
}

TEST_CASE("surrogate layers produce distinct projections", "[ssl]") {
  const Waveform w = tone(220.0, 0.5);
  SurrogateSSLProvider p(desk_mel(), 16, 99);
  const SSLFeatureSeq l6 = p.features(w, "utt", 6);
  const SSLFeatureSeq l7 = p.features(w, "utt", 7);
  REQUIRE((l6.frames - l7.frames).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("surrogate carries a constant global half", "[ssl]") {
  SurrogateSSLProvider p(desk_mel(), 16, 3);
  const SSLFeatureSeq f = p.features(tone(150.0, 0.6), "utt", 6);
  const int half = f.dim() / 2;
  for (Eigen::Index t = 1; t < f.num_frames(); ++t) {
    REQUIRE((f.frames.row(t).tail(half) - f.frames.row(0).tail(half))
                .cwiseAbs()
                .maxCoeff() == 0.0);
  }
  // The per-frame half varies with content.
  REQUIRE((f.frames.row(1).head(half) - f.frames.row(0).head(half)).cwiseAbs().maxCoeff() >
          0.0);
}

TEST_CASE("surrogate rejects odd feature dimensions", "[ssl]") {
  REQUIRE_THROWS_AS(SurrogateSSLProvider(desk_mel(), 15, 1), InvalidArgumentError);
}

TEST_CASE("provider factory resolves names", "[ssl]") {
  REQUIRE(make_ssl_provider("surrogate", desk_mel(), 16, 1)->name() == "surrogate");
  REQUIRE_THROWS_AS(make_ssl_provider("file", desk_mel(), 16, 1), ConfigError);
  REQUIRE_THROWS_AS(make_ssl_provider("wavlm", desk_mel(), 16, 1), ConfigError);
}

TEST_CASE("file provider reads precomputed features", "[ssl]") {
  const fs::path dir = fs::temp_directory_path() / "lscodec_ssl_tests";
  fs::create_directories(dir);
  MatD feats = MatD::Random(25, 16);
  write_matrix_file(dir / "utt_0.lscf", feats);

  FileSSLProvider provider(dir, 16);
  const SSLFeatureSeq f = provider.features(Waveform{}, "utt_0", 6);
  REQUIRE(f.num_frames() == 25);
  REQUIRE((f.frames - feats).cwiseAbs().maxCoeff() < 1e-12);

  REQUIRE_THROWS_AS(provider.features(Waveform{}, "utt_missing", 6), IoError);
  FileSSLProvider wrong_dim(dir, 32);
  REQUIRE_THROWS_AS(wrong_dim.features(Waveform{}, "utt_0", 6), InvalidArgumentError);
}

TEST_CASE("tokenizer clusters pooled features", "[ssl]") {
  // Two sequences whose frames sit in four clear clusters.
  Rng rng(17);
  std::vector<SSLFeatureSeq> seqs(2);
  for (auto& s : seqs) {
    s.frames.resize(40, 4);
    for (int t = 0; t < 40; ++t) {
      const int mode = t % 4;
      for (int d = 0; d < 4; ++d)
        s.frames(t, d) = 5.0 * mode * (d == 0 ? 1.0 : -0.5) + 0.05 * rng.normal();
    }
  }
  const KMeansModel tok = fit_ssl_tokenizer(seqs, 4, 21);
  REQUIRE(tok.k() == 4);

  const SSLTokenSeq tokens = ssl_tokenize(seqs[0], tok);
  REQUIRE(tokens.vocab_size == 4);
  REQUIRE(tokens.tokens.size() == 40);
  // Frames in the same mode get the same token.
  for (int t = 4; t < 40; ++t) REQUIRE(tokens.tokens[t] == tokens.tokens[t % 4]);

  REQUIRE_THROWS_AS(fit_ssl_tokenizer({}, 4, 1), InvalidArgumentError);
  SSLFeatureSeq tiny;
  tiny.frames = MatD::Random(2, 4);
  REQUIRE_THROWS_AS(fit_ssl_tokenizer({tiny}, 4, 1), InvalidArgumentError);

  SSLFeatureSeq wrong;
  wrong.frames = MatD::Random(10, 8);
  REQUIRE_THROWS_AS(ssl_tokenize(wrong, tok), InvalidArgumentError);
}

TEST_CASE("probe separates well separated speakers", "[probe]") {
  const ProbeDataset data = separable_dataset(8, 5);
  ProbeConfig cfg;
  cfg.epochs = 20;
  const ProbeResult r = train_probe(data, cfg);
  REQUIRE(r.final_val_accuracy > 0.9);
  REQUIRE(r.curve.size() == 20);
}

TEST_CASE("probe training is deterministic", "[probe]") {
  const ProbeDataset data = separable_dataset(5, 6);
  ProbeConfig cfg;
  cfg.epochs = 8;
  const ProbeResult a = train_probe(data, cfg);
  const ProbeResult b = train_probe(data, cfg);
  REQUIRE(a.final_val_accuracy == b.final_val_accuracy);
  REQUIRE(a.val_indices == b.val_indices);
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    REQUIRE(a.curve[i].train_accuracy == b.curve[i].train_accuracy);
    REQUIRE(a.curve[i].val_accuracy == b.curve[i].val_accuracy);
  }
}

TEST_CASE("validation split is utterance disjoint and covers trained speakers", "[probe]") {
  ProbeDataset data = separable_dataset(5, 7);
  // Add a fourth speaker with a single utterance; it must stay in training.
  data.speaker_ids.push_back("spk_d");
  ProbeExample lone;
  lone.utterance_id = "lone";
  lone.speaker_index = 3;
  lone.features = MatD::Random(6, 8);
  data.examples.push_back(lone);

  ProbeConfig cfg;
  const std::vector<std::size_t> val = probe_val_split(data, cfg);
  REQUIRE_FALSE(val.empty());
  std::vector<int> held(4, 0);
  for (std::size_t i : val) {
    ++held[static_cast<std::size_t>(data.examples[i].speaker_index)];
  }
  REQUIRE(held[0] >= 1);
  REQUIRE(held[1] >= 1);
  REQUIRE(held[2] >= 1);
  REQUIRE(held[3] == 0);
  // Never holds out everything a speaker has.
  REQUIRE(held[0] < 5);
  REQUIRE(std::is_sorted(val.begin(), val.end()));
}

TEST_CASE("probe csv lists one row per epoch", "[probe]") {
  const ProbeDataset data = separable_dataset(4, 8);
  ProbeConfig cfg;
  cfg.epochs = 3;
  const std::string csv = probe_csv(train_probe(data, cfg));
  REQUIRE(csv.rfind("epoch,train_acc,val_acc\n", 0) == 0);
  REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("probe inputs are validated", "[probe]") {
  ProbeDataset one_speaker;
  one_speaker.speaker_ids = {"only"};
  ProbeExample ex;
  ex.features = MatD::Random(4, 4);
  one_speaker.examples.push_back(ex);
  REQUIRE_THROWS_AS(one_speaker.validate(), InvalidArgumentError);

  ProbeDataset mismatched = separable_dataset(2, 9);
  mismatched.examples[1].features = MatD::Random(4, 5);
  REQUIRE_THROWS_AS(mismatched.validate(), InvalidArgumentError);

  ProbeDataset bad_index = separable_dataset(2, 10);
  bad_index.examples[0].speaker_index = 9;
  REQUIRE_THROWS_AS(bad_index.validate(), InvalidArgumentError);

  ProbeConfig bad_fraction;
  bad_fraction.val_fraction = 0.0;
  REQUIRE_THROWS_AS(bad_fraction.validate(), InvalidArgumentError);
}
