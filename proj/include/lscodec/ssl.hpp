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

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "lscodec/common.hpp"
#include "lscodec/container.hpp"
#include "lscodec/kmeans.hpp"
#include "lscodec/mel.hpp"
#include "lscodec/rng.hpp"
#include "lscodec/wave.hpp"

namespace lsc {

/// 50 Hz hidden-embedding sequence from a pretrained (or surrogate) SSL model.
struct SSLFeatureSeq {
  MatD frames;  // T x D_ssl
  int frame_rate = 50;
  std::string source_tag;

  std::int64_t num_frames() const { return frames.rows(); }
  int dim() const { return static_cast<int>(frames.cols()); }
};

/// Discrete SSL unit sequence used as the classification target.
struct SSLTokenSeq {
  std::vector<int> tokens;
  int vocab_size = 0;
};

/// Pluggable source of SSL features. Real pretrained models stay outside the
/// library; they plug in either through precomputed feature files or a
/// subclass.
class SSLFeatureProvider {
 public:
  virtual ~SSLFeatureProvider() = default;
  virtual SSLFeatureSeq features(const Waveform& wave, const std::string& utterance_id,
                                 int layer) const = 0;
  virtual int dim() const = 0;
  virtual std::string name() const = 0;
};

/// Deterministic stand-in for a pretrained model: a fixed seeded projection
/// of the log-mel frames concatenated with a projection of the utterance-mean
/// mel, so per-frame content and global timbre-like information are both
/// present.
class SurrogateSSLProvider : public SSLFeatureProvider {
 public:
  SurrogateSSLProvider(MelConfig mel_cfg, int d_ssl, std::uint64_t seed)
      : mel_cfg_(mel_cfg), d_ssl_(d_ssl), seed_(seed) {
    check_arg(d_ssl >= 2 && d_ssl % 2 == 0, "surrogate feature dimension must be even");
  }

  SSLFeatureSeq features(const Waveform& wave, const std::string& /*utterance_id*/,
                         int layer) const override {
    const MelSpectrogram mel = extract_mel(wave, mel_cfg_);
    const int half = d_ssl_ / 2;
    const MatD frame_proj = projection(half, mel_cfg_.n_mels, layer, 0x11);
    const MatD global_proj = projection(half, mel_cfg_.n_mels, layer, 0x22);
    const VecD mean_mel = mel.frames.colwise().mean().transpose();
    const VecD global = global_proj * mean_mel;

    SSLFeatureSeq out;
    out.frame_rate = mel.frame_rate;
    out.source_tag = "surrogate/layer" + std::to_string(layer);
    out.frames.resize(mel.num_frames(), d_ssl_);
    out.frames.leftCols(half) = mel.frames * frame_proj.transpose();
    out.frames.rightCols(half) = global.transpose().replicate(mel.num_frames(), 1);
    return out;
  }

  int dim() const override { return d_ssl_; }
  std::string name() const override { return "surrogate"; }

 private:
  MatD projection(int rows, int cols, int layer, std::uint64_t salt) const {
    Rng rng(derive_seed(seed_, "surrogate-proj", salt * 1000003ULL + static_cast<std::uint64_t>(layer)));
    MatD p(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) p(r, c) = rng.normal() * scale;
    return p;
  }

  MelConfig mel_cfg_;
  int d_ssl_;
  std::uint64_t seed_;
};

/// Reads precomputed features from <dir>/<utterance_id>.lscf.
class FileSSLProvider : public SSLFeatureProvider {
 public:
  FileSSLProvider(std::filesystem::path dir, int d_ssl) : dir_(std::move(dir)), d_ssl_(d_ssl) {}

  SSLFeatureSeq features(const Waveform& /*wave*/, const std::string& utterance_id,
                         int layer) const override {
    const std::filesystem::path path = dir_ / (utterance_id + ".lscf");
    if (!std::filesystem::exists(path))
      throw IoError("missing precomputed SSL feature file: " + path.string());
    SSLFeatureSeq out;
    out.frames = read_matrix_file(path);
    out.frame_rate = 50;
    out.source_tag = "file/layer" + std::to_string(layer);
    check_arg(out.dim() == d_ssl_, "feature file dimension mismatch: " + path.string());
    return out;
  }

  int dim() const override { return d_ssl_; }
  std::string name() const override { return "file"; }

 private:
  std::filesystem::path dir_;
  int d_ssl_;
};

inline std::unique_ptr<SSLFeatureProvider> make_ssl_provider(const std::string& name,
                                                             const MelConfig& mel_cfg, int d_ssl,
                                                             std::uint64_t seed,
                                                             const std::string& feature_dir = {}) {
  if (name == "surrogate") return std::make_unique<SurrogateSSLProvider>(mel_cfg, d_ssl, seed);
  if (name == "file") {
    if (feature_dir.empty()) throw ConfigError("file SSL provider requires a feature directory");
    return std::make_unique<FileSSLProvider>(feature_dir, d_ssl);
  }
  throw ConfigError("unknown SSL feature provider: " + name);
}

/// K-means tokenizer over pooled SSL feature frames.
inline KMeansModel fit_ssl_tokenizer(const std::vector<SSLFeatureSeq>& features, int k_ssl,
                                     std::uint64_t seed) {
  check_arg(!features.empty(), "no feature sequences given");
  std::int64_t total = 0;
  for (const auto& f : features) total += f.num_frames();
  check_arg(total >= k_ssl, "fewer feature frames than centroids");
  MatD stacked(total, features.front().frames.cols());
  std::int64_t row = 0;
  for (const auto& f : features) {
    stacked.middleRows(row, f.num_frames()) = f.frames;
    row += f.num_frames();
  }
  return fit_kmeans(stacked, k_ssl, seed);
}

inline SSLTokenSeq ssl_tokenize(const SSLFeatureSeq& features, const KMeansModel& model) {
  check_arg(features.frames.cols() == model.centroids.cols(),
            "feature dimension does not match tokenizer");
  SSLTokenSeq seq;
  seq.vocab_size = model.k();
  seq.tokens = kmeans_assign(model, features.frames);
  return seq;
}

}  // namespace lsc
