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

#ifndef LSCODEC_METRICS_HPP
#define LSCODEC_METRICS_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "lscodec/common.hpp"
#include "lscodec/container.hpp"
#include "lscodec/f0.hpp"
#include "lscodec/mel.hpp"
#include "lscodec/wave.hpp"

namespace lsc {

/// Scalar metric that may be undefined (for example a pitch correlation
/// with no co-voiced frames). Callers must check `defined` before reading
/// `value`.
struct MetricResult {
  bool defined = false;
  double value = 0.0;
  /// Fraction of compared frames that were voiced in both contours.
  double covoicing_rate = 0.0;
};

/// Codec bitrate in bits per second for `quantizers` parallel codebooks at
/// `frame_rate` tokens per second each, with `vocab_size` entries per book.
inline std::int64_t bitrate_bps(int quantizers, int frame_rate, std::int64_t vocab_size) {
  check_arg(quantizers >= 1, "bitrate: quantizers must be at least 1");
  check_arg(frame_rate >= 1, "bitrate: frame_rate must be at least 1");
  if (vocab_size < 1) {
    throw InvalidArgumentError("bitrate: vocabulary size must be at least 1, got " +
                               std::to_string(vocab_size));
  }
  int bits = 0;
  while ((std::int64_t(1) << bits) < vocab_size) {
    ++bits;
  }
  return std::int64_t(quantizers) * frame_rate * bits;
}

namespace detail {

inline void check_comparable(const PitchContour& ref, const PitchContour& est) {
  check_arg(ref.frame_rate == est.frame_rate,
            "pitch metric: contours have different frame rates");
  check_arg(ref.size() == est.size(), "pitch metric: contours have different lengths (" +
                                          std::to_string(ref.size()) + " vs " +
                                          std::to_string(est.size()) + ")");
}

}  // namespace detail

/// Gross pitch error: among frames voiced in both contours, the fraction
/// whose estimate deviates from the reference by strictly more than 20%.
/// Undefined when no frames are co-voiced.
inline MetricResult gross_pitch_error(const PitchContour& ref, const PitchContour& est) {
  detail::check_comparable(ref, est);
  MetricResult r;
  std::size_t covoiced = 0;
  std::size_t gross = 0;
  for (std::size_t t = 0; t < ref.size(); ++t) {
    if (!ref.voiced[t] || !est.voiced[t]) {
      continue;
    }
    ++covoiced;
    const double f_ref = ref.f0_hz[static_cast<Eigen::Index>(t)];
    const double f_est = est.f0_hz[static_cast<Eigen::Index>(t)];
    if (std::abs(f_est - f_ref) > 0.2 * f_ref) {
      ++gross;
    }
  }
  r.covoicing_rate = ref.size() == 0 ? 0.0
                                     : static_cast<double>(covoiced) /
                                           static_cast<double>(ref.size());
  if (covoiced == 0) {
    return r;
  }
  r.defined = true;
  r.value = static_cast<double>(gross) / static_cast<double>(covoiced);
  return r;
}

/// Pearson correlation of f0 over co-voiced frames. Undefined with fewer
/// than two co-voiced frames or when either side has zero variance.
inline MetricResult pitch_correlation(const PitchContour& ref, const PitchContour& est) {
  detail::check_comparable(ref, est);
  MetricResult r;
  std::vector<double> a, b;
  for (std::size_t t = 0; t < ref.size(); ++t) {
    if (ref.voiced[t] && est.voiced[t]) {
      a.push_back(ref.f0_hz[static_cast<Eigen::Index>(t)]);
      b.push_back(est.f0_hz[static_cast<Eigen::Index>(t)]);
    }
  }
  r.covoicing_rate = ref.size() == 0 ? 0.0
                                     : static_cast<double>(a.size()) /
                                           static_cast<double>(ref.size());
  if (a.size() < 2) {
    return r;
  }
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
    sab += (a[i] - ma) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) {
    return r;  // degenerate variance
  }
  r.defined = true;
  r.value = sab / std::sqrt(saa * sbb);
  return r;
}

/// Word error rate: (substitutions + deletions + insertions) / reference
/// words, computed by Levenshtein alignment over whitespace-split tokens.
/// An empty reference with a non-empty hypothesis counts every inserted
/// word against a floor of one reference token.
inline double word_error_rate(const std::string& reference, const std::string& hypothesis) {
  const auto split = [](const std::string& s) {
    std::vector<std::string> words;
    std::istringstream in(s);
    std::string w;
    while (in >> w) {
      words.push_back(w);
    }
    return words;
  };
  const std::vector<std::string> ref = split(reference);
  const std::vector<std::string> hyp = split(hypothesis);
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) {
    prev[j] = j;
  }
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  const std::size_t dist = prev[m];
  return static_cast<double>(dist) / static_cast<double>(std::max<std::size_t>(n, 1));
}

/// Produces a transcript for a waveform. Real deployments back this with a
/// speech recognizer; tests back it with files on disk.
class Transcriber {
 public:
  virtual ~Transcriber() = default;
  virtual std::string transcribe(const Waveform& wave, const std::string& utterance_id) = 0;
  virtual std::string name() const = 0;
};

/// Reads transcripts from <dir>/<utterance_id>.txt.
class FileTranscriber : public Transcriber {
 public:
  explicit FileTranscriber(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::string transcribe(const Waveform&, const std::string& utterance_id) override {
    const std::filesystem::path p = dir_ / (utterance_id + ".txt");
    std::ifstream f(p);
    if (!f) {
      throw IoError("transcript not found: " + p.string());
    }
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) {
      text.pop_back();
    }
    return text;
  }

  std::string name() const override { return "file"; }

 private:
  std::filesystem::path dir_;
};

/// Maps a waveform to a fixed-size speaker embedding.
class SpeakerEmbedder {
 public:
  virtual ~SpeakerEmbedder() = default;
  virtual VecD embed(const Waveform& wave, const std::string& utterance_id) = 0;
  virtual std::string name() const = 0;
};

/// Reads embeddings from <dir>/<utterance_id>.lscf (a 1 by D matrix).
class FileSpeakerEmbedder : public SpeakerEmbedder {
 public:
  explicit FileSpeakerEmbedder(std::filesystem::path dir) : dir_(std::move(dir)) {}

  VecD embed(const Waveform&, const std::string& utterance_id) override {
    const std::filesystem::path p = dir_ / (utterance_id + ".lscf");
    if (!std::filesystem::exists(p)) {
      throw IoError("embedding not found: " + p.string());
    }
    const MatD m = read_matrix_file(p);
    check_arg(m.rows() == 1, "embedding file must hold a single row: " + p.string());
    return m.row(0).transpose();
  }

  std::string name() const override { return "file"; }

 private:
  std::filesystem::path dir_;
};

/// Embedding from mel statistics: per-band mean and standard deviation of
/// the log-mel spectrogram, concatenated. A stand-in with no learned
/// weights; it separates talkers whose spectra differ and is deterministic.
class MelStatsEmbedder : public SpeakerEmbedder {
 public:
  explicit MelStatsEmbedder(MelConfig cfg = MelConfig()) : cfg_(cfg) {}

  VecD embed(const Waveform& wave, const std::string&) override {
    const MatD mel = extract_mel(wave, cfg_).frames;
    check_arg(mel.rows() >= 2, "embedding needs at least two mel frames");
    VecD out(2 * mel.cols());
    for (Eigen::Index c = 0; c < mel.cols(); ++c) {
      const double mean = mel.col(c).mean();
      const double var = (mel.col(c).array() - mean).square().mean();
      out[c] = mean;
      out[mel.cols() + c] = std::sqrt(std::max(var, 0.0));
    }
    return out;
  }

  std::string name() const override { return "mel-stats"; }

 private:
  MelConfig cfg_;
};

/// Cosine similarity between two embeddings of equal dimension.
inline double cosine_similarity(const VecD& a, const VecD& b) {
  check_arg(a.size() == b.size(), "cosine_similarity: dimension mismatch");
  check_arg(a.size() > 0, "cosine_similarity: empty vectors");
  const double na = a.norm();
  const double nb = b.norm();
  check_arg(na > 0 && nb > 0, "cosine_similarity: zero-norm vector");
  return a.dot(b) / (na * nb);
}

/// Slope of the mean log-mel spectrum against log2 of band center
/// frequency, in dB per octave. A bright signal has a flatter (less
/// negative) tilt than a dark one.
inline double spectral_tilt_db_per_octave(const MatD& log_mel, const MelConfig& cfg) {
  check_arg(log_mel.rows() >= 1, "spectral tilt: empty spectrogram");
  check_arg(log_mel.cols() == cfg.n_mels, "spectral tilt: band count mismatch");
  const std::vector<double> centers = mel_band_centers_hz(cfg);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (Eigen::Index c = 0; c < log_mel.cols(); ++c) {
    const double f = centers[static_cast<std::size_t>(c)];
    if (f < 80.0) {
      continue;  // bands this low mostly hold noise floor
    }
    const double x = std::log2(f);
    // Natural-log power to dB.
    const double y = log_mel.col(c).mean() * 10.0 / std::log(10.0);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  check_arg(n >= 2, "spectral tilt: too few usable bands");
  const double denom = n * sxx - sx * sx;
  check_arg(std::abs(denom) > 1e-12, "spectral tilt: degenerate band layout");
  return (n * sxy - sx * sy) / denom;
}

/// Per-utterance evaluation row. Undefined metrics serialize as empty CSV
/// cells rather than fabricated numbers.
struct EvalRow {
  std::string utterance_id;
  bool has_wer = false;
  double wer = 0.0;
  MetricResult gpe;
  MetricResult pcorr;
  bool has_secs = false;
  double secs = 0.0;
};

inline std::string eval_csv_header() { return "utterance_id,wer,gpe,pcorr,secs"; }

inline std::string eval_csv_row(const EvalRow& r) {
  std::ostringstream out;
  out << r.utterance_id << ",";
  if (r.has_wer) {
    out << r.wer;
  }
  out << ",";
  if (r.gpe.defined) {
    out << r.gpe.value;
  }
  out << ",";
  if (r.pcorr.defined) {
    out << r.pcorr.value;
  }
  out << ",";
  if (r.has_secs) {
    out << r.secs;
  }
  return out.str();
}

/// Compares a reconstruction against its source: pitch metrics always,
/// speaker similarity when an embedder is supplied, word error rate when a
/// transcriber and a reference transcript directory are supplied.
inline EvalRow evaluate_reconstruction(const std::string& utterance_id, const Waveform& source,
                                       const Waveform& reconstruction,
                                       SpeakerEmbedder* embedder = nullptr,
                                       Transcriber* transcriber = nullptr,
                                       Transcriber* reference_transcriber = nullptr) {
  EvalRow row;
  row.utterance_id = utterance_id;
  const PitchContour ref = estimate_f0(source);
  const PitchContour est = estimate_f0(reconstruction);
  const std::size_t frames = std::min(ref.size(), est.size());
  PitchContour ref_t{ref.f0_hz.head(static_cast<Eigen::Index>(frames)),
                     {ref.voiced.begin(), ref.voiced.begin() + static_cast<long>(frames)},
                     ref.frame_rate};
  PitchContour est_t{est.f0_hz.head(static_cast<Eigen::Index>(frames)),
                     {est.voiced.begin(), est.voiced.begin() + static_cast<long>(frames)},
                     est.frame_rate};
  row.gpe = gross_pitch_error(ref_t, est_t);
  row.pcorr = pitch_correlation(ref_t, est_t);
  if (embedder != nullptr) {
    row.secs = cosine_similarity(embedder->embed(source, utterance_id),
                                 embedder->embed(reconstruction, utterance_id));
    row.has_secs = true;
  }
  if (transcriber != nullptr && reference_transcriber != nullptr) {
    row.wer = word_error_rate(reference_transcriber->transcribe(source, utterance_id),
                              transcriber->transcribe(reconstruction, utterance_id));
    row.has_wer = true;
  }
  return row;
}

}  // namespace lsc

#endif  // LSCODEC_METRICS_HPP
