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

#ifndef LSCODEC_TRAINER_HPP
#define LSCODEC_TRAINER_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lscodec/checkpoint.hpp"
#include "lscodec/config.hpp"
#include "lscodec/losses.hpp"
#include "lscodec/mel.hpp"
#include "lscodec/model.hpp"
#include "lscodec/optim.hpp"
#include "lscodec/perturb.hpp"
#include "lscodec/probe.hpp"
#include "lscodec/quantizer.hpp"
#include "lscodec/ssl.hpp"
#include "lscodec/tokenstream.hpp"
#include "lscodec/vocoder.hpp"
#include "lscodec/wave.hpp"

namespace lsc {

struct ManifestEntry {
  std::string utterance_id;
  std::string wav_path;
  std::string speaker_id;
};

/// Reads utterance_id <TAB> wav_path <TAB> speaker_id lines. Blank lines
/// are skipped; anything else malformed names its line number.
inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) {
    throw IoError("cannot open manifest: " + path.string());
  }
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    const std::size_t tab1 = line.find('\t');
    const std::size_t tab2 = tab1 == std::string::npos ? std::string::npos
                                                       : line.find('\t', tab1 + 1);
    if (tab1 == std::string::npos || tab2 == std::string::npos ||
        line.find('\t', tab2 + 1) != std::string::npos) {
      throw FormatError("manifest " + path.string() + " line " + std::to_string(lineno) +
                        ": expected exactly three tab-separated fields");
    }
    ManifestEntry e;
    e.utterance_id = line.substr(0, tab1);
    e.wav_path = line.substr(tab1 + 1, tab2 - tab1 - 1);
    e.speaker_id = line.substr(tab2 + 1);
    if (e.utterance_id.empty() || e.wav_path.empty() || e.speaker_id.empty()) {
      throw FormatError("manifest " + path.string() + " line " + std::to_string(lineno) +
                        ": empty field");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

inline void write_manifest(const std::filesystem::path& path,
                           const std::vector<ManifestEntry>& entries) {
  std::string out;
  for (const ManifestEntry& e : entries) {
    out += e.utterance_id + "\t" + e.wav_path + "\t" + e.speaker_id + "\n";
  }
  binio::write_file_atomic(path, out);
}

struct PromptContentCut {
  Waveform prompt;
  Waveform content;
  bool prompt_at_start = false;
  std::size_t content_offset = 0;  // content start in full-utterance samples
};

/// Splits an utterance into a timbre prompt and the content the encoder
/// sees. The prompt takes between a third and a half of the utterance, from
/// the start or the end by fair coin, rounded to a whole number of analysis
/// hops so segment frames align with full-utterance frames. Draws are keyed
/// by (seed, utterance_id): stable across runs and data order.
inline PromptContentCut cut_prompt_content(const Waveform& wave, int hop,
                                           std::uint64_t global_seed,
                                           const std::string& utterance_id) {
  check_arg(hop > 0, "cut_prompt_content: hop must be positive");
  const std::size_t len = wave.samples.size();
  check_arg(len >= static_cast<std::size_t>(6 * hop),
            "cut_prompt_content: utterance too short to split: " + utterance_id);

  Rng rng(derive_seed(global_seed, utterance_id, /*salt=*/0xc07));
  const double raw = rng.uniform(static_cast<double>(len) / 3.0, static_cast<double>(len) / 2.0);
  const bool at_start = rng.uniform() < 0.5;

  // Both segments must begin on a hop boundary so their analysis frames are
  // rows of the full-utterance analysis. The boundary lands on the aligned
  // sample at or below the raw draw.
  const std::size_t boundary_lo =
      at_start ? static_cast<std::size_t>(raw / hop) * static_cast<std::size_t>(hop)
               : (len - static_cast<std::size_t>(raw)) / static_cast<std::size_t>(hop) *
                     static_cast<std::size_t>(hop);
  const std::size_t boundary = std::max<std::size_t>(boundary_lo, static_cast<std::size_t>(hop));

  PromptContentCut cut;
  cut.prompt_at_start = at_start;
  cut.prompt.sample_rate = wave.sample_rate;
  cut.content.sample_rate = wave.sample_rate;
  if (at_start) {
    cut.prompt.samples.assign(wave.samples.begin(),
                              wave.samples.begin() + static_cast<long>(boundary));
    cut.content.samples.assign(wave.samples.begin() + static_cast<long>(boundary),
                               wave.samples.end());
    cut.content_offset = boundary;
  } else {
    cut.content.samples.assign(wave.samples.begin(),
                               wave.samples.begin() + static_cast<long>(boundary));
    cut.prompt.samples.assign(wave.samples.begin() + static_cast<long>(boundary),
                              wave.samples.end());
    cut.content_offset = 0;
  }
  return cut;
}

/// Everything one optimization step needs, precomputed once per utterance.
/// Perturbation touches only the encoder input; the mel target, the SSL
/// index targets, and the prompt all come from the unperturbed signal.
template <typename Real>
struct TrainExample {
  std::string utterance_id;
  std::string speaker_id;
  Waveform encoder_input;
  MatX<Real> mel_target;       // normalized, T x n_mels
  std::vector<int> ssl_tokens;  // length T at the SSL frame rate
  MatX<Real> prompt_feats;     // Tp x d_ssl
  double beta = 1.0;
};

struct SkipEvent {
  std::string utterance_id;
  std::string reason;
};

template <typename Real>
struct PreparedData {
  std::vector<TrainExample<Real>> examples;
  MelNormStats stats;
  KMeansModel tokenizer;
  std::vector<SkipEvent> skipped;
};

namespace detail {

inline Json epoch_components_json(const std::map<std::string, double>& sums, std::size_t steps) {
  Json j;
  for (const auto& [k, v] : sums) {
    j[k] = v / static_cast<double>(steps);
  }
  return j;
}

}  // namespace detail

/// Loads the manifest audio and assembles training examples. Mel statistics
/// and the SSL tokenizer are fitted here during stage 1 and must be passed
/// in (from the stage-1 checkpoint) for stage 2, so both stages normalize
/// identically.
template <typename Real>
PreparedData<Real> prepare_data(const TrainConfig& cfg,
                                const std::vector<ManifestEntry>& manifest,
                                SSLFeatureProvider& provider,
                                const MelNormStats* fixed_stats = nullptr,
                                const KMeansModel* fixed_tokenizer = nullptr) {
  check_arg(!manifest.empty(), "prepare_data: empty manifest");
  const MelConfig mel_cfg = mel_config_for(cfg.model);
  const int hop = mel_cfg.hop();

  struct Staged {
    ManifestEntry entry;
    PromptContentCut cut;
    MelSpectrogram content_mel;
    SSLFeatureSeq content_feats;
    SSLFeatureSeq prompt_feats;
    double beta = 1.0;
    Waveform encoder_input;
  };
  std::vector<Staged> staged;
  PreparedData<Real> out;

  for (const ManifestEntry& entry : manifest) {
    Waveform wave = wavio::read_wav(entry.wav_path);
    if (wave.sample_rate != cfg.model.sample_rate) {
      throw InvalidArgumentError("utterance " + entry.utterance_id + " is at " +
                                 std::to_string(wave.sample_rate) + " Hz, pipeline expects " +
                                 std::to_string(cfg.model.sample_rate));
    }
    const double duration = static_cast<double>(wave.samples.size()) / wave.sample_rate;
    if (duration < cfg.data.min_duration_s) {
      out.skipped.push_back({entry.utterance_id, "shorter than minimum duration"});
      continue;
    }

    Staged s;
    s.entry = entry;
    s.cut = cut_prompt_content(wave, hop, cfg.seed, entry.utterance_id);

    // One analysis of the clean full utterance, sliced per segment. The cut
    // is hop-aligned, so segment rows equal full-utterance rows.
    const MelSpectrogram full_mel = extract_mel(wave, mel_cfg);
    const SSLFeatureSeq full_feats =
        provider.features(wave, entry.utterance_id, cfg.data.ssl_layer);
    check_arg(full_feats.frames.rows() >= full_mel.num_frames() - 1,
              "SSL features shorter than mel for utterance " + entry.utterance_id);

    const auto content_rows = static_cast<Eigen::Index>(s.cut.content.samples.size() /
                                                        static_cast<std::size_t>(hop));
    const auto content_first = static_cast<Eigen::Index>(s.cut.content_offset /
                                                         static_cast<std::size_t>(hop));
    const auto prompt_rows = static_cast<Eigen::Index>(s.cut.prompt.samples.size() /
                                                       static_cast<std::size_t>(hop));
    const Eigen::Index prompt_first = s.cut.prompt_at_start ? 0 : content_rows;

    s.content_mel.frame_rate = full_mel.frame_rate;
    s.content_mel.frames = full_mel.frames.middleRows(content_first, content_rows);
    s.content_feats.frame_rate = full_feats.frame_rate;
    s.content_feats.source_tag = full_feats.source_tag;
    s.content_feats.frames = full_feats.frames.middleRows(content_first, content_rows);
    s.prompt_feats.frame_rate = full_feats.frame_rate;
    s.prompt_feats.source_tag = full_feats.source_tag;
    s.prompt_feats.frames = full_feats.frames.middleRows(prompt_first, prompt_rows);

    if (cfg.data.perturb) {
      const PerturbCoefficient beta = draw_beta(cfg.data.beta, cfg.seed, entry.utterance_id);
      s.beta = beta.beta;
      s.encoder_input = perturb(s.cut.content, beta);
    } else {
      s.beta = 1.0;
      s.encoder_input = s.cut.content;
    }
    staged.push_back(std::move(s));
  }
  check_arg(!staged.empty(), "prepare_data: every utterance was skipped");

  if (fixed_stats != nullptr) {
    out.stats = *fixed_stats;
  } else {
    std::vector<MelSpectrogram> mels;
    mels.reserve(staged.size());
    for (const Staged& s : staged) {
      mels.push_back(s.content_mel);
    }
    out.stats = compute_mel_norm_stats(mels);
  }

  if (fixed_tokenizer != nullptr) {
    out.tokenizer = *fixed_tokenizer;
  } else {
    std::vector<SSLFeatureSeq> feats;
    feats.reserve(staged.size());
    for (const Staged& s : staged) {
      feats.push_back(s.content_feats);
    }
    out.tokenizer = fit_ssl_tokenizer(feats, cfg.model.k_ssl,
                                      derive_seed(cfg.seed, "ssl-tokenizer", 0));
  }

  for (Staged& s : staged) {
    TrainExample<Real> ex;
    ex.utterance_id = s.entry.utterance_id;
    ex.speaker_id = s.entry.speaker_id;
    ex.encoder_input = std::move(s.encoder_input);
    ex.mel_target =
        apply_mel_norm(s.content_mel, out.stats).frames.template cast<Real>();
    ex.ssl_tokens = ssl_tokenize(s.content_feats, out.tokenizer).tokens;
    ex.prompt_feats = s.prompt_feats.frames.template cast<Real>();
    ex.beta = s.beta;
    out.examples.push_back(std::move(ex));
  }
  return out;
}

/// Paths produced by a training run.
struct TrainArtifacts {
  std::filesystem::path checkpoint_path;
  std::filesystem::path report_path;
};

namespace detail {

template <typename Real>
void abort_with_diagnostics(const std::filesystem::path& out_dir, const TrainConfig& cfg,
                            int stage, int epoch, std::int64_t step,
                            const std::string& utterance_id,
                            const std::map<std::string, double>& components,
                            Model<Real>& model) {
  Json diag;
  diag["event"] = "abort";
  diag["stage"] = stage;
  diag["epoch"] = epoch;
  diag["step"] = step;
  diag["utterance"] = utterance_id;
  for (const auto& [k, v] : components) {
    diag[k] = std::isfinite(v) ? Json(v) : Json(nullptr);
  }
  diag["grad_norm"] = model.params().grad_norm();
  const std::filesystem::path p = out_dir / "diagnostics.json";
  binio::write_file_atomic(p, diag.dump(2) + "\n");
  (void)cfg;
  throw TrainAbortError("non-finite loss at stage " + std::to_string(stage) + " epoch " +
                        std::to_string(epoch) + " step " + std::to_string(step) +
                        " on utterance " + utterance_id + "; diagnostics at " + p.string());
}

}  // namespace detail

/// Encodes every prepared example and k-means the posterior means into a
/// fresh codebook. Large corpora are subsampled at the configured fraction
/// (never below 50 frames per code, never above the cap) so the clustering
/// cost stays bounded.
template <typename Real>
Codebook fit_codebook_from_posteriors(const TrainConfig& cfg, Model<Real>& model,
                                      const std::vector<TrainExample<Real>>& examples,
                                      std::int64_t* frames_used = nullptr) {
  std::vector<MatD> mu_parts;
  std::int64_t total_frames = 0;
  for (const TrainExample<Real>& ex : examples) {
    Tape<Real> t;
    PosteriorVars<Real> post = model.encode(t, ex.encoder_input);
    mu_parts.push_back(t.value(post.mu).template cast<double>());
    total_frames += mu_parts.back().rows();
  }
  MatD mu_frames(total_frames, cfg.model.encoder.z_dim);
  std::int64_t row = 0;
  for (const MatD& part : mu_parts) {
    mu_frames.middleRows(row, part.rows()) = part;
    row += part.rows();
  }

  std::int64_t want = static_cast<std::int64_t>(cfg.quantizer.kmeans_frames_fraction *
                                                static_cast<double>(total_frames));
  want = std::max(want, std::int64_t{50} * cfg.quantizer.vocab_size);
  want = std::min(want, cfg.quantizer.kmeans_frames_cap);
  want = std::min(want, total_frames);
  if (want < total_frames) {
    Rng pick_rng(derive_seed(cfg.seed, "codebook-sample", 0));
    std::vector<std::int64_t> index(total_frames);
    for (std::int64_t i = 0; i < total_frames; ++i) index[i] = i;
    for (std::int64_t i = 0; i < want; ++i) {
      const std::int64_t j =
          i + static_cast<std::int64_t>(pick_rng.uniform_int(static_cast<std::uint64_t>(total_frames - i)));
      std::swap(index[i], index[j]);
    }
    MatD sampled(want, mu_frames.cols());
    for (std::int64_t i = 0; i < want; ++i) sampled.row(i) = mu_frames.row(index[i]);
    mu_frames = std::move(sampled);
  }
  if (frames_used != nullptr) *frames_used = mu_frames.rows();

  Codebook book = init_codebook_kmeans(mu_frames, cfg.quantizer.vocab_size,
                                       derive_seed(cfg.seed, "codebook", 0));
  book.gamma = cfg.quantizer.gamma;
  return book;
}

/// Runs one training stage end to end: loads the manifest, prepares
/// examples, optimizes, writes a JSONL report, and saves a checkpoint.
///
/// Stage 1 trains the continuous autoencoder from scratch (or resumes its
/// own checkpoint). Stage 2 requires a stage-1 checkpoint via
/// train.resume_from, initializes the codebook with k-means over posterior
/// means, and trains with straight-through quantization, EMA codebook
/// updates, and gated dead-code expiration. A fresh optimizer is used for
/// stage 2 since the objective changes.
template <typename Real = float>
TrainArtifacts run_training(const TrainConfig& cfg, const std::vector<ManifestEntry>& manifest,
                            const std::filesystem::path& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  const MelConfig mel_cfg = mel_config_for(cfg.model);
  const auto provider = make_ssl_provider(cfg.data.ssl_provider, mel_cfg, cfg.model.d_ssl,
                                          derive_seed(cfg.seed, "ssl-provider", 0),
                                          cfg.data.ssl_feature_dir);

  TrainArtifacts artifacts;
  artifacts.report_path = out_dir / ("stage" + std::to_string(cfg.stage) + "-report.jsonl");
  artifacts.checkpoint_path = out_dir / ("stage" + std::to_string(cfg.stage) + ".lsck");
  std::ofstream report(artifacts.report_path);
  if (!report) {
    throw IoError("cannot open report for writing: " + artifacts.report_path.string());
  }
  const auto emit = [&report](const Json& j) { report << j.dump() << "\n" << std::flush; };

  // Resolve the resume checkpoint, if any.
  std::optional<LoadedCheckpoint> resume;
  if (!cfg.train.resume_from.empty()) {
    resume = load_checkpoint(cfg.train.resume_from);
  }
  if (cfg.stage == 2 && !resume && !cfg.train.skip_stage1) {
    throw ConfigError(
        "stage 2 requires train.resume_from pointing at a stage-1 checkpoint "
        "(set train.skip_stage1 to ablate)");
  }

  // Build the model, installing resumed parameters when present.
  std::unique_ptr<Model<Real>> model;
  const MelNormStats* fixed_stats = nullptr;
  std::optional<KMeansModel> fixed_tokenizer;
  if (resume) {
    check_arg(resume->config.model.samples_per_token() == cfg.model.samples_per_token() &&
                  resume->config.model.n_mels == cfg.model.n_mels,
              "resume checkpoint was trained with an incompatible model geometry");
    model = model_from_checkpoint<Real>(*resume);
    if (!resume->extras.mel_stats.has_value() ||
        !resume->extras.tokenizer_centroids.has_value()) {
      throw FormatError("resume checkpoint lacks mel statistics or the SSL tokenizer");
    }
    fixed_stats = &*resume->extras.mel_stats;
    fixed_tokenizer.emplace();
    fixed_tokenizer->centroids = *resume->extras.tokenizer_centroids;
  } else {
    model = std::make_unique<Model<Real>>(cfg.model, cfg.seed);
    if (!cfg.data.ssl_tokenizer_path.empty()) {
      MatD centroids = read_matrix_file(cfg.data.ssl_tokenizer_path);
      if (centroids.rows() != cfg.model.k_ssl || centroids.cols() != cfg.model.d_ssl) {
        throw ConfigError("SSL tokenizer file " + cfg.data.ssl_tokenizer_path + " is " +
                          std::to_string(centroids.rows()) + "x" +
                          std::to_string(centroids.cols()) + " but the model wants " +
                          std::to_string(cfg.model.k_ssl) + "x" + std::to_string(cfg.model.d_ssl));
      }
      fixed_tokenizer.emplace();
      fixed_tokenizer->centroids = std::move(centroids);
    }
  }

  PreparedData<Real> data =
      prepare_data<Real>(cfg, manifest, *provider, fixed_stats,
                         fixed_tokenizer ? &*fixed_tokenizer : nullptr);
  for (const SkipEvent& s : data.skipped) {
    emit(Json{{"event", "skip"}, {"utterance", s.utterance_id}, {"reason", s.reason}});
  }
  emit(Json{{"event", "start"},
            {"stage", cfg.stage},
            {"examples", data.examples.size()},
            {"skipped", data.skipped.size()},
            {"perturb", cfg.data.perturb}});

  Adam<Real> opt(model->params(), cfg.optim);
  Rng train_rng(derive_seed(cfg.seed, "train-noise", 0));
  const bool continuing_stage1 = cfg.stage == 1 && resume.has_value();
  if (continuing_stage1) {
    if (resume->has_adam) {
      restore_adam(*resume, *model, opt);
    }
    if (resume->has_rng) {
      train_rng.set_state(resume->rng_state);
    }
  }

  CheckpointExtras extras;
  extras.mel_stats = data.stats;
  extras.tokenizer_centroids = data.tokenizer.centroids;

  // Stage-2 state: the codebook and its update machinery. The codebook comes
  // from (in priority order) the resume checkpoint, a pre-fitted codebook
  // file, or k-means over the stage-1 posterior means.
  std::optional<Codebook> book;
  Rng expire_rng(derive_seed(cfg.seed, "expire", 0));
  if (cfg.stage == 2) {
    if (resume && resume->extras.codebook.has_value()) {
      book = *resume->extras.codebook;  // continuing an interrupted stage 2
      emit(Json{{"event", "codebook-init"}, {"source", "resume"}, {"vocab_size", book->size()}});
    } else if (!cfg.quantizer.init_codebook_path.empty()) {
      const MatD vectors = read_codebook_file(cfg.quantizer.init_codebook_path);
      if (vectors.rows() != cfg.quantizer.vocab_size ||
          vectors.cols() != cfg.model.encoder.z_dim) {
        throw ConfigError("codebook file " + cfg.quantizer.init_codebook_path + " is " +
                          std::to_string(vectors.rows()) + "x" + std::to_string(vectors.cols()) +
                          " but the config wants " + std::to_string(cfg.quantizer.vocab_size) +
                          "x" + std::to_string(cfg.model.encoder.z_dim));
      }
      book = codebook_from_vectors(vectors, cfg.quantizer.gamma);
      emit(Json{{"event", "codebook-init"}, {"source", "file"}, {"vocab_size", book->size()}});
    } else {
      std::int64_t frames_used = 0;
      book = fit_codebook_from_posteriors(cfg, *model, data.examples, &frames_used);
      emit(Json{{"event", "codebook-init"},
                {"source", "kmeans"},
                {"frames", frames_used},
                {"vocab_size", cfg.quantizer.vocab_size}});
    }
  }

  const auto save = [&](const std::filesystem::path& path) {
    CheckpointExtras ex = extras;
    if (book) {
      ex.codebook = *book;
    }
    save_checkpoint<Real>(path, cfg, cfg.stage == 1 ? kStageTagVae : kStageTagVqvae, *model,
                          &opt, &train_rng, ex);
  };

  std::int64_t cum_steps = continuing_stage1 && resume->has_adam ? resume->adam_step : 0;
  for (int epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> order(data.examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      order[i] = i;
    }
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1],
                order[static_cast<std::size_t>(shuffle_rng.uniform_int(static_cast<int>(i)))]);
    }

    std::map<std::string, double> sums;
    std::vector<std::int64_t> usage(
        cfg.stage == 2 ? static_cast<std::size_t>(cfg.quantizer.vocab_size) : 0, 0);
    std::int64_t usage_total = 0;

    for (std::size_t i : order) {
      const TrainExample<Real>& ex = data.examples[i];
      Tape<Real> t;
      PosteriorVars<Real> post = model->encode(t, ex.encoder_input);
      LossVars lv;
      MatD mu_val;
      QuantizeResult qr;
      if (cfg.stage == 1) {
        const auto& mu = t.value(post.mu);
        MatX<Real> noise(mu.rows(), mu.cols());
        for (Eigen::Index r = 0; r < noise.rows(); ++r) {
          for (Eigen::Index c = 0; c < noise.cols(); ++c) {
            noise(r, c) = static_cast<Real>(train_rng.normal());
          }
        }
        Var z = model->sample_posterior(t, post, noise);
        DecoderVars<Real> dec = model->decode(t, z, ex.prompt_feats);
        lv = stage1_loss(t, dec, ex.mel_target, ex.ssl_tokens, post, cfg.loss,
                         cfg.use_idx_loss, ex.utterance_id);
      } else {
        mu_val = t.value(post.mu).template cast<double>();
        qr = quantize(mu_val, *book);
        Var stq = straight_through(t, post.mu, qr);
        DecoderVars<Real> dec = model->decode(t, stq, ex.prompt_feats);
        lv = stage2_loss(t, dec, ex.mel_target, ex.ssl_tokens, post.mu, qr, cfg.loss,
                         cfg.use_idx_loss, ex.utterance_id);
      }

      const auto comp = [&t](Var v) { return static_cast<double>(t.value(v)(0, 0)); };
      sums["loss_total"] += comp(lv.total);
      sums["loss_recon"] += comp(lv.recon);
      sums["loss_kl"] += comp(lv.kl);
      sums["loss_idx"] += comp(lv.idx);
      sums["loss_cmt"] += comp(lv.cmt);
      if (!std::isfinite(comp(lv.total))) {
        std::map<std::string, double> components = {{"loss_total", comp(lv.total)},
                                                    {"loss_recon", comp(lv.recon)},
                                                    {"loss_kl", comp(lv.kl)},
                                                    {"loss_idx", comp(lv.idx)},
                                                    {"loss_cmt", comp(lv.cmt)}};
        save(out_dir / "abort.lsck");
        detail::abort_with_diagnostics(out_dir, cfg, cfg.stage, epoch, cum_steps,
                                       ex.utterance_id, components, *model);
      }

      t.backward(lv.total);
      opt.step();
      ++cum_steps;

      if (cfg.stage == 2) {
        for (int idx : qr.indices) {
          ++usage[static_cast<std::size_t>(idx)];
        }
        usage_total += static_cast<std::int64_t>(qr.indices.size());
        ema_update(*book, mu_val, qr.indices);
        const double threshold = cfg.quantizer.expire_threshold_scale /
                                 cfg.quantizer.vocab_size *
                                 static_cast<double>(mu_val.rows());
        expire_codes(*book, mu_val, threshold, expire_rng, cfg.quantizer.expire_gate_steps);
      }
    }

    Json line = detail::epoch_components_json(sums, order.size());
    line["event"] = "epoch";
    line["stage"] = cfg.stage;
    line["epoch"] = epoch;
    line["cum_steps"] = cum_steps;
    line["lr"] = opt.current_lr();
    if (cfg.stage == 2 && usage_total > 0) {
      double entropy = 0.0;
      for (std::int64_t n : usage) {
        if (n > 0) {
          const double p = static_cast<double>(n) / static_cast<double>(usage_total);
          entropy -= p * std::log(p);
        }
      }
      line["perplexity"] = std::exp(entropy);
    }
    emit(line);

    if (cfg.train.checkpoint_every_epochs > 0 && epoch % cfg.train.checkpoint_every_epochs == 0 &&
        epoch < cfg.train.epochs) {
      save(out_dir / ("stage" + std::to_string(cfg.stage) + "-epoch" + std::to_string(epoch) +
                      ".lsck"));
    }
  }

  save(artifacts.checkpoint_path);
  emit(Json{{"event", "done"},
            {"stage", cfg.stage},
            {"cum_steps", cum_steps},
            {"checkpoint", artifacts.checkpoint_path.string()}});
  return artifacts;
}

/// A trained codec loaded for inference.
struct Codec {
  TrainConfig config;
  std::unique_ptr<Model<float>> model;
  MelNormStats stats;
  std::optional<Codebook> codebook;
  std::unique_ptr<SSLFeatureProvider> provider;

  static Codec load(const std::filesystem::path& checkpoint_path) {
    Codec c;
    LoadedCheckpoint lc = load_checkpoint(checkpoint_path);
    c.config = lc.config;
    c.model = model_from_checkpoint<float>(lc);
    if (!lc.extras.mel_stats.has_value()) {
      throw FormatError("checkpoint lacks mel statistics: " + checkpoint_path.string());
    }
    c.stats = *lc.extras.mel_stats;
    c.codebook = lc.extras.codebook;
    const MelConfig mel_cfg = mel_config_for(c.config.model);
    c.provider = make_ssl_provider(c.config.data.ssl_provider, mel_cfg, c.config.model.d_ssl,
                                   derive_seed(c.config.seed, "ssl-provider", 0),
                                   c.config.data.ssl_feature_dir);
    return c;
  }
};

/// Tokenizes a waveform with a trained codec: posterior means quantized
/// against the codebook. No perturbation, no prompt split, no sampling;
/// deterministic by construction.
inline TokenSequence encode_utterance(const Codec& codec, const Waveform& wave) {
  if (!codec.codebook.has_value()) {
    throw UnsupportedError(
        "this checkpoint has no codebook (stage 1); tokens require a stage-2 checkpoint");
  }
  Tape<float> t;
  PosteriorVars<float> post = codec.model->encode(t, wave);
  const MatD mu = t.value(post.mu).cast<double>();
  const QuantizeResult qr = quantize(mu, *codec.codebook);

  TokenSequence seq;
  seq.frame_rate = static_cast<std::uint16_t>(codec.config.model.frame_rate);
  seq.vocab_size = static_cast<std::uint32_t>(codec.codebook->size());
  seq.tokens.reserve(qr.indices.size());
  for (int idx : qr.indices) {
    seq.tokens.push_back(static_cast<std::uint32_t>(idx));
  }
  return seq;
}

/// Decodes tokens to a denormalized mel spectrogram under a prompt. Token
/// values are validated against the codebook before lookup.
inline MelSpectrogram decode_tokens_to_mel(const Codec& codec, const TokenSequence& tokens,
                                           const Waveform& prompt,
                                           const std::string& prompt_id = "prompt") {
  if (!codec.codebook.has_value()) {
    throw UnsupportedError(
        "this checkpoint has no codebook (stage 1); decoding requires a stage-2 checkpoint");
  }
  check_arg(!tokens.tokens.empty(), "decode: empty token sequence");
  tokens.validate();
  if (tokens.vocab_size != static_cast<std::uint32_t>(codec.codebook->size())) {
    throw InvalidArgumentError("token stream vocabulary " + std::to_string(tokens.vocab_size) +
                               " does not match codebook size " +
                               std::to_string(codec.codebook->size()));
  }
  for (std::size_t i = 0; i < tokens.tokens.size(); ++i) {
    if (tokens.tokens[i] >= static_cast<std::uint32_t>(codec.codebook->size())) {
      throw InvalidArgumentError("token " + std::to_string(tokens.tokens[i]) + " at frame " +
                                 std::to_string(i) + " is outside the codebook");
    }
  }

  MatX<float> latents(static_cast<Eigen::Index>(tokens.tokens.size()),
                      codec.codebook->dim());
  for (std::size_t i = 0; i < tokens.tokens.size(); ++i) {
    latents.row(static_cast<Eigen::Index>(i)) =
        codec.codebook->vectors.row(static_cast<Eigen::Index>(tokens.tokens[i])).cast<float>();
  }

  const SSLFeatureSeq pf =
      codec.provider->features(prompt, prompt_id, codec.config.data.ssl_layer);

  Tape<float> t;
  Var lat = t.constant(latents);
  DecoderVars<float> dec = codec.model->decode(t, lat, pf.frames.cast<float>());

  MelSpectrogram mel;
  mel.frame_rate = codec.config.model.mel_rate;
  mel.frames = t.value(dec.mel_pred).cast<double>();
  return invert_mel_norm(mel, codec.stats);
}

/// Full decode to audio through a vocoder.
inline Waveform decode_tokens_to_wave(const Codec& codec, const TokenSequence& tokens,
                                      const Waveform& prompt, const TokenVocoder& vocoder,
                                      const std::string& prompt_id = "prompt") {
  const MelSpectrogram mel = decode_tokens_to_mel(codec, tokens, prompt, prompt_id);
  return vocoder.synthesize(tokens, mel, &prompt);
}

/// Probe features from a trained stage-2 codec: each utterance becomes its
/// sequence of assigned code vectors.
inline ProbeDataset build_code_probe_dataset(const Codec& codec,
                                             const std::vector<ManifestEntry>& manifest) {
  if (!codec.codebook.has_value()) {
    throw UnsupportedError("probing code vectors requires a stage-2 checkpoint");
  }
  ProbeDataset data;
  std::map<std::string, int> speaker_index;
  for (const ManifestEntry& e : manifest) {
    if (speaker_index.emplace(e.speaker_id, static_cast<int>(speaker_index.size())).second) {
      data.speaker_ids.push_back(e.speaker_id);
    }
  }
  for (const ManifestEntry& e : manifest) {
    const Waveform wave = wavio::read_wav(e.wav_path);
    const TokenSequence seq = encode_utterance(codec, wave);
    ProbeExample ex;
    ex.utterance_id = e.utterance_id;
    ex.speaker_index = speaker_index.at(e.speaker_id);
    ex.features.resize(static_cast<Eigen::Index>(seq.tokens.size()), codec.codebook->dim());
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
      ex.features.row(static_cast<Eigen::Index>(i)) =
          codec.codebook->vectors.row(static_cast<Eigen::Index>(seq.tokens[i]));
    }
    data.examples.push_back(std::move(ex));
  }
  return data;
}

/// Probe features straight from audio: per-frame normalized log-mel. The
/// ceiling any codec-side probe is compared against.
inline ProbeDataset build_mel_probe_dataset(const std::vector<ManifestEntry>& manifest,
                                            const MelConfig& mel_cfg) {
  ProbeDataset data;
  std::map<std::string, int> speaker_index;
  for (const ManifestEntry& e : manifest) {
    if (speaker_index.emplace(e.speaker_id, static_cast<int>(speaker_index.size())).second) {
      data.speaker_ids.push_back(e.speaker_id);
    }
  }
  std::vector<MelSpectrogram> mels;
  for (const ManifestEntry& e : manifest) {
    mels.push_back(extract_mel(wavio::read_wav(e.wav_path), mel_cfg));
  }
  const MelNormStats stats = compute_mel_norm_stats(mels);
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    ProbeExample ex;
    ex.utterance_id = manifest[i].utterance_id;
    ex.speaker_index = speaker_index.at(manifest[i].speaker_id);
    ex.features = apply_mel_norm(mels[i], stats).frames;
    data.examples.push_back(std::move(ex));
  }
  return data;
}

}  // namespace lsc

#endif  // LSCODEC_TRAINER_HPP
