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

// Command-line front end. Every subcommand is a thin wrapper over the
// library; all state lives in files so commands compose across processes.
//
// Exit codes: 0 on success, 2 on usage errors, 1 on runtime failures. A
// runtime failure prints a single line "error: <class>: <message>" on
// stderr, with <class> drawn from the library's error taxonomy so scripts
// can dispatch on it without parsing prose.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "lscodec/lscodec.hpp"

namespace fs = std::filesystem;

namespace {

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

// ---------------------------------------------------------------------------
// perturb

struct PerturbArgs {
  std::string in_path;
  std::string out_path;
  double beta = 0.0;
  std::uint64_t seed = 1234;
  std::string utt_id;
  double beta_lo = 0.8;
  double beta_hi = 1.2;
  CLI::Option* beta_opt = nullptr;
};

void run_perturb(const PerturbArgs& a) {
  const lsc::Waveform wave = lsc::wavio::read_wav(a.in_path);
  lsc::PerturbCoefficient coeff{a.beta};
  if (a.beta_opt->count() == 0) {
    const std::string id = a.utt_id.empty() ? stem_of(a.in_path) : a.utt_id;
    coeff = lsc::draw_beta(lsc::BetaInterval{a.beta_lo, a.beta_hi}, a.seed, id);
  }
  const lsc::Waveform out = lsc::perturb(wave, coeff);
  lsc::wavio::write_wav(a.out_path, out, lsc::wavio::WavEncoding::kFloat32);
  std::printf("perturbed %s -> %s (beta=%.4f, %lld samples)\n", a.in_path.c_str(),
              a.out_path.c_str(), coeff.beta, static_cast<long long>(out.size()));
}

// ---------------------------------------------------------------------------
// synth-corpus

struct SynthArgs {
  std::string out_dir;
  lsc::CorpusConfig cfg;
};

void run_synth(const SynthArgs& a) {
  const lsc::SynthCorpus corpus = lsc::generate_corpus(a.cfg);
  lsc::write_corpus(corpus, a.out_dir);
  std::printf("wrote %zu utterances (%d speakers) under %s\n", corpus.utterances.size(),
              a.cfg.num_speakers, a.out_dir.c_str());
  std::printf("manifest: %s\n", (fs::path(a.out_dir) / "manifest.tsv").string().c_str());
}

// ---------------------------------------------------------------------------
// extract-features

struct ExtractArgs {
  std::string manifest_path;
  std::string out_dir;
  std::string provider = "surrogate";
  std::string feature_dir;
  int ssl_dim = 64;
  int ssl_layer = 6;
  std::uint64_t seed = 1234;
};

void run_extract(const ExtractArgs& a) {
  const auto manifest = lsc::read_manifest(a.manifest_path);
  const lsc::MelConfig mel_cfg;
  const auto provider = lsc::make_ssl_provider(a.provider, mel_cfg, a.ssl_dim,
                                               lsc::derive_seed(a.seed, "ssl-provider", 0),
                                               a.feature_dir);
  fs::create_directories(fs::path(a.out_dir) / "mel");
  fs::create_directories(fs::path(a.out_dir) / "ssl");
  for (const lsc::ManifestEntry& e : manifest) {
    const lsc::Waveform wave = lsc::wavio::read_wav(e.wav_path);
    const lsc::MelSpectrogram mel = lsc::extract_mel(wave, mel_cfg);
    lsc::write_matrix_file(fs::path(a.out_dir) / "mel" / (e.utterance_id + ".lscf"), mel.frames);
    const lsc::SSLFeatureSeq feats = provider->features(wave, e.utterance_id, a.ssl_layer);
    lsc::write_matrix_file(fs::path(a.out_dir) / "ssl" / (e.utterance_id + ".lscf"),
                           feats.frames);
  }
  std::printf("extracted mel + %s features for %zu utterances under %s\n",
              provider->name().c_str(), manifest.size(), a.out_dir.c_str());
}

// ---------------------------------------------------------------------------
// fit-ssl-tokenizer

struct FitTokArgs {
  std::string manifest_path;
  std::string out_path;
  int clusters = 64;
  std::string provider = "surrogate";
  std::string feature_dir;
  int ssl_dim = 64;
  int ssl_layer = 6;
  std::uint64_t seed = 1234;
};

void run_fit_tokenizer(const FitTokArgs& a) {
  const auto manifest = lsc::read_manifest(a.manifest_path);
  const lsc::MelConfig mel_cfg;
  const auto provider = lsc::make_ssl_provider(a.provider, mel_cfg, a.ssl_dim,
                                               lsc::derive_seed(a.seed, "ssl-provider", 0),
                                               a.feature_dir);
  std::vector<lsc::SSLFeatureSeq> feats;
  feats.reserve(manifest.size());
  for (const lsc::ManifestEntry& e : manifest) {
    const lsc::Waveform wave = lsc::wavio::read_wav(e.wav_path);
    feats.push_back(provider->features(wave, e.utterance_id, a.ssl_layer));
  }
  const lsc::KMeansModel km = lsc::fit_ssl_tokenizer(feats, a.clusters, a.seed);
  lsc::write_matrix_file(a.out_path, km.centroids, lsc::DType::kF64);
  std::printf("tokenizer: %lld clusters x %lld dims after %d iterations -> %s\n",
              static_cast<long long>(km.centroids.rows()),
              static_cast<long long>(km.centroids.cols()), km.iterations, a.out_path.c_str());
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  int stage = 1;
  std::string config_path;
  std::string manifest_path;
  std::string out_dir;
  std::string resume;
  std::string codebook;
  std::string ssl_tokenizer;
  std::uint64_t seed = 0;
  int epochs = 0;
  double beta_lo = 0.0;
  double beta_hi = 0.0;
  bool no_perturb = false;
  bool no_idx_loss = false;
  bool skip_stage1 = false;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* epochs_opt = nullptr;
  CLI::Option* beta_lo_opt = nullptr;
  CLI::Option* beta_hi_opt = nullptr;
};

void run_train(const TrainArgs& a) {
  lsc::TrainConfig cfg;
  if (!a.config_path.empty()) {
    cfg = lsc::load_train_config(a.config_path);
  }
  cfg.stage = a.stage;
  if (a.seed_opt->count() > 0) cfg.seed = a.seed;
  if (a.epochs_opt->count() > 0) cfg.train.epochs = a.epochs;
  if (a.beta_lo_opt->count() > 0) cfg.data.beta.lo = a.beta_lo;
  if (a.beta_hi_opt->count() > 0) cfg.data.beta.hi = a.beta_hi;
  if (!a.resume.empty()) cfg.train.resume_from = a.resume;
  if (!a.codebook.empty()) cfg.quantizer.init_codebook_path = a.codebook;
  if (!a.ssl_tokenizer.empty()) cfg.data.ssl_tokenizer_path = a.ssl_tokenizer;
  if (a.no_perturb) cfg.data.perturb = false;
  if (a.no_idx_loss) cfg.use_idx_loss = false;
  if (a.skip_stage1) cfg.train.skip_stage1 = true;

  const auto manifest = lsc::read_manifest(a.manifest_path);
  const lsc::TrainArtifacts out = lsc::run_training<float>(cfg, manifest, a.out_dir);
  std::printf("stage %d finished\n", cfg.stage);
  std::printf("checkpoint: %s\n", out.checkpoint_path.string().c_str());
  std::printf("report:     %s\n", out.report_path.string().c_str());
}

// ---------------------------------------------------------------------------
// kmeans-init

struct KmeansInitArgs {
  std::string checkpoint_path;
  std::string manifest_path;
  std::string out_path;
  int vocab = 0;
  std::uint64_t seed = 0;
  CLI::Option* vocab_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
};

void run_kmeans_init(const KmeansInitArgs& a) {
  lsc::LoadedCheckpoint lc = lsc::load_checkpoint(a.checkpoint_path);
  lsc::TrainConfig cfg = lc.config;
  if (a.vocab_opt->count() > 0) cfg.quantizer.vocab_size = a.vocab;
  if (a.seed_opt->count() > 0) cfg.seed = a.seed;
  if (!lc.extras.mel_stats.has_value() || !lc.extras.tokenizer_centroids.has_value()) {
    throw lsc::FormatError("checkpoint lacks mel statistics or the SSL tokenizer: " +
                           a.checkpoint_path);
  }
  auto model = lsc::model_from_checkpoint<float>(lc);
  const lsc::MelConfig mel_cfg = lsc::mel_config_for(cfg.model);
  const auto provider = lsc::make_ssl_provider(cfg.data.ssl_provider, mel_cfg, cfg.model.d_ssl,
                                               lsc::derive_seed(cfg.seed, "ssl-provider", 0),
                                               cfg.data.ssl_feature_dir);
  lsc::KMeansModel tokenizer;
  tokenizer.centroids = *lc.extras.tokenizer_centroids;
  const auto manifest = lsc::read_manifest(a.manifest_path);
  const lsc::PreparedData<float> data =
      lsc::prepare_data<float>(cfg, manifest, *provider, &*lc.extras.mel_stats, &tokenizer);
  std::int64_t frames_used = 0;
  const lsc::Codebook book =
      lsc::fit_codebook_from_posteriors(cfg, *model, data.examples, &frames_used);
  lsc::write_codebook_file(a.out_path, book);
  std::printf("codebook: %d codes x %d dims from %lld posterior frames -> %s\n", book.size(),
              book.dim(), static_cast<long long>(frames_used), a.out_path.c_str());
}

// ---------------------------------------------------------------------------
// encode / decode

struct EncodeArgs {
  std::string checkpoint_path;
  std::string in_path;
  std::string out_path;
};

void run_encode(const EncodeArgs& a) {
  const lsc::Codec codec = lsc::Codec::load(a.checkpoint_path);
  const lsc::Waveform wave = lsc::wavio::read_wav(a.in_path);
  const lsc::TokenSequence seq = lsc::encode_utterance(codec, wave);
  lsc::write_token_file(a.out_path, seq);
  const std::int64_t bps = lsc::bitrate_bps(1, seq.frame_rate, seq.vocab_size);
  std::printf("%zu tokens @ %u Hz, vocab %u (%lld bps) -> %s\n", seq.tokens.size(),
              static_cast<unsigned>(seq.frame_rate), static_cast<unsigned>(seq.vocab_size),
              static_cast<long long>(bps), a.out_path.c_str());
}

struct DecodeArgs {
  std::string checkpoint_path;
  std::string tokens_path;
  std::string prompt_path;
  std::string out_path;
  std::string vocoder = "griffin-lim";
  int gl_iterations = 32;
};

void run_decode(const DecodeArgs& a) {
  const lsc::Codec codec = lsc::Codec::load(a.checkpoint_path);
  const lsc::TokenSequence seq = lsc::read_token_file(a.tokens_path);
  const lsc::Waveform prompt = lsc::wavio::read_wav(a.prompt_path);
  const lsc::MelConfig mel_cfg = lsc::mel_config_for(codec.config.model);
  std::unique_ptr<lsc::TokenVocoder> vocoder;
  if (a.vocoder == "griffin-lim") {
    vocoder = std::make_unique<lsc::GriffinLimVocoder>(mel_cfg, a.gl_iterations);
  } else {
    vocoder = lsc::make_vocoder(a.vocoder, mel_cfg);
  }
  const lsc::Waveform wave =
      lsc::decode_tokens_to_wave(codec, seq, prompt, *vocoder, stem_of(a.prompt_path));
  lsc::wavio::write_wav(a.out_path, wave, lsc::wavio::WavEncoding::kFloat32);
  std::printf("decoded %zu tokens -> %.3f s of audio (%s) -> %s\n", seq.tokens.size(),
              static_cast<double>(wave.size()) / wave.sample_rate, vocoder->name().c_str(),
              a.out_path.c_str());
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string manifest_path;
  std::string recon_dir;
  std::string out_path;
  std::string ref_text_dir;
  std::string hyp_text_dir;
  bool no_secs = false;
};

void run_eval(const EvalArgs& a) {
  const auto manifest = lsc::read_manifest(a.manifest_path);
  lsc::MelStatsEmbedder embedder;
  std::unique_ptr<lsc::FileTranscriber> ref_tr, hyp_tr;
  if (!a.ref_text_dir.empty() && !a.hyp_text_dir.empty()) {
    ref_tr = std::make_unique<lsc::FileTranscriber>(a.ref_text_dir);
    hyp_tr = std::make_unique<lsc::FileTranscriber>(a.hyp_text_dir);
  }
  std::ofstream csv(a.out_path);
  if (!csv) {
    throw lsc::IoError("cannot open metrics CSV for writing: " + a.out_path);
  }
  csv << lsc::eval_csv_header() << "\n";
  double gpe_sum = 0, pcorr_sum = 0, secs_sum = 0, wer_sum = 0;
  int gpe_n = 0, pcorr_n = 0, secs_n = 0, wer_n = 0;
  for (const lsc::ManifestEntry& e : manifest) {
    const fs::path recon_path = fs::path(a.recon_dir) / (e.utterance_id + ".wav");
    if (!fs::exists(recon_path)) {
      throw lsc::IoError("missing reconstruction: " + recon_path.string());
    }
    const lsc::Waveform source = lsc::wavio::read_wav(e.wav_path);
    const lsc::Waveform recon = lsc::wavio::read_wav(recon_path);
    const lsc::EvalRow row = lsc::evaluate_reconstruction(
        e.utterance_id, source, recon, a.no_secs ? nullptr : &embedder, hyp_tr.get(),
        ref_tr.get());
    csv << lsc::eval_csv_row(row) << "\n";
    if (row.gpe.defined) gpe_sum += row.gpe.value, ++gpe_n;
    if (row.pcorr.defined) pcorr_sum += row.pcorr.value, ++pcorr_n;
    if (row.has_secs) secs_sum += row.secs, ++secs_n;
    if (row.has_wer) wer_sum += row.wer, ++wer_n;
  }
  std::printf("wrote %zu rows to %s\n", manifest.size(), a.out_path.c_str());
  if (gpe_n > 0) std::printf("mean gpe:   %.4f (%d utts)\n", gpe_sum / gpe_n, gpe_n);
  if (pcorr_n > 0) std::printf("mean pcorr: %.4f (%d utts)\n", pcorr_sum / pcorr_n, pcorr_n);
  if (secs_n > 0) std::printf("mean secs:  %.4f (%d utts)\n", secs_sum / secs_n, secs_n);
  if (wer_n > 0) std::printf("mean wer:   %.4f (%d utts)\n", wer_sum / wer_n, wer_n);
}

// ---------------------------------------------------------------------------
// probe

struct ProbeArgs {
  std::string checkpoint_path;
  std::string manifest_path;
  std::string out_path;
  std::string features = "codes";
  lsc::ProbeConfig cfg;
};

void run_probe(const ProbeArgs& a) {
  const auto manifest = lsc::read_manifest(a.manifest_path);
  lsc::ProbeDataset data;
  if (a.features == "codes") {
    if (a.checkpoint_path.empty()) {
      throw lsc::ConfigError("probing code vectors requires --checkpoint");
    }
    const lsc::Codec codec = lsc::Codec::load(a.checkpoint_path);
    data = lsc::build_code_probe_dataset(codec, manifest);
  } else if (a.features == "mel") {
    data = lsc::build_mel_probe_dataset(manifest, lsc::MelConfig());
  } else {
    throw lsc::ConfigError("unknown probe features (want codes or mel): " + a.features);
  }
  const lsc::ProbeResult result = lsc::train_probe<double>(data, a.cfg);
  lsc::binio::write_file_atomic(a.out_path, lsc::probe_csv(result));
  std::printf("probe on %s features: final val accuracy %.4f (%zu examples, %zu speakers)\n",
              a.features.c_str(), result.final_val_accuracy, data.examples.size(),
              data.speaker_ids.size());
  std::printf("curve: %s\n", a.out_path.c_str());
}

// ---------------------------------------------------------------------------
// bitrate

struct BitrateArgs {
  int quantizers = 0;
  int frame_rate = 0;
  std::int64_t vocab = 0;
};

void run_bitrate(const BitrateArgs& a) {
  const std::int64_t bps = lsc::bitrate_bps(a.quantizers, a.frame_rate, a.vocab);
  std::printf("%lld bps (%.2f kbps)\n", static_cast<long long>(bps),
              static_cast<double>(bps) / 1000.0);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LSCodec: low-bitrate single-codebook speech tokens"};
  app.require_subcommand(1);

  auto perturb_args = std::make_shared<PerturbArgs>();
  CLI::App* sp = app.add_subcommand("perturb", "Apply the speaker perturbation to a waveform");
  sp->add_option("--in", perturb_args->in_path, "input wav")->required();
  sp->add_option("--out", perturb_args->out_path, "output wav")->required();
  perturb_args->beta_opt =
      sp->add_option("--beta", perturb_args->beta, "speed coefficient; omit to draw one");
  sp->add_option("--seed", perturb_args->seed, "seed for drawing beta");
  sp->add_option("--utt-id", perturb_args->utt_id, "utterance id keying the draw");
  sp->add_option("--beta-lo", perturb_args->beta_lo, "draw interval low edge");
  sp->add_option("--beta-hi", perturb_args->beta_hi, "draw interval high edge");
  sp->callback([perturb_args] { run_perturb(*perturb_args); });

  auto synth_args = std::make_shared<SynthArgs>();
  CLI::App* ss = app.add_subcommand("synth-corpus", "Generate the synthetic training corpus");
  ss->add_option("--out", synth_args->out_dir, "output directory")->required();
  ss->add_option("--speakers", synth_args->cfg.num_speakers, "speaker count");
  ss->add_option("--utterances", synth_args->cfg.utterances_per_speaker,
                 "utterances per speaker");
  ss->add_option("--seed", synth_args->cfg.seed, "corpus seed");
  ss->add_option("--min-duration", synth_args->cfg.min_duration_s, "seconds");
  ss->add_option("--max-duration", synth_args->cfg.max_duration_s, "seconds");
  ss->callback([synth_args] { run_synth(*synth_args); });

  auto extract_args = std::make_shared<ExtractArgs>();
  CLI::App* se = app.add_subcommand("extract-features",
                                    "Write mel and SSL feature files for a manifest");
  se->add_option("--manifest", extract_args->manifest_path, "manifest TSV")->required();
  se->add_option("--out", extract_args->out_dir, "output directory")->required();
  se->add_option("--ssl-provider", extract_args->provider, "surrogate or file");
  se->add_option("--feature-dir", extract_args->feature_dir, "source dir for the file provider");
  se->add_option("--ssl-dim", extract_args->ssl_dim, "SSL feature dimension");
  se->add_option("--ssl-layer", extract_args->ssl_layer, "SSL layer index");
  se->add_option("--seed", extract_args->seed, "provider seed");
  se->callback([extract_args] { run_extract(*extract_args); });

  auto fittok_args = std::make_shared<FitTokArgs>();
  CLI::App* sf = app.add_subcommand("fit-ssl-tokenizer",
                                    "Fit k-means SSL tokenizer centroids over a manifest");
  sf->add_option("--manifest", fittok_args->manifest_path, "manifest TSV")->required();
  sf->add_option("--out", fittok_args->out_path, "output centroid matrix file")->required();
  sf->add_option("--clusters", fittok_args->clusters, "number of clusters");
  sf->add_option("--ssl-provider", fittok_args->provider, "surrogate or file");
  sf->add_option("--feature-dir", fittok_args->feature_dir, "source dir for the file provider");
  sf->add_option("--ssl-dim", fittok_args->ssl_dim, "SSL feature dimension");
  sf->add_option("--ssl-layer", fittok_args->ssl_layer, "SSL layer index");
  sf->add_option("--seed", fittok_args->seed, "k-means seed");
  sf->callback([fittok_args] { run_fit_tokenizer(*fittok_args); });

  auto train_args = std::make_shared<TrainArgs>();
  CLI::App* st = app.add_subcommand("train", "Train stage 1 (VAE) or stage 2 (VQ)");
  st->add_option("--stage", train_args->stage, "1 or 2")->required()->check(CLI::Range(1, 2));
  st->add_option("--config", train_args->config_path, "JSON training config");
  st->add_option("--manifest", train_args->manifest_path, "manifest TSV")->required();
  st->add_option("--out", train_args->out_dir, "output directory")->required();
  st->add_option("--resume", train_args->resume, "checkpoint to resume from");
  st->add_option("--codebook", train_args->codebook, "pre-fitted codebook for stage 2");
  st->add_option("--ssl-tokenizer", train_args->ssl_tokenizer,
                 "pre-fitted SSL tokenizer centroids");
  train_args->seed_opt = st->add_option("--seed", train_args->seed, "override config seed");
  train_args->epochs_opt =
      st->add_option("--epochs", train_args->epochs, "override config epoch count");
  train_args->beta_lo_opt =
      st->add_option("--beta-lo", train_args->beta_lo, "override perturbation interval low edge");
  train_args->beta_hi_opt =
      st->add_option("--beta-hi", train_args->beta_hi, "override perturbation interval high edge");
  st->add_flag("--no-perturb", train_args->no_perturb, "disable the speaker perturbation");
  st->add_flag("--no-idx-loss", train_args->no_idx_loss, "disable the SSL index loss");
  st->add_flag("--skip-stage1", train_args->skip_stage1,
               "let stage 2 start from fresh weights (ablation)");
  st->callback([train_args] { run_train(*train_args); });

  auto kinit_args = std::make_shared<KmeansInitArgs>();
  CLI::App* sk = app.add_subcommand("kmeans-init",
                                    "Fit a codebook from a stage-1 checkpoint's posteriors");
  sk->add_option("--checkpoint", kinit_args->checkpoint_path, "stage-1 checkpoint")->required();
  sk->add_option("--manifest", kinit_args->manifest_path, "manifest TSV")->required();
  sk->add_option("--out", kinit_args->out_path, "output codebook file")->required();
  kinit_args->vocab_opt =
      sk->add_option("--vocab", kinit_args->vocab, "override codebook size");
  kinit_args->seed_opt = sk->add_option("--seed", kinit_args->seed, "override sampling seed");
  sk->callback([kinit_args] { run_kmeans_init(*kinit_args); });

  auto encode_args = std::make_shared<EncodeArgs>();
  CLI::App* sn = app.add_subcommand("encode", "Encode a waveform into a token file");
  sn->add_option("--checkpoint", encode_args->checkpoint_path, "stage-2 checkpoint")->required();
  sn->add_option("--in", encode_args->in_path, "input wav")->required();
  sn->add_option("--out", encode_args->out_path, "output token file")->required();
  sn->callback([encode_args] { run_encode(*encode_args); });

  auto decode_args = std::make_shared<DecodeArgs>();
  CLI::App* sd = app.add_subcommand("decode", "Decode a token file back into a waveform");
  sd->add_option("--checkpoint", decode_args->checkpoint_path, "stage-2 checkpoint")->required();
  sd->add_option("--tokens", decode_args->tokens_path, "input token file")->required();
  sd->add_option("--prompt", decode_args->prompt_path, "timbre prompt wav")->required();
  sd->add_option("--out", decode_args->out_path, "output wav")->required();
  sd->add_option("--vocoder", decode_args->vocoder, "vocoder name");
  sd->add_option("--gl-iterations", decode_args->gl_iterations, "Griffin-Lim iterations");
  sd->callback([decode_args] { run_decode(*decode_args); });

  auto eval_args = std::make_shared<EvalArgs>();
  CLI::App* sv = app.add_subcommand("eval", "Compare reconstructions against their sources");
  sv->add_option("--manifest", eval_args->manifest_path, "manifest TSV of source wavs")
      ->required();
  sv->add_option("--recon-dir", eval_args->recon_dir, "directory of <utt>.wav reconstructions")
      ->required();
  sv->add_option("--out", eval_args->out_path, "output CSV")->required();
  sv->add_option("--ref-text", eval_args->ref_text_dir, "reference transcript directory");
  sv->add_option("--hyp-text", eval_args->hyp_text_dir, "hypothesis transcript directory");
  sv->add_flag("--no-secs", eval_args->no_secs, "skip the speaker-similarity column");
  sv->callback([eval_args] { run_eval(*eval_args); });

  auto probe_args = std::make_shared<ProbeArgs>();
  CLI::App* sb = app.add_subcommand("probe", "Train a speaker probe on codec features");
  sb->add_option("--manifest", probe_args->manifest_path, "manifest TSV")->required();
  sb->add_option("--out", probe_args->out_path, "output CSV")->required();
  sb->add_option("--checkpoint", probe_args->checkpoint_path,
                 "stage-2 checkpoint (required for codes)");
  sb->add_option("--features", probe_args->features, "codes or mel");
  sb->add_option("--hidden", probe_args->cfg.hidden, "probe hidden width");
  sb->add_option("--epochs", probe_args->cfg.epochs, "probe epochs");
  sb->add_option("--val-fraction", probe_args->cfg.val_fraction, "held-out fraction per speaker");
  sb->add_option("--seed", probe_args->cfg.seed, "probe seed");
  sb->callback([probe_args] { run_probe(*probe_args); });

  auto bitrate_args = std::make_shared<BitrateArgs>();
  CLI::App* sr = app.add_subcommand("bitrate", "Print Q x F x ceil(log2 V) bits per second");
  sr->add_option("quantizers", bitrate_args->quantizers, "quantizer count")->required();
  sr->add_option("frame-rate", bitrate_args->frame_rate, "token frame rate in Hz")->required();
  sr->add_option("vocab", bitrate_args->vocab, "codebook size")->required();
  sr->callback([bitrate_args] { run_bitrate(*bitrate_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const lsc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";  // what() is "<class>: <message>"
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
