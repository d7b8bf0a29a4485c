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
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lscodec/common.hpp"
#include "lscodec/losses.hpp"
#include "lscodec/mel.hpp"
#include "lscodec/model.hpp"
#include "lscodec/optim.hpp"
#include "lscodec/perturb.hpp"

namespace lsc {

using Json = nlohmann::json;

/// Data-pipeline knobs: utterance filtering, perturbation, SSL provisioning.
struct DataConfig {
  double min_duration_s = 6.0;
  bool perturb = true;
  BetaInterval beta{0.8, 1.2};
  std::string ssl_provider = "surrogate";
  int ssl_layer = 6;
  std::string ssl_feature_dir;
  /// Optional path to pre-fitted SSL tokenizer centroids. When set, training
  /// loads them instead of fitting k-means on the training features.
  std::string ssl_tokenizer_path;
};

/// Vector-quantizer knobs for stage 2.
struct QuantizerConfig {
  int vocab_size = 32;
  double gamma = 0.99;
  std::int64_t expire_gate_steps = 5000;
  double expire_threshold_scale = 2.0;  // threshold = scale / V * batch_frames
  double kmeans_frames_fraction = 0.1;
  std::int64_t kmeans_frames_cap = 2000000;
  /// Optional path to a pre-fitted codebook file. When set, stage 2 loads it
  /// instead of running k-means on the stage-1 posteriors at startup.
  std::string init_codebook_path;
};

/// Run-length and artifact knobs.
struct RunConfig {
  int epochs = 30;
  int checkpoint_every_epochs = 0;  // 0 = only at the end
  std::string resume_from;
  /// Lets stage 2 start from fresh weights instead of a stage-1 checkpoint.
  /// Exists for ablations; the normal pipeline never sets it.
  bool skip_stage1 = false;
};

/// Everything one training invocation needs, loadable from a JSON file with
/// stage/model/data/loss/optim/quantizer/train sections. Unknown keys are
/// rejected so config typos fail loudly instead of silently using defaults.
struct TrainConfig {
  int stage = 1;
  std::uint64_t seed = 1234;
  ModelSpec model;
  DataConfig data;
  LossWeights loss;
  bool use_idx_loss = true;
  AdamConfig optim = desk_optim();
  QuantizerConfig quantizer;
  RunConfig train;

  static AdamConfig desk_optim() {
    AdamConfig a;
    a.lr = 2e-3;
    a.warmup_steps = 200;
    return a;
  }

  void validate() const {
    check_arg(stage == 1 || stage == 2, "stage must be 1 or 2");
    model.validate();
    check_arg(data.min_duration_s > 0, "minimum duration must be positive");
    data.beta.validate();
    optim.validate();
    check_arg(quantizer.vocab_size >= 1, "vocabulary size must be at least 1");
    check_arg(quantizer.gamma >= 0 && quantizer.gamma < 1, "EMA decay must be in [0, 1)");
    check_arg(train.epochs >= 1, "epochs must be at least 1");
  }
};

namespace cfgio {

inline void reject_unknown(const Json& j, std::initializer_list<const char*> known,
                           const std::string& section) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + section);
  }
}

template <typename T>
void get(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError("bad value for '" + std::string(key) + "': " + e.what());
  }
}

inline Json encoder_to_json(const EncoderSpec& e) {
  return Json{{"stem_kernel", e.stem_kernel}, {"stem_stride", e.stem_stride},
              {"block_strides", e.block_strides}, {"hidden", e.hidden}, {"z_dim", e.z_dim}};
}

inline EncoderSpec encoder_from_json(const Json& j) {
  reject_unknown(j, {"stem_kernel", "stem_stride", "block_strides", "hidden", "z_dim"},
                 "model.encoder");
  EncoderSpec e;
  get(j, "stem_kernel", e.stem_kernel);
  get(j, "stem_stride", e.stem_stride);
  get(j, "block_strides", e.block_strides);
  get(j, "hidden", e.hidden);
  get(j, "z_dim", e.z_dim);
  return e;
}

inline Json decoder_to_json(const DecoderSpec& d) {
  return Json{{"n_blocks", d.n_blocks},     {"n_heads", d.n_heads},
              {"attn_dim", d.attn_dim},     {"ff_mult", d.ff_mult},
              {"conv_kernel", d.conv_kernel}, {"prenet_dims", d.prenet_dims},
              {"prenet_kernel", d.prenet_kernel}};
}

inline DecoderSpec decoder_from_json(const Json& j) {
  reject_unknown(j, {"n_blocks", "n_heads", "attn_dim", "ff_mult", "conv_kernel", "prenet_dims",
                     "prenet_kernel"},
                 "model.decoder");
  DecoderSpec d;
  get(j, "n_blocks", d.n_blocks);
  get(j, "n_heads", d.n_heads);
  get(j, "attn_dim", d.attn_dim);
  get(j, "ff_mult", d.ff_mult);
  get(j, "conv_kernel", d.conv_kernel);
  get(j, "prenet_dims", d.prenet_dims);
  get(j, "prenet_kernel", d.prenet_kernel);
  return d;
}

inline Json model_to_json(const ModelSpec& m) {
  return Json{{"sample_rate", m.sample_rate}, {"frame_rate", m.frame_rate},
              {"mel_rate", m.mel_rate},       {"n_mels", m.n_mels},
              {"d_ssl", m.d_ssl},             {"k_ssl", m.k_ssl},
              {"encoder", encoder_to_json(m.encoder)},
              {"decoder", decoder_to_json(m.decoder)}};
}

inline ModelSpec model_from_json(const Json& j) {
  reject_unknown(j, {"sample_rate", "frame_rate", "mel_rate", "n_mels", "d_ssl", "k_ssl",
                     "encoder", "decoder"},
                 "model");
  ModelSpec m;
  get(j, "sample_rate", m.sample_rate);
  get(j, "frame_rate", m.frame_rate);
  get(j, "mel_rate", m.mel_rate);
  get(j, "n_mels", m.n_mels);
  get(j, "d_ssl", m.d_ssl);
  get(j, "k_ssl", m.k_ssl);
  if (j.contains("encoder")) m.encoder = encoder_from_json(j.at("encoder"));
  if (j.contains("decoder")) m.decoder = decoder_from_json(j.at("decoder"));
  return m;
}

}  // namespace cfgio

inline Json train_config_to_json(const TrainConfig& c) {
  Json j;
  j["stage"] = c.stage;
  j["seed"] = c.seed;
  j["model"] = cfgio::model_to_json(c.model);
  j["data"] = Json{{"min_duration_s", c.data.min_duration_s},
                   {"perturb", c.data.perturb},
                   {"beta", {c.data.beta.lo, c.data.beta.hi}},
                   {"ssl_provider", c.data.ssl_provider},
                   {"ssl_layer", c.data.ssl_layer},
                   {"ssl_feature_dir", c.data.ssl_feature_dir},
                   {"ssl_tokenizer_path", c.data.ssl_tokenizer_path}};
  j["loss"] = Json{{"recon", c.loss.recon},
                   {"kl", c.loss.kl},
                   {"idx", c.loss.idx},
                   {"cmt", c.loss.cmt},
                   {"kl_free_bits", c.loss.kl_free_bits},
                   {"use_idx", c.use_idx_loss}};
  j["optim"] = Json{{"lr", c.optim.lr},
                    {"beta1", c.optim.beta1},
                    {"beta2", c.optim.beta2},
                    {"eps", c.optim.eps},
                    {"warmup_steps", c.optim.warmup_steps},
                    {"clip_norm", c.optim.clip_norm}};
  j["quantizer"] = Json{{"vocab_size", c.quantizer.vocab_size},
                        {"gamma", c.quantizer.gamma},
                        {"expire_gate_steps", c.quantizer.expire_gate_steps},
                        {"expire_threshold_scale", c.quantizer.expire_threshold_scale},
                        {"kmeans_frames_fraction", c.quantizer.kmeans_frames_fraction},
                        {"kmeans_frames_cap", c.quantizer.kmeans_frames_cap},
                        {"init_codebook_path", c.quantizer.init_codebook_path}};
  j["train"] = Json{{"epochs", c.train.epochs},
                    {"checkpoint_every_epochs", c.train.checkpoint_every_epochs},
                    {"resume_from", c.train.resume_from},
                    {"skip_stage1", c.train.skip_stage1}};
  return j;
}

inline TrainConfig train_config_from_json(const Json& j) {
  cfgio::reject_unknown(j, {"stage", "seed", "model", "data", "loss", "optim", "quantizer",
                            "train"},
                        "config root");
  TrainConfig c;
  cfgio::get(j, "stage", c.stage);
  cfgio::get(j, "seed", c.seed);
  if (j.contains("model")) c.model = cfgio::model_from_json(j.at("model"));
  if (j.contains("data")) {
    const Json& d = j.at("data");
    cfgio::reject_unknown(d, {"min_duration_s", "perturb", "beta", "ssl_provider", "ssl_layer",
                              "ssl_feature_dir", "ssl_tokenizer_path"},
                          "data");
    cfgio::get(d, "min_duration_s", c.data.min_duration_s);
    cfgio::get(d, "perturb", c.data.perturb);
    if (d.contains("beta")) {
      std::vector<double> b = d.at("beta").get<std::vector<double>>();
      if (b.size() != 2) throw ConfigError("data.beta must be [lo, hi]");
      c.data.beta = BetaInterval{b[0], b[1]};
    }
    cfgio::get(d, "ssl_provider", c.data.ssl_provider);
    cfgio::get(d, "ssl_layer", c.data.ssl_layer);
    cfgio::get(d, "ssl_feature_dir", c.data.ssl_feature_dir);
    cfgio::get(d, "ssl_tokenizer_path", c.data.ssl_tokenizer_path);
  }
  if (j.contains("loss")) {
    const Json& l = j.at("loss");
    cfgio::reject_unknown(l, {"recon", "kl", "idx", "cmt", "kl_free_bits", "use_idx"}, "loss");
    cfgio::get(l, "recon", c.loss.recon);
    cfgio::get(l, "kl", c.loss.kl);
    cfgio::get(l, "idx", c.loss.idx);
    cfgio::get(l, "cmt", c.loss.cmt);
    cfgio::get(l, "kl_free_bits", c.loss.kl_free_bits);
    cfgio::get(l, "use_idx", c.use_idx_loss);
  }
  if (j.contains("optim")) {
    const Json& o = j.at("optim");
    cfgio::reject_unknown(o, {"lr", "beta1", "beta2", "eps", "warmup_steps", "clip_norm"},
                          "optim");
    cfgio::get(o, "lr", c.optim.lr);
    cfgio::get(o, "beta1", c.optim.beta1);
    cfgio::get(o, "beta2", c.optim.beta2);
    cfgio::get(o, "eps", c.optim.eps);
    cfgio::get(o, "warmup_steps", c.optim.warmup_steps);
    cfgio::get(o, "clip_norm", c.optim.clip_norm);
  }
  if (j.contains("quantizer")) {
    const Json& q = j.at("quantizer");
    cfgio::reject_unknown(q, {"vocab_size", "gamma", "expire_gate_steps",
                              "expire_threshold_scale", "kmeans_frames_fraction",
                              "kmeans_frames_cap", "init_codebook_path"},
                          "quantizer");
    cfgio::get(q, "vocab_size", c.quantizer.vocab_size);
    cfgio::get(q, "gamma", c.quantizer.gamma);
    cfgio::get(q, "expire_gate_steps", c.quantizer.expire_gate_steps);
    cfgio::get(q, "expire_threshold_scale", c.quantizer.expire_threshold_scale);
    cfgio::get(q, "kmeans_frames_fraction", c.quantizer.kmeans_frames_fraction);
    cfgio::get(q, "kmeans_frames_cap", c.quantizer.kmeans_frames_cap);
    cfgio::get(q, "init_codebook_path", c.quantizer.init_codebook_path);
  }
  if (j.contains("train")) {
    const Json& t = j.at("train");
    cfgio::reject_unknown(t, {"epochs", "checkpoint_every_epochs", "resume_from", "skip_stage1"},
                          "train");
    cfgio::get(t, "epochs", c.train.epochs);
    cfgio::get(t, "checkpoint_every_epochs", c.train.checkpoint_every_epochs);
    cfgio::get(t, "resume_from", c.train.resume_from);
    cfgio::get(t, "skip_stage1", c.train.skip_stage1);
  }
  c.validate();
  return c;
}

inline TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path.string());
  Json j;
  try {
    f >> j;
  } catch (const Json::exception& e) {
    throw ConfigError("config parse failure in " + path.string() + ": " + e.what());
  }
  return train_config_from_json(j);
}

inline void save_train_config(const std::filesystem::path& path, const TrainConfig& c) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write config: " + path.string());
  f << train_config_to_json(c).dump(2) << "\n";
}

/// Mel analysis settings implied by a model spec.
inline MelConfig mel_config_for(const ModelSpec& m) {
  MelConfig mc;
  mc.sample_rate = m.sample_rate;
  mc.frame_rate = m.mel_rate;
  mc.n_mels = m.n_mels;
  return mc;
}

}  // namespace lsc
