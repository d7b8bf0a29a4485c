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

#include <array>
#include <cstring>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lscodec/common.hpp"
#include "lscodec/config.hpp"
#include "lscodec/container.hpp"
#include "lscodec/model.hpp"
#include "lscodec/optim.hpp"
#include "lscodec/quantizer.hpp"
#include "lscodec/rng.hpp"

namespace lsc {

// Checkpoint container ("LSCK"): magic, version byte, little-endian u32 JSON
// length, a JSON metadata block (config snapshot, stage tag, RNG state,
// optimizer step, named-tensor table), then the raw tensor payload. Offsets
// in the table index into the payload region.

inline constexpr const char* kStageTagVae = "vae";
inline constexpr const char* kStageTagVqvae = "vqvae";

/// Optional artifacts carried alongside the parameters.
struct CheckpointExtras {
  std::optional<MelNormStats> mel_stats;
  std::optional<MatD> tokenizer_centroids;
  std::optional<Codebook> codebook;
};

/// Deserialized checkpoint. Tensors are held in double precision with their
/// stored dtype remembered; producers with float parameters round-trip
/// exactly because f32 -> f64 -> f32 is the identity.
struct LoadedCheckpoint {
  TrainConfig config;
  std::string stage_tag;
  std::map<std::string, MatD> tensors;
  bool has_rng = false;
  std::array<std::uint64_t, 4> rng_state{};
  bool has_adam = false;
  std::int64_t adam_step = 0;
  CheckpointExtras extras;

  const MatD& tensor(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("checkpoint is missing tensor: " + name);
    return it->second;
  }
  bool has_tensor(const std::string& name) const { return tensors.count(name) != 0; }
};

namespace ckptio {

template <typename Real>
void append_tensor(std::string& blob, Json& table, const std::string& name,
                   const MatX<Real>& m) {
  Json entry;
  entry["name"] = name;
  entry["rows"] = m.rows();
  entry["cols"] = m.cols();
  entry["dtype"] = sizeof(Real) == 4 ? "f32" : "f64";
  entry["offset"] = blob.size();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if constexpr (sizeof(Real) == 4) {
        const float v = static_cast<float>(m(r, c));
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        binio::append_le<std::uint32_t>(blob, bits);
      } else {
        const double v = static_cast<double>(m(r, c));
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        binio::append_le<std::uint64_t>(blob, bits);
      }
    }
  table.push_back(std::move(entry));
}

inline MatD read_tensor(const unsigned char* blob, std::size_t blob_size, const Json& entry,
                        const std::string& origin) {
  const auto rows = entry.at("rows").get<Eigen::Index>();
  const auto cols = entry.at("cols").get<Eigen::Index>();
  const std::string dtype = entry.at("dtype").get<std::string>();
  const auto offset = entry.at("offset").get<std::size_t>();
  const std::size_t elem = dtype == "f32" ? 4 : 8;
  if (dtype != "f32" && dtype != "f64")
    throw FormatError("unknown tensor dtype '" + dtype + "' in " + origin);
  const std::size_t need = offset + elem * static_cast<std::size_t>(rows * cols);
  if (need > blob_size) throw CorruptionError("tensor payload out of range in " + origin);
  MatD m(rows, cols);
  const unsigned char* p = blob + offset;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (elem == 4) {
        const auto bits = binio::read_le<std::uint32_t>(p);
        float v;
        std::memcpy(&v, &bits, 4);
        m(r, c) = v;
      } else {
        const auto bits = binio::read_le<std::uint64_t>(p);
        double v;
        std::memcpy(&v, &bits, 8);
        m(r, c) = v;
      }
      p += elem;
    }
  return m;
}

}  // namespace ckptio

/// Writes model parameters, optional optimizer/RNG state, and extras. Pass
/// opt or rng as nullptr to omit them (export-style checkpoints).
template <typename Real>
void save_checkpoint(const std::filesystem::path& path, const TrainConfig& cfg,
                     const std::string& stage_tag, const Model<Real>& model,
                     const Adam<Real>* opt, const Rng* rng,
                     const CheckpointExtras& extras = {}) {
  Json meta;
  meta["version"] = 1;
  meta["stage"] = stage_tag;
  meta["config"] = train_config_to_json(cfg);
  Json table = Json::array();
  std::string blob;

  for (const auto& p : model.params().all())
    ckptio::append_tensor(blob, table, "param/" + p->name, p->value);

  if (opt != nullptr) {
    meta["adam"] = Json{{"step", opt->step_count()}};
    const auto& all = model.params().all();
    for (std::size_t i = 0; i < all.size(); ++i) {
      ckptio::append_tensor(blob, table, "adam.m/" + all[i]->name, opt->states()[i].m);
      ckptio::append_tensor(blob, table, "adam.v/" + all[i]->name, opt->states()[i].v);
    }
  }
  if (rng != nullptr) {
    const auto st = rng->state();
    meta["rng_state"] = Json::array({st[0], st[1], st[2], st[3]});
  }
  if (extras.mel_stats) {
    ckptio::append_tensor<double>(blob, table, "stats/mel_mean",
                                  extras.mel_stats->mean.transpose());
    ckptio::append_tensor<double>(blob, table, "stats/mel_var",
                                  extras.mel_stats->var.transpose());
  }
  if (extras.tokenizer_centroids)
    ckptio::append_tensor<double>(blob, table, "tokenizer/centroids",
                                  *extras.tokenizer_centroids);
  if (extras.codebook) {
    const Codebook& b = *extras.codebook;
    b.validate();
    meta["codebook"] = Json{{"update_step", b.update_step}, {"gamma", b.gamma}};
    ckptio::append_tensor<double>(blob, table, "codebook/vectors", b.vectors);
    ckptio::append_tensor<double>(blob, table, "codebook/ema_cluster_size",
                                  MatD(b.ema_cluster_size.transpose()));
    ckptio::append_tensor<double>(blob, table, "codebook/ema_embed_sum", b.ema_embed_sum);
  }
  meta["tensors"] = std::move(table);
  meta["blob_bytes"] = blob.size();

  const std::string json_text = meta.dump();
  std::string out;
  out += "LSCK";
  out.push_back(1);
  binio::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(json_text.size()));
  out += json_text;
  out += blob;
  binio::write_file_atomic(path, out);
}

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = binio::read_file(path);
  const std::string origin = path.string();
  if (bytes.size() < 9 || std::memcmp(bytes.data(), "LSCK", 4) != 0)
    throw FormatError("not a checkpoint file: " + origin);
  if (bytes[4] != 1) throw FormatError("unsupported checkpoint version: " + origin);
  const auto json_len = binio::read_le<std::uint32_t>(bytes.data() + 5);
  if (9 + static_cast<std::size_t>(json_len) > bytes.size())
    throw CorruptionError("checkpoint metadata truncated: " + origin);
  Json meta;
  try {
    meta = Json::parse(bytes.begin() + 9, bytes.begin() + 9 + json_len);
  } catch (const Json::exception& e) {
    throw FormatError("checkpoint metadata unreadable (" + std::string(e.what()) + "): " + origin);
  }

  LoadedCheckpoint lc;
  try {
    lc.stage_tag = meta.at("stage").get<std::string>();
    lc.config = train_config_from_json(meta.at("config"));
    const unsigned char* blob = bytes.data() + 9 + json_len;
    const std::size_t blob_size = bytes.size() - 9 - json_len;
    if (meta.at("blob_bytes").get<std::size_t>() != blob_size)
      throw CorruptionError("checkpoint payload size mismatch: " + origin);
    for (const Json& entry : meta.at("tensors"))
      lc.tensors[entry.at("name").get<std::string>()] =
          ckptio::read_tensor(blob, blob_size, entry, origin);
    if (meta.contains("rng_state")) {
      lc.has_rng = true;
      for (int i = 0; i < 4; ++i) lc.rng_state[static_cast<std::size_t>(i)] =
          meta.at("rng_state").at(i).get<std::uint64_t>();
    }
    if (meta.contains("adam")) {
      lc.has_adam = true;
      lc.adam_step = meta.at("adam").at("step").get<std::int64_t>();
    }
    if (lc.has_tensor("stats/mel_mean")) {
      MelNormStats st;
      st.mean = lc.tensor("stats/mel_mean").row(0).transpose();
      st.var = lc.tensor("stats/mel_var").row(0).transpose();
      lc.extras.mel_stats = st;
    }
    if (lc.has_tensor("tokenizer/centroids"))
      lc.extras.tokenizer_centroids = lc.tensor("tokenizer/centroids");
    if (meta.contains("codebook")) {
      Codebook b;
      b.vectors = lc.tensor("codebook/vectors");
      b.ema_cluster_size = lc.tensor("codebook/ema_cluster_size").row(0).transpose();
      b.ema_embed_sum = lc.tensor("codebook/ema_embed_sum");
      b.update_step = meta.at("codebook").at("update_step").get<std::int64_t>();
      b.gamma = meta.at("codebook").at("gamma").get<double>();
      b.validate();
      lc.extras.codebook = std::move(b);
    }
  } catch (const Json::exception& e) {
    throw FormatError("checkpoint metadata incomplete (" + std::string(e.what()) + "): " + origin);
  }
  return lc;
}

/// Rebuilds the model a checkpoint describes and installs its parameters.
template <typename Real>
std::unique_ptr<Model<Real>> model_from_checkpoint(const LoadedCheckpoint& lc) {
  auto model = std::make_unique<Model<Real>>(lc.config.model, lc.config.seed);
  for (const auto& p : model->params().all()) {
    const MatD& t = lc.tensor("param/" + p->name);
    check_arg(t.rows() == p->value.rows() && t.cols() == p->value.cols(),
              "checkpoint tensor shape mismatch for " + p->name);
    p->value = t.cast<Real>();
  }
  return model;
}

/// Restores optimizer moments and step count saved next to the parameters.
template <typename Real>
void restore_adam(const LoadedCheckpoint& lc, const Model<Real>& model, Adam<Real>& opt) {
  check_arg(lc.has_adam, "checkpoint carries no optimizer state");
  opt.set_step_count(lc.adam_step);
  const auto& all = model.params().all();
  for (std::size_t i = 0; i < all.size(); ++i) {
    opt.states()[i].m = lc.tensor("adam.m/" + all[i]->name).template cast<Real>();
    opt.states()[i].v = lc.tensor("adam.v/" + all[i]->name).template cast<Real>();
  }
}

}  // namespace lsc
