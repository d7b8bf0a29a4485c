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

#ifndef LSCODEC_PROBE_HPP
#define LSCODEC_PROBE_HPP

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "lscodec/autodiff.hpp"
#include "lscodec/common.hpp"
#include "lscodec/layers.hpp"
#include "lscodec/optim.hpp"
#include "lscodec/rng.hpp"

namespace lsc {

/// One utterance of probe input: a frame sequence of features (codec code
/// vectors, latents, or raw mel) and the true speaker label.
struct ProbeExample {
  std::string utterance_id;
  MatD features;  // T x D
  int speaker_index = 0;
};

struct ProbeDataset {
  std::vector<ProbeExample> examples;
  std::vector<std::string> speaker_ids;

  int num_speakers() const { return static_cast<int>(speaker_ids.size()); }

  void validate() const {
    if (speaker_ids.size() < 2) {
      throw InvalidArgumentError("speaker probe needs at least 2 speakers, got " +
                                 std::to_string(speaker_ids.size()));
    }
    check_arg(!examples.empty(), "speaker probe needs at least one example");
    const Eigen::Index dim = examples.front().features.cols();
    for (const ProbeExample& e : examples) {
      check_arg(e.features.rows() >= 1, "probe example has no frames: " + e.utterance_id);
      check_arg(e.features.cols() == dim, "probe feature dimension mismatch: " + e.utterance_id);
      check_arg(e.speaker_index >= 0 && e.speaker_index < num_speakers(),
                "probe speaker index out of range: " + e.utterance_id);
    }
  }
};

struct ProbeConfig {
  int hidden = 32;
  int epochs = 30;
  double learning_rate = 1e-2;
  double val_fraction = 0.1;
  std::uint64_t seed = 7;

  void validate() const {
    check_arg(hidden >= 1 && epochs >= 1, "ProbeConfig: hidden and epochs must be positive");
    check_arg(val_fraction > 0 && val_fraction < 1, "ProbeConfig: val_fraction must be in (0,1)");
  }
};

struct ProbeEpochPoint {
  int epoch = 0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

struct ProbeResult {
  std::vector<ProbeEpochPoint> curve;
  /// Mean validation accuracy over the last five epochs; the headline number.
  double final_val_accuracy = 0.0;
  std::vector<std::size_t> val_indices;
};

/// Splits utterance-disjoint: per speaker, a seeded shuffle holds out
/// roughly val_fraction of that speaker's utterances (at least one) for
/// validation, so every validated speaker was also seen in training.
/// Speakers with a single utterance go to training only.
inline std::vector<std::size_t> probe_val_split(const ProbeDataset& data,
                                                const ProbeConfig& cfg) {
  std::vector<std::vector<std::size_t>> by_speaker(
      static_cast<std::size_t>(data.num_speakers()));
  for (std::size_t i = 0; i < data.examples.size(); ++i) {
    by_speaker[static_cast<std::size_t>(data.examples[i].speaker_index)].push_back(i);
  }
  std::vector<std::size_t> val;
  Rng rng(derive_seed(cfg.seed, "probe-split", 0));
  for (auto& idxs : by_speaker) {
    if (idxs.size() < 2) {
      continue;
    }
    for (std::size_t i = idxs.size(); i > 1; --i) {
      std::swap(idxs[i - 1], idxs[static_cast<std::size_t>(rng.uniform_int(
                                 static_cast<int>(i)))]);
    }
    std::size_t hold = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(cfg.val_fraction *
                                                 static_cast<double>(idxs.size()))));
    hold = std::min(hold, idxs.size() - 1);
    val.insert(val.end(), idxs.begin(), idxs.begin() + static_cast<long>(hold));
  }
  std::sort(val.begin(), val.end());
  return val;
}

namespace detail {

/// Frame encoder, statistics pooling (mean and standard deviation across
/// time), then a linear classifier. Returns 1 x num_speakers logits.
template <typename Real>
Var probe_forward(Tape<Real>& t, const layers::Linear<Real>& enc,
                                       const layers::Linear<Real>& cls, const MatX<Real>& feats) {
  const Eigen::Index frames = feats.rows();
  Var x = t.constant(feats);
  Var h = t.silu(enc.forward(t, x));
  MatX<Real> avg(1, frames);
  avg.setConstant(Real(1) / static_cast<Real>(frames));
  Var w = t.constant(avg);
  Var mean = t.matmul(w, h);
  Var m2 = t.matmul(w, t.cmul(h, h));
  Var variance = t.sub(m2, t.cmul(mean, mean));
  Var stdev = t.sqrt_act(variance, Real(1e-6));
  Var pooled = t.concat_cols(mean, stdev);
  return cls.forward(t, pooled);
}

}  // namespace detail

/// Trains the probe and reports accuracy per epoch. Deterministic for a
/// fixed dataset, config, and seed.
template <typename Real = double>
ProbeResult train_probe(const ProbeDataset& data, const ProbeConfig& cfg) {
  data.validate();
  cfg.validate();

  const Eigen::Index dim = data.examples.front().features.cols();
  ParamStore<Real> ps(derive_seed(cfg.seed, "probe-params", 0));
  layers::Linear<Real> enc(ps, "probe.enc", static_cast<int>(dim), cfg.hidden);
  layers::Linear<Real> cls(ps, "probe.cls", 2 * cfg.hidden, data.num_speakers());

  AdamConfig ocfg;
  ocfg.lr = cfg.learning_rate;
  ocfg.warmup_steps = 1;
  Adam<Real> opt(ps, ocfg);

  ProbeResult result;
  result.val_indices = probe_val_split(data, cfg);
  std::vector<std::uint8_t> is_val(data.examples.size(), 0);
  for (std::size_t i : result.val_indices) {
    is_val[i] = 1;
  }
  std::vector<std::size_t> train_idx;
  for (std::size_t i = 0; i < data.examples.size(); ++i) {
    if (!is_val[i]) {
      train_idx.push_back(i);
    }
  }
  check_arg(!train_idx.empty() && !result.val_indices.empty(),
            "probe split left train or validation empty");

  const auto predict = [&](const MatD& feats) {
    Tape<Real> t;
    auto logits = detail::probe_forward<Real>(t, enc, cls, feats.template cast<Real>());
    Eigen::Index arg = 0;
    t.value(logits).row(0).maxCoeff(&arg);
    return static_cast<int>(arg);
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, "probe-shuffle", static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> order = train_idx;
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1],
                order[static_cast<std::size_t>(shuffle_rng.uniform_int(static_cast<int>(i)))]);
    }

    std::size_t train_hits = 0;
    for (std::size_t i : order) {
      const ProbeExample& ex = data.examples[i];
      Tape<Real> t;
      auto logits =
          detail::probe_forward<Real>(t, enc, cls, ex.features.template cast<Real>());
      Eigen::Index arg = 0;
      t.value(logits).row(0).maxCoeff(&arg);
      if (static_cast<int>(arg) == ex.speaker_index) {
        ++train_hits;
      }
      auto loss = t.cross_entropy(logits, std::vector<int>{ex.speaker_index});
      t.backward(loss);
      opt.step();
    }

    std::size_t val_hits = 0;
    for (std::size_t i : result.val_indices) {
      if (predict(data.examples[i].features) == data.examples[i].speaker_index) {
        ++val_hits;
      }
    }

    ProbeEpochPoint point;
    point.epoch = epoch;
    point.train_accuracy = static_cast<double>(train_hits) / static_cast<double>(order.size());
    point.val_accuracy =
        static_cast<double>(val_hits) / static_cast<double>(result.val_indices.size());
    result.curve.push_back(point);
  }

  const std::size_t tail = std::min<std::size_t>(5, result.curve.size());
  double acc = 0.0;
  for (std::size_t i = result.curve.size() - tail; i < result.curve.size(); ++i) {
    acc += result.curve[i].val_accuracy;
  }
  result.final_val_accuracy = acc / static_cast<double>(tail);
  return result;
}

inline std::string probe_csv(const ProbeResult& r) {
  std::ostringstream out;
  out << "epoch,train_acc,val_acc\n";
  for (const ProbeEpochPoint& p : r.curve) {
    out << p.epoch << "," << p.train_accuracy << "," << p.val_accuracy << "\n";
  }
  return out.str();
}

}  // namespace lsc

#endif  // LSCODEC_PROBE_HPP
