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

#include <numeric>
#include <string>
#include <vector>

#include "lscodec/autodiff.hpp"
#include "lscodec/common.hpp"
#include "lscodec/layers.hpp"
#include "lscodec/wave.hpp"

namespace lsc {

/// Convolutional encoder geometry. The stem plus the per-block strides must
/// multiply to sample_rate / frame_rate so one latent frame covers exactly
/// one token period.
struct EncoderSpec {
  int stem_kernel = 15;
  int stem_stride = 4;
  std::vector<int> block_strides = {10, 12};
  int hidden = 64;
  int z_dim = 16;

  int stride_product() const {
    int p = stem_stride;
    for (int s : block_strides) p *= s;
    return p;
  }
};

/// Conformer decoder geometry.
struct DecoderSpec {
  int n_blocks = 2;
  int n_heads = 2;
  int attn_dim = 64;
  int ff_mult = 2;
  int conv_kernel = 7;
  std::vector<int> prenet_dims = {64, 64};
  int prenet_kernel = 3;
};

/// Full model geometry plus the data-rate constants it is wired for.
struct ModelSpec {
  int sample_rate = 24000;
  int frame_rate = 50;  // token rate in Hz, 50 or 25
  int mel_rate = 50;    // target feature rate in Hz
  int n_mels = 80;
  int d_ssl = 64;
  int k_ssl = 64;
  EncoderSpec encoder;
  DecoderSpec decoder;

  int repeat_factor() const { return mel_rate / frame_rate; }
  int samples_per_token() const { return sample_rate / frame_rate; }

  void validate() const {
    check_arg(sample_rate > 0 && frame_rate > 0 && mel_rate > 0, "rates must be positive");
    check_arg(mel_rate % frame_rate == 0, "feature rate must be a multiple of the token rate");
    check_arg(sample_rate % frame_rate == 0, "sample rate must be a multiple of the token rate");
    check_arg(encoder.stride_product() == samples_per_token(),
              "encoder stride product " + std::to_string(encoder.stride_product()) +
                  " does not reach the token period " + std::to_string(samples_per_token()));
    check_arg(encoder.z_dim > 0 && encoder.hidden > 0, "encoder dims must be positive");
    check_arg(decoder.attn_dim % decoder.n_heads == 0,
              "attention dim must divide by head count");
    check_arg(n_mels > 0 && d_ssl > 0 && k_ssl > 1, "feature dims must be positive");
  }

  /// Small configuration every test and walkthrough trains in minutes.
  static ModelSpec desk_default() { return ModelSpec{}; }

  /// Dimensions of the published 50 Hz variant. Shipped for shape and
  /// parameter-count checks; training it needs corpus-scale data.
  static ModelSpec paper_scale_50hz() {
    ModelSpec m;
    m.frame_rate = 50;
    m.d_ssl = 1024;
    m.k_ssl = 2048;
    m.encoder.stem_kernel = 7;
    m.encoder.stem_stride = 1;
    m.encoder.block_strides = {2, 2, 2, 2, 2, 3, 5, 1, 1, 1, 1};
    m.encoder.hidden = 512;
    m.encoder.z_dim = 64;
    m.decoder.n_blocks = 2;
    m.decoder.n_heads = 2;
    m.decoder.attn_dim = 184;
    m.decoder.ff_mult = 4;
    m.decoder.prenet_dims = {128, 256, 512, 512};
    return m;
  }

  /// 25 Hz variant: one extra encoder block doubles the stride product and
  /// the decoder repeats every latent twice to restore 50 Hz outputs.
  static ModelSpec paper_scale_25hz() {
    ModelSpec m = paper_scale_50hz();
    m.frame_rate = 25;
    m.encoder.block_strides = {2, 2, 2, 2, 2, 2, 3, 5, 1, 1, 1, 1};
    return m;
  }
};

/// Gaussian posterior handles on the current tape.
template <typename Real>
struct PosteriorVars {
  Var mu;
  Var log_var;
};

/// Decoder head handles on the current tape.
template <typename Real>
struct DecoderVars {
  Var mel_pred;
  Var ssl_logits;
};

/// Encoder, prompt prenet, Conformer decoder, and the two prediction heads,
/// owning all parameters. Forward methods build onto a caller-supplied tape
/// so training composes losses and inference just reads values.
template <typename Real>
class Model {
 public:
  Model(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)), params_(seed) {
    spec_.validate();
    build();
  }

  const ModelSpec& spec() const { return spec_; }
  ParamStore<Real>& params() { return params_; }
  const ParamStore<Real>& params() const { return params_; }

  int min_input_samples() const { return spec_.encoder.stride_product(); }

  /// Waveform to per-frame Gaussian posteriors. T = floor(len / stride
  /// product); log-variance is clamped to [-10, 10].
  PosteriorVars<Real> encode(Tape<Real>& t, const Waveform& wave) const {
    wave.validate();
    check_arg(wave.sample_rate == spec_.sample_rate,
              "encoder expects " + std::to_string(spec_.sample_rate) + " Hz input");
    if (static_cast<int>(wave.size()) < min_input_samples())
      throw InvalidArgumentError("input too short to encode: need at least " +
                                 std::to_string(min_input_samples()) + " samples, got " +
                                 std::to_string(wave.size()));
    MatX<Real> x(static_cast<Eigen::Index>(wave.size()), 1);
    for (std::size_t i = 0; i < wave.size(); ++i)
      x(static_cast<Eigen::Index>(i), 0) = static_cast<Real>(wave.samples[i]);
    return encode_frames(t, t.constant(std::move(x)));
  }

  /// Same encoder on an already materialized (T x 1) sample matrix node.
  PosteriorVars<Real> encode_frames(Tape<Real>& t, Var x) const {
    Var h = t.silu(stem_.forward(t, x));
    for (std::size_t i = 0; i < enc_blocks_.size(); ++i) {
      const auto& blk = enc_blocks_[i];
      const int s = spec_.encoder.block_strides[i];
      Var y = blk.conv_refine.forward(t, t.silu(blk.conv_stride.forward(t, h)));
      Var skip = s == 1 ? h : t.subsample_rows(h, s, s / 2);
      h = blk.norm.forward(t, t.add(y, skip));
    }
    Var out = enc_head_.forward(t, h);
    const int z = spec_.encoder.z_dim;
    PosteriorVars<Real> post;
    post.mu = t.slice_cols(out, 0, z);
    post.log_var = t.clamp(t.slice_cols(out, z, z), Real(-10), Real(10));
    return post;
  }

  /// Reparameterized draw z = mu + exp(log_var / 2) * noise. Pass zero noise
  /// for the deterministic mu path.
  Var sample_posterior(Tape<Real>& t, const PosteriorVars<Real>& post,
                       const MatX<Real>& noise) const {
    const auto& mu = t.value(post.mu);
    check_arg(noise.rows() == mu.rows() && noise.cols() == mu.cols(),
              "noise shape must match the posterior");
    Var sigma = t.exp_act(t.scale(post.log_var, Real(0.5)));
    return t.add(post.mu, t.cmul(sigma, t.constant(noise)));
  }

  /// Latents plus prompt features to mel and SSL-index predictions at the
  /// feature rate. Latents at a reduced token rate are repeated first. The
  /// prompt memory never receives positional encoding, so attention over it
  /// depends only on frame content.
  DecoderVars<Real> decode(Tape<Real>& t, Var latents, const MatX<Real>& prompt_feats) const {
    check_arg(prompt_feats.rows() > 0, "prompt features must be nonempty");
    check_arg(prompt_feats.cols() == spec_.d_ssl, "prompt feature dimension mismatch");
    Var z = latents;
    if (spec_.repeat_factor() > 1) z = t.repeat_rows(z, spec_.repeat_factor());
    Var x = in_proj_.forward(t, z);
    x = t.add(x, t.constant(layers::sinusoidal_positions<Real>(t.value(x).rows(),
                                                               spec_.decoder.attn_dim)));
    Var memory = prenet_.forward(t, t.constant(prompt_feats));
    for (const auto& blk : dec_blocks_) x = blk.forward(t, x, memory);
    DecoderVars<Real> out;
    out.mel_pred = mel_head_.forward(t, x);
    out.ssl_logits = ssl_head_.forward(t, x);
    return out;
  }

 private:
  struct EncBlock {
    layers::Conv1d<Real> conv_stride;
    layers::Conv1d<Real> conv_refine;
    layers::LayerNorm<Real> norm;
  };

  void build() {
    const auto& e = spec_.encoder;
    stem_ = layers::Conv1d<Real>(params_, "enc.stem", 1, e.hidden, e.stem_kernel, e.stem_stride);
    for (std::size_t i = 0; i < e.block_strides.size(); ++i) {
      const int s = e.block_strides[i];
      EncBlock blk;
      const std::string base = "enc.blk" + std::to_string(i);
      blk.conv_stride = layers::Conv1d<Real>(params_, base + ".c1", e.hidden, e.hidden,
                                             s == 1 ? 3 : 2 * s + 1, s);
      blk.conv_refine = layers::Conv1d<Real>(params_, base + ".c2", e.hidden, e.hidden, 3, 1);
      blk.norm = layers::LayerNorm<Real>(params_, base + ".ln", e.hidden);
      enc_blocks_.push_back(std::move(blk));
    }
    enc_head_ = layers::Linear<Real>(params_, "enc.head", e.hidden, 2 * e.z_dim);

    const auto& d = spec_.decoder;
    in_proj_ = layers::Linear<Real>(params_, "dec.inproj", e.z_dim, d.attn_dim);
    prenet_ = layers::PromptPrenet<Real>(params_, "prenet", spec_.d_ssl, d.prenet_dims, d.attn_dim,
                                         d.prenet_kernel);
    for (int i = 0; i < d.n_blocks; ++i)
      dec_blocks_.emplace_back(params_, "dec.blk" + std::to_string(i), d.attn_dim, d.n_heads,
                               d.ff_mult, d.conv_kernel);
    mel_head_ = layers::Linear<Real>(params_, "dec.mel", d.attn_dim, spec_.n_mels);
    ssl_head_ = layers::Linear<Real>(params_, "dec.ssl", d.attn_dim, spec_.k_ssl);
  }

  ModelSpec spec_;
  ParamStore<Real> params_;
  layers::Conv1d<Real> stem_;
  std::vector<EncBlock> enc_blocks_;
  layers::Linear<Real> enc_head_;
  layers::Linear<Real> in_proj_;
  layers::PromptPrenet<Real> prenet_;
  std::vector<layers::ConformerBlock<Real>> dec_blocks_;
  layers::Linear<Real> mel_head_;
  layers::Linear<Real> ssl_head_;
};

}  // namespace lsc
