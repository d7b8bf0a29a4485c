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

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lscodec/autodiff.hpp"
#include "lscodec/common.hpp"
#include "lscodec/rng.hpp"

namespace lsc {

/// One named trainable tensor plus its gradient accumulator.
template <typename Real>
struct Param {
  std::string name;
  MatX<Real> value;
  MatX<Real> grad;
};

/// Owns every parameter of a model. Names are unique and stable so the store
/// doubles as the checkpoint manifest. Creation order is preserved for
/// deterministic iteration.
template <typename Real>
class ParamStore {
 public:
  enum class Init { kZeros, kOnes, kGlorotUniform };

  explicit ParamStore(std::uint64_t seed) : seed_(seed) {}

  Param<Real>* create(const std::string& name, Eigen::Index rows, Eigen::Index cols, Init init) {
    check_arg(by_name_.find(name) == by_name_.end(), "duplicate parameter name: " + name);
    auto p = std::make_unique<Param<Real>>();
    p->name = name;
    p->value.resize(rows, cols);
    p->grad = MatX<Real>::Zero(rows, cols);
    switch (init) {
      case Init::kZeros:
        p->value.setZero();
        break;
      case Init::kOnes:
        p->value.setOnes();
        break;
      case Init::kGlorotUniform: {
        Rng rng(derive_seed(seed_, name, 0x9a7a));
        const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
        for (Eigen::Index r = 0; r < rows; ++r)
          for (Eigen::Index c = 0; c < cols; ++c)
            p->value(r, c) = static_cast<Real>(rng.uniform(-limit, limit));
        break;
      }
    }
    Param<Real>* raw = p.get();
    by_name_[name] = raw;
    params_.push_back(std::move(p));
    return raw;
  }

  Param<Real>* find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
  }

  const std::vector<std::unique_ptr<Param<Real>>>& all() const { return params_; }
  std::size_t count() const { return params_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

  void zero_grads() {
    for (auto& p : params_) p->grad.setZero();
  }

  double grad_norm() const {
    double sq = 0;
    for (const auto& p : params_) sq += static_cast<double>(p->grad.squaredNorm());
    return std::sqrt(sq);
  }

  /// Scales every gradient so the global norm is at most max_norm.
  void clip_grads(double max_norm) {
    const double norm = grad_norm();
    if (norm <= max_norm || norm == 0.0) return;
    const Real s = static_cast<Real>(max_norm / norm);
    for (auto& p : params_) p->grad *= s;
  }

 private:
  std::uint64_t seed_;
  std::vector<std::unique_ptr<Param<Real>>> params_;
  std::map<std::string, Param<Real>*> by_name_;
};

namespace layers {

/// y = x W + b with W stored (in x out).
template <typename Real>
struct Linear {
  Param<Real>* w = nullptr;
  Param<Real>* b = nullptr;

  Linear() = default;
  Linear(ParamStore<Real>& ps, const std::string& name, int in, int out) {
    w = ps.create(name + ".w", in, out, ParamStore<Real>::Init::kGlorotUniform);
    b = ps.create(name + ".b", 1, out, ParamStore<Real>::Init::kZeros);
  }

  Var forward(Tape<Real>& t, Var x) const {
    return t.add_rowvec(t.matmul(x, t.leaf(w->value, &w->grad)), t.leaf(b->value, &b->grad));
  }
};

/// Time convolution producing floor(T/stride) frames.
template <typename Real>
struct Conv1d {
  Param<Real>* w = nullptr;
  Param<Real>* b = nullptr;
  int kernel = 0;
  int stride = 1;

  Conv1d() = default;
  Conv1d(ParamStore<Real>& ps, const std::string& name, int cin, int cout, int k, int s)
      : kernel(k), stride(s) {
    w = ps.create(name + ".w", cout, static_cast<Eigen::Index>(cin) * k,
                  ParamStore<Real>::Init::kGlorotUniform);
    b = ps.create(name + ".b", 1, cout, ParamStore<Real>::Init::kZeros);
  }

  Var forward(Tape<Real>& t, Var x) const {
    return t.conv1d(x, t.leaf(w->value, &w->grad), t.leaf(b->value, &b->grad), kernel, stride);
  }
};

template <typename Real>
struct LayerNorm {
  Param<Real>* gamma = nullptr;
  Param<Real>* beta = nullptr;

  LayerNorm() = default;
  LayerNorm(ParamStore<Real>& ps, const std::string& name, int dim) {
    gamma = ps.create(name + ".g", 1, dim, ParamStore<Real>::Init::kOnes);
    beta = ps.create(name + ".b", 1, dim, ParamStore<Real>::Init::kZeros);
  }

  Var forward(Tape<Real>& t, Var x) const {
    return t.layer_norm(x, t.leaf(gamma->value, &gamma->grad), t.leaf(beta->value, &beta->grad));
  }
};

/// Two-layer position-wise feed forward with swish.
template <typename Real>
struct FeedForward {
  LayerNorm<Real> norm;
  Linear<Real> in;
  Linear<Real> out;

  FeedForward() = default;
  FeedForward(ParamStore<Real>& ps, const std::string& name, int dim, int mult) {
    norm = LayerNorm<Real>(ps, name + ".ln", dim);
    in = Linear<Real>(ps, name + ".in", dim, dim * mult);
    out = Linear<Real>(ps, name + ".out", dim * mult, dim);
  }

  Var forward(Tape<Real>& t, Var x) const {
    return out.forward(t, t.silu(in.forward(t, norm.forward(t, x))));
  }
};

/// Scaled-dot-product attention with n_heads column-partitioned heads.
/// Queries come from `x`; keys/values from `memory` (pass x for
/// self-attention). No positional signal is injected here, so attention over
/// the memory is order-agnostic unless the memory itself carries positions.
template <typename Real>
struct MultiHeadAttention {
  LayerNorm<Real> norm;
  Linear<Real> wq, wk, wv, wo;
  int n_heads = 1;
  int dim = 0;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore<Real>& ps, const std::string& name, int d, int heads, int mem_dim)
      : n_heads(heads), dim(d) {
    check_arg(d % heads == 0, "attention dim must divide by head count");
    norm = LayerNorm<Real>(ps, name + ".ln", d);
    wq = Linear<Real>(ps, name + ".q", d, d);
    wk = Linear<Real>(ps, name + ".k", mem_dim, d);
    wv = Linear<Real>(ps, name + ".v", mem_dim, d);
    wo = Linear<Real>(ps, name + ".o", d, d);
  }

  Var forward(Tape<Real>& t, Var x, Var memory) const {
    Var xq = norm.forward(t, x);
    Var q = wq.forward(t, xq);
    Var k = wk.forward(t, memory);
    Var v = wv.forward(t, memory);
    const int dh = dim / n_heads;
    const Real inv_sqrt = Real(1) / std::sqrt(static_cast<Real>(dh));
    Var merged;
    for (int h = 0; h < n_heads; ++h) {
      Var qh = t.slice_cols(q, h * dh, dh);
      Var kh = t.slice_cols(k, h * dh, dh);
      Var vh = t.slice_cols(v, h * dh, dh);
      Var scores = t.scale(t.matmul_nt(qh, kh), inv_sqrt);
      Var attn = t.matmul(t.softmax_rows(scores), vh);
      merged = h == 0 ? attn : t.concat_cols(merged, attn);
    }
    return wo.forward(t, merged);
  }
};

/// Conformer convolution module: pointwise expansion, gated linear unit,
/// depthwise time convolution, layer norm, swish, pointwise projection.
template <typename Real>
struct ConvModule {
  LayerNorm<Real> norm;
  Linear<Real> expand;
  Param<Real>* dw = nullptr;
  LayerNorm<Real> dw_norm;
  Linear<Real> project;
  int kernel = 7;
  int dim = 0;

  ConvModule() = default;
  ConvModule(ParamStore<Real>& ps, const std::string& name, int d, int k) : kernel(k), dim(d) {
    norm = LayerNorm<Real>(ps, name + ".ln", d);
    expand = Linear<Real>(ps, name + ".pw1", d, 2 * d);
    dw = ps.create(name + ".dw", d, k, ParamStore<Real>::Init::kGlorotUniform);
    dw_norm = LayerNorm<Real>(ps, name + ".dwln", d);
    project = Linear<Real>(ps, name + ".pw2", d, d);
  }

  Var forward(Tape<Real>& t, Var x) const {
    Var y = expand.forward(t, norm.forward(t, x));
    Var gated = t.cmul(t.slice_cols(y, 0, dim), t.sigmoid(t.slice_cols(y, dim, dim)));
    Var conv = t.depthwise_conv1d(gated, t.leaf(dw->value, &dw->grad), kernel);
    return project.forward(t, t.silu(dw_norm.forward(t, conv)));
  }
};

/// Conformer block extended with one cross-attention sublayer that reads the
/// prompt memory after self-attention. Half-weighted feed-forwards sandwich
/// the block in the usual macaron arrangement.
template <typename Real>
struct ConformerBlock {
  FeedForward<Real> ff1;
  MultiHeadAttention<Real> self_attn;
  MultiHeadAttention<Real> cross_attn;
  ConvModule<Real> conv;
  FeedForward<Real> ff2;
  LayerNorm<Real> final_norm;

  ConformerBlock() = default;
  ConformerBlock(ParamStore<Real>& ps, const std::string& name, int d, int heads, int ff_mult,
                 int conv_kernel) {
    ff1 = FeedForward<Real>(ps, name + ".ff1", d, ff_mult);
    self_attn = MultiHeadAttention<Real>(ps, name + ".self", d, heads, d);
    cross_attn = MultiHeadAttention<Real>(ps, name + ".cross", d, heads, d);
    conv = ConvModule<Real>(ps, name + ".conv", d, conv_kernel);
    ff2 = FeedForward<Real>(ps, name + ".ff2", d, ff_mult);
    final_norm = LayerNorm<Real>(ps, name + ".final", d);
  }

  Var forward(Tape<Real>& t, Var x, Var prompt_memory) const {
    x = t.add(x, t.scale(ff1.forward(t, x), Real(0.5)));
    x = t.add(x, self_attn.forward(t, x, x));
    x = t.add(x, cross_attn.forward(t, x, prompt_memory));
    x = t.add(x, conv.forward(t, x));
    x = t.add(x, t.scale(ff2.forward(t, x), Real(0.5)));
    return final_norm.forward(t, x);
  }
};

/// One prompt prenet block: two convolutions around a swish with the skip
/// path scaled by 1/sqrt(2). A kernel-1 configuration keeps every operation
/// frame-local, which makes the whole prenet permutation-equivariant over
/// time (exercised by the position-agnostic attention tests).
template <typename Real>
struct PrenetBlock {
  Conv1d<Real> conv_a;
  Conv1d<Real> conv_b;
  Linear<Real> skip_proj;
  bool project_skip = false;

  PrenetBlock() = default;
  PrenetBlock(ParamStore<Real>& ps, const std::string& name, int cin, int cout, int kernel) {
    conv_a = Conv1d<Real>(ps, name + ".a", cin, cout, kernel, 1);
    conv_b = Conv1d<Real>(ps, name + ".b", cout, cout, kernel, 1);
    project_skip = cin != cout;
    if (project_skip) skip_proj = Linear<Real>(ps, name + ".skip", cin, cout);
  }

  Var forward(Tape<Real>& t, Var x) const {
    Var y = conv_b.forward(t, t.silu(conv_a.forward(t, x)));
    Var skip = project_skip ? skip_proj.forward(t, x) : x;
    const Real inv_sqrt2 = Real(1) / std::sqrt(Real(2));
    return t.add(y, t.scale(skip, inv_sqrt2));
  }
};

/// Prompt prenet: stacked convolutional blocks over the SSL feature sequence
/// followed by a projection into the decoder attention dimension.
template <typename Real>
struct PromptPrenet {
  std::vector<PrenetBlock<Real>> blocks;
  Linear<Real> out_proj;

  PromptPrenet() = default;
  PromptPrenet(ParamStore<Real>& ps, const std::string& name, int in_dim,
               const std::vector<int>& dims, int attn_dim, int kernel) {
    check_arg(!dims.empty(), "prenet needs at least one block");
    int cin = in_dim;
    for (std::size_t i = 0; i < dims.size(); ++i) {
      blocks.emplace_back(ps, name + ".blk" + std::to_string(i), cin, dims[i], kernel);
      cin = dims[i];
    }
    out_proj = Linear<Real>(ps, name + ".proj", cin, attn_dim);
  }

  Var forward(Tape<Real>& t, Var prompt_feats) const {
    Var x = prompt_feats;
    for (const auto& b : blocks) x = b.forward(t, x);
    return out_proj.forward(t, x);
  }
};

/// Standard sinusoidal position encoding, rows are time steps.
template <typename Real>
MatX<Real> sinusoidal_positions(Eigen::Index t_len, Eigen::Index dim) {
  MatX<Real> pe(t_len, dim);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    for (Eigen::Index d = 0; d < dim; ++d) {
      const double angle =
          static_cast<double>(t) /
          std::pow(10000.0, 2.0 * static_cast<double>(d / 2) / static_cast<double>(dim));
      pe(t, d) = static_cast<Real>((d % 2 == 0) ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

}  // namespace layers
}  // namespace lsc
