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
#include <string>
#include <vector>

#include "lscodec/autodiff.hpp"
#include "lscodec/common.hpp"
#include "lscodec/model.hpp"
#include "lscodec/quantizer.hpp"

namespace lsc {

/// Relative weighting of the objective terms.
struct LossWeights {
  double recon = 60.0;
  double kl = 60.0;
  double idx = 2.0;
  double cmt = 1.0;
  /// Free-bits floor, in nats per latent dimension. Dimensions whose mean KL
  /// sits below the floor get no gradient toward the prior, which keeps the
  /// latent channel alive when the decoder is slow to pick it up. Zero, the
  /// default, is the exact KL objective; short training runs on small
  /// corpora want around 0.25.
  double kl_free_bits = 0.0;
};

/// Tape handles for the assembled objective. Unused terms hold a constant
/// zero so component reporting is uniform across stages and ablations.
struct LossVars {
  Var total;
  Var recon;
  Var kl;
  Var idx;
  Var cmt;
};

/// KL divergence of the diagonal-Gaussian posterior against the standard
/// normal prior: mean over frames of 0.5 * sum_d (mu^2 + var - log var - 1).
///
/// A positive free_bits_per_dim floors each dimension's frame-mean KL at
/// that many nats before summing; floored dimensions contribute no
/// gradient, so the posterior is never squeezed all the way to the prior.
template <typename Real>
Var kl_loss(Tape<Real>& t, const PosteriorVars<Real>& post, double free_bits_per_dim = 0.0) {
  const auto t_len = t.value(post.mu).rows();
  Var mu_sq = t.cmul(post.mu, post.mu);
  Var var = t.exp_act(post.log_var);
  Var inner = t.add_scalar(t.sub(t.add(mu_sq, var), post.log_var), Real(-1));
  if (free_bits_per_dim <= 0.0) {
    return t.scale(t.sum_all(inner), Real(0.5) / static_cast<Real>(t_len));
  }
  const MatX<Real> avg = MatX<Real>::Constant(1, t_len, Real(0.5) / static_cast<Real>(t_len));
  Var per_dim = t.matmul(t.constant(avg), inner);
  Var floored = t.clamp(per_dim, static_cast<Real>(free_bits_per_dim), Real(1e30));
  return t.sum_all(floored);
}

/// Closed-form KL on plain matrices, the reference the tape version and the
/// quadrature oracle are both compared against.
inline double kl_value(const MatD& mu, const MatD& log_var) {
  check_arg(mu.rows() == log_var.rows() && mu.cols() == log_var.cols(),
            "posterior halves must share a shape");
  check_arg(mu.rows() >= 1, "empty posterior");
  const double inner =
      (mu.array().square() + log_var.array().exp() - log_var.array() - 1.0).sum();
  return 0.5 * inner / static_cast<double>(mu.rows());
}

namespace detail {

/// Decoder output frames and target frames may differ by one frame from
/// token-rate flooring. Returns the overlap length, rejecting bigger gaps.
inline int aligned_length(Eigen::Index pred_rows, Eigen::Index target_rows,
                          const std::string& utterance_id) {
  const auto diff = pred_rows > target_rows ? pred_rows - target_rows : target_rows - pred_rows;
  if (diff > 1)
    throw DataAlignmentError("prediction/target length mismatch beyond 1 frame (" +
                             std::to_string(pred_rows) + " vs " + std::to_string(target_rows) +
                             ") for utterance " + utterance_id);
  return static_cast<int>(std::min(pred_rows, target_rows));
}

template <typename Real>
Var trim_rows(Tape<Real>& t, Var x, int len) {
  return t.value(x).rows() == len ? x : t.slice_rows(x, 0, len);
}

}  // namespace detail

/// Stage-1 objective: weighted mel reconstruction, KL, and SSL-index cross
/// entropy. Disabling the index term reports it as exactly zero and keeps it
/// out of every gradient.
///
/// Every component is a per-frame quantity: the KL sums over latent
/// dimensions, so the L1 term sums over mel bins to keep the two on the same
/// footing under equal weights. An element-mean L1 would be weaker by a
/// factor of n_mels and lets the KL term collapse the posterior.
template <typename Real>
LossVars stage1_loss(Tape<Real>& t, const DecoderVars<Real>& out, const MatX<Real>& mel_target,
                     const std::vector<int>& ssl_target, const PosteriorVars<Real>& post,
                     const LossWeights& w, bool use_idx_loss = true,
                     const std::string& utterance_id = "?") {
  const int len = detail::aligned_length(t.value(out.mel_pred).rows(), mel_target.rows(),
                                         utterance_id);
  detail::aligned_length(t.value(out.ssl_logits).rows(),
                         static_cast<Eigen::Index>(ssl_target.size()), utterance_id);
  LossVars lv;
  lv.recon = t.scale(t.l1_loss(detail::trim_rows(t, out.mel_pred, len),
                               mel_target.topRows(len)),
                     static_cast<Real>(mel_target.cols()));
  lv.kl = kl_loss(t, post, w.kl_free_bits);
  if (use_idx_loss) {
    std::vector<int> tgt(ssl_target.begin(), ssl_target.begin() + len);
    lv.idx = t.cross_entropy(detail::trim_rows(t, out.ssl_logits, len), tgt);
  } else {
    lv.idx = t.constant(MatX<Real>::Zero(1, 1));
  }
  lv.cmt = t.constant(MatX<Real>::Zero(1, 1));
  lv.total = t.add(t.add(t.scale(lv.recon, static_cast<Real>(w.recon)),
                         t.scale(lv.kl, static_cast<Real>(w.kl))),
                   t.scale(lv.idx, static_cast<Real>(w.idx)));
  return lv;
}

/// Stage-2 objective: the KL term is replaced by the commitment loss pulling
/// the posterior means toward their assigned code vectors. The L1 term sums
/// over mel bins per frame, matching the stage-1 convention.
template <typename Real>
LossVars stage2_loss(Tape<Real>& t, const DecoderVars<Real>& out, const MatX<Real>& mel_target,
                     const std::vector<int>& ssl_target, Var latents, const QuantizeResult& qr,
                     const LossWeights& w, bool use_idx_loss = true,
                     const std::string& utterance_id = "?") {
  const int len = detail::aligned_length(t.value(out.mel_pred).rows(), mel_target.rows(),
                                         utterance_id);
  detail::aligned_length(t.value(out.ssl_logits).rows(),
                         static_cast<Eigen::Index>(ssl_target.size()), utterance_id);
  LossVars lv;
  lv.recon = t.scale(t.l1_loss(detail::trim_rows(t, out.mel_pred, len), mel_target.topRows(len)),
                     static_cast<Real>(mel_target.cols()));
  lv.kl = t.constant(MatX<Real>::Zero(1, 1));
  if (use_idx_loss) {
    std::vector<int> tgt(ssl_target.begin(), ssl_target.begin() + len);
    lv.idx = t.cross_entropy(detail::trim_rows(t, out.ssl_logits, len), tgt);
  } else {
    lv.idx = t.constant(MatX<Real>::Zero(1, 1));
  }
  lv.cmt = commitment_loss(t, latents, qr);
  lv.total = t.add(t.add(t.scale(lv.recon, static_cast<Real>(w.recon)),
                         t.scale(lv.idx, static_cast<Real>(w.idx))),
                   t.scale(lv.cmt, static_cast<Real>(w.cmt)));
  return lv;
}

}  // namespace lsc
