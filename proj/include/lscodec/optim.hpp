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
#include <vector>

#include "lscodec/common.hpp"
#include "lscodec/layers.hpp"

namespace lsc {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int warmup_steps = 1000;
  double clip_norm = 5.0;

  void validate() const {
    check_arg(lr > 0, "learning rate must be positive");
    check_arg(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "betas must be in [0, 1)");
    check_arg(eps > 0, "epsilon must be positive");
    check_arg(warmup_steps >= 0, "warmup must be nonnegative");
    check_arg(clip_norm > 0, "clip norm must be positive");
  }
};

/// Adaptive moment estimation with bias correction, linear warmup, and
/// global-norm gradient clipping. Moment tensors are kept per parameter in
/// creation order; `states()` exposes them for checkpointing.
template <typename Real>
class Adam {
 public:
  struct State {
    MatX<Real> m;
    MatX<Real> v;
  };

  Adam(ParamStore<Real>& params, AdamConfig cfg) : params_(&params), cfg_(cfg) {
    cfg_.validate();
    states_.reserve(params.all().size());
    for (const auto& p : params.all())
      states_.push_back({MatX<Real>::Zero(p->value.rows(), p->value.cols()),
                         MatX<Real>::Zero(p->value.rows(), p->value.cols())});
  }

  const AdamConfig& config() const { return cfg_; }
  std::int64_t step_count() const { return step_; }
  void set_step_count(std::int64_t s) { step_ = s; }
  std::vector<State>& states() { return states_; }
  const std::vector<State>& states() const { return states_; }

  double current_lr() const {
    const auto next = static_cast<double>(step_ + 1);
    const double warm =
        cfg_.warmup_steps > 0 ? std::min(1.0, next / static_cast<double>(cfg_.warmup_steps)) : 1.0;
    return cfg_.lr * warm;
  }

  /// Consumes the accumulated gradients: clips, updates moments, applies the
  /// parameter step, and zeroes the gradients for the next pass.
  void step() {
    params_->clip_grads(cfg_.clip_norm);
    const double lr = current_lr();
    step_ += 1;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    const Real b1 = static_cast<Real>(cfg_.beta1);
    const Real b2 = static_cast<Real>(cfg_.beta2);
    const auto& all = params_->all();
    for (std::size_t i = 0; i < all.size(); ++i) {
      auto& p = *all[i];
      auto& st = states_[i];
      st.m = b1 * st.m + (Real(1) - b1) * p.grad;
      st.v = (b2 * st.v.array() + (Real(1) - b2) * p.grad.array().square()).matrix();
      const auto m_hat = st.m.array() / static_cast<Real>(bc1);
      const auto v_hat = st.v.array() / static_cast<Real>(bc2);
      p.value.array() -=
          static_cast<Real>(lr) * m_hat / (v_hat.sqrt() + static_cast<Real>(cfg_.eps));
    }
    params_->zero_grads();
  }

 private:
  ParamStore<Real>* params_;
  AdamConfig cfg_;
  std::vector<State> states_;
  std::int64_t step_ = 0;
};

}  // namespace lsc
