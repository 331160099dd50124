// Copyright 2026 The asrnas Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "asrnas/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace asrnas::optim {

void sgd_momentum_step(std::span<ad::Parameter* const> params,
                       const SgdOptions& opts) {
  if (opts.lr < 0.0) throw std::invalid_argument("sgd: negative learning rate");
  for (ad::Parameter* p : params) {
    double* value = p->value.data();
    const double* grad = p->grad.data();
    double* buf = p->momentum.data();
    const std::size_t n = p->numel();
    for (std::size_t i = 0; i < n; ++i) {
      buf[i] = opts.momentum * buf[i] + grad[i] + opts.weight_decay * value[i];
    }
    if (opts.lr == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) value[i] -= opts.lr * buf[i];
  }
}

double cosine_lr(int epoch, int total_epochs, double lr_init) {
  if (total_epochs < 1) {
    throw std::invalid_argument("cosine_lr: total_epochs must be >= 1");
  }
  if (epoch < 0 || epoch > total_epochs) {
    throw std::out_of_range("cosine_lr: epoch " + std::to_string(epoch) +
                            " outside [0, " + std::to_string(total_epochs) +
                            "]");
  }
  if (epoch == total_epochs) return 0.0;
  return lr_init * 0.5 *
         (1.0 + std::cos(std::numbers::pi * epoch / total_epochs));
}

void Adam::step(std::span<ad::Parameter* const> params) {
  if (m_.empty()) {
    for (ad::Parameter* p : params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }
  if (m_.size() != params.size()) {
    throw std::invalid_argument("adam: parameter list changed between steps");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, t_);
  const double bc2 = 1.0 - std::pow(opts_.beta2, t_);
  for (std::size_t k = 0; k < params.size(); ++k) {
    ad::Parameter& p = *params[k];
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double g = p.grad[i] + opts_.weight_decay * p.value[i];
      m_[k][i] = opts_.beta1 * m_[k][i] + (1.0 - opts_.beta1) * g;
      v_[k][i] = opts_.beta2 * v_[k][i] + (1.0 - opts_.beta2) * g * g;
      const double mhat = m_[k][i] / bc1;
      const double vhat = v_[k][i] / bc2;
      p.value[i] -= opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps);
    }
  }
}

void zero_grad(std::span<ad::Parameter* const> params) {
  for (ad::Parameter* p : params) p->zero_grad();
}

}  // namespace asrnas::optim
