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

#pragma once

#include <span>

#include "asrnas/autodiff.hpp"

namespace asrnas::optim {

struct SgdOptions {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 3e-4;
};

// buf <- momentum * buf + grad + weight_decay * value; value <- value - lr * buf
void sgd_momentum_step(std::span<ad::Parameter* const> params,
                       const SgdOptions& opts);

// lr_init * (1 + cos(pi * epoch / total_epochs)) / 2
double cosine_lr(int epoch, int total_epochs, double lr_init);

// Adam with L2 decay folded into the gradient; used for the architecture
// logits.
class Adam {
 public:
  struct Options {
    double lr = 3e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-3;
  };

  explicit Adam(Options opts) : opts_(opts) {}

  // State is keyed by position in `params`; pass the same list every step.
  void step(std::span<ad::Parameter* const> params);
  int steps() const { return t_; }

 private:
  Options opts_;
  int t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

void zero_grad(std::span<ad::Parameter* const> params);

}  // namespace asrnas::optim
