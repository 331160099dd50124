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

#include <vector>

#include "asrnas/tensor.hpp"

// Numeric kernels behind the autodiff primitives.
//
// The top-level namespace holds the OpenMP-parallel versions used by the
// graph. Every parallel loop partitions the output so that each element is
// produced by exactly one thread in a fixed summation order, which keeps the
// results bitwise identical for any thread count. `kernels::reference` holds
// plain serial loops that follow the textbook definitions; they exist so the
// tests and the benchmark have something independent to compare against.
namespace asrnas::kernels {

struct ConvSpec {
  int stride_h = 1;
  int stride_w = 1;
  int pad_h = 0;
  int pad_w = 0;
  int dil_h = 1;
  int dil_w = 1;
  int groups = 1;
};

// Validates input/weight compatibility and returns the output shape.
// weight is (c_out, c_in / groups, kh, kw).
Shape conv2d_output_shape(const Shape& input, const Shape& weight,
                          const ConvSpec& spec);

void conv2d_forward(const Tensor& x, const Tensor& weight,
                    const ConvSpec& spec, Tensor& y);
// Accumulates into grad_x.
void conv2d_backward_input(const Tensor& grad_y, const Tensor& weight,
                           const ConvSpec& spec, Tensor& grad_x);
// Accumulates into grad_w.
void conv2d_backward_weight(const Tensor& grad_y, const Tensor& x,
                            const ConvSpec& spec, Tensor& grad_w);

// C += A * B for row-major A (m x k), B (k x n), C (m x n). Serial; each
// element of C is accumulated over k in increasing order.
void gemm(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
          double* c, int ldc);

// 3x3 pooling with symmetric padding 1.
Shape pool3x3_output_shape(const Shape& input, int stride);

// argmax receives, for every output element, the flat input index it copied.
void max_pool3x3_forward(const Tensor& x, int stride, Tensor& y,
                         std::vector<std::size_t>& argmax);
void max_pool3x3_backward(const Tensor& grad_y,
                          const std::vector<std::size_t>& argmax,
                          Tensor& grad_x);
// Padded positions are excluded from the divisor.
void avg_pool3x3_forward(const Tensor& x, int stride, Tensor& y);
void avg_pool3x3_backward(const Tensor& grad_y, int stride, Tensor& grad_x);

// Per-channel batch statistics over (n, h, w). xhat and inv_std are saved for
// the backward pass. gamma/beta may be null (no affine transform).
void batch_norm_forward(const Tensor& x, const double* gamma,
                        const double* beta, double eps, Tensor& y,
                        Tensor& xhat, std::vector<double>& inv_std);
// Same, but every sample is normalized by its own statistics.
void instance_stats_norm_forward(const Tensor& x, const double* gamma,
                                 const double* beta, double eps, Tensor& y,
                                 Tensor& xhat, std::vector<double>& inv_std);
void batch_norm_backward(const Tensor& grad_y, const Tensor& xhat,
                         const std::vector<double>& inv_std,
                         const double* gamma, bool per_sample, Tensor& grad_x,
                         double* grad_gamma, double* grad_beta);

namespace reference {

void conv2d_forward(const Tensor& x, const Tensor& weight,
                    const ConvSpec& spec, Tensor& y);
void conv2d_backward_input(const Tensor& grad_y, const Tensor& weight,
                           const ConvSpec& spec, Tensor& grad_x);
void conv2d_backward_weight(const Tensor& grad_y, const Tensor& x,
                            const ConvSpec& spec, Tensor& grad_w);
void max_pool3x3_forward(const Tensor& x, int stride, Tensor& y);
void avg_pool3x3_forward(const Tensor& x, int stride, Tensor& y);

}  // namespace reference
}  // namespace asrnas::kernels
