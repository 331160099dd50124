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

#include <gtest/gtest.h>
#include <omp.h>

#include <array>
#include <cmath>

#include "asrnas/kernels.hpp"
#include "oracles.hpp"

namespace asrnas {
namespace {

using kernels::ConvSpec;
using testing::random_tensor;

struct ConvCase {
  const char* name;
  Shape input;
  Shape weight;
  ConvSpec spec;
};

ConvSpec spec(int sh, int sw, int ph, int pw, int dil = 1, int groups = 1) {
  ConvSpec s;
  s.stride_h = sh;
  s.stride_w = sw;
  s.pad_h = ph;
  s.pad_w = pw;
  s.dil_h = s.dil_w = dil;
  s.groups = groups;
  return s;
}

std::vector<ConvCase> conv_cases() {
  return {
      {"dense3x3", {2, 3, 16, 40}, {16, 3, 3, 3}, spec(1, 1, 1, 1)},
      {"dense3x3_s2", {2, 6, 8, 10}, {5, 6, 3, 3}, spec(2, 2, 1, 1)},
      {"pointwise", {2, 16, 8, 20}, {16, 16, 1, 1}, spec(1, 1, 0, 0)},
      {"pointwise_s2", {2, 8, 8, 20}, {4, 8, 1, 1}, spec(2, 2, 0, 0)},
      {"row1x7", {2, 16, 16, 40}, {16, 16, 1, 7}, spec(1, 1, 0, 3)},
      {"row1x7_s2", {1, 8, 16, 40}, {8, 8, 1, 7}, spec(2, 1, 0, 3)},
      {"col7x1", {2, 16, 16, 40}, {16, 16, 7, 1}, spec(1, 1, 3, 0)},
      {"col7x1_s2", {1, 8, 8, 40}, {8, 8, 7, 1}, spec(1, 2, 3, 0)},
      {"depthwise3", {2, 16, 16, 40}, {16, 1, 3, 3}, spec(1, 1, 1, 1, 1, 16)},
      {"depthwise5_small", {3, 32, 4, 10}, {32, 1, 5, 5}, spec(1, 1, 2, 2, 1, 32)},
      {"depthwise3_s2", {2, 8, 16, 40}, {8, 1, 3, 3}, spec(2, 2, 1, 1, 1, 8)},
      {"dilated5_s2", {2, 8, 16, 40}, {8, 1, 5, 5}, spec(2, 2, 4, 4, 2, 8)},
      {"dilated3", {2, 4, 8, 8}, {4, 1, 3, 3}, spec(1, 1, 2, 2, 2, 4)},
      {"grouped", {2, 8, 6, 6}, {4, 4, 3, 3}, spec(1, 1, 1, 1, 1, 2)},
      {"narrow", {3, 2, 5, 7}, {3, 2, 3, 3}, spec(1, 1, 1, 1)},
      {"wide_k", {1, 64, 4, 10}, {64, 64, 1, 1}, spec(1, 1, 0, 0)},
      {"dilated5_tiny", {2, 4, 2, 2}, {4, 1, 5, 5}, spec(1, 1, 4, 4, 2, 4)},
      {"dilated5_s2_tiny", {1, 4, 2, 2}, {4, 1, 5, 5}, spec(2, 2, 4, 4, 2, 4)},
      {"dense_dilated_tiny", {2, 3, 2, 2}, {4, 3, 5, 5}, spec(1, 1, 4, 4, 2)},
  };
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

class ConvKernels : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvKernels, ParallelMatchesReference) {
  const ConvCase& c = GetParam();
  ad::Rng rng(17);
  const Tensor x = random_tensor(c.input, rng);
  const Tensor w = random_tensor(c.weight, rng);
  const Shape out = kernels::conv2d_output_shape(c.input, c.weight, c.spec);
  const Tensor gy = random_tensor(out, rng);

  Tensor y(out), y_ref(out);
  kernels::conv2d_forward(x, w, c.spec, y);
  kernels::reference::conv2d_forward(x, w, c.spec, y_ref);
  EXPECT_LT(max_abs_diff(y, y_ref), 1e-12);

  Tensor gx(c.input), gx_ref(c.input);
  kernels::conv2d_backward_input(gy, w, c.spec, gx);
  kernels::reference::conv2d_backward_input(gy, w, c.spec, gx_ref);
  EXPECT_LT(max_abs_diff(gx, gx_ref), 1e-12);

  Tensor gw(c.weight), gw_ref(c.weight);
  kernels::conv2d_backward_weight(gy, x, c.spec, gw);
  kernels::reference::conv2d_backward_weight(gy, x, c.spec, gw_ref);
  EXPECT_LT(max_abs_diff(gw, gw_ref), 1e-11);
}

// <conv(x, w), gy> = <x, dx(gy)> = <w, dw(gy)>
TEST_P(ConvKernels, BackwardIsAdjointOfForward) {
  const ConvCase& c = GetParam();
  ad::Rng rng(23);
  const Tensor x = random_tensor(c.input, rng);
  const Tensor w = random_tensor(c.weight, rng);
  const Shape out = kernels::conv2d_output_shape(c.input, c.weight, c.spec);
  const Tensor gy = random_tensor(out, rng);
  Tensor y(out);
  kernels::reference::conv2d_forward(x, w, c.spec, y);
  Tensor gx(c.input);
  kernels::reference::conv2d_backward_input(gy, w, c.spec, gx);
  Tensor gw(c.weight);
  kernels::reference::conv2d_backward_weight(gy, x, c.spec, gw);
  const double lhs = dot(y, gy);
  EXPECT_NEAR(dot(x, gx), lhs, 1e-9 * std::max(1.0, std::abs(lhs)));
  EXPECT_NEAR(dot(w, gw), lhs, 1e-9 * std::max(1.0, std::abs(lhs)));
}

TEST_P(ConvKernels, BackwardAccumulates) {
  const ConvCase& c = GetParam();
  ad::Rng rng(5);
  const Tensor x = random_tensor(c.input, rng);
  const Tensor w = random_tensor(c.weight, rng);
  const Tensor gy = random_tensor(kernels::conv2d_output_shape(c.input, c.weight, c.spec), rng);
  Tensor once(c.input), twice(c.input);
  kernels::conv2d_backward_input(gy, w, c.spec, once);
  kernels::conv2d_backward_input(gy, w, c.spec, twice);
  kernels::conv2d_backward_input(gy, w, c.spec, twice);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(twice[i], 2 * once[i], 1e-12);
}

TEST_P(ConvKernels, BitwiseIdenticalAcrossThreadCounts) {
  const ConvCase& c = GetParam();
  ad::Rng rng(29);
  const Tensor x = random_tensor(c.input, rng);
  const Tensor w = random_tensor(c.weight, rng);
  const Shape out = kernels::conv2d_output_shape(c.input, c.weight, c.spec);
  const Tensor gy = random_tensor(out, rng);
  auto run = [&](int threads) {
    const int saved = omp_get_max_threads();
    omp_set_num_threads(threads);
    Tensor y(out), gx(c.input), gw(c.weight);
    kernels::conv2d_forward(x, w, c.spec, y);
    kernels::conv2d_backward_input(gy, w, c.spec, gx);
    kernels::conv2d_backward_weight(gy, x, c.spec, gw);
    omp_set_num_threads(saved);
    return std::vector<Tensor>{y, gx, gw};
  };
  EXPECT_EQ(run(1), run(3));
}

INSTANTIATE_TEST_SUITE_P(Shapes, ConvKernels, ::testing::ValuesIn(conv_cases()),
                         [](const auto& info) { return std::string(info.param.name); });

TEST(Conv, IdentityKernel) {
  const Tensor x({1, 1, 4, 4}, 1.0);
  const Tensor w({1, 1, 1, 1}, 1.0);
  Tensor y({1, 1, 4, 4});
  kernels::conv2d_forward(x, w, {}, y);
  EXPECT_EQ(y, x);
}

TEST(Conv, OutputShapes) {
  EXPECT_EQ(kernels::conv2d_output_shape({1, 3, 16, 40}, {16, 3, 3, 3}, spec(1, 1, 1, 1)),
            (Shape{1, 16, 16, 40}));
  EXPECT_EQ(kernels::conv2d_output_shape({1, 8, 16, 40}, {8, 1, 3, 3}, spec(2, 2, 1, 1, 1, 8)),
            (Shape{1, 8, 8, 20}));
}

TEST(Conv, RejectsMismatchedChannels) {
  EXPECT_THROW(kernels::conv2d_output_shape({1, 3, 8, 8}, {4, 2, 3, 3}, spec(1, 1, 1, 1)),
               ShapeError);
  EXPECT_THROW(kernels::conv2d_output_shape({1, 6, 8, 8}, {4, 3, 3, 3}, spec(1, 1, 1, 1, 1, 4)),
               ShapeError);
}

TEST(Gemm, MatchesTripleLoop) {
  ad::Rng rng(3);
  for (auto [m, n, k] : std::vector<std::array<int, 3>>{
           {1, 1, 1}, {3, 5, 7}, {8, 16, 9}, {13, 70, 33}, {64, 200, 64}, {9, 17, 130}}) {
    const Tensor a = random_tensor({1, 1, m, k}, rng);
    const Tensor b = random_tensor({1, 1, k, n}, rng);
    Tensor c = random_tensor({1, 1, m, n}, rng);
    Tensor expect = c;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        for (int p = 0; p < k; ++p) expect[i * n + j] += a[i * k + p] * b[p * n + j];
      }
    }
    kernels::gemm(m, n, k, a.data(), k, b.data(), n, c.data(), n);
    EXPECT_LT(max_abs_diff(c, expect), 1e-12) << m << "x" << n << "x" << k;
  }
}

TEST(Pool, ParallelMatchesReference) {
  ad::Rng rng(11);
  for (int stride : {1, 2}) {
    const Tensor x = random_tensor({2, 5, 8, 12}, rng);
    const Shape out = kernels::pool3x3_output_shape(x.shape(), stride);
    Tensor y(out), y_ref(out);
    std::vector<std::size_t> argmax;
    kernels::max_pool3x3_forward(x, stride, y, argmax);
    kernels::reference::max_pool3x3_forward(x, stride, y_ref);
    EXPECT_EQ(y, y_ref);
    Tensor a(out), a_ref(out);
    kernels::avg_pool3x3_forward(x, stride, a);
    kernels::reference::avg_pool3x3_forward(x, stride, a_ref);
    EXPECT_LT(max_abs_diff(a, a_ref), 1e-14);
  }
}

TEST(Pool, AverageOfConstantIsConstant) {
  const Tensor x({1, 2, 6, 6}, 7.0);
  Tensor y({1, 2, 6, 6});
  kernels::avg_pool3x3_forward(x, 1, y);
  for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 7.0);
}

TEST(Pool, BackwardIsAdjoint) {
  ad::Rng rng(13);
  for (int stride : {1, 2}) {
    const Tensor x = random_tensor({2, 3, 8, 10}, rng);
    const Shape out = kernels::pool3x3_output_shape(x.shape(), stride);
    const Tensor gy = random_tensor(out, rng);
    Tensor y(out), gx(x.shape());
    kernels::avg_pool3x3_forward(x, stride, y);
    kernels::avg_pool3x3_backward(gy, stride, gx);
    EXPECT_NEAR(dot(y, gy), dot(x, gx), 1e-10);

    // max pool is linear in x once the argmax pattern is fixed
    std::vector<std::size_t> argmax;
    kernels::max_pool3x3_forward(x, stride, y, argmax);
    Tensor gm(x.shape());
    kernels::max_pool3x3_backward(gy, argmax, gm);
    EXPECT_NEAR(dot(y, gy), dot(x, gm), 1e-10);
  }
}

TEST(BatchNorm, NormalizesMoments) {
  ad::Rng rng(19);
  Tensor x({8, 3, 5, 7});
  for (double& v : x.values()) v = ad::normal01(rng);
  // rescale each channel to mean 5, variance 4 exactly
  const int c = 3;
  const int per = 8 * 5 * 7;
  for (int ch = 0; ch < c; ++ch) {
    double m = 0.0, s = 0.0;
    for (int n = 0; n < 8; ++n)
      for (int i = 0; i < 35; ++i) m += x[(n * c + ch) * 35 + i];
    m /= per;
    for (int n = 0; n < 8; ++n)
      for (int i = 0; i < 35; ++i) s += std::pow(x[(n * c + ch) * 35 + i] - m, 2);
    const double sd = std::sqrt(s / per);
    for (int n = 0; n < 8; ++n)
      for (int i = 0; i < 35; ++i) {
        double& v = x[(n * c + ch) * 35 + i];
        v = 5.0 + 2.0 * (v - m) / sd;
      }
  }
  Tensor y(x.shape()), xhat(x.shape());
  std::vector<double> inv_std;
  kernels::batch_norm_forward(x, nullptr, nullptr, 1e-5, y, xhat, inv_std);
  for (int ch = 0; ch < c; ++ch) {
    double m = 0.0, s = 0.0;
    for (int n = 0; n < 8; ++n)
      for (int i = 0; i < 35; ++i) m += y[(n * c + ch) * 35 + i];
    m /= per;
    for (int n = 0; n < 8; ++n)
      for (int i = 0; i < 35; ++i) s += std::pow(y[(n * c + ch) * 35 + i] - m, 2);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(s / per, 4.0 / (4.0 + 1e-5), 1e-12);
  }
}

TEST(BatchNorm, PerSampleMatchesBatchOfOne) {
  ad::Rng rng(21);
  const Tensor x = random_tensor({3, 4, 4, 6}, rng);
  Tensor y(x.shape()), xhat(x.shape());
  std::vector<double> inv_std;
  kernels::instance_stats_norm_forward(x, nullptr, nullptr, 1e-5, y, xhat, inv_std);
  for (int n = 0; n < 3; ++n) {
    Tensor one({1, 4, 4, 6});
    std::copy(x.data() + n * one.size(), x.data() + (n + 1) * one.size(), one.data());
    Tensor y1(one.shape()), h1(one.shape());
    std::vector<double> s1;
    kernels::batch_norm_forward(one, nullptr, nullptr, 1e-5, y1, h1, s1);
    for (std::size_t i = 0; i < one.size(); ++i) {
      EXPECT_NEAR(y[n * one.size() + i], y1[i], 1e-12);
    }
  }
}

}  // namespace
}  // namespace asrnas
