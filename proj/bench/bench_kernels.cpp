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

#include <benchmark/benchmark.h>

#include <random>

#include "asrnas/kernels.hpp"

namespace {

using asrnas::Shape;
using asrnas::Tensor;
namespace k = asrnas::kernels;

Tensor filled(const Shape& s, std::uint64_t seed) {
  Tensor t(s);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  for (double& v : t.values()) v = d(rng);
  return t;
}

// args: channels, kernel, groups (0 = depthwise)
struct Case {
  Tensor x, w, y;
  k::ConvSpec spec;
};

Case make_case(const benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int kk = static_cast<int>(state.range(1));
  const int groups = state.range(2) == 0 ? c : 1;
  Case cs;
  cs.spec.pad_h = cs.spec.pad_w = kk / 2;
  cs.spec.groups = groups;
  cs.x = filled({4, c, 16, 40}, 1);
  cs.w = filled({c, c / groups, kk, kk}, 2);
  cs.y = Tensor(k::conv2d_output_shape(cs.x.shape(), cs.w.shape(), cs.spec));
  return cs;
}

void BM_ConvForwardReference(benchmark::State& state) {
  Case cs = make_case(state);
  for (auto _ : state) {
    k::reference::conv2d_forward(cs.x, cs.w, cs.spec, cs.y);
    benchmark::DoNotOptimize(cs.y.values().data());
  }
}

void BM_ConvForward(benchmark::State& state) {
  Case cs = make_case(state);
  for (auto _ : state) {
    k::conv2d_forward(cs.x, cs.w, cs.spec, cs.y);
    benchmark::DoNotOptimize(cs.y.values().data());
  }
}

void BM_ConvBackwardWeightReference(benchmark::State& state) {
  Case cs = make_case(state);
  Tensor gw(cs.w.shape());
  for (auto _ : state) {
    k::reference::conv2d_backward_weight(cs.y, cs.x, cs.spec, gw);
    benchmark::DoNotOptimize(gw.values().data());
  }
}

void BM_ConvBackwardWeight(benchmark::State& state) {
  Case cs = make_case(state);
  Tensor gw(cs.w.shape());
  for (auto _ : state) {
    k::conv2d_backward_weight(cs.y, cs.x, cs.spec, gw);
    benchmark::DoNotOptimize(gw.values().data());
  }
}

void BM_AvgPoolReference(benchmark::State& state) {
  const Tensor x = filled({4, static_cast<int>(state.range(0)), 16, 40}, 3);
  Tensor y(k::pool3x3_output_shape(x.shape(), 1));
  for (auto _ : state) {
    k::reference::avg_pool3x3_forward(x, 1, y);
    benchmark::DoNotOptimize(y.values().data());
  }
}

void BM_AvgPool(benchmark::State& state) {
  const Tensor x = filled({4, static_cast<int>(state.range(0)), 16, 40}, 3);
  Tensor y(k::pool3x3_output_shape(x.shape(), 1));
  for (auto _ : state) {
    k::avg_pool3x3_forward(x, 1, y);
    benchmark::DoNotOptimize(y.values().data());
  }
}

#define CONV_ARGS                                                           \
  ArgNames({"C", "k", "dense"})                                             \
      ->Args({16, 1, 1})                                                    \
      ->Args({16, 3, 0})                                                    \
      ->Args({16, 3, 1})                                                    \
      ->Args({32, 5, 0})                                                    \
      ->Args({32, 3, 1})                                                    \
      ->Unit(benchmark::kMicrosecond)

BENCHMARK(BM_ConvForwardReference)->CONV_ARGS;
BENCHMARK(BM_ConvForward)->CONV_ARGS;
BENCHMARK(BM_ConvBackwardWeightReference)->CONV_ARGS;
BENCHMARK(BM_ConvBackwardWeight)->CONV_ARGS;
BENCHMARK(BM_AvgPoolReference)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_AvgPool)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
