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

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "asrnas/autodiff.hpp"

namespace asrnas {

// Declaration order is the canonical order: both operation lists below are
// subsequences of it, so comparing enumerators breaks ties consistently in
// either space.
enum class OpKind : std::uint8_t {
  zero,
  skip_connect,
  max_pool_3x3,
  avg_pool_3x3,
  sep_conv_3x3,
  sep_conv_5x5,
  dil_conv_3x3,
  dil_conv_5x5,
  conv_1x7_7x1,
};

enum class SpaceVariant { original, revised };
enum class CellType { normal, reduction };

std::string_view op_name(OpKind kind);
std::optional<OpKind> parse_op(std::string_view name);
std::string_view variant_name(SpaceVariant v);
std::optional<SpaceVariant> parse_variant(std::string_view name);
std::string_view cell_type_name(CellType t);

// The eight candidates of a space, in canonical order.
const std::vector<OpKind>& canonical_ops(SpaceVariant v);

// Per-edge candidate lists for both cell types.
class OperationSpace {
 public:
  OperationSpace() = default;
  OperationSpace(SpaceVariant variant, std::vector<std::vector<OpKind>> normal,
                 std::vector<std::vector<OpKind>> reduction);

  SpaceVariant variant() const { return variant_; }
  int n_edges() const { return static_cast<int>(normal_.size()); }
  const std::vector<OpKind>& candidates(CellType type, int edge) const;
  // Candidate count shared by every edge, or -1 when edges differ.
  int uniform_size() const;

  bool operator==(const OperationSpace&) const = default;

 private:
  SpaceVariant variant_ = SpaceVariant::original;
  std::vector<std::vector<OpKind>> normal_;
  std::vector<std::vector<OpKind>> reduction_;
};

OperationSpace build_space(SpaceVariant variant, int n_edges);

// Per-call options shared by every block in a forward pass.
struct ForwardOptions {
  ad::NormStats norm_stats = ad::NormStats::per_batch;
};

// A differentiable building block that owns its parameters.
class Module {
 public:
  virtual ~Module() = default;
  virtual ad::Var forward(ad::Graph& g, ad::Var x, const ForwardOptions& opts) = 0;
  virtual void collect_parameters(std::vector<ad::Parameter*>& out) = 0;

  std::size_t parameter_count();
};

using ModulePtr = std::unique_ptr<Module>;

// Building blocks used by candidate operations and by the network skeleton.
ModulePtr make_relu_conv_bn(int c_in, int c_out, int kernel, int stride,
                            int padding, bool affine, ad::Rng& rng);
ModulePtr make_factorized_reduce(int c_in, int c_out, bool affine, ad::Rng& rng);

// Builds a candidate operation. Stride must be 1 or 2; the block maps
// (n, c, h, w) to (n, c, h / stride, w / stride) for even h and w.
ModulePtr instantiate(OpKind kind, int channels, int stride, bool affine,
                      ad::Rng& rng);

struct CostReport {
  std::int64_t params = 0;
  // Weight multiply-accumulates for one sample.
  std::int64_t macs = 0;
  // Primitive layers on the longest sequential path.
  int seq_depth = 0;
  // Intermediate tensors materialized by one forward pass.
  int activations = 0;

  CostReport& operator+=(const CostReport& other);
  bool operator==(const CostReport&) const = default;
};

// Analytic tally: enumerates the weight tensors and per-position products of
// the composition built by instantiate().
CostReport op_cost(OpKind kind, int channels, int h, int w, int stride,
                   bool affine = false);
CostReport relu_conv_bn_cost(int c_in, int c_out, int kernel, int h, int w,
                             int stride, int padding, bool affine);
CostReport factorized_reduce_cost(int c_in, int c_out, int h, int w,
                                  bool affine);

struct CostRow {
  OpKind kind;
  int channels;
  int stride;
  CostReport cost;
};

void write_cost_csv(std::ostream& os, const std::vector<CostRow>& rows);

}  // namespace asrnas
