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

#include <algorithm>
#include <sstream>

#include "asrnas/opspace.hpp"
#include "oracles.hpp"

namespace asrnas {
namespace {

using testing::op_params;
using testing::random_tensor;

const std::vector<OpKind> kAllKinds = {
    OpKind::zero,         OpKind::skip_connect, OpKind::max_pool_3x3,
    OpKind::avg_pool_3x3, OpKind::sep_conv_3x3, OpKind::sep_conv_5x5,
    OpKind::dil_conv_3x3, OpKind::dil_conv_5x5, OpKind::conv_1x7_7x1};

TEST(OpSpace, OriginalCandidates) {
  const std::vector<OpKind> expect = {
      OpKind::zero,         OpKind::skip_connect, OpKind::max_pool_3x3,
      OpKind::avg_pool_3x3, OpKind::sep_conv_3x3, OpKind::sep_conv_5x5,
      OpKind::dil_conv_3x3, OpKind::dil_conv_5x5};
  EXPECT_EQ(canonical_ops(SpaceVariant::original), expect);
}

TEST(OpSpace, RevisedSwapsSkipForRectangularConv) {
  const auto& ops = canonical_ops(SpaceVariant::revised);
  EXPECT_EQ(ops.size(), 8u);
  EXPECT_EQ(std::count(ops.begin(), ops.end(), OpKind::skip_connect), 0);
  EXPECT_EQ(std::count(ops.begin(), ops.end(), OpKind::conv_1x7_7x1), 1);
  std::vector<OpKind> expect = canonical_ops(SpaceVariant::original);
  expect.erase(std::find(expect.begin(), expect.end(), OpKind::skip_connect));
  expect.push_back(OpKind::conv_1x7_7x1);
  EXPECT_EQ(ops, expect);
}

TEST(OpSpace, BuildSpaceFillsEveryEdge) {
  for (auto v : {SpaceVariant::original, SpaceVariant::revised}) {
    const OperationSpace space = build_space(v, 14);
    EXPECT_EQ(space.n_edges(), 14);
    EXPECT_EQ(space.uniform_size(), 8);
    for (CellType t : {CellType::normal, CellType::reduction}) {
      for (int e = 0; e < 14; ++e) EXPECT_EQ(space.candidates(t, e), canonical_ops(v));
    }
  }
}

TEST(OpSpace, RejectsEmptyCandidateList) {
  EXPECT_THROW(OperationSpace(SpaceVariant::original, {{}}, {{OpKind::zero}}),
               std::invalid_argument);
}

TEST(OpSpace, NamesRoundTrip) {
  for (OpKind k : kAllKinds) EXPECT_EQ(parse_op(op_name(k)), k);
  EXPECT_FALSE(parse_op("identity3x3").has_value());
  EXPECT_EQ(parse_variant("revised"), SpaceVariant::revised);
  EXPECT_FALSE(parse_variant("Revised").has_value());
}

TEST(OpCost, HandExamples) {
  EXPECT_EQ(op_cost(OpKind::zero, 16, 16, 40, 1), CostReport{});
  EXPECT_EQ(op_cost(OpKind::sep_conv_3x3, 16, 16, 40, 1).params, 2 * (3 * 3 * 16 + 16 * 16));
  EXPECT_EQ(op_cost(OpKind::sep_conv_3x3, 16, 16, 40, 1).params, 800);
  EXPECT_EQ(op_cost(OpKind::conv_1x7_7x1, 16, 16, 40, 1).params, 3584);
  EXPECT_EQ(op_cost(OpKind::sep_conv_3x3, 16, 16, 40, 1).seq_depth, 8);
  EXPECT_EQ(op_cost(OpKind::conv_1x7_7x1, 16, 16, 40, 1).seq_depth, 4);
}

TEST(OpCost, ParamsMatchBuiltBlocks) {
  ad::Rng rng(2);
  for (OpKind k : kAllKinds) {
    for (int c : {8, 16, 24}) {
      for (int stride : {1, 2}) {
        for (bool affine : {false, true}) {
          const auto block = instantiate(k, c, stride, affine, rng);
          const auto cost = op_cost(k, c, 16, 40, stride, affine);
          EXPECT_EQ(cost.params, static_cast<std::int64_t>(block->parameter_count()))
              << op_name(k) << " C=" << c << " stride " << stride;
          EXPECT_EQ(cost.params, op_params(k, c, stride, affine)) << op_name(k);
        }
      }
    }
  }
}

TEST(OpCost, MacsOfSeparableConv) {
  // depthwise 3x3 then pointwise, twice, at every output position
  const std::int64_t pos = 16 * 40;
  EXPECT_EQ(op_cost(OpKind::sep_conv_3x3, 16, 16, 40, 1).macs,
            2 * (pos * 16 * 9 + pos * 16 * 16));
  const std::int64_t half = 8 * 20;
  EXPECT_EQ(op_cost(OpKind::sep_conv_3x3, 16, 16, 40, 2).macs,
            (half * 16 * 9 + half * 16 * 16) * 2);
}

TEST(OpCost, NonnegativeFields) {
  for (OpKind k : kAllKinds) {
    for (int stride : {1, 2}) {
      const auto r = op_cost(k, 8, 8, 8, stride);
      EXPECT_GE(r.params, 0);
      EXPECT_GE(r.macs, 0);
      EXPECT_GE(r.seq_depth, 0);
      EXPECT_GE(r.activations, 0);
    }
  }
}

TEST(OpCost, RectangularConvIsShallower) {
  const auto rect = op_cost(OpKind::conv_1x7_7x1, 16, 16, 40, 1);
  for (OpKind sep : {OpKind::sep_conv_3x3, OpKind::sep_conv_5x5}) {
    const auto s = op_cost(sep, 16, 16, 40, 1);
    EXPECT_LT(rect.seq_depth, s.seq_depth) << op_name(sep);
    EXPECT_LT(rect.activations, s.activations) << op_name(sep);
  }
}

TEST(OpCost, CsvRows) {
  std::ostringstream os;
  write_cost_csv(os, {{OpKind::sep_conv_3x3, 16, 1, op_cost(OpKind::sep_conv_3x3, 16, 16, 40, 1)}});
  const std::string text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "kind,channels,stride,params,macs,seq_depth,activations");
  EXPECT_NE(text.find("sep_conv_3x3,16,1,800,"), std::string::npos);
}

TEST(Instantiate, ShapeContract) {
  ad::Rng rng(9);
  for (OpKind k : kAllKinds) {
    for (int stride : {1, 2}) {
      for (bool affine : {false, true}) {
        const auto block = instantiate(k, 8, stride, affine, rng);
        ad::Graph g;
        const ad::Var y =
            block->forward(g, g.constant(random_tensor({2, 8, 16, 40}, rng)), {});
        EXPECT_EQ(y.shape(), (Shape{2, 8, 16 / stride, 40 / stride})) << op_name(k);
        EXPECT_TRUE(y.value().all_finite());
      }
    }
  }
}

TEST(Instantiate, StrideTwoOnEightByEight) {
  ad::Rng rng(10);
  for (OpKind k : kAllKinds) {
    const auto block = instantiate(k, 4, 2, false, rng);
    ad::Graph g;
    const ad::Var y = block->forward(g, g.constant(random_tensor({1, 4, 8, 8}, rng)), {});
    EXPECT_EQ(y.shape(), (Shape{1, 4, 4, 4})) << op_name(k);
  }
}

TEST(Instantiate, ZeroGivesZeros) {
  ad::Rng rng(1);
  const auto block = instantiate(OpKind::zero, 5, 1, false, rng);
  ad::Graph g;
  const ad::Var y = block->forward(g, g.constant(random_tensor({1, 5, 8, 8}, rng)), {});
  EXPECT_EQ(y.value(), Tensor({1, 5, 8, 8}));
}

TEST(Instantiate, SkipIsIdentityAtStrideOne) {
  ad::Rng rng(1);
  const auto block = instantiate(OpKind::skip_connect, 3, 1, false, rng);
  const Tensor x = random_tensor({1, 3, 4, 4}, rng);
  ad::Graph g;
  EXPECT_EQ(block->forward(g, g.constant(x), {}).value(), x);
}

TEST(Instantiate, AveragePoolKeepsConstantMap) {
  ad::Rng rng(1);
  const auto block = instantiate(OpKind::avg_pool_3x3, 2, 1, false, rng);
  ad::Graph g;
  const ad::Var y = block->forward(g, g.constant(Tensor({1, 2, 6, 6}, 7.0)), {});
  for (double v : y.value().values()) EXPECT_DOUBLE_EQ(v, 7.0);
}

TEST(Instantiate, RejectsBadStride) {
  ad::Rng rng(1);
  EXPECT_THROW(instantiate(OpKind::sep_conv_3x3, 8, 3, false, rng), std::invalid_argument);
  EXPECT_THROW(op_cost(OpKind::sep_conv_3x3, 8, 8, 8, 0), std::invalid_argument);
}

}  // namespace
}  // namespace asrnas
