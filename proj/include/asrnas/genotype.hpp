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

#include <stdexcept>
#include <string>
#include <vector>

#include "asrnas/opspace.hpp"
#include "asrnas/supernet.hpp"

namespace asrnas {

// One retained input of an intermediate node.
struct GeneEdge {
  int node = 0;
  int from = 0;  // -2, -1 for the cell inputs, otherwise an earlier node
  OpKind op = OpKind::zero;

  bool operator==(const GeneEdge&) const = default;
};

// Discrete cell pair. Each cell lists two edges per node, sorted by (node,
// from).
struct Genotype {
  SpaceVariant variant = SpaceVariant::original;
  int n_nodes = 0;
  std::vector<GeneEdge> normal;
  std::vector<GeneEdge> reduction;
  std::vector<int> concat;

  const std::vector<GeneEdge>& cell(CellType t) const {
    return t == CellType::normal ? normal : reduction;
  }
  bool operator==(const Genotype&) const = default;
};

class DerivationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GenotypeParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Per edge, the best non-zero candidate by softmax weight; per node, the two
// edges whose best weights are largest. Ties go to the earlier canonical op
// and to the earlier source. If the normal cell then holds more than
// max_avg_pool average-pooling entries, the lowest-weight ones are switched
// to their edge's best remaining non-zero, non-pooling-average candidate.
Genotype derive(const AlphaTable& alphas, const OperationSpace& space,
                int max_avg_pool);

// Empty when the genotype satisfies every invariant; otherwise one message
// per violation, each naming its location.
std::vector<std::string> validate(const Genotype& g, int max_avg_pool = 2);

std::string serialize(const Genotype& g);
Genotype parse_genotype(const std::string& text);

enum class DotView { both, normal, reduction };
std::string render_dot(const Genotype& g, DotView view = DotView::both);

// Parameter/MAC tally of the evaluation network built from g under plan,
// for inputs of `frames` x plan.freq_bins. seq_depth and activations are
// totals over every block. Plans with l_cells == 0 count stem and head only.
CostReport network_cost(const Genotype& g, const NetworkPlan& plan, int frames = 16);

// Number of intermediate nodes whose edge count is n_edges; throws if none.
int nodes_for_edges(int n_edges);

}  // namespace asrnas
