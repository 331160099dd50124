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

#include <memory>
#include <span>
#include <vector>

#include "asrnas/autodiff.hpp"
#include "asrnas/opspace.hpp"

namespace asrnas {

// DAG of one cell. States 0 and 1 are the two cell inputs (written -2 and -1
// in genotypes); intermediate node i is state i + 2 and receives one edge from
// every earlier state.
struct CellTopology {
  struct Edge {
    int to;    // intermediate node index
    int from;  // -2, -1, 0, ..., to - 1
  };

  int n_nodes = 0;
  std::vector<Edge> edges;
  std::vector<int> concat;

  static CellTopology make(int n_nodes);
  int n_edges() const { return static_cast<int>(edges.size()); }
  // Index of the edge into `node` from `from`.
  static int edge_index(int node, int from);
};

// Architecture logits; shape (1, 1, n_edges, k) per cell type. Column j of
// an edge's row refers to the j-th entry of that edge's candidate list.
struct AlphaTable {
  ad::Parameter normal;
  ad::Parameter reduction;

  ad::Parameter& of(CellType t) { return t == CellType::normal ? normal : reduction; }
  const ad::Parameter& of(CellType t) const {
    return t == CellType::normal ? normal : reduction;
  }
  int n_edges() const { return normal.value.shape().h; }
  int n_ops() const { return normal.value.shape().w; }
  double at(CellType t, int edge, int op) const {
    return of(t).value[static_cast<std::size_t>(edge) * n_ops() + op];
  }
  double& at(CellType t, int edge, int op) {
    return of(t).value[static_cast<std::size_t>(edge) * n_ops() + op];
  }
};

// Logits drawn as scale * N(0, 1).
AlphaTable make_alphas(int n_edges, int n_ops, ad::Rng& rng, double scale = 1e-3);
AlphaTable make_alphas(int n_edges, int n_ops, double fill = 0.0);
// Softmax weights of one edge row.
std::vector<double> edge_weights(const AlphaTable& alphas, CellType t, int edge);

struct NetworkPlan {
  int l_cells = 5;
  int init_channels = 16;
  int n_nodes = 4;
  int in_channels = 3;
  int freq_bins = 40;
  std::vector<int> head_widths = {256};
  int n_classes = 10;

  // {floor(L/3), floor(2L/3)}; empty when L == 0.
  std::vector<int> reduction_positions() const;
  bool is_reduction(int cell) const;
  // Throws std::invalid_argument naming the offending field.
  void validate(bool allow_empty = false) const;
};

// Channel and resolution bookkeeping for one cell of a stack.
struct CellSlot {
  int index = 0;
  bool reduction = false;
  bool reduction_prev = false;
  int c_prev_prev = 0;
  int c_prev = 0;
  int c_cell = 0;   // working width of every node
  int h_prev = 0;   // resolution of the s_prev input
  int w_prev = 0;
  int c_out = 0;    // n_nodes * c_cell
};

std::vector<CellSlot> plan_cells(const NetworkPlan& plan, int h, int w);

// Rejects inputs that two stride-2 reductions cannot halve exactly.
void check_alignment(const NetworkPlan& plan, const Shape& input);

// 3x3 convolution from the feature/delta/delta-delta channels, then BN.
class Stem {
 public:
  Stem(const NetworkPlan& plan, bool affine, ad::Rng& rng);
  ad::Var forward(ad::Graph& g, ad::Var x, const ForwardOptions& opts);
  void collect_parameters(std::vector<ad::Parameter*>& out);

 private:
  ad::Parameter weight_;
  ad::Parameter gamma_;
  ad::Parameter beta_;
  bool affine_;
};

CostReport stem_cost(const NetworkPlan& plan, int h, int w, bool affine);

// Per-frame fully connected stack: flatten (channels x freq) per frame,
// hidden layers with ReLU, class projection, mean over time.
class Head {
 public:
  Head(int in_features, const NetworkPlan& plan, ad::Rng& rng);
  ad::Var forward(ad::Graph& g, ad::Var x);
  void collect_parameters(std::vector<ad::Parameter*>& out);

 private:
  struct Layer {
    ad::Parameter weight;
    ad::Parameter bias;
  };
  std::vector<Layer> layers_;
};

CostReport head_cost(int in_features, int frames, const NetworkPlan& plan);

// Forward options for the relaxed network.
struct SearchForwardOptions : ForwardOptions {
  // Operation-level dropout after dilated convolutions and average pooling.
  double dropout_rate = 0.0;
  ad::Rng* rng = nullptr;
};

// One edge of the relaxed cell: every candidate instantiated at the edge's
// stride, mixed with softmax weights.
class MixedOp {
 public:
  MixedOp(std::span<const OpKind> kinds, int channels, int stride, ad::Rng& rng);

  // weights: softmax of the logit table, (1, 1, rows, k); row selects this
  // edge's weights.
  ad::Var forward(ad::Graph& g, ad::Var x, ad::Var weights, int row,
                  const SearchForwardOptions& opts);
  void collect_parameters(std::vector<ad::Parameter*>& out);

  const std::vector<OpKind>& kinds() const { return kinds_; }
  Module& op(int j) { return *ops_[j]; }
  int stride() const { return stride_; }

 private:
  std::vector<OpKind> kinds_;
  std::vector<ModulePtr> ops_;
  int stride_;
};

// sum_o softmax(logits)_o * o(x) for a single edge. logits is (1, 1, 1, k).
ad::Var mixed_op_forward(ad::Graph& g, ad::Var x, ad::Var logits, MixedOp& op,
                         const SearchForwardOptions& opts = {});

class SearchCell {
 public:
  SearchCell(const CellSlot& slot, const CellTopology& topology,
             const OperationSpace& space, ad::Rng& rng);

  ad::Var forward(ad::Graph& g, ad::Var s_prev_prev, ad::Var s_prev,
                  ad::Var weights, const SearchForwardOptions& opts);
  void collect_parameters(std::vector<ad::Parameter*>& out);

  bool is_reduction() const { return slot_.reduction; }
  const CellSlot& slot() const { return slot_; }
  int mixed_edge_count() const { return static_cast<int>(edges_.size()); }
  MixedOp& edge(int e) { return edges_[e]; }
  Module& preprocess(int which) { return which == 0 ? *pre0_ : *pre1_; }

 private:
  CellSlot slot_;
  CellTopology topology_;
  ModulePtr pre0_;
  ModulePtr pre1_;
  std::vector<MixedOp> edges_;
};

class SuperNetwork {
 public:
  SuperNetwork(const NetworkPlan& plan, const OperationSpace& space,
               const CellTopology& topology, AlphaTable alphas, ad::Rng& rng);

  // input (n, 3, t, f) -> logits (n, 1, 1, n_classes)
  ad::Var forward(ad::Graph& g, ad::Var input, const SearchForwardOptions& opts);

  std::vector<ad::Parameter*> weights();
  std::vector<ad::Parameter*> arch_parameters();

  const NetworkPlan& plan() const { return plan_; }
  const OperationSpace& space() const { return space_; }
  const CellTopology& topology() const { return topology_; }
  AlphaTable& alphas() { return alphas_; }
  const AlphaTable& alphas() const { return alphas_; }
  std::vector<SearchCell>& cells() { return cells_; }
  Stem& stem() { return stem_; }
  Head& head() { return *head_; }

 private:
  NetworkPlan plan_;
  OperationSpace space_;
  CellTopology topology_;
  AlphaTable alphas_;
  Stem stem_;
  std::vector<SearchCell> cells_;
  std::unique_ptr<Head> head_;
};

// Shapes and topology are checked against the space before construction.
SuperNetwork build_supernet(const NetworkPlan& plan, const OperationSpace& space,
                            const CellTopology& topology, AlphaTable alphas,
                            ad::Rng& rng);

}  // namespace asrnas
