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

#include "asrnas/supernet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace asrnas {

CellTopology CellTopology::make(int n_nodes) {
  if (n_nodes < 1) throw std::invalid_argument("cell topology: n_nodes must be >= 1");
  CellTopology t;
  t.n_nodes = n_nodes;
  for (int i = 0; i < n_nodes; ++i) {
    for (int j = -2; j < i; ++j) t.edges.push_back({i, j});
    t.concat.push_back(i);
  }
  return t;
}

int CellTopology::edge_index(int node, int from) {
  return node * (node + 3) / 2 + from + 2;
}

AlphaTable make_alphas(int n_edges, int n_ops, ad::Rng& rng, double scale) {
  AlphaTable a = make_alphas(n_edges, n_ops, 0.0);
  for (double& v : a.normal.value.values()) v = scale * ad::normal01(rng);
  for (double& v : a.reduction.value.values()) v = scale * ad::normal01(rng);
  return a;
}

AlphaTable make_alphas(int n_edges, int n_ops, double fill) {
  AlphaTable a;
  a.normal = ad::Parameter({1, 1, n_edges, n_ops}, "alpha.normal");
  a.reduction = ad::Parameter({1, 1, n_edges, n_ops}, "alpha.reduction");
  a.normal.value.fill(fill);
  a.reduction.value.fill(fill);
  return a;
}

std::vector<double> edge_weights(const AlphaTable& alphas, CellType t, int edge) {
  const int k = alphas.n_ops();
  std::vector<double> w(k);
  double mx = alphas.at(t, edge, 0);
  for (int j = 1; j < k; ++j) mx = std::max(mx, alphas.at(t, edge, j));
  double z = 0.0;
  for (int j = 0; j < k; ++j) {
    w[j] = std::exp(alphas.at(t, edge, j) - mx);
    z += w[j];
  }
  for (double& v : w) v /= z;
  return w;
}

std::vector<int> NetworkPlan::reduction_positions() const {
  if (l_cells <= 0) return {};
  return {l_cells / 3, 2 * l_cells / 3};
}

bool NetworkPlan::is_reduction(int cell) const {
  const auto r = reduction_positions();
  return std::find(r.begin(), r.end(), cell) != r.end();
}

void NetworkPlan::validate(bool allow_empty) const {
  if (!(l_cells >= 3 || (allow_empty && l_cells == 0))) {
    throw std::invalid_argument("plan: l_cells must be >= 3, got " +
                                std::to_string(l_cells));
  }
  if (init_channels < 2 || init_channels % 2 != 0) {
    throw std::invalid_argument("plan: init_channels must be even and >= 2, got " +
                                std::to_string(init_channels));
  }
  if (n_nodes < 1) throw std::invalid_argument("plan: n_nodes must be >= 1");
  if (in_channels < 1) throw std::invalid_argument("plan: in_channels must be >= 1");
  if (freq_bins < 4 || freq_bins % 4 != 0) {
    throw std::invalid_argument("plan: freq_bins must be a positive multiple of 4");
  }
  if (n_classes < 2) throw std::invalid_argument("plan: n_classes must be >= 2");
  for (int w : head_widths) {
    if (w < 1) throw std::invalid_argument("plan: head_widths entries must be >= 1");
  }
}

std::vector<CellSlot> plan_cells(const NetworkPlan& plan, int h, int w) {
  std::vector<CellSlot> slots;
  int c_pp = plan.init_channels;
  int c_p = plan.init_channels;
  int c_cell = plan.init_channels;
  bool reduction_prev = false;
  for (int i = 0; i < plan.l_cells; ++i) {
    CellSlot s;
    s.index = i;
    s.reduction = plan.is_reduction(i);
    if (s.reduction) c_cell *= 2;
    s.reduction_prev = reduction_prev;
    s.c_prev_prev = c_pp;
    s.c_prev = c_p;
    s.c_cell = c_cell;
    s.h_prev = h;
    s.w_prev = w;
    s.c_out = plan.n_nodes * c_cell;
    slots.push_back(s);
    if (s.reduction) {
      h /= 2;
      w /= 2;
    }
    reduction_prev = s.reduction;
    c_pp = c_p;
    c_p = s.c_out;
  }
  return slots;
}

void check_alignment(const NetworkPlan& plan, const Shape& input) {
  if (input.c != plan.in_channels) {
    throw ShapeError("network input has " + std::to_string(input.c) +
                     " channels, expected " + std::to_string(plan.in_channels));
  }
  const int factor = plan.l_cells > 0 ? 4 : 1;
  if (input.h % factor != 0 || input.h < factor) {
    throw ShapeError("network input time length " + std::to_string(input.h) +
                     " is not aligned to a multiple of 4 frames");
  }
  if (input.w != plan.freq_bins) {
    throw ShapeError("network input has " + std::to_string(input.w) +
                     " frequency bins, expected " + std::to_string(plan.freq_bins));
  }
}

Stem::Stem(const NetworkPlan& plan, bool affine, ad::Rng& rng)
    : weight_({plan.init_channels, plan.in_channels, 3, 3}, "stem.conv"),
      affine_(affine) {
  const double std = std::sqrt(2.0 / (plan.in_channels * 9));
  for (double& v : weight_.value.values()) v = std * ad::normal01(rng);
  if (affine_) {
    gamma_ = ad::Parameter({1, plan.init_channels, 1, 1}, "stem.gamma");
    beta_ = ad::Parameter({1, plan.init_channels, 1, 1}, "stem.beta");
    gamma_.value.fill(1.0);
  }
}

ad::Var Stem::forward(ad::Graph& g, ad::Var x, const ForwardOptions& opts) {
  kernels::ConvSpec spec;
  spec.pad_h = spec.pad_w = 1;
  const ad::Var y = ad::conv2d(x, g.parameter(weight_), spec);
  if (!affine_) return ad::batch_norm(y, {}, {}, 1e-5, opts.norm_stats);
  return ad::batch_norm(y, g.parameter(gamma_), g.parameter(beta_), 1e-5,
                        opts.norm_stats);
}

void Stem::collect_parameters(std::vector<ad::Parameter*>& out) {
  out.push_back(&weight_);
  if (affine_) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
}

CostReport stem_cost(const NetworkPlan& plan, int h, int w, bool affine) {
  CostReport r;
  const std::int64_t c = plan.init_channels;
  r.params = c * plan.in_channels * 9 + (affine ? 2 * c : 0);
  r.macs = static_cast<std::int64_t>(h) * w * c * plan.in_channels * 9;
  r.seq_depth = 2;
  r.activations = 2;
  return r;
}

Head::Head(int in_features, const NetworkPlan& plan, ad::Rng& rng) {
  std::vector<int> widths = plan.head_widths;
  widths.push_back(plan.n_classes);
  int fan_in = in_features;
  for (int width : widths) {
    Layer layer{ad::Parameter({1, 1, width, fan_in}, "fc.weight"),
                ad::Parameter({1, 1, 1, width}, "fc.bias")};
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : layer.weight.value.values()) {
      v = bound * (2.0 * ad::uniform01(rng) - 1.0);
    }
    layers_.push_back(std::move(layer));
    fan_in = width;
  }
}

ad::Var Head::forward(ad::Graph& g, ad::Var x) {
  x = ad::flatten_frames(x);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = ad::linear(x, g.parameter(layers_[i].weight), g.parameter(layers_[i].bias));
    if (i + 1 < layers_.size()) x = ad::relu(x);
  }
  return ad::mean_time(x);
}

void Head::collect_parameters(std::vector<ad::Parameter*>& out) {
  for (Layer& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
}

CostReport head_cost(int in_features, int frames, const NetworkPlan& plan) {
  std::vector<int> widths = plan.head_widths;
  widths.push_back(plan.n_classes);
  CostReport r;
  std::int64_t fan_in = in_features;
  r.seq_depth = 1;
  r.activations = 1;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    r.params += fan_in * widths[i] + widths[i];
    r.macs += static_cast<std::int64_t>(frames) * fan_in * widths[i];
    const int layers = i + 1 < widths.size() ? 2 : 1;
    r.seq_depth += layers;
    r.activations += layers;
    fan_in = widths[i];
  }
  r.seq_depth += 1;  // mean over time
  r.activations += 1;
  return r;
}

MixedOp::MixedOp(std::span<const OpKind> kinds, int channels, int stride,
                 ad::Rng& rng)
    : kinds_(kinds.begin(), kinds.end()), stride_(stride) {
  if (kinds_.empty()) throw std::invalid_argument("mixed op: no candidates");
  for (OpKind k : kinds_) {
    ops_.push_back(instantiate(k, channels, stride, /*affine=*/false, rng));
  }
}

ad::Var MixedOp::forward(ad::Graph& g, ad::Var x, ad::Var weights, int row,
                         const SearchForwardOptions& opts) {
  std::vector<ad::Var> outs(kinds_.size());
  int zero_index = -1;
  for (std::size_t j = 0; j < kinds_.size(); ++j) {
    if (kinds_[j] == OpKind::zero) {
      zero_index = static_cast<int>(j);
      continue;
    }
    ad::Var y = ops_[j]->forward(g, x, opts);
    const bool regularized = kinds_[j] == OpKind::dil_conv_3x3 ||
                             kinds_[j] == OpKind::dil_conv_5x5 ||
                             kinds_[j] == OpKind::avg_pool_3x3;
    if (regularized && opts.dropout_rate > 0.0) {
      if (!opts.rng) throw std::invalid_argument("mixed op: dropout needs an rng");
      y = ad::dropout(y, opts.dropout_rate, *opts.rng);
    }
    outs[j] = y;
  }
  if (std::none_of(outs.begin(), outs.end(), [](ad::Var v) { return v.valid(); })) {
    outs[zero_index] = ops_[zero_index]->forward(g, x, opts);
  }
  return ad::mix(outs, weights, row);
}

void MixedOp::collect_parameters(std::vector<ad::Parameter*>& out) {
  for (auto& op : ops_) op->collect_parameters(out);
}

ad::Var mixed_op_forward(ad::Graph& g, ad::Var x, ad::Var logits, MixedOp& op,
                         const SearchForwardOptions& opts) {
  const Shape s = g.value(logits).shape();
  if (s.n != 1 || s.c != 1 || s.h != 1 ||
      s.w != static_cast<int>(op.kinds().size())) {
    throw std::invalid_argument("mixed_op_forward: " + std::to_string(s.w) +
                                " logits for " + std::to_string(op.kinds().size()) +
                                " candidates");
  }
  return op.forward(g, x, ad::softmax(logits), 0, opts);
}

SearchCell::SearchCell(const CellSlot& slot, const CellTopology& topology,
                       const OperationSpace& space, ad::Rng& rng)
    : slot_(slot), topology_(topology) {
  if (space.n_edges() != topology.n_edges()) {
    throw std::invalid_argument("search cell: space has " +
                                std::to_string(space.n_edges()) + " edges, topology " +
                                std::to_string(topology.n_edges()));
  }
  if (slot.reduction_prev) {
    pre0_ = make_factorized_reduce(slot.c_prev_prev, slot.c_cell, false, rng);
  } else {
    pre0_ = make_relu_conv_bn(slot.c_prev_prev, slot.c_cell, 1, 1, 0, false, rng);
  }
  pre1_ = make_relu_conv_bn(slot.c_prev, slot.c_cell, 1, 1, 0, false, rng);
  const CellType type = slot.reduction ? CellType::reduction : CellType::normal;
  for (int e = 0; e < topology.n_edges(); ++e) {
    const int stride = slot.reduction && topology.edges[e].from < 0 ? 2 : 1;
    edges_.emplace_back(space.candidates(type, e), slot.c_cell, stride, rng);
  }
}

ad::Var SearchCell::forward(ad::Graph& g, ad::Var s_prev_prev, ad::Var s_prev,
                            ad::Var weights, const SearchForwardOptions& opts) {
  const Shape in = s_prev.shape();
  if (slot_.reduction && (in.h % 2 != 0 || in.w % 2 != 0)) {
    throw ShapeError("reduction cell " + std::to_string(slot_.index) +
                     ": spatial size (" + std::to_string(in.h) + "," +
                     std::to_string(in.w) + ") is not aligned to a multiple of 2");
  }
  std::vector<ad::Var> states{pre0_->forward(g, s_prev_prev, opts),
                              pre1_->forward(g, s_prev, opts)};
  int e = 0;
  for (int i = 0; i < topology_.n_nodes; ++i) {
    std::vector<ad::Var> terms;
    for (int j = -2; j < i; ++j, ++e) {
      terms.push_back(edges_[e].forward(g, states[j + 2], weights, e, opts));
    }
    states.push_back(ad::add_n(terms));
  }
  std::vector<ad::Var> outs;
  for (int node : topology_.concat) outs.push_back(states[node + 2]);
  return ad::concat_channels(outs);
}

void SearchCell::collect_parameters(std::vector<ad::Parameter*>& out) {
  pre0_->collect_parameters(out);
  pre1_->collect_parameters(out);
  for (MixedOp& op : edges_) op.collect_parameters(out);
}

SuperNetwork::SuperNetwork(const NetworkPlan& plan, const OperationSpace& space,
                           const CellTopology& topology, AlphaTable alphas,
                           ad::Rng& rng)
    : plan_(plan),
      space_(space),
      topology_(topology),
      alphas_(std::move(alphas)),
      stem_(plan, /*affine=*/true, rng) {
  plan_.validate();
  if (plan_.n_nodes != topology_.n_nodes) {
    throw std::invalid_argument("supernet: plan.n_nodes disagrees with topology");
  }
  const int k = space_.uniform_size();
  if (k < 1) throw std::invalid_argument("supernet: edges must share a candidate count");
  const Shape expect{1, 1, topology_.n_edges(), k};
  if (alphas_.normal.value.shape() != expect ||
      alphas_.reduction.value.shape() != expect) {
    throw std::invalid_argument("supernet: alpha table shape " +
                                alphas_.normal.value.shape().str() + " expected " +
                                expect.str());
  }
  // Only the channel/reduction bookkeeping matters here; spatial sizes are
  // checked at forward time.
  const auto slots = plan_cells(plan_, 4, plan_.freq_bins);
  for (const CellSlot& slot : slots) cells_.emplace_back(slot, topology_, space_, rng);
  const int c_final = slots.empty() ? plan_.init_channels : slots.back().c_out;
  head_ = std::make_unique<Head>(c_final * (plan_.freq_bins / 4), plan_, rng);
}

ad::Var SuperNetwork::forward(ad::Graph& g, ad::Var input,
                              const SearchForwardOptions& opts) {
  check_alignment(plan_, input.shape());
  const ad::Var w_normal = ad::softmax(g.parameter(alphas_.normal));
  const ad::Var w_reduce = ad::softmax(g.parameter(alphas_.reduction));
  ad::Var s0 = stem_.forward(g, input, opts);
  ad::Var s1 = s0;
  for (SearchCell& cell : cells_) {
    const ad::Var out =
        cell.forward(g, s0, s1, cell.is_reduction() ? w_reduce : w_normal, opts);
    s0 = s1;
    s1 = out;
  }
  return head_->forward(g, s1);
}

std::vector<ad::Parameter*> SuperNetwork::weights() {
  std::vector<ad::Parameter*> out;
  stem_.collect_parameters(out);
  for (SearchCell& cell : cells_) cell.collect_parameters(out);
  head_->collect_parameters(out);
  return out;
}

std::vector<ad::Parameter*> SuperNetwork::arch_parameters() {
  return {&alphas_.normal, &alphas_.reduction};
}

SuperNetwork build_supernet(const NetworkPlan& plan, const OperationSpace& space,
                            const CellTopology& topology, AlphaTable alphas,
                            ad::Rng& rng) {
  return SuperNetwork(plan, space, topology, std::move(alphas), rng);
}

}  // namespace asrnas
