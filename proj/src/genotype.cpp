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

#include "asrnas/genotype.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace asrnas {
namespace {

using json = nlohmann::json;

struct EdgeChoice {
  int edge = -1;
  int from = 0;
  int op_index = -1;  // column in the alpha row, -1 if no eligible candidate
  double weight = 0.0;
};

// Best candidate of an edge among those accepted by `eligible`.
template <typename Pred>
EdgeChoice best_candidate(const std::vector<OpKind>& cands,
                          const std::vector<double>& weights, Pred eligible) {
  EdgeChoice best;
  for (int j = 0; j < static_cast<int>(cands.size()); ++j) {
    if (!eligible(cands[j])) continue;
    if (best.op_index < 0 || weights[j] > best.weight ||
        (weights[j] == best.weight && cands[j] < cands[best.op_index])) {
      best.op_index = j;
      best.weight = weights[j];
    }
  }
  return best;
}

struct DerivedCell {
  std::vector<GeneEdge> edges;
  std::vector<double> weights;  // weight of each entry's chosen op
  std::vector<int> edge_ids;
};

DerivedCell derive_cell(const AlphaTable& alphas, const OperationSpace& space,
                        CellType type, int n_nodes) {
  DerivedCell cell;
  for (int i = 0; i < n_nodes; ++i) {
    std::vector<EdgeChoice> choices;
    for (int j = -2; j < i; ++j) {
      const int e = CellTopology::edge_index(i, j);
      const auto& cands = space.candidates(type, e);
      const auto w = edge_weights(alphas, type, e);
      EdgeChoice c = best_candidate(cands, w, [](OpKind k) { return k != OpKind::zero; });
      if (c.op_index < 0) continue;
      c.edge = e;
      c.from = j;
      choices.push_back(c);
    }
    if (choices.size() < 2) {
      throw DerivationError(std::string(cell_type_name(type)) + " node " +
                            std::to_string(i) +
                            ": fewer than two incoming edges have a non-zero candidate");
    }
    // Stable sort keeps the earlier source first among equal weights.
    std::stable_sort(choices.begin(), choices.end(),
                     [](const EdgeChoice& a, const EdgeChoice& b) { return a.weight > b.weight; });
    choices.resize(2);
    std::sort(choices.begin(), choices.end(),
              [](const EdgeChoice& a, const EdgeChoice& b) { return a.from < b.from; });
    for (const EdgeChoice& c : choices) {
      cell.edges.push_back({i, c.from, space.candidates(type, c.edge)[c.op_index]});
      cell.weights.push_back(c.weight);
      cell.edge_ids.push_back(c.edge);
    }
  }
  return cell;
}

void limit_avg_pool(DerivedCell& cell, const AlphaTable& alphas,
                    const OperationSpace& space, int max_avg_pool) {
  auto count = [&] {
    return std::count_if(cell.edges.begin(), cell.edges.end(),
                         [](const GeneEdge& g) { return g.op == OpKind::avg_pool_3x3; });
  };
  while (count() > max_avg_pool) {
    int victim = -1;
    for (int k = 0; k < static_cast<int>(cell.edges.size()); ++k) {
      if (cell.edges[k].op != OpKind::avg_pool_3x3) continue;
      if (victim < 0 || cell.weights[k] < cell.weights[victim]) victim = k;
    }
    const int e = cell.edge_ids[victim];
    const auto& cands = space.candidates(CellType::normal, e);
    const auto w = edge_weights(alphas, CellType::normal, e);
    const EdgeChoice next = best_candidate(cands, w, [](OpKind k) {
      return k != OpKind::zero && k != OpKind::avg_pool_3x3;
    });
    if (next.op_index < 0) {
      throw DerivationError("normal node " + std::to_string(cell.edges[victim].node) +
                            " edge from " + std::to_string(cell.edges[victim].from) +
                            ": cannot honor max_avg_pool = " + std::to_string(max_avg_pool) +
                            ", no non-zero alternative to avg_pool_3x3");
    }
    cell.edges[victim].op = cands[next.op_index];
    cell.weights[victim] = next.weight;
  }
}

void check_cell(const Genotype& g, CellType type, int max_avg_pool,
                std::vector<std::string>& out) {
  const std::string name(cell_type_name(type));
  const auto& cell = g.cell(type);
  if (static_cast<int>(cell.size()) != 2 * g.n_nodes) {
    out.push_back(name + ": expected " + std::to_string(2 * g.n_nodes) + " edges, found " +
                  std::to_string(cell.size()));
  }
  std::map<int, std::vector<int>> sources;
  int avg = 0;
  for (std::size_t k = 0; k < cell.size(); ++k) {
    const GeneEdge& e = cell[k];
    const std::string where = name + "[" + std::to_string(k) + "] (node " +
                              std::to_string(e.node) + ", from " + std::to_string(e.from) + ")";
    if (e.node < 0 || e.node >= g.n_nodes) {
      out.push_back(where + ": node index out of range");
      continue;
    }
    if (e.from < -2 || e.from >= e.node) {
      out.push_back(where + ": source must be -2, -1 or an earlier node");
    }
    if (e.op == OpKind::zero) out.push_back(where + ": zero operation is not allowed");
    const auto& ops = canonical_ops(g.variant);
    if (std::find(ops.begin(), ops.end(), e.op) == ops.end()) {
      out.push_back(where + ": " + std::string(op_name(e.op)) + " is not in the " +
                    std::string(variant_name(g.variant)) + " space");
    }
    if (e.op == OpKind::avg_pool_3x3) ++avg;
    sources[e.node].push_back(e.from);
  }
  for (int i = 0; i < g.n_nodes; ++i) {
    const auto& s = sources[i];
    if (s.size() != 2) {
      out.push_back(name + " node " + std::to_string(i) + ": expected 2 inputs, found " +
                    std::to_string(s.size()));
    } else if (s[0] == s[1]) {
      out.push_back(name + " node " + std::to_string(i) + ": both inputs come from " +
                    std::to_string(s[0]));
    }
  }
  if (type == CellType::normal && avg > max_avg_pool) {
    out.push_back("normal: " + std::to_string(avg) +
                  " avg_pool_3x3 entries exceed max_avg_pool = " + std::to_string(max_avg_pool));
  }
}

json cell_json(const std::vector<GeneEdge>& cell) {
  json arr = json::array();
  for (const GeneEdge& e : cell) {
    arr.push_back({{"node", e.node}, {"from", e.from}, {"op", std::string(op_name(e.op))}});
  }
  return arr;
}

const json& require_field(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw GenotypeParseError(path + ": expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) {
    throw GenotypeParseError(path + (path.empty() ? "" : ".") + key + ": missing field");
  }
  return *it;
}

int require_int(const json& obj, const std::string& key, const std::string& path) {
  const json& v = require_field(obj, key, path);
  if (!v.is_number_integer()) {
    throw GenotypeParseError(path + (path.empty() ? "" : ".") + key + ": expected an integer");
  }
  return v.get<int>();
}

std::vector<GeneEdge> parse_cell(const json& doc, const std::string& key) {
  const json& arr = require_field(doc, key, "");
  if (!arr.is_array()) throw GenotypeParseError(key + ": expected a list");
  std::vector<GeneEdge> cell;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string path = key + "[" + std::to_string(i) + "]";
    GeneEdge e;
    e.node = require_int(arr[i], "node", path);
    e.from = require_int(arr[i], "from", path);
    const json& op = require_field(arr[i], "op", path);
    if (!op.is_string()) throw GenotypeParseError(path + ".op: expected a string");
    const auto kind = parse_op(op.get<std::string>());
    if (!kind) {
      throw GenotypeParseError(path + ".op: unknown operation '" + op.get<std::string>() + "'");
    }
    e.op = *kind;
    cell.push_back(e);
  }
  std::stable_sort(cell.begin(), cell.end(), [](const GeneEdge& a, const GeneEdge& b) {
    return a.node != b.node ? a.node < b.node : a.from < b.from;
  });
  return cell;
}

std::string state_label(int from) {
  if (from == -2) return "c_{k-2}";
  if (from == -1) return "c_{k-1}";
  return std::to_string(from);
}

void render_cell(std::ostringstream& os, const Genotype& g, CellType type) {
  const std::string p(cell_type_name(type));
  auto id = [&](const std::string& s) { return "\"" + p + ":" + s + "\""; };
  os << "  subgraph cluster_" << p << " {\n";
  os << "    label=\"" << p << " cell\";\n";
  os << "    " << id("c_{k-2}") << " [label=\"c_{k-2}\", shape=box];\n";
  os << "    " << id("c_{k-1}") << " [label=\"c_{k-1}\", shape=box];\n";
  for (int i = 0; i < g.n_nodes; ++i) {
    os << "    " << id(std::to_string(i)) << " [label=\"" << i << "\", shape=circle];\n";
  }
  os << "    " << id("c_{k}") << " [label=\"c_{k}\", shape=box];\n";
  for (const GeneEdge& e : g.cell(type)) {
    os << "    " << id(state_label(e.from)) << " -> " << id(std::to_string(e.node))
       << " [label=\"" << op_name(e.op) << "\"];\n";
  }
  for (int node : g.concat) {
    os << "    " << id(std::to_string(node)) << " -> " << id("c_{k}")
       << " [style=dashed];\n";
  }
  os << "  }\n";
}

}  // namespace

int nodes_for_edges(int n_edges) {
  for (int n = 1; n * (n + 3) / 2 <= n_edges; ++n) {
    if (n * (n + 3) / 2 == n_edges) return n;
  }
  throw std::invalid_argument("no cell topology has " + std::to_string(n_edges) + " edges");
}

Genotype derive(const AlphaTable& alphas, const OperationSpace& space,
                int max_avg_pool) {
  if (alphas.n_edges() != space.n_edges()) {
    throw std::invalid_argument("derive: alpha table and space disagree on edges");
  }
  if (space.uniform_size() != alphas.n_ops()) {
    throw std::invalid_argument("derive: alpha row width disagrees with the space");
  }
  Genotype g;
  g.variant = space.variant();
  g.n_nodes = nodes_for_edges(space.n_edges());
  DerivedCell normal = derive_cell(alphas, space, CellType::normal, g.n_nodes);
  limit_avg_pool(normal, alphas, space, max_avg_pool);
  g.normal = std::move(normal.edges);
  g.reduction = derive_cell(alphas, space, CellType::reduction, g.n_nodes).edges;
  for (int i = 0; i < g.n_nodes; ++i) g.concat.push_back(i);
  return g;
}

std::vector<std::string> validate(const Genotype& g, int max_avg_pool) {
  std::vector<std::string> out;
  if (g.n_nodes < 1) out.push_back("n_nodes must be >= 1");
  check_cell(g, CellType::normal, max_avg_pool, out);
  check_cell(g, CellType::reduction, max_avg_pool, out);
  std::vector<int> all(std::max(g.n_nodes, 0));
  for (int i = 0; i < g.n_nodes; ++i) all[i] = i;
  if (std::set<int>(g.concat.begin(), g.concat.end()) != std::set<int>(all.begin(), all.end()) ||
      g.concat.size() != all.size()) {
    out.push_back("concat: must list every intermediate node exactly once");
  }
  return out;
}

std::string serialize(const Genotype& g) {
  json doc = {{"version", 1},
              {"variant", std::string(variant_name(g.variant))},
              {"n_nodes", g.n_nodes},
              {"normal", cell_json(g.normal)},
              {"reduction", cell_json(g.reduction)},
              {"concat", g.concat}};
  return doc.dump(2) + "\n";
}

Genotype parse_genotype(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw GenotypeParseError(std::string("genotype: ") + e.what());
  }
  if (!doc.is_object()) throw GenotypeParseError("genotype: top level must be an object");
  const int version = require_int(doc, "version", "");
  if (version != 1) {
    throw GenotypeParseError("version: unsupported value " + std::to_string(version));
  }
  Genotype g;
  const json& variant = require_field(doc, "variant", "");
  const auto v = variant.is_string() ? parse_variant(variant.get<std::string>()) : std::nullopt;
  if (!v) throw GenotypeParseError("variant: expected 'original' or 'revised'");
  g.variant = *v;
  g.n_nodes = require_int(doc, "n_nodes", "");
  g.normal = parse_cell(doc, "normal");
  g.reduction = parse_cell(doc, "reduction");
  const json& concat = require_field(doc, "concat", "");
  if (!concat.is_array()) throw GenotypeParseError("concat: expected a list");
  for (std::size_t i = 0; i < concat.size(); ++i) {
    if (!concat[i].is_number_integer()) {
      throw GenotypeParseError("concat[" + std::to_string(i) + "]: expected an integer");
    }
    g.concat.push_back(concat[i].get<int>());
  }
  return g;
}

std::string render_dot(const Genotype& g, DotView view) {
  std::ostringstream os;
  os << "digraph genotype {\n";
  os << "  rankdir=LR;\n";
  if (view != DotView::reduction) render_cell(os, g, CellType::normal);
  if (view != DotView::normal) render_cell(os, g, CellType::reduction);
  os << "}\n";
  return os.str();
}

CostReport network_cost(const Genotype& g, const NetworkPlan& plan, int frames) {
  plan.validate(/*allow_empty=*/true);
  if (plan.n_nodes != g.n_nodes) {
    throw std::invalid_argument("network_cost: plan.n_nodes disagrees with the genotype");
  }
  const int w = plan.freq_bins;
  CostReport total = stem_cost(plan, frames, w, /*affine=*/true);
  const auto slots = plan_cells(plan, frames, w);
  for (const CellSlot& s : slots) {
    if (s.reduction_prev) {
      total += factorized_reduce_cost(s.c_prev_prev, s.c_cell, 2 * s.h_prev, 2 * s.w_prev, true);
    } else {
      total += relu_conv_bn_cost(s.c_prev_prev, s.c_cell, 1, s.h_prev, s.w_prev, 1, 0, true);
    }
    total += relu_conv_bn_cost(s.c_prev, s.c_cell, 1, s.h_prev, s.w_prev, 1, 0, true);
    const auto& cell = g.cell(s.reduction ? CellType::reduction : CellType::normal);
    for (const GeneEdge& e : cell) {
      const int stride = s.reduction && e.from < 0 ? 2 : 1;
      const int h = stride == 1 && s.reduction ? s.h_prev / 2 : s.h_prev;
      const int wd = stride == 1 && s.reduction ? s.w_prev / 2 : s.w_prev;
      total += op_cost(e.op, s.c_cell, h, wd, stride, /*affine=*/true);
    }
  }
  const int reductions = static_cast<int>(plan.reduction_positions().size());
  const int c_final = slots.empty() ? plan.init_channels : slots.back().c_out;
  const int t_final = frames >> reductions;
  total += head_cost(c_final * (w >> reductions), t_final, plan);
  return total;
}

}  // namespace asrnas
