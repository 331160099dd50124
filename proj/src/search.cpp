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

#include "asrnas/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace asrnas {
namespace {

using json = nlohmann::json;

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw std::invalid_argument("search config: " + field + " " + what);
}

double batch_loss_and_backward(SuperNetwork& net, const Batch& batch,
                               const SearchForwardOptions& opts) {
  ad::Graph g;
  const ad::Var logits = net.forward(g, g.constant(batch.input), opts);
  const ad::Var loss = ad::cross_entropy_loss(logits, batch.labels);
  const double value = loss.value()[0];
  g.backward(loss);
  return value;
}

json alpha_rows(const AlphaTable& alphas, const OperationSpace& space, CellType t) {
  json rows = json::array();
  for (int e = 0; e < alphas.n_edges(); ++e) {
    json ops = json::array();
    json logits = json::array();
    const auto& cands = space.candidates(t, e);
    for (int j = 0; j < alphas.n_ops(); ++j) {
      ops.push_back(std::string(op_name(cands[j])));
      logits.push_back(alphas.at(t, e, j));
    }
    rows.push_back({{"edge", e}, {"ops", ops}, {"logits", logits}});
  }
  return rows;
}

json config_json(const SearchConfig& c) {
  return {{"stages", c.stages},
          {"epochs_per_stage", c.epochs_per_stage},
          {"warmup_epochs", c.warmup_epochs},
          {"batch_size", c.batch_size},
          {"init_channels", c.init_channels},
          {"n_nodes", c.n_nodes},
          {"head_widths", c.head_widths},
          {"w_lr", c.w_lr},
          {"w_momentum", c.w_momentum},
          {"w_decay", c.w_decay},
          {"alpha_lr", c.alpha_lr},
          {"alpha_decay", c.alpha_decay},
          {"dropout_init", c.dropout_init},
          {"dropout_decay_gamma", c.dropout_decay_gamma},
          {"stage_depths", c.stage_depths},
          {"stage_op_counts", c.stage_op_counts},
          {"max_avg_pool", c.max_avg_pool},
          {"seeds", c.seeds}};
}

json nullable(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

}  // namespace

void SearchConfig::validate() const {
  require(stages >= 1, "stages", "must be >= 1");
  require(epochs_per_stage >= 1, "epochs_per_stage", "must be >= 1");
  require(warmup_epochs >= 0 && warmup_epochs < epochs_per_stage, "warmup_epochs",
          "must satisfy 0 <= warmup_epochs < epochs_per_stage");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(init_channels >= 2 && init_channels % 2 == 0, "init_channels",
          "must be even and >= 2");
  require(n_nodes >= 1, "n_nodes", "must be >= 1");
  require(w_lr >= 0.0 && alpha_lr >= 0.0, "w_lr/alpha_lr", "must be >= 0");
  require(static_cast<int>(dropout_init.size()) == stages, "dropout_init",
          "needs one entry per stage");
  for (double p : dropout_init) require(p >= 0.0 && p < 1.0, "dropout_init", "entries must be in [0, 1)");
  require(dropout_decay_gamma > 0.0 && dropout_decay_gamma <= 1.0,
          "dropout_decay_gamma", "must be in (0, 1]");
  require(static_cast<int>(stage_depths.size()) == stages, "stage_depths",
          "needs one entry per stage");
  require(static_cast<int>(stage_op_counts.size()) == stages, "stage_op_counts",
          "needs one entry per stage");
  for (int s = 0; s < stages; ++s) {
    require(stage_depths[s] >= 3, "stage_depths", "entries must be >= 3");
    if (s > 0) {
      require(stage_depths[s] > stage_depths[s - 1], "stage_depths",
              "must be strictly increasing");
      require(stage_op_counts[s] < stage_op_counts[s - 1], "stage_op_counts",
              "must be strictly decreasing");
    }
  }
  require(stage_op_counts.front() == 8, "stage_op_counts",
          "must start from the full 8-operation space");
  require(stage_op_counts.back() >= 2, "stage_op_counts", "last entry must be >= 2");
  require(max_avg_pool >= 0, "max_avg_pool", "must be >= 0");
  require(seeds >= 1, "seeds", "must be >= 1");
}

std::pair<std::vector<Utterance>, std::vector<Utterance>> split_dataset(
    std::span<const Utterance> dataset, std::uint64_t seed) {
  if (dataset.empty()) throw std::invalid_argument("split_dataset: empty dataset");
  if (dataset.size() < 2) {
    throw std::invalid_argument("split_dataset: need at least 2 utterances");
  }
  ad::Rng rng(derive_seed(seed, 0x5011));
  const auto order = shuffled_indices(dataset.size(), rng);
  const std::size_t first = (dataset.size() + 1) / 2;
  std::pair<std::vector<Utterance>, std::vector<Utterance>> out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < first ? out.first : out.second).push_back(dataset[order[i]]);
  }
  return out;
}

double dropout_rate(int stage, int epoch, const SearchConfig& cfg) {
  if (stage < 0 || stage >= static_cast<int>(cfg.dropout_init.size())) {
    throw std::out_of_range("dropout_rate: stage out of range");
  }
  if (epoch < 0) throw std::out_of_range("dropout_rate: negative epoch");
  return cfg.dropout_init[stage] * std::pow(cfg.dropout_decay_gamma, epoch);
}

OperationSpace prune_ops(const AlphaTable& alphas, const OperationSpace& space,
                         int keep_k) {
  if (alphas.n_edges() != space.n_edges()) {
    throw std::invalid_argument("prune_ops: alpha table and space disagree on edges");
  }
  std::vector<std::vector<OpKind>> tables[2];
  for (CellType t : {CellType::normal, CellType::reduction}) {
    auto& table = tables[static_cast<int>(t)];
    for (int e = 0; e < space.n_edges(); ++e) {
      const auto& cands = space.candidates(t, e);
      const int k = static_cast<int>(cands.size());
      if (keep_k < 1 || keep_k > k) {
        throw std::invalid_argument("prune_ops: keep_k " + std::to_string(keep_k) +
                                    " outside [1, " + std::to_string(k) + "]");
      }
      if (k != alphas.n_ops()) {
        throw std::invalid_argument("prune_ops: alpha row width disagrees with space");
      }
      std::vector<int> order(k);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        const double la = alphas.at(t, e, a);
        const double lb = alphas.at(t, e, b);
        if (la != lb) return la > lb;
        return cands[a] < cands[b];
      });
      order.resize(keep_k);
      std::sort(order.begin(), order.end(),
                [&](int a, int b) { return cands[a] < cands[b]; });
      std::vector<OpKind> kept;
      for (int j : order) kept.push_back(cands[j]);
      table.push_back(std::move(kept));
    }
  }
  return OperationSpace(space.variant(), std::move(tables[0]), std::move(tables[1]));
}

AlphaTable carry_alphas(const AlphaTable& alphas, const OperationSpace& from,
                        const OperationSpace& to) {
  const int k = to.uniform_size();
  if (k < 1) throw std::invalid_argument("carry_alphas: target space is not uniform");
  AlphaTable out = make_alphas(to.n_edges(), k, 0.0);
  for (CellType t : {CellType::normal, CellType::reduction}) {
    for (int e = 0; e < to.n_edges(); ++e) {
      const auto& src = from.candidates(t, e);
      const auto& dst = to.candidates(t, e);
      for (int j = 0; j < k; ++j) {
        const auto it = std::find(src.begin(), src.end(), dst[j]);
        if (it == src.end()) {
          throw std::invalid_argument("carry_alphas: " + std::string(op_name(dst[j])) +
                                      " is not a candidate of the source space");
        }
        out.at(t, e, j) = alphas.at(t, e, static_cast<int>(it - src.begin()));
      }
    }
  }
  return out;
}

BilevelTrainer::BilevelTrainer(SuperNetwork& net, const SearchConfig& cfg,
                               int stage, std::uint64_t seed)
    : net_(net),
      cfg_(cfg),
      stage_(stage),
      seed_(seed),
      adam_(optim::Adam::Options{.lr = cfg.alpha_lr, .weight_decay = cfg.alpha_decay}),
      dropout_rng_(derive_seed(seed, 0xd409, stage)) {}

EpochStats BilevelTrainer::epoch(std::span<const Utterance> weight_split,
                                 std::span<const Utterance> alpha_split,
                                 int epoch) {
  if (weight_split.empty()) throw std::invalid_argument("bilevel epoch: empty weight split");
  const bool update_alpha = epoch >= cfg_.warmup_epochs;
  if (update_alpha && alpha_split.empty()) {
    throw std::invalid_argument("bilevel epoch: empty alpha split");
  }
  EpochStats stats;
  stats.stage = stage_;
  stats.epoch = epoch;
  stats.lr = optim::cosine_lr(epoch, cfg_.epochs_per_stage, cfg_.w_lr);
  stats.dropout = dropout_rate(stage_, epoch, cfg_);
  stats.val_loss = std::numeric_limits<double>::quiet_NaN();

  ad::Rng shuffle_rng(derive_seed(seed_, 0x5407 + stage_, epoch));
  const auto w_batches = shuffled_batches(weight_split, cfg_.batch_size, shuffle_rng);
  std::vector<std::vector<const Utterance*>> a_batches;
  if (update_alpha) a_batches = shuffled_batches(alpha_split, cfg_.batch_size, shuffle_rng);

  SearchForwardOptions opts;
  opts.dropout_rate = stats.dropout;
  opts.rng = &dropout_rng_;
  const auto weights = net_.weights();
  const auto arch = net_.arch_parameters();
  const optim::SgdOptions sgd{stats.lr, cfg_.w_momentum, cfg_.w_decay};

  double train_sum = 0.0;
  double val_sum = 0.0;
  for (std::size_t step = 0; step < w_batches.size(); ++step) {
    if (update_alpha) {
      const Batch vb = make_batch(a_batches[step % a_batches.size()]);
      optim::zero_grad(arch);
      val_sum += batch_loss_and_backward(net_, vb, opts);
      adam_.step(arch);
      ++stats.alpha_steps;
    }
    const Batch tb = make_batch(w_batches[step]);
    optim::zero_grad(weights);
    train_sum += batch_loss_and_backward(net_, tb, opts);
    optim::sgd_momentum_step(weights, sgd);
    ++stats.weight_steps;
  }
  stats.train_loss = train_sum / stats.weight_steps;
  if (stats.alpha_steps > 0) stats.val_loss = val_sum / stats.alpha_steps;
  return stats;
}

SearchResult run_search(const SearchConfig& cfg, SpaceVariant variant,
                        const Dataset& dataset, std::uint64_t seed,
                        const SearchCallbacks& callbacks) {
  cfg.validate();
  if (dataset.utterances.empty()) throw std::invalid_argument("run_search: empty dataset");
  const auto aligned = filter_and_align(dataset.utterances);
  const auto [weight_split, alpha_split] = split_dataset(aligned, seed);

  const CellTopology topology = CellTopology::make(cfg.n_nodes);
  OperationSpace space = build_space(variant, topology.n_edges());
  ad::Rng alpha_rng(derive_seed(seed, 0xa1fa));
  AlphaTable alphas = make_alphas(topology.n_edges(), cfg.stage_op_counts[0], alpha_rng);

  SearchResult result;
  for (int s = 0; s < cfg.stages; ++s) {
    if (s > 0) {
      OperationSpace next = prune_ops(alphas, space, cfg.stage_op_counts[s]);
      alphas = carry_alphas(alphas, space, next);
      space = std::move(next);
    }
    NetworkPlan plan;
    plan.l_cells = cfg.stage_depths[s];
    plan.init_channels = cfg.init_channels;
    plan.n_nodes = cfg.n_nodes;
    plan.head_widths = cfg.head_widths;
    plan.n_classes = dataset.n_classes;

    // Fresh weights every stage; the logits carry over.
    ad::Rng init_rng(derive_seed(seed, 0x1417, s));
    SuperNetwork net = build_supernet(plan, space, topology, alphas, init_rng);
    BilevelTrainer trainer(net, cfg, s, seed);

    StageResult stage;
    stage.stage = s;
    stage.depth = plan.l_cells;
    for (int e = 0; e < cfg.epochs_per_stage; ++e) {
      AlphaTable before;
      if (callbacks.on_alphas) before = net.alphas();
      EpochStats stats = trainer.epoch(weight_split, alpha_split, e);
      if (callbacks.on_epoch) callbacks.on_epoch(stats);
      if (callbacks.on_alphas) callbacks.on_alphas(stats, before, net.alphas());
      stage.epochs.push_back(stats);
    }
    alphas = net.alphas();
    stage.alphas = alphas;
    stage.space = space;
    if (callbacks.on_stage) callbacks.on_stage(stage);
    result.stages.push_back(std::move(stage));
  }
  result.alphas = std::move(alphas);
  result.space = std::move(space);
  return result;
}

std::string alphas_to_json(const AlphaTable& alphas, const OperationSpace& space,
                           int n_nodes) {
  json doc = {{"format", "asrnas-alphas"},
              {"version", 1},
              {"variant", std::string(variant_name(space.variant()))},
              {"n_nodes", n_nodes},
              {"normal", alpha_rows(alphas, space, CellType::normal)},
              {"reduction", alpha_rows(alphas, space, CellType::reduction)}};
  return doc.dump(2) + "\n";
}

std::pair<AlphaTable, OperationSpace> alphas_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("alpha file: ") + e.what());
  }
  auto field = [&](const json& obj, const char* key) -> const json& {
    if (!obj.is_object() || !obj.contains(key)) {
      throw std::runtime_error(std::string("alpha file: missing field '") + key + "'");
    }
    return obj.at(key);
  };
  const auto variant = parse_variant(field(doc, "variant").get<std::string>());
  if (!variant) throw std::runtime_error("alpha file: unknown variant");
  const int n_nodes = field(doc, "n_nodes").get<int>();
  const int n_edges = CellTopology::make(n_nodes).n_edges();

  std::vector<std::vector<OpKind>> tables[2];
  std::vector<std::vector<double>> logits[2];
  for (CellType t : {CellType::normal, CellType::reduction}) {
    const json& rows = field(doc, std::string(cell_type_name(t)).c_str());
    if (!rows.is_array() || static_cast<int>(rows.size()) != n_edges) {
      throw std::runtime_error("alpha file: '" + std::string(cell_type_name(t)) +
                               "' must list " + std::to_string(n_edges) + " edges");
    }
    for (const json& row : rows) {
      std::vector<OpKind> ops;
      for (const json& name : field(row, "ops")) {
        const auto op = parse_op(name.get<std::string>());
        if (!op) throw std::runtime_error("alpha file: unknown op '" + name.get<std::string>() + "'");
        ops.push_back(*op);
      }
      auto values = field(row, "logits").get<std::vector<double>>();
      if (values.size() != ops.size()) {
        throw std::runtime_error("alpha file: ops and logits differ in length");
      }
      tables[static_cast<int>(t)].push_back(std::move(ops));
      logits[static_cast<int>(t)].push_back(std::move(values));
    }
  }
  OperationSpace space(*variant, tables[0], tables[1]);
  const int k = space.uniform_size();
  if (k < 1) throw std::runtime_error("alpha file: edges must share a candidate count");
  AlphaTable alphas = make_alphas(n_edges, k, 0.0);
  for (CellType t : {CellType::normal, CellType::reduction}) {
    for (int e = 0; e < n_edges; ++e) {
      for (int j = 0; j < k; ++j) alphas.at(t, e, j) = logits[static_cast<int>(t)][e][j];
    }
  }
  return {std::move(alphas), std::move(space)};
}

std::string checkpoint_to_json(const SearchConfig& cfg, SpaceVariant variant,
                               std::uint64_t seed, const StageResult& stage) {
  json epochs = json::array();
  for (const EpochStats& e : stage.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"lr", e.lr},
                      {"dropout", e.dropout},
                      {"train_loss", nullable(e.train_loss)},
                      {"val_loss", nullable(e.val_loss)},
                      {"alpha_steps", e.alpha_steps}});
  }
  json doc = {{"format", "asrnas-checkpoint"},
              {"version", 1},
              {"config", config_json(cfg)},
              {"variant", std::string(variant_name(variant))},
              {"seed", seed},
              {"stage", stage.stage},
              {"depth", stage.depth},
              {"ops_per_edge", stage.space.uniform_size()},
              {"alphas",
               {{"normal", alpha_rows(stage.alphas, stage.space, CellType::normal)},
                {"reduction", alpha_rows(stage.alphas, stage.space, CellType::reduction)}}},
              {"epochs", epochs}};
  return doc.dump(2) + "\n";
}

std::string search_config_to_json(const SearchConfig& cfg) {
  return config_json(cfg).dump(2) + "\n";
}

SearchConfig search_config_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("search config: ") + e.what());
  }
  if (!doc.is_object()) throw std::invalid_argument("search config: expected an object");
  const json known = config_json(SearchConfig{});
  for (const auto& item : doc.items()) {
    if (!known.contains(item.key())) {
      throw std::invalid_argument("search config: unknown field '" + item.key() + "'");
    }
  }
  SearchConfig c;
  auto read = [&](const char* key, auto& field) {
    if (!doc.contains(key)) return;
    try {
      doc.at(key).get_to(field);
    } catch (const json::exception&) {
      throw std::invalid_argument(std::string("search config: ") + key + " has the wrong type");
    }
  };
  read("stages", c.stages);
  read("epochs_per_stage", c.epochs_per_stage);
  read("warmup_epochs", c.warmup_epochs);
  read("batch_size", c.batch_size);
  read("init_channels", c.init_channels);
  read("n_nodes", c.n_nodes);
  read("head_widths", c.head_widths);
  read("w_lr", c.w_lr);
  read("w_momentum", c.w_momentum);
  read("w_decay", c.w_decay);
  read("alpha_lr", c.alpha_lr);
  read("alpha_decay", c.alpha_decay);
  read("dropout_init", c.dropout_init);
  read("dropout_decay_gamma", c.dropout_decay_gamma);
  read("stage_depths", c.stage_depths);
  read("stage_op_counts", c.stage_op_counts);
  read("max_avg_pool", c.max_avg_pool);
  read("seeds", c.seeds);
  return c;
}

void write_metrics_header(std::ostream& os) {
  os << "stage,epoch,split,loss,lr,dropout_rate\n";
}

void write_metrics_rows(std::ostream& os, const EpochStats& s) {
  const auto precision = os.precision(17);
  os << s.stage << ',' << s.epoch << ",train," << s.train_loss << ',' << s.lr << ','
     << s.dropout << '\n';
  if (s.alpha_steps > 0) {
    os << s.stage << ',' << s.epoch << ",val," << s.val_loss << ',' << s.lr << ','
       << s.dropout << '\n';
  }
  os.precision(precision);
}

}  // namespace asrnas
