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

#include "asrnas/evalnet.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include "asrnas/optim.hpp"
#include "json.hpp"

namespace asrnas {
namespace {

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw std::invalid_argument("eval config: " + field + " " + what);
}

int argmax_row(const Tensor& logits, int n) {
  const int k = logits.shape().w;
  const double* row = logits.data() + static_cast<std::size_t>(n) * k;
  return static_cast<int>(std::max_element(row, row + k) - row);
}

}  // namespace

void EvalConfig::validate() const {
  require(l_cells >= 3, "l_cells", "must be >= 3");
  require(init_channels >= 1, "init_channels", "must be >= 1");
  require(epochs >= 1, "epochs", "must be >= 1");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(lr >= 0.0, "lr", "must be >= 0");
  require(momentum >= 0.0 && momentum < 1.0, "momentum", "must be in [0, 1)");
  require(weight_decay >= 0.0, "weight_decay", "must be >= 0");
  for (int w : head_widths) require(w >= 1, "head_widths", "entries must be >= 1");
}

NetworkPlan eval_plan(const Genotype& g, const EvalConfig& cfg, int n_classes) {
  NetworkPlan plan;
  plan.l_cells = cfg.l_cells;
  plan.init_channels = cfg.init_channels;
  plan.n_nodes = g.n_nodes;
  plan.head_widths = cfg.head_widths;
  plan.n_classes = n_classes;
  return plan;
}

EvalCell::EvalCell(const CellSlot& slot, const Genotype& g, ad::Rng& rng)
    : slot_(slot),
      genes_(g.cell(slot.reduction ? CellType::reduction : CellType::normal)),
      concat_(g.concat),
      n_nodes_(g.n_nodes) {
  if (slot.reduction_prev) {
    pre0_ = make_factorized_reduce(slot.c_prev_prev, slot.c_cell, true, rng);
  } else {
    pre0_ = make_relu_conv_bn(slot.c_prev_prev, slot.c_cell, 1, 1, 0, true, rng);
  }
  pre1_ = make_relu_conv_bn(slot.c_prev, slot.c_cell, 1, 1, 0, true, rng);
  for (const GeneEdge& e : genes_) {
    const int stride = slot.reduction && e.from < 0 ? 2 : 1;
    ops_.push_back(instantiate(e.op, slot.c_cell, stride, true, rng));
  }
}

ad::Var EvalCell::forward(ad::Graph& g, ad::Var s_prev_prev, ad::Var s_prev,
                          const ForwardOptions& opts) {
  const Shape in = s_prev.shape();
  if (slot_.reduction && (in.h % 2 != 0 || in.w % 2 != 0)) {
    throw ShapeError("reduction cell " + std::to_string(slot_.index) +
                     ": spatial size (" + std::to_string(in.h) + "," +
                     std::to_string(in.w) + ") is not aligned to a multiple of 2");
  }
  std::vector<ad::Var> states{pre0_->forward(g, s_prev_prev, opts),
                              pre1_->forward(g, s_prev, opts)};
  for (int i = 0; i < n_nodes_; ++i) {
    std::vector<ad::Var> terms;
    for (std::size_t k = 0; k < genes_.size(); ++k) {
      if (genes_[k].node != i) continue;
      terms.push_back(ops_[k]->forward(g, states[genes_[k].from + 2], opts));
    }
    states.push_back(ad::add_n(terms));
  }
  std::vector<ad::Var> outs;
  for (int node : concat_) outs.push_back(states[node + 2]);
  return ad::concat_channels(outs);
}

void EvalCell::collect_parameters(std::vector<ad::Parameter*>& out) {
  pre0_->collect_parameters(out);
  pre1_->collect_parameters(out);
  for (auto& op : ops_) op->collect_parameters(out);
}

EvalNetwork::EvalNetwork(const Genotype& genotype, const NetworkPlan& plan, ad::Rng& rng)
    : genotype_(genotype), plan_(plan), stem_(plan, /*affine=*/true, rng) {
  plan_.validate(/*allow_empty=*/true);
  if (plan_.n_nodes != genotype_.n_nodes) {
    throw std::invalid_argument("eval network: plan.n_nodes disagrees with the genotype");
  }
  const auto slots = plan_cells(plan_, 4, plan_.freq_bins);
  for (const CellSlot& slot : slots) cells_.emplace_back(slot, genotype_, rng);
  const int c_final = slots.empty() ? plan_.init_channels : slots.back().c_out;
  const int reductions = static_cast<int>(plan_.reduction_positions().size());
  head_ = std::make_unique<Head>(c_final * (plan_.freq_bins >> reductions), plan_, rng);
}

ad::Var EvalNetwork::forward(ad::Graph& g, ad::Var input, const ForwardOptions& opts) {
  check_alignment(plan_, input.shape());
  ad::Var s0 = stem_.forward(g, input, opts);
  ad::Var s1 = s0;
  for (EvalCell& cell : cells_) {
    const ad::Var out = cell.forward(g, s0, s1, opts);
    s0 = s1;
    s1 = out;
  }
  return head_->forward(g, s1);
}

std::vector<ad::Parameter*> EvalNetwork::weights() {
  std::vector<ad::Parameter*> out;
  stem_.collect_parameters(out);
  for (EvalCell& cell : cells_) cell.collect_parameters(out);
  head_->collect_parameters(out);
  return out;
}

std::int64_t EvalNetwork::parameter_count() {
  std::int64_t n = 0;
  for (const ad::Parameter* p : weights()) n += static_cast<std::int64_t>(p->numel());
  return n;
}

EvalNetwork build_eval_network(const Genotype& g, const EvalConfig& cfg,
                               int n_classes, std::uint64_t seed) {
  const auto problems = validate(g);
  if (!problems.empty()) {
    std::string msg = "invalid genotype:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw std::invalid_argument(msg);
  }
  ad::Rng rng(derive_seed(seed, 0xe7a1));
  return EvalNetwork(g, eval_plan(g, cfg, n_classes), rng);
}

TrainRecord train_eval(EvalNetwork& net, std::span<const Utterance> train,
                       const EvalConfig& cfg, std::uint64_t seed) {
  TrainRecord record;
  if (cfg.epochs == 0) return record;
  if (train.empty()) throw std::invalid_argument("train_eval: empty training set");
  const auto weights = net.weights();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EvalEpoch stats;
    stats.epoch = epoch;
    stats.lr = optim::cosine_lr(epoch, cfg.epochs, cfg.lr);
    const optim::SgdOptions sgd{stats.lr, cfg.momentum, cfg.weight_decay};
    ad::Rng rng(derive_seed(seed, 0xe9, epoch));
    const auto batches = shuffled_batches(train, cfg.batch_size, rng);
    double loss_sum = 0.0;
    int correct = 0;
    int seen = 0;
    for (const auto& b : batches) {
      const Batch batch = make_batch(b);
      ad::Graph g;
      const ad::Var logits = net.forward(g, g.constant(batch.input));
      for (std::size_t i = 0; i < b.size(); ++i) {
        correct += argmax_row(logits.value(), static_cast<int>(i)) == batch.labels[i];
      }
      seen += static_cast<int>(b.size());
      const ad::Var loss = ad::cross_entropy_loss(logits, batch.labels);
      loss_sum += loss.value()[0];
      optim::zero_grad(weights);
      g.backward(loss);
      optim::sgd_momentum_step(weights, sgd);
    }
    stats.train_loss = loss_sum / static_cast<double>(batches.size());
    stats.train_acc = static_cast<double>(correct) / seen;
    record.epochs.push_back(stats);
  }
  record.final_lr = optim::cosine_lr(cfg.epochs, cfg.epochs, cfg.lr);
  return record;
}

std::vector<int> predict(EvalNetwork& net, std::span<const Utterance> utts,
                         int batch_size) {
  if (batch_size < 1) throw std::invalid_argument("predict: batch_size must be >= 1");
  std::vector<int> out;
  for (std::size_t i = 0; i < utts.size(); i += batch_size) {
    const auto chunk = utts.subspan(i, std::min<std::size_t>(batch_size, utts.size() - i));
    const Batch batch = make_batch(chunk);
    ad::Graph g;
    const ad::Var logits = net.forward(g, g.constant(batch.input));
    for (std::size_t j = 0; j < chunk.size(); ++j) {
      out.push_back(argmax_row(logits.value(), static_cast<int>(j)));
    }
  }
  return out;
}

double evaluate(EvalNetwork& net, std::span<const Utterance> test, int batch_size) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
  const auto pred = predict(net, test, batch_size);
  int correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) correct += pred[i] == test[i].label;
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

void write_train_record_csv(std::ostream& os, const TrainRecord& record) {
  os << "epoch,lr,train_loss,train_acc\n";
  os << std::setprecision(17);
  for (const EvalEpoch& e : record.epochs) {
    os << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.train_acc << '\n';
  }
}

std::string eval_config_to_json(const EvalConfig& c) {
  const nlohmann::json doc = {{"l_cells", c.l_cells},
                              {"init_channels", c.init_channels},
                              {"epochs", c.epochs},
                              {"batch_size", c.batch_size},
                              {"lr", c.lr},
                              {"momentum", c.momentum},
                              {"weight_decay", c.weight_decay},
                              {"head_widths", c.head_widths}};
  return doc.dump(2) + "\n";
}

EvalConfig eval_config_from_json(const std::string& text) {
  using json = nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("eval config: ") + e.what());
  }
  if (!doc.is_object()) throw std::invalid_argument("eval config: expected an object");
  const json known = json::parse(eval_config_to_json(EvalConfig{}));
  for (const auto& item : doc.items()) {
    if (!known.contains(item.key())) {
      throw std::invalid_argument("eval config: unknown field '" + item.key() + "'");
    }
  }
  EvalConfig c;
  auto read = [&](const char* key, auto& field) {
    if (!doc.contains(key)) return;
    try {
      doc.at(key).get_to(field);
    } catch (const json::exception&) {
      throw std::invalid_argument(std::string("eval config: ") + key + " has the wrong type");
    }
  };
  read("l_cells", c.l_cells);
  read("init_channels", c.init_channels);
  read("epochs", c.epochs);
  read("batch_size", c.batch_size);
  read("lr", c.lr);
  read("momentum", c.momentum);
  read("weight_decay", c.weight_decay);
  read("head_widths", c.head_widths);
  return c;
}

std::string summary_to_json(const EvalSummary& s) {
  const nlohmann::json doc = {{"l_cells", s.l_cells},
                              {"init_channels", s.init_channels},
                              {"params", s.params},
                              {"macs", s.macs},
                              {"train_acc", s.train_acc},
                              {"test_acc", s.test_acc},
                              {"final_train_loss", s.final_train_loss}};
  return doc.dump(2) + "\n";
}

}  // namespace asrnas
