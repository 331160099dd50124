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
#include <span>
#include <string>
#include <vector>

#include "asrnas/datagen.hpp"
#include "asrnas/genotype.hpp"
#include "asrnas/supernet.hpp"

namespace asrnas {

struct EvalConfig {
  int l_cells = 17;
  int init_channels = 32;
  int epochs = 20;
  int batch_size = 4;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 3e-4;
  std::vector<int> head_widths = {256};

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

std::string eval_config_to_json(const EvalConfig& cfg);
// Missing fields keep their defaults; unknown fields are rejected.
EvalConfig eval_config_from_json(const std::string& text);

NetworkPlan eval_plan(const Genotype& g, const EvalConfig& cfg, int n_classes);

// A cell whose edges each hold the single operation chosen by the genotype.
class EvalCell {
 public:
  EvalCell(const CellSlot& slot, const Genotype& g, ad::Rng& rng);

  ad::Var forward(ad::Graph& g, ad::Var s_prev_prev, ad::Var s_prev,
                  const ForwardOptions& opts);
  void collect_parameters(std::vector<ad::Parameter*>& out);
  const CellSlot& slot() const { return slot_; }

 private:
  CellSlot slot_;
  std::vector<GeneEdge> genes_;
  std::vector<int> concat_;
  int n_nodes_;
  ModulePtr pre0_;
  ModulePtr pre1_;
  std::vector<ModulePtr> ops_;
};

class EvalNetwork {
 public:
  EvalNetwork(const Genotype& genotype, const NetworkPlan& plan, ad::Rng& rng);

  // input (n, 3, t, f) -> logits (n, 1, 1, n_classes)
  ad::Var forward(ad::Graph& g, ad::Var input, const ForwardOptions& opts = {});

  std::vector<ad::Parameter*> weights();
  std::int64_t parameter_count();
  const NetworkPlan& plan() const { return plan_; }
  const Genotype& genotype() const { return genotype_; }

 private:
  Genotype genotype_;
  NetworkPlan plan_;
  Stem stem_;
  std::vector<EvalCell> cells_;
  std::unique_ptr<Head> head_;
};

// Rejects genotypes that fail validate() with every violation in the message.
EvalNetwork build_eval_network(const Genotype& g, const EvalConfig& cfg,
                               int n_classes, std::uint64_t seed);

struct EvalEpoch {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
};

struct TrainRecord {
  std::vector<EvalEpoch> epochs;
  // Learning rate after the last epoch.
  double final_lr = 0.0;
};

// Momentum SGD with a per-run cosine schedule. Accuracy of an epoch counts
// the predictions made on its training batches before each update.
TrainRecord train_eval(EvalNetwork& net, std::span<const Utterance> train,
                       const EvalConfig& cfg, std::uint64_t seed);

// Argmax class per utterance, in input order. Batch statistics are taken
// over consecutive groups of batch_size utterances.
std::vector<int> predict(EvalNetwork& net, std::span<const Utterance> utts,
                         int batch_size);
double evaluate(EvalNetwork& net, std::span<const Utterance> test, int batch_size);

void write_train_record_csv(std::ostream& os, const TrainRecord& record);

struct EvalSummary {
  int l_cells = 0;
  int init_channels = 0;
  std::int64_t params = 0;
  std::int64_t macs = 0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double final_train_loss = 0.0;
};

std::string summary_to_json(const EvalSummary& s);

}  // namespace asrnas
