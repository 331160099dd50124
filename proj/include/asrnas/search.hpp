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
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "asrnas/datagen.hpp"
#include "asrnas/optim.hpp"
#include "asrnas/supernet.hpp"

namespace asrnas {

struct SearchConfig {
  int stages = 3;
  int epochs_per_stage = 15;
  int warmup_epochs = 6;
  int batch_size = 4;
  int init_channels = 16;
  int n_nodes = 4;
  std::vector<int> head_widths = {256};
  double w_lr = 0.01;
  double w_momentum = 0.9;
  double w_decay = 3e-4;
  double alpha_lr = 3e-4;
  double alpha_decay = 1e-3;
  std::vector<double> dropout_init = {0.05, 0.05, 0.05};
  double dropout_decay_gamma = 0.8;
  std::vector<int> stage_depths = {5, 8, 11};
  std::vector<int> stage_op_counts = {8, 5, 3};
  int max_avg_pool = 2;
  int seeds = 3;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

std::pair<std::vector<Utterance>, std::vector<Utterance>> split_dataset(
    std::span<const Utterance> dataset, std::uint64_t seed);

// dropout_init[stage] * gamma^epoch (stage is zero-based).
double dropout_rate(int stage, int epoch, const SearchConfig& cfg);

// Keeps the keep_k candidates of every edge with the largest logits (and so
// the largest softmax weights), ties going to the earlier canonical op. Kept
// candidates stay in canonical order.
OperationSpace prune_ops(const AlphaTable& alphas, const OperationSpace& space,
                         int keep_k);

// Logits of `to` taken from the matching candidates of `from`.
AlphaTable carry_alphas(const AlphaTable& alphas, const OperationSpace& from,
                        const OperationSpace& to);

struct EpochStats {
  int stage = 0;
  int epoch = 0;
  double lr = 0.0;
  double dropout = 0.0;
  double train_loss = 0.0;
  // NaN during warmup: no architecture step, no validation forward.
  double val_loss = 0.0;
  int weight_steps = 0;
  int alpha_steps = 0;
};

// Alternating first-order updates of one stage's supernet. Owns the
// architecture optimizer state and the shuffling/dropout RNG of the stage.
class BilevelTrainer {
 public:
  BilevelTrainer(SuperNetwork& net, const SearchConfig& cfg, int stage,
                 std::uint64_t seed);

  // One pass over the weight split. Before warmup_epochs only the weights
  // move; afterwards every step updates alpha on an alpha-split batch and
  // then the weights on a weight-split batch.
  EpochStats epoch(std::span<const Utterance> weight_split,
                   std::span<const Utterance> alpha_split, int epoch);

 private:
  SuperNetwork& net_;
  const SearchConfig& cfg_;
  int stage_;
  std::uint64_t seed_;
  optim::Adam adam_;
  ad::Rng dropout_rng_;
};

struct StageResult {
  int stage = 0;
  int depth = 0;
  AlphaTable alphas;
  // The candidate lists this stage searched over.
  OperationSpace space;
  std::vector<EpochStats> epochs;
};

struct SearchResult {
  AlphaTable alphas;
  OperationSpace space;
  std::vector<StageResult> stages;
};

struct SearchCallbacks {
  std::function<void(const EpochStats&)> on_epoch;
  std::function<void(const StageResult&)> on_stage;
  // Logits at the start and end of each epoch.
  std::function<void(const EpochStats&, const AlphaTable&, const AlphaTable&)> on_alphas;
};

SearchResult run_search(const SearchConfig& cfg, SpaceVariant variant,
                        const Dataset& dataset, std::uint64_t seed,
                        const SearchCallbacks& callbacks = {});

// Structured-text persistence (JSON documents).
std::string alphas_to_json(const AlphaTable& alphas, const OperationSpace& space,
                           int n_nodes);
// Returns the table and the space it indexes.
std::pair<AlphaTable, OperationSpace> alphas_from_json(const std::string& text);

std::string checkpoint_to_json(const SearchConfig& cfg, SpaceVariant variant,
                               std::uint64_t seed, const StageResult& stage);

std::string search_config_to_json(const SearchConfig& cfg);
// Missing fields keep their defaults; unknown fields are rejected.
SearchConfig search_config_from_json(const std::string& text);

void write_metrics_header(std::ostream& os);
void write_metrics_rows(std::ostream& os, const EpochStats& stats);

}  // namespace asrnas
