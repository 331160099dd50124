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
#include <cmath>
#include <sstream>

#include "asrnas/search.hpp"
#include "json.hpp"
#include "oracles.hpp"

namespace asrnas {
namespace {

using json = nlohmann::json;

SearchConfig tiny_config() {
  SearchConfig c;
  c.epochs_per_stage = 3;
  c.warmup_epochs = 1;
  c.init_channels = 4;
  c.n_nodes = 2;
  c.head_widths = {8};
  c.stage_depths = {3, 4, 5};
  c.alpha_lr = 0.05;
  return c;
}

Dataset tiny_dataset() {
  SynthOptions o;
  o.n_classes = 4;
  o.n_per_class = 6;
  o.time_min = 8;
  o.time_max = 8;
  o.seed = 3;
  return synth_dataset(o);
}

TEST(Dropout, Schedule) {
  const SearchConfig c;
  EXPECT_EQ(dropout_rate(0, 0, c), 0.05);
  EXPECT_NEAR(dropout_rate(0, 5, c), 0.016384, 1e-15);
  for (int s = 0; s < 3; ++s) {
    for (int e = 0; e < 15; ++e) EXPECT_LT(dropout_rate(s, e + 1, c), dropout_rate(s, e, c));
  }
  EXPECT_THROW(dropout_rate(3, 0, c), std::out_of_range);
}

TEST(Prune, HandExample) {
  const std::vector<OpKind> abc = {OpKind::max_pool_3x3, OpKind::avg_pool_3x3,
                                   OpKind::sep_conv_3x3};
  const OperationSpace space(SpaceVariant::original, {abc}, {abc});
  AlphaTable a = make_alphas(1, 3, 0.0);
  for (CellType t : {CellType::normal, CellType::reduction}) {
    a.at(t, 0, 0) = 3;
    a.at(t, 0, 1) = 1;
    a.at(t, 0, 2) = 2;
  }
  const auto pruned = prune_ops(a, space, 2);
  EXPECT_EQ(pruned.candidates(CellType::normal, 0),
            (std::vector<OpKind>{OpKind::max_pool_3x3, OpKind::sep_conv_3x3}));
  EXPECT_EQ(prune_ops(a, space, 3), space);
}

TEST(Prune, TiesKeepCanonicalPrefix) {
  const auto space = build_space(SpaceVariant::revised, 14);
  const auto pruned = prune_ops(make_alphas(14, 8, 0.0), space, 5);
  const auto& ops = canonical_ops(SpaceVariant::revised);
  for (int e = 0; e < 14; ++e) {
    EXPECT_EQ(pruned.candidates(CellType::reduction, e),
              std::vector<OpKind>(ops.begin(), ops.begin() + 5));
  }
}

TEST(Prune, RandomTablesKeepTopK) {
  ad::Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto v = trial % 2 ? SpaceVariant::original : SpaceVariant::revised;
    const auto space = build_space(v, 9);
    const AlphaTable a = make_alphas(9, 8, rng, 1.0);
    const int keep = 1 + trial % 8;
    const auto pruned = prune_ops(a, space, keep);
    for (CellType t : {CellType::normal, CellType::reduction}) {
      for (int e = 0; e < 9; ++e) {
        const auto& kept = pruned.candidates(t, e);
        ASSERT_EQ(static_cast<int>(kept.size()), keep);
        EXPECT_TRUE(std::is_sorted(kept.begin(), kept.end()));
        const auto w = testing::softmax_row(a, t, e);
        double lowest_kept = 1.0, highest_dropped = 0.0;
        for (int j = 0; j < 8; ++j) {
          const OpKind k = space.candidates(t, e)[j];
          if (std::find(kept.begin(), kept.end(), k) != kept.end()) {
            lowest_kept = std::min(lowest_kept, w[j]);
          } else {
            highest_dropped = std::max(highest_dropped, w[j]);
          }
        }
        EXPECT_GT(lowest_kept, highest_dropped);
      }
    }
  }
}

TEST(Prune, RejectsBadKeep) {
  const auto space = build_space(SpaceVariant::revised, 5);
  EXPECT_THROW(prune_ops(make_alphas(5, 8, 0.0), space, 0), std::invalid_argument);
  EXPECT_THROW(prune_ops(make_alphas(5, 8, 0.0), space, 9), std::invalid_argument);
}

TEST(Carry, CopiesMatchingLogits) {
  ad::Rng rng(2);
  const auto space = build_space(SpaceVariant::original, 5);
  const AlphaTable a = make_alphas(5, 8, rng, 1.0);
  const auto next = prune_ops(a, space, 3);
  const AlphaTable b = carry_alphas(a, space, next);
  for (CellType t : {CellType::normal, CellType::reduction}) {
    for (int e = 0; e < 5; ++e) {
      for (int j = 0; j < 3; ++j) {
        const auto& src = space.candidates(t, e);
        const int col = static_cast<int>(
            std::find(src.begin(), src.end(), next.candidates(t, e)[j]) - src.begin());
        EXPECT_EQ(b.at(t, e, j), a.at(t, e, col));
      }
    }
  }
}

struct TinyStage {
  NetworkPlan plan;
  SuperNetwork net;
};

TinyStage tiny_stage(const SearchConfig& cfg) {
  NetworkPlan plan;
  plan.l_cells = 3;
  plan.init_channels = cfg.init_channels;
  plan.n_nodes = cfg.n_nodes;
  plan.head_widths = cfg.head_widths;
  plan.n_classes = 4;
  ad::Rng rng(6);
  const auto topo = CellTopology::make(cfg.n_nodes);
  return {plan, build_supernet(plan, build_space(SpaceVariant::revised, topo.n_edges()), topo,
                               make_alphas(topo.n_edges(), 8, rng), rng)};
}

TEST(Bilevel, WarmupLeavesAlphaBitwiseUnchanged) {
  SearchConfig cfg = tiny_config();
  cfg.epochs_per_stage = 4;
  cfg.warmup_epochs = 2;
  const Dataset ds = tiny_dataset();
  const auto [w_split, a_split] = split_dataset(ds.utterances, 1);
  TinyStage s = tiny_stage(cfg);
  BilevelTrainer trainer(s.net, cfg, 0, 9);
  const Tensor n0 = s.net.alphas().normal.value;
  const Tensor r0 = s.net.alphas().reduction.value;
  std::vector<Tensor> w0;
  for (const ad::Parameter* p : s.net.weights()) w0.push_back(p->value);
  for (int e = 0; e < 2; ++e) {
    const EpochStats st = trainer.epoch(w_split, a_split, e);
    EXPECT_EQ(st.alpha_steps, 0);
    EXPECT_TRUE(std::isnan(st.val_loss));
    EXPECT_EQ(s.net.alphas().normal.value, n0);
    EXPECT_EQ(s.net.alphas().reduction.value, r0);
  }
  EXPECT_NE(s.net.weights().front()->value, w0.front());
  const EpochStats st = trainer.epoch(w_split, a_split, 2);
  EXPECT_GT(st.alpha_steps, 0);
  EXPECT_TRUE(std::isfinite(st.val_loss));
  EXPECT_NE(s.net.alphas().normal.value, n0);
}

TEST(Bilevel, StepsPerEpoch) {
  const SearchConfig cfg = tiny_config();
  const Dataset ds = tiny_dataset();
  const auto [w_split, a_split] = split_dataset(ds.utterances, 1);
  TinyStage s = tiny_stage(cfg);
  BilevelTrainer trainer(s.net, cfg, 0, 9);
  const EpochStats st = trainer.epoch(w_split, a_split, 1);
  EXPECT_EQ(st.weight_steps, 3);
  EXPECT_EQ(st.alpha_steps, 3);
  EXPECT_EQ(st.lr, optim::cosine_lr(1, cfg.epochs_per_stage, cfg.w_lr));
  EXPECT_EQ(st.dropout, dropout_rate(0, 1, cfg));
}

class TinySearch : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    result_ = new SearchResult(run_search(tiny_config(), SpaceVariant::revised, tiny_dataset(), 5));
  }
  static void TearDownTestSuite() { delete result_; }
  static SearchResult* result_;
};

SearchResult* TinySearch::result_ = nullptr;

TEST_F(TinySearch, CandidateCountsFollowSchedule) {
  const SearchConfig cfg = tiny_config();
  ASSERT_EQ(result_->stages.size(), 3u);
  for (int s = 0; s < 3; ++s) {
    const auto& st = result_->stages[s];
    EXPECT_EQ(st.space.uniform_size(), cfg.stage_op_counts[s]);
    EXPECT_EQ(st.alphas.n_ops(), cfg.stage_op_counts[s]);
    EXPECT_EQ(st.depth, cfg.stage_depths[s]);
    if (s > 0) {
      EXPECT_GT(st.depth, result_->stages[s - 1].depth);
      for (CellType t : {CellType::normal, CellType::reduction}) {
        for (int e = 0; e < st.space.n_edges(); ++e) {
          const auto& prev = result_->stages[s - 1].space.candidates(t, e);
          for (OpKind k : st.space.candidates(t, e)) {
            EXPECT_NE(std::find(prev.begin(), prev.end(), k), prev.end());
          }
        }
      }
    }
  }
  EXPECT_EQ(result_->space, result_->stages.back().space);
}

TEST_F(TinySearch, WarmupEpochsHaveNoAlphaSteps) {
  for (const auto& st : result_->stages) {
    ASSERT_EQ(st.epochs.size(), 3u);
    EXPECT_EQ(st.epochs[0].alpha_steps, 0);
    EXPECT_GT(st.epochs[1].alpha_steps, 0);
  }
}

TEST_F(TinySearch, DeterministicUnderSeed) {
  const SearchResult again = run_search(tiny_config(), SpaceVariant::revised, tiny_dataset(), 5);
  EXPECT_EQ(again.alphas.normal.value, result_->alphas.normal.value);
  EXPECT_EQ(again.alphas.reduction.value, result_->alphas.reduction.value);
  for (std::size_t s = 0; s < again.stages.size(); ++s) {
    EXPECT_EQ(again.stages[s].alphas.normal.value, result_->stages[s].alphas.normal.value);
    for (std::size_t e = 0; e < again.stages[s].epochs.size(); ++e) {
      EXPECT_EQ(again.stages[s].epochs[e].train_loss, result_->stages[s].epochs[e].train_loss);
    }
  }
}

TEST_F(TinySearch, TrainingReducesLoss) {
  const auto& e = result_->stages.front().epochs;
  EXPECT_LT(e.back().train_loss, e.front().train_loss);
}

TEST_F(TinySearch, AlphaFileRoundTrip) {
  const std::string text = alphas_to_json(result_->alphas, result_->space, 2);
  const auto [alphas, space] = alphas_from_json(text);
  EXPECT_EQ(space, result_->space);
  EXPECT_EQ(alphas.normal.value, result_->alphas.normal.value);
  EXPECT_EQ(alphas.reduction.value, result_->alphas.reduction.value);
  EXPECT_EQ(alphas_to_json(alphas, space, 2), text);
}

TEST_F(TinySearch, CheckpointContents) {
  const auto& st = result_->stages[1];
  const json doc = json::parse(checkpoint_to_json(tiny_config(), SpaceVariant::revised, 5, st));
  EXPECT_EQ(doc.at("stage"), 1);
  EXPECT_EQ(doc.at("depth"), 4);
  EXPECT_EQ(doc.at("ops_per_edge"), 5);
  EXPECT_EQ(doc.at("config").at("stage_depths"), json({3, 4, 5}));
  EXPECT_EQ(doc.at("alphas").at("normal").size(), 5u);
  EXPECT_TRUE(doc.at("epochs")[0].at("val_loss").is_null());
  EXPECT_TRUE(doc.at("epochs")[1].at("val_loss").is_number());
}

TEST_F(TinySearch, MetricsRows) {
  std::ostringstream os;
  write_metrics_header(os);
  for (const auto& st : result_->stages)
    for (const auto& e : st.epochs) write_metrics_rows(os, e);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "stage,epoch,split,loss,lr,dropout_rate");
  int train = 0, val = 0;
  while (std::getline(in, line)) {
    train += line.find(",train,") != std::string::npos;
    val += line.find(",val,") != std::string::npos;
  }
  EXPECT_EQ(train, 9);
  EXPECT_EQ(val, 6);
}

TEST(SearchConfig, DefaultsAreValid) {
  const SearchConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.stages, 3);
  EXPECT_EQ(c.epochs_per_stage, 15);
  EXPECT_EQ(c.warmup_epochs, 6);
  EXPECT_EQ(c.batch_size, 4);
  EXPECT_EQ(c.init_channels, 16);
  EXPECT_EQ(c.w_lr, 0.01);
  EXPECT_EQ(c.dropout_init, (std::vector<double>{0.05, 0.05, 0.05}));
  EXPECT_EQ(c.stage_op_counts, (std::vector<int>{8, 5, 3}));
  EXPECT_EQ(c.max_avg_pool, 2);
  EXPECT_EQ(c.seeds, 3);
}

TEST(SearchConfig, ValidationNamesField) {
  auto expect_field = [](SearchConfig c, const std::string& field) {
    try {
      c.validate();
      ADD_FAILURE() << "accepted bad " << field;
    } catch (const std::invalid_argument& e) {
      EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
    }
  };
  SearchConfig c;
  c.warmup_epochs = 15;
  expect_field(c, "warmup_epochs");
  c = {};
  c.stage_depths = {5, 5, 11};
  expect_field(c, "stage_depths");
  c = {};
  c.stage_op_counts = {8, 5, 5};
  expect_field(c, "stage_op_counts");
  c = {};
  c.init_channels = 7;
  expect_field(c, "init_channels");
  c = {};
  c.dropout_init = {0.05};
  expect_field(c, "dropout_init");
}

TEST(SearchConfig, JsonRoundTrip) {
  SearchConfig c = tiny_config();
  c.dropout_decay_gamma = 0.5;
  const SearchConfig back = search_config_from_json(search_config_to_json(c));
  EXPECT_EQ(search_config_to_json(back), search_config_to_json(c));
  EXPECT_EQ(search_config_from_json("{}").epochs_per_stage, 15);
}

TEST(SearchConfig, JsonRejectsUnknownAndMistyped) {
  EXPECT_THROW(search_config_from_json(R"({"epoch_per_stage": 4})"), std::invalid_argument);
  EXPECT_THROW(search_config_from_json(R"({"epochs_per_stage": "4"})"), std::invalid_argument);
  EXPECT_THROW(search_config_from_json("[1]"), std::invalid_argument);
  EXPECT_THROW(search_config_from_json("{"), std::invalid_argument);
}

TEST(Search, RejectsEmptyDataset) {
  Dataset empty;
  empty.n_classes = 2;
  EXPECT_THROW(run_search(tiny_config(), SpaceVariant::revised, empty, 1), std::invalid_argument);
}

}  // namespace
}  // namespace asrnas
