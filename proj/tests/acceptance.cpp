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

// Acceptance run: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>

#include "asrnas/evalnet.hpp"
#include "asrnas/genotype.hpp"
#include "asrnas/search.hpp"
#include "gradcases.hpp"
#include "oracles.hpp"

using namespace asrnas;
using namespace asrnas::testing;

namespace {

// pinned tolerances and budgets
constexpr double kGradSeconds = 120.0;
constexpr int kGradSeeds = 20;
constexpr int kMaxKinkFraction = 100;  // at most 1 in 100 probed entries
constexpr double kWeightSumTol = 1e-12;
constexpr double kMeanTol = 1e-10;
constexpr double kShiftTol = 1e-12;
constexpr int kOracleTables = 100;
constexpr double kSearchSeconds = 1800.0;
constexpr double kTrainAccFloor = 0.90;
constexpr double kChanceMultiple = 3.0;
constexpr std::uint64_t kSeed = 2024;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int n, bool ok, const std::string& detail) {
  std::cout << "criterion " << n << ": " << (ok ? "PASS" : "FAIL") << "  " << detail
            << std::endl;
  if (!ok) ++failures;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool bitwise_equal(const AlphaTable& a, const AlphaTable& b) {
  for (CellType t : {CellType::normal, CellType::reduction}) {
    const auto x = a.of(t).value.values();
    const auto y = b.of(t).value.values();
    if (x.size() != y.size() || std::memcmp(x.data(), y.data(), x.size_bytes()) != 0) {
      return false;
    }
  }
  return true;
}

void gradients() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string where;
  int checks = 0;
  int kinks = 0;
  for (const GradCase& c : primitive_grad_cases()) {
    for (int s = 1; s <= kGradSeeds; ++s) {
      const GradCheck r = c.run(s);
      checks += r.checked;
      if (r.worst > worst) {
        worst = r.worst;
        where = c.name + " seed " + std::to_string(s) + " " + r.where;
      }
    }
  }
  for (int s = 1; s <= kGradSeeds; ++s) {
    const GradCheck r = supernet_grad_check(s);
    checks += r.checked;
    kinks += r.kinks;
    if (r.worst > worst) {
      worst = r.worst;
      where = "supernet seed " + std::to_string(s) + " " + r.where;
    }
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << "worst rel err " << worst << " (" << where << "), " << checks << " entries, " << kinks
    << " at kinks, " << secs << " s";
  report(1, worst <= kGradTol && kinks * kMaxKinkFraction < checks && secs < kGradSeconds,
         d.str());
}

void mixed_op_semantics() {
  ad::Rng rng(11);
  double sum_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const AlphaTable a = make_alphas(14, 8, rng, 5.0);
    for (CellType t : {CellType::normal, CellType::reduction}) {
      for (int e = 0; e < 14; ++e) {
        const auto w = edge_weights(a, t, e);
        sum_err = std::max(sum_err, std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0));
      }
    }
  }
  double mean_err = 0.0;
  double shift_err = 0.0;
  for (auto v : {SpaceVariant::original, SpaceVariant::revised}) {
    for (int stride : {1, 2}) {
      MixedOp op(canonical_ops(v), 4, stride, rng);
      const Tensor x = random_tensor({2, 4, 8, 8}, rng);
      ad::Graph g;
      const ad::Var in = g.constant(x);
      const Tensor mixed =
          mixed_op_forward(g, in, g.constant(Tensor({1, 1, 1, 8}, -0.7)), op).value();
      Tensor mean(mixed.shape());
      for (int j = 0; j < 8; ++j) {
        const Tensor y = op.op(j).forward(g, in, {}).value();
        for (std::size_t i = 0; i < y.size(); ++i) mean[i] += y[i] / 8.0;
      }
      mean_err = std::max(mean_err, max_abs_diff(mixed, mean));

      const Tensor logits = random_tensor({1, 1, 1, 8}, rng, 2.0);
      Tensor shifted = logits;
      for (double& l : shifted.values()) l += 3.25;
      const Tensor a = mixed_op_forward(g, in, g.constant(logits), op).value();
      const Tensor b = mixed_op_forward(g, in, g.constant(shifted), op).value();
      shift_err = std::max(shift_err, max_abs_diff(a, b));
    }
  }
  std::ostringstream d;
  d << "weight sum err " << sum_err << ", mean err " << mean_err << ", shift err " << shift_err;
  report(2, sum_err <= kWeightSumTol && mean_err <= kMeanTol && shift_err <= kShiftTol, d.str());
}

void derivation_oracle() {
  ad::Rng rng(12);
  int matches = 0;
  for (int trial = 0; trial < kOracleTables; ++trial) {
    const auto v = trial % 2 ? SpaceVariant::original : SpaceVariant::revised;
    const int n_nodes = 1 + (trial / 2) % 4;
    const int edges = CellTopology::make(n_nodes).n_edges();
    const AlphaTable a = make_alphas(edges, 8, rng, 1.0 + trial % 3);
    const auto space = build_space(v, edges);
    matches += derive(a, space, 2) == brute_force_derive(a, space, 2);
  }
  report(3, matches == kOracleTables,
         std::to_string(matches) + "/" + std::to_string(kOracleTables) + " tables match");
}

void avg_pool_cap() {
  bool ok = true;
  std::ostringstream d;
  for (auto v : {SpaceVariant::original, SpaceVariant::revised}) {
    const auto& ops = canonical_ops(v);
    const int avg = static_cast<int>(std::find(ops.begin(), ops.end(), OpKind::avg_pool_3x3) -
                                     ops.begin());
    AlphaTable a = make_alphas(14, 8, 0.0);
    for (CellType t : {CellType::normal, CellType::reduction}) {
      for (int e = 0; e < 14; ++e) a.at(t, e, avg) = 4.0 + 0.1 * e;
    }
    const auto space = build_space(v, 14);
    const Genotype g = derive(a, space, 2);
    const auto n_avg = std::count_if(g.normal.begin(), g.normal.end(), [](const GeneEdge& e) {
      return e.op == OpKind::avg_pool_3x3;
    });
    const Genotype uncapped = derive(a, space, 100);
    const bool enforced = validate(g).empty() && !validate(uncapped, 2).empty();
    ok = ok && n_avg == 2 && enforced;
    d << variant_name(v) << ": " << n_avg << " avg_pool, validate "
      << (enforced ? "enforces" : "does not enforce") << " the cap; ";
  }
  report(4, ok, d.str());
}

Dataset toy_dataset(int per_class, std::uint64_t seed) {
  SynthOptions o;
  o.n_classes = 10;
  o.n_per_class = per_class;
  o.time_min = o.time_max = 16;
  o.seed = seed;
  return synth_dataset(o);
}

struct DeskSearch {
  SearchResult result;
  bool warmup_frozen = true;
  bool counts_ok = true;
  double seconds = 0.0;
};

DeskSearch desk_search(const SearchConfig& cfg, const Dataset& train) {
  DeskSearch out;
  SearchCallbacks cb;
  cb.on_epoch = [](const EpochStats& s) {
    std::cerr << "  stage " << s.stage + 1 << " epoch " << s.epoch + 1 << " train "
              << s.train_loss << " val " << s.val_loss << std::endl;
  };
  cb.on_alphas = [&](const EpochStats& s, const AlphaTable& before, const AlphaTable& after) {
    if (s.epoch < cfg.warmup_epochs) {
      out.warmup_frozen = out.warmup_frozen && s.alpha_steps == 0 && bitwise_equal(before, after);
    }
  };
  const auto t0 = Clock::now();
  out.result = run_search(cfg, SpaceVariant::revised, train, kSeed, cb);
  out.seconds = seconds_since(t0);
  const auto& stages = out.result.stages;
  out.counts_ok = static_cast<int>(stages.size()) == cfg.stages;
  for (std::size_t s = 0; s < stages.size() && out.counts_ok; ++s) {
    out.counts_ok = stages[s].depth == cfg.stage_depths[s];
    for (CellType t : {CellType::normal, CellType::reduction}) {
      for (int e = 0; e < stages[s].space.n_edges(); ++e) {
        const auto& cands = stages[s].space.candidates(t, e);
        out.counts_ok = out.counts_ok &&
                        static_cast<int>(cands.size()) == cfg.stage_op_counts[s];
        if (s > 0) {
          const auto& prev = stages[s - 1].space.candidates(t, e);
          for (OpKind k : cands) {
            out.counts_ok = out.counts_ok && std::count(prev.begin(), prev.end(), k) == 1;
          }
        }
      }
    }
  }
  return out;
}

SearchConfig desk_config() {
  SearchConfig cfg;
  cfg.epochs_per_stage = 4;
  cfg.warmup_epochs = 2;
  return cfg;
}

EvalConfig desk_eval_config() {
  EvalConfig ec;
  ec.l_cells = 8;
  ec.init_channels = 8;
  ec.epochs = 20;
  return ec;
}

void end_to_end(const Genotype& g, const Dataset& train, const Dataset& test) {
  const EvalConfig ec = desk_eval_config();
  const auto t0 = Clock::now();
  const auto train_set = filter_and_align(train.utterances);
  const auto test_set = filter_and_align(test.utterances);
  EvalNetwork net = build_eval_network(g, ec, train.n_classes, kSeed);
  train_eval(net, train_set, ec, kSeed);
  const double train_acc = evaluate(net, train_set, ec.batch_size);
  const double test_acc = evaluate(net, test_set, ec.batch_size);
  const double chance = 1.0 / train.n_classes;
  std::ostringstream d;
  d << "train acc " << train_acc << ", test acc " << test_acc << " (chance " << chance << "), "
    << seconds_since(t0) << " s";
  report(6, train_acc >= kTrainAccFloor && test_acc >= kChanceMultiple * chance, d.str());
}

void cost_exactness() {
  ad::Rng rng(17);
  int checked = 0;
  int equal = 0;
  for (int trial = 0; trial < 6; ++trial) {
    for (auto v : {SpaceVariant::original, SpaceVariant::revised}) {
      const Genotype g = random_genotype(v, 4, rng);
      for (int c : {8, 16}) {
        EvalConfig ec;
        ec.l_cells = 8;
        ec.init_channels = c;
        EvalNetwork net = build_eval_network(g, ec, 10, trial);
        const std::int64_t built = net.parameter_count();
        ++checked;
        equal += built == network_cost(g, net.plan()).params &&
                 built == enumerate_params(g, net.plan());
      }
    }
  }
  report(7, equal == checked,
         std::to_string(equal) + "/" + std::to_string(checked) + " networks exact");
}

void rect_conv_cost() {
  bool ok = true;
  std::ostringstream d;
  for (int stride : {1, 2}) {
    const CostReport r = op_cost(OpKind::conv_1x7_7x1, 16, 16, 40, stride);
    for (OpKind sep : {OpKind::sep_conv_3x3, OpKind::sep_conv_5x5}) {
      const CostReport s = op_cost(sep, 16, 16, 40, stride);
      ok = ok && r.seq_depth < s.seq_depth && r.activations < s.activations;
      if (stride == 1) {
        d << op_name(sep) << " depth " << s.seq_depth << " act " << s.activations << "; ";
      }
    }
    if (stride == 1) d << "conv_1x7_7x1 depth " << r.seq_depth << " act " << r.activations;
  }
  report(8, ok, d.str());
}

struct PipelineOutput {
  std::string alphas;
  std::string genotype;
  std::string record;
  std::string summary;
};

PipelineOutput pipeline(const Dataset& train, const Dataset& test) {
  SearchConfig sc;
  sc.epochs_per_stage = 2;
  sc.warmup_epochs = 1;
  sc.init_channels = 4;
  sc.head_widths = {32};
  EvalConfig ec;
  ec.l_cells = 5;
  ec.init_channels = 8;
  ec.epochs = 2;
  ec.head_widths = {32};

  PipelineOutput out;
  const SearchResult r = run_search(sc, SpaceVariant::revised, train, kSeed);
  out.alphas = alphas_to_json(r.alphas, r.space, sc.n_nodes);
  const auto [alphas, space] = alphas_from_json(out.alphas);
  const Genotype g = derive(alphas, space, sc.max_avg_pool);
  out.genotype = serialize(g);
  const auto train_set = filter_and_align(train.utterances);
  const auto test_set = filter_and_align(test.utterances);
  EvalNetwork net = build_eval_network(parse_genotype(out.genotype), ec, train.n_classes, kSeed);
  const TrainRecord rec = train_eval(net, train_set, ec, kSeed);
  std::ostringstream csv;
  write_train_record_csv(csv, rec);
  out.record = csv.str();
  EvalSummary s;
  s.l_cells = ec.l_cells;
  s.init_channels = ec.init_channels;
  s.params = net.parameter_count();
  s.macs = network_cost(g, net.plan()).macs;
  s.train_acc = evaluate(net, train_set, ec.batch_size);
  s.test_acc = evaluate(net, test_set, ec.batch_size);
  s.final_train_loss = rec.epochs.back().train_loss;
  out.summary = summary_to_json(s);
  return out;
}

void determinism() {
  const Dataset train = toy_dataset(8, kSeed);
  const Dataset test = toy_dataset(4, derive_seed(kSeed, 0x7e57));
  const auto t0 = Clock::now();
  const PipelineOutput a = pipeline(train, test);
  const PipelineOutput b = pipeline(train, test);
  const bool ok = a.alphas == b.alphas && a.genotype == b.genotype && a.record == b.record &&
                  a.summary == b.summary;
  std::ostringstream d;
  d << "genotype " << (a.genotype == b.genotype ? "identical" : "differs") << ", metrics "
    << (a.record == b.record && a.summary == b.summary ? "identical" : "differ") << ", "
    << seconds_since(t0) << " s";
  report(9, ok, d.str());
}

Utterance frames(int t, ad::Rng& rng) {
  Utterance u;
  u.id = "len" + std::to_string(t);
  u.time = t;
  u.features.resize(static_cast<std::size_t>(t) * kFreqBins);
  for (double& f : u.features) f = ad::normal01(rng);
  return u;
}

void alignment() {
  ad::Rng rng(19);
  std::vector<Utterance> utts;
  for (int t : {1, 2, 3, 4, 5, 15, 16, 17, 1021, 1022, 1023, 1024, 1025, 1500}) {
    utts.push_back(frames(t, rng));
  }
  for (int i = 0; i < 200; ++i) utts.push_back(frames(1 + static_cast<int>(ad::uniform01(rng) * 1100), rng));
  const auto aligned = filter_and_align(utts);
  bool rules = true;
  for (const Utterance& u : aligned) rules = rules && u.time <= 1024 && u.time % 4 == 0;
  const bool dropped = std::none_of(aligned.begin(), aligned.end(),
                                    [](const Utterance& u) { return u.id == "len1025"; }) &&
                       std::any_of(aligned.begin(), aligned.end(),
                                   [](const Utterance& u) { return u.id == "len1024"; });

  const Genotype g = random_genotype(SpaceVariant::revised, 4, rng);
  EvalConfig ec;
  ec.l_cells = 3;
  ec.init_channels = 4;
  ec.head_widths = {8};
  EvalNetwork net = build_eval_network(g, ec, 10, 1);
  int forwards = 0;
  int errors = 0;
  for (const Utterance& u : aligned) {
    if (u.time > 64 && u.time != 1024) continue;
    const std::vector<Utterance> one = {u};
    try {
      ad::Graph graph;
      net.forward(graph, graph.constant(make_batch(one).input));
      ++forwards;
    } catch (const std::invalid_argument&) {
      ++errors;
    }
  }
  std::ostringstream d;
  d << aligned.size() << "/" << utts.size() << " kept, rules " << (rules ? "hold" : "broken")
    << ", 1025 " << (dropped ? "dropped" : "kept") << ", " << forwards << " forwards, " << errors
    << " alignment errors";
  report(10, rules && dropped && errors == 0 && forwards > 0, d.str());
}

}  // namespace

int main() {
  try {
    gradients();
    mixed_op_semantics();
    derivation_oracle();
    avg_pool_cap();

    const Dataset train = toy_dataset(50, kSeed);
    const Dataset test = toy_dataset(20, derive_seed(kSeed, 0x7e57));
    const SearchConfig cfg = desk_config();
    const DeskSearch ds = desk_search(cfg, train);
    std::ostringstream d;
    d << ds.seconds << " s for " << train.utterances.size() << " utterances, warmup alphas "
      << (ds.warmup_frozen ? "unchanged" : "changed") << ", candidate counts "
      << (ds.counts_ok ? "match" : "do not match");
    report(5, ds.seconds < kSearchSeconds && ds.warmup_frozen && ds.counts_ok, d.str());

    const Genotype g = derive(ds.result.alphas, ds.result.space, cfg.max_avg_pool);
    std::cerr << serialize(g);
    end_to_end(g, train, test);

    cost_exactness();
    rect_conv_cost();
    determinism();
    alignment();
  } catch (const std::exception& e) {
    std::cout << "acceptance aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
