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

// Command-line driver: datagen, search, derive, eval, render, cost.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "asrnas/datagen.hpp"
#include "asrnas/evalnet.hpp"
#include "asrnas/genotype.hpp"
#include "asrnas/search.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace asrnas;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kValidation = 2, kRuntime = 3 };

// Bad configuration or input files.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string command;
  std::string config;
  std::uint64_t seed = 0;
  std::string out = "out";
  std::string variant;
  std::string view = "both";
  std::vector<std::string> inputs;
};

std::string read_file(const fs::path& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(what + ": cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

class Config {
 public:
  explicit Config(const Options& opts) {
    if (opts.config.empty()) return;
    path_ = opts.config;
    try {
      doc_ = json::parse(read_file(path_, "--config"));
    } catch (const json::parse_error& e) {
      throw ValidationError("config " + path_.string() + ": " + e.what());
    }
    if (!doc_.is_object()) throw ValidationError("config: top level must be an object");
    static const std::set<std::string> sections = {"variant", "datagen", "search", "eval",
                                                   "paths"};
    for (const auto& item : doc_.items()) {
      if (!sections.count(item.key())) {
        throw ValidationError("config: unknown section '" + item.key() + "'");
      }
    }
  }

  json section(const std::string& name) const {
    if (!doc_.contains(name)) return json::object();
    const json& s = doc_.at(name);
    if (!s.is_object()) throw ValidationError("config: '" + name + "' must be an object");
    return s;
  }

  // paths.<key>, resolved against the config file's directory.
  fs::path path(const std::string& key, const std::string& command) const {
    const json paths = section("paths");
    if (!paths.contains(key) || !paths.at(key).is_string()) {
      throw ValidationError("config: paths." + key + " is required for '" + command + "'");
    }
    fs::path p = paths.at(key).get<std::string>();
    if (p.is_relative() && !path_.empty()) p = path_.parent_path() / p;
    return p;
  }

  std::string variant() const {
    if (!doc_.contains("variant")) return "revised";
    if (!doc_.at("variant").is_string()) throw ValidationError("config: variant must be a string");
    return doc_.at("variant").get<std::string>();
  }

 private:
  fs::path path_;
  json doc_ = json::object();
};

SpaceVariant resolve_variant(const Options& opts, const Config& cfg) {
  const std::string name = opts.variant.empty() ? cfg.variant() : opts.variant;
  const auto v = parse_variant(name);
  if (!v) throw ValidationError("variant must be 'original' or 'revised', got '" + name + "'");
  return *v;
}

// Positional input i if given, otherwise paths.<key>.
fs::path input_path(const Options& opts, const Config& cfg, std::size_t i,
                    const std::string& key) {
  if (opts.inputs.size() > i) return opts.inputs[i];
  return cfg.path(key, opts.command);
}

SearchConfig search_config(const Config& cfg) {
  try {
    SearchConfig sc = search_config_from_json(cfg.section("search").dump());
    sc.validate();
    return sc;
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
}

EvalConfig eval_config(const Config& cfg) {
  try {
    EvalConfig ec = eval_config_from_json(cfg.section("eval").dump());
    ec.validate();
    return ec;
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
}

Dataset load_dataset(const fs::path& path) {
  std::istringstream in(read_file(path, "dataset"));
  try {
    return read_dataset(in);
  } catch (const std::runtime_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

Genotype load_genotype(const fs::path& path) {
  try {
    return parse_genotype(read_file(path, "genotype"));
  } catch (const GenotypeParseError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void check_genotype(const Genotype& g, const fs::path& path) {
  const auto problems = validate(g);
  if (problems.empty()) return;
  std::string msg = path.string() + ": invalid genotype";
  for (const auto& p : problems) msg += "\n  " + p;
  throw ValidationError(msg);
}

int cmd_datagen(const Options& opts, const Config& cfg) {
  const json d = cfg.section("datagen");
  static const std::set<std::string> keys = {"n_classes", "n_per_class", "test_per_class",
                                             "time_min",  "time_max",    "noise"};
  for (const auto& item : d.items()) {
    if (!keys.count(item.key())) {
      throw ValidationError("config: unknown field datagen." + item.key());
    }
  }
  SynthOptions so;
  int test_per_class = 20;
  try {
    so.n_classes = d.value("n_classes", so.n_classes);
    so.n_per_class = d.value("n_per_class", so.n_per_class);
    so.time_min = d.value("time_min", so.time_min);
    so.time_max = d.value("time_max", so.time_max);
    so.noise = d.value("noise", so.noise);
    test_per_class = d.value("test_per_class", test_per_class);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: datagen: ") + e.what());
  }
  if (test_per_class < 0) throw ValidationError("config: datagen.test_per_class must be >= 0");
  so.seed = opts.seed;
  Dataset train;
  Dataset test;
  try {
    train = synth_dataset(so);
    so.n_per_class = test_per_class;
    so.seed = derive_seed(opts.seed, 0x7e57);
    test = synth_dataset(so);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string("config: datagen: ") + e.what());
  }
  fs::create_directories(opts.out);
  std::ostringstream a;
  write_dataset(a, train);
  write_file(fs::path(opts.out) / "train.txt", a.str());
  std::ostringstream b;
  write_dataset(b, test);
  write_file(fs::path(opts.out) / "test.txt", b.str());
  std::cerr << "datagen: " << train.utterances.size() << " train, " << test.utterances.size()
            << " test utterances\n";
  return kOk;
}

int cmd_search(const Options& opts, const Config& cfg) {
  const SearchConfig sc = search_config(cfg);
  const SpaceVariant variant = resolve_variant(opts, cfg);
  const Dataset train = load_dataset(cfg.path("train", "search"));
  const fs::path out = opts.out;
  fs::create_directories(out);

  std::ostringstream metrics;
  write_metrics_header(metrics);
  SearchCallbacks cb;
  cb.on_epoch = [&](const EpochStats& s) {
    write_metrics_rows(metrics, s);
    std::cerr << "search: stage " << s.stage + 1 << " epoch " << s.epoch + 1 << " train_loss "
              << s.train_loss << " val_loss " << s.val_loss << "\n";
  };
  cb.on_stage = [&](const StageResult& st) {
    write_file(out / ("stage_" + std::to_string(st.stage + 1) + ".json"),
               checkpoint_to_json(sc, variant, opts.seed, st));
  };
  const SearchResult r = run_search(sc, variant, train, opts.seed, cb);
  write_file(out / "alphas.json", alphas_to_json(r.alphas, r.space, sc.n_nodes));
  write_file(out / "metrics.csv", metrics.str());
  return kOk;
}

int cmd_derive(const Options& opts, const Config& cfg) {
  const fs::path in = input_path(opts, cfg, 0, "alphas");
  std::pair<AlphaTable, OperationSpace> loaded;
  try {
    loaded = alphas_from_json(read_file(in, "alphas"));
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    throw ValidationError(in.string() + ": " + e.what());
  }
  if (!opts.variant.empty() && resolve_variant(opts, cfg) != loaded.second.variant()) {
    throw ValidationError("--variant " + opts.variant + " does not match the alpha file");
  }
  const int max_avg_pool = search_config(cfg).max_avg_pool;
  Genotype g;
  try {
    g = derive(loaded.first, loaded.second, max_avg_pool);
  } catch (const DerivationError& e) {
    throw ValidationError(e.what());
  }
  const fs::path out_path = fs::path(opts.out) / "genotype.json";
  check_genotype(g, out_path);
  fs::create_directories(opts.out);
  write_file(out_path, serialize(g));
  return kOk;
}

int cmd_eval(const Options& opts, const Config& cfg) {
  const EvalConfig ec = eval_config(cfg);
  const fs::path gpath = input_path(opts, cfg, 0, "genotype");
  const Genotype g = load_genotype(gpath);
  check_genotype(g, gpath);
  const Dataset train = load_dataset(cfg.path("train", "eval"));
  const Dataset test = load_dataset(cfg.path("test", "eval"));
  if (test.n_classes != train.n_classes) {
    throw ValidationError("eval: train and test datasets disagree on n_classes");
  }
  const auto train_set = filter_and_align(train.utterances);
  const auto test_set = filter_and_align(test.utterances);
  if (train_set.empty() || test_set.empty()) {
    throw ValidationError("eval: train and test sets must be nonempty after filtering");
  }

  EvalNetwork net = build_eval_network(g, ec, train.n_classes, opts.seed);
  const TrainRecord record = train_eval(net, train_set, ec, opts.seed);
  EvalSummary summary;
  summary.l_cells = ec.l_cells;
  summary.init_channels = ec.init_channels;
  summary.params = net.parameter_count();
  summary.macs = network_cost(g, net.plan(), train_set.front().time).macs;
  summary.train_acc = evaluate(net, train_set, ec.batch_size);
  summary.test_acc = evaluate(net, test_set, ec.batch_size);
  summary.final_train_loss = record.epochs.back().train_loss;

  fs::create_directories(opts.out);
  std::ostringstream csv;
  write_train_record_csv(csv, record);
  write_file(fs::path(opts.out) / "train_record.csv", csv.str());
  write_file(fs::path(opts.out) / "summary.json", summary_to_json(summary));
  std::cerr << "eval: train_acc " << summary.train_acc << " test_acc " << summary.test_acc
            << "\n";
  return kOk;
}

int cmd_render(const Options& opts, const Config& cfg) {
  const fs::path gpath = input_path(opts, cfg, 0, "genotype");
  const Genotype g = load_genotype(gpath);
  check_genotype(g, gpath);
  DotView view = DotView::both;
  if (opts.view == "normal") {
    view = DotView::normal;
  } else if (opts.view == "reduction") {
    view = DotView::reduction;
  }
  fs::create_directories(opts.out);
  write_file(fs::path(opts.out) / "genotype.dot", render_dot(g, view));
  return kOk;
}

int cmd_cost(const Options& opts, const Config& cfg) {
  const EvalConfig ec = eval_config(cfg);
  std::vector<fs::path> paths;
  for (const auto& p : opts.inputs) paths.emplace_back(p);
  if (paths.empty()) paths.push_back(cfg.path("genotype", "cost"));

  const json d = cfg.section("datagen");
  const int n_classes = d.contains("n_classes") && d.at("n_classes").is_number_integer()
                            ? d.at("n_classes").get<int>()
                            : SynthOptions{}.n_classes;
  std::set<OpKind> kinds;
  json networks = json::array();
  for (const fs::path& p : paths) {
    const Genotype g = load_genotype(p);
    check_genotype(g, p);
    for (CellType t : {CellType::normal, CellType::reduction}) {
      for (const GeneEdge& e : g.cell(t)) kinds.insert(e.op);
    }
    const NetworkPlan plan = eval_plan(g, ec, n_classes);
    const CostReport c = network_cost(g, plan);
    networks.push_back({{"genotype", p.filename().string()},
                        {"variant", std::string(variant_name(g.variant))},
                        {"l_cells", plan.l_cells},
                        {"init_channels", plan.init_channels},
                        {"params", c.params},
                        {"macs", c.macs},
                        {"seq_depth", c.seq_depth},
                        {"activations", c.activations}});
  }
  std::vector<CostRow> rows;
  for (OpKind k : kinds) {
    for (int stride : {1, 2}) {
      rows.push_back({k, ec.init_channels, stride,
                      op_cost(k, ec.init_channels, 16, kFreqBins, stride, true)});
    }
  }
  fs::create_directories(opts.out);
  std::ostringstream csv;
  write_cost_csv(csv, rows);
  write_file(fs::path(opts.out) / "cost.csv", csv.str());
  write_file(fs::path(opts.out) / "network_cost.json", networks.dump(2) + "\n");
  return kOk;
}

int dispatch(const Options& opts) {
  const Config cfg(opts);
  static const std::map<std::string, int (*)(const Options&, const Config&)> commands = {
      {"datagen", cmd_datagen}, {"search", cmd_search}, {"derive", cmd_derive},
      {"eval", cmd_eval},       {"render", cmd_render}, {"cost", cmd_cost}};
  return commands.at(opts.command)(opts, cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable cell search for spectrogram classifiers"};
  app.require_subcommand(1);
  Options opts;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"datagen", "Write synthetic train/test datasets"},
      {"search", "Run the progressive architecture search"},
      {"derive", "Derive a genotype from an alpha file"},
      {"eval", "Train and score the evaluation network of a genotype"},
      {"render", "Write a Graphviz description of a genotype"},
      {"cost", "Tabulate operation and network costs"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opts.config, "JSON run configuration");
    sub->add_option("--seed", opts.seed, "Seed for every random stream");
    sub->add_option("--out", opts.out, "Output directory")->capture_default_str();
    sub->add_option("--variant", opts.variant, "Operation space")
        ->check(CLI::IsMember({"original", "revised"}));
    if (name == "render") {
      sub->add_option("--view", opts.view, "Cells to draw")
          ->check(CLI::IsMember({"both", "normal", "reduction"}));
    }
    if (name != "datagen" && name != "search") {
      sub->add_option("inputs", opts.inputs, "Input files (override config paths)");
    }
    sub->callback([&opts, name = name] { opts.command = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }
  try {
    return dispatch(opts);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}
