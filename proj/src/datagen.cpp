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

#include "asrnas/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "asrnas/autodiff.hpp"

namespace asrnas {
namespace {

constexpr double kBandAmplitude = 3.0;
constexpr double kBandWidth = 1.5;

double band_center(int label, int n_classes) {
  return 3.0 + 34.0 * (label + 0.5) / n_classes;
}

// Modulation cycles over a nominal 16-frame window.
double modulation_rate(int label) { return 0.5 * (label % 3); }

void fill_utterance(Utterance& u, int n_classes, double jitter, double phase,
                    double gain, double noise, ad::Rng* rng) {
  const double center = band_center(u.label, n_classes) + jitter;
  const double rate = modulation_rate(u.label);
  u.features.assign(static_cast<std::size_t>(u.time) * kFreqBins, 0.0);
  for (int t = 0; t < u.time; ++t) {
    const double env =
        1.0 + 0.5 * std::cos(2.0 * std::numbers::pi * rate * t / 16.0 + phase);
    for (int f = 0; f < kFreqBins; ++f) {
      const double d = (f - center) / kBandWidth;
      double v = 1.0 - 0.05 * f + gain +
                 kBandAmplitude * env * std::exp(-0.5 * d * d);
      if (noise > 0.0) v += noise * ad::normal01(*rng);
      u.features[static_cast<std::size_t>(t) * kFreqBins + f] = v;
    }
  }
}

// Central difference along time with edge replication.
void delta(const double* in, double* out, int time) {
  for (int t = 0; t < time; ++t) {
    const double* next = in + static_cast<std::size_t>(std::min(t + 1, time - 1)) * kFreqBins;
    const double* prev = in + static_cast<std::size_t>(std::max(t - 1, 0)) * kFreqBins;
    double* o = out + static_cast<std::size_t>(t) * kFreqBins;
    for (int f = 0; f < kFreqBins; ++f) o[f] = (next[f] - prev[f]) / 2.0;
  }
}

Utterance pad_to(const Utterance& u, int time) {
  Utterance out = u;
  if (u.time == 0) throw std::invalid_argument("utterance " + u.id + " is empty");
  out.features.reserve(static_cast<std::size_t>(time) * kFreqBins);
  const std::vector<double> last(u.features.end() - kFreqBins, u.features.end());
  for (int t = u.time; t < time; ++t) {
    out.features.insert(out.features.end(), last.begin(), last.end());
  }
  out.time = time;
  return out;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a simple combination
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Dataset synth_dataset(const SynthOptions& opts) {
  if (opts.n_classes < 2) throw std::invalid_argument("synth_dataset: n_classes must be >= 2");
  if (opts.n_per_class < 0) throw std::invalid_argument("synth_dataset: negative n_per_class");
  if (opts.time_min < 1 || opts.time_max < opts.time_min) {
    throw std::invalid_argument("synth_dataset: invalid time range");
  }
  Dataset ds;
  ds.n_classes = opts.n_classes;
  ds.seed = opts.seed;
  const int total = opts.n_classes * opts.n_per_class;
  ds.utterances.resize(total);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < total; ++i) {
    ad::Rng rng(derive_seed(opts.seed, static_cast<std::uint64_t>(i)));
    Utterance& u = ds.utterances[i];
    u.label = i % opts.n_classes;
    u.id = "utt" + std::to_string(i);
    const int span = opts.time_max - opts.time_min + 1;
    u.time = opts.time_min + static_cast<int>(ad::uniform01(rng) * span);
    const double jitter = 2.0 * ad::uniform01(rng) - 1.0;
    const double phase = 2.0 * std::numbers::pi * ad::uniform01(rng);
    const double gain = ad::uniform01(rng) - 0.5;
    fill_utterance(u, opts.n_classes, jitter, phase, gain, opts.noise, &rng);
  }
  return ds;
}

Utterance class_template(int label, int n_classes, int time) {
  Utterance u;
  u.id = "template" + std::to_string(label);
  u.label = label;
  u.time = time;
  fill_utterance(u, n_classes, 0.0, 0.0, 0.0, 0.0, nullptr);
  return u;
}

Tensor compute_deltas(const Utterance& utt) {
  if (utt.time < 1) throw std::invalid_argument("compute_deltas: empty utterance");
  Tensor out({1, 3, utt.time, kFreqBins});
  const std::size_t plane = static_cast<std::size_t>(utt.time) * kFreqBins;
  std::copy(utt.features.begin(), utt.features.end(), out.data());
  delta(out.data(), out.data() + plane, utt.time);
  delta(out.data() + plane, out.data() + 2 * plane, utt.time);
  return out;
}

std::vector<Utterance> filter_and_align(std::span<const Utterance> utts,
                                        int max_frames, int align) {
  if (align < 1) throw std::invalid_argument("filter_and_align: align must be >= 1");
  std::vector<Utterance> out;
  for (const Utterance& u : utts) {
    if (u.time < 1 || u.time > max_frames) continue;
    const int padded = (u.time + align - 1) / align * align;
    // Padding past max_frames only happens when max_frames itself is not
    // aligned; such utterances are dropped as well.
    if (padded > max_frames) continue;
    out.push_back(pad_to(u, padded));
  }
  return out;
}

Batch make_batch(std::span<const Utterance* const> utts) {
  if (utts.empty()) throw std::invalid_argument("make_batch: empty batch");
  int time = 0;
  for (const Utterance* u : utts) time = std::max(time, u->time);
  Batch b;
  b.input = Tensor({static_cast<int>(utts.size()), 3, time, kFreqBins});
  const std::size_t block = 3 * static_cast<std::size_t>(time) * kFreqBins;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    const Tensor d = compute_deltas(utts[i]->time == time ? *utts[i] : pad_to(*utts[i], time));
    std::copy(d.data(), d.data() + block, b.input.data() + i * block);
    b.labels.push_back(utts[i]->label);
  }
  return b;
}

Batch make_batch(std::span<const Utterance> utts) {
  std::vector<const Utterance*> ptrs;
  for (const Utterance& u : utts) ptrs.push_back(&u);
  return make_batch(std::span<const Utterance* const>(ptrs));
}

std::vector<std::size_t> shuffled_indices(std::size_t n, ad::Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(ad::uniform01(rng) * i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

std::vector<std::vector<const Utterance*>> shuffled_batches(
    std::span<const Utterance> utts, int batch_size, ad::Rng& rng) {
  if (batch_size < 1) throw std::invalid_argument("shuffled_batches: batch_size must be >= 1");
  const auto order = shuffled_indices(utts.size(), rng);
  std::vector<std::vector<const Utterance*>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    std::vector<const Utterance*> b;
    for (std::size_t j = i; j < std::min(order.size(), i + batch_size); ++j) {
      b.push_back(&utts[order[j]]);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

void write_dataset(std::ostream& os, const Dataset& ds) {
  os << "# asrnas dataset v1\n";
  os << "n_classes " << ds.n_classes << '\n';
  os << "count " << ds.utterances.size() << '\n';
  os << "seed " << ds.seed << '\n';
  os << std::setprecision(17);
  for (const Utterance& u : ds.utterances) {
    os << "utt " << u.id << ' ' << u.label << ' ' << u.time << '\n';
    for (int t = 0; t < u.time; ++t) {
      for (int f = 0; f < kFreqBins; ++f) {
        if (f) os << ' ';
        os << u.at(t, f);
      }
      os << '\n';
    }
  }
}

Dataset read_dataset(std::istream& is) {
  int line_no = 0;
  std::string line;
  auto fail = [&](const std::string& what) {
    throw std::runtime_error("dataset line " + std::to_string(line_no) + ": " + what);
  };
  auto next_line = [&]() {
    while (std::getline(is, line)) {
      ++line_no;
      if (!line.empty() && line[0] != '#') return true;
    }
    return false;
  };
  auto header = [&](const char* key) {
    if (!next_line()) fail(std::string("missing header field '") + key + "'");
    std::istringstream ss(line);
    std::string k;
    std::uint64_t v = 0;
    if (!(ss >> k >> v) || k != key) fail(std::string("expected '") + key + " <int>'");
    return v;
  };
  Dataset ds;
  ds.n_classes = static_cast<int>(header("n_classes"));
  const std::uint64_t count = header("count");
  ds.seed = header("seed");
  for (std::uint64_t i = 0; i < count; ++i) {
    if (!next_line()) fail("expected " + std::to_string(count) + " utterances, got " +
                           std::to_string(i));
    std::istringstream ss(line);
    std::string tag;
    Utterance u;
    if (!(ss >> tag >> u.id >> u.label >> u.time) || tag != "utt") {
      fail("expected 'utt <id> <label> <time>'");
    }
    if (u.time < 0) fail("negative time");
    if (u.label < 0 || u.label >= ds.n_classes) fail("label out of range");
    u.features.reserve(static_cast<std::size_t>(u.time) * kFreqBins);
    for (int t = 0; t < u.time; ++t) {
      if (!next_line()) fail("truncated utterance " + u.id);
      std::istringstream row(line);
      for (int f = 0; f < kFreqBins; ++f) {
        double v = 0.0;
        if (!(row >> v)) fail("expected 40 values per frame");
        u.features.push_back(v);
      }
    }
    ds.utterances.push_back(std::move(u));
  }
  return ds;
}

}  // namespace asrnas
