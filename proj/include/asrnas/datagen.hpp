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
#include <span>
#include <string>
#include <vector>

#include "asrnas/autodiff.hpp"
#include "asrnas/tensor.hpp"

namespace asrnas {

inline constexpr int kFreqBins = 40;

// time x 40 log-energy-like matrix, row-major by frame.
struct Utterance {
  std::string id;
  int label = 0;
  int time = 0;
  std::vector<double> features;

  double at(int t, int f) const {
    return features[static_cast<std::size_t>(t) * kFreqBins + f];
  }
  bool operator==(const Utterance&) const = default;
};

struct Dataset {
  int n_classes = 0;
  std::uint64_t seed = 0;
  std::vector<Utterance> utterances;

  bool operator==(const Dataset&) const = default;
};

struct SynthOptions {
  int n_classes = 10;
  int n_per_class = 50;
  int time_min = 16;
  int time_max = 16;
  // Standard deviation of the additive noise; 0 gives clean samples.
  double noise = 0.5;
  std::uint64_t seed = 0;
};

// Each class is a spectral band at a class-specific frequency whose energy is
// modulated over time at a class-specific rate. Every utterance gets its own
// band jitter, modulation phase, gain offset and noise, all derived from
// (seed, utterance index) so generation order does not matter.
Dataset synth_dataset(const SynthOptions& opts);

// Clean class prototype (no jitter, zero phase, no gain offset, no noise).
Utterance class_template(int label, int n_classes, int time);

// (1, 3, time, 40): features, central-difference delta, delta of delta. The
// difference at the first and last frame replicates the edge frame.
Tensor compute_deltas(const Utterance& utt);

// Drops utterances longer than max_frames, then pads each remaining one at
// the end, by repeating its last frame, to the next multiple of align.
std::vector<Utterance> filter_and_align(std::span<const Utterance> utts,
                                        int max_frames = 1024, int align = 4);

struct Batch {
  Tensor input;  // (n, 3, time, 40)
  std::vector<int> labels;
};

// Utterances shorter than the longest are padded by edge replication first.
Batch make_batch(std::span<const Utterance* const> utts);
Batch make_batch(std::span<const Utterance> utts);

// Fisher-Yates permutation of 0..n-1 driven by uniform01.
std::vector<std::size_t> shuffled_indices(std::size_t n, ad::Rng& rng);
// One shuffled pass over utts in batches of batch_size (the last may be short).
std::vector<std::vector<const Utterance*>> shuffled_batches(
    std::span<const Utterance> utts, int batch_size, ad::Rng& rng);

void write_dataset(std::ostream& os, const Dataset& ds);
// Throws std::runtime_error with the offending line number.
Dataset read_dataset(std::istream& is);

// Stateless 64-bit mixing used to derive per-item seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace asrnas
