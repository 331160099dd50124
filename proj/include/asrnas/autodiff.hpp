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
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "asrnas/kernels.hpp"
#include "asrnas/tensor.hpp"

namespace asrnas::ad {

// A trainable tensor together with its gradient and optimizer state.
struct Parameter {
  Parameter() = default;
  explicit Parameter(Shape shape, std::string name = {});

  Tensor value;
  Tensor grad;
  Tensor momentum;
  std::string name;

  std::size_t numel() const { return value.size(); }
  void zero_grad() { grad.fill(0.0); }
};

class Graph;

// Handle to a node of a Graph. A default-constructed Var is "absent"; ops
// that accept optional inputs (affine batchnorm, zero candidates in a mix)
// treat it as missing.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Reverse-mode tape. Nodes are appended in execution order, so the node list
// is always a topological order and backward simply walks it in reverse.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  // Leaf bound to an external parameter; its gradient lands in p.grad.
  Var parameter(Parameter& p);

  const Tensor& value(int id) const;
  const Tensor& value(Var v) const { return value(v.id); }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and propagates to every parameter leaf.
  // Unless retain is set, node activations are released as the sweep passes
  // them and the graph cannot be differentiated again.
  void backward(Var loss, bool retain = false);

  // Op implementation interface.
  Var record(Tensor value, std::vector<int> inputs, BackwardFn fn);
  // Gradient buffer of a node, allocated (zeroed) on first use.
  Tensor& grad_buffer(int id);
  const Tensor& grad(int id) const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, int> param_nodes_;
  bool released_ = false;
};

// Deterministic RNG shared by initializers and dropout masks.
using Rng = std::mt19937_64;
// Uniform in [0, 1) from the top 53 bits; portable across standard libraries.
double uniform01(Rng& rng);
// Box-Muller standard normal; portable across standard libraries.
double normal01(Rng& rng);

enum class NormStats { per_batch, per_sample };

// Primitive suite. Every function records a node in x's graph.
Var conv2d(Var x, Var weight, const kernels::ConvSpec& spec);
Var relu(Var x);
Var batch_norm(Var x, Var gamma = {}, Var beta = {}, double eps = 1e-5,
               NormStats stats = NormStats::per_batch);
Var max_pool3x3(Var x, int stride);
Var avg_pool3x3(Var x, int stride);
// Removes the first `top` rows and `left` columns of every plane.
Var crop(Var x, int top, int left);
Var add(Var a, Var b);
Var add_n(std::span<const Var> xs);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
Var sum(Var x);
Var concat_channels(std::span<const Var> xs);
Var zeros(Graph& g, Shape shape);
// Inverted dropout; p == 0 returns x unchanged without recording a node.
Var dropout(Var x, double p, Rng& rng);

// (n, c, t, f) -> (n, 1, t, c*f): one feature vector per frame.
Var flatten_frames(Var x);
// x (n, 1, t, in), weight (1, 1, out, in), bias (1, 1, 1, out) -> (n, 1, t, out)
Var linear(Var x, Var weight, Var bias);
// (n, 1, t, d) -> (n, 1, 1, d)
Var mean_time(Var x);
// Softmax along the last dimension.
Var softmax(Var x);
// Mean negative log-likelihood of logits (n, 1, 1, k) against labels.
Var cross_entropy_loss(Var logits, std::span<const int> labels);
// Weighted sum of candidates: sum_k weights[row, k] * xs[k], where weights is
// (1, 1, rows, k). Absent candidates contribute zero.
Var mix(std::span<const Var> xs, Var weights, int row);

}  // namespace asrnas::ad
