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

#include "asrnas/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace asrnas::ad {

Parameter::Parameter(Shape shape, std::string name)
    : value(shape), grad(shape), momentum(shape), name(std::move(name)) {}

const Tensor& Var::value() const { return graph->value(id); }

Var Graph::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
    return {this, it->second};
  }
  Node node;
  node.param = &p;
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, id);
  return {this, id};
}

const Tensor& Graph::value(int id) const {
  const Node& node = nodes_.at(id);
  return node.param ? node.param->value : node.value;
}

Var Graph::record(Tensor value, std::vector<int> inputs, BackwardFn fn) {
  if (released_) {
    throw std::logic_error("graph: cannot record after a releasing backward");
  }
  Node node;
  node.value = std::move(value);
  node.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                   [&](int i) { return nodes_[i].requires_grad; });
  node.inputs = std::move(inputs);
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Graph::grad_buffer(int id) {
  Node& node = nodes_[id];
  if (node.param) return node.param->grad;
  if (node.grad.empty() && node.value.size() > 0) {
    node.grad = Tensor(node.value.shape());
  }
  return node.grad;
}

const Tensor& Graph::grad(int id) const {
  const Node& node = nodes_.at(id);
  return node.param ? node.param->grad : node.grad;
}

void Graph::backward(Var loss, bool retain) {
  if (loss.graph != this) throw std::invalid_argument("backward: foreign node");
  if (released_) {
    throw std::logic_error("backward: graph activations were already released");
  }
  if (value(loss.id).size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " +
                     value(loss.id).shape().str());
  }
  for (Node& node : nodes_) {
    if (!node.param) node.grad = Tensor();
  }
  if (!nodes_[loss.id].requires_grad) return;
  grad_buffer(loss.id)[0] = 1.0;

  for (int i = loss.id; i >= 0; --i) {
    Node& node = nodes_[i];
    if (node.param || !node.requires_grad) continue;
    if (!node.grad.empty() && node.backward) node.backward(*this, i);
    if (!retain) {
      nodes_[i].grad = Tensor();
      nodes_[i].backward = nullptr;
      if (i != loss.id) nodes_[i].value = Tensor();
    }
  }
  if (!retain) released_ = true;
}

double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double normal01(Rng& rng) {
  double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

namespace {

Graph& graph_of(Var v) {
  if (!v.valid()) throw std::invalid_argument("autodiff: absent input node");
  return *v.graph;
}

void require_same_graph(Var a, Var b) {
  if (a.graph != b.graph) {
    throw std::invalid_argument("autodiff: inputs belong to different graphs");
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() +
                     " vs " + b.shape().str());
  }
}

}  // namespace

Var conv2d(Var x, Var weight, const kernels::ConvSpec& spec) {
  Graph& g = graph_of(x);
  require_same_graph(x, weight);
  const Tensor& xv = g.value(x);
  const Tensor& wv = g.value(weight);
  Tensor y(kernels::conv2d_output_shape(xv.shape(), wv.shape(), spec));
  kernels::conv2d_forward(xv, wv, spec, y);
  const int xi = x.id;
  const int wi = weight.id;
  return g.record(std::move(y), {xi, wi}, [xi, wi, spec](Graph& g, int self) {
    const Tensor& gy = g.grad(self);
    if (g.requires_grad(xi)) {
      kernels::conv2d_backward_input(gy, g.value(wi), spec, g.grad_buffer(xi));
    }
    if (g.requires_grad(wi)) {
      kernels::conv2d_backward_weight(gy, g.value(xi), spec, g.grad_buffer(wi));
    }
  });
}

Var relu(Var x) {
  Graph& g = graph_of(x);
  const Tensor& xv = g.value(x);
  Tensor y(xv.shape());
  const std::size_t n = xv.size();
  for (std::size_t i = 0; i < n; ++i) y[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  const int xi = x.id;
  return g.record(std::move(y), {xi}, [xi](Graph& g, int self) {
    const Tensor& gy = g.grad(self);
    const Tensor& yv = g.value(self);
    Tensor& gx = g.grad_buffer(xi);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      if (yv[i] > 0.0) gx[i] += gy[i];
    }
  });
}

Var batch_norm(Var x, Var gamma, Var beta, double eps, NormStats stats) {
  Graph& g = graph_of(x);
  const Tensor& xv = g.value(x);
  const Shape s = xv.shape();
  const bool affine = gamma.valid();
  if (affine != beta.valid()) {
    throw std::invalid_argument("batch_norm: gamma and beta come in pairs");
  }
  if (affine) {
    const Shape ps{1, s.c, 1, 1};
    if (g.value(gamma).shape() != ps || g.value(beta).shape() != ps) {
      throw ShapeError("batch_norm: affine parameters must be " + ps.str());
    }
  }
  const double* gp = affine ? g.value(gamma).data() : nullptr;
  const double* bp = affine ? g.value(beta).data() : nullptr;
  Tensor y(s);
  Tensor xhat(s);
  std::vector<double> inv_std;
  const bool per_sample = stats == NormStats::per_sample;
  if (per_sample) {
    kernels::instance_stats_norm_forward(xv, gp, bp, eps, y, xhat, inv_std);
  } else {
    kernels::batch_norm_forward(xv, gp, bp, eps, y, xhat, inv_std);
  }
  std::vector<int> inputs{x.id};
  if (affine) {
    inputs.push_back(gamma.id);
    inputs.push_back(beta.id);
  }
  // Without an affine transform the output already is xhat.
  if (!affine) xhat = Tensor();
  const int xi = x.id;
  const int gi = gamma.id;
  const int bi = beta.id;
  return g.record(
      std::move(y), std::move(inputs),
      [xi, gi, bi, affine, per_sample, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        const Tensor& normalized = affine ? xhat : g.value(self);
        const double* gp = affine ? g.value(gi).data() : nullptr;
        double* ggp = nullptr;
        double* gbp = nullptr;
        if (affine && g.requires_grad(gi)) ggp = g.grad_buffer(gi).data();
        if (affine && g.requires_grad(bi)) gbp = g.grad_buffer(bi).data();
        if (g.requires_grad(xi)) {
          kernels::batch_norm_backward(gy, normalized, inv_std, gp, per_sample,
                                       g.grad_buffer(xi), ggp, gbp);
        } else if (ggp || gbp) {
          Tensor scratch(gy.shape());
          kernels::batch_norm_backward(gy, normalized, inv_std, gp, per_sample,
                                       scratch, ggp, gbp);
        }
      });
}

Var max_pool3x3(Var x, int stride) {
  Graph& g = graph_of(x);
  const Tensor& xv = g.value(x);
  Tensor y(kernels::pool3x3_output_shape(xv.shape(), stride));
  std::vector<std::size_t> argmax;
  kernels::max_pool3x3_forward(xv, stride, y, argmax);
  const int xi = x.id;
  return g.record(std::move(y), {xi},
                  [xi, argmax = std::move(argmax)](Graph& g, int self) {
                    kernels::max_pool3x3_backward(g.grad(self), argmax,
                                                  g.grad_buffer(xi));
                  });
}

Var avg_pool3x3(Var x, int stride) {
  Graph& g = graph_of(x);
  const Tensor& xv = g.value(x);
  Tensor y(kernels::pool3x3_output_shape(xv.shape(), stride));
  kernels::avg_pool3x3_forward(xv, stride, y);
  const int xi = x.id;
  return g.record(std::move(y), {xi}, [xi, stride](Graph& g, int self) {
    kernels::avg_pool3x3_backward(g.grad(self), stride, g.grad_buffer(xi));
  });
}

Var crop(Var x, int top, int left) {
  Graph& g = graph_of(x);
  const Tensor& xv = g.value(x);
  const Shape s = xv.shape();
  if (top < 0 || left < 0 || top >= s.h || left >= s.w) {
    throw ShapeError("crop: offsets (" + std::to_string(top) + "," +
                     std::to_string(left) + ") out of range for " + s.str());
  }
  const Shape os{s.n, s.c, s.h - top, s.w - left};
  Tensor y(os);
  for (int p = 0; p < s.n * s.c; ++p) {
    for (int h = 0; h < os.h; ++h) {
      const double* src = xv.data() + p * s.plane() + (h + top) * s.w + left;
      std::copy(src, src + os.w, y.data() + p * os.plane() + h * os.w);
    }
  }
  const int xi = x.id;
  return g.record(std::move(y), {xi}, [xi, top, left](Graph& g, int self) {
    const Tensor& gy = g.grad(self);
    Tensor& gx = g.grad_buffer(xi);
    const Shape s = gx.shape();
    const Shape os = gy.shape();
    for (int p = 0; p < s.n * s.c; ++p) {
      for (int h = 0; h < os.h; ++h) {
        double* dst = gx.data() + p * s.plane() + (h + top) * s.w + left;
        const double* src = gy.data() + p * os.plane() + h * os.w;
        for (int w = 0; w < os.w; ++w) dst[w] += src[w];
      }
    }
  });
}

Var add(Var a, Var b) {
  const Var xs[] = {a, b};
  return add_n(xs);
}

Var add_n(std::span<const Var> xs) {
  if (xs.empty()) throw std::invalid_argument("add_n: no inputs");
  Graph& g = graph_of(xs[0]);
  Tensor y = g.value(xs[0]);
  std::vector<int> inputs{xs[0].id};
  for (std::size_t k = 1; k < xs.size(); ++k) {
    require_same_graph(xs[0], xs[k]);
    const Tensor& v = g.value(xs[k]);
    require_same_shape(y, v, "add");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += v[i];
    inputs.push_back(xs[k].id);
  }
  return g.record(std::move(y), inputs, [inputs](Graph& g, int self) {
    const Tensor& gy = g.grad(self);
    for (int in : inputs) {
      if (!g.requires_grad(in)) continue;
      Tensor& gx = g.grad_buffer(in);
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
    }
  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a);
  require_same_graph(a, b);
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_same_shape(av, bv, "mul");
  Tensor y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  const int ai = a.id;
  const int bi = b.id;
  return g.record(std::move(y), {ai, bi}, [ai, bi](Graph& g, int self) {
    const Tensor& gy = g.grad(self);
    if (g.requires_grad(ai)) {
      Tensor& ga = g.grad_buffer(ai);
      const Tensor& bv = g.value(bi);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv[i];
    }
    if (g.requires_grad(bi)) {
      Tensor& gb = g.grad_buffer(bi);
      const Tensor& av = g.value(ai);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av[i];
    }
  });
}

Var scale(Var x, double factor) {
  Graph& g = graph_of(x);
  Tensor y = g.value(x);
  for (double& v : y.values()) v *= factor;
  const int xi = x.id;
  return g.record(std::move(y), {xi}, [xi, factor](Graph& g, int self) {
    const Tensor& gy = g.grad(self);
    Tensor& gx = g.grad_buffer(xi);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += factor * gy[i];
  });
}

Var sum(Var x) {
  Graph& g = graph_of(x);
  const Tensor& xv = g.value(x);
  double total = 0.0;
  for (double v : xv.values()) total += v;
  const int xi = x.id;
  return g.record(Tensor({1, 1, 1, 1}, total), {xi}, [xi](Graph& g, int self) {
    const double gy = g.grad(self)[0];
    Tensor& gx = g.grad_buffer(xi);
    for (double& v : gx.values()) v += gy;
  });
}

Var concat_channels(std::span<const Var> xs) {
  if (xs.empty()) throw std::invalid_argument("concat: no inputs");
  Graph& g = graph_of(xs[0]);
  const Shape first = g.value(xs[0]).shape();
  Shape os = first;
  os.c = 0;
  std::vector<int> inputs;
  for (Var v : xs) {
    require_same_graph(xs[0], v);
    const Shape s = g.value(v).shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError("concat: incompatible shapes " + first.str() + " and " +
                       s.str());
    }
    os.c += s.c;
    inputs.push_back(v.id);
  }
  Tensor y(os);
  for (int n = 0; n < os.n; ++n) {
    int c_off = 0;
    for (Var v : xs) {
      const Tensor& xv = g.value(v);
      const std::size_t block = xv.shape().c * xv.shape().plane();
      std::copy_n(xv.data() + n * block, block,
                  y.data() + (static_cast<std::size_t>(n) * os.c + c_off) *
                                 os.plane());
      c_off += xv.shape().c;
    }
  }
  return g.record(std::move(y), inputs, [inputs](Graph& g, int self) {
    const Tensor& gy = g.grad(self);
    const Shape os = gy.shape();
    int c_off = 0;
    for (int in : inputs) {
      const Shape s = g.value(in).shape();
      if (g.requires_grad(in)) {
        Tensor& gx = g.grad_buffer(in);
        const std::size_t block = s.c * s.plane();
        for (int n = 0; n < os.n; ++n) {
          const double* src =
              gy.data() + (static_cast<std::size_t>(n) * os.c + c_off) * os.plane();
          double* dst = gx.data() + n * block;
          for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
        }
      }
      c_off += s.c;
    }
  });
}

Var zeros(Graph& g, Shape shape) { return g.constant(Tensor(shape)); }

Var dropout(Var x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) {
    throw std::invalid_argument("dropout: rate must be in [0, 1)");
  }
  if (p == 0.0) return x;
  Graph& g = graph_of(x);
  const Tensor& xv = g.value(x);
  std::vector<double> mask(xv.size());
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& m : mask) m = uniform01(rng) < p ? 0.0 : keep_scale;
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * mask[i];
  const int xi = x.id;
  return g.record(std::move(y), {xi},
                  [xi, mask = std::move(mask)](Graph& g, int self) {
                    const Tensor& gy = g.grad(self);
                    Tensor& gx = g.grad_buffer(xi);
                    for (std::size_t i = 0; i < gy.size(); ++i) {
                      gx[i] += gy[i] * mask[i];
                    }
                  });
}

Var flatten_frames(Var x) {
  Graph& g = graph_of(x);
  const Tensor& xv = g.value(x);
  const Shape s = xv.shape();
  const Shape os{s.n, 1, s.h, s.c * s.w};
  Tensor y(os);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int t = 0; t < s.h; ++t)
        std::copy_n(xv.data() + xv.index(n, c, t, 0), s.w,
                    y.data() + y.index(n, 0, t, c * s.w));
  const int xi = x.id;
  return g.record(std::move(y), {xi}, [xi](Graph& g, int self) {
    const Tensor& gy = g.grad(self);
    Tensor& gx = g.grad_buffer(xi);
    const Shape s = gx.shape();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int t = 0; t < s.h; ++t) {
          const double* src = gy.data() + gy.index(n, 0, t, c * s.w);
          double* dst = gx.data() + gx.index(n, c, t, 0);
          for (int f = 0; f < s.w; ++f) dst[f] += src[f];
        }
  });
}

Var linear(Var x, Var weight, Var bias) {
  Graph& g = graph_of(x);
  require_same_graph(x, weight);
  require_same_graph(x, bias);
  const Tensor& xv = g.value(x);
  const Tensor& wv = g.value(weight);
  const Tensor& bv = g.value(bias);
  const Shape xs = xv.shape();
  const Shape ws = wv.shape();
  if (xs.c != 1 || ws.n != 1 || ws.c != 1 || ws.w != xs.w ||
      bv.shape() != Shape{1, 1, 1, ws.h}) {
    throw ShapeError("linear: input " + xs.str() + " incompatible with weight " +
                     ws.str() + " and bias " + bv.shape().str());
  }
  const int in = ws.w;
  const int out = ws.h;
  const int rows = xs.n * xs.h;
  Tensor y({xs.n, 1, xs.h, out});
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const double* xr = xv.data() + static_cast<std::size_t>(r) * in;
    double* yr = y.data() + static_cast<std::size_t>(r) * out;
    for (int o = 0; o < out; ++o) {
      const double* wr = wv.data() + static_cast<std::size_t>(o) * in;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (int i = 0; i < in; ++i) acc += wr[i] * xr[i];
      yr[o] = acc + bv[o];
    }
  }
  const int xi = x.id;
  const int wi = weight.id;
  const int bi = bias.id;
  return g.record(std::move(y), {xi, wi, bi},
                  [xi, wi, bi, in, out, rows](Graph& g, int self) {
    const Tensor& gy = g.grad(self);
    if (g.requires_grad(xi)) {
      const Tensor& wv = g.value(wi);
      Tensor& gx = g.grad_buffer(xi);
#pragma omp parallel for schedule(static)
      for (int r = 0; r < rows; ++r) {
        double* gxr = gx.data() + static_cast<std::size_t>(r) * in;
        const double* gyr = gy.data() + static_cast<std::size_t>(r) * out;
        for (int o = 0; o < out; ++o) {
          const double go = gyr[o];
          const double* wr = wv.data() + static_cast<std::size_t>(o) * in;
#pragma omp simd
          for (int i = 0; i < in; ++i) gxr[i] += go * wr[i];
        }
      }
    }
    if (g.requires_grad(wi)) {
      const Tensor& xv = g.value(xi);
      Tensor& gw = g.grad_buffer(wi);
#pragma omp parallel for schedule(static)
      for (int o = 0; o < out; ++o) {
        double* gwr = gw.data() + static_cast<std::size_t>(o) * in;
        for (int r = 0; r < rows; ++r) {
          const double go = gy[static_cast<std::size_t>(r) * out + o];
          const double* xr = xv.data() + static_cast<std::size_t>(r) * in;
#pragma omp simd
          for (int i = 0; i < in; ++i) gwr[i] += go * xr[i];
        }
      }
    }
    if (g.requires_grad(bi)) {
      Tensor& gb = g.grad_buffer(bi);
      for (int r = 0; r < rows; ++r)
        for (int o = 0; o < out; ++o) gb[o] += gy[static_cast<std::size_t>(r) * out + o];
    }
  });
}

Var mean_time(Var x) {
  Graph& g = graph_of(x);
  const Tensor& xv = g.value(x);
  const Shape s = xv.shape();
  Tensor y({s.n, s.c, 1, s.w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int f = 0; f < s.w; ++f) {
        double acc = 0.0;
        for (int t = 0; t < s.h; ++t) acc += xv.at(n, c, t, f);
        y.at(n, c, 0, f) = acc / s.h;
      }
  const int xi = x.id;
  return g.record(std::move(y), {xi}, [xi](Graph& g, int self) {
    const Tensor& gy = g.grad(self);
    Tensor& gx = g.grad_buffer(xi);
    const Shape s = gx.shape();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int f = 0; f < s.w; ++f) {
          const double v = gy.at(n, c, 0, f) / s.h;
          for (int t = 0; t < s.h; ++t) gx.at(n, c, t, f) += v;
        }
  });
}

namespace {

void softmax_row(const double* x, double* y, int k) {
  double mx = x[0];
  for (int i = 1; i < k; ++i) mx = std::max(mx, x[i]);
  double z = 0.0;
  for (int i = 0; i < k; ++i) {
    y[i] = std::exp(x[i] - mx);
    z += y[i];
  }
  for (int i = 0; i < k; ++i) y[i] /= z;
}

}  // namespace

Var softmax(Var x) {
  Graph& g = graph_of(x);
  const Tensor& xv = g.value(x);
  const int k = xv.shape().w;
  if (k < 1) throw ShapeError("softmax: empty last dimension");
  Tensor y(xv.shape());
  const std::size_t rows = xv.size() / k;
  for (std::size_t r = 0; r < rows; ++r) {
    softmax_row(xv.data() + r * k, y.data() + r * k, k);
  }
  const int xi = x.id;
  return g.record(std::move(y), {xi}, [xi, k, rows](Graph& g, int self) {
    const Tensor& gy = g.grad(self);
    const Tensor& yv = g.value(self);
    Tensor& gx = g.grad_buffer(xi);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = r * k;
      double dot = 0.0;
      for (int i = 0; i < k; ++i) dot += gy[base + i] * yv[base + i];
      for (int i = 0; i < k; ++i) {
        gx[base + i] += yv[base + i] * (gy[base + i] - dot);
      }
    }
  });
}

Var cross_entropy_loss(Var logits, std::span<const int> labels) {
  Graph& g = graph_of(logits);
  const Tensor& lv = g.value(logits);
  const Shape s = lv.shape();
  if (s.c != 1 || s.h != 1 || static_cast<std::size_t>(s.n) != labels.size()) {
    throw ShapeError("cross_entropy_loss: logits " + s.str() + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const int k = s.w;
  std::vector<double> probs(lv.size());
  double loss = 0.0;
  for (int n = 0; n < s.n; ++n) {
    if (labels[n] < 0 || labels[n] >= k) {
      throw std::invalid_argument("cross_entropy_loss: label " +
                                  std::to_string(labels[n]) + " out of range");
    }
    softmax_row(lv.data() + n * k, probs.data() + n * k, k);
    const double* row = lv.data() + n * k;
    double mx = row[0];
    for (int i = 1; i < k; ++i) mx = std::max(mx, row[i]);
    double z = 0.0;
    for (int i = 0; i < k; ++i) z += std::exp(row[i] - mx);
    loss += -(row[labels[n]] - mx - std::log(z));
  }
  loss /= s.n;
  std::vector<int> lab(labels.begin(), labels.end());
  const int li = logits.id;
  return g.record(Tensor({1, 1, 1, 1}, loss), {li},
                  [li, k, probs = std::move(probs), lab = std::move(lab)](
                      Graph& g, int self) {
                    const double gy = g.grad(self)[0];
                    Tensor& gl = g.grad_buffer(li);
                    const int n_rows = static_cast<int>(lab.size());
                    for (int n = 0; n < n_rows; ++n) {
                      for (int i = 0; i < k; ++i) {
                        const double target = i == lab[n] ? 1.0 : 0.0;
                        gl[n * k + i] += gy * (probs[n * k + i] - target) / n_rows;
                      }
                    }
                  });
}

Var mix(std::span<const Var> xs, Var weights, int row) {
  Graph& g = graph_of(weights);
  const Tensor& wv = g.value(weights);
  const int k = wv.shape().w;
  if (static_cast<int>(xs.size()) != k) {
    throw std::invalid_argument("mix: " + std::to_string(xs.size()) +
                                " candidates but " + std::to_string(k) +
                                " weights per row");
  }
  if (row < 0 || row >= wv.shape().h) {
    throw std::invalid_argument("mix: weight row out of range");
  }
  const Tensor* first = nullptr;
  std::vector<int> inputs{weights.id};
  std::vector<int> cand(k, -1);
  for (int j = 0; j < k; ++j) {
    if (!xs[j].valid()) continue;
    require_same_graph(weights, xs[j]);
    const Tensor& v = g.value(xs[j]);
    if (first) require_same_shape(*first, v, "mix");
    first = &v;
    cand[j] = xs[j].id;
    inputs.push_back(xs[j].id);
  }
  if (!first) throw std::invalid_argument("mix: every candidate is absent");
  const double* wrow = wv.data() + static_cast<std::size_t>(row) * k;
  Tensor y(first->shape());
  for (int j = 0; j < k; ++j) {
    if (cand[j] < 0) continue;
    const Tensor& v = g.value(cand[j]);
    const double wj = wrow[j];
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += wj * v[i];
  }
  const int wi = weights.id;
  return g.record(std::move(y), std::move(inputs),
                  [wi, row, k, cand = std::move(cand)](Graph& g, int self) {
    const Tensor& gy = g.grad(self);
    const double* wrow = g.value(wi).data() + static_cast<std::size_t>(row) * k;
    const bool want_w = g.requires_grad(wi);
    for (int j = 0; j < k; ++j) {
      if (cand[j] < 0) continue;
      const Tensor& v = g.value(cand[j]);
      if (want_w) {
        double dot = 0.0;
        for (std::size_t i = 0; i < gy.size(); ++i) dot += gy[i] * v[i];
        g.grad_buffer(wi)[static_cast<std::size_t>(row) * k + j] += dot;
      }
      if (g.requires_grad(cand[j])) {
        Tensor& gx = g.grad_buffer(cand[j]);
        const double wj = wrow[j];
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += wj * gy[i];
      }
    }
  });
}

}  // namespace asrnas::ad
