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

#include "asrnas/opspace.hpp"

#include <array>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace asrnas {
namespace {

constexpr std::array<std::string_view, 9> kOpNames = {
    "zero",         "skip_connect", "max_pool_3x3",
    "avg_pool_3x3", "sep_conv_3x3", "sep_conv_5x5",
    "dil_conv_3x3", "dil_conv_5x5", "conv_1x7_7x1"};

int out_dim(int in, int kernel, int stride, int pad, int dilation) {
  return (in + 2 * pad - dilation * (kernel - 1) - 1) / stride + 1;
}

void check_stride(int stride) {
  if (stride != 1 && stride != 2) {
    throw std::invalid_argument("unsupported stride " + std::to_string(stride) +
                                " (expected 1 or 2)");
  }
}

class ReluLayer final : public Module {
 public:
  ad::Var forward(ad::Graph&, ad::Var x, const ForwardOptions&) override {
    return ad::relu(x);
  }
  void collect_parameters(std::vector<ad::Parameter*>&) override {}
};

class ConvLayer final : public Module {
 public:
  ConvLayer(int c_in, int c_out, int kh, int kw, kernels::ConvSpec spec,
            ad::Rng& rng)
      : weight_({c_out, c_in / spec.groups, kh, kw}, "conv"), spec_(spec) {
    const int fan_in = (c_in / spec.groups) * kh * kw;
    const double std = std::sqrt(2.0 / fan_in);
    for (double& v : weight_.value.values()) v = std * ad::normal01(rng);
  }
  ad::Var forward(ad::Graph& g, ad::Var x, const ForwardOptions&) override {
    return ad::conv2d(x, g.parameter(weight_), spec_);
  }
  void collect_parameters(std::vector<ad::Parameter*>& out) override {
    out.push_back(&weight_);
  }

 private:
  ad::Parameter weight_;
  kernels::ConvSpec spec_;
};

class BatchNormLayer final : public Module {
 public:
  BatchNormLayer(int channels, bool affine) : affine_(affine) {
    if (affine_) {
      gamma_ = ad::Parameter({1, channels, 1, 1}, "bn.gamma");
      beta_ = ad::Parameter({1, channels, 1, 1}, "bn.beta");
      gamma_.value.fill(1.0);
    }
  }
  ad::Var forward(ad::Graph& g, ad::Var x, const ForwardOptions& opts) override {
    if (!affine_) return ad::batch_norm(x, {}, {}, 1e-5, opts.norm_stats);
    return ad::batch_norm(x, g.parameter(gamma_), g.parameter(beta_), 1e-5,
                          opts.norm_stats);
  }
  void collect_parameters(std::vector<ad::Parameter*>& out) override {
    if (!affine_) return;
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }

 private:
  bool affine_;
  ad::Parameter gamma_;
  ad::Parameter beta_;
};

class PoolLayer final : public Module {
 public:
  PoolLayer(bool is_max, int stride) : is_max_(is_max), stride_(stride) {}
  ad::Var forward(ad::Graph&, ad::Var x, const ForwardOptions&) override {
    return is_max_ ? ad::max_pool3x3(x, stride_) : ad::avg_pool3x3(x, stride_);
  }
  void collect_parameters(std::vector<ad::Parameter*>&) override {}

 private:
  bool is_max_;
  int stride_;
};

class IdentityLayer final : public Module {
 public:
  ad::Var forward(ad::Graph&, ad::Var x, const ForwardOptions&) override {
    return x;
  }
  void collect_parameters(std::vector<ad::Parameter*>&) override {}
};

class ZeroLayer final : public Module {
 public:
  explicit ZeroLayer(int stride) : stride_(stride) {}
  ad::Var forward(ad::Graph& g, ad::Var x, const ForwardOptions&) override {
    Shape s = x.shape();
    s.h = (s.h - 1) / stride_ + 1;
    s.w = (s.w - 1) / stride_ + 1;
    return ad::zeros(g, s);
  }
  void collect_parameters(std::vector<ad::Parameter*>&) override {}

 private:
  int stride_;
};

class Sequential final : public Module {
 public:
  void add(ModulePtr m) { layers_.push_back(std::move(m)); }
  ad::Var forward(ad::Graph& g, ad::Var x, const ForwardOptions& opts) override {
    for (auto& layer : layers_) x = layer->forward(g, x, opts);
    return x;
  }
  void collect_parameters(std::vector<ad::Parameter*>& out) override {
    for (auto& layer : layers_) layer->collect_parameters(out);
  }

 private:
  std::vector<ModulePtr> layers_;
};

// ReLU, then two stride-2 1x1 convolutions on x and on x shifted by one
// pixel, concatenated along channels, then BN.
class FactorizedReduce final : public Module {
 public:
  FactorizedReduce(int c_in, int c_out, bool affine, ad::Rng& rng)
      : bn_(c_out, affine) {
    if (c_out % 2 != 0) {
      throw std::invalid_argument("factorized reduce needs an even channel count, got " +
                                  std::to_string(c_out));
    }
    kernels::ConvSpec spec;
    spec.stride_h = spec.stride_w = 2;
    conv_a_ = std::make_unique<ConvLayer>(c_in, c_out / 2, 1, 1, spec, rng);
    conv_b_ = std::make_unique<ConvLayer>(c_in, c_out / 2, 1, 1, spec, rng);
  }
  ad::Var forward(ad::Graph& g, ad::Var x, const ForwardOptions& opts) override {
    const Shape s = x.shape();
    if (s.h % 2 != 0 || s.w % 2 != 0) {
      throw ShapeError("factorized reduce: spatial size (" + std::to_string(s.h) +
                       "," + std::to_string(s.w) +
                       ") is not aligned to a multiple of 2");
    }
    x = ad::relu(x);
    const ad::Var a = conv_a_->forward(g, x, opts);
    const ad::Var b = conv_b_->forward(g, ad::crop(x, 1, 1), opts);
    const ad::Var parts[] = {a, b};
    return bn_.forward(g, ad::concat_channels(parts), opts);
  }
  void collect_parameters(std::vector<ad::Parameter*>& out) override {
    conv_a_->collect_parameters(out);
    conv_b_->collect_parameters(out);
    bn_.collect_parameters(out);
  }

 private:
  std::unique_ptr<ConvLayer> conv_a_;
  std::unique_ptr<ConvLayer> conv_b_;
  BatchNormLayer bn_;
};

kernels::ConvSpec square_spec(int stride, int pad, int dilation, int groups) {
  kernels::ConvSpec s;
  s.stride_h = s.stride_w = stride;
  s.pad_h = s.pad_w = pad;
  s.dil_h = s.dil_w = dilation;
  s.groups = groups;
  return s;
}

// ReLU -> depthwise k x k -> pointwise 1x1 -> BN
void add_separable_pass(Sequential& seq, int c, int k, int stride, int dilation,
                        bool affine, ad::Rng& rng) {
  const int pad = dilation * (k - 1) / 2;
  seq.add(std::make_unique<ReluLayer>());
  seq.add(std::make_unique<ConvLayer>(c, c, k, k,
                                      square_spec(stride, pad, dilation, c), rng));
  seq.add(std::make_unique<ConvLayer>(c, c, 1, 1, square_spec(1, 0, 1, 1), rng));
  seq.add(std::make_unique<BatchNormLayer>(c, affine));
}

CostReport separable_pass_cost(int c, int k, int h, int w, int stride,
                               int dilation, bool affine, int& oh, int& ow) {
  const int pad = dilation * (k - 1) / 2;
  oh = out_dim(h, k, stride, pad, dilation);
  ow = out_dim(w, k, stride, pad, dilation);
  const std::int64_t pos = static_cast<std::int64_t>(oh) * ow;
  CostReport r;
  r.params = static_cast<std::int64_t>(k) * k * c + static_cast<std::int64_t>(c) * c +
             (affine ? 2 * c : 0);
  r.macs = pos * c * k * k + pos * c * c;
  r.seq_depth = 4;
  r.activations = 4;
  return r;
}

}  // namespace

std::string_view op_name(OpKind kind) {
  return kOpNames.at(static_cast<std::size_t>(kind));
}

std::optional<OpKind> parse_op(std::string_view name) {
  for (std::size_t i = 0; i < kOpNames.size(); ++i) {
    if (kOpNames[i] == name) return static_cast<OpKind>(i);
  }
  return std::nullopt;
}

std::string_view variant_name(SpaceVariant v) {
  return v == SpaceVariant::original ? "original" : "revised";
}

std::optional<SpaceVariant> parse_variant(std::string_view name) {
  if (name == "original") return SpaceVariant::original;
  if (name == "revised") return SpaceVariant::revised;
  return std::nullopt;
}

std::string_view cell_type_name(CellType t) {
  return t == CellType::normal ? "normal" : "reduction";
}

const std::vector<OpKind>& canonical_ops(SpaceVariant v) {
  static const std::vector<OpKind> original = {
      OpKind::zero,         OpKind::skip_connect, OpKind::max_pool_3x3,
      OpKind::avg_pool_3x3, OpKind::sep_conv_3x3, OpKind::sep_conv_5x5,
      OpKind::dil_conv_3x3, OpKind::dil_conv_5x5};
  static const std::vector<OpKind> revised = {
      OpKind::zero,         OpKind::max_pool_3x3, OpKind::avg_pool_3x3,
      OpKind::sep_conv_3x3, OpKind::sep_conv_5x5, OpKind::dil_conv_3x3,
      OpKind::dil_conv_5x5, OpKind::conv_1x7_7x1};
  return v == SpaceVariant::original ? original : revised;
}

OperationSpace::OperationSpace(SpaceVariant variant,
                               std::vector<std::vector<OpKind>> normal,
                               std::vector<std::vector<OpKind>> reduction)
    : variant_(variant), normal_(std::move(normal)), reduction_(std::move(reduction)) {
  if (normal_.size() != reduction_.size()) {
    throw std::invalid_argument("operation space: cell types disagree on edge count");
  }
  for (const auto* table : {&normal_, &reduction_}) {
    for (const auto& cands : *table) {
      if (cands.empty()) {
        throw std::invalid_argument("operation space: empty candidate list");
      }
    }
  }
}

const std::vector<OpKind>& OperationSpace::candidates(CellType type,
                                                      int edge) const {
  return (type == CellType::normal ? normal_ : reduction_).at(edge);
}

int OperationSpace::uniform_size() const {
  if (normal_.empty()) return -1;
  const std::size_t k = normal_[0].size();
  for (const auto* table : {&normal_, &reduction_}) {
    for (const auto& cands : *table) {
      if (cands.size() != k) return -1;
    }
  }
  return static_cast<int>(k);
}

OperationSpace build_space(SpaceVariant variant, int n_edges) {
  std::vector<std::vector<OpKind>> table(n_edges, canonical_ops(variant));
  return OperationSpace(variant, table, table);
}

std::size_t Module::parameter_count() {
  std::vector<ad::Parameter*> params;
  collect_parameters(params);
  std::size_t total = 0;
  for (const ad::Parameter* p : params) total += p->numel();
  return total;
}

ModulePtr make_relu_conv_bn(int c_in, int c_out, int kernel, int stride,
                            int padding, bool affine, ad::Rng& rng) {
  auto seq = std::make_unique<Sequential>();
  seq->add(std::make_unique<ReluLayer>());
  seq->add(std::make_unique<ConvLayer>(c_in, c_out, kernel, kernel,
                                       square_spec(stride, padding, 1, 1), rng));
  seq->add(std::make_unique<BatchNormLayer>(c_out, affine));
  return seq;
}

ModulePtr make_factorized_reduce(int c_in, int c_out, bool affine,
                                 ad::Rng& rng) {
  return std::make_unique<FactorizedReduce>(c_in, c_out, affine, rng);
}

ModulePtr instantiate(OpKind kind, int channels, int stride, bool affine,
                      ad::Rng& rng) {
  check_stride(stride);
  if (channels < 1) throw std::invalid_argument("channels must be >= 1");
  const int c = channels;
  switch (kind) {
    case OpKind::zero:
      return std::make_unique<ZeroLayer>(stride);
    case OpKind::skip_connect:
      if (stride == 1) return std::make_unique<IdentityLayer>();
      return make_factorized_reduce(c, c, affine, rng);
    case OpKind::max_pool_3x3:
      return std::make_unique<PoolLayer>(true, stride);
    case OpKind::avg_pool_3x3:
      return std::make_unique<PoolLayer>(false, stride);
    case OpKind::sep_conv_3x3:
    case OpKind::sep_conv_5x5: {
      const int k = kind == OpKind::sep_conv_3x3 ? 3 : 5;
      auto seq = std::make_unique<Sequential>();
      add_separable_pass(*seq, c, k, stride, 1, affine, rng);
      add_separable_pass(*seq, c, k, 1, 1, affine, rng);
      return seq;
    }
    case OpKind::dil_conv_3x3:
    case OpKind::dil_conv_5x5: {
      const int k = kind == OpKind::dil_conv_3x3 ? 3 : 5;
      auto seq = std::make_unique<Sequential>();
      add_separable_pass(*seq, c, k, stride, 2, affine, rng);
      return seq;
    }
    case OpKind::conv_1x7_7x1: {
      // The stride halves time in the 1x7 stage and freq in the 7x1 stage.
      kernels::ConvSpec row;
      row.stride_h = stride;
      row.pad_w = 3;
      kernels::ConvSpec col;
      col.stride_w = stride;
      col.pad_h = 3;
      auto seq = std::make_unique<Sequential>();
      seq->add(std::make_unique<ReluLayer>());
      seq->add(std::make_unique<ConvLayer>(c, c, 1, 7, row, rng));
      seq->add(std::make_unique<ConvLayer>(c, c, 7, 1, col, rng));
      seq->add(std::make_unique<BatchNormLayer>(c, affine));
      return seq;
    }
  }
  throw std::invalid_argument("unknown operation kind");
}

CostReport& CostReport::operator+=(const CostReport& o) {
  params += o.params;
  macs += o.macs;
  seq_depth += o.seq_depth;
  activations += o.activations;
  return *this;
}

CostReport relu_conv_bn_cost(int c_in, int c_out, int kernel, int h, int w,
                             int stride, int padding, bool affine) {
  const std::int64_t oh = out_dim(h, kernel, stride, padding, 1);
  const std::int64_t ow = out_dim(w, kernel, stride, padding, 1);
  CostReport r;
  r.params = static_cast<std::int64_t>(c_out) * c_in * kernel * kernel +
             (affine ? 2 * c_out : 0);
  r.macs = oh * ow * c_out * c_in * kernel * kernel;
  r.seq_depth = 3;
  r.activations = 3;
  return r;
}

CostReport factorized_reduce_cost(int c_in, int c_out, int h, int w,
                                  bool affine) {
  const std::int64_t half = c_out / 2;
  // Path b sees the input cropped by one row and column.
  const std::int64_t pos_a =
      static_cast<std::int64_t>(out_dim(h, 1, 2, 0, 1)) * out_dim(w, 1, 2, 0, 1);
  const std::int64_t pos_b = static_cast<std::int64_t>(out_dim(h - 1, 1, 2, 0, 1)) *
                             out_dim(w - 1, 1, 2, 0, 1);
  CostReport r;
  r.params = 2 * half * c_in + (affine ? 2 * c_out : 0);
  r.macs = (pos_a + pos_b) * half * c_in;
  r.seq_depth = 5;    // relu, crop, conv, concat, bn
  r.activations = 6;  // relu, crop, two convs, concat, bn
  return r;
}

CostReport op_cost(OpKind kind, int channels, int h, int w, int stride,
                   bool affine) {
  check_stride(stride);
  const int c = channels;
  CostReport r;
  switch (kind) {
    case OpKind::zero:
      return r;
    case OpKind::skip_connect:
      if (stride == 1) return r;
      return factorized_reduce_cost(c, c, h, w, affine);
    case OpKind::max_pool_3x3:
    case OpKind::avg_pool_3x3:
      r.seq_depth = 1;
      r.activations = 1;
      return r;
    case OpKind::sep_conv_3x3:
    case OpKind::sep_conv_5x5: {
      const int k = kind == OpKind::sep_conv_3x3 ? 3 : 5;
      int oh = 0;
      int ow = 0;
      r += separable_pass_cost(c, k, h, w, stride, 1, affine, oh, ow);
      r += separable_pass_cost(c, k, oh, ow, 1, 1, affine, oh, ow);
      return r;
    }
    case OpKind::dil_conv_3x3:
    case OpKind::dil_conv_5x5: {
      const int k = kind == OpKind::dil_conv_3x3 ? 3 : 5;
      int oh = 0;
      int ow = 0;
      return separable_pass_cost(c, k, h, w, stride, 2, affine, oh, ow);
    }
    case OpKind::conv_1x7_7x1: {
      const std::int64_t oh = (h - 1) / stride + 1;
      const std::int64_t ow = (w - 1) / stride + 1;
      const std::int64_t cc = static_cast<std::int64_t>(c) * c;
      r.params = 14 * cc + (affine ? 2 * c : 0);
      r.macs = oh * w * cc * 7 + oh * ow * cc * 7;
      r.seq_depth = 4;
      r.activations = 4;
      return r;
    }
  }
  throw std::invalid_argument("unknown operation kind");
}

void write_cost_csv(std::ostream& os, const std::vector<CostRow>& rows) {
  os << "kind,channels,stride,params,macs,seq_depth,activations\n";
  for (const CostRow& row : rows) {
    os << op_name(row.kind) << ',' << row.channels << ',' << row.stride << ','
       << row.cost.params << ',' << row.cost.macs << ',' << row.cost.seq_depth
       << ',' << row.cost.activations << '\n';
  }
}

}  // namespace asrnas
