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

#include "asrnas/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <type_traits>

namespace asrnas::kernels {
namespace {

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
int ceil_div(int a, int b) { return -floor_div(-a, b); }

// Output columns [lo, hi) whose input column ow*stride + offset lies in
// [0, width).
struct ColumnRange {
  int lo;
  int hi;
};

ColumnRange valid_columns(int offset, int stride, int width, int out_width) {
  int lo = std::min(out_width, std::max(0, ceil_div(-offset, stride)));
  int hi = std::min(out_width, floor_div(width - 1 - offset, stride) + 1);
  return {lo, std::max(lo, hi)};
}

}  // namespace

Shape conv2d_output_shape(const Shape& in, const Shape& wt,
                          const ConvSpec& s) {
  if (s.groups < 1 || s.stride_h < 1 || s.stride_w < 1 || s.dil_h < 1 ||
      s.dil_w < 1 || s.pad_h < 0 || s.pad_w < 0) {
    throw ShapeError("conv2d: stride, dilation and groups must be >= 1");
  }
  if (in.c % s.groups != 0 || wt.n % s.groups != 0) {
    throw ShapeError("conv2d: channels " + std::to_string(in.c) + " -> " +
                     std::to_string(wt.n) + " not divisible by groups " +
                     std::to_string(s.groups));
  }
  if (wt.c != in.c / s.groups) {
    throw ShapeError("conv2d: input " + in.str() + " has " +
                     std::to_string(in.c) + " channels but weight " +
                     wt.str() + " expects " +
                     std::to_string(wt.c * s.groups));
  }
  int oh = (in.h + 2 * s.pad_h - s.dil_h * (wt.h - 1) - 1) / s.stride_h + 1;
  int ow = (in.w + 2 * s.pad_w - s.dil_w * (wt.w - 1) - 1) / s.stride_w + 1;
  if (in.h + 2 * s.pad_h - s.dil_h * (wt.h - 1) - 1 < 0 ||
      in.w + 2 * s.pad_w - s.dil_w * (wt.w - 1) - 1 < 0) {
    throw ShapeError("conv2d: kernel " + wt.str() + " larger than padded input " +
                     in.str());
  }
  return {in.n, wt.n, oh, ow};
}

namespace {

// Channels handled together by one task of the convolution loops; each input
// row is read once per block instead of once per channel.
constexpr int kBlock = 4;

// True when every tap of a row-major plane maps to one contiguous run, so the
// loop over rows collapses into a single pass.
bool contiguous_taps(const Shape& wt, const ConvSpec& s) {
  return wt.w == 1 && s.pad_w == 0 && s.stride_w == 1 && s.stride_h == 1;
}

// y_k[i] += w_k * x[i * stride] for k < NB, i in [lo, hi).
template <int NB>
void axpy_rows(double* const* y, const double* w, const double* x, int lo, int hi,
               int stride) {
  if (stride == 1) {
#pragma omp simd
    for (int i = lo; i < hi; ++i) {
      const double xv = x[i];
      for (int k = 0; k < NB; ++k) y[k][i] += w[k] * xv;
    }
  } else {
    for (int i = lo; i < hi; ++i) {
      const double xv = x[i * stride];
      for (int k = 0; k < NB; ++k) y[k][i] += w[k] * xv;
    }
  }
}

// y[i * stride] += w_k * x_k[i] summed over k < NB.
template <int NB>
void scatter_rows(double* y, const double* w, const double* const* x, int lo, int hi,
                  int stride) {
  if (stride == 1) {
#pragma omp simd
    for (int i = lo; i < hi; ++i) {
      double acc = 0.0;
      for (int k = 0; k < NB; ++k) acc += w[k] * x[k][i];
      y[i] += acc;
    }
  } else {
    for (int i = lo; i < hi; ++i) {
      double acc = 0.0;
      for (int k = 0; k < NB; ++k) acc += w[k] * x[k][i];
      y[i * stride] += acc;
    }
  }
}

// acc_k += sum_i g[i] * x_k[i * stride].
template <int NB>
void dot_rows(double* acc, const double* g, const double* const* x, int lo, int hi,
              int stride) {
  for (int k = 0; k < NB; ++k) {
    double a = 0.0;
    const double* xk = x[k];
    if (stride == 1) {
#pragma omp simd reduction(+ : a)
      for (int i = lo; i < hi; ++i) a += g[i] * xk[i];
    } else {
      for (int i = lo; i < hi; ++i) a += g[i] * xk[i * stride];
    }
    acc[k] += a;
  }
}

template <typename F>
void dispatch_block(int nb, F&& f) {
  switch (nb) {
    case 4: f(std::integral_constant<int, 4>{}); break;
    case 3: f(std::integral_constant<int, 3>{}); break;
    case 2: f(std::integral_constant<int, 2>{}); break;
    default: f(std::integral_constant<int, 1>{}); break;
  }
}

struct RowRange {
  int lo;
  int hi;
};

// Output rows whose input row oh*stride - pad + kh*dil lies in [0, height).
RowRange valid_rows(int kh, const ConvSpec& s, int height, int out_h) {
  const ColumnRange r = valid_columns(kh * s.dil_h - s.pad_h, s.stride_h, height, out_h);
  return {r.lo, r.hi};
}

// Direct loops, used for grouped convolutions with few channels per group.

void direct_forward(const Tensor& x, const Tensor& weight, const ConvSpec& s,
                    Tensor& y) {
  const Shape in = x.shape();
  const Shape wt = weight.shape();
  const Shape out = y.shape();
  const int cig = in.c / s.groups;
  const int cog = wt.n / s.groups;
  const int taps = wt.h * wt.w;
  const int blocks_per_group = (cog + kBlock - 1) / kBlock;
  const int blocks = s.groups * blocks_per_group;
  const bool flat = contiguous_taps(wt, s);

#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < out.n; ++n) {
    for (int b = 0; b < blocks; ++b) {
      const int g = b / blocks_per_group;
      const int oc0 = g * cog + (b % blocks_per_group) * kBlock;
      const int nb = std::min(kBlock, (g + 1) * cog - oc0);
      double* yp[kBlock];
      for (int k = 0; k < nb; ++k) {
        yp[k] = y.data() + (static_cast<std::size_t>(n) * out.c + oc0 + k) * out.plane();
      }
      dispatch_block(nb, [&](auto nbc) {
        constexpr int NB = decltype(nbc)::value;
        double wv[kBlock];
        double* rows[kBlock];
        for (int icg = 0; icg < cig; ++icg) {
          const double* xp =
              x.data() + (static_cast<std::size_t>(n) * in.c + g * cig + icg) * in.plane();
          for (int kh = 0; kh < wt.h; ++kh) {
            const RowRange rr = valid_rows(kh, s, in.h, out.h);
            for (int kw = 0; kw < wt.w; ++kw) {
              for (int k = 0; k < NB; ++k) {
                wv[k] = weight[(static_cast<std::size_t>(oc0 + k) * cig + icg) * taps +
                               kh * wt.w + kw];
              }
              if (flat) {
                const int shift = (kh * s.dil_h - s.pad_h) * in.w;
                for (int k = 0; k < NB; ++k) rows[k] = yp[k];
                axpy_rows<NB>(rows, wv, xp + shift, rr.lo * out.w, rr.hi * out.w, 1);
                continue;
              }
              const int off = kw * s.dil_w - s.pad_w;
              const ColumnRange cols = valid_columns(off, s.stride_w, in.w, out.w);
              for (int oh = rr.lo; oh < rr.hi; ++oh) {
                const int ih = oh * s.stride_h - s.pad_h + kh * s.dil_h;
                for (int k = 0; k < NB; ++k) rows[k] = yp[k] + static_cast<std::size_t>(oh) * out.w;
                axpy_rows<NB>(rows, wv, xp + static_cast<std::size_t>(ih) * in.w + off,
                              cols.lo, cols.hi, s.stride_w);
              }
            }
          }
        }
      });
    }
  }
}

void direct_backward_input(const Tensor& grad_y, const Tensor& weight,
                           const ConvSpec& s, Tensor& grad_x) {
  const Shape in = grad_x.shape();
  const Shape wt = weight.shape();
  const Shape out = grad_y.shape();
  const int cig = in.c / s.groups;
  const int cog = wt.n / s.groups;
  const int taps = wt.h * wt.w;
  const bool flat = contiguous_taps(wt, s);

  // Each task owns one input channel and sums over output channels in blocks.
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < in.n; ++n) {
    for (int ic = 0; ic < in.c; ++ic) {
      const int g = ic / cig;
      const int icg = ic - g * cig;
      double* gxp = grad_x.data() + (static_cast<std::size_t>(n) * in.c + ic) * in.plane();
      for (int oc0 = g * cog; oc0 < (g + 1) * cog; oc0 += kBlock) {
        const int nb = std::min(kBlock, (g + 1) * cog - oc0);
        dispatch_block(nb, [&](auto nbc) {
          constexpr int NB = decltype(nbc)::value;
          double wv[kBlock];
          const double* rows[kBlock];
          const double* gyp[kBlock];
          for (int k = 0; k < NB; ++k) {
            gyp[k] = grad_y.data() +
                     (static_cast<std::size_t>(n) * out.c + oc0 + k) * out.plane();
          }
          for (int kh = 0; kh < wt.h; ++kh) {
            const RowRange rr = valid_rows(kh, s, in.h, out.h);
            for (int kw = 0; kw < wt.w; ++kw) {
              for (int k = 0; k < NB; ++k) {
                wv[k] = weight[(static_cast<std::size_t>(oc0 + k) * cig + icg) * taps +
                               kh * wt.w + kw];
              }
              if (flat) {
                const int shift = (kh * s.dil_h - s.pad_h) * in.w;
                for (int k = 0; k < NB; ++k) rows[k] = gyp[k];
                scatter_rows<NB>(gxp + shift, wv, rows, rr.lo * out.w, rr.hi * out.w, 1);
                continue;
              }
              const int off = kw * s.dil_w - s.pad_w;
              const ColumnRange cols = valid_columns(off, s.stride_w, in.w, out.w);
              for (int oh = rr.lo; oh < rr.hi; ++oh) {
                const int ih = oh * s.stride_h - s.pad_h + kh * s.dil_h;
                for (int k = 0; k < NB; ++k) rows[k] = gyp[k] + static_cast<std::size_t>(oh) * out.w;
                scatter_rows<NB>(gxp + static_cast<std::size_t>(ih) * in.w + off, wv, rows,
                                 cols.lo, cols.hi, s.stride_w);
              }
            }
          }
        });
      }
    }
  }
}

void direct_backward_weight(const Tensor& grad_y, const Tensor& x,
                            const ConvSpec& s, Tensor& grad_w) {
  const Shape in = x.shape();
  const Shape wt = grad_w.shape();
  const Shape out = grad_y.shape();
  const int cig = in.c / s.groups;
  const int cog = wt.n / s.groups;
  const int taps = wt.h * wt.w;
  const int blocks_per_oc = (cig + kBlock - 1) / kBlock;
  const bool flat = contiguous_taps(wt, s);

#pragma omp parallel for collapse(2) schedule(static)
  for (int oc = 0; oc < wt.n; ++oc) {
    for (int b = 0; b < blocks_per_oc; ++b) {
      const int icg0 = b * kBlock;
      const int nb = std::min(kBlock, cig - icg0);
      const int ic0 = (oc / cog) * cig + icg0;
      dispatch_block(nb, [&](auto nbc) {
        constexpr int NB = decltype(nbc)::value;
        const double* rows[kBlock];
        for (int kh = 0; kh < wt.h; ++kh) {
          const RowRange rr = valid_rows(kh, s, in.h, out.h);
          for (int kw = 0; kw < wt.w; ++kw) {
            double acc[kBlock] = {0.0, 0.0, 0.0, 0.0};
            const int off = kw * s.dil_w - s.pad_w;
            const ColumnRange cols = valid_columns(off, s.stride_w, in.w, out.w);
            for (int n = 0; n < in.n; ++n) {
              const double* gyp =
                  grad_y.data() + (static_cast<std::size_t>(n) * out.c + oc) * out.plane();
              const double* xp =
                  x.data() + (static_cast<std::size_t>(n) * in.c + ic0) * in.plane();
              if (flat) {
                const int shift = (kh * s.dil_h - s.pad_h) * in.w;
                for (int k = 0; k < NB; ++k) rows[k] = xp + k * in.plane() + shift;
                dot_rows<NB>(acc, gyp, rows, rr.lo * out.w, rr.hi * out.w, 1);
                continue;
              }
              for (int oh = rr.lo; oh < rr.hi; ++oh) {
                const int ih = oh * s.stride_h - s.pad_h + kh * s.dil_h;
                for (int k = 0; k < NB; ++k) {
                  rows[k] = xp + k * in.plane() + static_cast<std::size_t>(ih) * in.w + off;
                }
                dot_rows<NB>(acc, gyp + static_cast<std::size_t>(oh) * out.w, rows, cols.lo,
                             cols.hi, s.stride_w);
              }
            }
            for (int k = 0; k < NB; ++k) {
              grad_w[(static_cast<std::size_t>(oc) * cig + icg0 + k) * taps + kh * wt.w + kw] +=
                  acc[k];
            }
          }
        }
      });
    }
  }
}

// Column matrix of one (sample, group): row (icg, kh, kw), column (oh, ow).
void im2col(const double* x, const Shape& in, const Shape& wt, const ConvSpec& s,
            int oh_n, int ow_n, int cig, double* col) {
  const std::size_t cols = static_cast<std::size_t>(oh_n) * ow_n;
  for (int icg = 0; icg < cig; ++icg) {
    const double* xp = x + static_cast<std::size_t>(icg) * in.plane();
    for (int kh = 0; kh < wt.h; ++kh) {
      for (int kw = 0; kw < wt.w; ++kw) {
        double* row = col + ((static_cast<std::size_t>(icg) * wt.h + kh) * wt.w + kw) * cols;
        const int off = kw * s.dil_w - s.pad_w;
        const ColumnRange cr = valid_columns(off, s.stride_w, in.w, ow_n);
        for (int oh = 0; oh < oh_n; ++oh) {
          double* r = row + static_cast<std::size_t>(oh) * ow_n;
          const int ih = oh * s.stride_h - s.pad_h + kh * s.dil_h;
          if (ih < 0 || ih >= in.h) {
            std::fill(r, r + ow_n, 0.0);
            continue;
          }
          const double* xr = xp + static_cast<std::size_t>(ih) * in.w + off;
          std::fill(r, r + cr.lo, 0.0);
          for (int ow = cr.lo; ow < cr.hi; ++ow) r[ow] = xr[ow * s.stride_w];
          std::fill(r + cr.hi, r + ow_n, 0.0);
        }
      }
    }
  }
}

// Adds the column matrix back onto one input channel's plane. Rows of the
// channel are visited in (kh, kw) order.
void col2im_channel(const double* col, const Shape& in, const Shape& wt,
                    const ConvSpec& s, int oh_n, int ow_n, int icg, double* gx) {
  const std::size_t cols = static_cast<std::size_t>(oh_n) * ow_n;
  for (int kh = 0; kh < wt.h; ++kh) {
    for (int kw = 0; kw < wt.w; ++kw) {
      const double* row = col + ((static_cast<std::size_t>(icg) * wt.h + kh) * wt.w + kw) * cols;
      const int off = kw * s.dil_w - s.pad_w;
      const ColumnRange cr = valid_columns(off, s.stride_w, in.w, ow_n);
      for (int oh = 0; oh < oh_n; ++oh) {
        const int ih = oh * s.stride_h - s.pad_h + kh * s.dil_h;
        if (ih < 0 || ih >= in.h) continue;
        const double* r = row + static_cast<std::size_t>(oh) * ow_n;
        double* gr = gx + static_cast<std::size_t>(ih) * in.w + off;
        for (int ow = cr.lo; ow < cr.hi; ++ow) gr[ow * s.stride_w] += r[ow];
      }
    }
  }
}

// Copy of one plane surrounded by zero borders of the given widths.
void pad_plane(const double* src, int h, int w, int top, int bottom, int left, int right,
               std::vector<double>& dst) {
  const int pw = w + left + right;
  dst.assign(static_cast<std::size_t>(h + top + bottom) * pw, 0.0);
  for (int r = 0; r < h; ++r) {
    std::copy(src + static_cast<std::size_t>(r) * w, src + static_cast<std::size_t>(r + 1) * w,
              dst.data() + static_cast<std::size_t>(r + top) * pw + left);
  }
}

// Depthwise (one input and one output channel per group) at stride 1.
bool depthwise_unit_stride(const Shape& in, const Shape& wt, const ConvSpec& s) {
  return s.groups == in.c && wt.n == in.c && wt.c == 1 && s.stride_h == 1 && s.stride_w == 1;
}

void depthwise_forward(const Tensor& x, const Tensor& weight, const ConvSpec& s, Tensor& y) {
  const Shape in = x.shape();
  const Shape wt = weight.shape();
  const Shape out = y.shape();
  const int taps = wt.h * wt.w;
  const int pw = in.w + 2 * s.pad_w;
#pragma omp parallel
  {
    std::vector<double> xpad;
#pragma omp for collapse(2) schedule(static)
    for (int n = 0; n < in.n; ++n) {
      for (int c = 0; c < in.c; ++c) {
        const std::size_t plane = static_cast<std::size_t>(n) * in.c + c;
        pad_plane(x.data() + plane * in.plane(), in.h, in.w, s.pad_h, s.pad_h, s.pad_w, s.pad_w,
                  xpad);
        const double* wp = weight.data() + static_cast<std::size_t>(c) * taps;
        double* yp = y.data() + plane * out.plane();
        for (int oh = 0; oh < out.h; ++oh) {
          double* yr = yp + static_cast<std::size_t>(oh) * out.w;
          for (int kh = 0; kh < wt.h; ++kh) {
            const double* xr = xpad.data() + static_cast<std::size_t>(oh + kh * s.dil_h) * pw;
            for (int kw = 0; kw < wt.w; ++kw) {
              const double wv = wp[kh * wt.w + kw];
              const double* xs = xr + kw * s.dil_w;
#pragma omp simd
              for (int ow = 0; ow < out.w; ++ow) yr[ow] += wv * xs[ow];
            }
          }
        }
      }
    }
  }
}

// Full correlation of the gradient with the flipped kernel.
void depthwise_backward_input(const Tensor& grad_y, const Tensor& weight, const ConvSpec& s,
                              Tensor& grad_x) {
  const Shape in = grad_x.shape();
  const Shape wt = weight.shape();
  const Shape out = grad_y.shape();
  const int taps = wt.h * wt.w;
  const int ext_h = s.dil_h * (wt.h - 1);
  const int ext_w = s.dil_w * (wt.w - 1);
  // grad_y placed so that padded row ih + ext_h - kh*dil holds oh = ih + pad - kh*dil.
  const int top = ext_h - s.pad_h;
  const int left = ext_w - s.pad_w;
  const int bottom = in.h + ext_h - top - out.h;
  const int right = in.w + ext_w - left - out.w;
  const int pw = out.w + left + right;
#pragma omp parallel
  {
    std::vector<double> gpad;
#pragma omp for collapse(2) schedule(static)
    for (int n = 0; n < in.n; ++n) {
      for (int c = 0; c < in.c; ++c) {
        const std::size_t plane = static_cast<std::size_t>(n) * in.c + c;
        pad_plane(grad_y.data() + plane * out.plane(), out.h, out.w, top, bottom, left, right,
                  gpad);
        const double* wp = weight.data() + static_cast<std::size_t>(c) * taps;
        double* gp = grad_x.data() + plane * in.plane();
        for (int ih = 0; ih < in.h; ++ih) {
          double* gr = gp + static_cast<std::size_t>(ih) * in.w;
          for (int kh = 0; kh < wt.h; ++kh) {
            const double* yr =
                gpad.data() + static_cast<std::size_t>(ih + ext_h - kh * s.dil_h) * pw;
            for (int kw = 0; kw < wt.w; ++kw) {
              const double wv = wp[kh * wt.w + kw];
              const double* ys = yr + ext_w - kw * s.dil_w;
#pragma omp simd
              for (int iw = 0; iw < in.w; ++iw) gr[iw] += wv * ys[iw];
            }
          }
        }
      }
    }
  }
}

void depthwise_backward_weight(const Tensor& grad_y, const Tensor& x, const ConvSpec& s,
                               Tensor& grad_w) {
  const Shape in = x.shape();
  const Shape wt = grad_w.shape();
  const Shape out = grad_y.shape();
  const int taps = wt.h * wt.w;
  const int pw = in.w + 2 * s.pad_w;
#pragma omp parallel
  {
    std::vector<double> xpad;
    // Per-tap partial products, reduced once per channel.
    std::vector<double> part(static_cast<std::size_t>(taps) * out.w);
#pragma omp for schedule(static)
    for (int c = 0; c < in.c; ++c) {
      std::fill(part.begin(), part.end(), 0.0);
      for (int n = 0; n < in.n; ++n) {
        const std::size_t plane = static_cast<std::size_t>(n) * in.c + c;
        pad_plane(x.data() + plane * in.plane(), in.h, in.w, s.pad_h, s.pad_h, s.pad_w, s.pad_w,
                  xpad);
        const double* gp = grad_y.data() + plane * out.plane();
        for (int oh = 0; oh < out.h; ++oh) {
          const double* gr = gp + static_cast<std::size_t>(oh) * out.w;
          for (int kh = 0; kh < wt.h; ++kh) {
            const double* xr = xpad.data() + static_cast<std::size_t>(oh + kh * s.dil_h) * pw;
            for (int kw = 0; kw < wt.w; ++kw) {
              const double* xs = xr + kw * s.dil_w;
              double* pr = part.data() + static_cast<std::size_t>(kh * wt.w + kw) * out.w;
#pragma omp simd
              for (int ow = 0; ow < out.w; ++ow) pr[ow] += gr[ow] * xs[ow];
            }
          }
        }
      }
      std::vector<double> acc(taps, 0.0);
      for (int k = 0; k < taps; ++k) {
        const double* pr = part.data() + static_cast<std::size_t>(k) * out.w;
        for (int ow = 0; ow < out.w; ++ow) acc[k] += pr[ow];
      }
      for (int k = 0; k < taps; ++k) grad_w[static_cast<std::size_t>(c) * taps + k] += acc[k];
    }
  }
}

void transpose(const double* a, int rows, int cols, double* out) {
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      out[static_cast<std::size_t>(j) * rows + i] = a[static_cast<std::size_t>(i) * cols + j];
    }
  }
}

// Grouped convolutions with fewer output channels per group than this use
// the direct loops.
constexpr int kGemmMinChannels = 4;
// Output positions per parallel task of the GEMM paths.
constexpr int kColBlock = 64;

bool use_gemm(const Shape& wt, const ConvSpec& s) {
  return wt.n / s.groups >= kGemmMinChannels;
}

// 1x1 kernels at stride 1 without padding read the input planes as they are.
bool pointwise(const Shape& wt, const ConvSpec& s) {
  return wt.h == 1 && wt.w == 1 && s.stride_h == 1 && s.stride_w == 1 && s.pad_h == 0 &&
         s.pad_w == 0;
}

std::unique_ptr<double[]> scratch(std::size_t n) {
  return std::unique_ptr<double[]>(new double[n]);
}

}  // namespace

namespace {

constexpr int kGemmNR = 16;

// C[R x width] += A[R x k] * B[k x width], width <= kGemmNR.
template <int R>
void gemm_tile(int width, int k, const double* a, int lda, const double* b, int ldb,
               double* c, int ldc) {
  double acc[R][kGemmNR] = {};
  if (width == kGemmNR) {
    for (int p = 0; p < k; ++p) {
      const double* bp = b + static_cast<std::size_t>(p) * ldb;
      for (int r = 0; r < R; ++r) {
        const double av = a[static_cast<std::size_t>(r) * lda + p];
#pragma omp simd
        for (int q = 0; q < kGemmNR; ++q) acc[r][q] += av * bp[q];
      }
    }
  } else {
    for (int p = 0; p < k; ++p) {
      const double* bp = b + static_cast<std::size_t>(p) * ldb;
      for (int r = 0; r < R; ++r) {
        const double av = a[static_cast<std::size_t>(r) * lda + p];
        for (int q = 0; q < width; ++q) acc[r][q] += av * bp[q];
      }
    }
  }
  for (int r = 0; r < R; ++r) {
    double* cp = c + static_cast<std::size_t>(r) * ldc;
    for (int q = 0; q < width; ++q) cp[q] += acc[r][q];
  }
}

template <int R>
void gemm_rows(int n0, int n1, int k, const double* a, int lda, const double* b, int ldb,
               double* c, int ldc) {
  for (int j = n0; j < n1; j += kGemmNR) {
    gemm_tile<R>(std::min(kGemmNR, n1 - j), k, a, lda, b + j, ldb, c + j, ldc);
  }
}

}  // namespace

void gemm(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
          double* c, int ldc) {
  constexpr int MR = 8;
  // Column panels small enough for the B panel to stay in cache across rows.
  constexpr int NC = 64;
  for (int j0 = 0; j0 < n; j0 += NC) {
    const int j1 = std::min(n, j0 + NC);
    int i = 0;
    for (; i + MR <= m; i += MR) {
      gemm_rows<MR>(j0, j1, k, a + static_cast<std::size_t>(i) * lda, lda, b, ldb,
                    c + static_cast<std::size_t>(i) * ldc, ldc);
    }
    const double* ar = a + static_cast<std::size_t>(i) * lda;
    double* cr = c + static_cast<std::size_t>(i) * ldc;
    switch (m - i) {
      case 7: gemm_rows<7>(j0, j1, k, ar, lda, b, ldb, cr, ldc); break;
      case 6: gemm_rows<6>(j0, j1, k, ar, lda, b, ldb, cr, ldc); break;
      case 5: gemm_rows<5>(j0, j1, k, ar, lda, b, ldb, cr, ldc); break;
      case 4: gemm_rows<4>(j0, j1, k, ar, lda, b, ldb, cr, ldc); break;
      case 3: gemm_rows<3>(j0, j1, k, ar, lda, b, ldb, cr, ldc); break;
      case 2: gemm_rows<2>(j0, j1, k, ar, lda, b, ldb, cr, ldc); break;
      case 1: gemm_rows<1>(j0, j1, k, ar, lda, b, ldb, cr, ldc); break;
      default: break;
    }
  }
}

void conv2d_forward(const Tensor& x, const Tensor& weight, const ConvSpec& s,
                    Tensor& y) {
  const Shape in = x.shape();
  const Shape wt = weight.shape();
  const Shape out = y.shape();
  if (depthwise_unit_stride(in, wt, s)) {
    depthwise_forward(x, weight, s, y);
    return;
  }
  if (!use_gemm(wt, s)) {
    direct_forward(x, weight, s, y);
    return;
  }
  const int cig = in.c / s.groups;
  const int cog = wt.n / s.groups;
  const int kdim = cig * wt.h * wt.w;
  const int pdim = out.h * out.w;
  const int tasks = out.n * s.groups;
  const bool direct = pointwise(wt, s);
  std::unique_ptr<double[]> cols;
  if (!direct) {
    cols = scratch(static_cast<std::size_t>(tasks) * kdim * pdim);
#pragma omp parallel for schedule(static)
    for (int t = 0; t < tasks; ++t) {
      const int n = t / s.groups;
      const int g = t % s.groups;
      const double* xp = x.data() + (static_cast<std::size_t>(n) * in.c + g * cig) * in.plane();
      im2col(xp, in, wt, s, out.h, out.w, cig, cols.get() + static_cast<std::size_t>(t) * kdim * pdim);
    }
  }
  // Task t = (n, g) reads columns that start at cols + t * kdim * pdim, or at
  // the input itself when the kernel is pointwise (the offsets coincide).
  const double* col_base = direct ? x.data() : cols.get();
  const int col_blocks = (pdim + kColBlock - 1) / kColBlock;
#pragma omp parallel for collapse(2) schedule(static)
  for (int t = 0; t < tasks; ++t) {
    for (int cb = 0; cb < col_blocks; ++cb) {
      const int n = t / s.groups;
      const int g = t % s.groups;
      const int j0 = cb * kColBlock;
      const int width = std::min(kColBlock, pdim - j0);
      gemm(cog, width, kdim, weight.data() + static_cast<std::size_t>(g) * cog * kdim, kdim,
           col_base + static_cast<std::size_t>(t) * kdim * pdim + j0, pdim,
           y.data() + (static_cast<std::size_t>(n) * out.c + g * cog) * pdim + j0, pdim);
    }
  }
}

void conv2d_backward_input(const Tensor& grad_y, const Tensor& weight,
                           const ConvSpec& s, Tensor& grad_x) {
  const Shape in = grad_x.shape();
  const Shape wt = weight.shape();
  const Shape out = grad_y.shape();
  if (depthwise_unit_stride(in, wt, s)) {
    depthwise_backward_input(grad_y, weight, s, grad_x);
    return;
  }
  if (!use_gemm(wt, s)) {
    direct_backward_input(grad_y, weight, s, grad_x);
    return;
  }
  const int cig = in.c / s.groups;
  const int cog = wt.n / s.groups;
  const int kdim = cig * wt.h * wt.w;
  const int pdim = out.h * out.w;
  const int tasks = out.n * s.groups;
  // Per group: W_g^T, (kdim x cog).
  std::vector<double> wt_t(static_cast<std::size_t>(s.groups) * kdim * cog);
  for (int g = 0; g < s.groups; ++g) {
    transpose(weight.data() + static_cast<std::size_t>(g) * cog * kdim, cog, kdim,
              wt_t.data() + static_cast<std::size_t>(g) * kdim * cog);
  }
  const bool direct = pointwise(wt, s);
  std::vector<double> cols(direct ? 0 : static_cast<std::size_t>(tasks) * kdim * pdim, 0.0);
  double* col_base = direct ? grad_x.data() : cols.data();
  const int col_blocks = (pdim + kColBlock - 1) / kColBlock;
#pragma omp parallel for collapse(2) schedule(static)
  for (int t = 0; t < tasks; ++t) {
    for (int cb = 0; cb < col_blocks; ++cb) {
      const int n = t / s.groups;
      const int g = t % s.groups;
      const int j0 = cb * kColBlock;
      const int width = std::min(kColBlock, pdim - j0);
      gemm(kdim, width, cog, wt_t.data() + static_cast<std::size_t>(g) * kdim * cog, cog,
           grad_y.data() + (static_cast<std::size_t>(n) * out.c + g * cog) * pdim + j0, pdim,
           col_base + static_cast<std::size_t>(t) * kdim * pdim + j0, pdim);
    }
  }
  if (direct) return;
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < in.n; ++n) {
    for (int ic = 0; ic < in.c; ++ic) {
      const int g = ic / cig;
      const int t = n * s.groups + g;
      col2im_channel(cols.data() + static_cast<std::size_t>(t) * kdim * pdim, in, wt, s, out.h,
                     out.w, ic - g * cig,
                     grad_x.data() + (static_cast<std::size_t>(n) * in.c + ic) * in.plane());
    }
  }
}

void conv2d_backward_weight(const Tensor& grad_y, const Tensor& x,
                            const ConvSpec& s, Tensor& grad_w) {
  const Shape in = x.shape();
  const Shape wt = grad_w.shape();
  const Shape out = grad_y.shape();
  if (depthwise_unit_stride(in, wt, s)) {
    depthwise_backward_weight(grad_y, x, s, grad_w);
    return;
  }
  if (!use_gemm(wt, s)) {
    direct_backward_weight(grad_y, x, s, grad_w);
    return;
  }
  const int cig = in.c / s.groups;
  const int cog = wt.n / s.groups;
  const int kdim = cig * wt.h * wt.w;
  const int pdim = out.h * out.w;
  const int tasks = out.n * s.groups;
  const bool direct = pointwise(wt, s);
  std::unique_ptr<double[]> cols;
  if (!direct) cols = scratch(static_cast<std::size_t>(tasks) * kdim * pdim);
  const double* col_base = direct ? x.data() : cols.get();
  // Per task: GY_g^T, (pdim x cog).
  auto gy_t = scratch(static_cast<std::size_t>(tasks) * pdim * cog);
#pragma omp parallel for schedule(static)
  for (int t = 0; t < tasks; ++t) {
    const int n = t / s.groups;
    const int g = t % s.groups;
    if (!direct) {
      im2col(x.data() + (static_cast<std::size_t>(n) * in.c + g * cig) * in.plane(), in, wt, s,
             out.h, out.w, cig, cols.get() + static_cast<std::size_t>(t) * kdim * pdim);
    }
    transpose(grad_y.data() + (static_cast<std::size_t>(n) * out.c + g * cog) * pdim, cog, pdim,
              gy_t.get() + static_cast<std::size_t>(t) * pdim * cog);
  }
  // GW_g^T (kdim x cog) accumulated over samples in order.
  std::vector<double> gw_t(static_cast<std::size_t>(s.groups) * kdim * cog, 0.0);
  constexpr int kRows = 16;
  const int row_blocks = (kdim + kRows - 1) / kRows;
#pragma omp parallel for collapse(2) schedule(static)
  for (int g = 0; g < s.groups; ++g) {
    for (int rb = 0; rb < row_blocks; ++rb) {
      const int r0 = rb * kRows;
      const int rows = std::min(kRows, kdim - r0);
      for (int n = 0; n < out.n; ++n) {
        const int t = n * s.groups + g;
        gemm(rows, cog, pdim, col_base + (static_cast<std::size_t>(t) * kdim + r0) * pdim, pdim,
             gy_t.get() + static_cast<std::size_t>(t) * pdim * cog, cog,
             gw_t.data() + (static_cast<std::size_t>(g) * kdim + r0) * cog, cog);
      }
    }
  }
  for (int g = 0; g < s.groups; ++g) {
    for (int r = 0; r < kdim; ++r) {
      for (int o = 0; o < cog; ++o) {
        grad_w[(static_cast<std::size_t>(g) * cog + o) * kdim + r] +=
            gw_t[(static_cast<std::size_t>(g) * kdim + r) * cog + o];
      }
    }
  }
}

Shape pool3x3_output_shape(const Shape& in, int stride) {
  if (stride < 1) throw ShapeError("pool: stride must be >= 1");
  if (in.h < 1 || in.w < 1) {
    throw ShapeError("pool: empty spatial input " + in.str());
  }
  return {in.n, in.c, (in.h + 2 - 3) / stride + 1, (in.w + 2 - 3) / stride + 1};
}

void max_pool3x3_forward(const Tensor& x, int stride, Tensor& y,
                         std::vector<std::size_t>& argmax) {
  const Shape in = x.shape();
  const Shape out = y.shape();
  argmax.assign(out.size(), 0);
  const int planes = in.n * in.c;

#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const std::size_t xbase = static_cast<std::size_t>(p) * in.plane();
    const std::size_t ybase = static_cast<std::size_t>(p) * out.plane();
    for (int oh = 0; oh < out.h; ++oh) {
      const int h0 = std::max(0, oh * stride - 1);
      const int h1 = std::min(in.h, oh * stride + 2);
      for (int ow = 0; ow < out.w; ++ow) {
        const int w0 = std::max(0, ow * stride - 1);
        const int w1 = std::min(in.w, ow * stride + 2);
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = xbase + static_cast<std::size_t>(h0) * in.w + w0;
        for (int ih = h0; ih < h1; ++ih) {
          for (int iw = w0; iw < w1; ++iw) {
            const std::size_t i = xbase + static_cast<std::size_t>(ih) * in.w + iw;
            if (x[i] > best) {
              best = x[i];
              best_i = i;
            }
          }
        }
        const std::size_t o = ybase + static_cast<std::size_t>(oh) * out.w + ow;
        y[o] = best;
        argmax[o] = best_i;
      }
    }
  }
}

void max_pool3x3_backward(const Tensor& grad_y,
                          const std::vector<std::size_t>& argmax,
                          Tensor& grad_x) {
  const Shape out = grad_y.shape();
  const int planes = out.n * out.c;
  // Windows of one plane only touch that plane, so planes are independent.
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * out.plane();
    for (std::size_t o = base; o < base + out.plane(); ++o) {
      grad_x[argmax[o]] += grad_y[o];
    }
  }
}

void avg_pool3x3_forward(const Tensor& x, int stride, Tensor& y) {
  const Shape in = x.shape();
  const Shape out = y.shape();
  const int planes = in.n * in.c;

#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const double* xp = x.data() + static_cast<std::size_t>(p) * in.plane();
    double* yp = y.data() + static_cast<std::size_t>(p) * out.plane();
    for (int oh = 0; oh < out.h; ++oh) {
      const int h0 = std::max(0, oh * stride - 1);
      const int h1 = std::min(in.h, oh * stride + 2);
      for (int ow = 0; ow < out.w; ++ow) {
        const int w0 = std::max(0, ow * stride - 1);
        const int w1 = std::min(in.w, ow * stride + 2);
        double sum = 0.0;
        for (int ih = h0; ih < h1; ++ih) {
          for (int iw = w0; iw < w1; ++iw) sum += xp[ih * in.w + iw];
        }
        yp[oh * out.w + ow] = sum / ((h1 - h0) * (w1 - w0));
      }
    }
  }
}

void avg_pool3x3_backward(const Tensor& grad_y, int stride, Tensor& grad_x) {
  const Shape in = grad_x.shape();
  const Shape out = grad_y.shape();
  const int planes = in.n * in.c;

#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    double* gxp = grad_x.data() + static_cast<std::size_t>(p) * in.plane();
    const double* gyp = grad_y.data() + static_cast<std::size_t>(p) * out.plane();
    for (int oh = 0; oh < out.h; ++oh) {
      const int h0 = std::max(0, oh * stride - 1);
      const int h1 = std::min(in.h, oh * stride + 2);
      for (int ow = 0; ow < out.w; ++ow) {
        const int w0 = std::max(0, ow * stride - 1);
        const int w1 = std::min(in.w, ow * stride + 2);
        const double g = gyp[oh * out.w + ow] / ((h1 - h0) * (w1 - w0));
        for (int ih = h0; ih < h1; ++ih) {
          for (int iw = w0; iw < w1; ++iw) gxp[ih * in.w + iw] += g;
        }
      }
    }
  }
}

namespace {

// Normalizes the `count` elements addressed by (group, plane) pairs.
template <typename PlaneFn>
void normalize_group(const Tensor& x, int planes, PlaneFn plane_of,
                     std::size_t plane_size, double eps, double scale,
                     double shift, Tensor& y, Tensor& xhat, double& inv_std) {
  const double count = static_cast<double>(planes) * plane_size;
  double sum = 0.0;
  for (int k = 0; k < planes; ++k) {
    const std::size_t base = plane_of(k);
    for (std::size_t i = 0; i < plane_size; ++i) sum += x[base + i];
  }
  const double mean = sum / count;
  double sq = 0.0;
  for (int k = 0; k < planes; ++k) {
    const std::size_t base = plane_of(k);
    for (std::size_t i = 0; i < plane_size; ++i) {
      const double d = x[base + i] - mean;
      sq += d * d;
    }
  }
  inv_std = 1.0 / std::sqrt(sq / count + eps);
  for (int k = 0; k < planes; ++k) {
    const std::size_t base = plane_of(k);
    for (std::size_t i = 0; i < plane_size; ++i) {
      const double v = (x[base + i] - mean) * inv_std;
      xhat[base + i] = v;
      y[base + i] = v * scale + shift;
    }
  }
}

}  // namespace

void batch_norm_forward(const Tensor& x, const double* gamma,
                        const double* beta, double eps, Tensor& y,
                        Tensor& xhat, std::vector<double>& inv_std) {
  const Shape s = x.shape();
  inv_std.assign(s.c, 0.0);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < s.c; ++c) {
    auto plane_of = [&](int n) {
      return (static_cast<std::size_t>(n) * s.c + c) * s.plane();
    };
    normalize_group(x, s.n, plane_of, s.plane(), eps, gamma ? gamma[c] : 1.0,
                    beta ? beta[c] : 0.0, y, xhat, inv_std[c]);
  }
}

void instance_stats_norm_forward(const Tensor& x, const double* gamma,
                                 const double* beta, double eps, Tensor& y,
                                 Tensor& xhat, std::vector<double>& inv_std) {
  const Shape s = x.shape();
  inv_std.assign(static_cast<std::size_t>(s.n) * s.c, 0.0);
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * s.plane();
      auto plane_of = [base](int) { return base; };
      normalize_group(x, 1, plane_of, s.plane(), eps, gamma ? gamma[c] : 1.0,
                      beta ? beta[c] : 0.0, y, xhat,
                      inv_std[static_cast<std::size_t>(n) * s.c + c]);
    }
  }
}

void batch_norm_backward(const Tensor& grad_y, const Tensor& xhat,
                         const std::vector<double>& inv_std,
                         const double* gamma, bool per_sample, Tensor& grad_x,
                         double* grad_gamma, double* grad_beta) {
  const Shape s = grad_y.shape();
  // dx = inv_std / m * (m*g - sum(g) - xhat * sum(g*xhat)), g = dy * gamma
  auto backward_group = [&](int c, int n_begin, int n_end, double istd) {
    const double m = static_cast<double>(n_end - n_begin) * s.plane();
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (int n = n_begin; n < n_end; ++n) {
      const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * s.plane();
      for (std::size_t i = 0; i < s.plane(); ++i) {
        sum_dy += grad_y[base + i];
        sum_dy_xhat += grad_y[base + i] * xhat[base + i];
      }
    }
    const double g = gamma ? gamma[c] : 1.0;
    for (int n = n_begin; n < n_end; ++n) {
      const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * s.plane();
      for (std::size_t i = 0; i < s.plane(); ++i) {
        grad_x[base + i] += g * istd / m *
                            (m * grad_y[base + i] - sum_dy -
                             xhat[base + i] * sum_dy_xhat);
      }
    }
    return std::pair{sum_dy, sum_dy_xhat};
  };

  if (!per_sample) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < s.c; ++c) {
      auto [sdy, sdyx] = backward_group(c, 0, s.n, inv_std[c]);
      if (grad_gamma) grad_gamma[c] += sdyx;
      if (grad_beta) grad_beta[c] += sdy;
    }
    return;
  }
#pragma omp parallel for schedule(static)
  for (int c = 0; c < s.c; ++c) {
    for (int n = 0; n < s.n; ++n) {
      auto [sdy, sdyx] = backward_group(
          c, n, n + 1, inv_std[static_cast<std::size_t>(n) * s.c + c]);
      if (grad_gamma) grad_gamma[c] += sdyx;
      if (grad_beta) grad_beta[c] += sdy;
    }
  }
}

namespace reference {

void conv2d_forward(const Tensor& x, const Tensor& weight, const ConvSpec& s,
                    Tensor& y) {
  const Shape in = x.shape();
  const Shape wt = weight.shape();
  const Shape out = y.shape();
  const int cig = in.c / s.groups;
  const int cog = wt.n / s.groups;
  for (int n = 0; n < out.n; ++n)
    for (int oc = 0; oc < out.c; ++oc)
      for (int oh = 0; oh < out.h; ++oh)
        for (int ow = 0; ow < out.w; ++ow) {
          double acc = 0.0;
          const int g = oc / cog;
          for (int icg = 0; icg < cig; ++icg)
            for (int kh = 0; kh < wt.h; ++kh)
              for (int kw = 0; kw < wt.w; ++kw) {
                const int ih = oh * s.stride_h - s.pad_h + kh * s.dil_h;
                const int iw = ow * s.stride_w - s.pad_w + kw * s.dil_w;
                if (ih < 0 || ih >= in.h || iw < 0 || iw >= in.w) continue;
                acc += weight.at(oc, icg, kh, kw) * x.at(n, g * cig + icg, ih, iw);
              }
          y.at(n, oc, oh, ow) += acc;
        }
}

void conv2d_backward_input(const Tensor& grad_y, const Tensor& weight,
                           const ConvSpec& s, Tensor& grad_x) {
  const Shape in = grad_x.shape();
  const Shape wt = weight.shape();
  const Shape out = grad_y.shape();
  const int cig = in.c / s.groups;
  const int cog = wt.n / s.groups;
  for (int n = 0; n < out.n; ++n)
    for (int oc = 0; oc < out.c; ++oc)
      for (int oh = 0; oh < out.h; ++oh)
        for (int ow = 0; ow < out.w; ++ow) {
          const int g = oc / cog;
          for (int icg = 0; icg < cig; ++icg)
            for (int kh = 0; kh < wt.h; ++kh)
              for (int kw = 0; kw < wt.w; ++kw) {
                const int ih = oh * s.stride_h - s.pad_h + kh * s.dil_h;
                const int iw = ow * s.stride_w - s.pad_w + kw * s.dil_w;
                if (ih < 0 || ih >= in.h || iw < 0 || iw >= in.w) continue;
                grad_x.at(n, g * cig + icg, ih, iw) +=
                    weight.at(oc, icg, kh, kw) * grad_y.at(n, oc, oh, ow);
              }
        }
}

void conv2d_backward_weight(const Tensor& grad_y, const Tensor& x,
                            const ConvSpec& s, Tensor& grad_w) {
  const Shape in = x.shape();
  const Shape wt = grad_w.shape();
  const Shape out = grad_y.shape();
  const int cig = in.c / s.groups;
  const int cog = wt.n / s.groups;
  for (int n = 0; n < out.n; ++n)
    for (int oc = 0; oc < out.c; ++oc)
      for (int oh = 0; oh < out.h; ++oh)
        for (int ow = 0; ow < out.w; ++ow) {
          const int g = oc / cog;
          for (int icg = 0; icg < cig; ++icg)
            for (int kh = 0; kh < wt.h; ++kh)
              for (int kw = 0; kw < wt.w; ++kw) {
                const int ih = oh * s.stride_h - s.pad_h + kh * s.dil_h;
                const int iw = ow * s.stride_w - s.pad_w + kw * s.dil_w;
                if (ih < 0 || ih >= in.h || iw < 0 || iw >= in.w) continue;
                grad_w.at(oc, icg, kh, kw) +=
                    x.at(n, g * cig + icg, ih, iw) * grad_y.at(n, oc, oh, ow);
              }
        }
}

void max_pool3x3_forward(const Tensor& x, int stride, Tensor& y) {
  const Shape in = x.shape();
  const Shape out = y.shape();
  for (int n = 0; n < out.n; ++n)
    for (int c = 0; c < out.c; ++c)
      for (int oh = 0; oh < out.h; ++oh)
        for (int ow = 0; ow < out.w; ++ow) {
          double best = -std::numeric_limits<double>::infinity();
          for (int dh = -1; dh <= 1; ++dh)
            for (int dw = -1; dw <= 1; ++dw) {
              const int ih = oh * stride + dh;
              const int iw = ow * stride + dw;
              if (ih < 0 || ih >= in.h || iw < 0 || iw >= in.w) continue;
              best = std::max(best, x.at(n, c, ih, iw));
            }
          y.at(n, c, oh, ow) = best;
        }
}

void avg_pool3x3_forward(const Tensor& x, int stride, Tensor& y) {
  const Shape in = x.shape();
  const Shape out = y.shape();
  for (int n = 0; n < out.n; ++n)
    for (int c = 0; c < out.c; ++c)
      for (int oh = 0; oh < out.h; ++oh)
        for (int ow = 0; ow < out.w; ++ow) {
          double sum = 0.0;
          int count = 0;
          for (int dh = -1; dh <= 1; ++dh)
            for (int dw = -1; dw <= 1; ++dw) {
              const int ih = oh * stride + dh;
              const int iw = ow * stride + dw;
              if (ih < 0 || ih >= in.h || iw < 0 || iw >= in.w) continue;
              sum += x.at(n, c, ih, iw);
              ++count;
            }
          y.at(n, c, oh, ow) = sum / count;
        }
}

}  // namespace reference
}  // namespace asrnas::kernels
