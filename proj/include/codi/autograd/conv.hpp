// Copyright 2026 The codi-iqa Authors. All rights reserved.
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

// NCHW convolution, pooling and batch normalization with gradients.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "codi/autograd/gemm.hpp"
#include "codi/autograd/variable.hpp"

namespace codi {

struct Conv2dGeometry {
  int64_t stride = 1;
  int64_t padding = 0;
  int64_t dilation = 1;
  int64_t groups = 1;
};

namespace detail {

inline int64_t conv_out_size(int64_t in, int64_t k, const Conv2dGeometry& g) {
  return (in + 2 * g.padding - g.dilation * (k - 1) - 1) / g.stride + 1;
}

// Budget (elements) for one im2col chunk; keeps full-resolution stages bounded.
inline constexpr int64_t kColumnBudget = int64_t{1} << 23;

/// Fills cols[(c*kh + i)*kw + j, l] for output rows [row0, row0 + rows).
template <typename T>
void im2col(const T* x, int64_t channels, int64_t h, int64_t w, int64_t kh, int64_t kw,
            const Conv2dGeometry& g, int64_t out_w, int64_t row0, int64_t rows, T* cols) {
  const int64_t l_count = rows * out_w;
  for (int64_t c = 0; c < channels; ++c)
    for (int64_t i = 0; i < kh; ++i)
      for (int64_t j = 0; j < kw; ++j) {
        T* dst = cols + ((c * kh + i) * kw + j) * l_count;
        for (int64_t oy = 0; oy < rows; ++oy) {
          const int64_t iy = (row0 + oy) * g.stride - g.padding + i * g.dilation;
          T* drow = dst + oy * out_w;
          if (iy < 0 || iy >= h) {
            std::fill_n(drow, out_w, T(0));
            continue;
          }
          const T* srow = x + (c * h + iy) * w;
          for (int64_t ox = 0; ox < out_w; ++ox) {
            const int64_t ix = ox * g.stride - g.padding + j * g.dilation;
            drow[ox] = (ix >= 0 && ix < w) ? srow[ix] : T(0);
          }
        }
      }
}

template <typename T>
void col2im_add(const T* cols, int64_t channels, int64_t h, int64_t w, int64_t kh, int64_t kw,
                const Conv2dGeometry& g, int64_t out_w, int64_t row0, int64_t rows, T* x) {
  const int64_t l_count = rows * out_w;
  for (int64_t c = 0; c < channels; ++c)
    for (int64_t i = 0; i < kh; ++i)
      for (int64_t j = 0; j < kw; ++j) {
        const T* src = cols + ((c * kh + i) * kw + j) * l_count;
        for (int64_t oy = 0; oy < rows; ++oy) {
          const int64_t iy = (row0 + oy) * g.stride - g.padding + i * g.dilation;
          if (iy < 0 || iy >= h) continue;
          T* xrow = x + (c * h + iy) * w;
          const T* srow = src + oy * out_w;
          for (int64_t ox = 0; ox < out_w; ++ox) {
            const int64_t ix = ox * g.stride - g.padding + j * g.dilation;
            if (ix >= 0 && ix < w) xrow[ix] += srow[ox];
          }
        }
      }
}

inline bool is_pointwise(int64_t kh, int64_t kw, const Conv2dGeometry& g) {
  return kh == 1 && kw == 1 && g.stride == 1 && g.padding == 0;
}

// Depthwise: one input channel per group, `mult` outputs per input channel.
template <typename T>
void depthwise_forward(const T* x, const T* wt, const T* bias, int64_t n, int64_t c, int64_t mult,
                       int64_t h, int64_t w, int64_t kh, int64_t kw, const Conv2dGeometry& g,
                       int64_t oh, int64_t ow, T* y) {
  for (int64_t b = 0; b < n; ++b)
    for (int64_t oc = 0; oc < c * mult; ++oc) {
      const int64_t ic = oc / mult;
      const T* xi = x + (b * c + ic) * h * w;
      const T* wk = wt + oc * kh * kw;
      T* yo = y + (b * c * mult + oc) * oh * ow;
      const T b0 = bias ? bias[oc] : T(0);
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox) {
          T acc = b0;
          for (int64_t i = 0; i < kh; ++i) {
            const int64_t iy = oy * g.stride - g.padding + i * g.dilation;
            if (iy < 0 || iy >= h) continue;
            for (int64_t j = 0; j < kw; ++j) {
              const int64_t ix = ox * g.stride - g.padding + j * g.dilation;
              if (ix < 0 || ix >= w) continue;
              acc += wk[i * kw + j] * xi[iy * w + ix];
            }
          }
          yo[oy * ow + ox] = acc;
        }
    }
}

template <typename T>
void depthwise_backward(const T* x, const T* wt, const T* dy, int64_t n, int64_t c, int64_t mult,
                        int64_t h, int64_t w, int64_t kh, int64_t kw, const Conv2dGeometry& g,
                        int64_t oh, int64_t ow, T* dx, T* dw, T* db) {
  for (int64_t b = 0; b < n; ++b)
    for (int64_t oc = 0; oc < c * mult; ++oc) {
      const int64_t ic = oc / mult;
      const T* xi = x + (b * c + ic) * h * w;
      const T* wk = wt + oc * kh * kw;
      const T* go = dy + (b * c * mult + oc) * oh * ow;
      T* gx = dx ? dx + (b * c + ic) * h * w : nullptr;
      T* gw = dw ? dw + oc * kh * kw : nullptr;
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox) {
          const T gv = go[oy * ow + ox];
          if (db) db[oc] += gv;
          for (int64_t i = 0; i < kh; ++i) {
            const int64_t iy = oy * g.stride - g.padding + i * g.dilation;
            if (iy < 0 || iy >= h) continue;
            for (int64_t j = 0; j < kw; ++j) {
              const int64_t ix = ox * g.stride - g.padding + j * g.dilation;
              if (ix < 0 || ix >= w) continue;
              if (gx) gx[iy * w + ix] += gv * wk[i * kw + j];
              if (gw) gw[i * kw + j] += gv * xi[iy * w + ix];
            }
          }
        }
    }
}

}  // namespace detail

/// 2-D convolution. x: [N, Cin, H, W]; w: [Cout, Cin/groups, kh, kw]; b: [Cout] or null.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>* b, Conv2dGeometry g = {}) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  require<ShapeError>(xs.size() == 4 && ws.size() == 4, "conv2d expects 4-D input and weight, got ",
                      shape_str(xs), " and ", shape_str(ws));
  const int64_t n = xs[0], cin = xs[1], h = xs[2], wd = xs[3];
  const int64_t cout = ws[0], cin_g = ws[1], kh = ws[2], kw = ws[3];
  require<ShapeError>(g.groups >= 1 && cin % g.groups == 0 && cout % g.groups == 0 &&
                          cin_g * g.groups == cin,
                      "conv2d: input channels ", cin, " incompatible with weight ", shape_str(ws),
                      " and groups ", g.groups);
  if (b) require<ShapeError>(b->numel() == cout, "conv2d: bias size mismatch");
  const int64_t oh = detail::conv_out_size(h, kh, g);
  const int64_t ow = detail::conv_out_size(wd, kw, g);
  require<ShapeError>(oh > 0 && ow > 0, "conv2d: output would be empty for input ", shape_str(xs));
  const int64_t cout_g = cout / g.groups;
  const bool depthwise = cin_g == 1 && g.groups == cin;
  const bool pointwise = detail::is_pointwise(kh, kw, g);
  const int64_t ksize = cin_g * kh * kw;
  const int64_t rows_per_chunk =
      std::max<int64_t>(1, std::min<int64_t>(oh, detail::kColumnBudget / std::max<int64_t>(1, ksize * ow)));

  Tensor<T> out({n, cout, oh, ow});
  const T* xv = x.value().data();
  const T* wv = w.value().data();
  const T* bv = b ? b->value().data() : nullptr;
  if (depthwise) {
    detail::depthwise_forward(xv, wv, bv, n, cin, cout / cin, h, wd, kh, kw, g, oh, ow, out.data());
  } else {
    std::vector<T> cols;
    std::vector<T> tmp;
    for (int64_t bi = 0; bi < n; ++bi)
      for (int64_t gi = 0; gi < g.groups; ++gi) {
        const T* xg = xv + (bi * cin + gi * cin_g) * h * wd;
        const T* wg = wv + gi * cout_g * ksize;
        T* yg = out.data() + (bi * cout + gi * cout_g) * oh * ow;
        if (pointwise) {
          detail::gemm<T>(false, false, cout_g, oh * ow, cin_g, wg, xg, yg, false);
          continue;
        }
        for (int64_t r0 = 0; r0 < oh; r0 += rows_per_chunk) {
          const int64_t rows = std::min(rows_per_chunk, oh - r0);
          const int64_t l = rows * ow;
          cols.resize(static_cast<size_t>(ksize * l));
          detail::im2col(xg, cin_g, h, wd, kh, kw, g, ow, r0, rows, cols.data());
          if (rows == oh) {
            detail::gemm<T>(false, false, cout_g, l, ksize, wg, cols.data(), yg, false);
          } else {
            tmp.resize(static_cast<size_t>(cout_g * l));
            detail::gemm<T>(false, false, cout_g, l, ksize, wg, cols.data(), tmp.data(), false);
            for (int64_t oc = 0; oc < cout_g; ++oc)
              std::copy_n(tmp.data() + oc * l, l, yg + oc * oh * ow + r0 * ow);
          }
        }
      }
    if (bv)
      for (int64_t bi = 0; bi < n; ++bi)
        for (int64_t oc = 0; oc < cout; ++oc) {
          T* yo = out.data() + (bi * cout + oc) * oh * ow;
          for (int64_t i = 0; i < oh * ow; ++i) yo[i] += bv[oc];
        }
  }

  auto body = [=](Node<T>& self) {
    const T* xv = self.inputs[0]->value.data();
    const T* wv = self.inputs[1]->value.data();
    T* gx = grad_sink(self, 0);
    T* gw = grad_sink(self, 1);
    T* gb = self.inputs.size() > 2 ? grad_sink(self, 2) : nullptr;
    const T* dy = self.grad.data();
    if (depthwise) {
      detail::depthwise_backward(xv, wv, dy, n, cin, cout / cin, h, wd, kh, kw, g, oh, ow, gx, gw, gb);
      return;
    }
    if (gb)
      for (int64_t bi = 0; bi < n; ++bi)
        for (int64_t oc = 0; oc < cout; ++oc) {
          const T* go = dy + (bi * cout + oc) * oh * ow;
          T s = 0;
          for (int64_t i = 0; i < oh * ow; ++i) s += go[i];
          gb[oc] += s;
        }
    if (!gx && !gw) return;
    std::vector<T> cols, dcols, dyc;
    for (int64_t bi = 0; bi < n; ++bi)
      for (int64_t gi = 0; gi < g.groups; ++gi) {
        const T* xg = xv + (bi * cin + gi * cin_g) * h * wd;
        const T* wg = wv + gi * cout_g * ksize;
        const T* dyg = dy + (bi * cout + gi * cout_g) * oh * ow;
        if (pointwise) {
          if (gw) detail::gemm<T>(false, true, cout_g, cin_g, oh * ow, dyg, xg, gw + gi * cout_g * ksize, true);
          if (gx)
            detail::gemm<T>(true, false, cin_g, oh * ow, cout_g, wg, dyg,
                            gx + (bi * cin + gi * cin_g) * h * wd, true);
          continue;
        }
        for (int64_t r0 = 0; r0 < oh; r0 += rows_per_chunk) {
          const int64_t rows = std::min(rows_per_chunk, oh - r0);
          const int64_t l = rows * ow;
          const T* dyl = dyg + r0 * ow;
          if (rows != oh) {
            dyc.resize(static_cast<size_t>(cout_g * l));
            for (int64_t oc = 0; oc < cout_g; ++oc) std::copy_n(dyg + oc * oh * ow + r0 * ow, l, dyc.data() + oc * l);
            dyl = dyc.data();
          }
          if (gw) {
            cols.resize(static_cast<size_t>(ksize * l));
            detail::im2col(xg, cin_g, h, wd, kh, kw, g, ow, r0, rows, cols.data());
            detail::gemm<T>(false, true, cout_g, ksize, l, dyl, cols.data(), gw + gi * cout_g * ksize, true);
          }
          if (gx) {
            dcols.resize(static_cast<size_t>(ksize * l));
            detail::gemm<T>(true, false, ksize, l, cout_g, wg, dyl, dcols.data(), false);
            detail::col2im_add(dcols.data(), cin_g, h, wd, kh, kw, g, ow, r0, rows,
                               gx + (bi * cin + gi * cin_g) * h * wd);
          }
        }
      }
  };
  if (b) return make_result<T>(std::move(out), {x, w, *b}, body);
  return make_result<T>(std::move(out), {x, w}, body);
}

/// Max pooling with -inf padding (ResNet stem).
template <typename T>
Var<T> max_pool2d(const Var<T>& x, int64_t k, int64_t stride, int64_t pad) {
  const Shape& s = x.shape();
  const int64_t n = s[0], c = s[1], h = s[2], w = s[3];
  Conv2dGeometry g{stride, pad, 1, 1};
  const int64_t oh = detail::conv_out_size(h, k, g), ow = detail::conv_out_size(w, k, g);
  Tensor<T> out({n, c, oh, ow});
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(out.numel()));
  const T* xv = x.value().data();
  for (int64_t p = 0; p < n * c; ++p)
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        int64_t bi = -1;
        for (int64_t i = 0; i < k; ++i) {
          const int64_t iy = oy * stride - pad + i;
          if (iy < 0 || iy >= h) continue;
          for (int64_t j = 0; j < k; ++j) {
            const int64_t ix = ox * stride - pad + j;
            if (ix < 0 || ix >= w) continue;
            const int64_t idx = (p * h + iy) * w + ix;
            if (bi < 0 || xv[idx] > best) {
              best = xv[idx];
              bi = idx;
            }
          }
        }
        const int64_t o = (p * oh + oy) * ow + ox;
        out[o] = best;
        (*argmax)[o] = bi;
      }
  return make_result<T>(std::move(out), {x}, [argmax](Node<T>& self) {
    if (T* g = grad_sink(self, 0))
      for (size_t o = 0; o < argmax->size(); ++o) g[(*argmax)[o]] += self.grad[static_cast<int64_t>(o)];
  });
}

/// Adaptive average pooling with PyTorch bin edges: [floor(i*H/o), ceil((i+1)*H/o)).
template <typename T>
Var<T> adaptive_avg_pool2d(const Var<T>& x, int64_t out_h, int64_t out_w) {
  const Shape& s = x.shape();
  const int64_t n = s[0], c = s[1], h = s[2], w = s[3];
  if (h == out_h && w == out_w) return x;
  auto bins = [](int64_t in, int64_t out) {
    std::vector<std::pair<int64_t, int64_t>> b(static_cast<size_t>(out));
    for (int64_t i = 0; i < out; ++i) b[i] = {(i * in) / out, ((i + 1) * in + out - 1) / out};
    return b;
  };
  auto by = std::make_shared<std::vector<std::pair<int64_t, int64_t>>>(bins(h, out_h));
  auto bx = std::make_shared<std::vector<std::pair<int64_t, int64_t>>>(bins(w, out_w));
  Tensor<T> out({n, c, out_h, out_w});
  const T* xv = x.value().data();
  for (int64_t p = 0; p < n * c; ++p)
    for (int64_t oy = 0; oy < out_h; ++oy)
      for (int64_t ox = 0; ox < out_w; ++ox) {
        auto [y0, y1] = (*by)[oy];
        auto [x0, x1] = (*bx)[ox];
        T acc = 0;
        for (int64_t iy = y0; iy < y1; ++iy)
          for (int64_t ix = x0; ix < x1; ++ix) acc += xv[(p * h + iy) * w + ix];
        out[(p * out_h + oy) * out_w + ox] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
      }
  return make_result<T>(std::move(out), {x}, [=](Node<T>& self) {
    if (T* g = grad_sink(self, 0))
      for (int64_t p = 0; p < n * c; ++p)
        for (int64_t oy = 0; oy < out_h; ++oy)
          for (int64_t ox = 0; ox < out_w; ++ox) {
            auto [y0, y1] = (*by)[oy];
            auto [x0, x1] = (*bx)[ox];
            const T gv = self.grad[(p * out_h + oy) * out_w + ox] / static_cast<T>((y1 - y0) * (x1 - x0));
            for (int64_t iy = y0; iy < y1; ++iy)
              for (int64_t ix = x0; ix < x1; ++ix) g[(p * h + iy) * w + ix] += gv;
          }
  });
}

/// Batch normalization over (N, H, W) per channel.
///
/// Training mode normalizes with batch statistics and, when running buffers
/// are given, updates them (biased variance for normalization, unbiased for
/// the running estimate). Eval mode uses the running buffers and never
/// writes them.
template <typename T>
Var<T> batch_norm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>* running_mean,
                    Tensor<T>* running_var, bool training, T momentum = T(0.1), T eps = T(1e-5)) {
  const Shape& s = x.shape();
  require<ShapeError>(s.size() == 4, "batch_norm2d expects NCHW input");
  const int64_t n = s[0], c = s[1], hw = s[2] * s[3];
  require<ShapeError>(gamma.numel() == c && beta.numel() == c, "batch_norm2d: affine size ",
                      gamma.numel(), " does not match channels ", c);
  const int64_t m = n * hw;
  auto mu = std::make_shared<std::vector<T>>(static_cast<size_t>(c));
  auto rstd = std::make_shared<std::vector<T>>(static_cast<size_t>(c));
  const T* xv = x.value().data();
  for (int64_t ch = 0; ch < c; ++ch) {
    T mean_c, var_c;
    if (training) {
      T acc = 0;
      for (int64_t b = 0; b < n; ++b) {
        const T* p = xv + (b * c + ch) * hw;
        for (int64_t i = 0; i < hw; ++i) acc += p[i];
      }
      mean_c = acc / static_cast<T>(m);
      T sq = 0;
      for (int64_t b = 0; b < n; ++b) {
        const T* p = xv + (b * c + ch) * hw;
        for (int64_t i = 0; i < hw; ++i) sq += (p[i] - mean_c) * (p[i] - mean_c);
      }
      var_c = sq / static_cast<T>(m);
      if (running_mean && running_var) {
        (*running_mean)[ch] = (T(1) - momentum) * (*running_mean)[ch] + momentum * mean_c;
        const T unbiased = m > 1 ? sq / static_cast<T>(m - 1) : var_c;
        (*running_var)[ch] = (T(1) - momentum) * (*running_var)[ch] + momentum * unbiased;
      }
    } else {
      mean_c = (*running_mean)[ch];
      var_c = (*running_var)[ch];
    }
    (*mu)[ch] = mean_c;
    (*rstd)[ch] = T(1) / std::sqrt(var_c + eps);
  }
  Tensor<T> out(s);
  const T* gv = gamma.value().data();
  const T* bv = beta.value().data();
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch) {
      const T* p = xv + (b * c + ch) * hw;
      T* o = out.data() + (b * c + ch) * hw;
      const T sc = gv[ch] * (*rstd)[ch];
      const T sh = bv[ch] - (*mu)[ch] * sc;
      for (int64_t i = 0; i < hw; ++i) o[i] = p[i] * sc + sh;
    }
  return make_result<T>(std::move(out), {x, gamma, beta}, [=](Node<T>& self) {
    const T* xv = self.inputs[0]->value.data();
    const T* gv = self.inputs[1]->value.data();
    T* gx = grad_sink(self, 0);
    T* gg = grad_sink(self, 1);
    T* gb = grad_sink(self, 2);
    const T* dy = self.grad.data();
    for (int64_t ch = 0; ch < c; ++ch) {
      T sum_dy = 0, sum_dy_xhat = 0;
      for (int64_t b = 0; b < n; ++b) {
        const T* p = xv + (b * c + ch) * hw;
        const T* d = dy + (b * c + ch) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          sum_dy += d[i];
          sum_dy_xhat += d[i] * (p[i] - (*mu)[ch]) * (*rstd)[ch];
        }
      }
      if (gg) gg[ch] += sum_dy_xhat;
      if (gb) gb[ch] += sum_dy;
      if (!gx) continue;
      const T k = gv[ch] * (*rstd)[ch];
      for (int64_t b = 0; b < n; ++b) {
        const T* p = xv + (b * c + ch) * hw;
        const T* d = dy + (b * c + ch) * hw;
        T* o = gx + (b * c + ch) * hw;
        if (training) {
          const T inv_m = T(1) / static_cast<T>(m);
          for (int64_t i = 0; i < hw; ++i) {
            const T xh = (p[i] - (*mu)[ch]) * (*rstd)[ch];
            o[i] += k * (d[i] - inv_m * sum_dy - xh * inv_m * sum_dy_xhat);
          }
        } else {
          for (int64_t i = 0; i < hw; ++i) o[i] += k * d[i];
        }
      }
    }
  });
}

}  // namespace codi
