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

// Deformable convolution (v1, single offset group, no modulation).
//
// Offset layout follows the common reference operator: for kernel tap
// k = i * kw + j, channel 2k holds the vertical (row) displacement and
// channel 2k+1 the horizontal one, both in input-pixel units. Samples are
// bilinear; any corner outside the feature map contributes zero, and a
// location at or beyond one pixel outside the map samples exactly zero.

#include <cmath>
#include <vector>

#include "codi/autograd/conv.hpp"

namespace codi {

namespace detail {

template <typename T>
T bilinear_zero_pad(const T* img, int64_t h, int64_t w, T y, T x) {
  if (y <= T(-1) || y >= static_cast<T>(h) || x <= T(-1) || x >= static_cast<T>(w)) return T(0);
  const int64_t y0 = static_cast<int64_t>(std::floor(y));
  const int64_t x0 = static_cast<int64_t>(std::floor(x));
  const T ly = y - static_cast<T>(y0), lx = x - static_cast<T>(x0);
  const T hy = T(1) - ly, hx = T(1) - lx;
  auto px = [&](int64_t yy, int64_t xx) -> T {
    return (yy >= 0 && yy < h && xx >= 0 && xx < w) ? img[yy * w + xx] : T(0);
  };
  return hy * hx * px(y0, x0) + hy * lx * px(y0, x0 + 1) + ly * hx * px(y0 + 1, x0) +
         ly * lx * px(y0 + 1, x0 + 1);
}

/// Scatters `g` into the bilinear corners of (y, x) and returns the partial
/// derivatives of the sampled value with respect to y and x.
template <typename T>
std::pair<T, T> bilinear_backward(const T* img, T* gimg, int64_t h, int64_t w, T y, T x, T g) {
  if (y <= T(-1) || y >= static_cast<T>(h) || x <= T(-1) || x >= static_cast<T>(w)) return {T(0), T(0)};
  const int64_t y0 = static_cast<int64_t>(std::floor(y));
  const int64_t x0 = static_cast<int64_t>(std::floor(x));
  const T ly = y - static_cast<T>(y0), lx = x - static_cast<T>(x0);
  const T hy = T(1) - ly, hx = T(1) - lx;
  auto in = [&](int64_t yy, int64_t xx) { return yy >= 0 && yy < h && xx >= 0 && xx < w; };
  const T v00 = in(y0, x0) ? img[y0 * w + x0] : T(0);
  const T v01 = in(y0, x0 + 1) ? img[y0 * w + x0 + 1] : T(0);
  const T v10 = in(y0 + 1, x0) ? img[(y0 + 1) * w + x0] : T(0);
  const T v11 = in(y0 + 1, x0 + 1) ? img[(y0 + 1) * w + x0 + 1] : T(0);
  if (gimg) {
    if (in(y0, x0)) gimg[y0 * w + x0] += g * hy * hx;
    if (in(y0, x0 + 1)) gimg[y0 * w + x0 + 1] += g * hy * lx;
    if (in(y0 + 1, x0)) gimg[(y0 + 1) * w + x0] += g * ly * hx;
    if (in(y0 + 1, x0 + 1)) gimg[(y0 + 1) * w + x0 + 1] += g * ly * lx;
  }
  const T dy = hx * (v10 - v00) + lx * (v11 - v01);
  const T dx = hy * (v01 - v00) + ly * (v11 - v10);
  return {dy, dx};
}

}  // namespace detail

/// x: [N, Cin, H, W]; offset: [N, 2*kh*kw, Ho, Wo]; w: [Cout, Cin/groups, kh, kw].
template <typename T>
Var<T> deform_conv2d(const Var<T>& x, const Var<T>& offset, const Var<T>& w, const Var<T>* b,
                     Conv2dGeometry g = {1, 1, 1, 1}) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  require<ShapeError>(xs.size() == 4 && ws.size() == 4, "deform_conv2d expects 4-D tensors");
  const int64_t n = xs[0], cin = xs[1], h = xs[2], wd = xs[3];
  const int64_t cout = ws[0], cin_g = ws[1], kh = ws[2], kw = ws[3];
  require<ShapeError>(cin_g * g.groups == cin && cout % g.groups == 0,
                      "deform_conv2d: channels incompatible with groups");
  const int64_t oh = detail::conv_out_size(h, kh, g), ow = detail::conv_out_size(wd, kw, g);
  const int64_t taps = kh * kw;
  require<ShapeError>(offset.shape() == Shape{n, 2 * taps, oh, ow}, "deform_conv2d: offset shape ",
                      shape_str(offset.shape()), " expected ", shape_str(Shape{n, 2 * taps, oh, ow}));
  require<InputError>(offset.value().all_finite(), "deform_conv2d: non-finite offsets");
  if (b) require<ShapeError>(b->numel() == cout, "deform_conv2d: bias size mismatch");
  const int64_t l = oh * ow;
  const int64_t cout_g = cout / g.groups;
  const int64_t ksize = cin_g * taps;

  auto sample_pos = [=](const T* off, int64_t k, int64_t oy, int64_t ox) {
    const int64_t i = k / kw, j = k % kw;
    const T py = static_cast<T>(oy * g.stride - g.padding + i * g.dilation) + off[(2 * k) * l + oy * ow + ox];
    const T px = static_cast<T>(ox * g.stride - g.padding + j * g.dilation) + off[(2 * k + 1) * l + oy * ow + ox];
    return std::pair<T, T>{py, px};
  };
  auto build_cols = [=](const T* xb, const T* off, std::vector<T>& cols) {
    cols.resize(static_cast<size_t>(cin * taps * l));
    for (int64_t c = 0; c < cin; ++c)
      for (int64_t k = 0; k < taps; ++k)
        for (int64_t oy = 0; oy < oh; ++oy)
          for (int64_t ox = 0; ox < ow; ++ox) {
            auto [py, px] = sample_pos(off, k, oy, ox);
            cols[(c * taps + k) * l + oy * ow + ox] = detail::bilinear_zero_pad(xb + c * h * wd, h, wd, py, px);
          }
  };

  Tensor<T> out({n, cout, oh, ow});
  std::vector<T> cols;
  for (int64_t bi = 0; bi < n; ++bi) {
    build_cols(x.value().data() + bi * cin * h * wd, offset.value().data() + bi * 2 * taps * l, cols);
    for (int64_t gi = 0; gi < g.groups; ++gi)
      detail::gemm<T>(false, false, cout_g, l, ksize, w.value().data() + gi * cout_g * ksize,
                      cols.data() + gi * ksize * l, out.data() + (bi * cout + gi * cout_g) * l, false);
    if (b)
      for (int64_t oc = 0; oc < cout; ++oc)
        for (int64_t i = 0; i < l; ++i) out[(bi * cout + oc) * l + i] += b->value()[oc];
  }

  auto body = [=](Node<T>& self) {
    const T* xv = self.inputs[0]->value.data();
    const T* ov = self.inputs[1]->value.data();
    const T* wv = self.inputs[2]->value.data();
    T* gx = grad_sink(self, 0);
    T* go = grad_sink(self, 1);
    T* gw = grad_sink(self, 2);
    T* gb = self.inputs.size() > 3 ? grad_sink(self, 3) : nullptr;
    const T* dy = self.grad.data();
    std::vector<T> cols, dcols(static_cast<size_t>(cin * taps * l));
    for (int64_t bi = 0; bi < n; ++bi) {
      const T* xb = xv + bi * cin * h * wd;
      const T* off = ov + bi * 2 * taps * l;
      const T* dyb = dy + bi * cout * l;
      if (gb)
        for (int64_t oc = 0; oc < cout; ++oc)
          for (int64_t i = 0; i < l; ++i) gb[oc] += dyb[oc * l + i];
      if (gw) {
        build_cols(xb, off, cols);
        for (int64_t gi = 0; gi < g.groups; ++gi)
          detail::gemm<T>(false, true, cout_g, ksize, l, dyb + gi * cout_g * l, cols.data() + gi * ksize * l,
                          gw + gi * cout_g * ksize, true);
      }
      if (!gx && !go) continue;
      for (int64_t gi = 0; gi < g.groups; ++gi)
        detail::gemm<T>(true, false, ksize, l, cout_g, wv + gi * cout_g * ksize, dyb + gi * cout_g * l,
                        dcols.data() + gi * ksize * l, false);
      T* gxb = gx ? gx + bi * cin * h * wd : nullptr;
      T* gob = go ? go + bi * 2 * taps * l : nullptr;
      for (int64_t c = 0; c < cin; ++c)
        for (int64_t k = 0; k < taps; ++k)
          for (int64_t oy = 0; oy < oh; ++oy)
            for (int64_t ox = 0; ox < ow; ++ox) {
              const T gval = dcols[(c * taps + k) * l + oy * ow + ox];
              auto [py, px] = sample_pos(off, k, oy, ox);
              auto [dpy, dpx] = detail::bilinear_backward(xb + c * h * wd, gxb ? gxb + c * h * wd : nullptr,
                                                          h, wd, py, px, gval);
              if (gob) {
                gob[(2 * k) * l + oy * ow + ox] += gval * dpy;
                gob[(2 * k + 1) * l + oy * ow + ox] += gval * dpx;
              }
            }
    }
  };
  if (b) return make_result<T>(std::move(out), {x, offset, w, *b}, body);
  return make_result<T>(std::move(out), {x, offset, w}, body);
}

}  // namespace codi
