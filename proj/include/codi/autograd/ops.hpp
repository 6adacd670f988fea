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

// Elementwise, shape and dense linear-algebra ops with gradients.

#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

#include "codi/autograd/gemm.hpp"
#include "codi/autograd/variable.hpp"

namespace codi {

namespace detail {

inline std::vector<int64_t> contiguous_strides(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
  return st;
}

/// Visits every element of `out` in row-major order, passing the flat output
/// index and the flat source index under `src_strides` (0 marks broadcast).
template <typename F>
void for_each_strided(const Shape& out, const std::vector<int64_t>& src_strides, F&& f) {
  const int r = static_cast<int>(out.size());
  const int64_t n = shape_numel(out);
  if (n == 0) return;
  if (r == 0) {
    f(int64_t{0}, int64_t{0});
    return;
  }
  const int64_t inner = out[r - 1];
  const int64_t inner_stride = src_strides[r - 1];
  std::vector<int64_t> idx(r, 0);
  int64_t base = 0;
  for (int64_t o = 0; o < n; o += inner) {
    for (int64_t j = 0; j < inner; ++j) f(o + j, base + j * inner_stride);
    for (int d = r - 2; d >= 0; --d) {
      base += src_strides[d];
      if (++idx[d] < out[d]) break;
      base -= src_strides[d] * out[d];
      idx[d] = 0;
    }
  }
}

/// Strides of `b` viewed as broadcast against `out` (right-aligned).
inline std::vector<int64_t> broadcast_strides(const Shape& out, const Shape& b) {
  require<ShapeError>(b.size() <= out.size(), "cannot broadcast ", shape_str(b), " to ",
                      shape_str(out));
  std::vector<int64_t> st(out.size(), 0);
  auto bst = contiguous_strides(b);
  const size_t off = out.size() - b.size();
  for (size_t i = 0; i < b.size(); ++i) {
    if (b[i] == out[off + i]) {
      st[off + i] = bst[i];
    } else {
      require<ShapeError>(b[i] == 1, "cannot broadcast ", shape_str(b), " to ", shape_str(out));
    }
  }
  return st;
}

template <typename T>
void check_same(const Var<T>& a, const Var<T>& b, const char* op) {
  require<ShapeError>(a.shape() == b.shape(), op, ": shape mismatch ", shape_str(a.shape()), " vs ",
                      shape_str(b.shape()));
}

}  // namespace detail

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::check_same(a, b, "add");
  Tensor<T> out = a.value();
  out += b.value();
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    const int64_t n = self.grad.numel();
    for (size_t k = 0; k < 2; ++k)
      if (T* g = grad_sink(self, k))
        for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::check_same(a, b, "sub");
  Tensor<T> out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    const int64_t n = self.grad.numel();
    if (T* g = grad_sink(self, 0))
      for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i];
    if (T* g = grad_sink(self, 1))
      for (int64_t i = 0; i < n; ++i) g[i] -= self.grad[i];
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::check_same(a, b, "mul");
  Tensor<T> out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    const int64_t n = self.grad.numel();
    if (T* g = grad_sink(self, 0))
      for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i] * bv[i];
    if (T* g = grad_sink(self, 1))
      for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i] * av[i];
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= s;
  return make_result<T>(std::move(out), {a}, [s](Node<T>& self) {
    if (T* g = grad_sink(self, 0))
      for (int64_t i = 0; i < self.grad.numel(); ++i) g[i] += s * self.grad[i];
  });
}

/// a + b with b broadcast (numpy rules, right-aligned) to a's shape.
template <typename T>
Var<T> add_bcast(const Var<T>& a, const Var<T>& b) {
  auto st = std::make_shared<std::vector<int64_t>>(detail::broadcast_strides(a.shape(), b.shape()));
  Tensor<T> out = a.value();
  const T* bv = b.value().data();
  detail::for_each_strided(out.shape(), *st, [&](int64_t o, int64_t i) { out[o] += bv[i]; });
  return make_result<T>(std::move(out), {a, b}, [st](Node<T>& self) {
    if (T* g = grad_sink(self, 0))
      for (int64_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i];
    if (T* g = grad_sink(self, 1))
      detail::for_each_strided(self.grad.shape(), *st,
                               [&](int64_t o, int64_t i) { g[i] += self.grad[o]; });
  });
}

/// a * b with b broadcast to a's shape; used for spatial gates.
template <typename T>
Var<T> mul_bcast(const Var<T>& a, const Var<T>& b) {
  auto st = std::make_shared<std::vector<int64_t>>(detail::broadcast_strides(a.shape(), b.shape()));
  Tensor<T> out = a.value();
  const T* bv = b.value().data();
  detail::for_each_strided(out.shape(), *st, [&](int64_t o, int64_t i) { out[o] *= bv[i]; });
  return make_result<T>(std::move(out), {a, b}, [st](Node<T>& self) {
    const T* av = self.inputs[0]->value.data();
    const T* bv = self.inputs[1]->value.data();
    T* ga = grad_sink(self, 0);
    T* gb = grad_sink(self, 1);
    detail::for_each_strided(self.grad.shape(), *st, [&](int64_t o, int64_t i) {
      if (ga) ga[o] += self.grad[o] * bv[i];
      if (gb) gb[i] += self.grad[o] * av[o];
    });
  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  return make_result<T>(std::move(out), {a}, [](Node<T>& self) {
    if (T* g = grad_sink(self, 0))
      for (int64_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Var<T> permute(const Var<T>& a, const std::vector<int>& perm) {
  const Shape& in = a.shape();
  require<ShapeError>(perm.size() == in.size(), "permute rank mismatch");
  auto in_st = detail::contiguous_strides(in);
  Shape out_shape(in.size());
  auto st = std::make_shared<std::vector<int64_t>>(in.size());
  for (size_t d = 0; d < perm.size(); ++d) {
    out_shape[d] = in[perm[d]];
    (*st)[d] = in_st[perm[d]];
  }
  Tensor<T> out(out_shape);
  const T* src = a.value().data();
  detail::for_each_strided(out_shape, *st, [&](int64_t o, int64_t i) { out[o] = src[i]; });
  return make_result<T>(std::move(out), {a}, [st](Node<T>& self) {
    if (T* g = grad_sink(self, 0))
      detail::for_each_strided(self.grad.shape(), *st,
                               [&](int64_t o, int64_t i) { g[i] += self.grad[o]; });
  });
}

/// out[o] = a.flat[index[o]]; gradients scatter-add back.
template <typename T>
Var<T> gather(const Var<T>& a, std::shared_ptr<const std::vector<int64_t>> index, Shape out_shape) {
  require<ShapeError>(static_cast<int64_t>(index->size()) == shape_numel(out_shape),
                      "gather index size does not match output shape");
  Tensor<T> out(std::move(out_shape));
  const T* src = a.value().data();
  for (size_t o = 0; o < index->size(); ++o) out[static_cast<int64_t>(o)] = src[(*index)[o]];
  return make_result<T>(std::move(out), {a}, [index](Node<T>& self) {
    if (T* g = grad_sink(self, 0))
      for (size_t o = 0; o < index->size(); ++o) g[(*index)[o]] += self.grad[static_cast<int64_t>(o)];
  });
}

/// Cyclic shift along the given dims (torch.roll semantics).
template <typename T>
Var<T> roll(const Var<T>& a, const std::vector<int64_t>& shifts, const std::vector<int>& dims) {
  const Shape& s = a.shape();
  auto st = detail::contiguous_strides(s);
  auto index = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(a.numel()));
  std::vector<int64_t> shift_of(s.size(), 0);
  for (size_t k = 0; k < dims.size(); ++k) shift_of[dims[k]] = shifts[k];
  std::vector<int64_t> idx(s.size(), 0);
  for (int64_t o = 0; o < a.numel(); ++o) {
    int64_t src = 0;
    for (size_t d = 0; d < s.size(); ++d) {
      int64_t j = ((idx[d] - shift_of[d]) % s[d] + s[d]) % s[d];
      src += j * st[d];
    }
    (*index)[o] = src;
    for (int d = static_cast<int>(s.size()) - 1; d >= 0; --d) {
      if (++idx[d] < s[d]) break;
      idx[d] = 0;
    }
  }
  return gather<T>(a, index, s);
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, int dim) {
  require<ShapeError>(!parts.empty(), "concat of empty list");
  Shape shape = parts[0].shape();
  const int r = static_cast<int>(shape.size());
  if (dim < 0) dim += r;
  int64_t total = 0;
  for (const auto& p : parts) {
    require<ShapeError>(static_cast<int>(p.shape().size()) == r, "concat rank mismatch");
    for (int d = 0; d < r; ++d)
      if (d != dim)
        require<ShapeError>(p.shape()[d] == shape[d], "concat: mismatched dim ", d, " ",
                            shape_str(p.shape()), " vs ", shape_str(shape));
    total += p.shape()[dim];
  }
  shape[dim] = total;
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < dim; ++d) outer *= shape[d];
  for (int d = dim + 1; d < r; ++d) inner *= shape[d];
  Tensor<T> out(shape);
  auto extents = std::make_shared<std::vector<int64_t>>();
  int64_t off = 0;
  for (const auto& p : parts) {
    const int64_t len = p.shape()[dim] * inner;
    extents->push_back(len);
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(p.value().data() + o * len, len, out.data() + o * total * inner + off);
    off += len;
  }
  return make_result<T>(std::move(out), parts, [extents, outer, total, inner](Node<T>& self) {
    int64_t off = 0;
    for (size_t k = 0; k < extents->size(); ++k) {
      const int64_t len = (*extents)[k];
      if (T* g = grad_sink(self, k))
        for (int64_t o = 0; o < outer; ++o) {
          const T* src = self.grad.data() + o * total * inner + off;
          for (int64_t i = 0; i < len; ++i) g[o * len + i] += src[i];
        }
      off += len;
    }
  });
}

/// Contiguous slice [start, start+len) along `dim`.
template <typename T>
Var<T> slice(const Var<T>& a, int dim, int64_t start, int64_t len) {
  Shape shape = a.shape();
  const int r = static_cast<int>(shape.size());
  if (dim < 0) dim += r;
  require<ShapeError>(start >= 0 && len >= 0 && start + len <= shape[dim], "slice out of range");
  const int64_t full = shape[dim];
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < dim; ++d) outer *= shape[d];
  for (int d = dim + 1; d < r; ++d) inner *= shape[d];
  shape[dim] = len;
  Tensor<T> out(shape);
  for (int64_t o = 0; o < outer; ++o)
    std::copy_n(a.value().data() + (o * full + start) * inner, len * inner,
                out.data() + o * len * inner);
  return make_result<T>(std::move(out), {a}, [=](Node<T>& self) {
    if (T* g = grad_sink(self, 0))
      for (int64_t o = 0; o < outer; ++o) {
        T* dst = g + (o * full + start) * inner;
        const T* src = self.grad.data() + o * len * inner;
        for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
      }
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T s = 0;
  for (T v : a.value().values()) s += v;
  return make_result<T>(Tensor<T>({1}, s), {a}, [](Node<T>& self) {
    if (T* g = grad_sink(self, 0)) {
      const T go = self.grad[0];
      for (int64_t i = 0; i < self.inputs[0]->value.numel(); ++i) g[i] += go;
    }
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

namespace detail {

template <typename T, typename Fwd, typename Deriv>
Var<T> unary(const Var<T>& a, Fwd fwd, Deriv deriv) {
  Tensor<T> out(a.shape());
  const T* x = a.value().data();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = fwd(x[i]);
  return make_result<T>(std::move(out), {a}, [deriv](Node<T>& self) {
    if (T* g = grad_sink(self, 0)) {
      const T* x = self.inputs[0]->value.data();
      const T* y = self.value.data();
      for (int64_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i] * deriv(x[i], y[i]);
    }
  });
}

}  // namespace detail

template <typename T>
Var<T> relu(const Var<T>& a) {
  return detail::unary(
      a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  return detail::unary(
      a, [](T x) { return T(1) / (T(1) + std::exp(-x)); }, [](T, T y) { return y * (T(1) - y); });
}

/// Exact (erf-based) GELU.
template <typename T>
Var<T> gelu(const Var<T>& a) {
  constexpr T inv_sqrt2 = T(0.70710678118654752440);
  constexpr T inv_sqrt_2pi = T(0.39894228040143267794);
  return detail::unary(
      a, [](T x) { return T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2)); },
      [](T x, T) {
        return T(0.5) * (T(1) + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(T(-0.5) * x * x);
      });
}

template <typename T>
Var<T> softmax_last(const Var<T>& a) {
  const int64_t n = a.shape().back();
  const int64_t rows = a.numel() / n;
  Tensor<T> out(a.shape());
  const T* x = a.value().data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = x + r * n;
    T* yr = out.data() + r * n;
    T m = *std::max_element(xr, xr + n);
    T s = 0;
    for (int64_t j = 0; j < n; ++j) s += (yr[j] = std::exp(xr[j] - m));
    for (int64_t j = 0; j < n; ++j) yr[j] /= s;
  }
  return make_result<T>(std::move(out), {a}, [n, rows](Node<T>& self) {
    if (T* g = grad_sink(self, 0))
      for (int64_t r = 0; r < rows; ++r) {
        const T* y = self.value.data() + r * n;
        const T* gy = self.grad.data() + r * n;
        T dot = 0;
        for (int64_t j = 0; j < n; ++j) dot += gy[j] * y[j];
        for (int64_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (gy[j] - dot);
      }
  });
}

/// LayerNorm over the last dimension with affine gamma/beta of that size.
template <typename T>
Var<T> layer_norm_last(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
  const int64_t c = x.shape().back();
  require<ShapeError>(gamma.numel() == c && beta.numel() == c, "layer_norm affine size mismatch");
  const int64_t rows = x.numel() / c;
  Tensor<T> out(x.shape());
  auto xhat = std::make_shared<std::vector<T>>(static_cast<size_t>(x.numel()));
  auto rstd = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
  const T* xv = x.value().data();
  const T* gv = gamma.value().data();
  const T* bv = beta.value().data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = xv + r * c;
    T mu = 0;
    for (int64_t j = 0; j < c; ++j) mu += xr[j];
    mu /= static_cast<T>(c);
    T var = 0;
    for (int64_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<T>(c);
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (int64_t j = 0; j < c; ++j) {
      const T h = (xr[j] - mu) * rs;
      (*xhat)[r * c + j] = h;
      out[r * c + j] = h * gv[j] + bv[j];
    }
  }
  return make_result<T>(std::move(out), {x, gamma, beta}, [=](Node<T>& self) {
    const T* gv = self.inputs[1]->value.data();
    T* gx = grad_sink(self, 0);
    T* gg = grad_sink(self, 1);
    T* gb = grad_sink(self, 2);
    for (int64_t r = 0; r < rows; ++r) {
      const T* dy = self.grad.data() + r * c;
      const T* h = xhat->data() + r * c;
      T s1 = 0, s2 = 0;
      for (int64_t j = 0; j < c; ++j) {
        const T dh = dy[j] * gv[j];
        s1 += dh;
        s2 += dh * h[j];
        if (gg) gg[j] += dy[j] * h[j];
        if (gb) gb[j] += dy[j];
      }
      if (gx) {
        const T inv_c = T(1) / static_cast<T>(c);
        for (int64_t j = 0; j < c; ++j)
          gx[r * c + j] += (*rstd)[r] * (dy[j] * gv[j] - inv_c * s1 - h[j] * inv_c * s2);
      }
    }
  });
}

/// y = x W^T + b over the last dimension; W is [out, in], b may be empty.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>* b) {
  const int64_t in = x.shape().back();
  require<ShapeError>(w.shape().size() == 2 && w.shape()[1] == in, "linear: weight ",
                      shape_str(w.shape()), " incompatible with input ", shape_str(x.shape()));
  const int64_t out_f = w.shape()[0];
  const int64_t rows = x.numel() / in;
  Shape os = x.shape();
  os.back() = out_f;
  Tensor<T> out(os);
  detail::gemm<T>(false, true, rows, out_f, in, x.value().data(), w.value().data(), out.data(), false);
  if (b) {
    const T* bv = b->value().data();
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t j = 0; j < out_f; ++j) out[r * out_f + j] += bv[j];
  }
  auto body = [=](Node<T>& self) {
    const T* xv = self.inputs[0]->value.data();
    const T* wv = self.inputs[1]->value.data();
    if (T* g = grad_sink(self, 0)) detail::gemm<T>(false, false, rows, in, out_f, self.grad.data(), wv, g, true);
    if (T* g = grad_sink(self, 1)) detail::gemm<T>(true, false, out_f, in, rows, self.grad.data(), xv, g, true);
    if (self.inputs.size() > 2)
      if (T* g = grad_sink(self, 2))
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < out_f; ++j) g[j] += self.grad[r * out_f + j];
  };
  if (b) return make_result<T>(std::move(out), {x, w, *b}, body);
  return make_result<T>(std::move(out), {x, w}, body);
}

/// Batched matmul over identical leading dims: op(a)[..., m, k] x op(b)[..., k, n].
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool trans_a = false, bool trans_b = false) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  require<ShapeError>(as.size() >= 2 && as.size() == bs.size(), "matmul rank mismatch");
  for (size_t d = 0; d + 2 < as.size(); ++d)
    require<ShapeError>(as[d] == bs[d], "matmul batch dims mismatch");
  const size_t r = as.size();
  const int64_t m = trans_a ? as[r - 1] : as[r - 2];
  const int64_t k = trans_a ? as[r - 2] : as[r - 1];
  const int64_t kb = trans_b ? bs[r - 1] : bs[r - 2];
  const int64_t n = trans_b ? bs[r - 2] : bs[r - 1];
  require<ShapeError>(k == kb, "matmul inner dims mismatch ", shape_str(as), " x ", shape_str(bs));
  const int64_t batch = a.numel() / (m * k);
  Shape os(as.begin(), as.end() - 2);
  os.push_back(m);
  os.push_back(n);
  Tensor<T> out(os);
  for (int64_t i = 0; i < batch; ++i)
    detail::gemm<T>(trans_a, trans_b, m, n, k, a.value().data() + i * m * k,
                    b.value().data() + i * k * n, out.data() + i * m * n, false);
  return make_result<T>(std::move(out), {a, b}, [=](Node<T>& self) {
    const T* av = self.inputs[0]->value.data();
    const T* bv = self.inputs[1]->value.data();
    T* ga = grad_sink(self, 0);
    T* gb = grad_sink(self, 1);
    for (int64_t i = 0; i < batch; ++i) {
      const T* dy = self.grad.data() + i * m * n;
      const T* ai = av + i * m * k;
      const T* bi = bv + i * k * n;
      // dA = dY op(B)^T (stored per trans_a), dB = op(A)^T dY (stored per trans_b).
      if (ga) {
        if (!trans_a)
          detail::gemm<T>(false, !trans_b, m, k, n, dy, bi, ga + i * m * k, true);
        else
          detail::gemm<T>(trans_b, true, k, m, n, bi, dy, ga + i * m * k, true);
      }
      if (gb) {
        if (!trans_b)
          detail::gemm<T>(!trans_a, false, k, n, m, ai, dy, gb + i * k * n, true);
        else
          detail::gemm<T>(true, trans_a, n, k, m, dy, ai, gb + i * k * n, true);
      }
    }
  });
}

/// Mean squared error over all elements.
template <typename T>
Var<T> mse_loss(const Var<T>& pred, const Var<T>& target) {
  detail::check_same(pred, target, "mse_loss");
  const int64_t n = pred.numel();
  T s = 0;
  for (int64_t i = 0; i < n; ++i) {
    const T d = pred.value()[i] - target.value()[i];
    s += d * d;
  }
  return make_result<T>(Tensor<T>({1}, s / static_cast<T>(n)), {pred, target}, [n](Node<T>& self) {
    const T go = self.grad[0] * T(2) / static_cast<T>(n);
    const auto& p = self.inputs[0]->value;
    const auto& t = self.inputs[1]->value;
    if (T* g = grad_sink(self, 0))
      for (int64_t i = 0; i < n; ++i) g[i] += go * (p[i] - t[i]);
    if (T* g = grad_sink(self, 1))
      for (int64_t i = 0; i < n; ++i) g[i] -= go * (p[i] - t[i]);
  });
}

}  // namespace codi
