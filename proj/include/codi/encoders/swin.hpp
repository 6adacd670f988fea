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

// Hierarchical shifted-window transformer. Names mirror the timm layout
// (patch_embed.*, layers.i.downsample.*, layers.i.blocks.j.*) so converted
// weights load by name. Stage outputs are tapped raw, with no extra norm.

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <string>

#include "codi/encoders/backbone.hpp"

namespace codi {

struct SwinConfig {
  int64_t embed_dim = 128;
  std::array<int, 4> depths{2, 2, 18, 2};
  std::array<int, 4> heads{4, 8, 16, 32};
  int64_t window = 12;
  int64_t mlp_ratio = 4;
  int64_t patch = 4;

  static SwinConfig base() { return {}; }
};

namespace detail {

// For each (query, key) pair in a win x win window, the row of the relative
// bias table it reads. The table is sized for `table_window`; smaller
// effective windows read its central part.
inline std::vector<int64_t> relative_position_index(int64_t win, int64_t table_window) {
  const int64_t L = win * win, side = 2 * table_window - 1;
  std::vector<int64_t> idx(static_cast<size_t>(L * L));
  for (int64_t a = 0; a < L; ++a)
    for (int64_t b = 0; b < L; ++b) {
      const int64_t dy = a / win - b / win + table_window - 1;
      const int64_t dx = a % win - b % win + table_window - 1;
      idx[static_cast<size_t>(a * L + b)] = dy * side + dx;
    }
  return idx;
}

// Additive attention mask for shifted windows: -100 between tokens that came
// from different regions before the cyclic shift. Shape [nW, 1, L, L].
template <typename T>
Tensor<T> shifted_window_mask(int64_t h, int64_t w, int64_t win, int64_t shift) {
  std::vector<int> region(static_cast<size_t>(h * w));
  auto band = [&](int64_t v, int64_t extent) { return v < extent - win ? 0 : (v < extent - shift ? 1 : 2); };
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) region[static_cast<size_t>(y * w + x)] = band(y, h) * 3 + band(x, w);
  const int64_t nwy = h / win, nwx = w / win, L = win * win;
  Tensor<T> mask({nwy * nwx, 1, L, L});
  for (int64_t wy = 0; wy < nwy; ++wy)
    for (int64_t wx = 0; wx < nwx; ++wx) {
      const int64_t wi = wy * nwx + wx;
      for (int64_t a = 0; a < L; ++a)
        for (int64_t b = 0; b < L; ++b) {
          const int ra = region[static_cast<size_t>((wy * win + a / win) * w + wx * win + a % win)];
          const int rb = region[static_cast<size_t>((wy * win + b / win) * w + wx * win + b % win)];
          mask[(wi * L + a) * L + b] = ra == rb ? T(0) : T(-100);
        }
    }
  return mask;
}

// [B, H, W, C] -> [B * nW, win*win, C]
template <typename T>
Var<T> window_partition(const Var<T>& x, int64_t win) {
  const int64_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  auto y = reshape(x, {b, h / win, win, w / win, win, c});
  y = permute(y, {0, 1, 3, 2, 4, 5});
  return reshape(y, {b * (h / win) * (w / win), win * win, c});
}

template <typename T>
Var<T> window_reverse(const Var<T>& windows, int64_t win, int64_t b, int64_t h, int64_t w) {
  const int64_t c = windows.dim(2);
  auto y = reshape(windows, {b, h / win, w / win, win, win, c});
  y = permute(y, {0, 1, 3, 2, 4, 5});
  return reshape(y, {b, h, w, c});
}

}  // namespace detail

template <typename T>
class WindowAttention : public nn::Module<T> {
 public:
  WindowAttention(int64_t dim, int64_t heads, int64_t window) : dim_(dim), heads_(heads), window_(window) {
    table_ = this->add_param("relative_position_bias_table", {(2 * window - 1) * (2 * window - 1), heads},
                             nn::InitRule::trunc_normal(0.02));
    qkv_ = &this->add_child("qkv", std::make_unique<nn::Linear<T>>(dim, 3 * dim, true, 0.02));
    proj_ = &this->add_child("proj", std::make_unique<nn::Linear<T>>(dim, dim, true, 0.02));
  }

  /// x: [Bw, L, C]; mask: [nW, 1, L, L] or empty.
  Var<T> forward(const Var<T>& x, int64_t win, const Tensor<T>& mask) const {
    const int64_t bw = x.dim(0), L = x.dim(1), hd = dim_ / heads_;
    auto qkv = permute(reshape(qkv_->forward(x), {bw, L, 3, heads_, hd}), {2, 0, 3, 1, 4});
    auto part = [&](int64_t i) { return reshape(slice(qkv, 0, i, 1), {bw, heads_, L, hd}); };
    auto q = scale(part(0), static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd))));
    auto attn = add_bcast(matmul(q, part(1), false, true), relative_bias(win));
    if (!mask.empty()) {
      const int64_t nw = mask.dim(0);
      attn = reshape(add_bcast(reshape(attn, {bw / nw, nw, heads_, L, L}), Var<T>(mask)), {bw, heads_, L, L});
    }
    auto out = matmul(softmax_last(attn), part(2));
    out = reshape(permute(out, {0, 2, 1, 3}), {bw, L, dim_});
    return proj_->forward(out);
  }

 private:
  // [heads, L, L] view of the bias table for an effective window `win`.
  Var<T> relative_bias(int64_t win) const {
    const auto rows = detail::relative_position_index(win, window_);
    const int64_t L = win * win;
    auto index = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(heads_ * L * L));
    for (int64_t h = 0; h < heads_; ++h)
      for (int64_t p = 0; p < L * L; ++p) (*index)[static_cast<size_t>(h * L * L + p)] = rows[static_cast<size_t>(p)] * heads_ + h;
    return gather(table_, index, {heads_, L, L});
  }

  int64_t dim_, heads_, window_;
  Var<T> table_;
  nn::Linear<T>*qkv_, *proj_;
};

template <typename T>
class SwinBlock : public nn::Module<T> {
 public:
  SwinBlock(int64_t dim, int64_t heads, int64_t window, int64_t mlp_ratio, bool shifted)
      : window_(window), shifted_(shifted) {
    norm1_ = &this->add_child("norm1", std::make_unique<nn::LayerNorm<T>>(dim));
    attn_ = &this->add_child("attn", std::make_unique<WindowAttention<T>>(dim, heads, window));
    norm2_ = &this->add_child("norm2", std::make_unique<nn::LayerNorm<T>>(dim));
    auto& mlp = this->add_child("mlp", std::make_unique<nn::Container<T>>());
    fc1_ = &mlp.template add<nn::Linear<T>>("fc1", dim, dim * mlp_ratio, true, 0.02);
    fc2_ = &mlp.template add<nn::Linear<T>>("fc2", dim * mlp_ratio, dim, true, 0.02);
  }

  /// x: [B, H, W, C]
  Var<T> forward(const Var<T>& x) const {
    const int64_t b = x.dim(0), h = x.dim(1), w = x.dim(2);
    // A stage no larger than the window collapses to one unshifted window.
    const int64_t win = std::min({window_, h, w});
    const int64_t shift = (shifted_ && win == window_ && std::min(h, w) > window_) ? window_ / 2 : 0;
    require<InputError>(h % win == 0 && w % win == 0, "feature map ", h, "x", w,
                        " is not divisible by attention window ", win);
    auto y = norm1_->forward(x);
    if (shift) y = roll(y, {-shift, -shift}, {1, 2});
    Tensor<T> mask = shift ? detail::shifted_window_mask<T>(h, w, win, shift) : Tensor<T>();
    y = attn_->forward(detail::window_partition(y, win), win, mask);
    y = detail::window_reverse(y, win, b, h, w);
    if (shift) y = roll(y, {shift, shift}, {1, 2});
    auto out = add(x, y);
    return add(out, fc2_->forward(gelu(fc1_->forward(norm2_->forward(out)))));
  }

 private:
  int64_t window_;
  bool shifted_;
  nn::LayerNorm<T>*norm1_, *norm2_;
  WindowAttention<T>* attn_;
  nn::Linear<T>*fc1_, *fc2_;
};

/// 2x2 neighbourhood concat + norm + linear reduction, [B,H,W,C] -> [B,H/2,W/2,2C].
template <typename T>
class PatchMerging : public nn::Module<T> {
 public:
  explicit PatchMerging(int64_t dim) : dim_(dim) {
    norm_ = &this->add_child("norm", std::make_unique<nn::LayerNorm<T>>(4 * dim));
    reduction_ = &this->add_child("reduction", std::make_unique<nn::Linear<T>>(4 * dim, 2 * dim, false, 0.02));
  }

  Var<T> forward(const Var<T>& x) const {
    const int64_t b = x.dim(0), h = x.dim(1), w = x.dim(2);
    require<InputError>(h % 2 == 0 && w % 2 == 0, "patch merging needs even spatial size, got ", h, "x", w);
    auto y = reshape(x, {b, h / 2, 2, w / 2, 2, dim_});
    y = reshape(permute(y, {0, 1, 3, 4, 2, 5}), {b, h / 2, w / 2, 4 * dim_});
    return reduction_->forward(norm_->forward(y));
  }

 private:
  int64_t dim_;
  nn::LayerNorm<T>* norm_;
  nn::Linear<T>* reduction_;
};

template <typename T>
class SwinTransformer : public Backbone<T> {
 public:
  explicit SwinTransformer(SwinConfig cfg = SwinConfig::base()) : cfg_(cfg) {
    auto& pe = this->add_child("patch_embed", std::make_unique<Group>());
    patch_proj_ = &pe.template add<nn::Conv2d<T>>(
        "proj", nn::ConvOptions{3, cfg.embed_dim, cfg.patch, cfg.patch, 0, 1, true, false});
    patch_norm_ = &pe.template add<nn::LayerNorm<T>>("norm", cfg.embed_dim);
    auto& layers = this->add_child("layers", std::make_unique<Group>());
    int64_t dim = cfg.embed_dim;
    for (int s = 0; s < 4; ++s) {
      auto& stage = layers.template add<Group>(std::to_string(s));
      Stage st;
      if (s > 0) {
        st.downsample = &stage.template add<PatchMerging<T>>("downsample", dim);
        dim *= 2;
      }
      auto& blocks = stage.template add<Group>("blocks");
      for (int j = 0; j < cfg.depths[s]; ++j)
        st.blocks.push_back(&blocks.template add<SwinBlock<T>>(std::to_string(j), dim, cfg.heads[s], cfg.window,
                                                               cfg.mlp_ratio, j % 2 == 1));
      stages_.push_back(std::move(st));
    }
  }

  BackboneKind kind() const override { return BackboneKind::kSwinBase; }

  std::vector<StageSpec> stages() const override {
    std::vector<StageSpec> out;
    for (int s = 0; s < 4; ++s) out.push_back({s + 1, cfg_.embed_dim << s, cfg_.patch << s});
    return out;
  }

  std::vector<Var<T>> forward_taps(const Var<T>& x) const override {
    auto y = permute(patch_proj_->forward(x), {0, 2, 3, 1});
    y = patch_norm_->forward(y);
    std::vector<Var<T>> taps;
    for (const Stage& st : stages_) {
      if (st.downsample) y = st.downsample->forward(y);
      for (const auto* blk : st.blocks) y = blk->forward(y);
      taps.push_back(permute(y, {0, 3, 1, 2}));
    }
    return taps;
  }

  const SwinConfig& config() const { return cfg_; }

 private:
  using Group = nn::Container<T>;
  struct Stage {
    PatchMerging<T>* downsample = nullptr;
    std::vector<SwinBlock<T>*> blocks;
  };

  SwinConfig cfg_;
  nn::Conv2d<T>* patch_proj_;
  nn::LayerNorm<T>* patch_norm_;
  std::vector<Stage> stages_;
};

}  // namespace codi
