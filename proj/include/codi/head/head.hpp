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

// Multi-stage fusion and patch-weighted quality regression.

#include <algorithm>
#include <memory>
#include <vector>

#include "codi/nn/layers.hpp"

namespace codi {

/// Average-pools every map to the smallest grid among them and concatenates
/// along channels. Channel counts may differ.
template <typename T>
Var<T> pool_concat(const std::vector<Var<T>>& maps) {
  require<ShapeError>(!maps.empty(), "cannot fuse an empty list of feature maps");
  const Shape& first = maps.front().shape();
  require<ShapeError>(first.size() == 4, "feature maps must be [N,C,H,W]");
  int64_t oh = first[2], ow = first[3];
  for (const auto& m : maps) {
    require<ShapeError>(m.shape().size() == 4 && m.dim(0) == first[0], "feature maps disagree on batch size: ",
                        shape_str(m.shape()), " vs ", shape_str(first));
    if (m.dim(2) * m.dim(3) < oh * ow) {
      oh = m.dim(2);
      ow = m.dim(3);
    }
  }
  if (maps.size() == 1) return maps.front();
  std::vector<Var<T>> pooled;
  pooled.reserve(maps.size());
  for (const auto& m : maps) pooled.push_back(adaptive_avg_pool2d(m, oh, ow));
  return concat(pooled, 1);
}

/// Fuses per-stage interaction features (k maps of D channels, ordered by
/// stage) into [N, kD, Hc, Wc] on the coarsest grid.
template <typename T>
Var<T> fuse_pyramid(const std::vector<Var<T>>& stages) {
  require<ShapeError>(!stages.empty(), "cannot fuse an empty list of stage features");
  for (const auto& s : stages)
    require<ShapeError>(s.shape().size() == 4 && s.dim(1) == stages.front().dim(1),
                        "stage features disagree on D: ", shape_str(s.shape()), " vs ",
                        shape_str(stages.front().shape()));
  return pool_concat(stages);
}

/// q[n] = sum_l s[n,l] w[n,l] / sum_l w[n,l] for s, w of shape [N, L].
/// Weights must be nonnegative with a positive sum.
template <typename T>
Var<T> weighted_mean(const Var<T>& s, const Var<T>& w, T min_total = T(1e-12)) {
  require<ShapeError>(s.shape() == w.shape() && s.shape().size() == 2, "weighted_mean needs equal [N,L] shapes, got ",
                      shape_str(s.shape()), " and ", shape_str(w.shape()));
  const int64_t n = s.dim(0), L = s.dim(1);
  Tensor<T> q({n});
  auto totals = std::make_shared<std::vector<T>>(static_cast<size_t>(n));
  for (int64_t b = 0; b < n; ++b) {
    T num = 0, den = 0;
    for (int64_t l = 0; l < L; ++l) {
      num += s.value()[b * L + l] * w.value()[b * L + l];
      den += w.value()[b * L + l];
    }
    if (!(den > min_total)) raise<DegenerateWeightsError>("patch weights sum to ", den, " for sample ", b);
    (*totals)[static_cast<size_t>(b)] = den;
    q[b] = num / den;
  }
  auto out = make_result<T>(std::move(q), {s, w}, [totals, L](Node<T>& self) {
    const T* sv = self.inputs[0]->value.data();
    const T* wv = self.inputs[1]->value.data();
    T* gs = grad_sink(self, 0);
    T* gw = grad_sink(self, 1);
    for (int64_t b = 0; b < self.value.numel(); ++b) {
      const T g = self.grad[b] / (*totals)[static_cast<size_t>(b)];
      const T q = self.value[b];
      for (int64_t l = 0; l < L; ++l) {
        if (gs) gs[b * L + l] += g * wv[b * L + l];
        if (gw) gw[b * L + l] += g * (sv[b * L + l] - q);
      }
    }
  });
  return out;
}

/// Per-location score and weight branches (kD -> kD/4 -> 1, GELU hidden),
/// combined by weighted_mean. The weight branch ends in a sigmoid so weights
/// are in (0, 1).
template <typename T>
class PatchWeightedHead : public nn::Module<T> {
 public:
  explicit PatchWeightedHead(int64_t in_channels) : in_(in_channels), hidden_(std::max<int64_t>(1, in_channels / 4)) {
    using nn::ConvOptions;
    s1_ = &this->add_child("score_fc1", std::make_unique<nn::Conv2d<T>>(ConvOptions{in_, hidden_, 1}));
    s2_ = &this->add_child("score_fc2", std::make_unique<nn::Conv2d<T>>(ConvOptions{hidden_, 1, 1}));
    w1_ = &this->add_child("weight_fc1", std::make_unique<nn::Conv2d<T>>(ConvOptions{in_, hidden_, 1}));
    w2_ = &this->add_child("weight_fc2", std::make_unique<nn::Conv2d<T>>(ConvOptions{hidden_, 1, 1}));
  }

  int64_t hidden_width() const { return hidden_; }

  struct Output {
    Var<T> quality;  // [N]
    Var<T> scores;   // [N, L]
    Var<T> weights;  // [N, L]
  };

  Output forward_parts(const Var<T>& g) const {
    require<ShapeError>(g.shape().size() == 4 && g.dim(1) == in_, "head expects ", in_, " channels, got ",
                        shape_str(g.shape()));
    require<InputError>(g.value().all_finite(), "fused feature contains non-finite values");
    const int64_t n = g.dim(0), L = g.dim(2) * g.dim(3);
    auto s = reshape(s2_->forward(gelu(s1_->forward(g))), {n, L});
    auto w = reshape(sigmoid(w2_->forward(gelu(w1_->forward(g)))), {n, L});
    return {weighted_mean(s, w), s, w};
  }

  Var<T> forward(const Var<T>& g) const { return forward_parts(g).quality; }

 private:
  int64_t in_, hidden_;
  nn::Conv2d<T>*s1_, *s2_, *w1_, *w2_;
};

}  // namespace codi
