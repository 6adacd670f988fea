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

// AdamW with decoupled weight decay and the cosine-annealing schedule.

#include <cmath>
#include <numbers>
#include <vector>

#include <nlohmann/json.hpp>

#include "codi/nn/module.hpp"

namespace codi {

/// lr(t) = eta_min + (lr0 - eta_min)(1 + cos(pi t / t_max)) / 2, closed form.
struct CosineSchedule {
  double lr0 = 1e-4;
  double eta_min = 0.0;
  int64_t t_max = 50;

  double at(int64_t t) const {
    return eta_min + 0.5 * (lr0 - eta_min) * (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(t_max)));
  }
};

template <typename T>
class AdamW {
 public:
  struct Options {
    double weight_decay = 1e-5;
    double beta1 = 0.9, beta2 = 0.999;
    double eps = 1e-8;
  };

  AdamW(std::vector<nn::NamedParam<T>> params, Options opt) : params_(std::move(params)), opt_(opt) {
    for (const auto& p : params_) {
      m_.emplace_back(p.var.shape());
      v_.emplace_back(p.var.shape());
    }
  }

  int64_t steps() const { return step_; }

  void zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
  }

  /// Global L2 norm of the current gradients.
  double grad_norm() const {
    double s = 0;
    for (const auto& p : params_)
      if (p.var.has_grad())
        for (T g : p.var.grad().values()) s += static_cast<double>(g) * g;
    return std::sqrt(s);
  }

  /// Rescales gradients so their global norm is at most max_norm.
  double clip_grad_norm(double max_norm) {
    const double n = grad_norm();
    if (n > max_norm && n > 0) {
      const T k = static_cast<T>(max_norm / n);
      for (auto& p : params_)
        if (p.var.has_grad())
          for (T& g : p.var.mutable_grad().values()) g *= k;
    }
    return n;
  }

  /// Parameters without a gradient this step are left untouched, including
  /// weight decay.
  void step(double lr) {
    ++step_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(step_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i].var;
      if (!p.has_grad()) continue;
      T* w = p.mutable_value().data();
      const T* g = p.grad().data();
      T* m = m_[i].data();
      T* v = v_[i].data();
      for (int64_t k = 0; k < p.numel(); ++k) {
        const double gk = g[k];
        const double mk = opt_.beta1 * m[k] + (1 - opt_.beta1) * gk;
        const double vk = opt_.beta2 * v[k] + (1 - opt_.beta2) * gk * gk;
        m[k] = static_cast<T>(mk);
        v[k] = static_cast<T>(vk);
        double wk = w[k] * (1.0 - lr * opt_.weight_decay);
        wk -= lr * (mk / bc1) / (std::sqrt(vk / bc2) + opt_.eps);
        w[k] = static_cast<T>(wk);
      }
    }
  }

 private:
  std::vector<nn::NamedParam<T>> params_;
  Options opt_;
  std::vector<Tensor<T>> m_, v_;
  int64_t step_ = 0;
};

}  // namespace codi
