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

#include <memory>
#include <optional>

#include "codi/autograd/conv.hpp"
#include "codi/autograd/deform_conv.hpp"
#include "codi/autograd/ops.hpp"
#include "codi/nn/module.hpp"

namespace codi::nn {

struct ConvOptions {
  int64_t in = 1;
  int64_t out = 1;
  int64_t kernel = 1;
  int64_t stride = 1;
  int64_t padding = 0;
  int64_t groups = 1;
  bool bias = true;
  /// Backbone convs use Kaiming-normal (fan_out); everything else the
  /// framework default uniform(fan_in).
  bool kaiming_fan_out = false;
};

template <typename T>
class Conv2d : public Module<T> {
 public:
  explicit Conv2d(const ConvOptions& o) : opt_(o) {
    const int64_t fan_in = (o.in / o.groups) * o.kernel * o.kernel;
    const int64_t fan_out = (o.out / o.groups) * o.kernel * o.kernel;
    weight_ = this->add_param("weight", {o.out, o.in / o.groups, o.kernel, o.kernel},
                              o.kaiming_fan_out ? InitRule::kaiming_normal_fan_out(fan_out)
                                                : InitRule::uniform_fan_in(fan_in));
    if (o.bias)
      bias_ = this->add_param("bias", {o.out},
                              o.kaiming_fan_out ? InitRule::zeros() : InitRule::uniform_fan_in(fan_in));
  }

  Var<T> forward(const Var<T>& x) const {
    require<ShapeError>(x.shape().size() == 4 && x.shape()[1] == opt_.in, "Conv2d expected ", opt_.in,
                        " input channels, got ", shape_str(x.shape()));
    return conv2d<T>(x, weight_, bias_ ? &*bias_ : nullptr, geometry());
  }

  Conv2dGeometry geometry() const { return {opt_.stride, opt_.padding, 1, opt_.groups}; }
  const ConvOptions& options() const { return opt_; }
  Var<T>& weight() { return weight_; }
  const Var<T>& weight() const { return weight_; }
  std::optional<Var<T>>& bias() { return bias_; }
  const std::optional<Var<T>>& bias() const { return bias_; }

 private:
  ConvOptions opt_;
  Var<T> weight_;
  std::optional<Var<T>> bias_;
};

/// 3x3 deformable convolution driven by an externally supplied offset field.
template <typename T>
class DeformConv2d : public Module<T> {
 public:
  explicit DeformConv2d(const ConvOptions& o) : opt_(o) {
    const int64_t fan_in = (o.in / o.groups) * o.kernel * o.kernel;
    weight_ = this->add_param("weight", {o.out, o.in / o.groups, o.kernel, o.kernel},
                              InitRule::uniform_fan_in(fan_in));
    if (o.bias) bias_ = this->add_param("bias", {o.out}, InitRule::uniform_fan_in(fan_in));
  }

  Var<T> forward(const Var<T>& x, const Var<T>& offsets) const {
    return deform_conv2d<T>(x, offsets, weight_, bias_ ? &*bias_ : nullptr,
                            {opt_.stride, opt_.padding, 1, opt_.groups});
  }

  int64_t taps() const { return opt_.kernel * opt_.kernel; }
  Var<T>& weight() { return weight_; }
  std::optional<Var<T>>& bias() { return bias_; }
  const std::optional<Var<T>>& bias() const { return bias_; }

 private:
  ConvOptions opt_;
  Var<T> weight_;
  std::optional<Var<T>> bias_;
};

template <typename T>
class BatchNorm2d : public Module<T> {
 public:
  explicit BatchNorm2d(int64_t channels, T momentum = T(0.1), T eps = T(1e-5))
      : momentum_(momentum), eps_(eps) {
    gamma_ = this->add_param("weight", {channels}, InitRule::constant(1.0), true);
    beta_ = this->add_param("bias", {channels}, InitRule::zeros(), true);
    running_mean_ = &this->add_buffer("running_mean", Tensor<T>({channels}, T(0)), true);
    running_var_ = &this->add_buffer("running_var", Tensor<T>({channels}, T(1)), true);
  }

  /// Training mode mutates the running statistics, so it must not run
  /// concurrently; eval mode is read-only.
  Var<T> forward(const Var<T>& x) const {
    return batch_norm2d<T>(x, gamma_, beta_, running_mean_, running_var_, this->is_training(), momentum_,
                           eps_);
  }

  Var<T>& weight() { return gamma_; }
  Var<T>& bias() { return beta_; }
  Tensor<T>& running_mean() { return *running_mean_; }
  Tensor<T>& running_var() { return *running_var_; }
  T momentum() const { return momentum_; }
  void set_momentum(T m) { momentum_ = m; }

 private:
  T momentum_, eps_;
  Var<T> gamma_, beta_;
  Tensor<T>* running_mean_ = nullptr;
  Tensor<T>* running_var_ = nullptr;
};

template <typename T>
class Linear : public Module<T> {
 public:
  Linear(int64_t in, int64_t out, bool bias = true, std::optional<double> trunc_std = std::nullopt) {
    weight_ = this->add_param("weight", {out, in},
                              trunc_std ? InitRule::trunc_normal(*trunc_std) : InitRule::uniform_fan_in(in));
    if (bias) bias_ = this->add_param("bias", {out}, trunc_std ? InitRule::zeros() : InitRule::uniform_fan_in(in));
  }

  Var<T> forward(const Var<T>& x) const { return linear<T>(x, weight_, bias_ ? &*bias_ : nullptr); }

  Var<T>& weight() { return weight_; }

 private:
  Var<T> weight_;
  std::optional<Var<T>> bias_;
};

template <typename T>
class LayerNorm : public Module<T> {
 public:
  explicit LayerNorm(int64_t channels, T eps = T(1e-5)) : eps_(eps) {
    gamma_ = this->add_param("weight", {channels}, InitRule::constant(1.0), true);
    beta_ = this->add_param("bias", {channels}, InitRule::zeros(), true);
  }

  Var<T> forward(const Var<T>& x) const { return layer_norm_last<T>(x, gamma_, beta_, eps_); }

 private:
  T eps_;
  Var<T> gamma_, beta_;
};

/// Name-only grouping node, e.g. `downsample.0` or `layers.2.blocks`.
template <typename T>
class Container : public Module<T> {
 public:
  template <typename M, typename... Args>
  M& add(const std::string& name, Args&&... args) {
    return this->add_child(name, std::make_unique<M>(std::forward<Args>(args)...));
  }
};

}  // namespace codi::nn
