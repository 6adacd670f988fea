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

#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "codi/autograd/variable.hpp"
#include "codi/core/rng.hpp"

namespace codi::nn {

/// How a parameter is (re)initialized. Each parameter draws from its own
/// stream seeded by (model seed, full parameter name), so adding or removing
/// unrelated modules never perturbs the values of the others.
struct InitRule {
  enum class Kind { kZeros, kConstant, kUniformFanIn, kKaimingNormalFanOut, kTruncNormal };
  Kind kind = Kind::kZeros;
  double value = 0.0;   // constant value, or std for kTruncNormal
  int64_t fan = 1;      // fan_in or fan_out

  static InitRule zeros() { return {Kind::kZeros, 0.0, 1}; }
  static InitRule constant(double v) { return {Kind::kConstant, v, 1}; }
  /// PyTorch's default for conv/linear weights and biases: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static InitRule uniform_fan_in(int64_t fan_in) { return {Kind::kUniformFanIn, 0.0, fan_in}; }
  static InitRule kaiming_normal_fan_out(int64_t fan_out) { return {Kind::kKaimingNormalFanOut, 0.0, fan_out}; }
  static InitRule trunc_normal(double std) { return {Kind::kTruncNormal, std, 1}; }
};

template <typename T>
struct NamedParam {
  std::string name;
  Var<T> var;
  bool is_norm = false;
};

template <typename T>
struct NamedBuffer {
  std::string name;
  Tensor<T>* tensor = nullptr;
  bool is_norm = false;
};

template <typename T>
class Module {
 public:
  Module() = default;
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  std::vector<NamedParam<T>> named_parameters(const std::string& prefix = "") const {
    std::vector<NamedParam<T>> out;
    collect_params(prefix, out);
    return out;
  }

  std::vector<NamedBuffer<T>> named_buffers(const std::string& prefix = "") {
    std::vector<NamedBuffer<T>> out;
    collect_buffers(prefix, out);
    return out;
  }

  int64_t parameter_count() const {
    int64_t n = 0;
    for (const auto& p : named_parameters()) n += p.var.numel();
    return n;
  }

  virtual void train(bool on) {
    training_ = on;
    for (auto& c : children_) c.second->train(on);
  }
  bool is_training() const { return training_; }

  /// Re-draws every parameter and resets every buffer to its initial value.
  void reset_parameters(uint64_t seed, const std::string& prefix = "") {
    for (auto& p : params_) {
      const std::string full = join(prefix, p.name);
      Rng rng(mix_seed(seed, fnv1a(full)));
      fill_init(p.var.mutable_value(), p.rule, rng);
    }
    for (auto& b : buffers_) *b.tensor = b.initial;
    for (auto& c : children_) c.second->reset_parameters(seed, join(prefix, c.first));
  }

  /// Pre-order walk over this module and all descendants.
  template <typename F>
  void visit(F&& f, const std::string& prefix = "") {
    f(prefix, *this);
    for (auto& c : children_) c.second->visit(f, join(prefix, c.first));
  }

  Module* child(const std::string& name) const {
    for (const auto& c : children_)
      if (c.first == name) return c.second.get();
    return nullptr;
  }

 protected:
  /// Returns a handle sharing the registered parameter's storage.
  Var<T> add_param(const std::string& name, Shape shape, InitRule rule, bool is_norm = false) {
    params_.push_back({name, Var<T>(Tensor<T>(std::move(shape)), true), rule, is_norm});
    Rng rng(mix_seed(0, fnv1a(name)));
    fill_init(params_.back().var.mutable_value(), rule, rng);
    return params_.back().var;
  }

  Tensor<T>& add_buffer(const std::string& name, Tensor<T> init, bool is_norm = false) {
    auto t = std::make_unique<Tensor<T>>(init);
    Tensor<T>* raw = t.get();
    buffers_.push_back({name, std::move(t), std::move(init), is_norm});
    return *raw;
  }

  template <typename M>
  M& add_child(const std::string& name, std::unique_ptr<M> m) {
    M* raw = m.get();
    children_.emplace_back(name, std::move(m));
    return *raw;
  }

  static std::string join(const std::string& prefix, const std::string& name) {
    return prefix.empty() ? name : prefix + "." + name;
  }

 private:
  struct ParamSlot {
    std::string name;
    Var<T> var;
    InitRule rule;
    bool is_norm;
  };
  struct BufferSlot {
    std::string name;
    std::unique_ptr<Tensor<T>> tensor;
    Tensor<T> initial;
    bool is_norm;
  };

  void collect_params(const std::string& prefix, std::vector<NamedParam<T>>& out) const {
    for (const auto& p : params_) out.push_back({join(prefix, p.name), p.var, p.is_norm});
    for (const auto& c : children_) c.second->collect_params(join(prefix, c.first), out);
  }
  void collect_buffers(const std::string& prefix, std::vector<NamedBuffer<T>>& out) {
    for (auto& b : buffers_) out.push_back({join(prefix, b.name), b.tensor.get(), b.is_norm});
    for (auto& c : children_) c.second->collect_buffers(join(prefix, c.first), out);
  }

  static void fill_init(Tensor<T>& t, const InitRule& rule, Rng& rng) {
    using K = InitRule::Kind;
    switch (rule.kind) {
      case K::kZeros:
        t.fill(T(0));
        break;
      case K::kConstant:
        t.fill(static_cast<T>(rule.value));
        break;
      case K::kUniformFanIn: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<int64_t>(1, rule.fan)));
        for (auto& v : t.values()) v = static_cast<T>((2.0 * uniform01(rng) - 1.0) * bound);
        break;
      }
      case K::kKaimingNormalFanOut: {
        std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / static_cast<double>(std::max<int64_t>(1, rule.fan))));
        for (auto& v : t.values()) v = static_cast<T>(nd(rng));
        break;
      }
      case K::kTruncNormal: {
        std::normal_distribution<double> nd(0.0, rule.value);
        for (auto& v : t.values()) {
          double d;
          do {
            d = nd(rng);
          } while (std::abs(d) > 2.0 * rule.value);
          v = static_cast<T>(d);
        }
        break;
      }
    }
  }

  std::vector<ParamSlot> params_;
  std::vector<BufferSlot> buffers_;
  std::vector<std::pair<std::string, std::unique_ptr<Module>>> children_;
  bool training_ = false;
};

}  // namespace codi::nn
