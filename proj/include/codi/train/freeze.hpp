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

// Freeze strategies: which encoder parameters receive updates and which
// normalization layers keep their statistics fixed.

#include <string>
#include <vector>

#include "codi/model/model.hpp"

namespace codi {

struct FreezePolicy {
  char strategy = 'B';
  bool cae_trainable = true;
  bool dae_trainable = false;
  bool cae_norm_frozen = true;
  bool dae_norm_frozen = true;

  /// A: both encoders frozen. B: content encoder trains with frozen norms,
  /// distortion encoder frozen. C: the mirror of B. D: everything trains.
  static FreezePolicy from_strategy(char s) {
    switch (s) {
      case 'A': return {'A', false, false, true, true};
      case 'B': return {'B', true, false, true, true};
      case 'C': return {'C', false, true, true, true};
      case 'D': return {'D', true, true, false, false};
      default: raise<ConfigError>("unknown freeze strategy '", s, "' (expected A, B, C or D)");
    }
  }

  static FreezePolicy from_string(const std::string& s) {
    require<ConfigError>(s.size() == 1, "unknown freeze strategy '", s, "' (expected A, B, C or D)");
    return from_strategy(s[0]);
  }

  std::string name() const { return std::string(1, strategy); }
};

template <typename T>
struct ParamPartition {
  std::vector<nn::NamedParam<T>> trainable, frozen;

  int64_t trainable_count() const {
    int64_t n = 0;
    for (const auto& p : trainable) n += p.var.numel();
    return n;
  }
  int64_t frozen_count() const {
    int64_t n = 0;
    for (const auto& p : frozen) n += p.var.numel();
    return n;
  }
};

enum class ParamFamily { kContentEncoder, kDistortionEncoder, kShared };

inline ParamFamily param_family(const std::string& name) {
  if (name.rfind("cae.", 0) == 0) return ParamFamily::kContentEncoder;
  if (name.rfind("dae.", 0) == 0) return ParamFamily::kDistortionEncoder;
  return ParamFamily::kShared;
}

inline bool param_trainable(const FreezePolicy& p, const std::string& name, bool is_norm) {
  switch (param_family(name)) {
    case ParamFamily::kContentEncoder: return p.cae_trainable && !(is_norm && p.cae_norm_frozen);
    case ParamFamily::kDistortionEncoder: return p.dae_trainable && !(is_norm && p.dae_norm_frozen);
    case ParamFamily::kShared: return true;
  }
  return true;
}

/// Splits parameters into disjoint trainable / frozen sets and sets
/// requires_grad accordingly so frozen parameters receive no gradient.
template <typename T>
ParamPartition<T> build_trainable_params(QualityModel<T>& model, const FreezePolicy& policy) {
  ParamPartition<T> out;
  for (auto& p : model.named_parameters()) {
    const bool train = param_trainable(policy, p.name, p.is_norm);
    p.var.set_requires_grad(train);
    p.var.zero_grad();
    (train ? out.trainable : out.frozen).push_back(p);
  }
  return out;
}

/// Training mode for the model under a policy: frozen encoders run in eval
/// mode; frozen-norm encoders keep their BatchNorm layers in eval mode so
/// running statistics never move.
template <typename T>
void set_training_mode(QualityModel<T>& model, const FreezePolicy& policy, bool training) {
  model.train(training);
  if (!training) return;
  auto settle = [](Encoder<T>& enc, bool trainable, bool norm_frozen) {
    if (!trainable) {
      enc.train(false);
      return;
    }
    if (!norm_frozen) return;
    enc.visit([](const std::string&, nn::Module<T>& m) {
      if (auto* bn = dynamic_cast<nn::BatchNorm2d<T>*>(&m)) bn->train(false);
    });
  };
  settle(model.content_encoder(), policy.cae_trainable, policy.cae_norm_frozen);
  settle(model.distortion_encoder(), policy.dae_trainable, policy.dae_norm_frozen);
}

}  // namespace codi
