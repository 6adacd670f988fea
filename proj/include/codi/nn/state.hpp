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

// Flat name -> tensor snapshots of a module (parameters and buffers).

#include <map>
#include <string>

#include "codi/nn/module.hpp"

namespace codi::nn {

using StateDict = std::map<std::string, Tensor<double>>;

template <typename T>
StateDict state_dict(Module<T>& m, const std::string& prefix = "") {
  StateDict out;
  for (const auto& p : m.named_parameters(prefix)) out.emplace(p.name, p.var.value().template cast<double>());
  for (const auto& b : m.named_buffers(prefix)) out.emplace(b.name, b.tensor->template cast<double>());
  return out;
}

/// Copies matching entries into `m`. Every parameter and buffer of `m` must
/// be present with the same shape; extra entries under `prefix` are an error
/// when `strict`.
template <typename T>
void load_state_dict(Module<T>& m, const StateDict& state, const std::string& prefix = "", bool strict = true) {
  size_t used = 0;
  auto fetch = [&](const std::string& name, const Shape& shape) -> const Tensor<double>& {
    auto it = state.find(name);
    require<ConfigError>(it != state.end(), "weights are missing '", name, "'");
    require<ConfigError>(it->second.shape() == shape, "weights for '", name, "' have shape ",
                         shape_str(it->second.shape()), ", model expects ", shape_str(shape));
    ++used;
    return it->second;
  };
  for (auto& p : m.named_parameters(prefix)) {
    const auto& src = fetch(p.name, p.var.shape());
    auto& dst = p.var.mutable_value();
    for (int64_t i = 0; i < dst.numel(); ++i) dst[i] = static_cast<T>(src[i]);
  }
  for (auto& b : m.named_buffers(prefix)) {
    const auto& src = fetch(b.name, b.tensor->shape());
    for (int64_t i = 0; i < b.tensor->numel(); ++i) (*b.tensor)[i] = static_cast<T>(src[i]);
  }
  if (strict) {
    size_t in_scope = 0;
    for (const auto& [name, _] : state)
      if (prefix.empty() || name.rfind(prefix + ".", 0) == 0) ++in_scope;
    require<ConfigError>(used == in_scope, "weights contain ", in_scope - used, " entries the model does not have");
  }
}

}  // namespace codi::nn
