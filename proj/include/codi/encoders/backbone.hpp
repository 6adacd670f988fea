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

#include <string>
#include <vector>

#include "codi/nn/layers.hpp"

namespace codi {

enum class BackboneKind { kResNet50, kSwinBase, kTiny };

inline std::string to_string(BackboneKind k) {
  switch (k) {
    case BackboneKind::kResNet50:
      return "resnet50";
    case BackboneKind::kSwinBase:
      return "swin_base";
    case BackboneKind::kTiny:
      return "tiny";
  }
  return "?";
}

inline BackboneKind backbone_from_string(const std::string& s) {
  if (s == "resnet50") return BackboneKind::kResNet50;
  if (s == "swin_base") return BackboneKind::kSwinBase;
  if (s == "tiny") return BackboneKind::kTiny;
  raise<ConfigError>("unknown backbone '", s, "' (expected resnet50, swin_base or tiny)");
}

/// One tapped stage of a backbone.
struct StageSpec {
  int index = 0;          // 0-4 for CNN backbones, 1-4 for the transformer
  int64_t channels = 0;
  int64_t downscale = 1;  // spatial division factor relative to the input

  friend bool operator==(const StageSpec&, const StageSpec&) = default;
};

inline std::vector<StageSpec> stage_table(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::kResNet50:
      return {{0, 64, 2}, {1, 256, 4}, {2, 512, 8}, {3, 1024, 16}, {4, 2048, 32}};
    case BackboneKind::kSwinBase:
      return {{1, 128, 4}, {2, 256, 8}, {3, 512, 16}, {4, 1024, 32}};
    case BackboneKind::kTiny:
      return {{0, 4, 2}, {1, 8, 4}, {2, 16, 8}, {3, 32, 16}, {4, 64, 32}};
  }
  return {};
}

/// A feature extractor that exposes its stage outputs. Implementations own
/// their parameters; the tap list must match `stages()` one-to-one.
template <typename T>
class Backbone : public nn::Module<T> {
 public:
  virtual BackboneKind kind() const = 0;
  virtual std::vector<StageSpec> stages() const { return stage_table(kind()); }
  /// x: [N, 3, H, W] normalized image batch -> one NCHW map per stage.
  virtual std::vector<Var<T>> forward_taps(const Var<T>& x) const = 0;
};

}  // namespace codi
