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

// Full quality model: content encoder, distortion encoder, one interaction
// block per selected stage, fusion and the patch-weighted head.

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "codi/encoders/encoder.hpp"
#include "codi/head/head.hpp"
#include "codi/ppim/ppim.hpp"

namespace codi {

struct ModelConfig {
  BackboneKind content_backbone = BackboneKind::kResNet50;
  BackboneKind distortion_backbone = BackboneKind::kResNet50;
  int64_t dim = 384;
  int64_t squeeze = 64;
  /// Stage ordinals that get an interaction block; empty = every stage both
  /// encoders tap.
  std::vector<int> stages;
  InteractionSwitches switches;
  /// One interaction block over stage maps pooled to the coarsest grid and
  /// concatenated per encoder, instead of one block per stage.
  bool single_block = false;
  NormalizationConstants content_norm;
  NormalizationConstants distortion_norm;

  /// Stage ordinals present in both encoders, in increasing order.
  std::vector<int> common_stages() const {
    std::set<int> c, both;
    for (auto s : stage_table(content_backbone)) c.insert(s.index);
    for (auto s : stage_table(distortion_backbone))
      if (c.count(s.index)) both.insert(s.index);
    return {both.begin(), both.end()};
  }

  std::vector<int> resolved_stages() const {
    const auto common = common_stages();
    if (stages.empty()) return common;
    std::vector<int> out = stages;
    std::sort(out.begin(), out.end());
    require<ConfigError>(std::adjacent_find(out.begin(), out.end()) == out.end(), "duplicate stage in selection");
    for (int s : out)
      require<ConfigError>(std::find(common.begin(), common.end(), s) != common.end(), "stage ", s,
                           " is not tapped by both encoders");
    return out;
  }

  void validate() const {
    require<ConfigError>(!resolved_stages().empty(), "no interaction stages selected");
    switches.validate();
    StageInteractionConfig{dim, squeeze, 9, 0}.validate(switches.split);
  }

  nlohmann::json to_json() const {
    return {{"content_backbone", to_string(content_backbone)},
            {"distortion_backbone", to_string(distortion_backbone)},
            {"dim", dim},
            {"squeeze", squeeze},
            {"stages", resolved_stages()},
            {"coarse", switches.coarse},
            {"fine", switches.fine},
            {"content_offsets", switches.content_offsets},
            {"split", switches.split},
            {"single_block", single_block},
            {"content_norm", content_norm.to_json()},
            {"distortion_norm", distortion_norm.to_json()},
            {"taps", 9},
            {"offset_activation", "none"}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
      c.content_backbone = backbone_from_string(j.value("content_backbone", "resnet50"));
      c.distortion_backbone = backbone_from_string(j.value("distortion_backbone", "resnet50"));
      c.dim = j.value("dim", int64_t{384});
      c.squeeze = j.value("squeeze", int64_t{64});
      if (j.contains("stages")) c.stages = j.at("stages").get<std::vector<int>>();
      c.switches.coarse = j.value("coarse", true);
      c.switches.fine = j.value("fine", true);
      c.switches.content_offsets = j.value("content_offsets", false);
      c.switches.split = j.value("split", true);
      c.single_block = j.value("single_block", false);
      if (j.contains("content_norm")) c.content_norm = NormalizationConstants::from_json(j.at("content_norm"));
      if (j.contains("distortion_norm"))
        c.distortion_norm = NormalizationConstants::from_json(j.at("distortion_norm"));
    } catch (const nlohmann::json::exception& e) {
      raise<ConfigError>("invalid model configuration: ", e.what());
    }
    c.validate();
    return c;
  }
};

template <typename T>
struct ModelOutput {
  Var<T> quality;  // [N]
  Var<T> fused;    // [N, kD, Hc, Wc]
  Var<T> scores, weights;
  FeaturePyramid<T> content, distortion;
  std::vector<int> stages;
  std::vector<InteractionTrace<T>> traces;
};

template <typename T>
class QualityModel : public nn::Module<T> {
 public:
  explicit QualityModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    stages_ = cfg_.resolved_stages();
    cae_ = &this->add_child("cae",
                            std::make_unique<Encoder<T>>(EncoderRole::kContent, cfg_.content_backbone, cfg_.content_norm));
    dae_ = &this->add_child("dae", std::make_unique<Encoder<T>>(EncoderRole::kDistortion, cfg_.distortion_backbone,
                                                                cfg_.distortion_norm));
    auto& ppim = this->add_child("ppim", std::make_unique<nn::Container<T>>());
    auto channels = [](const Encoder<T>& e, int stage) {
      for (auto s : e.stages())
        if (s.index == stage) return s.channels;
      return int64_t{0};
    };
    if (cfg_.single_block) {
      int64_t cc = 0, cd = 0;
      for (int s : stages_) {
        cc += channels(*cae_, s);
        cd += channels(*dae_, s);
      }
      blocks_.push_back(&ppim.template add<InteractionBlock<T>>(
          "shared", cc, cd, StageInteractionConfig{cfg_.dim, cfg_.squeeze, 9, stages_.back()}, cfg_.switches));
    } else {
      for (int s : stages_)
        blocks_.push_back(&ppim.template add<InteractionBlock<T>>(
            std::to_string(s), channels(*cae_, s), channels(*dae_, s),
            StageInteractionConfig{cfg_.dim, cfg_.squeeze, 9, s}, cfg_.switches));
    }
    head_ = &this->add_child("head", std::make_unique<PatchWeightedHead<T>>(fused_channels()));
  }

  const ModelConfig& config() const { return cfg_; }
  const std::vector<int>& stages() const { return stages_; }
  int64_t fused_channels() const { return static_cast<int64_t>(blocks_.size()) * cfg_.dim; }

  /// Installs encoder weights and adopts their normalization constants.
  void load_encoder(EncoderRole role, const BackboneParams& p) {
    Encoder<T>& e = role == EncoderRole::kContent ? *cae_ : *dae_;
    e.load(p);
    (role == EncoderRole::kContent ? cfg_.content_norm : cfg_.distortion_norm) = p.normalization;
  }

  Encoder<T>& content_encoder() { return *cae_; }
  Encoder<T>& distortion_encoder() { return *dae_; }
  InteractionBlock<T>& block(size_t i) { return *blocks_.at(i); }
  size_t block_count() const { return blocks_.size(); }
  PatchWeightedHead<T>& head() { return *head_; }

  /// images: [N, 3, H, W] RGB in [0, 1].
  ModelOutput<T> forward_detailed(const Var<T>& images) const {
    ModelOutput<T> out;
    out.stages = stages_;
    out.content = cae_->forward(images);
    out.distortion = dae_->forward(images);
    std::vector<Var<T>> interactions;
    if (cfg_.single_block) {
      std::vector<Var<T>> c, d;
      for (int s : stages_) {
        c.push_back(out.content.at_stage(s));
        d.push_back(out.distortion.at_stage(s));
      }
      out.traces.push_back(blocks_[0]->trace(pool_concat(c), pool_concat(d)));
      interactions.push_back(out.traces.back().output);
    } else {
      for (size_t i = 0; i < stages_.size(); ++i) {
        out.traces.push_back(blocks_[i]->trace(out.content.at_stage(stages_[i]), out.distortion.at_stage(stages_[i])));
        interactions.push_back(out.traces.back().output);
      }
    }
    out.fused = fuse_pyramid(interactions);
    auto h = head_->forward_parts(out.fused);
    out.quality = h.quality;
    out.scores = h.scores;
    out.weights = h.weights;
    return out;
  }

  Var<T> forward(const Var<T>& images) const { return forward_detailed(images).quality; }

 private:
  ModelConfig cfg_;
  std::vector<int> stages_;
  Encoder<T>* cae_;
  Encoder<T>* dae_;
  std::vector<InteractionBlock<T>*> blocks_;
  PatchWeightedHead<T>* head_;
};

/// Saves every parameter and buffer plus `manifest` (the model config is
/// added under "model").
template <typename T>
void save_model(const std::filesystem::path& path, QualityModel<T>& m, nlohmann::json manifest = nlohmann::json::object()) {
  Checkpoint c;
  c.manifest = std::move(manifest);
  c.manifest["kind"] = "model";
  c.manifest["model"] = m.config().to_json();
  c.manifest["head_hidden"] = m.head().hidden_width();
  c.dtype = std::is_same_v<T, float> ? "float32" : "float64";
  c.tensors = nn::state_dict(m);
  write_checkpoint(path, c);
}

template <typename T>
struct LoadedModel {
  std::unique_ptr<QualityModel<T>> model;
  nlohmann::json manifest;
};

template <typename T>
LoadedModel<T> load_model(const std::filesystem::path& path) {
  Checkpoint c = read_checkpoint(path);
  require<CorruptCheckpointError>(c.manifest.value("kind", "") == "model", "'", path.string(),
                                  "' is not a model checkpoint");
  require<CorruptCheckpointError>(c.manifest.contains("model"), "'", path.string(), "' has no model configuration");
  LoadedModel<T> out;
  out.model = std::make_unique<QualityModel<T>>(ModelConfig::from_json(c.manifest.at("model")));
  nn::load_state_dict(*out.model, c.tensors);
  out.manifest = std::move(c.manifest);
  return out;
}

}  // namespace codi
