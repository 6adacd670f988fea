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

// Content and distortion encoders: a backbone plus its own input
// normalization, producing a tapped feature pyramid. Also the backbone weight
// blob (BackboneParams) and its loader.

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "codi/core/checkpoint.hpp"
#include "codi/encoders/resnet.hpp"
#include "codi/encoders/swin.hpp"
#include "codi/encoders/tiny.hpp"
#include "codi/nn/state.hpp"

namespace codi {

enum class EncoderRole { kContent, kDistortion };

inline std::string to_string(EncoderRole r) { return r == EncoderRole::kContent ? "content" : "distortion"; }

enum class Provenance { kPretrainedContent, kPretrainedDistortion, kRandomSeeded };

inline std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::kPretrainedContent:
      return "pretrained-content";
    case Provenance::kPretrainedDistortion:
      return "pretrained-distortion";
    case Provenance::kRandomSeeded:
      return "random-seeded";
  }
  return "?";
}

inline Provenance provenance_from_string(const std::string& s) {
  if (s == "pretrained-content") return Provenance::kPretrainedContent;
  if (s == "pretrained-distortion") return Provenance::kPretrainedDistortion;
  if (s == "random-seeded") return Provenance::kRandomSeeded;
  raise<CorruptCheckpointError>("unknown provenance tag '", s, "'");
}

/// The pretrained tag an encoder slot expects.
inline Provenance slot_provenance(EncoderRole r) {
  return r == EncoderRole::kContent ? Provenance::kPretrainedContent : Provenance::kPretrainedDistortion;
}

/// Per-channel RGB normalization applied inside an encoder, (x - mean) / std.
struct NormalizationConstants {
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std{0.229, 0.224, 0.225};

  friend bool operator==(const NormalizationConstants&, const NormalizationConstants&) = default;

  static NormalizationConstants identity() { return {{0, 0, 0}, {1, 1, 1}}; }

  nlohmann::json to_json() const { return {{"mean", mean}, {"std", std}}; }
  static NormalizationConstants from_json(const nlohmann::json& j) {
    NormalizationConstants n;
    n.mean = j.at("mean").get<std::array<double, 3>>();
    n.std = j.at("std").get<std::array<double, 3>>();
    for (double s : n.std) require<ConfigError>(s > 0, "normalization std must be positive");
    return n;
  }
};

/// Opaque versioned weight blob for one backbone.
struct BackboneParams {
  uint32_t format_version = kCheckpointFormatVersion;
  Provenance provenance = Provenance::kRandomSeeded;
  BackboneKind backbone = BackboneKind::kResNet50;
  NormalizationConstants normalization;
  std::optional<uint64_t> seed;  // set for random-seeded blobs
  nn::StateDict tensors;
};

template <typename T>
std::unique_ptr<Backbone<T>> make_backbone(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::kResNet50:
      return std::make_unique<ResNet50<T>>();
    case BackboneKind::kSwinBase:
      return std::make_unique<SwinTransformer<T>>();
    case BackboneKind::kTiny:
      return std::make_unique<TinyBackbone<T>>();
  }
  raise<ConfigError>("unknown backbone");
}

/// Deterministic synthetic weights for `kind` drawn from `seed`.
inline BackboneParams random_backbone_params(BackboneKind kind, uint64_t seed,
                                             NormalizationConstants norm = {}) {
  auto net = make_backbone<float>(kind);
  net->reset_parameters(seed);
  BackboneParams p;
  p.provenance = Provenance::kRandomSeeded;
  p.backbone = kind;
  p.normalization = norm;
  p.seed = seed;
  p.tensors = nn::state_dict(*net);
  return p;
}

inline void save_backbone_weights(const std::filesystem::path& path, const BackboneParams& p) {
  Checkpoint c;
  c.manifest = {{"kind", "backbone"},
                {"provenance", to_string(p.provenance)},
                {"backbone_id", to_string(p.backbone)},
                {"normalization", p.normalization.to_json()}};
  if (p.seed) c.manifest["seed"] = *p.seed;
  c.tensors = p.tensors;
  write_checkpoint(path, c);
}

/// Parses "random:seed=<n>" sources; nullopt for anything else.
inline std::optional<uint64_t> parse_random_source(const std::string& source) {
  const std::string prefix = "random:seed=";
  if (source.rfind(prefix, 0) != 0) return std::nullopt;
  const std::string digits = source.substr(prefix.size());
  require<ConfigError>(!digits.empty() && digits.find_first_not_of("0123456789") == std::string::npos,
                       "malformed random weight source '", source, "'");
  return std::stoull(digits);
}

/// Loads a backbone blob from a checkpoint file or a "random:seed=<n>"
/// source. Random-seeded weights satisfy any expected provenance; file
/// weights must carry exactly the expected tag.
inline BackboneParams load_backbone_weights(const std::string& source, Provenance expected,
                                            BackboneKind random_kind = BackboneKind::kResNet50,
                                            NormalizationConstants random_norm = {}) {
  if (auto seed = parse_random_source(source)) return random_backbone_params(random_kind, *seed, random_norm);
  Checkpoint c = read_checkpoint(source);
  BackboneParams p;
  try {
    require<CorruptCheckpointError>(c.manifest.value("kind", "") == "backbone", "'", source,
                                    "' is not a backbone checkpoint");
    p.provenance = provenance_from_string(c.manifest.at("provenance").get<std::string>());
    p.backbone = backbone_from_string(c.manifest.at("backbone_id").get<std::string>());
    p.normalization = NormalizationConstants::from_json(c.manifest.at("normalization"));
    if (c.manifest.contains("seed")) p.seed = c.manifest.at("seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    raise<CorruptCheckpointError>("'", source, "' manifest is incomplete: ", e.what());
  }
  require<ProvenanceError>(p.provenance == expected || p.provenance == Provenance::kRandomSeeded, "'", source,
                           "' carries ", to_string(p.provenance), " weights, expected ", to_string(expected));
  p.tensors = std::move(c.tensors);
  return p;
}

/// Ordered per-stage maps from one encoder pass. Maps are batched NCHW.
template <typename T>
struct FeaturePyramid {
  EncoderRole source = EncoderRole::kContent;
  std::vector<StageSpec> specs;
  std::vector<Var<T>> maps;

  size_t size() const { return maps.size(); }
  /// Map for stage ordinal `index`; throws when the stage was not tapped.
  const Var<T>& at_stage(int index) const {
    for (size_t i = 0; i < specs.size(); ++i)
      if (specs[i].index == index) return maps[i];
    raise<ConfigError>(to_string(source), " pyramid has no stage ", index);
  }
};

template <typename T>
class Encoder : public nn::Module<T> {
 public:
  Encoder(EncoderRole role, BackboneKind kind, NormalizationConstants norm = {})
      : role_(role), norm_(norm) {
    backbone_ = &this->add_child("backbone", make_backbone<T>(kind));
  }

  EncoderRole role() const { return role_; }
  BackboneKind kind() const { return backbone_->kind(); }
  std::vector<StageSpec> stages() const { return backbone_->stages(); }
  const NormalizationConstants& normalization() const { return norm_; }
  Backbone<T>& backbone() { return *backbone_; }

  /// Installs weights. The blob must target this backbone, fit its slot, and
  /// match every parameter shape.
  void load(const BackboneParams& p) {
    require<ProvenanceError>(p.provenance == Provenance::kRandomSeeded || p.provenance == slot_provenance(role_),
                             to_string(p.provenance), " weights cannot go into the ", to_string(role_),
                             " encoder");
    require<ConfigError>(p.backbone == kind(), "weights are for backbone ", to_string(p.backbone),
                         ", encoder is configured as ", to_string(kind()));
    nn::load_state_dict(*backbone_, p.tensors);
    norm_ = p.normalization;
    provenance_ = p.provenance;
  }

  BackboneParams export_params() {
    BackboneParams p;
    p.provenance = provenance_;
    p.backbone = kind();
    p.normalization = norm_;
    p.tensors = nn::state_dict(*backbone_);
    return p;
  }

  /// images: [N, 3, H, W] (or [3, H, W]) RGB in [0, 1], before normalization.
  FeaturePyramid<T> forward(const Var<T>& images) const {
    Var<T> x = images.shape().size() == 3 ? reshape(images, prepend_batch(images.shape())) : images;
    const Shape& s = x.shape();
    require<InputError>(s.size() == 4 && s[1] == 3, to_string(role_), " encoder expects [N,3,H,W], got ",
                        shape_str(s));
    require<InputError>(s[2] >= 32 && s[3] >= 32, to_string(role_), " encoder needs H, W >= 32, got ", s[2],
                        "x", s[3]);
    require<InputError>(x.value().all_finite(), to_string(role_), " encoder input contains non-finite values");
    Tensor<T> mean({3, 1, 1}), inv_std({3, 1, 1});
    for (int c = 0; c < 3; ++c) {
      mean[c] = static_cast<T>(-norm_.mean[c]);
      inv_std[c] = static_cast<T>(1.0 / norm_.std[c]);
    }
    x = mul_bcast(add_bcast(x, Var<T>(mean)), Var<T>(inv_std));
    FeaturePyramid<T> out;
    out.source = role_;
    out.specs = backbone_->stages();
    out.maps = backbone_->forward_taps(x);
    return out;
  }

 private:
  static Shape prepend_batch(const Shape& s) {
    Shape o{1};
    o.insert(o.end(), s.begin(), s.end());
    return o;
  }

  EncoderRole role_;
  NormalizationConstants norm_;
  Provenance provenance_ = Provenance::kRandomSeeded;
  Backbone<T>* backbone_;
};

namespace detail {

template <typename T>
FeaturePyramid<T> extract_pyramid(EncoderRole role, const Tensor<T>& image, const BackboneParams& params) {
  Encoder<T> enc(role, params.backbone, params.normalization);
  enc.load(params);
  enc.train(false);
  NoGradGuard ng;
  return enc.forward(Var<T>(image));
}

}  // namespace detail

/// One-shot extraction for a single 3xHxW image (eval mode, no graph).
template <typename T>
FeaturePyramid<T> extract_content_pyramid(const Tensor<T>& image, const BackboneParams& params) {
  return detail::extract_pyramid(EncoderRole::kContent, image, params);
}

template <typename T>
FeaturePyramid<T> extract_distortion_pyramid(const Tensor<T>& image, const BackboneParams& params) {
  return detail::extract_pyramid(EncoderRole::kDistortion, image, params);
}

}  // namespace codi
