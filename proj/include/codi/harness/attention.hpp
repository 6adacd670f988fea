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

// Activation heatmaps: channel-mean absolute activation of one feature map,
// min-max normalized, upscaled to the model input and written as 8-bit
// grayscale (plus an optional overlay on the input crop).

#include <filesystem>
#include <string>

#include <opencv2/imgproc.hpp>

#include "codi/data/preprocess.hpp"
#include "codi/model/model.hpp"

namespace codi {

struct AttentionSelector {
  enum class Source { kFused, kContent, kDistortion };
  Source source = Source::kFused;
  int stage = 0;  // for content / distortion pyramids

  /// "fused", "content:<stage>" or "distortion:<stage>".
  static AttentionSelector parse(const std::string& s) {
    AttentionSelector a;
    if (s == "fused") return a;
    const auto colon = s.find(':');
    const std::string head = s.substr(0, colon);
    const std::string tail = colon == std::string::npos ? "" : s.substr(colon + 1);
    require<ConfigError>((head == "content" || head == "distortion") && !tail.empty() &&
                             tail.find_first_not_of("0123456789") == std::string::npos,
                         "invalid stage selector '", s, "' (expected fused, content:<stage> or distortion:<stage>)");
    a.source = head == "content" ? Source::kContent : Source::kDistortion;
    a.stage = std::stoi(tail);
    return a;
  }

  std::string str() const {
    switch (source) {
      case Source::kFused: return "fused";
      case Source::kContent: return "content:" + std::to_string(stage);
      case Source::kDistortion: return "distortion:" + std::to_string(stage);
    }
    return "?";
  }
};

/// Channel-mean |activation| of sample 0 of `feature` ([N,C,H,W]),
/// min-max normalized to [0, 1]. A constant map normalizes to all zeros.
template <typename T>
cv::Mat activation_map(const Tensor<T>& feature) {
  require<ShapeError>(feature.shape().size() == 4, "activation map needs an [N,C,H,W] feature");
  const int64_t c = feature.dim(1), h = feature.dim(2), w = feature.dim(3);
  cv::Mat m(static_cast<int>(h), static_cast<int>(w), CV_64F);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double s = 0;
      for (int64_t k = 0; k < c; ++k) s += std::abs(static_cast<double>(feature.at(0, k, y, x)));
      m.at<double>(static_cast<int>(y), static_cast<int>(x)) = s / static_cast<double>(c);
    }
  double lo = 0, hi = 0;
  cv::minMaxLoc(m, &lo, &hi);
  if (hi > lo)
    m = (m - lo) / (hi - lo);
  else
    m.setTo(0.0);
  return m;
}

struct AttentionResult {
  cv::Mat heatmap;  // CV_8U, input resolution
  cv::Mat overlay;  // CV_8UC3 RGB, empty unless requested
  int feature_height = 0, feature_width = 0;
};

/// Runs `model` on one preprocessed image ([1,3,H,W] in [0,1]) and renders
/// the selected feature.
template <typename T>
AttentionResult attention_for(QualityModel<T>& model, const Tensor<float>& image, const AttentionSelector& sel,
                              bool with_overlay = false) {
  require<ShapeError>(image.shape().size() == 4 && image.dim(0) == 1 && image.dim(1) == 3,
                      "attention export expects a [1,3,H,W] image");
  if (sel.source != AttentionSelector::Source::kFused) {
    const auto& enc = sel.source == AttentionSelector::Source::kContent ? model.content_encoder()
                                                                        : model.distortion_encoder();
    bool known = false;
    for (auto s : enc.stages()) known = known || s.index == sel.stage;
    require<ConfigError>(known, "invalid stage selector '", sel.str(), "': the encoder has no stage ", sel.stage);
  }
  model.train(false);
  NoGradGuard ng;
  Tensor<T> x(image.shape());
  std::copy(image.data(), image.data() + image.numel(), x.data());
  auto out = model.forward_detailed(Var<T>(std::move(x)));
  const Tensor<T>* feat = &out.fused.value();
  if (sel.source == AttentionSelector::Source::kContent) feat = &out.content.at_stage(sel.stage).value();
  if (sel.source == AttentionSelector::Source::kDistortion) feat = &out.distortion.at_stage(sel.stage).value();

  AttentionResult r;
  cv::Mat m = activation_map(*feat);
  r.feature_height = m.rows;
  r.feature_width = m.cols;
  const int H = static_cast<int>(image.dim(2)), W = static_cast<int>(image.dim(3));
  cv::Mat up;
  cv::resize(m, up, cv::Size(W, H), 0, 0, cv::INTER_LINEAR);
  up.convertTo(r.heatmap, CV_8U, 255.0);
  if (with_overlay) {
    cv::Mat rgb(H, W, CV_8UC3);
    const int64_t plane = static_cast<int64_t>(H) * W;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        for (int ch = 0; ch < 3; ++ch)
          rgb.at<cv::Vec3b>(y, x)[ch] =
              cv::saturate_cast<uchar>(255.0f * image.data()[ch * plane + static_cast<int64_t>(y) * W + x]);
    cv::Mat heat_rgb;
    cv::cvtColor(r.heatmap, heat_rgb, cv::COLOR_GRAY2RGB);
    cv::addWeighted(rgb, 0.5, heat_rgb, 0.5, 0.0, r.overlay);
  }
  return r;
}

/// Loads a checkpoint, preprocesses `image_path` the way evaluation does and
/// writes the heatmap (and overlay if `overlay_path` is non-empty).
inline AttentionResult export_attention(const std::filesystem::path& checkpoint, const std::filesystem::path& image_path,
                                        const AttentionSelector& sel, const std::filesystem::path& heatmap_path,
                                        const std::filesystem::path& overlay_path = {}) {
  auto loaded = load_model<float>(checkpoint);
  PreprocessConfig pc;
  if (loaded.manifest.contains("preprocess")) pc = PreprocessConfig::from_json(loaded.manifest.at("preprocess"));
  const cv::Mat rgb = read_rgb(image_path);
  Rng unused(0);
  auto sample = preprocess_sample(rgb, PreprocessMode::kEval, pc, unused);
  Tensor<float> batch({1, 3, sample.dim(1), sample.dim(2)});
  std::copy(sample.data(), sample.data() + sample.numel(), batch.data());
  auto r = attention_for(*loaded.model, batch, sel, !overlay_path.empty());
  write_gray(heatmap_path, r.heatmap);
  if (!overlay_path.empty()) write_rgb(overlay_path, r.overlay);
  return r;
}

}  // namespace codi
