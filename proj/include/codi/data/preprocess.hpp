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

// Image decoding, dataset-specific resizing, cropping and batching.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "codi/core/log.hpp"
#include "codi/core/rng.hpp"
#include "codi/core/tensor.hpp"
#include "codi/data/manifest.hpp"

namespace codi {

enum class PreprocessMode { kTrain, kEval };

struct PreprocessConfig {
  int crop = 384;
  ResizeRule resize;
  /// Resize straight to crop x crop instead of cropping.
  bool resize_only = false;
  /// Random horizontal flips in train mode.
  bool hflip = true;

  nlohmann::json to_json() const {
    return {{"crop", crop}, {"resize", resize.to_json()}, {"resize_only", resize_only}, {"hflip", hflip}};
  }

  static PreprocessConfig from_json(const nlohmann::json& j) {
    PreprocessConfig c;
    try {
      c.crop = j.value("crop", 384);
      if (j.contains("resize")) c.resize = ResizeRule::from_json(j.at("resize"));
      c.resize_only = j.value("resize_only", false);
      c.hflip = j.value("hflip", true);
    } catch (const nlohmann::json::exception& e) {
      raise<ConfigError>("invalid preprocessing config: ", e.what());
    }
    require<ConfigError>(c.crop >= 32, "crop size must be at least 32, got ", c.crop);
    return c;
  }

  friend bool operator==(const PreprocessConfig&, const PreprocessConfig&) = default;
};

/// Seed for the augmentation draws of one record in one epoch.
inline uint64_t sample_seed(uint64_t global_seed, uint64_t epoch, uint64_t record_index) {
  return mix_seed(global_seed, epoch, record_index);
}

namespace detail {

inline cv::Mat resize_to(const cv::Mat& img, int h, int w) {
  if (img.rows == h && img.cols == w) return img;
  cv::Mat out;
  const bool shrinking = h < img.rows && w < img.cols;
  cv::resize(img, out, cv::Size(w, h), 0, 0, shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
  return out;
}

inline cv::Mat resize_shorter(const cv::Mat& img, int target) {
  const int s = std::min(img.rows, img.cols);
  if (s == target) return img;
  const double k = static_cast<double>(target) / s;
  const int h = img.rows == s ? target : std::max(target, static_cast<int>(std::lround(img.rows * k)));
  const int w = img.cols == s ? target : std::max(target, static_cast<int>(std::lround(img.cols * k)));
  return resize_to(img, h, w);
}

}  // namespace detail

/// image: 8-bit RGB (CV_8UC3). Returns [3, crop, crop] floats in [0, 1].
/// Train mode draws the random-resize size, crop corner and flip from `rng`;
/// eval mode is deterministic (random rules use their lower bound, centre crop).
inline Tensor<float> preprocess_sample(const cv::Mat& image, PreprocessMode mode, const PreprocessConfig& cfg, Rng& rng) {
  require<InputError>(!image.empty() && image.type() == CV_8UC3, "preprocess expects a non-empty 8-bit RGB image");
  cv::Mat img = image;
  const ResizeRule& r = cfg.resize;
  switch (r.kind) {
    case ResizeRule::Kind::kNone: break;
    case ResizeRule::Kind::kShorterSide: img = detail::resize_shorter(img, r.size); break;
    case ResizeRule::Kind::kRandomShorterSide: {
      const int s = mode == PreprocessMode::kTrain
                        ? r.size + static_cast<int>(uniform_index(rng, static_cast<uint64_t>(r.size_max - r.size + 1)))
                        : r.size;
      img = detail::resize_shorter(img, s);
      break;
    }
    case ResizeRule::Kind::kFixed: img = detail::resize_to(img, r.height, r.width); break;
  }
  const int crop = cfg.crop;
  if (cfg.resize_only) {
    img = detail::resize_to(img, crop, crop);
  } else if (std::min(img.rows, img.cols) < crop) {
    log(LogLevel::kWarning, "image of ", img.cols, "x", img.rows, " is smaller than the ", crop,
        " crop; upscaling its shorter side to ", crop);
    img = detail::resize_shorter(img, crop);
  }
  int y0 = (img.rows - crop) / 2, x0 = (img.cols - crop) / 2;
  bool flip = false;
  if (mode == PreprocessMode::kTrain) {
    y0 = static_cast<int>(uniform_index(rng, static_cast<uint64_t>(img.rows - crop + 1)));
    x0 = static_cast<int>(uniform_index(rng, static_cast<uint64_t>(img.cols - crop + 1)));
    flip = uniform01(rng) < 0.5 && cfg.hflip;
  }
  const cv::Mat roi = img(cv::Rect(x0, y0, crop, crop));
  Tensor<float> out({3, crop, crop});
  float* o = out.data();
  const int64_t plane = static_cast<int64_t>(crop) * crop;
  for (int y = 0; y < crop; ++y) {
    const auto* row = roi.ptr<cv::Vec3b>(y);
    for (int x = 0; x < crop; ++x) {
      const cv::Vec3b& px = row[flip ? crop - 1 - x : x];
      const int64_t at = static_cast<int64_t>(y) * crop + x;
      for (int c = 0; c < 3; ++c) o[c * plane + at] = static_cast<float>(px[c]) / 255.0f;
    }
  }
  return out;
}

/// Supplies decoded 8-bit RGB images for manifest records.
class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual cv::Mat load(const SampleRecord& r) const = 0;
};

inline cv::Mat read_rgb(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  require<IoError>(!bgr.empty(), "cannot decode image '", path.string(), "'");
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return rgb;
}

inline void write_rgb(const std::filesystem::path& path, const cv::Mat& rgb) {
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  require<IoError>(cv::imwrite(path.string(), bgr), "cannot write image '", path.string(), "'");
}

inline void write_gray(const std::filesystem::path& path, const cv::Mat& gray) {
  require<InputError>(gray.type() == CV_8U, "write_gray expects an 8-bit single-channel image");
  require<IoError>(cv::imwrite(path.string(), gray), "cannot write image '", path.string(), "'");
}

/// Decodes from disk; optionally keeps decoded images in memory.
class FileImageSource : public ImageSource {
 public:
  explicit FileImageSource(bool cache = true) : cache_(cache) {}

  cv::Mat load(const SampleRecord& r) const override {
    if (!cache_) return read_rgb(r.image_path);
    const std::string key = r.image_path.string();
    {
      std::lock_guard lock(mu_);
      if (auto it = images_.find(key); it != images_.end()) return it->second;
    }
    cv::Mat img = read_rgb(r.image_path);
    std::lock_guard lock(mu_);
    images_.emplace(key, img);
    return img;
  }

 private:
  bool cache_;
  mutable std::mutex mu_;
  mutable std::map<std::string, cv::Mat> images_;
};

/// Images held in memory, keyed by image_ref.
class MemoryImageSource : public ImageSource {
 public:
  void add(const std::string& ref, cv::Mat rgb) { images_[ref] = std::move(rgb); }

  cv::Mat load(const SampleRecord& r) const override {
    auto it = images_.find(r.image_ref);
    require<IoError>(it != images_.end(), "no in-memory image for '", r.image_ref, "'");
    return it->second;
  }

 private:
  std::map<std::string, cv::Mat> images_;
};

struct Batch {
  Tensor<float> images;  // [B, 3, crop, crop]
  Tensor<float> labels;  // [B]
  std::vector<size_t> indices;
};

/// Assembles records `idx` of `m`. Augmentation draws depend only on
/// (seed, epoch, record index).
inline Batch make_batch(const DatasetManifest& m, const std::vector<size_t>& idx, const ImageSource& src,
                        const PreprocessConfig& cfg, PreprocessMode mode, uint64_t seed, uint64_t epoch) {
  require<InputError>(!idx.empty(), "empty batch");
  Batch b;
  b.indices = idx;
  const int64_t n = static_cast<int64_t>(idx.size()), crop = cfg.crop;
  b.images = Tensor<float>({n, 3, crop, crop});
  b.labels = Tensor<float>({n});
  for (int64_t i = 0; i < n; ++i) {
    const auto& rec = m.records.at(idx[static_cast<size_t>(i)]);
    Rng rng(sample_seed(seed, epoch, idx[static_cast<size_t>(i)]));
    auto t = preprocess_sample(src.load(rec), mode, cfg, rng);
    std::copy(t.data(), t.data() + t.numel(), b.images.data() + i * t.numel());
    b.labels[i] = static_cast<float>(rec.score);
  }
  return b;
}

}  // namespace codi
