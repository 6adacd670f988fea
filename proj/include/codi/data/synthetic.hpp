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

// Procedurally generated distorted-image datasets for smoke tests and demos.
// Each content is a random composition of gradients, sinusoids and shapes;
// each record applies one distortion at one level. MOS falls linearly with
// level from 5 towards 1.

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "codi/core/rng.hpp"
#include "codi/data/manifest.hpp"
#include "codi/data/preprocess.hpp"

namespace codi {

struct SyntheticSpec {
  int contents = 4;
  int height = 64, width = 64;
  std::vector<std::string> distortions = {"blur", "noise", "jpeg", "contrast"};
  int levels = 3;
  uint64_t seed = 0;
};

inline const std::vector<std::string>& synthetic_distortion_names() {
  static const std::vector<std::string> names{"blur", "noise", "jpeg", "contrast", "brightness", "pixelate"};
  return names;
}

inline cv::Mat synthetic_content(uint64_t seed, int h, int w) {
  Rng rng(mix_seed(seed, fnv1a("content")));
  cv::Mat f(h, w, CV_32FC3);
  double fx[3], fy[3], ph[3], amp[3], base[3], gx[3], gy[3];
  for (int c = 0; c < 3; ++c) {
    fx[c] = 1 + 6 * uniform01(rng);
    fy[c] = 1 + 6 * uniform01(rng);
    ph[c] = 6.283 * uniform01(rng);
    amp[c] = 0.1 + 0.25 * uniform01(rng);
    base[c] = 0.2 + 0.6 * uniform01(rng);
    gx[c] = 0.4 * (uniform01(rng) - 0.5);
    gy[c] = 0.4 * (uniform01(rng) - 0.5);
  }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = static_cast<double>(x) / w, v = static_cast<double>(y) / h;
      auto& px = f.at<cv::Vec3f>(y, x);
      for (int c = 0; c < 3; ++c)
        px[c] = static_cast<float>(base[c] + gx[c] * u + gy[c] * v + amp[c] * std::sin(6.283 * (fx[c] * u + fy[c] * v) + ph[c]));
    }
  const int shapes = 3 + static_cast<int>(uniform_index(rng, 4));
  for (int s = 0; s < shapes; ++s) {
    const cv::Scalar color(uniform01(rng), uniform01(rng), uniform01(rng));
    const cv::Point p(static_cast<int>(uniform_index(rng, static_cast<uint64_t>(w))),
                      static_cast<int>(uniform_index(rng, static_cast<uint64_t>(h))));
    const int r = 2 + static_cast<int>(uniform_index(rng, static_cast<uint64_t>(std::max(3, std::min(h, w) / 4))));
    if (s % 2 == 0)
      cv::circle(f, p, r, color, cv::FILLED, cv::LINE_AA);
    else
      cv::rectangle(f, cv::Rect(p.x, p.y, r, r + 3), color, cv::FILLED);
  }
  cv::Mat out;
  f.convertTo(out, CV_8UC3, 255.0);
  return out;
}

/// level in [1, levels]; strength grows with level.
inline cv::Mat apply_distortion(const cv::Mat& img, const std::string& kind, int level, int levels, uint64_t seed) {
  const double t = static_cast<double>(level) / levels;
  cv::Mat out;
  if (kind == "blur") {
    cv::GaussianBlur(img, out, cv::Size(0, 0), 0.3 + 2.5 * t);
  } else if (kind == "noise") {
    cv::Mat noise(img.size(), CV_32FC3);
    cv::RNG cvrng(mix_seed(seed, fnv1a("noise")));
    cvrng.fill(noise, cv::RNG::NORMAL, 0.0, 60.0 * t);
    cv::Mat f;
    img.convertTo(f, CV_32FC3);
    f += noise;
    f.convertTo(out, CV_8UC3);
  } else if (kind == "jpeg") {
    std::vector<uchar> buf;
    cv::imencode(".jpg", img, buf, {cv::IMWRITE_JPEG_QUALITY, std::max(2, static_cast<int>(60 * (1 - t)) + 2)});
    out = cv::imdecode(buf, cv::IMREAD_COLOR);
  } else if (kind == "contrast") {
    img.convertTo(out, CV_8UC3, 1.0 - 0.8 * t, 127.5 * 0.8 * t);
  } else if (kind == "brightness") {
    img.convertTo(out, CV_8UC3, 1.0, 110.0 * t);
  } else if (kind == "pixelate") {
    const int k = 1 + level * 2;
    cv::Mat small;
    cv::resize(img, small, cv::Size(std::max(1, img.cols / k), std::max(1, img.rows / k)), 0, 0, cv::INTER_AREA);
    cv::resize(small, out, img.size(), 0, 0, cv::INTER_NEAREST);
  } else {
    raise<ConfigError>("unknown synthetic distortion '", kind, "'");
  }
  return out;
}

inline double synthetic_mos(int level, int levels) { return 5.0 - 3.6 * static_cast<double>(level) / levels; }

struct SyntheticDataset {
  DatasetManifest manifest;
  MemoryImageSource images;
};

/// Builds the dataset in memory (records named c<i>_<distortion>_<level>.png).
inline SyntheticDataset make_synthetic_dataset(const SyntheticSpec& spec, const std::string& name = "synthetic") {
  require<ConfigError>(spec.contents > 0 && spec.levels > 0 && !spec.distortions.empty(),
                       "synthetic dataset needs contents, levels and distortions");
  SyntheticDataset out;
  auto& d = out.manifest.descriptor;
  d.name = name;
  d.score_lo = 1.0;
  d.score_hi = 5.0;
  d.higher_is_better = true;
  d.kind = DatasetKind::kSynthetic;
  for (int c = 0; c < spec.contents; ++c) {
    const cv::Mat ref = synthetic_content(mix_seed(spec.seed, static_cast<uint64_t>(c)), spec.height, spec.width);
    for (const auto& kind : spec.distortions)
      for (int l = 1; l <= spec.levels; ++l) {
        SampleRecord r;
        r.image_ref = "c" + std::to_string(c) + "_" + kind + "_" + std::to_string(l) + ".png";
        r.image_path = r.image_ref;
        r.raw_score = r.score = synthetic_mos(l, spec.levels);
        r.distortion_type = kind;
        r.content_id = "c" + std::to_string(c);
        out.images.add(r.image_ref, apply_distortion(ref, kind, l, spec.levels, mix_seed(spec.seed, fnv1a(r.image_ref))));
        out.manifest.records.push_back(std::move(r));
      }
  }
  return out;
}

/// Writes images, scores.csv and dataset.json under `dir`; returns the
/// descriptor path.
inline std::filesystem::path write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticSpec& spec,
                                                     const std::string& name = "synthetic") {
  auto ds = make_synthetic_dataset(spec, name);
  std::filesystem::create_directories(dir / "images");
  std::ofstream csv(dir / "scores.csv");
  require<IoError>(csv.good(), "cannot write '", (dir / "scores.csv").string(), "'");
  csv << "image_ref,score,distortion_type,content_id\n";
  for (const auto& r : ds.manifest.records) {
    write_rgb(dir / "images" / r.image_ref, ds.images.load(r));
    csv << r.image_ref << "," << r.raw_score << "," << *r.distortion_type << "," << *r.content_id << "\n";
  }
  auto desc = ds.manifest.descriptor;
  desc.manifest = "scores.csv";
  desc.image_root = "images";
  std::ofstream js(dir / "dataset.json");
  js << desc.to_json().dump(2) << "\n";
  return dir / "dataset.json";
}

}  // namespace codi
