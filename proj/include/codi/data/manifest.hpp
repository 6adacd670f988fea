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

// Dataset descriptors, score manifests and label normalization.
//
// Manifest: UTF-8 delimiter-separated text (comma, tab or semicolon, picked
// from the header line), one record per line, header required:
//
//   image_ref,score[,distortion_type][,content_id][,split]
//
// Double-quoted fields may contain the delimiter ("" escapes a quote).
// Relative image_refs resolve against the descriptor's image_root, or the
// manifest's directory when no root is given.
//
// Descriptor: JSON object
//   { "name": "kadid10k", "score_range": [1, 5], "higher_is_better": true,
//     "kind": "synthetic" | "authentic", "manifest": "scores.csv",
//     "image_root": "images", "resize": {"rule": "none"} }
// with resize rules
//   {"rule": "none"}
//   {"rule": "shorter_side", "size": 448}
//   {"rule": "random_shorter_side", "min": 384, "max": 416}
//   {"rule": "fixed", "height": 512, "width": 384}

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "codi/core/error.hpp"

namespace codi {

enum class DatasetKind { kSynthetic, kAuthentic };

inline const char* to_string(DatasetKind k) { return k == DatasetKind::kSynthetic ? "synthetic" : "authentic"; }

struct ResizeRule {
  enum class Kind { kNone, kShorterSide, kRandomShorterSide, kFixed };
  Kind kind = Kind::kNone;
  int size = 0;               // shorter_side target, or random lower bound
  int size_max = 0;           // random upper bound (inclusive)
  int height = 0, width = 0;  // fixed

  static ResizeRule none() { return {}; }
  static ResizeRule shorter_side(int s) { return {Kind::kShorterSide, s, s, 0, 0}; }
  static ResizeRule random_shorter_side(int lo, int hi) { return {Kind::kRandomShorterSide, lo, hi, 0, 0}; }
  static ResizeRule fixed(int h, int w) { return {Kind::kFixed, 0, 0, h, w}; }

  void validate() const {
    switch (kind) {
      case Kind::kNone: break;
      case Kind::kShorterSide: require<ConfigError>(size > 0, "shorter_side size must be positive"); break;
      case Kind::kRandomShorterSide:
        require<ConfigError>(size > 0 && size_max >= size, "random_shorter_side needs 0 < min <= max, got ", size, ", ",
                             size_max);
        break;
      case Kind::kFixed: require<ConfigError>(height > 0 && width > 0, "fixed resize needs positive height and width");
    }
  }

  nlohmann::json to_json() const {
    switch (kind) {
      case Kind::kNone: return {{"rule", "none"}};
      case Kind::kShorterSide: return {{"rule", "shorter_side"}, {"size", size}};
      case Kind::kRandomShorterSide: return {{"rule", "random_shorter_side"}, {"min", size}, {"max", size_max}};
      case Kind::kFixed: return {{"rule", "fixed"}, {"height", height}, {"width", width}};
    }
    return {};
  }

  static ResizeRule from_json(const nlohmann::json& j) {
    ResizeRule r;
    try {
      const std::string rule = j.value("rule", "none");
      if (rule == "none") {
        r = none();
      } else if (rule == "shorter_side") {
        r = shorter_side(j.at("size").get<int>());
      } else if (rule == "random_shorter_side") {
        r = random_shorter_side(j.at("min").get<int>(), j.at("max").get<int>());
      } else if (rule == "fixed") {
        r = fixed(j.at("height").get<int>(), j.at("width").get<int>());
      } else {
        raise<ConfigError>("unknown resize rule '", rule, "'");
      }
    } catch (const nlohmann::json::exception& e) {
      raise<ConfigError>("invalid resize rule: ", e.what());
    }
    r.validate();
    return r;
  }

  friend bool operator==(const ResizeRule&, const ResizeRule&) = default;
};

struct DatasetDescriptor {
  std::string name;
  double score_lo = 0.0, score_hi = 1.0;
  bool higher_is_better = true;
  DatasetKind kind = DatasetKind::kAuthentic;
  ResizeRule resize;
  std::filesystem::path manifest;    // absolute once loaded from a file
  std::filesystem::path image_root;  // empty: manifest directory

  nlohmann::json to_json() const {
    nlohmann::json j{{"name", name},
                     {"score_range", {score_lo, score_hi}},
                     {"higher_is_better", higher_is_better},
                     {"kind", to_string(kind)},
                     {"resize", resize.to_json()}};
    if (!manifest.empty()) j["manifest"] = manifest.string();
    if (!image_root.empty()) j["image_root"] = image_root.string();
    return j;
  }

  /// `base` resolves relative manifest and image_root paths.
  static DatasetDescriptor from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
    DatasetDescriptor d;
    try {
      d.name = j.at("name").get<std::string>();
      const auto range = j.at("score_range").get<std::vector<double>>();
      require<ConfigError>(range.size() == 2, "score_range must be [lo, hi]");
      d.score_lo = range[0];
      d.score_hi = range[1];
      d.higher_is_better = j.value("higher_is_better", true);
      const std::string kind = j.value("kind", "authentic");
      require<ConfigError>(kind == "synthetic" || kind == "authentic", "dataset kind must be synthetic or authentic, got '",
                           kind, "'");
      d.kind = kind == "synthetic" ? DatasetKind::kSynthetic : DatasetKind::kAuthentic;
      if (j.contains("resize")) d.resize = ResizeRule::from_json(j.at("resize"));
      auto resolve = [&](const std::string& p) {
        std::filesystem::path q(p);
        return q.is_relative() && !base.empty() ? base / q : q;
      };
      if (j.contains("manifest")) d.manifest = resolve(j.at("manifest").get<std::string>());
      if (j.contains("image_root")) d.image_root = resolve(j.at("image_root").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      raise<ConfigError>("invalid dataset descriptor: ", e.what());
    }
    require<ConfigError>(std::isfinite(d.score_lo) && std::isfinite(d.score_hi) && d.score_lo <= d.score_hi,
                         "dataset '", d.name, "' has an invalid score range [", d.score_lo, ", ", d.score_hi, "]");
    return d;
  }
};

inline DatasetDescriptor load_descriptor(const std::filesystem::path& path) {
  std::ifstream in(path);
  require<IoError>(in.good(), "cannot open dataset descriptor '", path.string(), "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    raise<ConfigError>("descriptor '", path.string(), "' is not valid JSON: ", e.what());
  }
  return DatasetDescriptor::from_json(j, path.parent_path());
}

struct SampleRecord {
  std::string image_ref;  // as written in the manifest
  std::filesystem::path image_path;
  double raw_score = 0.0;
  double score = 0.0;  // equals raw_score until normalized
  std::optional<std::string> distortion_type;
  std::optional<std::string> content_id;
  std::optional<std::string> split;  // fixed-official assignment: "train" or "test"
};

struct DatasetManifest {
  DatasetDescriptor descriptor;
  std::vector<SampleRecord> records;
  bool normalized = false;

  const std::string& name() const { return descriptor.name; }
  size_t size() const { return records.size(); }

  /// Group key for content-disjoint splitting. Authentic datasets fall back
  /// to record identity when no content_id is given.
  std::optional<std::string> content_group(const SampleRecord& r) const {
    if (r.content_id) return r.content_id;
    if (descriptor.kind == DatasetKind::kAuthentic) return "record:" + r.image_ref;
    return std::nullopt;
  }

  std::vector<double> scores() const {
    std::vector<double> s;
    s.reserve(records.size());
    for (const auto& r : records) s.push_back(r.score);
    return s;
  }

  /// Same descriptor, selected records (in the given order).
  DatasetManifest subset(const std::vector<size_t>& idx) const {
    DatasetManifest m;
    m.descriptor = descriptor;
    m.normalized = normalized;
    m.records.reserve(idx.size());
    for (size_t i : idx) m.records.push_back(records.at(i));
    return m;
  }
};

namespace detail {

inline std::vector<std::string> split_delimited(const std::string& line, char delim, size_t lineno) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == delim) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  require<ValidationError>(!quoted, "line ", lineno, ": unterminated quoted field");
  out.push_back(cur);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

inline char sniff_delimiter(const std::string& header) {
  for (char c : {'\t', ';', ','})
    if (header.find(c) != std::string::npos) return c;
  return ',';
}

}  // namespace detail

/// Parses and validates a manifest against its descriptor.
inline DatasetManifest parse_manifest(std::istream& in, const DatasetDescriptor& desc,
                                      const std::filesystem::path& image_base = {}) {
  DatasetManifest m;
  m.descriptor = desc;
  std::vector<std::pair<size_t, std::string>> lines;
  {
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      lines.emplace_back(lineno, std::move(line));
    }
  }
  std::vector<std::string> header;
  char delim = ',';
  if (!lines.empty()) {
    delim = detail::sniff_delimiter(lines.front().second);
    header = detail::split_delimited(lines.front().second, delim, lines.front().first);
  }
  require<ValidationError>(!header.empty(), "manifest for '", desc.name, "' is empty");
  std::map<std::string, size_t> col;
  for (size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* needed : {"image_ref", "score"})
    require<ValidationError>(col.count(needed), "manifest for '", desc.name, "' is missing column '", needed, "'");
  auto opt_col = [&](const char* name) { return col.count(name) ? std::optional<size_t>(col.at(name)) : std::nullopt; };
  const auto dcol = opt_col("distortion_type"), ccol = opt_col("content_id"), scol = opt_col("split");
  const std::filesystem::path root = desc.image_root.empty() ? image_base : desc.image_root;

  std::map<std::string, size_t> seen;
  std::vector<std::string> duplicates;
  auto handle = [&](const std::string& text, size_t ln) {
    const auto f = detail::split_delimited(text, delim, ln);
    require<ValidationError>(f.size() >= header.size(), "line ", ln, ": expected ", header.size(), " fields, got ",
                             f.size());
    SampleRecord r;
    r.image_ref = f[col.at("image_ref")];
    require<ValidationError>(!r.image_ref.empty(), "line ", ln, ": empty image_ref");
    const std::string& s = f[col.at("score")];
    size_t used = 0;
    try {
      r.raw_score = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require<ValidationError>(used == s.size() && !s.empty() && std::isfinite(r.raw_score), "line ", ln,
                             ": score '", s, "' is not a finite number");
    require<ValidationError>(r.raw_score >= desc.score_lo && r.raw_score <= desc.score_hi, "line ", ln, ": score ",
                             r.raw_score, " outside declared range [", desc.score_lo, ", ", desc.score_hi, "]");
    r.score = r.raw_score;
    if (dcol && !f[*dcol].empty()) r.distortion_type = f[*dcol];
    if (ccol && !f[*ccol].empty()) r.content_id = f[*ccol];
    if (scol && !f[*scol].empty()) {
      require<ValidationError>(f[*scol] == "train" || f[*scol] == "test", "line ", ln, ": split must be train or test, got '",
                               f[*scol], "'");
      r.split = f[*scol];
    }
    std::filesystem::path p(r.image_ref);
    r.image_path = p.is_relative() && !root.empty() ? root / p : p;
    if (auto [it, fresh] = seen.emplace(r.image_ref, ln); !fresh)
      duplicates.push_back("'" + r.image_ref + "' (lines " + std::to_string(it->second) + " and " + std::to_string(ln) + ")");
    m.records.push_back(std::move(r));
  };
  for (size_t i = 1; i < lines.size(); ++i) handle(lines[i].second, lines[i].first);
  if (!duplicates.empty()) {
    std::string list;
    for (const auto& d : duplicates) list += (list.empty() ? "" : ", ") + d;
    raise<ValidationError>("manifest for '", desc.name, "' has duplicate image_ref: ", list);
  }
  require<ValidationError>(!m.records.empty(), "manifest for '", desc.name, "' has no records");
  if (desc.kind == DatasetKind::kSynthetic)
    for (size_t i = 0; i < m.records.size(); ++i)
      require<ValidationError>(m.records[i].content_id.has_value(), "synthetic dataset '", desc.name, "': record '",
                               m.records[i].image_ref, "' has no content_id");
  return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& path, const DatasetDescriptor& desc) {
  std::ifstream in(path);
  require<IoError>(in.good(), "cannot open manifest '", path.string(), "'");
  return parse_manifest(in, desc, path.parent_path());
}

/// Loads a descriptor and the manifest it names.
inline DatasetManifest load_dataset(const std::filesystem::path& descriptor_path) {
  auto desc = load_descriptor(descriptor_path);
  require<ConfigError>(!desc.manifest.empty(), "descriptor '", descriptor_path.string(), "' names no manifest");
  return load_manifest(desc.manifest, desc);
}

/// Min-max scales scores to [0, 1] over the declared range, inverting when
/// lower raw scores mean better quality, so 1 is always best.
inline DatasetManifest normalize_labels(const DatasetManifest& m) {
  if (m.normalized) return m;
  const double lo = m.descriptor.score_lo, hi = m.descriptor.score_hi;
  require<DegenerateRangeError>(hi > lo, "dataset '", m.name(), "' has degenerate score range [", lo, ", ", hi, "]");
  DatasetManifest out = m;
  for (auto& r : out.records) {
    const double t = (r.raw_score - lo) / (hi - lo);
    r.score = m.descriptor.higher_is_better ? t : 1.0 - t;
  }
  out.normalized = true;
  return out;
}

}  // namespace codi
