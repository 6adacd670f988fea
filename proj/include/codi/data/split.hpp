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

// Train/test split protocols and data-efficiency subsets.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "codi/core/rng.hpp"
#include "codi/data/manifest.hpp"

namespace codi {

enum class SplitMode { kContentDisjoint, kLeaveOneDistortionOut, kFixedOfficial };

inline const char* to_string(SplitMode m) {
  switch (m) {
    case SplitMode::kContentDisjoint: return "random-content-disjoint";
    case SplitMode::kLeaveOneDistortionOut: return "leave-one-distortion-out";
    case SplitMode::kFixedOfficial: return "fixed-official";
  }
  return "?";
}

inline SplitMode split_mode_from_string(const std::string& s) {
  if (s == "random-content-disjoint") return SplitMode::kContentDisjoint;
  if (s == "leave-one-distortion-out") return SplitMode::kLeaveOneDistortionOut;
  if (s == "fixed-official") return SplitMode::kFixedOfficial;
  raise<ConfigError>("unknown split mode '", s, "'");
}

struct SplitPlan {
  SplitMode mode = SplitMode::kContentDisjoint;
  double ratio = 0.8;  // fraction of content groups used for training
  uint64_t seed = 0;
  std::optional<std::string> held_out_distortion;

  void validate() const {
    require<ConfigError>(ratio > 0.0 && ratio <= 1.0, "split ratio must be in (0, 1], got ", ratio);
    require<ConfigError>(held_out_distortion.has_value() == (mode == SplitMode::kLeaveOneDistortionOut),
                         "held_out_distortion is required exactly for leave-one-distortion-out splits");
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"mode", to_string(mode)}, {"ratio", ratio}, {"seed", seed}};
    if (held_out_distortion) j["held_out_distortion"] = *held_out_distortion;
    return j;
  }

  static SplitPlan from_json(const nlohmann::json& j) {
    SplitPlan p;
    try {
      p.mode = split_mode_from_string(j.value("mode", "random-content-disjoint"));
      p.ratio = j.value("ratio", 0.8);
      p.seed = j.value("seed", uint64_t{0});
      if (j.contains("held_out_distortion")) p.held_out_distortion = j.at("held_out_distortion").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      raise<ConfigError>("invalid split plan: ", e.what());
    }
    p.validate();
    return p;
  }
};

struct Split {
  DatasetManifest train, test;
};

namespace detail {

/// Content groups in canonical (sorted) order with their record indices.
inline std::map<std::string, std::vector<size_t>> content_groups(const DatasetManifest& m) {
  std::map<std::string, std::vector<size_t>> groups;
  for (size_t i = 0; i < m.records.size(); ++i) {
    auto g = m.content_group(m.records[i]);
    require<SplitError>(g.has_value(), "record '", m.records[i].image_ref, "' of '", m.name(),
                        "' has no content_id; content-disjoint splitting needs one");
    groups[*g].push_back(i);
  }
  return groups;
}

inline std::vector<std::string> shuffled_keys(const std::map<std::string, std::vector<size_t>>& groups, uint64_t seed,
                                              std::string_view stream) {
  std::vector<std::string> keys;
  keys.reserve(groups.size());
  for (const auto& [k, _] : groups) keys.push_back(k);
  Rng rng(mix_seed(seed, fnv1a(stream)));
  shuffle_in_place(keys, rng);
  return keys;
}

inline std::vector<size_t> sorted_indices(const std::map<std::string, std::vector<size_t>>& groups,
                                          const std::vector<std::string>& keys) {
  std::vector<size_t> idx;
  for (const auto& k : keys) idx.insert(idx.end(), groups.at(k).begin(), groups.at(k).end());
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace detail

/// Distortion labels present in the manifest, sorted.
inline std::vector<std::string> distortion_types(const DatasetManifest& m) {
  std::set<std::string> s;
  for (const auto& r : m.records)
    if (r.distortion_type) s.insert(*r.distortion_type);
  return {s.begin(), s.end()};
}

inline Split make_split(const DatasetManifest& m, const SplitPlan& plan) {
  plan.validate();
  std::vector<size_t> train, test;
  switch (plan.mode) {
    case SplitMode::kContentDisjoint: {
      const auto groups = detail::content_groups(m);
      const auto keys = detail::shuffled_keys(groups, plan.seed, "content-split");
      const auto n_train = static_cast<size_t>(std::llround(plan.ratio * static_cast<double>(keys.size())));
      train = detail::sorted_indices(groups, {keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(n_train)});
      test = detail::sorted_indices(groups, {keys.begin() + static_cast<std::ptrdiff_t>(n_train), keys.end()});
      break;
    }
    case SplitMode::kLeaveOneDistortionOut: {
      const auto types = distortion_types(m);
      require<SplitError>(std::find(types.begin(), types.end(), *plan.held_out_distortion) != types.end(),
                          "distortion '", *plan.held_out_distortion, "' does not occur in '", m.name(), "'");
      for (size_t i = 0; i < m.records.size(); ++i) {
        const auto& d = m.records[i].distortion_type;
        require<SplitError>(d.has_value(), "record '", m.records[i].image_ref,
                            "' has no distortion_type; leave-one-distortion-out needs one per record");
        (*d == *plan.held_out_distortion ? test : train).push_back(i);
      }
      break;
    }
    case SplitMode::kFixedOfficial:
      for (size_t i = 0; i < m.records.size(); ++i) {
        const auto& s = m.records[i].split;
        require<SplitError>(s.has_value(), "record '", m.records[i].image_ref,
                            "' has no split column value; fixed-official splits need one per record");
        (*s == "train" ? train : test).push_back(i);
      }
      break;
  }
  return {m.subset(train), m.subset(test)};
}

/// One plan per distortion type; their test sets partition the manifest.
inline std::vector<SplitPlan> leave_one_distortion_out_plans(const DatasetManifest& m, uint64_t seed = 0) {
  std::vector<SplitPlan> plans;
  for (const auto& t : distortion_types(m)) {
    SplitPlan p;
    p.mode = SplitMode::kLeaveOneDistortionOut;
    p.ratio = 1.0;
    p.seed = seed;
    p.held_out_distortion = t;
    plans.push_back(p);
  }
  require<SplitError>(!plans.empty(), "'", m.name(), "' has no distortion labels");
  return plans;
}

struct EfficiencyPlan {
  DatasetManifest test;
  std::vector<double> fractions;
  std::vector<DatasetManifest> subsets;  // one per fraction
};

/// Carves a fixed content-disjoint test split of `test_fraction`, then draws a
/// training subset of round(f * |dataset|) records from the remaining pool for
/// each fraction f. Subsets take whole content groups in shuffled order until
/// the target is reached. Nested subsets share one shuffle, so each contains
/// the smaller ones. `subset_seed` (default: `seed`) redraws the subsets
/// while keeping the test split fixed.
inline EfficiencyPlan efficiency_subsets(const DatasetManifest& m, const std::vector<double>& fractions, uint64_t seed,
                                         double test_fraction = 0.2, bool nested = true,
                                         std::optional<uint64_t> subset_seed = std::nullopt) {
  require<ConfigError>(test_fraction > 0.0 && test_fraction < 1.0, "test fraction must be in (0, 1)");
  for (double f : fractions) {
    require<ConfigError>(f > 0.0 && f < 1.0, "efficiency fraction ", f, " is outside (0, 1)");
    // A subset must leave part of the pool unused; f + test = 1 is rejected.
    require<SplitError>(f + test_fraction < 1.0 - 1e-12, "fraction ", f, " plus the ", test_fraction,
                        " test split leaves no headroom in the dataset");
  }
  SplitPlan plan;
  plan.ratio = 1.0 - test_fraction;
  plan.seed = seed;
  Split s = make_split(m, plan);
  EfficiencyPlan out;
  out.test = s.test;
  out.fractions = fractions;
  const auto pool_groups = detail::content_groups(s.train);
  for (size_t fi = 0; fi < fractions.size(); ++fi) {
    const uint64_t draw = subset_seed.value_or(seed);
    const auto keys = detail::shuffled_keys(pool_groups, nested ? draw : mix_seed(draw, fi), "efficiency-subset");
    const auto target = static_cast<size_t>(std::llround(fractions[fi] * static_cast<double>(m.size())));
    std::vector<std::string> take;
    size_t count = 0;
    for (const auto& k : keys) {
      if (count >= target) break;
      take.push_back(k);
      count += pool_groups.at(k).size();
    }
    out.subsets.push_back(s.train.subset(detail::sorted_indices(pool_groups, take)));
  }
  return out;
}

}  // namespace codi
