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

// Correlation and error metrics between predictions and labels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "codi/core/error.hpp"

namespace codi {

namespace detail {

inline void check_pair(std::span<const double> a, std::span<const double> b, const char* what) {
  require<InputError>(a.size() == b.size(), what, ": length mismatch (", a.size(), " vs ", b.size(), ")");
  require<InputError>(a.size() >= 2, what, " needs at least 2 samples, got ", a.size());
  for (size_t i = 0; i < a.size(); ++i)
    require<InputError>(std::isfinite(a[i]) && std::isfinite(b[i]), what, ": non-finite value at index ", i);
}

inline bool is_constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

inline double pearson_unchecked(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

}  // namespace detail

/// 1-based ranks; tied values share the average of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<size_t> order(v.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t i, size_t j) { return v[i] < v[j]; });
  std::vector<double> ranks(v.size());
  for (size_t i = 0; i < order.size();) {
    size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double plcc(std::span<const double> preds, std::span<const double> labels) {
  detail::check_pair(preds, labels, "plcc");
  require<UndefinedMetricError>(!detail::is_constant(preds) && !detail::is_constant(labels),
                                "plcc is undefined for zero-variance input");
  return detail::pearson_unchecked(preds, labels);
}

inline double srcc(std::span<const double> preds, std::span<const double> labels) {
  detail::check_pair(preds, labels, "srcc");
  require<UndefinedMetricError>(!detail::is_constant(preds) && !detail::is_constant(labels),
                                "srcc is undefined for constant input");
  const auto rp = average_ranks(preds), rl = average_ranks(labels);
  return detail::pearson_unchecked(rp, rl);
}

/// Kendall tau-b in O(n log n): sort by (x, y), then count discordant pairs
/// as merge-sort exchanges on y.
inline double krcc(std::span<const double> preds, std::span<const double> labels) {
  detail::check_pair(preds, labels, "krcc");
  require<UndefinedMetricError>(!detail::is_constant(preds) && !detail::is_constant(labels),
                                "krcc is undefined for constant input");
  const size_t n = preds.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(), [&](size_t i, size_t j) {
    return preds[i] < preds[j] || (preds[i] == preds[j] && labels[i] < labels[j]);
  });
  auto tied_pairs = [](uint64_t run) { return run * (run - 1) / 2; };
  uint64_t x_ties = 0, joint_ties = 0;
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j + 1 < n && preds[idx[j + 1]] == preds[idx[i]]) ++j;
    x_ties += tied_pairs(j - i + 1);
    for (size_t a = i; a <= j;) {
      size_t b = a;
      while (b + 1 <= j && labels[idx[b + 1]] == labels[idx[a]]) ++b;
      joint_ties += tied_pairs(b - a + 1);
      a = b + 1;
    }
    i = j + 1;
  }
  std::vector<double> y(n), buf(n);
  for (size_t i = 0; i < n; ++i) y[i] = labels[idx[i]];
  uint64_t swaps = 0;
  for (size_t width = 1; width < n; width *= 2) {
    for (size_t lo = 0; lo < n; lo += 2 * width) {
      const size_t mid = std::min(lo + width, n), hi = std::min(lo + 2 * width, n);
      size_t a = lo, b = mid, k = lo;
      while (a < mid && b < hi) {
        if (y[b] < y[a]) {
          swaps += mid - a;
          buf[k++] = y[b++];
        } else {
          buf[k++] = y[a++];
        }
      }
      while (a < mid) buf[k++] = y[a++];
      while (b < hi) buf[k++] = y[b++];
    }
    std::swap(y, buf);
  }
  uint64_t y_ties = 0;
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j + 1 < n && y[j + 1] == y[i]) ++j;
    y_ties += tied_pairs(j - i + 1);
    i = j + 1;
  }
  const double total = static_cast<double>(tied_pairs(n));
  const double s = total - static_cast<double>(x_ties) - static_cast<double>(y_ties) +
                   static_cast<double>(joint_ties) - 2.0 * static_cast<double>(swaps);
  const double denom = std::sqrt(total - static_cast<double>(x_ties)) * std::sqrt(total - static_cast<double>(y_ties));
  return std::clamp(s / denom, -1.0, 1.0);
}

inline double rmse(std::span<const double> preds, std::span<const double> labels) {
  require<InputError>(preds.size() == labels.size() && !preds.empty(), "rmse needs equal non-empty inputs, got ",
                      preds.size(), " and ", labels.size());
  double s = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    require<InputError>(std::isfinite(preds[i]) && std::isfinite(labels[i]), "rmse: non-finite value at index ", i);
    s += (preds[i] - labels[i]) * (preds[i] - labels[i]);
  }
  return std::sqrt(s / static_cast<double>(preds.size()));
}

/// One evaluation. A correlation that is undefined for the inputs is left
/// empty and its reason recorded in `undefined`.
struct MetricsReport {
  std::optional<double> srcc, plcc, krcc;
  double rmse = 0.0;
  int64_t n = 0;
  std::map<std::string, std::string> undefined;
  nlohmann::json metadata = nlohmann::json::object();

  bool complete() const { return undefined.empty(); }

  /// Throws UndefinedMetricError naming the first undefined metric.
  void require_defined() const {
    if (!undefined.empty()) raise<UndefinedMetricError>(undefined.begin()->first, ": ", undefined.begin()->second);
  }

  nlohmann::json to_json() const {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json j{{"srcc", opt(srcc)}, {"plcc", opt(plcc)}, {"krcc", opt(krcc)},
                     {"rmse", rmse},      {"n", n},           {"metadata", metadata}};
    if (!undefined.empty()) j["undefined"] = undefined;
    return j;
  }

  static MetricsReport from_json(const nlohmann::json& j) {
    MetricsReport r;
    auto opt = [&](const char* k) -> std::optional<double> {
      if (!j.contains(k) || j.at(k).is_null()) return std::nullopt;
      return j.at(k).get<double>();
    };
    try {
      r.srcc = opt("srcc");
      r.plcc = opt("plcc");
      r.krcc = opt("krcc");
      r.rmse = j.at("rmse").get<double>();
      r.n = j.at("n").get<int64_t>();
      if (j.contains("undefined")) r.undefined = j.at("undefined").get<std::map<std::string, std::string>>();
      r.metadata = j.value("metadata", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
      raise<InputError>("malformed metrics report: ", e.what());
    }
    return r;
  }

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline MetricsReport compute_report(std::span<const double> preds, std::span<const double> labels,
                                    nlohmann::json metadata = nlohmann::json::object()) {
  MetricsReport r;
  r.n = static_cast<int64_t>(preds.size());
  r.rmse = rmse(preds, labels);
  r.metadata = std::move(metadata);
  auto attempt = [&](const char* name, std::optional<double>& slot, auto fn) {
    try {
      slot = fn(preds, labels);
    } catch (const UndefinedMetricError& e) {
      r.undefined[name] = e.what();
    }
  };
  attempt("srcc", r.srcc, [](auto a, auto b) { return srcc(a, b); });
  attempt("plcc", r.plcc, [](auto a, auto b) { return plcc(a, b); });
  attempt("krcc", r.krcc, [](auto a, auto b) { return krcc(a, b); });
  return r;
}

/// Lower median: element (k-1)/2 of the sorted values.
inline double lower_median(std::vector<double> v) {
  require<InputError>(!v.empty(), "median of an empty list");
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

/// Per-metric lower median across runs. A correlation undefined in every run
/// stays undefined; otherwise only runs where it is defined contribute.
inline MetricsReport aggregate_runs(const std::vector<MetricsReport>& runs) {
  require<InputError>(!runs.empty(), "cannot aggregate zero runs");
  if (runs.size() == 1) return runs.front();
  MetricsReport out;
  auto med = [&](const char* name, std::optional<double> MetricsReport::*field) {
    std::vector<double> v;
    for (const auto& r : runs)
      if (r.*field) v.push_back(*(r.*field));
    if (v.empty()) {
      out.undefined[name] = "undefined in every run";
      return std::optional<double>{};
    }
    return std::optional<double>{lower_median(v)};
  };
  out.srcc = med("srcc", &MetricsReport::srcc);
  out.plcc = med("plcc", &MetricsReport::plcc);
  out.krcc = med("krcc", &MetricsReport::krcc);
  std::vector<double> rm, ns;
  for (const auto& r : runs) {
    rm.push_back(r.rmse);
    ns.push_back(static_cast<double>(r.n));
  }
  out.rmse = lower_median(rm);
  out.n = static_cast<int64_t>(lower_median(ns));
  out.metadata = {{"aggregate", "lower-median"}, {"runs", runs.size()}};
  return out;
}

}  // namespace codi
