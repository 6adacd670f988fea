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

// Experiment grids: single-dataset runs, cross-dataset evaluation,
// data-efficiency sweeps, leave-one-distortion-out and ablations. Each
// experiment writes a self-describing report bundle:
//
//   <dir>/config.snapshot     resolved config, seeds, environment fingerprint
//   <dir>/runs/<id>/report    per-run reports keyed by test dataset
//   <dir>/runs/<id>/train.log per-epoch JSON lines
//   <dir>/median.report       lower-median aggregate per condition and dataset
//   <dir>/checkpoints/<id>.ckpt

#include <sys/utsname.h>

#include <Eigen/Core>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/core/version.hpp>

#include "codi/core/log.hpp"
#include "codi/data/split.hpp"
#include "codi/train/trainer.hpp"

namespace codi {

enum class ExperimentKind { kSingle, kCrossDataset, kEfficiency, kLeaveOneDistortionOut, kAblation };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::kSingle: return "single";
    case ExperimentKind::kCrossDataset: return "cross-dataset";
    case ExperimentKind::kEfficiency: return "efficiency";
    case ExperimentKind::kLeaveOneDistortionOut: return "loo-distortion";
    case ExperimentKind::kAblation: return "ablation";
  }
  return "?";
}

inline ExperimentKind experiment_kind_from_string(const std::string& s) {
  for (auto k : {ExperimentKind::kSingle, ExperimentKind::kCrossDataset, ExperimentKind::kEfficiency,
                 ExperimentKind::kLeaveOneDistortionOut, ExperimentKind::kAblation})
    if (to_string(k) == s) return k;
  raise<ConfigError>("unknown experiment kind '", s,
                     "' (expected single, cross-dataset, efficiency, loo-distortion or ablation)");
}

/// Parses "4..0", "0..4", "4,3,2" or "3" into a stage list.
inline std::vector<int> parse_stage_list(const std::string& s) {
  std::vector<int> out;
  auto to_int = [&](const std::string& t) {
    require<ConfigError>(!t.empty() && t.find_first_not_of("0123456789") == std::string::npos, "bad stage list '", s,
                         "'");
    return std::stoi(t);
  };
  if (auto dots = s.find(".."); dots != std::string::npos) {
    const int a = to_int(s.substr(0, dots)), b = to_int(s.substr(dots + 2));
    for (int v = std::min(a, b); v <= std::max(a, b); ++v) out.push_back(v);
    return out;
  }
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(to_int(tok));
  require<ConfigError>(!out.empty(), "empty stage list");
  return out;
}

/// Applies an ablation variant to a model configuration. Variants are
/// '+'-joined tokens: full, coarse-only, fine-only, content-offsets,
/// no-split, single-ppim, stages=<list>, dim=<D>, squeeze=<r>.
inline ModelConfig apply_variant(ModelConfig c, const std::string& variant) {
  std::stringstream ss(variant);
  std::string tok;
  while (std::getline(ss, tok, '+')) {
    const auto eq = tok.find('=');
    const std::string key = tok.substr(0, eq), val = eq == std::string::npos ? "" : tok.substr(eq + 1);
    auto number = [&] {
      require<ConfigError>(!val.empty() && val.find_first_not_of("0123456789") == std::string::npos,
                           "variant token '", tok, "' needs a positive integer");
      return std::stoll(val);
    };
    if (key == "full") {
    } else if (key == "coarse-only") {
      c.switches.fine = false;
    } else if (key == "fine-only") {
      c.switches.coarse = false;
    } else if (key == "content-offsets") {
      c.switches.content_offsets = true;
    } else if (key == "no-split") {
      c.switches.split = false;
    } else if (key == "single-ppim") {
      c.single_block = true;
    } else if (key == "stages") {
      c.stages = parse_stage_list(val);
    } else if (key == "dim") {
      c.dim = number();
    } else if (key == "squeeze") {
      c.squeeze = number();
    } else {
      raise<ConfigError>("unknown ablation variant token '", tok, "'");
    }
  }
  c.validate();
  return c;
}

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kSingle;
  std::filesystem::path train_dataset;               // descriptor JSON
  std::vector<std::filesystem::path> test_datasets;  // cross-dataset targets
  SplitPlan split;
  std::vector<double> fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  double test_fraction = 0.2;
  ModelConfig model;
  TrainConfig train;
  FreezePolicy policy = FreezePolicy::from_strategy('B');
  std::vector<std::string> variants{"full"};
  /// Encoder weight sources: checkpoint paths or "random:seed=<n>". Unset
  /// sources get seeded random weights derived from the run seed.
  std::optional<std::string> content_weights, distortion_weights;
  int repeat = 10;
  uint64_t seed = 0;

  void validate() const {
    require<ConfigError>(repeat >= 1, "repeat count must be at least 1, got ", repeat);
    require<ConfigError>(!train_dataset.empty(), "train_dataset is required");
    model.validate();
    train.validate();
    if (kind == ExperimentKind::kCrossDataset) {
      require<ConfigError>(!test_datasets.empty(), "cross-dataset experiments need test_datasets");
      for (const auto& t : test_datasets)
        require<ConfigError>(std::filesystem::weakly_canonical(t) != std::filesystem::weakly_canonical(train_dataset),
                             "test dataset '", t.string(), "' is the training dataset");
    }
    if (kind == ExperimentKind::kEfficiency) require<ConfigError>(!fractions.empty(), "efficiency needs fractions");
    if (kind == ExperimentKind::kAblation) {
      require<ConfigError>(!variants.empty(), "ablation needs variants");
      for (const auto& v : variants) apply_variant(model, v);
    }
    if (kind == ExperimentKind::kSingle || kind == ExperimentKind::kAblation)
      require<ConfigError>(split.mode != SplitMode::kLeaveOneDistortionOut,
                           "use the loo-distortion experiment kind for leave-one-distortion-out splits");
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"kind", to_string(kind)},
                     {"train_dataset", train_dataset.string()},
                     {"split", split.to_json()},
                     {"fractions", fractions},
                     {"test_fraction", test_fraction},
                     {"model", model.to_json()},
                     {"train", train.to_json()},
                     {"strategy", policy.name()},
                     {"variants", variants},
                     {"repeat", repeat},
                     {"seed", seed}};
    j["test_datasets"] = nlohmann::json::array();
    for (const auto& t : test_datasets) j["test_datasets"].push_back(t.string());
    if (content_weights) j["content_weights"] = *content_weights;
    if (distortion_weights) j["distortion_weights"] = *distortion_weights;
    return j;
  }

  /// Relative paths resolve against `base` (the config file's directory).
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
    ExperimentConfig c;
    auto resolve = [&](const std::string& p) {
      std::filesystem::path q(p);
      return q.is_relative() && !base.empty() ? base / q : q;
    };
    auto resolve_source = [&](const std::string& s) {
      return parse_random_source(s) ? s : resolve(s).string();
    };
    try {
      if (j.contains("kind")) c.kind = experiment_kind_from_string(j.at("kind").get<std::string>());
      if (j.contains("train_dataset")) c.train_dataset = resolve(j.at("train_dataset").get<std::string>());
      if (j.contains("test_datasets"))
        for (const auto& t : j.at("test_datasets")) c.test_datasets.push_back(resolve(t.get<std::string>()));
      if (j.contains("split")) c.split = SplitPlan::from_json(j.at("split"));
      if (j.contains("fractions")) c.fractions = j.at("fractions").get<std::vector<double>>();
      c.test_fraction = j.value("test_fraction", c.test_fraction);
      if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
      if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
      if (j.contains("strategy")) c.policy = FreezePolicy::from_string(j.at("strategy").get<std::string>());
      if (j.contains("variants")) c.variants = j.at("variants").get<std::vector<std::string>>();
      if (j.contains("content_weights")) c.content_weights = resolve_source(j.at("content_weights").get<std::string>());
      if (j.contains("distortion_weights"))
        c.distortion_weights = resolve_source(j.at("distortion_weights").get<std::string>());
      c.repeat = j.value("repeat", c.repeat);
      c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
      raise<ConfigError>("invalid experiment config: ", e.what());
    }
    return c;
  }
};

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require<IoError>(in.good(), "cannot read experiment config '", path.string(), "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    raise<ConfigError>("'", path.string(), "' is not valid JSON: ", e.what());
  }
  return ExperimentConfig::from_json(j, path.parent_path());
}

/// Precision mode, library versions and device class. Bit-exact
/// reproduction only holds within one fingerprint.
inline nlohmann::json environment_fingerprint() {
  nlohmann::json j{{"precision", "float32"},
                   {"device", "cpu"},
                   {"threads", std::thread::hardware_concurrency()},
                   {"simd", Eigen::SimdInstructionSetsInUse()},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"opencv", CV_VERSION},
                   {"json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                   {"checkpoint_format", kCheckpointFormatVersion}};
#if defined(__clang__)
  j["compiler"] = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
  j["compiler"] = std::string("gcc ") + __VERSION__;
#endif
  utsname u{};
  if (uname(&u) == 0) {
    j["os"] = std::string(u.sysname) + " " + u.release;
    j["machine"] = u.machine;
  }
  return j;
}

/// Content hash of a manifest (refs and raw scores), used as a provenance tag.
inline std::string manifest_fingerprint(const DatasetManifest& m) {
  std::string bytes = m.name();
  for (const auto& r : m.records) {
    bytes += '\n' + r.image_ref + '\t';
    bytes += std::to_string(r.raw_score);
  }
  std::ostringstream oss;
  oss << std::hex << fnv1a(bytes);
  return oss.str();
}

struct RunRecord {
  std::string id, condition;
  int repeat = 0;
  uint64_t seed = 0;
  std::map<std::string, MetricsReport> reports;  // by test dataset
  TrainResult train;
  nlohmann::json provenance;

  nlohmann::json to_json() const {
    nlohmann::json r = nlohmann::json::object();
    for (const auto& [k, v] : reports) r[k] = v.to_json();
    return {{"id", id},
            {"condition", condition},
            {"repeat", repeat},
            {"seed", seed},
            {"reports", r},
            {"train",
             {{"steps", train.steps},
              {"best_epoch", train.best_epoch},
              {"train_records", train.train_records},
              {"val_records", train.val_records},
              {"validation_refs", train.val_image_refs},
              {"stopped_early", train.stopped_early}}},
            {"provenance", provenance}};
  }
};

struct ReportBundle {
  std::filesystem::path dir;
  std::vector<RunRecord> runs;
  /// condition -> dataset -> aggregated report
  std::map<std::string, std::map<std::string, MetricsReport>> median;
};

namespace detail {

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p);
  require<IoError>(out.good(), "cannot write '", p.string(), "'");
  out << j.dump(2) << "\n";
}

struct Condition {
  std::string label;
  ModelConfig model;
  DatasetManifest train;
  std::vector<DatasetManifest> tests;
};

inline BackboneParams encoder_weights(const std::optional<std::string>& source, EncoderRole role, BackboneKind kind,
                                      uint64_t run_seed) {
  const std::string src = source.value_or("random:seed=" + std::to_string(mix_seed(run_seed, fnv1a(to_string(role)))));
  return load_backbone_weights(src, slot_provenance(role), kind);
}

}  // namespace detail

/// Builds the (condition, train, tests) list for one repeat.
inline std::vector<detail::Condition> experiment_conditions(const ExperimentConfig& cfg, const DatasetManifest& data,
                                                            const std::vector<DatasetManifest>& targets,
                                                            uint64_t run_seed) {
  std::vector<detail::Condition> out;
  switch (cfg.kind) {
    case ExperimentKind::kSingle:
    case ExperimentKind::kAblation: {
      SplitPlan plan = cfg.split;
      plan.seed = run_seed;
      auto s = make_split(data, plan);
      for (const auto& v : cfg.kind == ExperimentKind::kSingle ? std::vector<std::string>{"full"} : cfg.variants)
        out.push_back({cfg.kind == ExperimentKind::kSingle ? "default" : "variant=" + v, apply_variant(cfg.model, v),
                       s.train, {s.test}});
      break;
    }
    case ExperimentKind::kCrossDataset:
      out.push_back({"default", cfg.model, data, targets});
      break;
    case ExperimentKind::kEfficiency: {
      auto plan = efficiency_subsets(data, cfg.fractions, mix_seed(cfg.seed, fnv1a("efficiency-test")),
                                     cfg.test_fraction, true, run_seed);
      for (size_t i = 0; i < plan.fractions.size(); ++i) {
        std::ostringstream label;
        label << "fraction=" << plan.fractions[i];
        out.push_back({label.str(), cfg.model, plan.subsets[i], {plan.test}});
      }
      break;
    }
    case ExperimentKind::kLeaveOneDistortionOut:
      for (const auto& plan : leave_one_distortion_out_plans(data, run_seed)) {
        auto s = make_split(data, plan);
        out.push_back({"held-out=" + *plan.held_out_distortion, cfg.model, s.train, {s.test}});
      }
      break;
  }
  return out;
}

/// Runs repeat x conditions x (train + evaluate). Images come from `src`
/// when given, otherwise from disk. Any failure writes error.json next to the
/// runs completed so far and rethrows.
inline ReportBundle run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                                   const ImageSource* src = nullptr) {
  cfg.validate();
  ReportBundle bundle;
  bundle.dir = dir;
  std::filesystem::create_directories(dir / "runs");
  std::filesystem::create_directories(dir / "checkpoints");
  FileImageSource files;
  const ImageSource& images = src ? *src : files;

  const auto data = normalize_labels(load_dataset(cfg.train_dataset));
  std::vector<DatasetManifest> targets;
  for (const auto& t : cfg.test_datasets) targets.push_back(normalize_labels(load_dataset(t)));
  for (const auto& t : targets)
    require<ConfigError>(t.name() != data.name(), "test dataset '", t.name(), "' has the training dataset's name");

  nlohmann::json snapshot{{"config", cfg.to_json()}, {"environment", environment_fingerprint()}};
  snapshot["config"]["train_dataset"] = std::filesystem::absolute(cfg.train_dataset).string();
  snapshot["datasets"][data.name()] = {{"fingerprint", manifest_fingerprint(data)}, {"records", data.size()}};
  for (const auto& t : targets)
    snapshot["datasets"][t.name()] = {{"fingerprint", manifest_fingerprint(t)}, {"records", t.size()}};
  for (int k = 0; k < cfg.repeat; ++k) snapshot["run_seeds"].push_back(mix_seed(cfg.seed, static_cast<uint64_t>(k)));
  detail::write_json(dir / "config.snapshot", snapshot);

  std::map<std::string, std::map<std::string, std::vector<MetricsReport>>> per_condition;
  try {
    for (int k = 0; k < cfg.repeat; ++k) {
      const uint64_t run_seed = mix_seed(cfg.seed, static_cast<uint64_t>(k));
      for (auto& cond : experiment_conditions(cfg, data, targets, run_seed)) {
        RunRecord run;
        run.condition = cond.label;
        run.repeat = k;
        run.seed = run_seed;
        run.id = (cond.label == "default" ? std::string("run") : cond.label) + "-r" + (k < 10 ? "0" : "") +
                 std::to_string(k);
        for (auto& ch : run.id)
          if (ch == '=' || ch == '/' || ch == ' ') ch = '_';
        log(LogLevel::kInfo, "run ", run.id, ": ", cond.train.size(), " training records");

        QualityModel<float> model(cond.model);
        model.reset_parameters(mix_seed(run_seed, fnv1a("model-init")));
        const auto cae = detail::encoder_weights(cfg.content_weights, EncoderRole::kContent,
                                                 cond.model.content_backbone, run_seed);
        const auto dae = detail::encoder_weights(cfg.distortion_weights, EncoderRole::kDistortion,
                                                 cond.model.distortion_backbone, run_seed);
        model.load_encoder(EncoderRole::kContent, cae);
        model.load_encoder(EncoderRole::kDistortion, dae);

        // Labels read during training come from cond.train only; test
        // manifests are touched after training, for evaluation.
        run.provenance = {{"label_access", {{"training", {{"dataset", cond.train.name()},
                                                          {"fingerprint", manifest_fingerprint(cond.train)},
                                                          {"records", cond.train.size()}}}}},
                          {"evaluation_only", nlohmann::json::array()},
                          {"encoders", {{"content", to_string(cae.provenance)}, {"distortion", to_string(dae.provenance)}}}};
        for (const auto& t : cond.tests)
          run.provenance["evaluation_only"].push_back(
              {{"dataset", t.name()}, {"fingerprint", manifest_fingerprint(t)}, {"records", t.size()}});

        // Resize rules come from the dataset descriptors unless the config
        // pins one.
        const bool pinned_resize = cfg.train.preprocess.resize.kind != ResizeRule::Kind::kNone;
        TrainConfig tc = cfg.train;
        tc.seed = run_seed;
        if (!pinned_resize) tc.preprocess.resize = cond.train.descriptor.resize;
        TrainOutputs outputs;
        outputs.log_path = dir / "runs" / run.id / "train.log";
        outputs.checkpoint_path = dir / "checkpoints" / (run.id + ".ckpt");
        outputs.checkpoint_manifest = {{"run", run.id}, {"condition", cond.label}, {"provenance", run.provenance}};
        run.train = train(model, cond.train, images, tc, cfg.policy, outputs);

        for (const auto& t : cond.tests) {
          require<SplitError>(t.size() >= 2, "test set of run ", run.id, " has ", t.size(), " records");
          PreprocessConfig pc = tc.preprocess;
          if (!pinned_resize) pc.resize = t.descriptor.resize;
          auto rep = evaluate(model, t, images, pc, tc.eval_batch_size,
                              {{"run", run.id}, {"condition", cond.label}, {"seed", run_seed}});
          per_condition[cond.label][t.name()].push_back(rep);
          run.reports.emplace(t.name(), std::move(rep));
        }
        detail::write_json(dir / "runs" / run.id / "report", run.to_json());
        bundle.runs.push_back(std::move(run));
      }
    }
  } catch (const Error& e) {
    detail::write_json(dir / "error.json", {{"error", {{"type", e.kind()}, {"message", e.what()}}},
                                            {"completed_runs", bundle.runs.size()}});
    throw;
  } catch (const std::exception& e) {
    detail::write_json(dir / "error.json", {{"error", {{"type", "internal"}, {"message", e.what()}}},
                                            {"completed_runs", bundle.runs.size()}});
    throw;
  }

  nlohmann::json median = nlohmann::json::object();
  for (const auto& [cond, by_ds] : per_condition)
    for (const auto& [ds, reps] : by_ds) {
      auto agg = aggregate_runs(reps);
      median[cond][ds] = agg.to_json();
      bundle.median[cond][ds] = std::move(agg);
    }
  detail::write_json(dir / "median.report", median);
  return bundle;
}

}  // namespace codi
