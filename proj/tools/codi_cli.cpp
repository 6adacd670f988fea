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


// Command-line entry point: experiment grids, checkpoint evaluation,
// attention export and synthetic data generation.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "codi/data/synthetic.hpp"
#include "codi/harness/attention.hpp"
#include "codi/harness/experiment.hpp"

namespace fs = std::filesystem;

namespace {

struct Overrides {
  std::string config;
  std::string out;
  std::optional<uint64_t> seed;
  std::optional<std::string> strategy, stages, fraction;
  std::optional<int64_t> dim_d, dim_r;
  std::optional<int> repeat;
  std::vector<std::string> variants;
};

void add_common(CLI::App* cmd, Overrides& o, bool experiment) {
  cmd->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, experiment ? "run directory" : "output file");
  if (!experiment) return;
  cmd->add_option("--seed", o.seed, "base seed");
  cmd->add_option("--strategy", o.strategy, "freeze strategy A|B|C|D");
  cmd->add_option("--stages", o.stages, "interaction stages, e.g. 4..0 or 4,3");
  cmd->add_option("--dim-d", o.dim_d, "interaction width D");
  cmd->add_option("--dim-r", o.dim_r, "fine-path squeeze width r");
  cmd->add_option("--fraction", o.fraction, "training fraction(s) for sweeps, comma-separated");
  cmd->add_option("--repeat", o.repeat, "repeat count");
}

nlohmann::json read_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  codi::require<codi::IoError>(in.good(), "cannot read config '", path, "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    codi::raise<codi::ConfigError>("'", path, "' is not valid JSON: ", e.what());
  }
}

std::vector<double> parse_fractions(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      size_t used = 0;
      out.push_back(std::stod(tok, &used));
      codi::require<codi::ConfigError>(used == tok.size(), "bad fraction '", tok, "'");
    } catch (const std::logic_error&) {
      codi::raise<codi::ConfigError>("bad fraction '", tok, "'");
    }
  }
  codi::require<codi::ConfigError>(!out.empty(), "empty --fraction list");
  return out;
}

int run_grid(codi::ExperimentKind kind, const Overrides& o) {
  const auto j = read_config(o.config);
  auto cfg = codi::ExperimentConfig::from_json(j, o.config.empty() ? fs::path() : fs::path(o.config).parent_path());
  if (j.contains("kind"))
    codi::require<codi::ConfigError>(cfg.kind == kind, "config kind '", codi::to_string(cfg.kind),
                                     "' does not match this command (", codi::to_string(kind), ")");
  cfg.kind = kind;
  if (o.seed) cfg.seed = *o.seed;
  if (o.strategy) cfg.policy = codi::FreezePolicy::from_string(*o.strategy);
  if (o.stages) cfg.model.stages = codi::parse_stage_list(*o.stages);
  if (o.dim_d) cfg.model.dim = *o.dim_d;
  if (o.dim_r) cfg.model.squeeze = *o.dim_r;
  if (o.fraction) cfg.fractions = parse_fractions(*o.fraction);
  if (o.repeat) cfg.repeat = *o.repeat;
  if (!o.variants.empty()) cfg.variants = o.variants;

  fs::path dir = o.out;
  if (dir.empty()) dir = j.contains("output_dir") ? fs::path(j.at("output_dir").get<std::string>()) : fs::path("runs") / codi::to_string(kind);
  auto bundle = codi::run_experiment(cfg, dir);
  nlohmann::json summary{{"bundle", fs::absolute(dir).string()}, {"runs", bundle.runs.size()}};
  summary["median"] = nlohmann::json::object();
  for (const auto& [cond, by_ds] : bundle.median)
    for (const auto& [ds, rep] : by_ds) summary["median"][cond][ds] = rep.to_json();
  std::cout << summary.dump(2) << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint, dataset;
  std::optional<int> crop;
};

int run_eval(const Overrides& o, const EvalArgs& a) {
  const auto j = read_config(o.config);
  const fs::path base = o.config.empty() ? fs::path() : fs::path(o.config).parent_path();
  auto pick = [&](const std::string& flag, const char* key) {
    if (!flag.empty()) return fs::path(flag);
    codi::require<codi::ConfigError>(j.contains(key), "missing --", key, " (or \"", key, "\" in the config)");
    fs::path p = j.at(key).get<std::string>();
    return p.is_relative() ? base / p : p;
  };
  const auto ckpt = pick(a.checkpoint, "checkpoint");
  const auto ds = codi::load_dataset(pick(a.dataset, "dataset"));
  std::optional<codi::PreprocessConfig> requested;
  if (a.crop || j.contains("crop")) {
    auto loaded = codi::read_checkpoint(ckpt);
    codi::PreprocessConfig pc;
    if (loaded.manifest.contains("preprocess")) pc = codi::PreprocessConfig::from_json(loaded.manifest.at("preprocess"));
    pc.crop = a.crop.value_or(j.value("crop", pc.crop));
    pc.resize = ds.descriptor.resize;
    requested = pc;
  }
  codi::FileImageSource images;
  auto report = codi::evaluate_checkpoint(ckpt, ds, images, requested);
  const std::string text = report.to_json().dump(2);
  if (!o.out.empty()) {
    std::ofstream out(o.out);
    codi::require<codi::IoError>(out.good(), "cannot write '", o.out, "'");
    out << text << "\n";
  }
  std::cout << text << "\n";
  return 0;
}

struct AttentionArgs {
  std::string checkpoint, image, stage = "fused", overlay;
};

int run_attention(const Overrides& o, const AttentionArgs& a) {
  const auto j = read_config(o.config);
  const std::string ckpt = !a.checkpoint.empty() ? a.checkpoint : j.value("checkpoint", "");
  const std::string image = !a.image.empty() ? a.image : j.value("image", "");
  codi::require<codi::ConfigError>(!ckpt.empty() && !image.empty(), "export-attention needs --checkpoint and --image");
  const fs::path out = !o.out.empty() ? fs::path(o.out) : fs::path(j.value("out", "attention.png"));
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  auto r = codi::export_attention(ckpt, image, codi::AttentionSelector::parse(a.stage), out, a.overlay);
  std::cout << nlohmann::json{{"heatmap", out.string()},
                              {"overlay", a.overlay},
                              {"feature_size", {r.feature_height, r.feature_width}},
                              {"size", {r.heatmap.rows, r.heatmap.cols}}}
                   .dump(2)
            << "\n";
  return 0;
}

struct SynthArgs {
  int contents = 4, levels = 3, size = 64;
  uint64_t seed = 0;
  std::vector<std::string> distortions;
  std::string name = "synthetic";
};

int run_synth(const Overrides& o, const SynthArgs& a) {
  codi::require<codi::ConfigError>(!o.out.empty(), "synth-data needs --out <dir>");
  codi::SyntheticSpec spec;
  spec.contents = a.contents;
  spec.levels = a.levels;
  spec.height = spec.width = a.size;
  spec.seed = a.seed;
  if (!a.distortions.empty()) spec.distortions = a.distortions;
  const auto desc = codi::write_synthetic_dataset(o.out, spec, a.name);
  std::cout << nlohmann::json{{"descriptor", desc.string()}}.dump() << "\n";
  return 0;
}

void emit_error(const std::string& type, const std::string& message) {
  std::cerr << nlohmann::json{{"error", {{"type", type}, {"message", message}}}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quality assessment with content-distortion interaction"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "debug|info|warning|error");

  Overrides o;
  EvalArgs ev;
  AttentionArgs at;
  SynthArgs sy;
  const std::vector<std::pair<std::string, codi::ExperimentKind>> grids{
      {"train", codi::ExperimentKind::kSingle},
      {"cross-eval", codi::ExperimentKind::kCrossDataset},
      {"sweep", codi::ExperimentKind::kEfficiency},
      {"loo-distortion", codi::ExperimentKind::kLeaveOneDistortionOut},
      {"ablate", codi::ExperimentKind::kAblation}};
  std::vector<std::pair<CLI::App*, codi::ExperimentKind>> grid_cmds;
  for (const auto& [name, kind] : grids) {
    auto* cmd = app.add_subcommand(name, "run the " + codi::to_string(kind) + " experiment");
    add_common(cmd, o, true);
    if (kind == codi::ExperimentKind::kAblation)
      cmd->add_option("--variant", o.variants, "ablation variants, e.g. full coarse-only stages=4,3");
    grid_cmds.push_back({cmd, kind});
  }

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  add_common(eval, o, false);
  eval->add_option("--checkpoint", ev.checkpoint, "model checkpoint");
  eval->add_option("--dataset", ev.dataset, "dataset descriptor JSON");
  eval->add_option("--crop", ev.crop, "crop size; must match the checkpoint's");

  auto* attn = app.add_subcommand("export-attention", "write an activation heatmap");
  add_common(attn, o, false);
  attn->add_option("--checkpoint", at.checkpoint, "model checkpoint");
  attn->add_option("--image", at.image, "input image");
  attn->add_option("--stage", at.stage, "fused, content:<stage> or distortion:<stage>");
  attn->add_option("--overlay", at.overlay, "optional overlay image path");

  auto* synth = app.add_subcommand("synth-data", "write a synthetic distortion dataset");
  add_common(synth, o, false);
  synth->add_option("--contents", sy.contents);
  synth->add_option("--levels", sy.levels);
  synth->add_option("--size", sy.size);
  synth->add_option("--seed", sy.seed);
  synth->add_option("--distortions", sy.distortions);
  synth->add_option("--name", sy.name);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("usage", e.what());
    return 2;
  }

  try {
    if (log_level == "debug") codi::set_log_level(codi::LogLevel::kDebug);
    else if (log_level == "warning") codi::set_log_level(codi::LogLevel::kWarning);
    else if (log_level == "error") codi::set_log_level(codi::LogLevel::kError);
    else codi::require<codi::ConfigError>(log_level == "info", "unknown log level '", log_level, "'");
    for (const auto& [cmd, kind] : grid_cmds)
      if (cmd->parsed()) return run_grid(kind, o);
    if (eval->parsed()) return run_eval(o, ev);
    if (attn->parsed()) return run_attention(o, at);
    if (synth->parsed()) return run_synth(o, sy);
  } catch (const codi::Error& e) {
    emit_error(e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    emit_error("internal", e.what());
    return 1;
  }
  return 0;
}
