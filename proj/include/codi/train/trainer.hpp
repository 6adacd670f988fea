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

// Training loop, evaluation and checkpoint evaluation.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "codi/core/log.hpp"
#include "codi/data/preprocess.hpp"
#include "codi/data/split.hpp"
#include "codi/metrics/metrics.hpp"
#include "codi/nn/state.hpp"
#include "codi/train/freeze.hpp"
#include "codi/train/optim.hpp"

namespace codi {

struct EarlyStopping {
  bool enabled = true;
  double val_fraction = 0.1;  // content-disjoint carve-out of the training split
  int patience = 20;          // epochs without val SRCC improvement

  nlohmann::json to_json() const { return {{"enabled", enabled}, {"val_fraction", val_fraction}, {"patience", patience}}; }
};

struct TrainConfig {
  int epochs = 200;
  int batch_size = 8;
  /// Unset: 1e-4 for synthetic datasets, 3e-5 for authentic ones.
  std::optional<double> learning_rate;
  double weight_decay = 1e-5;
  int64_t t_max = 50;
  double eta_min = 0.0;
  EarlyStopping early_stopping;
  uint64_t seed = 0;
  double grad_clip = 0.0;  // max global grad norm; 0 disables
  int64_t max_steps = 0;   // 0: no cap
  int eval_batch_size = 8;
  PreprocessConfig preprocess;

  double resolved_lr(DatasetKind kind) const {
    if (learning_rate) return *learning_rate;
    return kind == DatasetKind::kSynthetic ? 1e-4 : 3e-5;
  }

  void validate() const {
    require<ConfigError>(epochs > 0 && batch_size > 0 && eval_batch_size > 0, "epochs and batch sizes must be positive");
    require<ConfigError>(!learning_rate || *learning_rate > 0, "learning rate must be positive");
    require<ConfigError>(weight_decay >= 0 && t_max > 0 && eta_min >= 0, "invalid optimizer schedule settings");
    require<ConfigError>(grad_clip >= 0 && max_steps >= 0, "grad_clip and max_steps must be non-negative");
    require<ConfigError>(!early_stopping.enabled ||
                             (early_stopping.val_fraction > 0 && early_stopping.val_fraction < 1 && early_stopping.patience > 0),
                         "invalid early-stopping settings");
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"epochs", epochs},
                     {"batch_size", batch_size},
                     {"weight_decay", weight_decay},
                     {"t_max", t_max},
                     {"eta_min", eta_min},
                     {"early_stopping", early_stopping.to_json()},
                     {"seed", seed},
                     {"grad_clip", grad_clip},
                     {"max_steps", max_steps},
                     {"eval_batch_size", eval_batch_size},
                     {"preprocess", preprocess.to_json()}};
    j["learning_rate"] = learning_rate ? nlohmann::json(*learning_rate) : nlohmann::json(nullptr);
    return j;
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
      c.epochs = j.value("epochs", c.epochs);
      c.batch_size = j.value("batch_size", c.batch_size);
      if (j.contains("learning_rate") && !j.at("learning_rate").is_null())
        c.learning_rate = j.at("learning_rate").get<double>();
      c.weight_decay = j.value("weight_decay", c.weight_decay);
      c.t_max = j.value("t_max", c.t_max);
      c.eta_min = j.value("eta_min", c.eta_min);
      if (j.contains("early_stopping")) {
        const auto& e = j.at("early_stopping");
        c.early_stopping.enabled = e.value("enabled", true);
        c.early_stopping.val_fraction = e.value("val_fraction", 0.1);
        c.early_stopping.patience = e.value("patience", 20);
      }
      c.seed = j.value("seed", c.seed);
      c.grad_clip = j.value("grad_clip", c.grad_clip);
      c.max_steps = j.value("max_steps", c.max_steps);
      c.eval_batch_size = j.value("eval_batch_size", c.eval_batch_size);
      if (j.contains("preprocess")) c.preprocess = PreprocessConfig::from_json(j.at("preprocess"));
    } catch (const nlohmann::json::exception& e) {
      raise<ConfigError>("invalid training config: ", e.what());
    }
    c.validate();
    return c;
  }
};

struct EpochLog {
  int epoch = 0;
  double lr = 0, train_loss = 0;
  std::optional<double> val_srcc;

  nlohmann::json to_json() const {
    return {{"epoch", epoch},
            {"lr", lr},
            {"train_loss", train_loss},
            {"val_srcc", val_srcc ? nlohmann::json(*val_srcc) : nlohmann::json(nullptr)}};
  }
};

struct TrainResult {
  std::vector<EpochLog> log;
  int64_t steps = 0;
  int best_epoch = -1;
  std::optional<double> best_val_srcc;
  size_t train_records = 0, val_records = 0;
  std::vector<std::string> val_image_refs;
  bool stopped_early = false;
};

struct TrainOutputs {
  std::filesystem::path log_path;         // JSON lines, one per epoch; empty: none
  std::filesystem::path checkpoint_path;  // final (best) model; empty: none
  std::filesystem::path dump_dir;         // where a divergence dump goes; empty: log_path's dir
  nlohmann::json checkpoint_manifest = nlohmann::json::object();
};

/// Predicts one score per record, eval mode, deterministic preprocessing.
template <typename T>
std::vector<double> predict(QualityModel<T>& model, const DatasetManifest& m, const ImageSource& src,
                            const PreprocessConfig& cfg, int batch_size = 8) {
  const bool was_training = model.is_training();
  model.train(false);
  NoGradGuard ng;
  std::vector<double> out;
  out.reserve(m.size());
  for (size_t start = 0; start < m.size(); start += static_cast<size_t>(batch_size)) {
    std::vector<size_t> idx;
    for (size_t i = start; i < std::min(m.size(), start + static_cast<size_t>(batch_size)); ++i) idx.push_back(i);
    auto b = make_batch(m, idx, src, cfg, PreprocessMode::kEval, 0, 0);
    Tensor<T> images(b.images.shape());
    std::copy(b.images.data(), b.images.data() + b.images.numel(), images.data());
    auto q = model.forward(Var<T>(std::move(images)));
    for (int64_t i = 0; i < q.numel(); ++i) out.push_back(static_cast<double>(q.value()[i]));
  }
  model.train(was_training);
  return out;
}

template <typename T>
MetricsReport evaluate(QualityModel<T>& model, const DatasetManifest& m, const ImageSource& src,
                       const PreprocessConfig& cfg, int batch_size = 8, nlohmann::json metadata = nlohmann::json::object()) {
  require<InputError>(m.size() >= 2, "evaluation needs at least 2 records, '", m.name(), "' has ", m.size());
  const auto preds = predict(model, m, src, cfg, batch_size);
  metadata["dataset"] = m.name();
  return compute_report(preds, m.scores(), std::move(metadata));
}

namespace detail {

template <typename T>
Var<T> to_var(const Tensor<float>& t) {
  if constexpr (std::is_same_v<T, float>) {
    return Var<T>(t);
  } else {
    Tensor<T> out(t.shape());
    std::copy(t.data(), t.data() + t.numel(), out.data());
    return Var<T>(std::move(out));
  }
}

template <typename T>
[[noreturn]] void dump_divergence(const std::filesystem::path& dir, QualityModel<T>& model, const DatasetManifest& m,
                                  const std::vector<size_t>& idx, int epoch, int64_t step, double lr, double loss) {
  nlohmann::json j{{"epoch", epoch}, {"step", step}, {"lr", lr}, {"loss", std::isfinite(loss) ? nlohmann::json(loss) : nlohmann::json(std::to_string(loss))}};
  for (size_t i : idx) j["batch"].push_back(m.records[i].image_ref);
  nlohmann::json norms = nlohmann::json::object();
  for (const auto& p : model.named_parameters()) {
    double s = 0;
    bool finite = true;
    for (T v : p.var.value().values()) {
      finite = finite && std::isfinite(static_cast<double>(v));
      s += static_cast<double>(v) * v;
    }
    norms[p.name] = finite ? nlohmann::json(std::sqrt(s)) : nlohmann::json("non-finite");
  }
  j["param_norms"] = norms;
  std::filesystem::path where;
  if (!dir.empty()) {
    std::filesystem::create_directories(dir);
    where = dir / "divergence.json";
    std::ofstream(where) << j.dump(2) << "\n";
  }
  raise<TrainingDivergedError>("non-finite loss ", loss, " at epoch ", epoch, " step ", step,
                               where.empty() ? std::string() : ", state dumped to " + where.string());
}

}  // namespace detail

/// Minibatch MSE training under a freeze policy. The manifest must already be
/// normalized. With early stopping, a content-disjoint validation carve-out
/// is held back from gradient updates and the best epoch (by val SRCC) is
/// restored at the end.
template <typename T>
TrainResult train(QualityModel<T>& model, const DatasetManifest& train_set, const ImageSource& src,
                  const TrainConfig& cfg, const FreezePolicy& policy, const TrainOutputs& outputs = {}) {
  cfg.validate();
  require<InputError>(!train_set.records.empty(), "training manifest '", train_set.name(), "' is empty");
  require<InputError>(train_set.normalized, "training manifest '", train_set.name(), "' is not normalized");

  TrainResult result;
  DatasetManifest fit = train_set, val;
  if (cfg.early_stopping.enabled) {
    SplitPlan carve;
    carve.ratio = 1.0 - cfg.early_stopping.val_fraction;
    carve.seed = mix_seed(cfg.seed, fnv1a("validation-carve-out"));
    auto s = make_split(train_set, carve);
    if (s.train.size() >= 1 && s.test.size() >= 2) {
      fit = std::move(s.train);
      val = std::move(s.test);
    } else {
      log(LogLevel::kWarning, "training split of ", train_set.size(),
          " records is too small for a validation carve-out; early stopping disabled");
    }
  }
  result.train_records = fit.size();
  result.val_records = val.size();
  for (const auto& r : val.records) result.val_image_refs.push_back(r.image_ref);

  auto partition = build_trainable_params(model, policy);
  typename AdamW<T>::Options opt;
  opt.weight_decay = cfg.weight_decay;
  AdamW<T> optimizer(partition.trainable, opt);
  const CosineSchedule schedule{cfg.resolved_lr(train_set.descriptor.kind), cfg.eta_min, cfg.t_max};

  std::ofstream log_file;
  if (!outputs.log_path.empty()) {
    std::filesystem::create_directories(outputs.log_path.parent_path());
    log_file.open(outputs.log_path);
    require<IoError>(log_file.good(), "cannot write training log '", outputs.log_path.string(), "'");
  }
  const auto dump_dir = !outputs.dump_dir.empty() ? outputs.dump_dir : outputs.log_path.parent_path();

  std::optional<nn::StateDict> best_state;
  int since_best = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = schedule.at(epoch);
    set_training_mode(model, policy, true);
    std::vector<size_t> order(fit.size());
    std::iota(order.begin(), order.end(), size_t{0});
    Rng rng(mix_seed(cfg.seed, fnv1a("epoch-order"), static_cast<uint64_t>(epoch)));
    shuffle_in_place(order, rng);
    double loss_sum = 0;
    size_t seen = 0;
    bool capped = false;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) {
        capped = true;
        break;
      }
      std::vector<size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                              order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + static_cast<size_t>(cfg.batch_size))));
      auto b = make_batch(fit, idx, src, cfg.preprocess, PreprocessMode::kTrain, cfg.seed, static_cast<uint64_t>(epoch));
      optimizer.zero_grad();
      auto pred = model.forward(detail::to_var<T>(b.images));
      auto loss = mse_loss(pred, detail::to_var<T>(b.labels));
      const double lv = static_cast<double>(loss.value()[0]);
      if (!std::isfinite(lv)) detail::dump_divergence(dump_dir, model, fit, idx, epoch, result.steps, lr, lv);
      backward(loss);
      if (cfg.grad_clip > 0) optimizer.clip_grad_norm(cfg.grad_clip);
      optimizer.step(lr);
      ++result.steps;
      loss_sum += lv * static_cast<double>(idx.size());
      seen += idx.size();
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr;
    entry.train_loss = seen ? loss_sum / static_cast<double>(seen) : std::numeric_limits<double>::quiet_NaN();
    if (val.size() >= 2 && seen > 0) {
      auto rep = evaluate(model, val, src, cfg.preprocess, cfg.eval_batch_size);
      entry.val_srcc = rep.srcc;
      const double score = rep.srcc.value_or(-2.0);
      if (!result.best_val_srcc || score > *result.best_val_srcc) {
        result.best_val_srcc = score;
        result.best_epoch = epoch;
        best_state = nn::state_dict(model);
        since_best = 0;
      } else {
        ++since_best;
      }
    }
    if (seen > 0) {
      result.log.push_back(entry);
      if (log_file.is_open()) log_file << entry.to_json().dump() << "\n" << std::flush;
      log(LogLevel::kDebug, "epoch ", epoch, " lr ", lr, " loss ", entry.train_loss);
    }
    if (capped) break;
    if (best_state && since_best >= cfg.early_stopping.patience) {
      result.stopped_early = true;
      break;
    }
  }
  if (best_state) nn::load_state_dict(model, *best_state);
  model.train(false);

  if (!outputs.checkpoint_path.empty()) {
    auto manifest = outputs.checkpoint_manifest;
    manifest["train_config"] = cfg.to_json();
    manifest["preprocess"] = cfg.preprocess.to_json();
    manifest["strategy"] = policy.name();
    manifest["seed"] = cfg.seed;
    manifest["grad_clip"] = cfg.grad_clip;
    manifest["train_dataset"] = train_set.name();
    manifest["best_epoch"] = result.best_epoch;
    manifest["steps"] = result.steps;
    std::filesystem::create_directories(outputs.checkpoint_path.parent_path());
    save_model(outputs.checkpoint_path, model, manifest);
  }
  return result;
}

/// Evaluates a saved model. `requested` (if given) must match the crop the
/// model was trained with; normalization constants travel with the
/// checkpoint. Resize rules come from the test dataset's descriptor.
template <typename T = float>
MetricsReport evaluate_checkpoint(const std::filesystem::path& ckpt, const DatasetManifest& test, const ImageSource& src,
                                  std::optional<PreprocessConfig> requested = std::nullopt, int batch_size = 8) {
  auto loaded = load_model<T>(ckpt);
  PreprocessConfig cfg;
  if (loaded.manifest.contains("preprocess")) cfg = PreprocessConfig::from_json(loaded.manifest.at("preprocess"));
  if (requested) {
    require<PreprocessMismatchError>(requested->crop == cfg.crop && requested->resize_only == cfg.resize_only,
                                     "checkpoint '", ckpt.string(), "' was trained with crop ", cfg.crop,
                                     cfg.resize_only ? " (resize-only)" : "", " but evaluation requested crop ",
                                     requested->crop, requested->resize_only ? " (resize-only)" : "",
                                     "; predictions would not be comparable");
    cfg = *requested;
  } else {
    cfg.resize = test.descriptor.resize;
  }
  nlohmann::json meta{{"checkpoint", ckpt.filename().string()}};
  if (loaded.manifest.contains("seed")) meta["seed"] = loaded.manifest.at("seed");
  return evaluate(*loaded.model, normalize_labels(test), src, cfg, batch_size, meta);
}

}  // namespace codi
