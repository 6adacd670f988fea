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


// Acceptance run: one PASS/FAIL line per criterion, with timings. Exit code
// is nonzero when any desk-scale criterion (1-10) fails. Criterion 11 needs
// pretrained encoder weights and the KonIQ-10K dataset; it runs only when
// CODI_KONIQ_DESCRIPTOR, CODI_CAE_WEIGHTS and CODI_DAE_WEIGHTS are set and
// never affects the exit code.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "codi/harness/experiment.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "support/metric_oracles.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

namespace codi {
namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <typename T>
Var<T> rand_var(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(std::move(s));
  for (auto& v : t.values()) v = static_cast<T>(u(rng));
  return Var<T>(std::move(t));
}

bool pyramid_matches(const FeaturePyramid<float>& p, const std::vector<int64_t>& ch, const std::vector<int64_t>& hw) {
  if (p.maps.size() != ch.size()) return false;
  for (size_t i = 0; i < ch.size(); ++i)
    if (p.maps[i].shape() != Shape{1, ch[i], hw[i], hw[i]}) return false;
  return true;
}

Outcome criterion1() {
  Outcome o;
  std::mt19937_64 rng(1);
  auto image = rand_var<float>({1, 3, 384, 384}, rng, 0.0, 1.0);
  NoGradGuard ng;

  auto t0 = Clock::now();
  {
    QualityModel<float> tiny(testing::tiny_config());
    tiny.reset_parameters(1);
    tiny.train(false);
    auto out = tiny.forward_detailed(image);
    o.check(pyramid_matches(out.content, {4, 8, 16, 32, 64}, {192, 96, 48, 24, 12}), "tiny pyramid schedule");
    o.check(out.fused.shape() == Shape{1, 40, 12, 12}, "tiny fused shape");
  }
  const double tiny_s = seconds_since(t0);
  o.check(tiny_s < 10.0, "tiny runtime < 10 s");

  t0 = Clock::now();
  {
    ModelConfig c;  // ResNet-50 content and distortion encoders, D=384, r=64
    QualityModel<float> m(c);
    m.reset_parameters(2);
    m.load_encoder(EncoderRole::kContent, random_backbone_params(BackboneKind::kResNet50, 3));
    m.load_encoder(EncoderRole::kDistortion, random_backbone_params(BackboneKind::kResNet50, 4));
    m.train(false);
    auto out = m.forward_detailed(image);
    const std::vector<int64_t> ch{64, 256, 512, 1024, 2048}, hw{192, 96, 48, 24, 12};
    o.check(pyramid_matches(out.content, ch, hw), "content pyramid [64..2048]x[192..12]");
    o.check(pyramid_matches(out.distortion, ch, hw), "distortion pyramid [64..2048]x[192..12]");
    o.check(out.fused.shape() == Shape{1, 1920, 12, 12}, "fused 1920x12x12");
    o.check(out.quality.shape() == Shape{1} && out.quality.value().all_finite(), "finite score");
  }
  const double resnet_s = seconds_since(t0);
  o.check(resnet_s < 120.0, "residual-CNN runtime < 2 min");

  t0 = Clock::now();
  {
    ModelConfig c;
    c.content_backbone = BackboneKind::kSwinBase;
    QualityModel<float> m(c);
    m.reset_parameters(5);
    m.load_encoder(EncoderRole::kContent, random_backbone_params(BackboneKind::kSwinBase, 6));
    m.load_encoder(EncoderRole::kDistortion, random_backbone_params(BackboneKind::kResNet50, 7));
    m.train(false);
    auto out = m.forward_detailed(image);
    o.check(pyramid_matches(out.content, {128, 256, 512, 1024}, {96, 48, 24, 12}), "swin pyramid");
    o.check(out.fused.shape() == Shape{1, 1536, 12, 12}, "transformer fused 1536x12x12");
  }
  const double swin_s = seconds_since(t0);
  o.check(swin_s < 120.0, "transformer runtime < 2 min");
  o.detail << "tiny " << tiny_s << " s, residual-CNN " << resnet_s << " s, transformer " << swin_s << " s";
  return o;
}

Outcome criterion2() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const int64_t n = 1 + static_cast<int64_t>(rng() % 2), c = 1 + static_cast<int64_t>(rng() % 16);
    const int64_t h = 3 + static_cast<int64_t>(rng() % 14), w = 3 + static_cast<int64_t>(rng() % 14);
    auto x = rand_var<float>({n, c, h, w}, rng);
    auto k = rand_var<float>({c, 1, 3, 3}, rng);
    auto b = rand_var<float>({c}, rng);
    Var<float> off(Tensor<float>({n, 18, h, w}, 0.f));
    NoGradGuard ng;
    auto y = deform_conv2d(x, off, k, &b, {1, 1, 1, c});
    auto ref = conv2d(x, k, &b, {1, 1, 1, c});
    worst = std::max(worst, static_cast<double>(max_abs_diff(y.value(), ref.value())));
  }
  o.check(worst <= 1e-5, "max abs diff <= 1e-5");
  o.check(seconds_since(t0) < 30.0, "runtime < 30 s");
  o.detail << "100 depthwise cases, max abs diff " << worst;
  return o;
}

Outcome criterion3() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(3);
  double worst = 0;
  int64_t oob = 0, taps = 0;
  for (int i = 0; i < 50; ++i) {
    const int64_t n = 1 + static_cast<int64_t>(rng() % 2), c = 1 + static_cast<int64_t>(rng() % 6);
    const int64_t h = 3 + static_cast<int64_t>(rng() % 8), w = 3 + static_cast<int64_t>(rng() % 8);
    auto x = rand_var<float>({n, c, h, w}, rng);
    auto k = rand_var<float>({c, 1, 3, 3}, rng);
    auto b = rand_var<float>({c}, rng);
    auto off = rand_var<float>({n, 18, h, w}, rng, -3.0, 3.0);
    std::uniform_real_distribution<double> u(0, 1);
    // A fifth of the offsets push their tap well outside the image.
    for (auto& v : off.mutable_value().values())
      if (u(rng) < 0.2) v = static_cast<float>((u(rng) < 0.5 ? -1 : 1) * (static_cast<double>(std::max(h, w)) + 2 + 4 * u(rng)));
    for (int64_t bi = 0; bi < n; ++bi)
      for (int64_t t = 0; t < 9; ++t)
        for (int64_t yy = 0; yy < h; ++yy)
          for (int64_t xx = 0; xx < w; ++xx) {
            const double py = static_cast<double>(yy - 1 + t / 3) + off.value().at(bi, 2 * t, yy, xx);
            const double px = static_cast<double>(xx - 1 + t % 3) + off.value().at(bi, 2 * t + 1, yy, xx);
            ++taps;
            oob += py <= -1 || px <= -1 || py >= static_cast<double>(h) || px >= static_cast<double>(w);
          }
    NoGradGuard ng;
    auto y = deform_conv2d(x, off, k, &b, {1, 1, 1, c});
    auto to_d = [](const Tensor<float>& t) {
      Tensor<double> d(t.shape());
      for (int64_t j = 0; j < t.numel(); ++j) d[j] = t[j];
      return d;
    };
    const auto bd = to_d(b.value());
    auto ref = testing::naive_deform_conv(to_d(x.value()), to_d(off.value()), to_d(k.value()), &bd, c, 1);
    for (int64_t j = 0; j < ref.numel(); ++j)
      worst = std::max(worst, std::abs(static_cast<double>(y.value()[j]) - ref[j]));
  }
  o.check(worst <= 1e-5, "max abs diff <= 1e-5");
  o.check(oob > 0, "out-of-bounds taps exercised");
  o.check(seconds_since(t0) < 60.0, "runtime < 1 min");
  o.detail << "50 pairs, " << oob << "/" << taps << " taps fully outside, max abs diff " << worst;
  return o;
}

Outcome criterion4() {
  Outcome o;
  const auto t0 = Clock::now();
  double worst = 0;
  int checked = 0;
  for (bool training : {true, false}) {
    InteractionBlock<double> b(3, 5, StageInteractionConfig{4, 2, 9, 0});
    b.reset_parameters(21);
    b.train(training);
    // Sampling positions sit at half-integers so a finite-difference step
    // never straddles a bilinear kink.
    for (auto& p : b.named_parameters())
      if (p.name == "offset_pw.bias") p.var.mutable_value().fill(0.5);
    std::mt19937_64 rng(4);
    auto fc = rand_var<double>({2, 3, 5, 5}, rng);
    auto fd = rand_var<double>({2, 5, 5, 5}, rng);
    fc.set_requires_grad(true);
    fd.set_requires_grad(true);
    auto probe = rand_var<double>({2, 4, 5, 5}, rng);
    if (!training) {
      // Non-trivial running statistics for the eval-mode pass.
      b.visit([&](const std::string&, nn::Module<double>& m) {
        if (auto* bn = dynamic_cast<nn::BatchNorm2d<double>*>(&m)) {
          std::uniform_real_distribution<double> u(-0.5, 0.5), v(0.5, 2.0);
          for (auto& x : bn->running_mean().values()) x = u(rng);
          for (auto& x : bn->running_var().values()) x = v(rng);
        }
      });
    }
    std::vector<std::pair<std::string, Var<double>>> leaves{{"content", fc}, {"distortion", fd}};
    for (auto& p : b.named_parameters()) leaves.emplace_back(p.name, p.var);
    auto f = [&] { return sum(mul(b.forward(fc, fd), probe)); };
    // Train mode probes every entry; the eval-mode pass (running statistics
    // instead of batch statistics) probes a strided subset to stay in budget.
    for (const auto& r : testing::gradcheck(f, leaves, 1e-4, training ? 0 : 8)) {
      ++checked;
      // In train mode a bias feeding batch-statistics normalization is
      // cancelled by the mean subtraction: both gradients are zero and the
      // relative error is 0/0, so it is checked in absolute terms.
      if (training && r.name.ends_with("feat_dw.bias")) {
        o.check(r.analytic_norm < 1e-10 && r.numeric_norm < 1e-7, r.name + " structural zero");
        continue;
      }
      worst = std::max(worst, r.rel_error);
      o.check(r.rel_error <= 1e-4, (training ? "train " : "eval ") + r.name);
    }
  }
  const double secs = seconds_since(t0);
  o.check(secs < 120.0, "runtime < 2 min");
  o.detail << checked << " tensors (train mode all entries, eval mode strided), worst relative error " << worst;
  return o;
}

Outcome criterion5() {
  Outcome o;
  const auto t0 = Clock::now();
  SyntheticSpec spec;
  spec.contents = 3;
  spec.levels = 3;
  spec.seed = 3;
  auto ds = make_synthetic_dataset(spec);
  ds.manifest = normalize_labels(ds.manifest);
  QualityModel<float> m(testing::tiny_config());
  m.reset_parameters(5);
  testing::calibrate_encoder_norms(m, testing::dataset_images(ds, 64));

  std::map<std::string, bool> is_norm;
  for (const auto& p : m.named_parameters()) is_norm[p.name] = p.is_norm;
  for (const auto& b : m.named_buffers()) is_norm[b.name] = true;

  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.max_steps = 10;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-3;
  cfg.early_stopping.enabled = false;
  cfg.preprocess.crop = 64;
  const auto before = nn::state_dict(m);
  auto res = train(m, ds.manifest, ds.images, cfg, FreezePolicy::from_strategy('B'));
  const auto after = nn::state_dict(m);
  double frozen_change = 0;
  int64_t other = 0, changed = 0;
  for (const auto& [name, t0] : before) {
    const auto fam = param_family(name);
    if (fam == ParamFamily::kDistortionEncoder || (fam == ParamFamily::kContentEncoder && is_norm.at(name))) {
      frozen_change = std::max(frozen_change, max_abs_diff(t0, after.at(name)));
    } else if (fam == ParamFamily::kContentEncoder) {
      for (int64_t i = 0; i < t0.numel(); ++i) {
        ++other;
        changed += t0[i] != after.at(name)[i];
      }
    }
  }
  o.check(res.steps == 10, "10 optimizer steps");
  o.check(frozen_change == 0.0, "DAE and CAE norm state bit-identical");
  o.check(static_cast<double>(changed) >= 0.99 * static_cast<double>(other), ">= 99% of other CAE params changed");

  auto counts = [&](char s) { return build_trainable_params(m, FreezePolicy::from_strategy(s)); };
  auto a = counts('A'), b = counts('B'), c = counts('C'), d = counts('D');
  bool a_ok = true, c_ok = true;
  for (const auto& p : a.trainable) a_ok = a_ok && param_family(p.name) == ParamFamily::kShared;
  for (const auto& p : a.frozen) a_ok = a_ok && param_family(p.name) != ParamFamily::kShared;
  for (const auto& p : c.trainable) c_ok = c_ok && param_family(p.name) != ParamFamily::kContentEncoder;
  o.check(a_ok, "A trains interaction + head only");
  o.check(b.trainable_count() == c.trainable_count(), "B and C trainable counts equal");
  o.check(c_ok, "C freezes the content encoder");
  o.check(d.frozen.empty(), "D trains everything");
  const size_t total = m.named_parameters().size();
  for (const auto* p : {&a, &b, &c, &d}) o.check(p->trainable.size() + p->frozen.size() == total, "partition complete");
  o.check(seconds_since(t0) < 60.0, "runtime < 1 min");
  o.detail << "frozen max change " << frozen_change << ", CAE changed " << changed << "/" << other
           << ", trainable A/B/C/D " << a.trainable_count() << "/" << b.trainable_count() << "/" << c.trainable_count()
           << "/" << d.trainable_count();
  return o;
}

Outcome criterion6() {
  Outcome o;
  std::mt19937_64 rng(6);
  double worst = 0, worst_mean = 0;
  bool bounded = true;
  for (int i = 0; i < 200; ++i) {
    const int64_t n = 1 + static_cast<int64_t>(rng() % 3), L = 1 + static_cast<int64_t>(rng() % 144);
    auto s = rand_var<double>({n, L}, rng, -5.0, 5.0);
    auto w = rand_var<double>({n, L}, rng, 0.0, 1.0);
    auto q = weighted_mean(s, w);
    for (int64_t b = 0; b < n; ++b) {
      long double num = 0, den = 0;
      double lo = 1e300, hi = -1e300;
      for (int64_t l = 0; l < L; ++l) {
        num += static_cast<long double>(s.value()[b * L + l]) * w.value()[b * L + l];
        den += w.value()[b * L + l];
        lo = std::min(lo, s.value()[b * L + l]);
        hi = std::max(hi, s.value()[b * L + l]);
      }
      worst = std::max(worst, std::abs(q.value()[b] - static_cast<double>(num / den)));
      bounded = bounded && q.value()[b] >= lo - 1e-12 && q.value()[b] <= hi + 1e-12;
    }
    Var<double> ones(Tensor<double>({n, L}, 0.37));
    auto qm = weighted_mean(s, ones);
    for (int64_t b = 0; b < n; ++b) {
      long double mean = 0;
      for (int64_t l = 0; l < L; ++l) mean += s.value()[b * L + l];
      worst_mean = std::max(worst_mean, std::abs(qm.value()[b] - static_cast<double>(mean / L)));
    }
  }
  o.check(worst <= 1e-6, "brute-force agreement within 1e-6");
  o.check(worst_mean <= 1e-6, "constant weights give the arithmetic mean");
  o.check(bounded, "bounded by [min s, max s]");
  o.detail << "200 pairs, max diff " << worst << ", constant-weight max diff " << worst_mean;
  return o;
}

Outcome criterion7() {
  Outcome o;
  std::mt19937_64 rng(7);
  double worst = 0;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> a(100), b(100);
    const bool ties = i % 2 == 1;
    std::uniform_real_distribution<double> u(0, 1);
    for (int j = 0; j < 100; ++j) {
      a[j] = ties ? static_cast<double>(rng() % 5) : u(rng);
      b[j] = ties ? static_cast<double>(rng() % 7) : u(rng) + 0.3 * a[j];
    }
    worst = std::max({worst, std::abs(srcc(a, b) - testing::brute_srcc(a, b)),
                      std::abs(plcc(a, b) - testing::brute_plcc(a, b)),
                      std::abs(krcc(a, b) - testing::brute_krcc(a, b)),
                      std::abs(rmse(a, b) - testing::brute_rmse(a, b))});
  }
  o.check(worst <= 1e-9, "oracle agreement within 1e-9");
  double drift = 0;
  for (int i = 0; i < 50; ++i) {
    std::uniform_real_distribution<double> u(-2, 2), pos(0.1, 3);
    std::vector<double> a(100), b(100);
    for (int j = 0; j < 100; ++j) {
      a[j] = u(rng);
      b[j] = a[j] + u(rng);
    }
    const double scale = pos(rng), shift = u(rng), power = pos(rng);
    std::vector<double> t(100);
    for (int j = 0; j < 100; ++j) {
      switch (i % 3) {
        case 0: t[j] = scale * a[j] + shift; break;
        case 1: t[j] = std::exp(power * a[j]); break;
        default: t[j] = std::cbrt(a[j]) * scale + std::pow(a[j] + 3.0, power); break;
      }
    }
    drift = std::max({drift, std::abs(srcc(t, b) - srcc(a, b)), std::abs(krcc(t, b) - krcc(a, b))});
  }
  o.check(drift <= 1e-12, "SRCC/KRCC invariant under monotone transforms");
  o.detail << "200 vectors (100 tie-heavy), max diff " << worst << "; 50 transforms, max drift " << drift;
  return o;
}

Outcome criterion8() {
  Outcome o;
  const auto t0 = Clock::now();
  SyntheticSpec spec;
  spec.contents = 8;
  spec.distortions = {"blur"};
  spec.levels = 1;
  spec.seed = 21;
  auto ds = make_synthetic_dataset(spec, "overfit");
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& r : ds.manifest.records) r.score = u(rng);
  ds.manifest.normalized = true;

  QualityModel<float> m(testing::tiny_config());
  m.reset_parameters(13);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 500;
  cfg.max_steps = 500;
  cfg.t_max = 1000;
  cfg.learning_rate = 1e-3;
  cfg.early_stopping.enabled = false;
  cfg.preprocess.crop = 64;
  cfg.preprocess.hflip = false;
  auto res = train(m, ds.manifest, ds.images, cfg, FreezePolicy::from_strategy('B'));
  const auto preds = predict(m, ds.manifest, ds.images, cfg.preprocess);
  const auto labels = ds.manifest.scores();
  double mse = 0;
  for (size_t i = 0; i < preds.size(); ++i) mse += (preds[i] - labels[i]) * (preds[i] - labels[i]);
  mse /= static_cast<double>(preds.size());
  const double s = srcc(preds, labels);
  o.check(res.steps <= 500, "within 500 steps");
  o.check(mse <= 1e-3, "training MSE <= 1e-3");
  o.check(s == 1.0, "train-set SRCC = 1");
  o.check(seconds_since(t0) < 300.0, "runtime < 5 min");
  o.detail << res.steps << " steps, final MSE " << mse << ", SRCC " << s << ", last batch loss "
           << res.log.back().train_loss;
  return o;
}

DatasetManifest labelled_manifest(int contents, int types, int levels, uint64_t seed) {
  DatasetManifest m;
  m.descriptor.name = "grid";
  m.descriptor.kind = DatasetKind::kSynthetic;
  m.descriptor.score_lo = 0;
  m.descriptor.score_hi = 1;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  for (int c = 0; c < contents; ++c)
    for (int t = 0; t < types; ++t)
      for (int l = 0; l < levels; ++l) {
        SampleRecord r;
        r.image_ref = "c" + std::to_string(c) + "_d" + std::to_string(t) + "_" + std::to_string(l);
        r.raw_score = r.score = u(rng);
        r.content_id = "c" + std::to_string(c);
        r.distortion_type = "d" + std::to_string(t);
        m.records.push_back(std::move(r));
      }
  m.normalized = true;
  return m;
}

Outcome criterion9() {
  Outcome o;
  const auto m = labelled_manifest(25, 24, 2, 9);
  int leaks = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    SplitPlan p;
    p.seed = seed;
    auto s = make_split(m, p);
    std::set<std::string> train_ids;
    for (const auto& r : s.train.records) train_ids.insert(*r.content_id);
    for (const auto& r : s.test.records) leaks += train_ids.count(*r.content_id) > 0;
    o.check(s.train.size() + s.test.size() == m.size(), "split covers the manifest");
  }
  o.check(leaks == 0, "no shared content ids");

  const auto plans = leave_one_distortion_out_plans(m);
  std::map<std::string, int> test_hits;
  bool exact = plans.size() == 24;
  for (const auto& p : plans) {
    auto s = make_split(m, p);
    std::set<std::string> seen;
    for (const auto& r : s.train.records) {
      seen.insert(r.image_ref);
      exact = exact && *r.distortion_type != *p.held_out_distortion;
    }
    for (const auto& r : s.test.records) {
      exact = exact && seen.insert(r.image_ref).second && *r.distortion_type == *p.held_out_distortion;
      ++test_hits[r.image_ref];
    }
    exact = exact && seen.size() == m.size();
  }
  for (const auto& r : m.records) exact = exact && test_hits[r.image_ref] == 1;
  o.check(exact, "24 leave-one-distortion-out plans partition the manifest");

  const std::vector<double> fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  auto plan = efficiency_subsets(m, fractions, 11);
  std::set<std::string> test_refs, test_contents;
  for (const auto& r : plan.test.records) {
    test_refs.insert(r.image_ref);
    test_contents.insert(*r.content_id);
  }
  bool disjoint = true;
  for (const auto& sub : plan.subsets)
    for (const auto& r : sub.records) disjoint = disjoint && !test_refs.count(r.image_ref) && !test_contents.count(*r.content_id);
  const double test_share = static_cast<double>(plan.test.size()) / static_cast<double>(m.size());
  o.check(disjoint, "efficiency subsets disjoint from the test split");
  o.check(std::abs(test_share - 0.2) < 1e-9, "20% test split");
  o.detail << "100 seeds, " << leaks << " leaks; " << plans.size() << " LOO plans; subsets of ";
  for (const auto& s : plan.subsets) o.detail << s.size() << " ";
  o.detail << "vs test " << plan.test.size() << " of " << m.size();
  return o;
}

Outcome criterion10() {
  Outcome o;
  testing::TempDir dir;
  SyntheticSpec spec;
  spec.contents = 5;
  spec.levels = 2;
  spec.seed = 1;
  const auto desc = write_synthetic_dataset(dir.path() / "synth", spec, "synth");
  ExperimentConfig cfg;
  cfg.train_dataset = desc;
  cfg.model = testing::tiny_config();
  cfg.train.epochs = 2;
  cfg.train.batch_size = 4;
  cfg.train.learning_rate = 1e-3;
  cfg.train.early_stopping.enabled = false;
  cfg.train.preprocess.crop = 64;
  cfg.repeat = 2;
  cfg.seed = 17;
  auto a = run_experiment(cfg, dir.path() / "a");
  auto b = run_experiment(cfg, dir.path() / "b");
  bool same = a.runs.size() == b.runs.size() && a.median == b.median;
  for (size_t i = 0; same && i < a.runs.size(); ++i) same = a.runs[i].reports == b.runs[i].reports;
  o.check(same, "identical seeds give identical reports");

  // save -> load -> evaluate on the run's own test split.
  auto loaded = load_model<float>(dir.path() / "a" / "checkpoints" / (a.runs[0].id + ".ckpt"));
  const auto data = normalize_labels(load_dataset(desc));
  SplitPlan plan;
  plan.seed = a.runs[0].seed;
  auto test = make_split(data, plan).test;
  FileImageSource files;
  auto pc = PreprocessConfig::from_json(loaded.manifest.at("preprocess"));
  auto rep = evaluate(*loaded.model, test, files, pc, cfg.train.eval_batch_size,
                      {{"run", a.runs[0].id}, {"condition", "default"}, {"seed", a.runs[0].seed}});
  o.check(rep == a.runs[0].reports.at("synth"), "checkpoint round trip reproduces the report");
  o.detail << a.runs.size() << " runs x 2 bundles compared; run 0 srcc "
           << (rep.srcc ? std::to_string(*rep.srcc) : std::string("undefined"));
  return o;
}

std::optional<Outcome> criterion11() {
  const char* desc = std::getenv("CODI_KONIQ_DESCRIPTOR");
  const char* cae = std::getenv("CODI_CAE_WEIGHTS");
  const char* dae = std::getenv("CODI_DAE_WEIGHTS");
  if (!desc || !cae || !dae) return std::nullopt;
  Outcome o;
  auto cfg = load_experiment_config(std::filesystem::path(CODI_SOURCE_DIR) / "configs" / "koniq_resnet50.json");
  cfg.train_dataset = desc;
  cfg.content_weights = cae;
  cfg.distortion_weights = dae;
  const char* out = std::getenv("CODI_STRETCH_OUT");
  auto bundle = run_experiment(cfg, out ? out : "runs/stretch_koniq");
  const auto& rep = bundle.median.at("default").begin()->second;
  o.check(rep.srcc && std::abs(*rep.srcc - 0.931) <= 0.02, "median SRCC within 0.02 of 0.931");
  o.detail << "median SRCC " << (rep.srcc ? std::to_string(*rep.srcc) : std::string("undefined"));
  return o;
}

}  // namespace
}  // namespace codi

int main() {
  using namespace codi;
  set_log_level(LogLevel::kWarning);
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
      {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}};
  int failures = 0;
  for (const auto& [id, fn] : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "threw: " << e.what();
    }
    failures += !o.pass;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " (" << seconds_since(t0) << " s) "
              << o.detail.str() << std::endl;
  }
  const auto t0 = Clock::now();
  try {
    if (auto o = criterion11())
      std::cout << "criterion 11: " << (o->pass ? "PASS" : "FAIL") << " (" << seconds_since(t0) << " s) "
                << o->detail.str() << std::endl;
    else
      std::cout << "criterion 11: FAIL (not run: needs pretrained CAE/DAE weights and KonIQ-10K; set "
                   "CODI_KONIQ_DESCRIPTOR, CODI_CAE_WEIGHTS, CODI_DAE_WEIGHTS)"
                << std::endl;
  } catch (const std::exception& e) {
    std::cout << "criterion 11: FAIL threw: " << e.what() << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
