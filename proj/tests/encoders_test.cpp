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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "codi/encoders/encoder.hpp"
#include "support/gradcheck.hpp"
#include "support/temp_dir.hpp"

namespace codi {
namespace {

Tensor<float> random_image(int64_t h, int64_t w, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  Tensor<float> t({3, h, w});
  for (auto& v : t.values()) v = u(rng);
  return t;
}

void expect_schedule(const FeaturePyramid<float>& p, const std::vector<int64_t>& channels, int64_t h, int64_t w) {
  ASSERT_EQ(p.maps.size(), channels.size());
  for (size_t i = 0; i < channels.size(); ++i) {
    const auto& s = p.maps[i].shape();
    EXPECT_EQ(s[1], channels[i]) << "stage " << i;
    EXPECT_EQ(s[2], h / p.specs[i].downscale) << "stage " << i;
    EXPECT_EQ(s[3], w / p.specs[i].downscale) << "stage " << i;
    EXPECT_EQ(p.specs[i].channels, channels[i]);
    if (i) {
      EXPECT_EQ(p.specs[i].downscale, 2 * p.specs[i - 1].downscale);
    }
  }
}

TEST(StageTable, MatchesBackboneChannelTables) {
  std::vector<int64_t> c;
  for (auto s : stage_table(BackboneKind::kResNet50)) c.push_back(s.channels);
  EXPECT_EQ(c, (std::vector<int64_t>{64, 256, 512, 1024, 2048}));
  c.clear();
  for (auto s : stage_table(BackboneKind::kSwinBase)) c.push_back(s.channels);
  EXPECT_EQ(c, (std::vector<int64_t>{128, 256, 512, 1024}));
  EXPECT_EQ(stage_table(BackboneKind::kSwinBase).front().index, 1);
  EXPECT_EQ(stage_table(BackboneKind::kResNet50).size(), 5u);
}

TEST(ContentPyramid, ResNet50ShapeScheduleAt384) {
  auto params = random_backbone_params(BackboneKind::kResNet50, 1);
  auto p = extract_content_pyramid(random_image(384, 384, 3), params);
  expect_schedule(p, {64, 256, 512, 1024, 2048}, 384, 384);
  EXPECT_EQ(p.maps[0].dim(2), 192);
  EXPECT_EQ(p.maps[4].dim(2), 12);
  EXPECT_EQ(p.source, EncoderRole::kContent);
}

TEST(ContentPyramid, SwinBaseResNetParameterCounts) {
  // Reference counts of the standard architectures without classifier heads.
  EXPECT_EQ(ResNet50<float>().parameter_count(), 23508032);
  SwinTransformer<float> swin;
  // 87,903,584 for the full 384/window-12 classifier, minus its final norm
  // (2048) and head (1024*1000+1000).
  EXPECT_EQ(swin.parameter_count(), 87903584 - 2048 - 1025000);
}

TEST(DistortionPyramid, TinyScheduleHoldsForSizesDivisibleBy32) {
  auto params = random_backbone_params(BackboneKind::kTiny, 5);
  for (auto [h, w] : std::vector<std::pair<int64_t, int64_t>>{{32, 32}, {64, 96}, {160, 64}, {384, 384}}) {
    auto p = extract_distortion_pyramid(random_image(h, w, 7), params);
    EXPECT_EQ(p.source, EncoderRole::kDistortion);
    expect_schedule(p, {4, 8, 16, 32, 64}, h, w);
  }
}

TEST(SwinBackbone, SmallConfigYieldsFourStagesWithSchedule) {
  SwinConfig cfg{8, {2, 2, 2, 2}, {1, 1, 2, 2}, 3, 2, 4};
  SwinTransformer<float> swin(cfg);
  swin.reset_parameters(3);
  NoGradGuard ng;
  auto taps = swin.forward_taps(Var<float>(random_image(96, 96, 1).reshaped({1, 3, 96, 96})));
  ASSERT_EQ(taps.size(), 4u);
  const auto specs = swin.stages();
  for (size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(specs[i].index, static_cast<int>(i) + 1);
    EXPECT_EQ(taps[i].shape(), (Shape{1, 8 << i, 96 / specs[i].downscale, 96 / specs[i].downscale}));
    EXPECT_TRUE(taps[i].value().all_finite());
  }
}

TEST(SwinBackbone, WindowPartitionRoundTrips) {
  Tensor<double> t({2, 6, 9, 4});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(i);
  Var<double> x(t);
  auto w = detail::window_partition(x, 3);
  EXPECT_EQ(w.shape(), (Shape{2 * 2 * 3, 9, 4}));
  // Token 4 of window 1 (row 0, col 1 of windows) is pixel (1, 4).
  EXPECT_EQ(w.value()[(1 * 9 + 4) * 4 + 2], t[((0 * 6 + 1) * 9 + 4) * 4 + 2]);
  EXPECT_EQ(detail::window_reverse(w, 3, 2, 6, 9).value(), t);
}

TEST(SwinBackbone, ShiftMaskSeparatesWrappedRegions) {
  auto m = detail::shifted_window_mask<double>(4, 4, 2, 1);
  ASSERT_EQ(m.shape(), (Shape{4, 1, 4, 4}));
  // Window 0 never wraps: all zeros.
  for (int i = 0; i < 16; ++i) EXPECT_EQ(m[i], 0.0);
  // Last window mixes four regions: token 0 and token 3 differ.
  EXPECT_EQ(m[3 * 16 + 0 * 4 + 3], -100.0);
  EXPECT_EQ(m[3 * 16 + 0 * 4 + 0], 0.0);
}

TEST(SwinBackbone, GradientsMatchFiniteDifferences) {
  SwinConfig cfg{4, {2, 1, 1, 1}, {2, 1, 1, 1}, 2, 2, 4};
  SwinTransformer<double> swin(cfg);
  swin.reset_parameters(11);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor<double> img({1, 3, 32, 32});
  for (auto& v : img.values()) v = u(rng);
  Var<double> x(img, true);
  Var<double> table;
  for (auto& p : swin.named_parameters())
    if (p.name == "layers.0.blocks.1.attn.relative_position_bias_table") table = p.var;
  ASSERT_EQ(table.numel(), 9 * 2);
  auto f = [&] {
    auto taps = swin.forward_taps(x);
    Var<double> acc = sum(mul(taps[0], taps[0]));
    for (size_t i = 1; i < taps.size(); ++i) acc = add(acc, sum(taps[i]));
    return acc;
  };
  for (const auto& r : testing::gradcheck(f, {{"x", x}, {"table", table}}))
    EXPECT_LT(r.rel_error, 1e-6) << r.name;
}

TEST(ContentPyramid, IdenticalInputsGiveBitwiseIdenticalPyramids) {
  auto params = random_backbone_params(BackboneKind::kTiny, 9);
  auto img = random_image(64, 64, 4);
  auto a = extract_content_pyramid(img, params);
  auto b = extract_content_pyramid(Tensor<float>(img), params);
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.maps[i].value(), b.maps[i].value());
}

TEST(ContentPyramid, AveragingKernelsPreserveConstantInput) {
  TinyBackbone<double> net;
  for (size_t s = 0; s < 5; ++s) {
    auto& w = net.conv(s).weight().mutable_value();
    w.fill(1.0 / static_cast<double>(w.dim(1) * 9));
  }
  // Unit-scale eval-mode BN: running_var = 1 - eps makes it the identity.
  for (auto& b : net.named_buffers())
    if (b.name.ends_with("running_var")) b.tensor->fill(1.0 - 1e-5);
  Encoder<double> enc(EncoderRole::kContent, BackboneKind::kTiny, NormalizationConstants::identity());
  BackboneParams p;
  p.backbone = BackboneKind::kTiny;
  p.normalization = NormalizationConstants::identity();
  p.tensors = nn::state_dict(net);
  enc.load(p);
  NoGradGuard ng;
  auto pyr = enc.forward(Var<double>(Tensor<double>({1, 3, 128, 128}, 1.0)));
  for (size_t s = 0; s < pyr.size(); ++s) {
    const auto& t = pyr.maps[s].value();
    const int64_t c = t.dim(1), h = t.dim(2), w = t.dim(3);
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t y = 1; y < h; ++y)
        for (int64_t x = 1; x < w; ++x) ASSERT_NEAR(t.at(0, ch, y, x), 1.0, 1e-12) << "stage " << s;
  }
}

TEST(DistortionPyramid, IndependentlySeededEncodersDiffer) {
  auto img = random_image(64, 64, 1);
  auto c = extract_content_pyramid(img, random_backbone_params(BackboneKind::kTiny, 1));
  auto d = extract_distortion_pyramid(img, random_backbone_params(BackboneKind::kTiny, 2));
  bool differs = false;
  for (size_t i = 0; i < c.size(); ++i) differs = differs || !(c.maps[i].value() == d.maps[i].value());
  EXPECT_TRUE(differs);
}

TEST(DistortionPyramid, RandomSeedIsReproducible) {
  auto img = random_image(64, 64, 1);
  auto a = extract_distortion_pyramid(img, load_backbone_weights("random:seed=7", Provenance::kPretrainedDistortion,
                                                                 BackboneKind::kTiny));
  auto b = extract_distortion_pyramid(img, load_backbone_weights("random:seed=7", Provenance::kPretrainedDistortion,
                                                                 BackboneKind::kTiny));
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.maps[i].value(), b.maps[i].value());
}

TEST(Extraction, RejectsNonFiniteAndTooSmallInputs) {
  auto params = random_backbone_params(BackboneKind::kTiny, 1);
  auto img = random_image(64, 64, 1);
  img[5] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(extract_content_pyramid(img, params), InputError);
  EXPECT_THROW(extract_content_pyramid(random_image(16, 64, 1), params), InputError);
}

TEST(Extraction, ParamsForAnotherBackboneAreAConfigurationError) {
  auto tiny = random_backbone_params(BackboneKind::kTiny, 1);
  Encoder<float> enc(EncoderRole::kContent, BackboneKind::kResNet50);
  EXPECT_THROW(enc.load(tiny), ConfigError);
  // Right backbone id but a tensor with the wrong shape.
  tiny.backbone = BackboneKind::kTiny;
  tiny.tensors["stages.2.conv.weight"] = Tensor<double>({1, 1, 1, 1});
  Encoder<float> t(EncoderRole::kContent, BackboneKind::kTiny);
  EXPECT_THROW(t.load(tiny), ConfigError);
}

TEST(Extraction, EvalExtractionDoesNotMutateParameters) {
  Encoder<float> enc(EncoderRole::kDistortion, BackboneKind::kTiny);
  enc.reset_parameters(4);
  const auto before = nn::state_dict(enc);
  NoGradGuard ng;
  enc.forward(Var<float>(random_image(64, 64, 2)));
  EXPECT_EQ(nn::state_dict(enc), before);
}

class WeightFiles : public ::testing::Test {
 protected:
  testing::TempDir dir;
};

TEST_F(WeightFiles, DistortionCheckpointLoadsIntoDistortionSlot) {
  auto p = random_backbone_params(BackboneKind::kTiny, 3);
  p.provenance = Provenance::kPretrainedDistortion;
  p.normalization = {{0.5, 0.5, 0.5}, {0.25, 0.25, 0.25}};
  const auto path = dir.path() / "dae.ckpt";
  save_backbone_weights(path, p);
  auto q = load_backbone_weights(path.string(), Provenance::kPretrainedDistortion);
  EXPECT_EQ(q.provenance, Provenance::kPretrainedDistortion);
  EXPECT_EQ(q.backbone, BackboneKind::kTiny);
  EXPECT_EQ(q.normalization, p.normalization);
  EXPECT_EQ(q.tensors, p.tensors);  // float32 payload of float-born values is exact
}

TEST_F(WeightFiles, ContentCheckpointIntoDistortionSlotIsAProvenanceError) {
  auto p = random_backbone_params(BackboneKind::kTiny, 3);
  p.provenance = Provenance::kPretrainedContent;
  const auto path = dir.path() / "cae.ckpt";
  save_backbone_weights(path, p);
  EXPECT_THROW(load_backbone_weights(path.string(), Provenance::kPretrainedDistortion), ProvenanceError);
  auto ok = load_backbone_weights(path.string(), Provenance::kPretrainedContent);
  Encoder<float> dae(EncoderRole::kDistortion, BackboneKind::kTiny);
  EXPECT_THROW(dae.load(ok), ProvenanceError);
}

TEST_F(WeightFiles, RandomSourceIsDeterministic) {
  auto a = load_backbone_weights("random:seed=7", Provenance::kPretrainedDistortion, BackboneKind::kTiny);
  auto b = load_backbone_weights("random:seed=7", Provenance::kPretrainedDistortion, BackboneKind::kTiny);
  EXPECT_EQ(a.provenance, Provenance::kRandomSeeded);
  EXPECT_EQ(a.tensors, b.tensors);
  auto c = load_backbone_weights("random:seed=8", Provenance::kPretrainedDistortion, BackboneKind::kTiny);
  EXPECT_NE(a.tensors, c.tensors);
  EXPECT_THROW(load_backbone_weights("random:seed=x", Provenance::kPretrainedContent), ConfigError);
}

TEST_F(WeightFiles, CorruptAndVersionMismatchedFilesAreRejected) {
  auto p = random_backbone_params(BackboneKind::kTiny, 3);
  const auto path = dir.path() / "w.ckpt";
  save_backbone_weights(path, p);
  std::string bytes;
  {
    std::ifstream f(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(f), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(b.data(), static_cast<std::streamsize>(b.size()));
  };
  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x10;
  write(flipped);
  EXPECT_THROW(load_backbone_weights(path.string(), Provenance::kRandomSeeded), CorruptCheckpointError);
  write(bytes.substr(0, bytes.size() / 3));
  EXPECT_THROW(load_backbone_weights(path.string(), Provenance::kRandomSeeded), CorruptCheckpointError);
  write("not a checkpoint at all, just some text");
  EXPECT_THROW(load_backbone_weights(path.string(), Provenance::kRandomSeeded), CorruptCheckpointError);
  std::string future = bytes;
  future[8] = 2;
  write(future);
  EXPECT_THROW(load_backbone_weights(path.string(), Provenance::kRandomSeeded), VersionError);
}

}  // namespace
}  // namespace codi
