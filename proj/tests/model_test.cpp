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

#include <random>

#include "codi/model/model.hpp"
#include "support/temp_dir.hpp"

namespace codi {
namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.content_backbone = BackboneKind::kTiny;
  c.distortion_backbone = BackboneKind::kTiny;
  c.dim = 8;
  c.squeeze = 2;
  return c;
}

Var<float> images(int64_t n, int64_t hw, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  Tensor<float> t({n, 3, hw, hw});
  for (auto& v : t.values()) v = u(rng);
  return Var<float>(std::move(t));
}

TEST(QualityModel, TinyForwardShapes) {
  QualityModel<float> m(tiny_config());
  m.reset_parameters(1);
  m.train(false);
  NoGradGuard ng;
  auto out = m.forward_detailed(images(2, 64, 1));
  EXPECT_EQ(out.stages, (std::vector<int>{0, 1, 2, 3, 4}));
  EXPECT_EQ(out.fused.shape(), (Shape{2, 40, 2, 2}));
  EXPECT_EQ(out.quality.shape(), (Shape{2}));
  EXPECT_EQ(out.traces.size(), 5u);
  EXPECT_EQ(m.head().hidden_width(), 10);
  EXPECT_TRUE(out.quality.value().all_finite());
}

TEST(QualityModel, StageSubsetAndSingleBlock) {
  auto c = tiny_config();
  c.stages = {4, 3};
  QualityModel<float> sub(c);
  EXPECT_EQ(sub.stages(), (std::vector<int>{3, 4}));
  EXPECT_EQ(sub.fused_channels(), 16);

  c.stages = {};
  c.single_block = true;
  QualityModel<float> single(c);
  single.reset_parameters(2);
  EXPECT_EQ(single.block_count(), 1u);
  EXPECT_EQ(single.fused_channels(), 8);
  NoGradGuard ng;
  auto out = single.forward_detailed(images(1, 64, 2));
  EXPECT_EQ(out.fused.shape(), (Shape{1, 8, 2, 2}));
}

TEST(QualityModel, InvalidStageSelectionIsRejected) {
  auto c = tiny_config();
  c.stages = {5};
  EXPECT_THROW(QualityModel<float>{c}, ConfigError);
  c.stages = {2, 2};
  EXPECT_THROW(QualityModel<float>{c}, ConfigError);
  c.content_backbone = BackboneKind::kSwinBase;
  c.stages = {0};
  EXPECT_THROW(QualityModel<float>{c}, ConfigError);
}

TEST(QualityModel, MixedBackbonesUseCommonStages) {
  ModelConfig c;
  c.content_backbone = BackboneKind::kSwinBase;
  EXPECT_EQ(c.common_stages(), (std::vector<int>{1, 2, 3, 4}));
}

TEST(QualityModel, ConfigJsonRoundTrip) {
  auto c = tiny_config();
  c.stages = {1, 4};
  c.switches = {true, true, true, false};
  c.squeeze = 5;
  auto back = ModelConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_THROW(ModelConfig::from_json({{"dim", "wide"}}), ConfigError);
}

TEST(QualityModel, CheckpointRoundTripReproducesPredictions) {
  testing::TempDir dir;
  QualityModel<float> m(tiny_config());
  m.reset_parameters(7);
  m.train(false);
  auto x = images(3, 64, 3);
  Tensor<float> before;
  {
    NoGradGuard ng;
    before = m.forward(x).value();
  }
  save_model(dir.path() / "m.ckpt", m, {{"seed", 7}});
  auto loaded = load_model<float>(dir.path() / "m.ckpt");
  loaded.model->train(false);
  NoGradGuard ng;
  EXPECT_EQ(loaded.model->forward(x).value(), before);
  EXPECT_EQ(loaded.manifest.at("seed"), 7);
  EXPECT_EQ(loaded.manifest.at("head_hidden"), 10);
}

TEST(QualityModel, EncoderSeedsAreIndependentOfOtherParts) {
  // Changing the interaction width must not change encoder initialization.
  auto a = tiny_config();
  auto b = tiny_config();
  b.dim = 12;
  QualityModel<float> ma(a), mb(b);
  ma.reset_parameters(3);
  mb.reset_parameters(3);
  auto sa = nn::state_dict(ma.content_encoder());
  auto sb = nn::state_dict(mb.content_encoder());
  EXPECT_EQ(sa.size(), sb.size());
  for (auto& [k, v] : sa) EXPECT_EQ(v, sb.at(k)) << k;
}

}  // namespace
}  // namespace codi
