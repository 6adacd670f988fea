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

#include <fstream>
#include <set>
#include <sstream>

#include "codi/data/manifest.hpp"
#include "codi/data/preprocess.hpp"
#include "codi/data/split.hpp"
#include "codi/data/synthetic.hpp"
#include "support/temp_dir.hpp"

namespace codi {
namespace {

DatasetDescriptor desc(double lo, double hi, bool hib = true, DatasetKind kind = DatasetKind::kAuthentic) {
  DatasetDescriptor d;
  d.name = "toy";
  d.score_lo = lo;
  d.score_hi = hi;
  d.higher_is_better = hib;
  d.kind = kind;
  return d;
}

DatasetManifest parse(const std::string& text, const DatasetDescriptor& d) {
  std::istringstream in(text);
  return parse_manifest(in, d);
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

TEST(LoadManifest, HappyPath) {
  auto m = parse("image_ref,score,distortion_type,content_id\na.png,3.5,blur,c1\nb.png,1,noise,c1\n\"c,d.png\",5,,c2\n",
                 desc(1, 5));
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m.records[2].image_ref, "c,d.png");
  EXPECT_FALSE(m.records[2].distortion_type.has_value());
  EXPECT_EQ(*m.records[0].content_id, "c1");
  EXPECT_DOUBLE_EQ(m.records[0].raw_score, 3.5);
}

TEST(LoadManifest, TabSeparatedWithCrlf) {
  auto m = parse("image_ref\tscore\r\nx.png\t0.5\r\n", desc(0, 1));
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m.records[0].image_ref, "x.png");
}

TEST(LoadManifest, OutOfRangeScoreNamesTheLine) {
  const auto msg = error_of([] { parse("image_ref,score\na.png,3\nb.png,6.2\n", desc(1, 5)); });
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("6.2"), std::string::npos) << msg;
  EXPECT_THROW(parse("image_ref,score\na.png,6.2\n", desc(1, 5)), ValidationError);
}

TEST(LoadManifest, DuplicateImageRefIsListed) {
  const auto msg = error_of([] { parse("image_ref,score\na.png,3\nb.png,2\na.png,4\n", desc(1, 5)); });
  EXPECT_NE(msg.find("'a.png'"), std::string::npos) << msg;
  EXPECT_NE(msg.find("duplicate"), std::string::npos) << msg;
}

TEST(LoadManifest, StructuralErrors) {
  EXPECT_THROW(parse("", desc(1, 5)), ValidationError);
  EXPECT_THROW(parse("image_ref,score\n", desc(1, 5)), ValidationError);
  EXPECT_THROW(parse("image_ref,mos\na.png,3\n", desc(1, 5)), ValidationError);
  EXPECT_THROW(parse("image_ref,score\na.png,abc\n", desc(1, 5)), ValidationError);
  EXPECT_THROW(parse("image_ref,score\na.png,3\n", desc(1, 5, true, DatasetKind::kSynthetic)), ValidationError);
}

TEST(LoadDataset, DescriptorResolvesRelativePaths) {
  testing::TempDir dir;
  std::ofstream(dir.path() / "scores.csv") << "image_ref,score\nimg/a.png,40\n";
  std::ofstream(dir.path() / "d.json")
      << R"({"name":"live","score_range":[0,100],"higher_is_better":false,"manifest":"scores.csv",
            "resize":{"rule":"random_shorter_side","min":384,"max":416}})";
  auto m = load_dataset(dir.path() / "d.json");
  EXPECT_EQ(m.name(), "live");
  EXPECT_EQ(m.records[0].image_path, dir.path() / "img/a.png");
  EXPECT_EQ(m.descriptor.resize, ResizeRule::random_shorter_side(384, 416));
  EXPECT_THROW(load_dataset(dir.path() / "missing.json"), IoError);
}

TEST(NormalizeLabels, Examples) {
  auto m = normalize_labels(parse("image_ref,score\na,3.0\nb,1\nc,5\n", desc(1, 5)));
  EXPECT_DOUBLE_EQ(m.records[0].score, 0.5);
  EXPECT_DOUBLE_EQ(m.records[1].score, 0.0);
  EXPECT_DOUBLE_EQ(m.records[2].score, 1.0);
  auto dm = normalize_labels(parse("image_ref,score\na,25\n", desc(0, 100, false)));
  EXPECT_DOUBLE_EQ(dm.records[0].score, 0.75);
  EXPECT_THROW(normalize_labels(parse("image_ref,score\na,2\n", desc(2, 2))), DegenerateRangeError);
}

TEST(NormalizeLabels, MonotoneInQualityAndBounded) {
  std::ostringstream csv;
  csv << "image_ref,score\n";
  for (int i = 0; i <= 20; ++i) csv << "r" << i << "," << i * 5 << "\n";
  for (bool hib : {true, false}) {
    auto m = normalize_labels(parse(csv.str(), desc(0, 100, hib)));
    for (size_t i = 0; i < m.size(); ++i) {
      EXPECT_GE(m.records[i].score, 0.0);
      EXPECT_LE(m.records[i].score, 1.0);
      if (i > 0) {
        EXPECT_EQ(m.records[i].score > m.records[i - 1].score, hib);
      }
    }
  }
}

DatasetManifest grouped(int groups, int per_group, bool synthetic = true) {
  std::ostringstream csv;
  csv << "image_ref,score,distortion_type,content_id\n";
  for (int g = 0; g < groups; ++g)
    for (int k = 0; k < per_group; ++k) csv << "g" << g << "_" << k << ".png,0.5,d" << k % 24 << ",g" << g << "\n";
  return parse(csv.str(), desc(0, 1, true, synthetic ? DatasetKind::kSynthetic : DatasetKind::kAuthentic));
}

std::set<std::string> content_ids(const DatasetManifest& m) {
  std::set<std::string> s;
  for (const auto& r : m.records) s.insert(*m.content_group(r));
  return s;
}

TEST(MakeSplit, ContentDisjoint80_20) {
  auto m = grouped(30, 4);
  auto s = make_split(m, SplitPlan{});
  EXPECT_EQ(content_ids(s.train).size(), 24u);
  EXPECT_EQ(content_ids(s.test).size(), 6u);
  EXPECT_EQ(s.train.size() + s.test.size(), m.size());
}

TEST(MakeSplit, ContentDisjointAcross100Seeds) {
  auto m = grouped(25, 3);
  for (uint64_t seed = 0; seed < 100; ++seed) {
    SplitPlan p;
    p.seed = seed;
    auto s = make_split(m, p);
    const auto a = content_ids(s.train), b = content_ids(s.test);
    for (const auto& id : b) ASSERT_EQ(a.count(id), 0u) << "seed " << seed;
  }
}

TEST(MakeSplit, DeterministicPerSeedAndSeedsDiffer) {
  auto m = grouped(40, 2);
  SplitPlan p;
  p.seed = 5;
  EXPECT_EQ(content_ids(make_split(m, p).test), content_ids(make_split(m, p).test));
  p.seed = 6;
  SplitPlan q;
  q.seed = 5;
  EXPECT_NE(content_ids(make_split(m, p).test), content_ids(make_split(m, q).test));
}

TEST(MakeSplit, RatioOneKeepsEverythingForTraining) {
  auto m = grouped(7, 2);
  SplitPlan p;
  p.ratio = 1.0;
  auto s = make_split(m, p);
  EXPECT_EQ(s.train.size(), m.size());
  EXPECT_EQ(s.test.size(), 0u);
}

TEST(MakeSplit, AuthenticRecordsAreTheirOwnGroups) {
  auto m = parse("image_ref,score\na,1\nb,2\nc,3\nd,4\ne,5\n", desc(1, 5));
  auto s = make_split(m, SplitPlan{});
  EXPECT_EQ(s.train.size(), 4u);
  EXPECT_EQ(s.test.size(), 1u);
}

TEST(MakeSplit, LeaveOneDistortionOutPlansPartition24Types) {
  auto m = grouped(10, 24);
  auto plans = leave_one_distortion_out_plans(m);
  ASSERT_EQ(plans.size(), 24u);
  std::map<std::string, int> seen;
  for (const auto& p : plans) {
    auto s = make_split(m, p);
    EXPECT_EQ(s.train.size() + s.test.size(), m.size());
    for (const auto& r : s.test.records) {
      EXPECT_EQ(*r.distortion_type, *p.held_out_distortion);
      ++seen[r.image_ref];
    }
    for (const auto& r : s.train.records) EXPECT_NE(*r.distortion_type, *p.held_out_distortion);
  }
  EXPECT_EQ(seen.size(), m.size());
  for (const auto& [_, c] : seen) EXPECT_EQ(c, 1);
}

TEST(MakeSplit, Errors) {
  auto m = grouped(4, 2);
  SplitPlan p;
  p.mode = SplitMode::kLeaveOneDistortionOut;
  p.held_out_distortion = "fog";
  EXPECT_THROW(make_split(m, p), SplitError);
  p.held_out_distortion.reset();
  EXPECT_THROW(make_split(m, p), ConfigError);
  SplitPlan bad;
  bad.ratio = 0.0;
  EXPECT_THROW(make_split(m, bad), ConfigError);
  auto no_groups = grouped(4, 2);
  no_groups.records[0].content_id.reset();
  EXPECT_THROW(make_split(no_groups, SplitPlan{}), SplitError);
}

TEST(MakeSplit, FixedOfficial) {
  auto m = parse("image_ref,score,split\na,1,train\nb,2,test\nc,3,train\n", desc(1, 5));
  SplitPlan p;
  p.mode = SplitMode::kFixedOfficial;
  auto s = make_split(m, p);
  EXPECT_EQ(s.train.size(), 2u);
  EXPECT_EQ(s.test.records[0].image_ref, "b");
}

TEST(EfficiencySubsets, SizesAndDisjointness) {
  auto m = grouped(1000, 1, false);
  const std::vector<double> fr{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  auto plan = efficiency_subsets(m, fr, 3);
  EXPECT_EQ(plan.test.size(), 200u);
  const auto test_ids = content_ids(plan.test);
  for (size_t i = 0; i < fr.size(); ++i) {
    EXPECT_EQ(plan.subsets[i].size(), 100u * (i + 1));
    for (const auto& id : content_ids(plan.subsets[i])) EXPECT_EQ(test_ids.count(id), 0u);
    if (i > 0) {
      const auto prev = content_ids(plan.subsets[i - 1]), cur = content_ids(plan.subsets[i]);
      EXPECT_TRUE(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
    }
  }
  auto again = efficiency_subsets(m, fr, 3);
  for (size_t i = 0; i < fr.size(); ++i) EXPECT_EQ(content_ids(again.subsets[i]), content_ids(plan.subsets[i]));
  EXPECT_THROW(efficiency_subsets(m, {0.8}, 3), SplitError);
  auto indep = efficiency_subsets(m, fr, 3, 0.2, false);
  for (size_t i = 0; i < fr.size(); ++i)
    for (const auto& id : content_ids(indep.subsets[i])) EXPECT_EQ(test_ids.count(id), 0u);
}

TEST(EfficiencySubsets, GroupedDatasetsStayContentDisjoint) {
  auto m = grouped(50, 4);
  auto plan = efficiency_subsets(m, {0.1, 0.4, 0.7}, 9);
  const auto test_ids = content_ids(plan.test);
  for (const auto& s : plan.subsets)
    for (const auto& id : content_ids(s)) EXPECT_EQ(test_ids.count(id), 0u);
  EXPECT_EQ(plan.subsets[1].size(), 80u);
}

float px(const Tensor<float>& t, int64_t c, int64_t y, int64_t x) { return t[(c * t.dim(1) + y) * t.dim(2) + x]; }

cv::Mat noise_image(int h, int w, uint64_t seed) {
  cv::Mat img(h, w, CV_8UC3);
  cv::RNG rng(seed);
  rng.fill(img, cv::RNG::UNIFORM, 0, 256);
  return img;
}

TEST(Preprocess, TrainModeIsSeededAndShaped) {
  const auto img = noise_image(512, 768, 1);
  PreprocessConfig cfg;
  Rng a(7), b(7), c(8);
  auto ta = preprocess_sample(img, PreprocessMode::kTrain, cfg, a);
  EXPECT_EQ(ta.shape(), (Shape{3, 384, 384}));
  EXPECT_EQ(ta, preprocess_sample(img, PreprocessMode::kTrain, cfg, b));
  EXPECT_NE(ta, preprocess_sample(img, PreprocessMode::kTrain, cfg, c));
}

TEST(Preprocess, EvalModeIsPureAndCentred) {
  cv::Mat img(400, 500, CV_8UC3, cv::Scalar(0, 0, 0));
  img.at<cv::Vec3b>(8, 58) = cv::Vec3b(255, 128, 0);  // centre crop starts at (8, 58)
  PreprocessConfig cfg;
  Rng a(1), b(99);
  auto t = preprocess_sample(img, PreprocessMode::kEval, cfg, a);
  EXPECT_EQ(t, preprocess_sample(img, PreprocessMode::kEval, cfg, b));
  EXPECT_FLOAT_EQ(px(t, 0, 0, 0), 1.0f);
  EXPECT_FLOAT_EQ(px(t, 1, 0, 0), 128.0f / 255.0f);
  EXPECT_FLOAT_EQ(px(t, 2, 0, 0), 0.0f);
}

TEST(Preprocess, ShorterSideRuleResizesBeforeCropping) {
  // A 3000x4000 image with a white left half: after resizing the shorter side
  // to 448 the image is 448x597; the centre crop starts at column 106, which
  // is left of the 298-column boundary.
  cv::Mat img(3000, 4000, CV_8UC3, cv::Scalar(0, 0, 0));
  img(cv::Rect(0, 0, 2000, 3000)).setTo(cv::Scalar(255, 255, 255));
  PreprocessConfig cfg;
  cfg.resize = ResizeRule::shorter_side(448);
  Rng rng(0);
  auto t = preprocess_sample(img, PreprocessMode::kEval, cfg, rng);
  EXPECT_FLOAT_EQ(px(t, 0, 200, 180), 1.0f);  // column 286 of the resized image
  EXPECT_FLOAT_EQ(px(t, 0, 200, 200), 0.0f);  // column 306
  EXPECT_EQ(detail::resize_shorter(img, 448).size(), cv::Size(597, 448));
}

TEST(Preprocess, SmallImagesAreUpscaledWithAWarning) {
  std::vector<std::string> warnings;
  auto prev = set_log_sink([&](LogLevel l, const std::string& m) {
    if (l == LogLevel::kWarning) warnings.push_back(m);
  });
  PreprocessConfig cfg;
  Rng rng(0);
  auto t = preprocess_sample(noise_image(200, 300, 2), PreprocessMode::kTrain, cfg, rng);
  set_log_sink(prev);
  EXPECT_EQ(t.shape(), (Shape{3, 384, 384}));
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Preprocess, HorizontalFlipMirrorsTheCrop) {
  cv::Mat img(64, 64, CV_8UC3, cv::Scalar(0, 0, 0));
  img.col(0).setTo(cv::Scalar(255, 255, 255));
  PreprocessConfig cfg;
  cfg.crop = 64;
  int flipped = 0;
  for (uint64_t s = 0; s < 200; ++s) {
    Rng rng(s);
    auto t = preprocess_sample(img, PreprocessMode::kTrain, cfg, rng);
    const bool left = px(t, 0, 10, 0) == 1.0f, right = px(t, 0, 10, 63) == 1.0f;
    EXPECT_NE(left, right);
    flipped += right;
  }
  EXPECT_GT(flipped, 70);
  EXPECT_LT(flipped, 130);
}

TEST(Preprocess, ResizeOnlyAndRandomRules) {
  PreprocessConfig cfg;
  cfg.crop = 48;
  cfg.resize_only = true;
  Rng rng(1);
  EXPECT_EQ(preprocess_sample(noise_image(100, 80, 3), PreprocessMode::kTrain, cfg, rng).shape(), (Shape{3, 48, 48}));
  cfg.resize_only = false;
  cfg.resize = ResizeRule::random_shorter_side(48, 60);
  for (int i = 0; i < 5; ++i)
    EXPECT_EQ(preprocess_sample(noise_image(100, 80, 3), PreprocessMode::kTrain, cfg, rng).shape(), (Shape{3, 48, 48}));
}

TEST(Synthetic, DatasetRoundTripsThroughFiles) {
  testing::TempDir dir;
  SyntheticSpec spec;
  spec.contents = 2;
  spec.levels = 2;
  auto path = write_synthetic_dataset(dir.path(), spec);
  auto m = load_dataset(path);
  EXPECT_EQ(m.size(), 16u);
  EXPECT_EQ(distortion_types(m).size(), 4u);
  FileImageSource src;
  auto mem = make_synthetic_dataset(spec);
  for (size_t i = 0; i < m.size(); ++i) {
    cv::Mat a = src.load(m.records[i]), b = mem.images.load(mem.manifest.records[i]);
    EXPECT_EQ(cv::norm(a, b, cv::NORM_INF), 0.0) << m.records[i].image_ref;
  }
  auto batch = make_batch(normalize_labels(m), {0, 3}, src, PreprocessConfig{64, {}, false}, PreprocessMode::kEval, 0, 0);
  EXPECT_EQ(batch.images.shape(), (Shape{2, 3, 64, 64}));
  EXPECT_FLOAT_EQ(batch.labels[0], static_cast<float>((synthetic_mos(1, 2) - 1) / 4));
}

TEST(Synthetic, DistortionsDegradeMonotonically) {
  const cv::Mat ref = synthetic_content(3, 64, 64);
  for (const auto& kind : synthetic_distortion_names()) {
    double prev = 0;
    for (int l = 1; l <= 3; ++l) {
      const double err = cv::norm(ref, apply_distortion(ref, kind, l, 3, 1), cv::NORM_L2);
      EXPECT_GT(err, prev) << kind << " level " << l;
      prev = err;
    }
  }
}

}  // namespace
}  // namespace codi
