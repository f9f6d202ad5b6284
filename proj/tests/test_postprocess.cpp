// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "actionformer/postprocess.hpp"
#include "oracles.hpp"

namespace af = actionformer;

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

af::LevelPrediction level(std::size_t stride, std::vector<double> probs, std::vector<double> reg) {
  af::LevelPrediction lp;
  lp.stride = stride;
  lp.num_classes = 1;
  for (double p : probs) lp.logits.push_back(logit(p));
  lp.reg = std::move(reg);
  return lp;
}

}  // namespace

TEST(Decode, MomentToSegmentInGridUnits) {
  // Stride 2: moment 3 sits at 6 and reaches 1.5 strides back, 2 forward.
  auto lp = level(2, {0.01, 0.01, 0.01, 0.9}, {0, 0, 0, 0, 0, 0, 1.5, 2.0});
  af::PostprocessConfig cfg;
  cfg.pre_nms_score_threshold = 0.5;
  const auto dets = af::decode(std::vector<af::LevelPrediction>{lp}, 100.0, cfg);
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_DOUBLE_EQ(dets[0].start, 3.0);
  EXPECT_DOUBLE_EQ(dets[0].end, 10.0);
  EXPECT_NEAR(dets[0].score, 0.9, 1e-12);
}

TEST(Decode, ClipsToSequenceAndDropsEmptySegments) {
  auto lp = level(1, {0.9, 0.9, 0.9}, {5, 1, 0, 0, 1, 9});
  const auto dets = af::decode(std::vector<af::LevelPrediction>{lp}, 3.0, af::PostprocessConfig{});
  ASSERT_EQ(dets.size(), 2u);
  EXPECT_EQ(dets[0].start, 0.0);
  EXPECT_EQ(dets[0].end, 1.0);
  EXPECT_EQ(dets[1].start, 1.0);
  EXPECT_EQ(dets[1].end, 3.0);
}

TEST(Decode, ThresholdAndMask) {
  auto lp = level(1, {0.0005, 0.5, 0.5}, {1, 1, 1, 1, 1, 1});
  lp.valid = {1, 1, 0};
  const auto dets = af::decode(std::vector<af::LevelPrediction>{lp}, 10.0, af::PostprocessConfig{});
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_EQ(dets[0].start, 0.0);
  EXPECT_EQ(dets[0].end, 2.0);
}

TEST(Decode, TopKPerLevelKeepsBest) {
  std::vector<double> probs, reg;
  for (int i = 0; i < 10; ++i) {
    probs.push_back(0.05 + 0.09 * i);
    reg.insert(reg.end(), {1.0, 1.0});
  }
  af::PostprocessConfig cfg;
  cfg.pre_nms_topk = 3;
  const auto one = level(1, probs, reg);
  const auto dets = af::decode(std::vector<af::LevelPrediction>{one, one}, 100.0, cfg);
  ASSERT_EQ(dets.size(), 6u);
  for (const auto& d : dets) EXPECT_GE(d.score, 0.05 + 0.09 * 7 - 1e-12);
}

TEST(SoftNms, RescoresOverlappingDetection) {
  // Identical segments: iou 1, sigma 0.5, decay exp(-2).
  af::PostprocessConfig cfg;
  const std::vector<af::Detection> dets = {{0, 10, 0, 0.9}, {0, 10, 0, 0.8}};
  const auto out = af::soft_nms(dets, cfg);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_NEAR(out[1].score, 0.8 * std::exp(-2.0), 1e-12);
  EXPECT_NEAR(out[1].score, 0.10827, 1e-5);
}

TEST(SoftNms, DisjointAndOtherClassUntouched) {
  af::PostprocessConfig cfg;
  const std::vector<af::Detection> dets = {{0, 10, 0, 0.9}, {20, 30, 0, 0.8}, {0, 10, 1, 0.7}};
  const auto out = af::soft_nms(dets, cfg);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[1].score, 0.8);
  EXPECT_EQ(out[2].score, 0.7);
}

TEST(SoftNms, ClassAgnosticDecaysAcrossLabels) {
  af::PostprocessConfig cfg;
  cfg.class_agnostic_nms = true;
  const auto out = af::soft_nms({{0, 10, 0, 0.9}, {0, 10, 1, 0.7}}, cfg);
  EXPECT_NEAR(out[1].score, 0.7 * std::exp(-2.0), 1e-12);
}

TEST(SoftNms, DropsBelowMinScoreAndCapsCount) {
  af::PostprocessConfig cfg;
  cfg.soft_nms_min_score = 0.2;
  cfg.max_detections_per_video = 2;
  const auto out = af::soft_nms({{0, 10, 0, 0.9}, {0, 10, 0, 0.8}, {30, 40, 0, 0.5}, {50, 60, 0, 0.3}}, cfg);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].score, 0.9);
  EXPECT_EQ(out[1].score, 0.5);
}

TEST(SoftNms, OutputIsSortedAndScoresNeverIncrease) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    auto inst = oracle::random_instance(rng, 30, 1, 3, 1);
    std::vector<af::Detection> dets;
    for (const auto& [v, d] : inst.preds) dets.insert(dets.end(), d.begin(), d.end());
    const auto out = af::soft_nms(dets, af::PostprocessConfig{});
    EXPECT_TRUE(std::is_sorted(out.begin(), out.end(), af::detection_order));
    EXPECT_LE(out.size(), dets.size());
    if (!out.empty()) {
      double top = 0.0;
      for (const auto& d : dets) top = std::max(top, d.score);
      EXPECT_EQ(out[0].score, top);
    }
  }
}

TEST(SoftNms, MatchesBruteForceReference) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 1000; ++t) {
    auto inst = oracle::random_instance(rng, 10, 1, 3, 1);
    std::vector<af::Detection> dets;
    for (const auto& [v, d] : inst.preds) dets.insert(dets.end(), d.begin(), d.end());
    af::PostprocessConfig cfg;
    cfg.class_agnostic_nms = t % 2 == 1;
    cfg.soft_nms_min_score = 0.05;
    cfg.max_detections_per_video = 8;
    const auto got = af::soft_nms(dets, cfg);
    const auto want = oracle::soft_nms(dets, cfg.soft_nms_sigma, cfg.soft_nms_min_score,
                                       cfg.max_detections_per_video, cfg.class_agnostic_nms);
    ASSERT_EQ(got, want) << "instance " << t;
  }
}

TEST(FuseScores, RelabelsWithTopExternalClasses) {
  const std::vector<af::Detection> dets = {{1, 5, 0, 0.5}};
  const auto out = af::fuse_scores(dets, {0.1, 0.6, 0.3}, 2);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].label, 1);
  EXPECT_NEAR(out[0].score, 0.3, 1e-15);
  EXPECT_EQ(out[1].label, 2);
  EXPECT_NEAR(out[1].score, 0.15, 1e-15);
  EXPECT_EQ(out[0].start, 1.0);
  EXPECT_THROW(af::fuse_scores(dets, {0.1}, 2), af::Error);
}

TEST(PostprocessConfig, Validation) {
  af::PostprocessConfig cfg;
  cfg.soft_nms_sigma = 0.0;
  EXPECT_THROW(cfg.validate(), af::Error);
  cfg = {};
  cfg.pre_nms_score_threshold = 1.5;
  EXPECT_THROW(cfg.validate(), af::Error);
}
