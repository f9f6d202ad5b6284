// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "actionformer/profile.hpp"
#include "profile_fixture.hpp"

namespace af = actionformer;

TEST(Bin, Closedness) {
  const af::Bin open_closed{"x", 0.0, 1.0};
  EXPECT_FALSE(open_closed.contains(0.0));
  EXPECT_TRUE(open_closed.contains(1.0));
  const af::Bin closed_open{"y", 0.0, 1.0, true, false};
  EXPECT_TRUE(closed_open.contains(0.0));
  EXPECT_FALSE(closed_open.contains(1.0));
}

TEST(ProfileBins, EdgesAssignToLowerBin) {
  const af::ProfileBins b;
  EXPECT_EQ(af::find_bin(b.coverage, 0.02), 0);
  EXPECT_EQ(af::find_bin(b.coverage, 0.0200001), 1);
  EXPECT_EQ(af::find_bin(b.length, 18.0), 3);
  EXPECT_EQ(af::find_bin(b.length, 18.5), 4);
  EXPECT_EQ(af::find_bin(b.instances, 1.0), 0);
  EXPECT_EQ(af::find_bin(b.instances, 40.0), 1);
  EXPECT_EQ(af::find_bin(b.instances, 41.0), 2);
  EXPECT_EQ(af::find_bin(b.instances, 81.0), 3);
}

TEST(Profile, GroundTruthBinsMatchHandTable) {
  const auto c = fixture::six_videos();
  const auto rep = af::profile_errors(c.preds, c.gts, c.durations);
  const auto want = fixture::expected_ground_truth();
  ASSERT_EQ(rep.ground_truth.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    const auto& g = rep.ground_truth[i];
    EXPECT_EQ(g.video_id, want[i].video);
    EXPECT_EQ(g.index, want[i].index);
    EXPECT_EQ(g.coverage_bin, want[i].coverage_bin) << g.video_id << " " << g.index;
    EXPECT_EQ(g.length_bin, want[i].length_bin) << g.video_id << " " << g.index;
    EXPECT_EQ(g.instances_bin, want[i].instances_bin) << g.video_id << " " << g.index;
    EXPECT_EQ(g.detected, want[i].detected) << g.video_id << " " << g.index;
  }
}

TEST(Profile, FalsePositiveCategoriesMatchHandTable) {
  const auto c = fixture::six_videos();
  const auto rep = af::profile_errors(c.preds, c.gts, c.durations);
  const auto want = fixture::expected_categories();
  ASSERT_EQ(rep.top_predictions.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i)
    EXPECT_EQ(rep.top_predictions[i].category, want[i]) << i << " " << af::fp_category_name(rep.top_predictions[i].category);
  EXPECT_EQ(rep.fp_counts[static_cast<std::size_t>(af::FpCategory::kTruePositive)], 4u);
  EXPECT_EQ(rep.fp_counts[static_cast<std::size_t>(af::FpCategory::kBackground)], 1u);
}

TEST(Profile, BinCountsAndFalseNegatives) {
  const auto c = fixture::six_videos();
  const auto rep = af::profile_errors(c.preds, c.gts, c.durations);
  const auto want = fixture::expected_bin_counts();
  ASSERT_EQ(rep.characteristics.size(), 3u);
  for (const auto& ch : rep.characteristics) {
    const auto& w = want.at(ch.characteristic);
    ASSERT_EQ(ch.bins.size(), w.size());
    for (std::size_t b = 0; b < w.size(); ++b) {
      EXPECT_EQ(ch.bins[b].count, w[b].first) << ch.characteristic << " " << ch.bins[b].name;
      EXPECT_EQ(ch.bins[b].false_negatives, w[b].second) << ch.characteristic << " " << ch.bins[b].name;
    }
  }
}

TEST(Profile, RawPerBinMap) {
  const auto c = fixture::six_videos();
  const auto rep = af::profile_errors(c.preds, c.gts, c.durations);
  // Length XS holds v1 and v5 (class 0); the v3 true positive matched an
  // out-of-bin instance and is dropped, leaving TP then three FPs: AP 1/2.
  EXPECT_DOUBLE_EQ(rep.characteristics[1].bins[0].raw_map, 0.5);
  // Instances XS: class 0 AP 1/2, class 1 AP 1/2, class 2 AP 1.
  EXPECT_DOUBLE_EQ(rep.characteristics[2].bins[0].raw_map, 2.0 / 3.0);
  EXPECT_EQ(rep.characteristics[2].bins[2].raw_map, 0.0);
}

TEST(Profile, TopTenGLimitsCategorizedPredictions) {
  af::DetectionSet gts = {{"v", {{0, 10, 0}}}};
  af::DetectionSet preds;
  for (int i = 0; i < 25; ++i) preds["v"].push_back({100.0 + i * 20, 110.0 + i * 20, 0, 0.5 + i * 0.01});
  const auto rep = af::profile_errors(preds, gts, {{"v", 1000.0}});
  EXPECT_EQ(rep.top_predictions.size(), 10u);
}

TEST(Profile, MissingDurationRejected) {
  af::DetectionSet gts = {{"v", {{0, 10, 0}}}};
  EXPECT_THROW(af::profile_errors({}, gts, {}), af::Error);
}
