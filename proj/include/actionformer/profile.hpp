// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ACTIONFORMER_PROFILE_HPP
#define ACTIONFORMER_PROFILE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "actionformer/error.hpp"
#include "actionformer/eval.hpp"
#include "actionformer/types.hpp"

namespace actionformer {

/// Interval bin with configurable closedness at each end.
struct Bin {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;
  bool lo_closed = false;
  bool hi_closed = true;

  bool contains(double v) const {
    const bool above = lo_closed ? v >= lo : v > lo;
    const bool below = hi_closed ? v <= hi : v < hi;
    return above && below;
  }
};

struct ProfileBins {
  static constexpr double kInf = std::numeric_limits<double>::infinity();

  // Fraction of the video covered by the instance.
  std::vector<Bin> coverage = {{"XS", 0.0, 0.02}, {"S", 0.02, 0.04}, {"M", 0.04, 0.06},
                               {"L", 0.06, 0.08}, {"XL", 0.08, 1.0}};
  // Instance length in seconds.
  std::vector<Bin> length = {{"XS", 0.0, 3.0}, {"S", 3.0, 6.0}, {"M", 6.0, 12.0},
                             {"L", 12.0, 18.0}, {"XL", 18.0, kInf, false, false}};
  // Number of instances of the same class in the same video.
  std::vector<Bin> instances = {{"XS", 1.0, 1.0, true, true}, {"S", 2.0, 40.0, true, true},
                                {"M", 40.0, 80.0}, {"L", 80.0, kInf, false, false}};
};

/// Index of the bin containing v, or -1.
inline int find_bin(const std::vector<Bin>& bins, double v) {
  for (std::size_t i = 0; i < bins.size(); ++i)
    if (bins[i].contains(v)) return static_cast<int>(i);
  return -1;
}

enum class FpCategory { kTruePositive, kDoubleDetection, kWrongLabel, kLocalization, kConfusion, kBackground };

inline const char* fp_category_name(FpCategory c) {
  switch (c) {
    case FpCategory::kTruePositive: return "true_positive";
    case FpCategory::kDoubleDetection: return "double_detection";
    case FpCategory::kWrongLabel: return "wrong_label";
    case FpCategory::kLocalization: return "localization";
    case FpCategory::kConfusion: return "confusion";
    case FpCategory::kBackground: return "background";
  }
  return "unknown";
}

inline constexpr std::size_t kNumFpCategories = 6;

/// Characteristics and outcome of one ground-truth instance.
struct GtProfile {
  std::string video_id;
  std::size_t index = 0;
  double coverage = 0.0;
  double length = 0.0;
  std::size_t instances = 0;
  int coverage_bin = -1;
  int length_bin = -1;
  int instances_bin = -1;
  bool detected = false;
};

struct PredictionProfile {
  std::string video_id;
  Detection det;
  FpCategory category = FpCategory::kBackground;
};

struct BinReport {
  std::string name;
  std::size_t count = 0;
  std::size_t false_negatives = 0;
  double fn_rate = 0.0;     // 0 when the bin is empty
  double raw_map = 0.0;     // mAP at the profiling threshold restricted to this bin
};

struct CharacteristicReport {
  std::string characteristic;
  std::vector<BinReport> bins;
};

struct ProfileReport {
  double threshold = 0.5;
  std::size_t num_ground_truth = 0;
  std::vector<GtProfile> ground_truth;
  std::vector<PredictionProfile> top_predictions;  // top-10G in rank order
  std::array<std::size_t, kNumFpCategories> fp_counts{};
  std::vector<CharacteristicReport> characteristics;  // coverage, length, instances
};

namespace detail {

inline double max_tiou(const Detection& d, const std::vector<ActionInstance>& gts, bool same_label) {
  double best = 0.0;
  for (const auto& g : gts)
    if ((g.label == d.label) == same_label) best = std::max(best, tiou(d, g));
  return best;
}

}  // namespace detail

/// False-negative rates per characteristic bin, false-positive categories of
/// the top-10G ranked predictions, and raw per-bin mAP.
///
/// Everything is in seconds. A ground-truth instance is a false negative when
/// greedy matching at `threshold` over all predictions leaves it unmatched.
/// Non-matching predictions are classified, in order of precedence, as double
/// detection (tIoU >= threshold with an already matched same-label instance),
/// wrong label (tIoU >= threshold with another label), localization
/// (0.1 <= tIoU < threshold, same label), confusion (0.1 <= tIoU < threshold,
/// other label) or background. Per-bin mAP keeps only in-bin ground truth and
/// discards predictions that matched out-of-bin instances.
inline ProfileReport profile_errors(const DetectionSet& preds, const DetectionSet& gts,
                                    const std::map<std::string, double>& durations,
                                    const ProfileBins& bins = {}, double threshold = 0.5) {
  ProfileReport report;
  report.threshold = threshold;

  std::map<std::string, std::vector<std::size_t>> gt_slot;  // (video, index) -> report index
  for (const auto& [vid, g] : gts) {
    const auto dit = durations.find(vid);
    require(dit != durations.end() && dit->second > 0.0, ErrorKind::kInvalidArgument,
            "profile_errors: missing or non-positive duration for video " + vid);
    auto& slots = gt_slot[vid];
    for (std::size_t j = 0; j < g.size(); ++j) {
      GtProfile p;
      p.video_id = vid;
      p.index = j;
      p.length = g[j].length();
      p.coverage = p.length / dit->second;
      p.instances = static_cast<std::size_t>(
          std::count_if(g.begin(), g.end(), [&](const auto& o) { return o.label == g[j].label; }));
      p.coverage_bin = find_bin(bins.coverage, p.coverage);
      p.length_bin = find_bin(bins.length, p.length);
      p.instances_bin = find_bin(bins.instances, static_cast<double>(p.instances));
      slots.push_back(report.ground_truth.size());
      report.ground_truth.push_back(p);
    }
  }
  report.num_ground_truth = report.ground_truth.size();

  const auto ranked = match_predictions(preds, gts, -1, threshold);
  for (const auto& r : ranked)
    if (r.true_positive) report.ground_truth[gt_slot[r.video_id][static_cast<std::size_t>(r.matched_gt)]].detected = true;

  // False-positive categories over the top-10G predictions. Matching of a
  // prefix of the ranking equals the prefix of the full matching.
  const std::size_t limit = std::min(ranked.size(), 10 * report.num_ground_truth);
  std::map<std::string, std::vector<bool>> matched;
  for (const auto& [vid, g] : gts) matched[vid].assign(g.size(), false);
  static const std::vector<ActionInstance> kNone;
  for (std::size_t i = 0; i < limit; ++i) {
    const auto& r = ranked[i];
    const auto git = gts.find(r.video_id);
    const auto& g = git == gts.end() ? kNone : git->second;
    PredictionProfile pp{r.video_id, r.det, FpCategory::kBackground};
    if (r.true_positive) {
      pp.category = FpCategory::kTruePositive;
      matched[r.video_id][static_cast<std::size_t>(r.matched_gt)] = true;
    } else {
      double same_matched = 0.0;
      for (std::size_t j = 0; j < g.size(); ++j)
        if (g[j].label == r.det.label && matched[r.video_id][j])
          same_matched = std::max(same_matched, tiou(r.det, g[j]));
      const double same = detail::max_tiou(r.det, g, true);
      const double other = detail::max_tiou(r.det, g, false);
      if (same_matched >= threshold) pp.category = FpCategory::kDoubleDetection;
      else if (other >= threshold) pp.category = FpCategory::kWrongLabel;
      else if (same >= 0.1) pp.category = FpCategory::kLocalization;
      else if (other >= 0.1) pp.category = FpCategory::kConfusion;
      else pp.category = FpCategory::kBackground;
    }
    ++report.fp_counts[static_cast<std::size_t>(pp.category)];
    report.top_predictions.push_back(pp);
  }

  // Per-characteristic FN rates and raw mAP.
  auto characteristic = [&](const std::string& name, const std::vector<Bin>& bin_list, int GtProfile::*field) {
    CharacteristicReport cr;
    cr.characteristic = name;
    for (std::size_t b = 0; b < bin_list.size(); ++b) {
      BinReport br;
      br.name = bin_list[b].name;
      DetectionSet bin_gts;
      std::map<std::string, std::vector<bool>> in_bin;
      for (const auto& [vid, g] : gts) {
        auto& flags = in_bin[vid];
        flags.assign(g.size(), false);
        auto& kept = bin_gts[vid];
        for (std::size_t j = 0; j < g.size(); ++j) {
          const auto& gp = report.ground_truth[gt_slot[vid][j]];
          if (gp.*field != static_cast<int>(b)) continue;
          flags[j] = true;
          kept.push_back(g[j]);
          ++br.count;
          if (!gp.detected) ++br.false_negatives;
        }
      }
      br.fn_rate = br.count == 0 ? 0.0 : static_cast<double>(br.false_negatives) / static_cast<double>(br.count);
      if (br.count > 0) {
        DetectionSet bin_preds;
        for (const auto& r : ranked) {
          if (r.true_positive && !in_bin[r.video_id][static_cast<std::size_t>(r.matched_gt)]) continue;
          bin_preds[r.video_id].push_back(r.det);
        }
        EvalConfig ec;
        ec.tiou_thresholds = {threshold};
        br.raw_map = map_at(bin_preds, bin_gts, ec).average_map;
      }
      cr.bins.push_back(br);
    }
    report.characteristics.push_back(std::move(cr));
  };
  characteristic("coverage", bins.coverage, &GtProfile::coverage_bin);
  characteristic("length", bins.length, &GtProfile::length_bin);
  characteristic("instances", bins.instances, &GtProfile::instances_bin);
  return report;
}

}  // namespace actionformer

#endif  // ACTIONFORMER_PROFILE_HPP
