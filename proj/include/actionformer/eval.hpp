// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ACTIONFORMER_EVAL_HPP
#define ACTIONFORMER_EVAL_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "actionformer/error.hpp"
#include "actionformer/types.hpp"

namespace actionformer {

/// Temporal IoU (1D Jaccard index) of two segments.
inline double tiou(const ActionInstance& a, const ActionInstance& b) {
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = (a.end - a.start) + (b.end - b.start) - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

struct EvalConfig {
  std::vector<double> tiou_thresholds = {0.3, 0.4, 0.5, 0.6, 0.7};

  static EvalConfig thumos() { return {{0.3, 0.4, 0.5, 0.6, 0.7}}; }
  static EvalConfig activitynet() {
    return {{0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95}};
  }
  static EvalConfig epic() { return {{0.1, 0.2, 0.3, 0.4, 0.5}}; }

  void validate() const {
    require(!tiou_thresholds.empty(), ErrorKind::kConfig, "eval config: no tIoU thresholds");
    for (std::size_t i = 0; i < tiou_thresholds.size(); ++i) {
      const double t = tiou_thresholds[i];
      require(t > 0.0 && t <= 1.0, ErrorKind::kConfig, "eval config: thresholds must lie in (0, 1]");
      if (i > 0)
        require(t > tiou_thresholds[i - 1], ErrorKind::kConfig,
                "eval config: thresholds must be strictly increasing");
    }
  }
};

/// A prediction tagged with its video, as ranked by the evaluator.
struct RankedPrediction {
  std::string video_id;
  ActionInstance det;
  bool true_positive = false;
  int matched_gt = -1;  // index into the video's ground truth list
};

/// Score descending, then earlier start, then lower label, then video id.
inline bool prediction_rank_less(const RankedPrediction& a, const RankedPrediction& b) {
  if (a.det.score != b.det.score) return a.det.score > b.det.score;
  if (a.det.start != b.det.start) return a.det.start < b.det.start;
  if (a.det.label != b.det.label) return a.det.label < b.det.label;
  return a.video_id < b.video_id;
}

/// Greedy matching of predictions to ground truth at one tIoU threshold.
///
/// Predictions are visited in rank order; each one claims the unmatched
/// ground-truth segment of the same label in the same video with the highest
/// tIoU, provided that tIoU >= threshold. When `label` is negative every label
/// is considered (each prediction still only matches its own label).
inline std::vector<RankedPrediction> match_predictions(const DetectionSet& preds, const DetectionSet& gts,
                                                       int label, double threshold) {
  std::vector<RankedPrediction> ranked;
  for (const auto& [vid, dets] : preds)
    for (const auto& d : dets)
      if (label < 0 || d.label == label) ranked.push_back({vid, d});
  std::stable_sort(ranked.begin(), ranked.end(), prediction_rank_less);

  std::map<std::string, std::vector<bool>> used;
  for (const auto& [vid, g] : gts) used[vid].assign(g.size(), false);
  for (auto& r : ranked) {
    const auto it = gts.find(r.video_id);
    if (it == gts.end()) continue;
    const auto& g = it->second;
    auto& flags = used[r.video_id];
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (flags[j] || g[j].label != r.det.label) continue;
      const double iou = tiou(r.det, g[j]);
      if (iou >= threshold && iou > best_iou) {
        best = static_cast<int>(j);
        best_iou = iou;
      }
    }
    if (best >= 0) {
      flags[static_cast<std::size_t>(best)] = true;
      r.true_positive = true;
      r.matched_gt = best;
    }
  }
  return ranked;
}

inline std::size_t count_ground_truth(const DetectionSet& gts, int label) {
  std::size_t n = 0;
  for (const auto& [vid, g] : gts)
    for (const auto& a : g)
      if (a.label == label) ++n;
  return n;
}

struct PrPoint {
  double precision = 0.0;
  double recall = 0.0;
  bool true_positive = false;
};

/// Precision/recall after each ranked prediction of one class.
inline std::vector<PrPoint> precision_recall(const DetectionSet& preds, const DetectionSet& gts, int label,
                                             double threshold) {
  const auto ranked = match_predictions(preds, gts, label, threshold);
  const double npos = static_cast<double>(count_ground_truth(gts, label));
  std::vector<PrPoint> out;
  double tp = 0.0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (ranked[i].true_positive) tp += 1.0;
    out.push_back({tp / static_cast<double>(i + 1), npos > 0.0 ? tp / npos : 0.0, ranked[i].true_positive});
  }
  return out;
}

/// Average precision of one class with the monotone precision envelope
/// (all-point interpolation): sum over recall steps of envelope * delta recall.
/// Returns 0 when the class has no ground truth.
inline double average_precision(const DetectionSet& preds, const DetectionSet& gts, int label,
                                double threshold) {
  if (count_ground_truth(gts, label) == 0) return 0.0;
  auto pr = precision_recall(preds, gts, label, threshold);
  std::vector<double> envelope(pr.size());
  double running = 0.0;
  for (std::size_t i = pr.size(); i-- > 0;) {
    running = std::max(running, pr[i].precision);
    envelope[i] = running;
  }
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < pr.size(); ++i) {
    if (!pr[i].true_positive) continue;
    ap += (pr[i].recall - prev_recall) * envelope[i];
    prev_recall = pr[i].recall;
  }
  return ap;
}

/// Labels that have at least one ground-truth instance, ascending.
inline std::vector<int> ground_truth_labels(const DetectionSet& gts) {
  std::set<int> labels;
  for (const auto& [vid, g] : gts)
    for (const auto& a : g) labels.insert(a.label);
  return {labels.begin(), labels.end()};
}

struct MapReport {
  std::vector<double> thresholds;
  std::vector<int> classes;
  std::vector<std::vector<double>> per_class_ap;  // [threshold][class]
  std::vector<double> map;                        // per threshold
  double average_map = 0.0;
};

/// mAP at every threshold (mean over classes with ground truth) and its
/// average over thresholds.
inline MapReport map_at(const DetectionSet& preds, const DetectionSet& gts, const EvalConfig& cfg) {
  cfg.validate();
  MapReport report;
  report.thresholds = cfg.tiou_thresholds;
  report.classes = ground_truth_labels(gts);
  for (double thr : cfg.tiou_thresholds) {
    std::vector<double> aps;
    for (int c : report.classes) aps.push_back(average_precision(preds, gts, c, thr));
    const double m = aps.empty() ? 0.0 : std::accumulate(aps.begin(), aps.end(), 0.0) / static_cast<double>(aps.size());
    report.per_class_ap.push_back(std::move(aps));
    report.map.push_back(m);
  }
  report.average_map = std::accumulate(report.map.begin(), report.map.end(), 0.0) /
                       static_cast<double>(report.map.size());
  return report;
}

}  // namespace actionformer

#endif  // ACTIONFORMER_EVAL_HPP
