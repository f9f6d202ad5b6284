// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

// Slow, direct reference implementations used to cross-check the library.
// They share no code with the library beyond the plain data types.

#ifndef ACTIONFORMER_TESTS_ORACLES_HPP
#define ACTIONFORMER_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "actionformer/types.hpp"

namespace oracle {

using actionformer::ActionInstance;
using actionformer::DetectionSet;

inline double interval_iou(const ActionInstance& a, const ActionInstance& b) {
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = (a.end - a.start) + (b.end - b.start) - inter;
  return uni <= 0.0 ? 0.0 : inter / uni;
}

// Gaussian Soft-NMS over all classes at once: every round picks the globally
// best live detection and decays live detections sharing its class.
inline std::vector<ActionInstance> soft_nms(std::vector<ActionInstance> dets, double sigma, double min_score,
                                            std::size_t max_out, bool class_agnostic) {
  auto key = [](const ActionInstance& d) { return std::make_tuple(-d.score, d.start, d.end, d.label); };
  std::vector<bool> alive(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) alive[i] = dets[i].score >= min_score;
  std::vector<ActionInstance> kept;
  while (true) {
    int best = -1;
    for (std::size_t i = 0; i < dets.size(); ++i)
      if (alive[i] && (best < 0 || key(dets[i]) < key(dets[static_cast<std::size_t>(best)])))
        best = static_cast<int>(i);
    if (best < 0) break;
    const ActionInstance b = dets[static_cast<std::size_t>(best)];
    alive[static_cast<std::size_t>(best)] = false;
    kept.push_back(b);
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (!alive[i] || (!class_agnostic && dets[i].label != b.label)) continue;
      const double iou = oracle::interval_iou(b, dets[i]);
      if (iou > 0.0) dets[i].score *= std::exp(-(iou * iou) / sigma);
      if (dets[i].score < min_score) alive[i] = false;
    }
  }
  std::sort(kept.begin(), kept.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
  if (kept.size() > max_out) kept.resize(max_out);
  return kept;
}

// Average precision of one class: sum over true positives k of
// (R_k - R_{k-1}) * max_{j >= k} P_j, with greedy best-tIoU matching.
inline double average_precision(const DetectionSet& preds, const DetectionSet& gts, int label, double thr) {
  struct Entry {
    std::string vid;
    std::size_t order;
    ActionInstance d;
  };
  std::vector<Entry> list;
  std::size_t n = 0;
  for (const auto& [vid, ds] : preds)
    for (const auto& d : ds) {
      if (d.label == label) list.push_back({vid, n, d});
      ++n;
    }
  std::sort(list.begin(), list.end(), [](const Entry& a, const Entry& b) {
    return std::make_tuple(-a.d.score, a.d.start, a.d.label, a.vid, a.order) <
           std::make_tuple(-b.d.score, b.d.start, b.d.label, b.vid, b.order);
  });
  double npos = 0.0;
  std::map<std::string, std::vector<bool>> taken;
  for (const auto& [vid, g] : gts) {
    taken[vid].assign(g.size(), false);
    for (const auto& a : g)
      if (a.label == label) npos += 1.0;
  }
  if (npos == 0.0) return 0.0;
  std::vector<bool> tp(list.size(), false);
  for (std::size_t i = 0; i < list.size(); ++i) {
    auto it = gts.find(list[i].vid);
    if (it == gts.end()) continue;
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t j = 0; j < it->second.size(); ++j) {
      const auto& g = it->second[j];
      if (g.label != label || taken[list[i].vid][j]) continue;
      const double iou = oracle::interval_iou(list[i].d, g);
      if (iou < thr) continue;
      if (best < 0 || iou > best_iou) {
        best = static_cast<int>(j);
        best_iou = iou;
      }
    }
    if (best >= 0) {
      taken[list[i].vid][static_cast<std::size_t>(best)] = true;
      tp[i] = true;
    }
  }
  std::vector<double> precision(list.size()), recall(list.size());
  double hits = 0.0;
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (tp[i]) hits += 1.0;
    precision[i] = hits / static_cast<double>(i + 1);
    recall[i] = hits / npos;
  }
  double ap = 0.0, prev = 0.0;
  for (std::size_t k = 0; k < list.size(); ++k) {
    if (!tp[k]) continue;
    double env = 0.0;
    for (std::size_t j = k; j < list.size(); ++j) env = std::max(env, precision[j]);
    ap += (recall[k] - prev) * env;
    prev = recall[k];
  }
  return ap;
}

// Mean over classes present in the ground truth, then over thresholds.
inline std::pair<std::vector<double>, double> map_at(const DetectionSet& preds, const DetectionSet& gts,
                                                     const std::vector<double>& thresholds) {
  std::vector<int> labels;
  for (const auto& [vid, g] : gts)
    for (const auto& a : g)
      if (std::find(labels.begin(), labels.end(), a.label) == labels.end()) labels.push_back(a.label);
  std::sort(labels.begin(), labels.end());
  std::vector<double> maps;
  for (double t : thresholds) {
    double s = 0.0;
    for (int c : labels) s += oracle::average_precision(preds, gts, c, t);
    maps.push_back(labels.empty() ? 0.0 : s / static_cast<double>(labels.size()));
  }
  double avg = 0.0;
  for (double m : maps) avg += m;
  return {maps, avg / static_cast<double>(maps.size())};
}

// Random small detection problem on a coarse grid, so ties in scores and
// boundaries occur often.
struct Instance {
  DetectionSet preds;
  DetectionSet gts;
};

inline Instance random_instance(std::mt19937_64& rng, std::size_t max_preds = 10, std::size_t max_gt = 5,
                                int classes = 3, int videos = 2) {
  std::uniform_int_distribution<std::size_t> npred(0, max_preds), ngt(1, max_gt);
  std::uniform_int_distribution<int> pos(0, 20), len(1, 8), lab(0, classes - 1), vid(0, videos - 1);
  std::uniform_int_distribution<int> score(1, 10);
  Instance inst;
  const std::size_t np = npred(rng), ng = ngt(rng);
  for (std::size_t i = 0; i < ng; ++i) {
    const double s = pos(rng);
    inst.gts["v" + std::to_string(vid(rng))].push_back({s, s + len(rng), lab(rng), 1.0});
  }
  for (std::size_t i = 0; i < np; ++i) {
    const double s = pos(rng);
    inst.preds["v" + std::to_string(vid(rng))].push_back({s, s + len(rng), lab(rng), score(rng) / 10.0});
  }
  return inst;
}

}  // namespace oracle

#endif  // ACTIONFORMER_TESTS_ORACLES_HPP
