// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ACTIONFORMER_POSTPROCESS_HPP
#define ACTIONFORMER_POSTPROCESS_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <vector>

#include "actionformer/error.hpp"
#include "actionformer/eval.hpp"
#include "actionformer/model.hpp"
#include "actionformer/types.hpp"

namespace actionformer {

struct PostprocessConfig {
  double pre_nms_score_threshold = 0.001;
  std::size_t pre_nms_topk = 2000;  // per level
  double soft_nms_sigma = 0.5;
  double soft_nms_min_score = 0.001;
  std::size_t max_detections_per_video = 200;
  std::size_t fusion_topk = 2;
  bool class_agnostic_nms = false;

  void validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    require(unit(pre_nms_score_threshold), ErrorKind::kConfig,
            "postprocess config: pre_nms_score_threshold must be in [0, 1]");
    require(unit(soft_nms_min_score), ErrorKind::kConfig,
            "postprocess config: soft_nms_min_score must be in [0, 1]");
    require(soft_nms_sigma > 0.0, ErrorKind::kConfig, "postprocess config: soft_nms_sigma must be > 0");
    require(pre_nms_topk >= 1 && max_detections_per_video >= 1 && fusion_topk >= 1, ErrorKind::kConfig,
            "postprocess config: top-k values must be >= 1");
  }
};

/// Plain (non-differentiable) head outputs of one pyramid level.
struct LevelPrediction {
  std::size_t stride = 1;
  std::size_t num_classes = 0;
  std::vector<double> logits;  // [T_l * C]
  std::vector<double> reg;     // [T_l * 2], stride-normalized
  Mask valid;                  // empty = all valid

  std::size_t length() const { return reg.size() / 2; }
};

template <typename T>
std::vector<LevelPrediction> to_level_predictions(const ModelOutput<T>& out) {
  std::vector<LevelPrediction> levels;
  for (const auto& lo : out.levels) {
    LevelPrediction lp;
    lp.stride = lo.stride;
    lp.num_classes = lo.cls_logits.dim(1);
    lp.logits.assign(lo.cls_logits.data().begin(), lo.cls_logits.data().end());
    lp.reg.assign(lo.reg.data().begin(), lo.reg.data().end());
    lp.valid = lo.mask;
    levels.push_back(std::move(lp));
  }
  return levels;
}

/// Score descending, then start, end and label ascending. A strict order on
/// distinct detections, used for every ranking in this module.
inline bool detection_order(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.start != b.start) return a.start < b.start;
  if (a.end != b.end) return a.end < b.end;
  return a.label < b.label;
}

/// Turns per-moment outputs into candidate detections in grid units.
///
/// Moment i of a level with stride s sits at p = i * s and yields
/// [p - d_s * s, p + d_e * s] for every class whose sigmoid score exceeds the
/// threshold. Segments are clipped to [0, seq_len]; empty ones are dropped.
/// At most `pre_nms_topk` candidates per level are kept.
inline std::vector<Detection> decode(std::span<const LevelPrediction> levels, double seq_len,
                                     const PostprocessConfig& cfg) {
  std::vector<Detection> out;
  for (const auto& lp : levels) {
    require(lp.logits.size() == lp.length() * lp.num_classes, ErrorKind::kShapeMismatch,
            "decode: logits do not match regression outputs");
    std::vector<Detection> level_dets;
    const double stride = static_cast<double>(lp.stride);
    for (std::size_t i = 0; i < lp.length(); ++i) {
      if (!lp.valid.empty() && !lp.valid[i]) continue;
      const double p = static_cast<double>(i) * stride;
      const double start = std::max(0.0, p - lp.reg[i * 2] * stride);
      const double end = std::min(seq_len, p + lp.reg[i * 2 + 1] * stride);
      if (!(end > start)) continue;
      for (std::size_t c = 0; c < lp.num_classes; ++c) {
        const double score = sigmoid_scalar(lp.logits[i * lp.num_classes + c]);
        if (score > cfg.pre_nms_score_threshold)
          level_dets.push_back({start, end, static_cast<int>(c), score});
      }
    }
    if (level_dets.size() > cfg.pre_nms_topk) {
      std::partial_sort(level_dets.begin(), level_dets.begin() + static_cast<std::ptrdiff_t>(cfg.pre_nms_topk),
                        level_dets.end(), detection_order);
      level_dets.resize(cfg.pre_nms_topk);
    }
    out.insert(out.end(), level_dets.begin(), level_dets.end());
  }
  return out;
}

/// Gaussian Soft-NMS. Repeatedly takes the best remaining detection and
/// multiplies the score of every remaining detection of the same class (any
/// class when `class_agnostic_nms`) by exp(-tIoU^2 / sigma). Detections below
/// `soft_nms_min_score` are dropped. Output is sorted by detection_order and
/// truncated to `max_detections_per_video`.
inline std::vector<Detection> soft_nms(std::vector<Detection> dets, const PostprocessConfig& cfg) {
  std::map<int, std::vector<Detection>> groups;
  for (const auto& d : dets)
    if (d.score >= cfg.soft_nms_min_score) groups[cfg.class_agnostic_nms ? 0 : d.label].push_back(d);

  std::vector<Detection> kept;
  for (auto& [key, pool] : groups) {
    while (!pool.empty()) {
      auto best_it = std::min_element(pool.begin(), pool.end(), detection_order);
      const Detection best = *best_it;
      pool.erase(best_it);
      kept.push_back(best);
      std::vector<Detection> next;
      next.reserve(pool.size());
      for (auto d : pool) {
        const double iou = tiou(best, d);
        if (iou > 0.0) d.score *= std::exp(-(iou * iou) / cfg.soft_nms_sigma);
        if (d.score >= cfg.soft_nms_min_score) next.push_back(d);
      }
      pool = std::move(next);
    }
  }
  std::sort(kept.begin(), kept.end(), detection_order);
  if (kept.size() > cfg.max_detections_per_video) kept.resize(cfg.max_detections_per_video);
  return kept;
}

/// Replaces each detection by `topk` copies labeled with the highest-scoring
/// external classes (ties: lower class id), scores multiplied accordingly.
inline std::vector<Detection> fuse_scores(const std::vector<Detection>& dets,
                                          const std::vector<double>& video_scores, std::size_t topk) {
  require(topk >= 1 && topk <= video_scores.size(), ErrorKind::kInvalidArgument,
          "fuse_scores: topk must be in [1, number of external classes]");
  std::vector<int> order(video_scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return video_scores[static_cast<std::size_t>(a)] > video_scores[static_cast<std::size_t>(b)]; });
  std::vector<Detection> out;
  out.reserve(dets.size() * topk);
  for (const auto& d : dets) {
    for (std::size_t k = 0; k < topk; ++k) {
      Detection f = d;
      f.label = order[k];
      f.score = d.score * video_scores[static_cast<std::size_t>(order[k])];
      out.push_back(f);
    }
  }
  return out;
}

/// decode followed by soft_nms.
inline std::vector<Detection> postprocess(std::span<const LevelPrediction> levels, double seq_len,
                                          const PostprocessConfig& cfg) {
  return soft_nms(decode(levels, seq_len, cfg), cfg);
}

}  // namespace actionformer

#endif  // ACTIONFORMER_POSTPROCESS_HPP
