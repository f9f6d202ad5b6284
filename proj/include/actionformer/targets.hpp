// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ACTIONFORMER_TARGETS_HPP
#define ACTIONFORMER_TARGETS_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "actionformer/model.hpp"
#include "actionformer/types.hpp"

namespace actionformer {

struct LossConfig {
  double lambda_reg = 1.0;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double center_sampling_radius = 1.5;
  bool center_sampling = true;

  void validate() const {
    require(lambda_reg > 0.0, ErrorKind::kConfig, "loss config: lambda_reg must be > 0");
    require(center_sampling_radius > 0.0, ErrorKind::kConfig,
            "loss config: center_sampling_radius must be > 0");
    require(focal_gamma >= 0.0, ErrorKind::kConfig, "loss config: focal_gamma must be >= 0");
    require(focal_alpha >= 0.0 && focal_alpha <= 1.0, ErrorKind::kConfig,
            "loss config: focal_alpha must be in [0, 1]");
  }
};

/// Shape of one pyramid level. Moment i sits at grid position i * stride.
struct LevelGeometry {
  std::size_t length = 0;
  std::size_t stride = 1;
  RegressionRange range;
  Mask valid;  // empty = all valid
};

/// Level geometry for an input of `len` steps with optional validity mask.
inline std::vector<LevelGeometry> pyramid_geometry(std::size_t len, const ModelConfig& cfg,
                                                   const Mask& valid = {}) {
  std::vector<LevelGeometry> out;
  const auto lengths = pyramid_lengths(len, cfg.num_levels());
  Mask m = valid;
  for (std::size_t l = 0; l < lengths.size(); ++l) {
    if (l > 0 && !m.empty()) m = downsample_mask(m, 2);
    out.push_back({lengths[l], level_stride(l), cfg.regression_ranges[l], m});
  }
  return out;
}

struct LevelTargets {
  Mask positive;                 // [T_l]
  std::vector<double> cls;       // [T_l * C], multi-hot
  std::vector<double> reg;       // [T_l * 2], stride-normalized (onset, offset); 0 at negatives
  std::vector<int> source;       // index of the action providing reg targets, -1 if negative
};

struct MomentTargets {
  std::vector<LevelTargets> levels;
  std::size_t num_classes = 0;
  std::size_t num_positive = 0;
};

/// Labels every moment of every level against ground-truth actions given in
/// grid units.
///
/// Moment p = i * stride is positive for action (s, e) when s < p < e, when
/// (with center sampling) |p - c| < radius * stride with c the action center,
/// and when max(p - s, e - p) falls in the level's regression range. Class
/// targets are multi-hot over every qualifying action; regression targets
/// come from the shortest qualifying action (earliest index on ties).
inline MomentTargets assign_targets(std::span<const ActionInstance> gt,
                                    std::span<const LevelGeometry> geometry,
                                    std::size_t num_classes, const LossConfig& cfg) {
  for (const auto& a : gt) {
    require(a.start < a.end, ErrorKind::kInvalidArgument,
            "action with start >= end: [" + std::to_string(a.start) + ", " + std::to_string(a.end) + "]");
    require(a.label >= 0 && static_cast<std::size_t>(a.label) < num_classes, ErrorKind::kInvalidArgument,
            "action label out of range: " + std::to_string(a.label));
  }
  MomentTargets out;
  out.num_classes = num_classes;
  for (const auto& geo : geometry) {
    LevelTargets lt;
    lt.positive.assign(geo.length, 0);
    lt.cls.assign(geo.length * num_classes, 0.0);
    lt.reg.assign(geo.length * 2, 0.0);
    lt.source.assign(geo.length, -1);
    const double stride = static_cast<double>(geo.stride);
    for (std::size_t i = 0; i < geo.length; ++i) {
      if (!geo.valid.empty() && !geo.valid[i]) continue;
      const double p = static_cast<double>(i) * stride;
      int best = -1;
      double best_len = 0.0;
      for (std::size_t a = 0; a < gt.size(); ++a) {
        const auto& act = gt[a];
        if (!(act.start < p && p < act.end)) continue;
        if (cfg.center_sampling) {
          const double c = act.center();
          const double r = cfg.center_sampling_radius * stride;
          if (!(c - r < p && p < c + r)) continue;
        }
        const double reach = std::max(p - act.start, act.end - p);
        if (!geo.range.contains(reach)) continue;
        lt.cls[i * num_classes + static_cast<std::size_t>(act.label)] = 1.0;
        if (best < 0 || act.length() < best_len) {
          best = static_cast<int>(a);
          best_len = act.length();
        }
      }
      if (best >= 0) {
        const auto& act = gt[static_cast<std::size_t>(best)];
        lt.positive[i] = 1;
        lt.source[i] = best;
        lt.reg[i * 2] = (p - act.start) / stride;
        lt.reg[i * 2 + 1] = (act.end - p) / stride;
        ++out.num_positive;
      }
    }
    out.levels.push_back(std::move(lt));
  }
  return out;
}

}  // namespace actionformer

#endif  // ACTIONFORMER_TARGETS_HPP
