// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ACTIONFORMER_CONFIG_HPP
#define ACTIONFORMER_CONFIG_HPP

#include <cmath>
#include <filesystem>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "actionformer/data.hpp"
#include "actionformer/eval.hpp"
#include "actionformer/model.hpp"
#include "actionformer/postprocess.hpp"
#include "actionformer/targets.hpp"
#include "actionformer/trainer.hpp"

// Run configuration file layout (every section and key optional):
//   {"model": {...}, "train": {...}, "loss": {...}, "postprocess": {...},
//    "eval": {"preset": "thumos" | "activitynet" | "epic", "tiou_thresholds": [...]},
//    "data": {"features_dir", "annotations", "train_subset", "test_subset",
//             "feature_stride_factor"}}
// Regression ranges are [[min, max], ...] with "inf" allowed as max; when
// absent they are derived from "num_levels" (or "num_pyramid_blocks") and
// "init_range".

namespace actionformer {

struct DataConfig {
  std::string features_dir;
  std::string annotations;
  std::string train_subset = "training";
  std::string test_subset = "testing";
  std::size_t feature_stride_factor = 1;  // extra temporal subsampling of the features
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  LossConfig loss;
  PostprocessConfig postprocess;
  EvalConfig eval;
  DataConfig data;
  double init_range = 4.0;

  LossConfig effective_loss() const { return train.loss_config(loss); }

  /// Field-level and cross-field checks; throws ErrorKind::kConfig.
  void validate() const {
    model.validate();
    train.validate();
    effective_loss().validate();
    postprocess.validate();
    eval.validate();
    require(train.max_seq_len <= model.max_seq_len, ErrorKind::kConfig,
            "config: train.max_seq_len must not exceed model.max_seq_len");
    require(data.feature_stride_factor >= 1, ErrorKind::kConfig, "config: data.feature_stride_factor must be >= 1");
    require(init_range > 0.0, ErrorKind::kConfig, "config: model.init_range must be > 0");
  }
};

namespace detail {

inline void reject_unknown_keys(const json& j, const std::set<std::string>& known, const std::string& section) {
  if (!j.is_object()) fail(ErrorKind::kConfig, "config: section \"" + section + "\" must be an object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) fail(ErrorKind::kConfig, "config: unknown key \"" + key + "\" in section \"" + section + "\"");
}

template <typename V>
void read_config_field(const json& j, const char* key, V& field, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<V>();
  } catch (const json::exception&) {
    fail(ErrorKind::kConfig, "config: bad value for \"" + section + "." + key + "\"");
  }
}

inline double parse_range_bound(const json& v) {
  if (v.is_string() && (v.get<std::string>() == "inf" || v.get<std::string>() == "Infinity"))
    return std::numeric_limits<double>::infinity();
  if (v.is_number()) return v.get<double>();
  fail(ErrorKind::kConfig, "config: regression range bounds must be numbers or \"inf\"");
}

inline json range_bound_json(double v) { return std::isinf(v) ? json("inf") : json(v); }

}  // namespace detail

inline RunConfig parse_run_config(const json& j, const std::string& base_dir = "") {
  RunConfig c;
  detail::reject_unknown_keys(j, {"model", "train", "loss", "postprocess", "eval", "data"}, "<root>");

  bool explicit_ranges = false;
  if (j.contains("model")) {
    const json& m = j["model"];
    detail::reject_unknown_keys(m,
                                {"input_dim", "embed_dim", "num_heads", "window_size", "num_stem_blocks",
                                 "num_pyramid_blocks", "num_levels", "head_kernel", "head_layers", "num_classes",
                                 "mlp_ratio", "regression_ranges", "init_range", "use_position_embedding",
                                 "max_seq_len", "scale_init", "prior_prob", "layer_norm_eps"},
                                "model");
    auto& mc = c.model;
    const std::string s = "model";
    detail::read_config_field(m, "input_dim", mc.input_dim, s);
    detail::read_config_field(m, "embed_dim", mc.embed_dim, s);
    detail::read_config_field(m, "num_heads", mc.num_heads, s);
    detail::read_config_field(m, "window_size", mc.window_size, s);
    detail::read_config_field(m, "num_stem_blocks", mc.num_stem_blocks, s);
    detail::read_config_field(m, "num_pyramid_blocks", mc.num_pyramid_blocks, s);
    if (m.contains("num_levels")) {
      std::size_t levels = 0;
      detail::read_config_field(m, "num_levels", levels, s);
      if (levels < 1) fail(ErrorKind::kConfig, "config: model.num_levels must be >= 1");
      mc.num_pyramid_blocks = levels - 1;
    }
    detail::read_config_field(m, "head_kernel", mc.head_kernel, s);
    detail::read_config_field(m, "head_layers", mc.head_layers, s);
    detail::read_config_field(m, "num_classes", mc.num_classes, s);
    detail::read_config_field(m, "mlp_ratio", mc.mlp_ratio, s);
    detail::read_config_field(m, "init_range", c.init_range, s);
    detail::read_config_field(m, "use_position_embedding", mc.use_position_embedding, s);
    detail::read_config_field(m, "max_seq_len", mc.max_seq_len, s);
    detail::read_config_field(m, "scale_init", mc.scale_init, s);
    detail::read_config_field(m, "prior_prob", mc.prior_prob, s);
    detail::read_config_field(m, "layer_norm_eps", mc.layer_norm_eps, s);
    if (m.contains("regression_ranges")) {
      const json& rr = m["regression_ranges"];
      if (!rr.is_array()) fail(ErrorKind::kConfig, "config: model.regression_ranges must be an array");
      mc.regression_ranges.clear();
      for (const auto& r : rr) {
        if (!r.is_array() || r.size() != 2)
          fail(ErrorKind::kConfig, "config: each regression range must be [min, max]");
        mc.regression_ranges.push_back({detail::parse_range_bound(r[0]), detail::parse_range_bound(r[1])});
      }
      explicit_ranges = true;
    }
  }
  if (!explicit_ranges) c.model.regression_ranges = make_regression_ranges(c.model.num_levels(), c.init_range);

  if (j.contains("train")) {
    const json& t = j["train"];
    detail::reject_unknown_keys(t,
                                {"epochs", "warmup_epochs", "base_lr", "weight_decay", "batch_size", "max_seq_len",
                                 "seed", "ema_decay", "clip_norm", "center_sampling", "lambda_reg"},
                                "train");
    auto& tc = c.train;
    const std::string s = "train";
    detail::read_config_field(t, "epochs", tc.epochs, s);
    detail::read_config_field(t, "warmup_epochs", tc.warmup_epochs, s);
    detail::read_config_field(t, "base_lr", tc.base_lr, s);
    detail::read_config_field(t, "weight_decay", tc.weight_decay, s);
    detail::read_config_field(t, "batch_size", tc.batch_size, s);
    detail::read_config_field(t, "max_seq_len", tc.max_seq_len, s);
    detail::read_config_field(t, "seed", tc.seed, s);
    detail::read_config_field(t, "ema_decay", tc.ema_decay, s);
    detail::read_config_field(t, "clip_norm", tc.clip_norm, s);
    detail::read_config_field(t, "center_sampling", tc.center_sampling, s);
    detail::read_config_field(t, "lambda_reg", tc.lambda_reg, s);
  }

  if (j.contains("loss")) {
    const json& l = j["loss"];
    detail::reject_unknown_keys(l, {"focal_alpha", "focal_gamma", "center_sampling_radius"}, "loss");
    detail::read_config_field(l, "focal_alpha", c.loss.focal_alpha, "loss");
    detail::read_config_field(l, "focal_gamma", c.loss.focal_gamma, "loss");
    detail::read_config_field(l, "center_sampling_radius", c.loss.center_sampling_radius, "loss");
  }

  if (j.contains("postprocess")) {
    const json& p = j["postprocess"];
    detail::reject_unknown_keys(p,
                                {"pre_nms_score_threshold", "pre_nms_topk", "soft_nms_sigma", "soft_nms_min_score",
                                 "max_detections_per_video", "fusion_topk", "class_agnostic_nms"},
                                "postprocess");
    auto& pc = c.postprocess;
    const std::string s = "postprocess";
    detail::read_config_field(p, "pre_nms_score_threshold", pc.pre_nms_score_threshold, s);
    detail::read_config_field(p, "pre_nms_topk", pc.pre_nms_topk, s);
    detail::read_config_field(p, "soft_nms_sigma", pc.soft_nms_sigma, s);
    detail::read_config_field(p, "soft_nms_min_score", pc.soft_nms_min_score, s);
    detail::read_config_field(p, "max_detections_per_video", pc.max_detections_per_video, s);
    detail::read_config_field(p, "fusion_topk", pc.fusion_topk, s);
    detail::read_config_field(p, "class_agnostic_nms", pc.class_agnostic_nms, s);
  }

  if (j.contains("eval")) {
    const json& e = j["eval"];
    detail::reject_unknown_keys(e, {"preset", "tiou_thresholds"}, "eval");
    if (e.contains("preset")) {
      std::string preset;
      detail::read_config_field(e, "preset", preset, "eval");
      if (preset == "thumos") c.eval = EvalConfig::thumos();
      else if (preset == "activitynet") c.eval = EvalConfig::activitynet();
      else if (preset == "epic") c.eval = EvalConfig::epic();
      else fail(ErrorKind::kConfig, "config: unknown eval preset \"" + preset + "\"");
    }
    detail::read_config_field(e, "tiou_thresholds", c.eval.tiou_thresholds, "eval");
  }

  if (j.contains("data")) {
    const json& d = j["data"];
    detail::reject_unknown_keys(d, {"features_dir", "annotations", "train_subset", "test_subset", "feature_stride_factor"},
                                "data");
    detail::read_config_field(d, "features_dir", c.data.features_dir, "data");
    detail::read_config_field(d, "annotations", c.data.annotations, "data");
    detail::read_config_field(d, "train_subset", c.data.train_subset, "data");
    detail::read_config_field(d, "test_subset", c.data.test_subset, "data");
    detail::read_config_field(d, "feature_stride_factor", c.data.feature_stride_factor, "data");
  }
  auto resolve = [&](std::string& path) {
    if (!path.empty() && !base_dir.empty() && std::filesystem::path(path).is_relative())
      path = (std::filesystem::path(base_dir) / path).lexically_normal().string();
  };
  resolve(c.data.features_dir);
  resolve(c.data.annotations);

  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path().string();
  return parse_run_config(parse_json_file(path), parent);
}

inline json run_config_json(const RunConfig& c) {
  json ranges = json::array();
  for (const auto& r : c.model.regression_ranges)
    ranges.push_back({detail::range_bound_json(r.min), detail::range_bound_json(r.max)});
  const auto& m = c.model;
  const auto& t = c.train;
  const auto& p = c.postprocess;
  return {
      {"model",
       {{"input_dim", m.input_dim}, {"embed_dim", m.embed_dim}, {"num_heads", m.num_heads},
        {"window_size", m.window_size}, {"num_stem_blocks", m.num_stem_blocks},
        {"num_pyramid_blocks", m.num_pyramid_blocks}, {"head_kernel", m.head_kernel}, {"head_layers", m.head_layers},
        {"num_classes", m.num_classes}, {"mlp_ratio", m.mlp_ratio}, {"regression_ranges", ranges},
        {"init_range", c.init_range}, {"use_position_embedding", m.use_position_embedding},
        {"max_seq_len", m.max_seq_len}, {"scale_init", m.scale_init}, {"prior_prob", m.prior_prob},
        {"layer_norm_eps", m.layer_norm_eps}}},
      {"train",
       {{"epochs", t.epochs}, {"warmup_epochs", t.warmup_epochs}, {"base_lr", t.base_lr},
        {"weight_decay", t.weight_decay}, {"batch_size", t.batch_size}, {"max_seq_len", t.max_seq_len},
        {"seed", t.seed}, {"ema_decay", t.ema_decay}, {"clip_norm", t.clip_norm},
        {"center_sampling", t.center_sampling}, {"lambda_reg", t.lambda_reg}}},
      {"loss",
       {{"focal_alpha", c.loss.focal_alpha}, {"focal_gamma", c.loss.focal_gamma},
        {"center_sampling_radius", c.loss.center_sampling_radius}}},
      {"postprocess",
       {{"pre_nms_score_threshold", p.pre_nms_score_threshold}, {"pre_nms_topk", p.pre_nms_topk},
        {"soft_nms_sigma", p.soft_nms_sigma}, {"soft_nms_min_score", p.soft_nms_min_score},
        {"max_detections_per_video", p.max_detections_per_video}, {"fusion_topk", p.fusion_topk},
        {"class_agnostic_nms", p.class_agnostic_nms}}},
      {"eval", {{"tiou_thresholds", c.eval.tiou_thresholds}}},
      {"data",
       {{"features_dir", c.data.features_dir}, {"annotations", c.data.annotations},
        {"train_subset", c.data.train_subset}, {"test_subset", c.data.test_subset},
        {"feature_stride_factor", c.data.feature_stride_factor}}}};
}

/// Features of `cfg.data.features_dir`, subsampled by the configured factor.
inline std::vector<FeatureSequence> load_config_features(const RunConfig& cfg) {
  require(!cfg.data.features_dir.empty(), ErrorKind::kConfig, "config: data.features_dir is not set");
  auto seqs = load_feature_dir(cfg.data.features_dir);
  if (cfg.data.feature_stride_factor > 1)
    for (auto& s : seqs) s = stride_downsample(s, cfg.data.feature_stride_factor);
  return seqs;
}

}  // namespace actionformer

#endif  // ACTIONFORMER_CONFIG_HPP
