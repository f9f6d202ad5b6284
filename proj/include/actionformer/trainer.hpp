// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ACTIONFORMER_TRAINER_HPP
#define ACTIONFORMER_TRAINER_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "actionformer/checkpoint.hpp"
#include "actionformer/data.hpp"
#include "actionformer/eval.hpp"
#include "actionformer/loss.hpp"
#include "actionformer/model.hpp"
#include "actionformer/optim.hpp"
#include "actionformer/postprocess.hpp"
#include "actionformer/targets.hpp"

namespace actionformer {

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t warmup_epochs = 5;
  double base_lr = 1e-4;
  double weight_decay = 1e-4;
  std::size_t batch_size = 2;
  std::size_t max_seq_len = 2304;  // training window length
  std::uint64_t seed = 0;
  double ema_decay = 0.999;
  double clip_norm = 1.0;
  bool center_sampling = true;
  double lambda_reg = 1.0;

  void validate() const {
    auto check = [](bool ok, const std::string& msg) {
      if (!ok) fail(ErrorKind::kConfig, "train config: " + msg);
    };
    check(epochs >= 1, "epochs must be >= 1");
    check(warmup_epochs < epochs, "warmup_epochs must be < epochs");
    check(base_lr > 0.0, "base_lr must be > 0");
    check(weight_decay >= 0.0, "weight_decay must be >= 0");
    check(batch_size >= 1, "batch_size must be >= 1");
    check(max_seq_len >= 1, "max_seq_len must be >= 1");
    check(ema_decay >= 0.0 && ema_decay <= 1.0, "ema_decay must be in [0, 1]");
    check(clip_norm > 0.0, "clip_norm must be > 0");
    check(lambda_reg > 0.0, "lambda_reg must be > 0");
  }

  /// The loss settings owned by the training config applied onto `base`.
  LossConfig loss_config(LossConfig base) const {
    base.center_sampling = center_sampling;
    base.lambda_reg = lambda_reg;
    return base;
  }
};

struct StepLog {
  std::size_t step = 0;  // 1-based
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss_total = 0.0;
  double loss_cls = 0.0;
  double loss_reg = 0.0;
  double grad_norm = 0.0;
};

inline json step_log_json(const StepLog& s) {
  return {{"step", s.step}, {"epoch", s.epoch},        {"lr", s.lr},
          {"loss_total", s.loss_total}, {"loss_cls", s.loss_cls}, {"loss_reg", s.loss_reg},
          {"grad_norm", s.grad_norm}};
}

/// Trained weights: raw parameters plus their EMA.
template <typename T>
struct TrainResult {
  ActionFormer<T> model;
  std::vector<std::vector<T>> ema;
  std::vector<StepLog> history;

  /// Checkpoint entries: raw tensors under their names, EMA under "ema.<name>".
  std::vector<CheckpointEntry> checkpoint() const {
    auto entries = model.state();
    const auto& items = model.parameters().items();
    for (std::size_t i = 0; i < items.size(); ++i)
      entries.push_back(make_checkpoint_entry<T>("ema." + items[i].name, items[i].tensor.shape(),
                                                 std::span<const T>(ema[i])));
    return entries;
  }
};

/// Seed streams derived from the run seed.
enum SeedStream : std::uint64_t { kInitStream = 2, kShuffleStream = 3, kWindowStream = 4 };

/// Trains from scratch on `videos` (grid-unit actions).
///
/// Each epoch shuffles the videos, forms mini-batches, samples one training
/// window per video, and takes one clipped AdamW step on the mean window
/// loss followed by an EMA update. Randomness depends only on the seed.
template <typename T = float>
TrainResult<T> train(const std::vector<Video>& videos, const ModelConfig& model_cfg, const TrainConfig& cfg,
                     const LossConfig& base_loss = {},
                     const std::function<void(const StepLog&)>& on_step = {}) {
  cfg.validate();
  model_cfg.validate();
  const LossConfig loss_cfg = cfg.loss_config(base_loss);
  loss_cfg.validate();
  require(!videos.empty(), ErrorKind::kInvalidArgument, "train: empty training set");
  require(cfg.max_seq_len <= model_cfg.max_seq_len, ErrorKind::kConfig,
          "train config: max_seq_len exceeds the model's max_seq_len");
  for (const auto& v : videos)
    require(v.seq.dim == model_cfg.input_dim, ErrorKind::kConfig,
            "video " + v.seq.video_id + " has feature dim " + std::to_string(v.seq.dim) + ", model expects " +
                std::to_string(model_cfg.input_dim));

  TrainResult<T> result{ActionFormer<T>(model_cfg, derive_seed(cfg.seed, kInitStream, 0)), {}, {}};
  auto& model = result.model;
  auto params = model.parameters().tensors();
  const std::size_t n = videos.size();
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  LrSchedule schedule{cfg.base_lr, static_cast<std::int64_t>(cfg.warmup_epochs * steps_per_epoch),
                      static_cast<std::int64_t>(cfg.epochs * steps_per_epoch)};
  AdamOptions adam;
  adam.weight_decay = cfg.weight_decay;
  AdamW<T> optimizer(params, model.parameters().decay_flags(), schedule, adam);
  Ema<T> ema(params, cfg.ema_decay);

  std::vector<std::size_t> order(n);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, kShuffleStream, epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      const std::size_t first = b * cfg.batch_size;
      const std::size_t last = std::min(n, first + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(last - first);
      model.parameters().zero_grad();
      StepLog log;
      log.step = ++step;
      log.epoch = epoch;
      for (std::size_t k = first; k < last; ++k) {
        const std::size_t idx = order[k];
        const Video& video = videos[idx];
        std::mt19937_64 rng(derive_seed(cfg.seed, kWindowStream, epoch * n + idx));
        const auto window = sample_window(video.seq, video.actions, cfg.max_seq_len, rng);
        Tensor<T> x(Shape{window.length, window.dim},
                    std::vector<T>(window.features.begin(), window.features.end()));
        const auto out = model.forward(x, window.mask, /*training=*/true);
        const auto geometry = pyramid_geometry(window.length, model_cfg, window.mask);
        const auto targets = assign_targets(window.actions, geometry, model_cfg.num_classes, loss_cfg);
        LossBreakdown<T> loss;
        try {
          loss = total_loss(out, targets, loss_cfg);
        } catch (const Error& e) {
          fail(e.kind(), "step " + std::to_string(log.step) + " (epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(b) + ", video " + video.seq.video_id + "): " + e.what());
        }
        backward(scale(loss.total, static_cast<T>(inv_batch)));
        log.loss_total += static_cast<double>(loss.total.item()) * inv_batch;
        log.loss_cls += loss.cls * inv_batch;
        log.loss_reg += loss.reg * inv_batch;
      }
      log.lr = optimizer.current_lr();
      log.grad_norm = clip_grad_norm(params, cfg.clip_norm);
      optimizer.step();
      ema.update(params);
      result.history.push_back(log);
      if (on_step) on_step(log);
    }
  }
  result.ema = ema.shadow();
  return result;
}

/// Detections for one full-length sequence, in grid units.
template <typename T>
std::vector<Detection> predict_video(const ActionFormer<T>& model, const FeatureSequence& seq,
                                     const PostprocessConfig& cfg) {
  NoGradGuard no_grad;
  Tensor<T> x(Shape{seq.length, seq.dim}, std::vector<T>(seq.features.begin(), seq.features.end()));
  const auto out = model.forward(x);
  const auto levels = to_level_predictions(out);
  return postprocess(levels, static_cast<double>(seq.length), cfg);
}

/// Detections in seconds for every sequence, keyed by video id. Videos are
/// distributed over up to `threads` workers; the result does not depend on
/// the thread count.
template <typename T>
DetectionSet predict(const ActionFormer<T>& model, const std::vector<FeatureSequence>& seqs,
                     const PostprocessConfig& cfg, std::size_t threads = 1) {
  cfg.validate();
  std::vector<std::vector<Detection>> results(seqs.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::string> errors(seqs.size());
  auto worker = [&] {
    for (std::size_t i = next++; i < seqs.size(); i = next++) {
      try {
        auto dets = predict_video(model, seqs[i], cfg);
        for (auto& d : dets) d = grid_segment_to_seconds(d, seqs[i].fps, seqs[i].feature_stride);
        results[i] = std::move(dets);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, seqs.size()));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < seqs.size(); ++i)
    if (!errors[i].empty()) fail(ErrorKind::kInvalidArgument, "prediction failed for " + seqs[i].video_id + ": " + errors[i]);
  DetectionSet out;
  for (std::size_t i = 0; i < seqs.size(); ++i) out[seqs[i].video_id] = std::move(results[i]);
  return out;
}

inline json map_report_json(const MapReport& r) {
  json per_threshold = json::array();
  for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
    json per_class = json::object();
    for (std::size_t c = 0; c < r.classes.size(); ++c) per_class[std::to_string(r.classes[c])] = r.per_class_ap[i][c];
    per_threshold.push_back({{"tiou", r.thresholds[i]}, {"mAP", r.map[i]}, {"per_class_AP", per_class}});
  }
  return {{"average_mAP", r.average_map}, {"num_classes", r.classes.size()}, {"thresholds", per_threshold}};
}

struct Evaluation {
  DetectionSet predictions;  // seconds
  MapReport report;
};

/// Loads a checkpoint (EMA weights unless `use_ema` is false), predicts on
/// the full sequences of `videos` and scores against their annotations.
template <typename T = float>
Evaluation evaluate_checkpoint(const std::vector<CheckpointEntry>& checkpoint, const ModelConfig& model_cfg,
                               const std::vector<Video>& videos, const PostprocessConfig& pp,
                               const EvalConfig& eval_cfg, bool use_ema = true, std::size_t threads = 1) {
  ActionFormer<T> model(model_cfg);
  model.load_state(checkpoint, use_ema ? "ema." : "");
  std::vector<FeatureSequence> seqs;
  DetectionSet gts;
  for (const auto& v : videos) {
    seqs.push_back(v.seq);
    gts[v.seq.video_id] = v.annotation.actions;
  }
  Evaluation out;
  out.predictions = predict(model, seqs, pp, threads);
  out.report = map_at(out.predictions, gts, eval_cfg);
  return out;
}

}  // namespace actionformer

#endif  // ACTIONFORMER_TRAINER_HPP
