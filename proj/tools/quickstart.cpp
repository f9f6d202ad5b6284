// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

// Library walk-through: build a small synthetic dataset, train a compact
// detector for a few epochs, then decode and score the held-out videos.

#include <iostream>

#include "actionformer/actionformer.hpp"

namespace af = actionformer;

int main() {
  af::SyntheticSpec spec;
  spec.num_train = 40;
  spec.num_test = 10;
  spec.feature_dim = 16;
  spec.coverage_levels = 3;
  const auto data = af::generate_synthetic(spec);
  const auto train_videos = af::join_dataset(data.features, data.annotations, "training");
  const auto test_videos = af::join_dataset(data.features, data.annotations, "testing");

  af::ModelConfig model;
  model.input_dim = spec.feature_dim;
  model.embed_dim = 64;
  model.num_classes = spec.num_classes;
  model.num_pyramid_blocks = 2;
  model.regression_ranges = af::make_regression_ranges(model.num_levels());
  model.max_seq_len = 256;

  af::TrainConfig train;
  train.epochs = 6;
  train.warmup_epochs = 1;
  train.base_lr = 1e-3;
  train.max_seq_len = 256;
  train.ema_decay = 0.99;

  const auto result = af::train<float>(train_videos, model, train, {}, [](const af::StepLog& s) {
    if (s.step % 20 == 0) std::cout << "step " << s.step << "  loss " << s.loss_total << '\n';
  });

  const auto eval = af::evaluate_checkpoint<float>(result.checkpoint(), model, test_videos, {}, af::EvalConfig::thumos());
  for (std::size_t i = 0; i < eval.report.thresholds.size(); ++i)
    std::cout << "mAP@" << eval.report.thresholds[i] << " = " << eval.report.map[i] << '\n';
  std::cout << "average mAP = " << eval.report.average_map << '\n';
  return 0;
}
