// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ACTIONFORMER_OPTIM_HPP
#define ACTIONFORMER_OPTIM_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "actionformer/tensor.hpp"

namespace actionformer {

/// Linear warmup from 0 to base_lr over warmup_steps, then cosine decay to 0
/// at total_steps.
struct LrSchedule {
  double base_lr = 1e-4;
  std::int64_t warmup_steps = 0;
  std::int64_t total_steps = 1;

  double at(std::int64_t step) const {
    if (step <= 0) return warmup_steps > 0 ? 0.0 : base_lr;
    if (step <= warmup_steps) {
      return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    }
    if (step >= total_steps) return 0.0;
    const double progress = static_cast<double>(step - warmup_steps) /
                            static_cast<double>(total_steps - warmup_steps);
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  }
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adam with decoupled weight decay. An update uses the schedule at the step
/// count before it, so the first update of a warmed-up schedule has lr 0.
template <typename T>
class AdamW {
 public:
  /// `decay` marks which parameters receive weight decay (same length as params).
  AdamW(std::vector<Tensor<T>> params, std::vector<bool> decay, LrSchedule schedule,
        AdamOptions options)
      : params_(std::move(params)), decay_(std::move(decay)), schedule_(schedule),
        options_(options) {
    require(decay_.size() == params_.size(), ErrorKind::kInvalidArgument,
            "AdamW: decay flags must match parameters");
    for (const auto& p : params_) {
      first_moment_.emplace_back(p.numel(), T(0));
      second_moment_.emplace_back(p.numel(), T(0));
    }
  }

  std::int64_t step_count() const { return step_count_; }
  /// Learning rate the next call to step() will use.
  double current_lr() const { return schedule_.at(step_count_); }
  const LrSchedule& schedule() const { return schedule_; }
  const std::vector<std::vector<T>>& first_moment() const { return first_moment_; }
  const std::vector<std::vector<T>>& second_moment() const { return second_moment_; }

  void step() {
    const double lr = schedule_.at(step_count_);
    ++step_count_;
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_count_));
    const T b1 = static_cast<T>(options_.beta1), b2 = static_cast<T>(options_.beta2);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.has_grad()) continue;
      auto values = p.data();
      auto grad = p.grad();
      auto& m = first_moment_[i];
      auto& v = second_moment_[i];
      const T wd = decay_[i] ? static_cast<T>(options_.weight_decay) : T(0);
      for (std::size_t j = 0; j < values.size(); ++j) {
        m[j] = b1 * m[j] + (T(1) - b1) * grad[j];
        v[j] = b2 * v[j] + (T(1) - b2) * grad[j] * grad[j];
        const double mhat = static_cast<double>(m[j]) / bc1;
        const double vhat = static_cast<double>(v[j]) / bc2;
        const double update = mhat / (std::sqrt(vhat) + options_.eps) +
                              static_cast<double>(wd) * static_cast<double>(values[j]);
        values[j] -= static_cast<T>(lr * update);
      }
    }
  }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<bool> decay_;
  LrSchedule schedule_;
  AdamOptions options_;
  std::vector<std::vector<T>> first_moment_;
  std::vector<std::vector<T>> second_moment_;
  std::int64_t step_count_ = 0;
};

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(std::vector<Tensor<T>>& params, double max_norm) {
  double total = 0.0;
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) total += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(total);
  if (norm > max_norm && norm > 0.0) {
    const T factor = static_cast<T>(max_norm / norm);
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (T& g : p.grad()) g *= factor;
    }
  }
  return norm;
}

/// Exponential moving average of parameter values.
template <typename T>
class Ema {
 public:
  Ema(const std::vector<Tensor<T>>& params, double decay) : decay_(decay) {
    require(decay >= 0.0 && decay <= 1.0, ErrorKind::kInvalidArgument,
            "Ema: decay must be in [0, 1]");
    for (const auto& p : params) shadow_.emplace_back(p.data().begin(), p.data().end());
  }

  double decay() const { return decay_; }
  const std::vector<std::vector<T>>& shadow() const { return shadow_; }
  std::vector<std::vector<T>>& shadow() { return shadow_; }

  void update(const std::vector<Tensor<T>>& params) {
    require(params.size() == shadow_.size(), ErrorKind::kShapeMismatch,
            "Ema: parameter count changed");
    const T d = static_cast<T>(decay_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto values = params[i].data();
      for (std::size_t j = 0; j < values.size(); ++j)
        shadow_[i][j] = d * shadow_[i][j] + (T(1) - d) * values[j];
    }
  }

 private:
  double decay_;
  std::vector<std::vector<T>> shadow_;
};

}  // namespace actionformer

#endif  // ACTIONFORMER_OPTIM_HPP
