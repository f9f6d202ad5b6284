// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ACTIONFORMER_LOSS_HPP
#define ACTIONFORMER_LOSS_HPP

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "actionformer/model.hpp"
#include "actionformer/ops.hpp"
#include "actionformer/targets.hpp"

namespace actionformer {

namespace detail {

// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Value with derivatives w.r.t. two inputs; enough to differentiate the
/// per-moment DIoU in forward mode.
struct Dual2 {
  double v = 0.0;
  double d0 = 0.0;
  double d1 = 0.0;
};

inline Dual2 operator+(Dual2 a, Dual2 b) { return {a.v + b.v, a.d0 + b.d0, a.d1 + b.d1}; }
inline Dual2 operator-(Dual2 a, Dual2 b) { return {a.v - b.v, a.d0 - b.d0, a.d1 - b.d1}; }
inline Dual2 operator*(Dual2 a, Dual2 b) {
  return {a.v * b.v, a.d0 * b.v + a.v * b.d0, a.d1 * b.v + a.v * b.d1};
}
inline Dual2 operator/(Dual2 a, Dual2 b) {
  const double inv = 1.0 / b.v;
  return {a.v * inv, (a.d0 * b.v - a.v * b.d0) * inv * inv, (a.d1 * b.v - a.v * b.d1) * inv * inv};
}
inline Dual2 dmin(Dual2 a, Dual2 b) { return a.v <= b.v ? a : b; }
inline Dual2 dmax(Dual2 a, Dual2 b) { return a.v >= b.v ? a : b; }
inline Dual2 constant(double v) { return {v, 0.0, 0.0}; }

inline Dual2 diou_dual(double pred_onset, double pred_offset, double tgt_onset, double tgt_offset) {
  const Dual2 ps{pred_onset, 1.0, 0.0};
  const Dual2 pe{pred_offset, 0.0, 1.0};
  const Dual2 gs = constant(tgt_onset), ge = constant(tgt_offset);
  constexpr double kTiny = 1e-12;
  Dual2 inter = dmin(ps, gs) + dmin(pe, ge);
  if (inter.v < 0.0) inter = constant(0.0);
  Dual2 uni = ps + pe + gs + ge - inter;
  if (uni.v < kTiny) uni = constant(kTiny);
  Dual2 enclose = dmax(ps, gs) + dmax(pe, ge);
  if (enclose.v < kTiny) enclose = constant(kTiny);
  // Centers relative to the moment: (offset - onset) / 2.
  const Dual2 dc = constant(0.5) * ((pe - ps) - (ge - gs));
  return constant(1.0) - inter / uni + (dc * dc) / (enclose * enclose);
}

}  // namespace detail

/// Sigmoid focal loss for one logit against a binary target.
inline double focal_loss_value(double logit, double target, double alpha, double gamma) {
  const double p = sigmoid_scalar(logit);
  if (target > 0.5) return alpha * std::pow(1.0 - p, gamma) * detail::softplus(-logit);
  return (1.0 - alpha) * std::pow(p, gamma) * detail::softplus(logit);
}

/// 1D distance-IoU loss between two segments anchored at the same moment,
/// each given as (onset distance, offset distance).
inline double diou_loss_value(double pred_onset, double pred_offset, double tgt_onset, double tgt_offset) {
  return detail::diou_dual(pred_onset, pred_offset, tgt_onset, tgt_offset).v;
}

/// Sum of sigmoid focal losses over every class of every valid row of
/// logits[T, C]. `targets` is the matching multi-hot [T * C] buffer.
template <typename T>
Tensor<T> focal_loss(const Tensor<T>& logits, const std::vector<double>& targets, const Mask& valid,
                     double alpha, double gamma) {
  require(logits.rank() == 2 && targets.size() == logits.numel(), ErrorKind::kShapeMismatch,
          "focal_loss: targets do not match logits");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  require(valid.empty() || valid.size() == rows, ErrorKind::kShapeMismatch, "focal_loss: mask length");
  double total = 0.0;
  std::vector<T> dlogit(logits.numel(), T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!valid.empty() && !valid[r]) continue;
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      const double x = static_cast<double>(logits.data()[i]);
      const double p = sigmoid_scalar(x);
      total += focal_loss_value(x, targets[i], alpha, gamma);
      double g;
      if (targets[i] > 0.5) {
        // d/dx [-a (1-p)^g log p] = a (1-p)^g (g p log p - (1-p))
        g = alpha * std::pow(1.0 - p, gamma) * (-gamma * p * detail::softplus(-x) - (1.0 - p));
      } else {
        // d/dx [-(1-a) p^g log(1-p)] = (1-a) p^g (p + g (1-p) softplus(x))
        g = (1.0 - alpha) * std::pow(p, gamma) * (p + gamma * (1.0 - p) * detail::softplus(x));
      }
      dlogit[i] = static_cast<T>(g);
    }
  }
  return Tensor<T>::from_op(Shape{}, {static_cast<T>(total)}, {logits.node()},
                            [dlogit = std::move(dlogit)](auto& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * dlogit[i];
  });
}

/// Sum of DIoU losses over positive rows of pred[T, 2] against target [T * 2].
template <typename T>
Tensor<T> diou_loss(const Tensor<T>& pred, const std::vector<double>& target, const Mask& positive) {
  require(pred.rank() == 2 && pred.dim(1) == 2 && target.size() == pred.numel() &&
              positive.size() == pred.dim(0),
          ErrorKind::kShapeMismatch, "diou_loss: shape mismatch");
  double total = 0.0;
  std::vector<T> dpred(pred.numel(), T(0));
  for (std::size_t r = 0; r < positive.size(); ++r) {
    if (!positive[r]) continue;
    const auto d = detail::diou_dual(static_cast<double>(pred.data()[r * 2]),
                                     static_cast<double>(pred.data()[r * 2 + 1]), target[r * 2],
                                     target[r * 2 + 1]);
    total += d.v;
    dpred[r * 2] = static_cast<T>(d.d0);
    dpred[r * 2 + 1] = static_cast<T>(d.d1);
  }
  return Tensor<T>::from_op(Shape{}, {static_cast<T>(total)}, {pred.node()},
                            [dpred = std::move(dpred)](auto& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * dpred[i];
  });
}

template <typename T>
struct LossBreakdown {
  Tensor<T> total;  // differentiable scalar
  double cls = 0.0;
  double reg = 0.0;
  std::size_t num_positive = 0;
};

/// Per-video loss: (sum focal + lambda_reg * sum DIoU over positives) / max(T+, 1),
/// accumulated over every pyramid level. Throws ErrorKind::kNumerical when the
/// result is not finite.
template <typename T>
LossBreakdown<T> total_loss(const ModelOutput<T>& outputs, const MomentTargets& targets,
                            const LossConfig& cfg) {
  require(outputs.levels.size() == targets.levels.size(), ErrorKind::kShapeMismatch,
          "total_loss: level count mismatch");
  Tensor<T> cls_sum, reg_sum;
  for (std::size_t l = 0; l < outputs.levels.size(); ++l) {
    const auto& lo = outputs.levels[l];
    const auto& lt = targets.levels[l];
    auto fl = focal_loss(lo.cls_logits, lt.cls, lo.mask, cfg.focal_alpha, cfg.focal_gamma);
    auto rl = diou_loss(lo.reg, lt.reg, lt.positive);
    cls_sum = cls_sum.defined() ? add(cls_sum, fl) : fl;
    reg_sum = reg_sum.defined() ? add(reg_sum, rl) : rl;
  }
  const double norm = static_cast<double>(std::max<std::size_t>(targets.num_positive, 1));
  LossBreakdown<T> out;
  out.num_positive = targets.num_positive;
  out.cls = static_cast<double>(cls_sum.item()) / norm;
  out.reg = cfg.lambda_reg * static_cast<double>(reg_sum.item()) / norm;
  out.total = scale(add(cls_sum, scale(reg_sum, static_cast<T>(cfg.lambda_reg))), static_cast<T>(1.0 / norm));
  if (!std::isfinite(static_cast<double>(out.total.item()))) {
    std::ostringstream os;
    os << "non-finite loss (cls=" << out.cls << ", reg=" << out.reg << ", positives=" << out.num_positive << ")";
    fail(ErrorKind::kNumerical, os.str());
  }
  return out;
}

/// Mean of per-video losses over a batch.
template <typename T>
LossBreakdown<T> batch_loss(const std::vector<ModelOutput<T>>& outputs,
                            const std::vector<MomentTargets>& targets, const LossConfig& cfg) {
  require(!outputs.empty() && outputs.size() == targets.size(), ErrorKind::kInvalidArgument,
          "batch_loss: empty or mismatched batch");
  LossBreakdown<T> out;
  const T inv = static_cast<T>(1.0 / static_cast<double>(outputs.size()));
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    auto l = total_loss(outputs[i], targets[i], cfg);
    auto scaled = scale(l.total, inv);
    out.total = out.total.defined() ? add(out.total, scaled) : scaled;
    out.cls += l.cls / static_cast<double>(outputs.size());
    out.reg += l.reg / static_cast<double>(outputs.size());
    out.num_positive += l.num_positive;
  }
  return out;
}

}  // namespace actionformer

#endif  // ACTIONFORMER_LOSS_HPP
