// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ACTIONFORMER_GRADCHECK_HPP
#define ACTIONFORMER_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "actionformer/loss.hpp"
#include "actionformer/model.hpp"
#include "actionformer/ops.hpp"
#include "actionformer/targets.hpp"
#include "actionformer/tensor.hpp"

namespace actionformer {

struct GradCheckOptions {
  double step = 1e-5;        // central difference half-width
  double tolerance = 1e-4;   // max relative error
  double denominator_floor = 1e-3;
  std::size_t max_entries_per_input = std::numeric_limits<std::size_t>::max();
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  std::string name;
  std::size_t entries = 0;
  double max_error = 0.0;  // max |analytic - numeric| / max(|analytic|, |numeric|, floor)
  bool passed = false;
};

using ScalarFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

/// Compares reverse-mode gradients of a scalar function with central finite
/// differences, entry by entry, over every input that requires grad.
inline GradCheckResult check_gradients(const std::string& name, std::vector<Tensor<double>> inputs,
                                       const ScalarFn& f, const GradCheckOptions& opt = {}) {
  GradCheckResult res;
  res.name = name;
  for (auto& t : inputs) t.zero_grad();
  {
    auto y = f(inputs);
    require(y.numel() == 1, ErrorKind::kShapeMismatch, "check_gradients: function must return a scalar");
    backward(y);
  }
  std::mt19937_64 rng(opt.seed);
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    std::vector<std::size_t> idx(t.numel());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (idx.size() > opt.max_entries_per_input) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opt.max_entries_per_input);
      std::sort(idx.begin(), idx.end());
    }
    for (std::size_t i : idx) {
      auto values = t.data();
      const double saved = values[i];
      double fp, fm;
      {
        NoGradGuard no_grad;
        values[i] = saved + opt.step;
        fp = f(inputs).item();
        values[i] = saved - opt.step;
        fm = f(inputs).item();
        values[i] = saved;
      }
      const double numeric = (fp - fm) / (2.0 * opt.step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), opt.denominator_floor});
      res.max_error = std::max(res.max_error, std::abs(analytic[i] - numeric) / denom);
      ++res.entries;
    }
  }
  res.passed = res.max_error <= opt.tolerance;
  return res;
}

namespace detail {

/// Uniform values in [-2, 2], pushed at least `gap` away from zero so
/// piecewise-linear ops are differentiable at every probe.
inline std::vector<double> random_values(std::mt19937_64& rng, std::size_t n, double gap = 0.0) {
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  std::vector<double> out(n);
  for (auto& v : out) {
    v = dist(rng);
    if (std::abs(v) < gap) v = v < 0.0 ? v - gap : v + gap;
  }
  return out;
}

inline Tensor<double> random_tensor(std::mt19937_64& rng, Shape shape, bool requires_grad = true,
                                    double gap = 0.0) {
  const std::size_t n = shape_numel(shape);
  return Tensor<double>(std::move(shape), random_values(rng, n, gap), requires_grad);
}

/// Contracts a tensor with fixed random weights into a scalar.
inline Tensor<double> weighted_sum(const Tensor<double>& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0xA5A5A5A5ull);
  auto w = random_tensor(rng, y.shape(), false);
  return sum(mul(y, w));
}

}  // namespace detail

/// Tiny model used for the end-to-end check: T=32, D=16, C=2, 2 levels.
inline ModelConfig gradcheck_model_config() {
  ModelConfig c;
  c.input_dim = 16;
  c.embed_dim = 8;
  c.num_heads = 2;
  c.window_size = 5;
  c.num_stem_blocks = 1;
  c.num_pyramid_blocks = 1;
  c.head_layers = 2;
  c.num_classes = 2;
  c.mlp_ratio = 2;
  c.regression_ranges = make_regression_ranges(2, 8.0);
  c.max_seq_len = 32;
  c.scale_init = 0.5;  // large enough that every branch moves the loss
  return c;
}

/// Finite-difference checks over every differentiable op and a tiny model.
inline std::vector<GradCheckResult> run_gradient_suite(const GradCheckOptions& opt = {}) {
  std::vector<GradCheckResult> results;
  std::mt19937_64 rng(opt.seed);
  std::uint64_t salt = opt.seed;
  auto rt = [&](Shape s, bool rg = true, double gap = 0.0) { return detail::random_tensor(rng, std::move(s), rg, gap); };
  auto run = [&](const std::string& name, std::vector<Tensor<double>> inputs,
                 const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& op) {
    const std::uint64_t s = ++salt;
    results.push_back(check_gradients(
        name, std::move(inputs), [&op, s](const auto& in) { return detail::weighted_sum(op(in), s); }, opt));
  };
  const Mask mask6 = {1, 1, 1, 1, 0, 0};
  const Mask mask9 = {1, 1, 1, 1, 1, 1, 1, 0, 0};

  run("add", {rt({3, 4}), rt({3, 4})}, [](const auto& in) { return add(in[0], in[1]); });
  run("sub", {rt({3, 4}), rt({3, 4})}, [](const auto& in) { return sub(in[0], in[1]); });
  run("mul", {rt({3, 4}), rt({3, 4})}, [](const auto& in) { return mul(in[0], in[1]); });
  run("scale", {rt({3, 4})}, [](const auto& in) { return scale(in[0], 1.7); });
  run("add_bias", {rt({5, 3}), rt({3})}, [](const auto& in) { return add_bias(in[0], in[1]); });
  run("mul_channels", {rt({5, 3}), rt({3})}, [](const auto& in) { return mul_channels(in[0], in[1]); });
  run("mask_rows", {rt({6, 3})}, [&](const auto& in) { return mask_rows(in[0], mask6); });
  run("sum", {rt({3, 4})}, [](const auto& in) { return sum(in[0]); });
  run("mean", {rt({3, 4})}, [](const auto& in) { return mean(in[0]); });
  run("relu", {rt({4, 5}, true, 0.05)}, [](const auto& in) { return relu(in[0]); });
  run("gelu", {rt({4, 5})}, [](const auto& in) { return gelu(in[0]); });
  run("sigmoid", {rt({4, 5})}, [](const auto& in) { return sigmoid(in[0]); });
  run("matmul", {rt({3, 4}), rt({4, 2})}, [](const auto& in) { return matmul(in[0], in[1]); });
  run("matmul_batched", {rt({2, 3, 4}), rt({2, 4, 5})}, [](const auto& in) { return matmul(in[0], in[1]); });
  run("transpose", {rt({3, 5})}, [](const auto& in) { return transpose(in[0]); });
  run("slice_cols", {rt({3, 6})}, [](const auto& in) { return slice_cols(in[0], 1, 4); });
  run("concat_cols", {rt({3, 2}), rt({3, 4})}, [](const auto& in) {
    return concat_cols(std::vector<Tensor<double>>{in[0], in[1]});
  });
  run("softmax_rows", {rt({4, 6})}, [](const auto& in) { return softmax_rows(in[0]); });
  run("masked_softmax", {rt({6, 6})}, [&](const auto& in) { return softmax_rows(mask_cols_neg_inf(in[0], mask6)); });
  run("layer_norm", {rt({5, 6}), rt({6}), rt({6})}, [](const auto& in) { return layer_norm(in[0], in[1], in[2]); });
  run("conv1d", {rt({9, 3}), rt({3, 3, 4}), rt({4})},
      [&](const auto& in) { return conv1d(in[0], in[1], in[2], 1, false, mask9); });
  run("conv1d_stride2", {rt({9, 3}), rt({5, 3, 2}), rt({2})},
      [&](const auto& in) { return conv1d(in[0], in[1], in[2], 2, false, mask9); });
  run("conv1d_depthwise", {rt({9, 4}), rt({3, 1, 4}), rt({4})},
      [&](const auto& in) { return conv1d(in[0], in[1], in[2], 2, true, mask9); });
  run("local_attention", {rt({9, 4}), rt({9, 4}), rt({9, 4})},
      [&](const auto& in) { return local_attention(in[0], in[1], in[2], mask9, 5, 2); });
  run("dense_attention", {rt({9, 4}), rt({9, 4}), rt({9, 4})},
      [&](const auto& in) { return dense_attention(in[0], in[1], in[2], mask9, 2); });
  run("interpolate_rows", {rt({4, 3})}, [](const auto& in) { return interpolate_rows(in[0], 7); });
  run("take_rows", {rt({6, 3})}, [](const auto& in) { return take_rows(in[0], 4); });

  {
    std::vector<double> targets(12, 0.0);
    targets[1] = targets[5] = targets[6] = 1.0;
    const Mask valid = {1, 1, 1, 0};
    results.push_back(check_gradients("focal_loss", {rt({4, 3})}, [targets, valid](const auto& in) {
      return focal_loss(in[0], targets, valid, 0.25, 2.0);
    }, opt));
  }
  {
    std::uniform_real_distribution<double> pos(0.2, 3.0);
    std::vector<double> pred(10), target(10);
    for (auto& v : pred) v = pos(rng);
    for (auto& v : target) v = pos(rng);
    const Mask positive = {1, 1, 0, 1, 1};
    results.push_back(check_gradients("diou_loss", {Tensor<double>(Shape{5, 2}, pred, true)},
                                      [target, positive](const auto& in) { return diou_loss(in[0], target, positive); },
                                      opt));
  }

  // End to end: total loss of a tiny model w.r.t. its input and a sample of
  // every parameter tensor.
  {
    const auto cfg = gradcheck_model_config();
    ActionFormer<double> model(cfg, opt.seed + 17);
    const std::size_t len = 32;
    Mask mask(len, 1);
    for (std::size_t i = 28; i < len; ++i) mask[i] = 0;
    const std::vector<ActionInstance> gt = {{3.0, 9.0, 0, 1.0}, {12.0, 27.0, 1, 1.0}};
    LossConfig lc;
    const auto geometry = pyramid_geometry(len, cfg, mask);
    const auto targets = assign_targets(gt, geometry, cfg.num_classes, lc);
    std::vector<Tensor<double>> inputs;
    inputs.push_back(rt({len, cfg.input_dim}));
    for (const auto& p : model.parameters().items()) inputs.push_back(p.tensor);
    GradCheckOptions e2e = opt;
    e2e.max_entries_per_input = 3;
    results.push_back(check_gradients("model_end_to_end", inputs, [&](const auto& in) {
      return total_loss(model.forward(in[0], mask, true), targets, lc).total;
    }, e2e));
  }
  return results;
}

}  // namespace actionformer

#endif  // ACTIONFORMER_GRADCHECK_HPP
