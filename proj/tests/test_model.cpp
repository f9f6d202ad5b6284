// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "actionformer/model.hpp"

namespace af = actionformer;
using TF = af::Tensor<float>;
using TD = af::Tensor<double>;

namespace {

template <typename T>
af::Tensor<T> random_input(std::size_t len, std::size_t dim, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<T> v(len * dim);
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return af::Tensor<T>(af::Shape{len, dim}, std::move(v));
}

af::ModelConfig small_config(std::size_t pyramid_blocks = 3) {
  af::ModelConfig c;
  c.input_dim = 12;
  c.embed_dim = 16;
  c.num_heads = 2;
  c.window_size = 5;
  c.num_stem_blocks = 1;
  c.num_pyramid_blocks = pyramid_blocks;
  c.head_layers = 2;
  c.num_classes = 3;
  c.mlp_ratio = 2;
  c.regression_ranges = af::make_regression_ranges(c.num_levels());
  c.max_seq_len = 128;
  c.scale_init = 0.5;
  return c;
}

}  // namespace

TEST(RegressionRanges, DefaultSixLevels) {
  const auto r = af::make_regression_ranges(6);
  const double inf = std::numeric_limits<double>::infinity();
  const std::vector<af::RegressionRange> expected = {{0, 4}, {4, 8}, {8, 16}, {16, 32}, {32, 64}, {64, inf}};
  EXPECT_EQ(r, expected);
  EXPECT_EQ(af::make_regression_ranges(1), (std::vector<af::RegressionRange>{{0, inf}}));
}

TEST(PyramidLengths, HalvesWithCeil) {
  EXPECT_EQ(af::pyramid_lengths(2304, 6), (std::vector<std::size_t>{2304, 1152, 576, 288, 144, 72}));
  EXPECT_EQ(af::pyramid_lengths(37, 4), (std::vector<std::size_t>{37, 19, 10, 5}));
  EXPECT_EQ(af::pyramid_lengths(1, 3), (std::vector<std::size_t>{1, 1, 1}));
}

TEST(ModelConfig, ValidationRejectsBadShapes) {
  auto c = small_config();
  c.window_size = 4;
  EXPECT_THROW(c.validate(), af::Error);
  c = small_config();
  c.num_heads = 3;
  EXPECT_THROW(c.validate(), af::Error);
  c = small_config();
  c.regression_ranges = af::make_regression_ranges(2);
  try {
    c.validate();
    FAIL();
  } catch (const af::Error& e) {
    EXPECT_EQ(e.kind(), af::ErrorKind::kConfig);
  }
}

TEST(Model, OutputShapesPerLevel) {
  const auto cfg = small_config();
  af::ActionFormer<float> model(cfg, 7);
  const auto out = model.forward(random_input<float>(37, cfg.input_dim, 1));
  ASSERT_EQ(out.levels.size(), 4u);
  const std::vector<std::size_t> lens = {37, 19, 10, 5};
  for (std::size_t l = 0; l < 4; ++l) {
    EXPECT_EQ(out.levels[l].cls_logits.shape(), (af::Shape{lens[l], 3}));
    EXPECT_EQ(out.levels[l].reg.shape(), (af::Shape{lens[l], 2}));
    EXPECT_EQ(out.levels[l].stride, std::size_t{1} << l);
    EXPECT_EQ(out.levels[l].range, cfg.regression_ranges[l]);
  }
}

TEST(Model, SingleStepInput) {
  const auto cfg = small_config();
  af::ActionFormer<float> model(cfg, 7);
  const auto out = model.forward(random_input<float>(1, cfg.input_dim, 2));
  for (const auto& lv : out.levels) EXPECT_EQ(lv.cls_logits.dim(0), 1u);
}

TEST(Model, RegressionIsNonNegativeAndClsPriorHolds) {
  auto cfg = small_config();
  cfg.scale_init = 1e-4;
  af::ActionFormer<float> model(cfg, 3);
  const auto out = model.forward(random_input<float>(64, cfg.input_dim, 4));
  double mean_prob = 0.0;
  std::size_t n = 0;
  for (const auto& lv : out.levels) {
    for (float r : lv.reg.data()) EXPECT_GE(r, 0.0f);
    for (float z : lv.cls_logits.data()) {
      mean_prob += 1.0 / (1.0 + std::exp(-z));
      ++n;
    }
  }
  // Output bias starts at the logit of the 0.01 prior.
  EXPECT_NEAR(mean_prob / n, 0.01, 0.02);
}

TEST(Model, TrainingInputLongerThanMaxRejected) {
  const auto cfg = small_config();
  af::ActionFormer<float> model(cfg, 7);
  EXPECT_THROW(model.forward(random_input<float>(129, cfg.input_dim, 1), {}, true), af::Error);
  EXPECT_NO_THROW(model.forward(random_input<float>(129, cfg.input_dim, 1), {}, false));
}

TEST(Model, HeadsAreSharedAcrossLevels) {
  auto count_head_params = [](std::size_t pyramid_blocks) {
    af::ActionFormer<float> model(small_config(pyramid_blocks), 0);
    std::size_t n = 0;
    for (const auto& p : model.parameters().items())
      if (p.name.rfind("cls_head", 0) == 0 || p.name.rfind("reg_head", 0) == 0) n += p.tensor.numel();
    return n;
  };
  EXPECT_EQ(count_head_params(1), count_head_params(5));
}

TEST(Model, SameSeedSameWeights) {
  af::ActionFormer<float> a(small_config(), 11), b(small_config(), 11), c(small_config(), 12);
  const auto sa = a.state(), sb = b.state(), sc = c.state();
  ASSERT_EQ(sa.size(), sb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    EXPECT_EQ(sa[i].f32, sb[i].f32) << sa[i].name;
    any_diff = any_diff || sa[i].f32 != sc[i].f32;
  }
  EXPECT_TRUE(any_diff);
}

TEST(Model, StateRoundTripReproducesOutputs) {
  const auto cfg = small_config();
  af::ActionFormer<float> a(cfg, 1), b(cfg, 2);
  b.load_state(a.state());
  const auto x = random_input<float>(20, cfg.input_dim, 5);
  const auto oa = a.forward(x), ob = b.forward(x);
  for (std::size_t l = 0; l < oa.levels.size(); ++l) {
    const auto va = oa.levels[l].cls_logits.data(), vb = ob.levels[l].cls_logits.data();
    EXPECT_TRUE(std::equal(va.begin(), va.end(), vb.begin()));
  }
}

TEST(Model, LoadStateReportsMissingAndMisshapenTensors) {
  const auto cfg = small_config();
  af::ActionFormer<float> a(cfg, 1);
  auto state = a.state();
  auto wrong = state;
  wrong[0].shape = {1};
  EXPECT_THROW(a.load_state(wrong), af::Error);
  state.pop_back();
  try {
    a.load_state(state);
    FAIL();
  } catch (const af::Error& e) {
    EXPECT_EQ(e.kind(), af::ErrorKind::kFormat);
  }
}

TEST(Model, PaddingDoesNotChangeValidOutputs) {
  auto cfg = small_config(5);
  cfg.max_seq_len = 2304;
  af::ActionFormer<float> model(cfg, 9);
  const std::size_t n = 300, padded = 2304;
  const auto x = random_input<float>(n, cfg.input_dim, 6);
  std::vector<float> xp(padded * cfg.input_dim, 0.0f);
  std::copy(x.data().begin(), x.data().end(), xp.begin());
  af::Mask mask(padded, 0);
  std::fill(mask.begin(), mask.begin() + n, 1);
  const auto a = model.forward(x);
  const auto b = model.forward(TF(af::Shape{padded, cfg.input_dim}, xp), mask);
  const auto lens = af::pyramid_lengths(n, cfg.num_levels());
  double worst = 0.0;
  for (std::size_t l = 0; l < lens.size(); ++l) {
    for (std::size_t i = 0; i < lens[l] * cfg.num_classes; ++i)
      worst = std::max(worst, std::abs(double(a.levels[l].cls_logits.data()[i]) - b.levels[l].cls_logits.data()[i]));
    for (std::size_t i = 0; i < lens[l] * 2; ++i)
      worst = std::max(worst, std::abs(double(a.levels[l].reg.data()[i]) - b.levels[l].reg.data()[i]));
    EXPECT_EQ(std::count(b.levels[l].mask.begin(), b.levels[l].mask.end(), 1), static_cast<long>(lens[l]));
  }
  EXPECT_LE(worst, 1e-5);
}

TEST(LocalAttention, WideWindowMatchesDenseAttention) {
  for (std::size_t len : {8u, 37u, 128u}) {
    const auto q = random_input<float>(len, 8, 10 + len), k = random_input<float>(len, 8, 20 + len),
               v = random_input<float>(len, 8, 30 + len);
    const auto local = af::local_attention(q, k, v, {}, 2 * len + 1, 2);
    const auto dense = af::dense_attention(q, k, v, {}, 2);
    for (std::size_t i = 0; i < local.numel(); ++i) EXPECT_NEAR(local.data()[i], dense.data()[i], 1e-6) << len;
  }
}

TEST(LocalAttention, NarrowWindowDiffersFromDense) {
  const auto q = random_input<float>(128, 8, 1), k = random_input<float>(128, 8, 2), v = random_input<float>(128, 8, 3);
  const auto local = af::local_attention(q, k, v, {}, 19, 2);
  const auto dense = af::dense_attention(q, k, v, {}, 2);
  double diff = 0.0;
  for (std::size_t i = 0; i < local.numel(); ++i) diff = std::max(diff, double(std::abs(local.data()[i] - dense.data()[i])));
  EXPECT_GT(diff, 1e-3);
}

TEST(LocalAttention, ZeroQueriesAverageTheWindow) {
  const std::size_t len = 9, w = 5;
  TD q(af::Shape{len, 2}), k = random_input<double>(len, 2, 4);
  const auto v = random_input<double>(len, 2, 5);
  const auto out = af::local_attention(q, k, v, {}, w, 1);
  for (std::size_t t = 0; t < len; ++t) {
    const std::size_t lo = t >= 2 ? t - 2 : 0, hi = std::min(len - 1, t + 2);
    for (std::size_t c = 0; c < 2; ++c) {
      double mean = 0.0;
      for (std::size_t u = lo; u <= hi; ++u) mean += v.data()[u * 2 + c];
      mean /= static_cast<double>(hi - lo + 1);
      EXPECT_NEAR(out.data()[t * 2 + c], mean, 1e-12);
    }
  }
}

TEST(TransformerBlock, ZeroScalesGiveIdentity) {
  auto cfg = small_config();
  cfg.scale_init = 0.0;
  af::ParameterSet<double> ps;
  af::detail::Initializer<double> init(3);
  const auto block = af::TransformerBlock<double>::make(ps, init, "b", cfg, false);
  const auto z = random_input<double>(11, cfg.embed_dim, 8);
  const auto [out, mask] = block(z, af::Mask(11, 1));
  for (std::size_t i = 0; i < z.numel(); ++i) EXPECT_EQ(out.data()[i], z.data()[i]);
}
