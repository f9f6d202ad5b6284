// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ACTIONFORMER_MODEL_HPP
#define ACTIONFORMER_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "actionformer/checkpoint.hpp"
#include "actionformer/ops.hpp"
#include "actionformer/tensor.hpp"

namespace actionformer {

/// Admissible max(onset, offset) distance for a pyramid level, in input grid
/// steps: [min, max). max may be +inf.
struct RegressionRange {
  double min = 0.0;
  double max = std::numeric_limits<double>::infinity();

  bool contains(double v) const { return v >= min && v < max; }
  bool operator==(const RegressionRange&) const = default;
};

/// [0, r), [r, 2r), [2r, 4r), ... with the last level open-ended.
/// A single level gets [0, +inf).
inline std::vector<RegressionRange> make_regression_ranges(std::size_t levels, double init_range = 4.0) {
  std::vector<RegressionRange> ranges;
  double lo = 0.0, hi = init_range;
  for (std::size_t i = 0; i < levels; ++i) {
    const bool last = i + 1 == levels;
    ranges.push_back({lo, last ? std::numeric_limits<double>::infinity() : hi});
    lo = hi;
    hi *= 2.0;
  }
  return ranges;
}

struct ModelConfig {
  std::size_t input_dim = 2048;
  std::size_t embed_dim = 512;
  std::size_t num_heads = 4;
  std::size_t window_size = 19;
  std::size_t num_stem_blocks = 2;
  std::size_t num_pyramid_blocks = 5;
  std::size_t head_kernel = 3;
  std::size_t head_layers = 3;
  std::size_t num_classes = 20;
  std::size_t mlp_ratio = 4;
  std::vector<RegressionRange> regression_ranges = make_regression_ranges(6);
  bool use_position_embedding = false;
  std::size_t max_seq_len = 2304;
  double scale_init = 1e-4;
  double prior_prob = 0.01;
  double layer_norm_eps = 1e-5;

  std::size_t num_levels() const { return 1 + num_pyramid_blocks; }

  /// Throws ErrorKind::kConfig describing the first violated constraint.
  void validate() const {
    auto check = [](bool ok, const std::string& msg) {
      if (!ok) fail(ErrorKind::kConfig, "model config: " + msg);
    };
    check(input_dim >= 1, "input_dim must be >= 1");
    check(embed_dim >= 1, "embed_dim must be >= 1");
    check(num_heads >= 1 && embed_dim % num_heads == 0, "num_heads must divide embed_dim");
    check(window_size % 2 == 1, "window_size must be odd");
    check(num_stem_blocks >= 1, "num_stem_blocks must be >= 1");
    check(head_kernel % 2 == 1, "head_kernel must be odd");
    check(head_layers >= 1, "head_layers must be >= 1");
    check(num_classes >= 1, "num_classes must be >= 1");
    check(mlp_ratio >= 1, "mlp_ratio must be >= 1");
    check(max_seq_len >= 1, "max_seq_len must be >= 1");
    check(regression_ranges.size() == num_levels(),
          "regression_ranges has " + std::to_string(regression_ranges.size()) +
              " entries but the pyramid has " + std::to_string(num_levels()) + " levels");
    for (std::size_t i = 0; i < regression_ranges.size(); ++i) {
      const auto& r = regression_ranges[i];
      check(r.min < r.max, "regression range " + std::to_string(i) + " is empty");
      if (i == 0) check(r.min == 0.0, "first regression range must start at 0");
      if (i + 1 < regression_ranges.size()) {
        check(regression_ranges[i + 1].min == r.max, "regression ranges must be contiguous");
      } else {
        check(std::isinf(r.max), "last regression range must be open-ended");
      }
    }
  }
};

/// Length of every pyramid level for an input of `len` steps.
inline std::vector<std::size_t> pyramid_lengths(std::size_t len, std::size_t levels) {
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l < levels; ++l) {
    out.push_back(len);
    len = (len + 1) / 2;
  }
  return out;
}

inline std::size_t level_stride(std::size_t level) { return std::size_t{1} << level; }

// ---------------------------------------------------------------------------
// Parameters

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
  bool decay = true;
};

template <typename T>
class ParameterSet {
 public:
  Tensor<T> add(std::string name, Shape shape, std::vector<T> init, bool decay) {
    Tensor<T> t(std::move(shape), std::move(init), /*requires_grad=*/true);
    items_.push_back({std::move(name), t, decay});
    return t;
  }

  const std::vector<NamedParameter<T>>& items() const { return items_; }

  std::vector<Tensor<T>> tensors() const {
    std::vector<Tensor<T>> out;
    for (const auto& p : items_) out.push_back(p.tensor);
    return out;
  }

  std::vector<bool> decay_flags() const {
    std::vector<bool> out;
    for (const auto& p : items_) out.push_back(p.decay);
    return out;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : items_) p.tensor.zero_grad();
  }

 private:
  std::vector<NamedParameter<T>> items_;
};

namespace detail {

template <typename T>
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  std::vector<T> uniform(std::size_t n, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<T> out(n);
    for (auto& v : out) v = static_cast<T>(dist(rng_));
    return out;
  }

  static std::vector<T> constant(std::size_t n, double value) {
    return std::vector<T>(n, static_cast<T>(value));
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Layers

template <typename T>
struct ConvLayer {
  Tensor<T> weight;
  Tensor<T> bias;
  std::size_t stride = 1;
  bool depthwise = false;

  static ConvLayer make(ParameterSet<T>& ps, detail::Initializer<T>& init, const std::string& name,
                        std::size_t kernel, std::size_t cin, std::size_t cout, std::size_t stride = 1,
                        bool depthwise = false) {
    ConvLayer c;
    const std::size_t wcin = depthwise ? 1 : cin;
    const double bound = 1.0 / std::sqrt(static_cast<double>(kernel * wcin));
    c.weight = ps.add(name + ".weight", Shape{kernel, wcin, cout}, init.uniform(kernel * wcin * cout, bound), true);
    c.bias = ps.add(name + ".bias", Shape{cout}, detail::Initializer<T>::constant(cout, 0.0), false);
    c.stride = stride;
    c.depthwise = depthwise;
    return c;
  }

  Tensor<T> operator()(const Tensor<T>& x, const Mask& mask) const {
    return conv1d(x, weight, bias, stride, depthwise, mask);
  }
};

template <typename T>
struct LinearLayer {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]

  static LinearLayer make(ParameterSet<T>& ps, detail::Initializer<T>& init, const std::string& name,
                          std::size_t in, std::size_t out) {
    LinearLayer l;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    l.weight = ps.add(name + ".weight", Shape{in, out}, init.uniform(in * out, bound), true);
    l.bias = ps.add(name + ".bias", Shape{out}, detail::Initializer<T>::constant(out, 0.0), false);
    return l;
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return add_bias(matmul(x, weight), bias); }
};

template <typename T>
struct LayerNormLayer {
  Tensor<T> gain;
  Tensor<T> bias;
  T eps = T(1e-5);

  static LayerNormLayer make(ParameterSet<T>& ps, const std::string& name, std::size_t dim, double eps) {
    LayerNormLayer n;
    n.gain = ps.add(name + ".gain", Shape{dim}, detail::Initializer<T>::constant(dim, 1.0), false);
    n.bias = ps.add(name + ".bias", Shape{dim}, detail::Initializer<T>::constant(dim, 0.0), false);
    n.eps = static_cast<T>(eps);
    return n;
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gain, bias, eps); }
};

/// Pre-LN transformer unit with windowed multi-head attention, per-channel
/// residual scales, a GELU MLP and an optional strided depthwise downsampler.
template <typename T>
struct TransformerBlock {
  LayerNormLayer<T> norm_attn;
  LinearLayer<T> query, key, value, proj;
  Tensor<T> attn_scale;
  LayerNormLayer<T> norm_mlp;
  LinearLayer<T> fc1, fc2;
  Tensor<T> mlp_scale;
  bool downsample = false;
  ConvLayer<T> down;
  std::size_t window = 19;
  std::size_t heads = 4;

  static TransformerBlock make(ParameterSet<T>& ps, detail::Initializer<T>& init, const std::string& name,
                               const ModelConfig& cfg, bool downsample) {
    const std::size_t d = cfg.embed_dim;
    TransformerBlock b;
    b.norm_attn = LayerNormLayer<T>::make(ps, name + ".norm_attn", d, cfg.layer_norm_eps);
    b.query = LinearLayer<T>::make(ps, init, name + ".attn.query", d, d);
    b.key = LinearLayer<T>::make(ps, init, name + ".attn.key", d, d);
    b.value = LinearLayer<T>::make(ps, init, name + ".attn.value", d, d);
    b.proj = LinearLayer<T>::make(ps, init, name + ".attn.proj", d, d);
    b.attn_scale = ps.add(name + ".attn_scale", Shape{d}, detail::Initializer<T>::constant(d, cfg.scale_init), false);
    b.norm_mlp = LayerNormLayer<T>::make(ps, name + ".norm_mlp", d, cfg.layer_norm_eps);
    b.fc1 = LinearLayer<T>::make(ps, init, name + ".mlp.fc1", d, d * cfg.mlp_ratio);
    b.fc2 = LinearLayer<T>::make(ps, init, name + ".mlp.fc2", d * cfg.mlp_ratio, d);
    b.mlp_scale = ps.add(name + ".mlp_scale", Shape{d}, detail::Initializer<T>::constant(d, cfg.scale_init), false);
    b.downsample = downsample;
    if (downsample) b.down = ConvLayer<T>::make(ps, init, name + ".down", 3, d, d, 2, /*depthwise=*/true);
    b.window = cfg.window_size;
    b.heads = cfg.num_heads;
    return b;
  }

  std::pair<Tensor<T>, Mask> operator()(const Tensor<T>& z, const Mask& mask) const {
    auto h = norm_attn(z);
    auto attn = local_attention(query(h), key(h), value(h), mask, window, heads);
    auto zbar = add(z, mask_rows(mul_channels(proj(attn), attn_scale), mask));
    auto m = fc2(gelu(fc1(norm_mlp(zbar))));
    auto zhat = add(zbar, mask_rows(mul_channels(m, mlp_scale), mask));
    if (!downsample) return {zhat, mask};
    return {down(zhat, mask), downsample_mask(mask, 2)};
  }
};

/// Convolutional head shared across pyramid levels:
/// (conv -> LN -> ReLU) x (layers-1), then a final conv.
template <typename T>
struct PredictionHead {
  std::vector<ConvLayer<T>> convs;
  std::vector<LayerNormLayer<T>> norms;
  bool final_relu = false;

  static PredictionHead make(ParameterSet<T>& ps, detail::Initializer<T>& init, const std::string& name,
                             const ModelConfig& cfg, std::size_t out_channels, bool final_relu,
                             double final_bias) {
    PredictionHead h;
    const std::size_t d = cfg.embed_dim;
    for (std::size_t i = 0; i + 1 < cfg.head_layers; ++i) {
      h.convs.push_back(ConvLayer<T>::make(ps, init, name + ".conv" + std::to_string(i), cfg.head_kernel, d, d));
      h.norms.push_back(LayerNormLayer<T>::make(ps, name + ".norm" + std::to_string(i), d, cfg.layer_norm_eps));
    }
    auto last = ConvLayer<T>::make(ps, init, name + ".out", cfg.head_kernel, d, out_channels);
    std::fill(last.bias.data().begin(), last.bias.data().end(), static_cast<T>(final_bias));
    h.convs.push_back(last);
    h.final_relu = final_relu;
    return h;
  }

  Tensor<T> operator()(Tensor<T> x, const Mask& mask) const {
    for (std::size_t i = 0; i + 1 < convs.size(); ++i) {
      x = mask_rows(relu(norms[i](convs[i](x, mask))), mask);
    }
    auto out = convs.back()(x, mask);
    if (final_relu) out = relu(out);
    return out;
  }
};

/// Crops the embedding table to `len` rows, or linearly upsamples it when the
/// sequence is longer than the table.
template <typename T>
Tensor<T> interpolate_position_embedding(const Tensor<T>& table, std::size_t len) {
  if (len <= table.dim(0)) return take_rows(table, len);
  return interpolate_rows(table, len);
}

template <typename T>
struct LevelOutput {
  Tensor<T> features;
  Mask mask;
  std::size_t stride = 1;
  RegressionRange range;
  Tensor<T> cls_logits;  // [T_l, C]
  Tensor<T> reg;         // [T_l, 2], stride-normalized (onset, offset), >= 0
};

template <typename T>
struct ModelOutput {
  std::vector<LevelOutput<T>> levels;
};

template <typename T>
class ActionFormer {
 public:
  explicit ActionFormer(ModelConfig config, std::uint64_t seed = 0) : config_(std::move(config)) {
    config_.validate();
    detail::Initializer<T> init(seed);
    const std::size_t d = config_.embed_dim;
    proj_[0] = ConvLayer<T>::make(params_, init, "proj.0", 3, config_.input_dim, d);
    proj_[1] = ConvLayer<T>::make(params_, init, "proj.1", 3, d, d);
    if (config_.use_position_embedding) {
      pos_embed_ = params_.add("pos_embed", Shape{config_.max_seq_len, d},
                               init.uniform(config_.max_seq_len * d, 0.02), false);
    }
    for (std::size_t i = 0; i < config_.num_stem_blocks; ++i)
      stem_.push_back(TransformerBlock<T>::make(params_, init, "stem." + std::to_string(i), config_, false));
    for (std::size_t i = 0; i < config_.num_pyramid_blocks; ++i)
      pyramid_.push_back(TransformerBlock<T>::make(params_, init, "pyramid." + std::to_string(i), config_, true));
    const double prior_bias = -std::log((1.0 - config_.prior_prob) / config_.prior_prob);
    cls_head_ = PredictionHead<T>::make(params_, init, "cls_head", config_, config_.num_classes, false, prior_bias);
    reg_head_ = PredictionHead<T>::make(params_, init, "reg_head", config_, 2, true, 0.0);
  }

  ActionFormer(const ActionFormer&) = delete;
  ActionFormer& operator=(const ActionFormer&) = delete;
  ActionFormer(ActionFormer&&) noexcept = default;
  ActionFormer& operator=(ActionFormer&&) noexcept = default;

  const ModelConfig& config() const { return config_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }

  /// Runs the encoder and both heads. `x` is [T, input_dim]; `mask` marks
  /// valid steps (empty = all valid). With `training` set, T must not
  /// exceed max_seq_len.
  ModelOutput<T> forward(const Tensor<T>& x, const Mask& mask = {}, bool training = false) const {
    require(x.rank() == 2 && x.dim(1) == config_.input_dim, ErrorKind::kShapeMismatch,
            "model input must be [T, " + std::to_string(config_.input_dim) + "], got " +
                shape_string(x.shape()));
    const std::size_t len = x.dim(0);
    require(len >= 1, ErrorKind::kShapeMismatch, "model input is empty");
    if (training) {
      require(len <= config_.max_seq_len, ErrorKind::kInvalidArgument,
              "training input longer than max_seq_len; window it first");
    }
    Mask m = mask.empty() ? Mask(len, 1) : mask;
    require(m.size() == len, ErrorKind::kShapeMismatch, "mask length does not match input");

    auto h = mask_rows(relu(proj_[0](x, m)), m);
    h = proj_[1](h, m);
    if (config_.use_position_embedding) {
      h = add(h, mask_rows(interpolate_position_embedding(pos_embed_, len), m));
    }
    for (const auto& block : stem_) h = block(h, m).first;

    ModelOutput<T> out;
    auto emit = [&](const Tensor<T>& feats, const Mask& lm, std::size_t level) {
      LevelOutput<T> lo;
      lo.features = feats;
      lo.mask = lm;
      lo.stride = level_stride(level);
      lo.range = config_.regression_ranges[level];
      lo.cls_logits = cls_head_(feats, lm);
      lo.reg = reg_head_(feats, lm);
      out.levels.push_back(std::move(lo));
    };
    emit(h, m, 0);
    for (std::size_t i = 0; i < pyramid_.size(); ++i) {
      std::tie(h, m) = pyramid_[i](h, m);
      emit(h, m, i + 1);
    }
    return out;
  }

  /// Named tensors for checkpointing.
  std::vector<CheckpointEntry> state() const {
    std::vector<CheckpointEntry> out;
    for (const auto& p : params_.items())
      out.push_back(make_checkpoint_entry<T>(p.name, p.tensor.shape(), p.tensor.data()));
    return out;
  }

  /// Loads parameters by name; `prefix` selects e.g. the "ema." copy.
  void load_state(const std::vector<CheckpointEntry>& entries, const std::string& prefix = "") {
    for (const auto& p : params_.items()) {
      const auto it = std::find_if(entries.begin(), entries.end(),
                                   [&](const auto& e) { return e.name == prefix + p.name; });
      if (it == entries.end()) fail(ErrorKind::kFormat, "checkpoint is missing tensor " + prefix + p.name);
      if (it->shape != p.tensor.shape())
        fail(ErrorKind::kShapeMismatch, "checkpoint tensor " + it->name + " has shape " +
                                            shape_string(it->shape) + ", model expects " +
                                            shape_string(p.tensor.shape()));
      auto values = it->template as<T>();
      auto dst = const_cast<Tensor<T>&>(p.tensor).data();
      std::copy(values.begin(), values.end(), dst.begin());
    }
  }

 private:
  ModelConfig config_;
  ParameterSet<T> params_;
  ConvLayer<T> proj_[2];
  Tensor<T> pos_embed_;
  std::vector<TransformerBlock<T>> stem_;
  std::vector<TransformerBlock<T>> pyramid_;
  PredictionHead<T> cls_head_;
  PredictionHead<T> reg_head_;
};

}  // namespace actionformer

#endif  // ACTIONFORMER_MODEL_HPP
