// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ACTIONFORMER_OPS_HPP
#define ACTIONFORMER_OPS_HPP

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "actionformer/tensor.hpp"

namespace actionformer {

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

inline void check_same_shape(const Shape& a, const Shape& b, const char* op) {
  require(a == b, ErrorKind::kShapeMismatch,
          std::string(op) + ": shapes " + shape_string(a) + " and " + shape_string(b) +
              " differ");
}

inline std::size_t rows_of(const Shape& s) {
  return s.empty() ? 1 : shape_numel(s) / s.back();
}

inline bool mask_valid(const Mask& mask, std::size_t i) {
  return mask.empty() || mask[i] != 0;
}

template <typename T>
void accumulate(std::vector<T>& dst, std::span<const T> src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a.node(), b.node()}, [](auto& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) detail::accumulate<T>(p->ensure_grad(), self.grad);
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a.node(), b.node()}, [](auto& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) detail::accumulate<T>(pa.ensure_grad(), self.grad);
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a.node(), b.node()}, [](auto& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  return Tensor<T>::from_op(a.shape(), std::move(out), {a.node()}, [factor](auto& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

/// x[..., c] + bias[c]
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  require(bias.rank() == 1 && !x.shape().empty() && x.shape().back() == bias.dim(0),
          ErrorKind::kShapeMismatch, "add_bias: bias does not match last dimension");
  const std::size_t cols = bias.dim(0);
  const std::size_t rows = detail::rows_of(x.shape());
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x.data()[r * cols + c] + bias.data()[c];
  return Tensor<T>::from_op(x.shape(), std::move(out), {x.node(), bias.node()},
                            [rows, cols](auto& self) {
    auto& px = *self.parents[0];
    auto& pb = *self.parents[1];
    if (px.requires_grad) detail::accumulate<T>(px.ensure_grad(), self.grad);
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) g[c] += self.grad[r * cols + c];
    }
  });
}

/// x[..., c] * gain[c] (per-channel scaling)
template <typename T>
Tensor<T> mul_channels(const Tensor<T>& x, const Tensor<T>& gain) {
  require(gain.rank() == 1 && !x.shape().empty() && x.shape().back() == gain.dim(0),
          ErrorKind::kShapeMismatch, "mul_channels: gain does not match last dimension");
  const std::size_t cols = gain.dim(0);
  const std::size_t rows = detail::rows_of(x.shape());
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x.data()[r * cols + c] * gain.data()[c];
  return Tensor<T>::from_op(x.shape(), std::move(out), {x.node(), gain.node()},
                            [rows, cols](auto& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    if (px.requires_grad) {
      auto& g = px.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[r * cols + c] * pg.value[c];
    }
    if (pg.requires_grad) {
      auto& g = pg.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) g[c] += self.grad[r * cols + c] * px.value[r * cols + c];
    }
  });
}

/// Zeroes every row whose mask entry is 0. Rows are the leading dimension.
template <typename T>
Tensor<T> mask_rows(const Tensor<T>& x, const Mask& mask) {
  if (mask.empty()) return x;
  require(x.rank() >= 1 && x.dim(0) == mask.size(), ErrorKind::kShapeMismatch,
          "mask_rows: mask length does not match rows");
  const std::size_t cols = x.numel() / x.dim(0);
  std::vector<T> out(x.data().begin(), x.data().end());
  for (std::size_t r = 0; r < mask.size(); ++r)
    if (!mask[r]) std::fill_n(out.begin() + r * cols, cols, T(0));
  return Tensor<T>::from_op(x.shape(), std::move(out), {x.node()}, [mask, cols](auto& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < mask.size(); ++r)
      if (mask[r])
        for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[r * cols + c];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = T(0);
  for (T v : x.data()) total += v;
  return Tensor<T>::from_op(Shape{}, {total}, {x.node()}, [](auto& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

// ---------------------------------------------------------------------------
// Activations

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
  return Tensor<T>::from_op(x.shape(), std::move(out), {x.node()}, [](auto& self) {
    auto& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (p.value[i] > T(0)) g[i] += self.grad[i];
  });
}

/// GELU, tanh approximation.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T kC = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kA = static_cast<T>(0.044715);
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x.data()[i];
    out[i] = T(0.5) * v * (T(1) + std::tanh(kC * (v + kA * v * v * v)));
  }
  return Tensor<T>::from_op(x.shape(), std::move(out), {x.node()}, [](auto& self) {
    auto& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = p.value[i];
      const T th = std::tanh(kC * (v + kA * v * v * v));
      const T d = T(0.5) * (T(1) + th) +
                  T(0.5) * v * (T(1) - th * th) * kC * (T(1) + T(3) * kA * v * v);
      g[i] += self.grad[i] * d;
    }
  });
}

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(x.data()[i]);
  return Tensor<T>::from_op(x.shape(), out, {x.node()}, [out](auto& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * out[i] * (T(1) - out[i]);
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

/// Matrix product over the last two dimensions; leading dimensions are batch
/// dimensions and must agree.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.rank() >= 2 && a.rank() == b.rank(), ErrorKind::kShapeMismatch,
          "matmul: operands must have equal rank >= 2");
  const std::size_t r = a.rank();
  const std::size_t m = a.dim(r - 2), k = a.dim(r - 1), n = b.dim(r - 1);
  require(b.dim(r - 2) == k, ErrorKind::kShapeMismatch,
          "matmul: inner dimensions " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  require(std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin()),
          ErrorKind::kShapeMismatch, "matmul: batch dimensions differ");
  const std::size_t batch = a.numel() / (m * k);
  Shape out_shape(a.shape().begin(), a.shape().end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<T> out(batch * m * n);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    detail::MatMap<T>(out.data() + bi * m * n, m, n).noalias() =
        detail::ConstMatMap<T>(a.data().data() + bi * m * k, m, k) *
        detail::ConstMatMap<T>(b.data().data() + bi * k * n, k, n);
  }
  return Tensor<T>::from_op(std::move(out_shape), std::move(out), {a.node(), b.node()},
                            [batch, m, k, n](auto& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (std::size_t bi = 0; bi < batch; ++bi) {
      detail::ConstMatMap<T> dc(self.grad.data() + bi * m * n, m, n);
      if (pa.requires_grad) {
        detail::MatMap<T>(pa.ensure_grad().data() + bi * m * k, m, k).noalias() +=
            dc * detail::ConstMatMap<T>(pb.value.data() + bi * k * n, k, n).transpose();
      }
      if (pb.requires_grad) {
        detail::MatMap<T>(pb.ensure_grad().data() + bi * k * n, k, n).noalias() +=
            detail::ConstMatMap<T>(pa.value.data() + bi * m * k, m, k).transpose() * dc;
      }
    }
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  require(x.rank() == 2, ErrorKind::kShapeMismatch, "transpose: expected a matrix");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = x.data()[r * cols + c];
  return Tensor<T>::from_op(Shape{cols, rows}, std::move(out), {x.node()},
                            [rows, cols](auto& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[c * rows + r];
  });
}

/// Columns [begin, end) of a matrix.
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  require(x.rank() == 2 && begin < end && end <= x.dim(1), ErrorKind::kShapeMismatch,
          "slice_cols: bad column range");
  const std::size_t rows = x.dim(0), cols = x.dim(1), width = end - begin;
  std::vector<T> out(rows * width);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x.data().begin() + r * cols + begin, width, out.begin() + r * width);
  return Tensor<T>::from_op(Shape{rows, width}, std::move(out), {x.node()},
                            [rows, cols, begin, width](auto& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < width; ++c) g[r * cols + begin + c] += self.grad[r * width + c];
  });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  require(!parts.empty(), ErrorKind::kInvalidArgument, "concat_cols: no inputs");
  const std::size_t rows = parts[0].dim(0);
  std::size_t cols = 0;
  std::vector<std::shared_ptr<typename Tensor<T>::Node>> parents;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    require(p.rank() == 2 && p.dim(0) == rows, ErrorKind::kShapeMismatch,
            "concat_cols: row counts differ");
    offsets.push_back(cols);
    cols += p.dim(1);
    parents.push_back(p.node());
  }
  std::vector<T> out(rows * cols);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const std::size_t w = parts[i].dim(1);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(parts[i].data().begin() + r * w, w, out.begin() + r * cols + offsets[i]);
  }
  return Tensor<T>::from_op(Shape{rows, cols}, std::move(out), std::move(parents),
                            [rows, cols, offsets](auto& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = *self.parents[i];
      if (!p.requires_grad) continue;
      const std::size_t w = p.shape[1];
      auto& g = p.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < w; ++c) g[r * w + c] += self.grad[r * cols + offsets[i] + c];
    }
  });
}

// ---------------------------------------------------------------------------
// Normalization and softmax

/// Row-wise softmax over the last dimension, stabilized by row-max
/// subtraction. Entries equal to -inf receive probability 0.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  require(x.rank() >= 1, ErrorKind::kShapeMismatch, "softmax_rows: scalar input");
  const std::size_t cols = x.shape().back();
  const std::size_t rows = detail::rows_of(x.shape());
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data().data() + r * cols;
    T* o = out.data() + r * cols;
    const T mx = *std::max_element(in, in + cols);
    T total = T(0);
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      total += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  return Tensor<T>::from_op(x.shape(), out, {x.node()}, [out, rows, cols](auto& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = out.data() + r * cols;
      const T* dy = self.grad.data() + r * cols;
      T dot = T(0);
      for (std::size_t c = 0; c < cols; ++c) dot += y[c] * dy[c];
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += y[c] * (dy[c] - dot);
    }
  });
}

/// Sets columns with mask 0 to -inf (attention key masking).
template <typename T>
Tensor<T> mask_cols_neg_inf(const Tensor<T>& x, const Mask& key_mask) {
  if (key_mask.empty()) return x;
  require(x.rank() == 2 && x.dim(1) == key_mask.size(), ErrorKind::kShapeMismatch,
          "mask_cols_neg_inf: mask length does not match columns");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<T> out(x.data().begin(), x.data().end());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      if (!key_mask[c]) out[r * cols + c] = -std::numeric_limits<T>::infinity();
  return Tensor<T>::from_op(x.shape(), std::move(out), {x.node()},
                            [key_mask, rows, cols](auto& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        if (key_mask[c]) g[r * cols + c] += self.grad[r * cols + c];
  });
}

/// Layer normalization over the last dimension (population variance).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5)) {
  require(x.rank() >= 1, ErrorKind::kShapeMismatch, "layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  require(d >= 1 && gain.numel() == d && bias.numel() == d, ErrorKind::kShapeMismatch,
          "layer_norm: gain/bias do not match feature dimension");
  const std::size_t rows = detail::rows_of(x.shape());
  std::vector<T> out(x.numel()), xhat(x.numel()), rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data().data() + r * d;
    T mu = T(0);
    for (std::size_t c = 0; c < d; ++c) mu += in[c];
    mu /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t c = 0; c < d; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<T>(d);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      xhat[r * d + c] = (in[c] - mu) * rstd[r];
      out[r * d + c] = xhat[r * d + c] * gain.data()[c] + bias.data()[c];
    }
  }
  return Tensor<T>::from_op(x.shape(), std::move(out), {x.node(), gain.node(), bias.node()},
                            [xhat = std::move(xhat), rstd = std::move(rstd), rows, d](auto& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    auto& pb = *self.parents[2];
    if (pg.requires_grad) {
      auto& g = pg.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < d; ++c) g[c] += self.grad[r * d + c] * xhat[r * d + c];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < d; ++c) g[c] += self.grad[r * d + c];
    }
    if (px.requires_grad) {
      auto& g = px.ensure_grad();
      const T inv_d = T(1) / static_cast<T>(d);
      for (std::size_t r = 0; r < rows; ++r) {
        T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
        for (std::size_t c = 0; c < d; ++c) {
          const T dxh = self.grad[r * d + c] * pg.value[c];
          sum_dxhat += dxh;
          sum_dxhat_xhat += dxh * xhat[r * d + c];
        }
        for (std::size_t c = 0; c < d; ++c) {
          const T dxh = self.grad[r * d + c] * pg.value[c];
          g[r * d + c] += rstd[r] * inv_d *
                          (static_cast<T>(d) * dxh - sum_dxhat - xhat[r * d + c] * sum_dxhat_xhat);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution

/// Mask for the output of a stride-s op: every s-th input entry.
inline Mask downsample_mask(const Mask& mask, std::size_t stride) {
  Mask out;
  for (std::size_t i = 0; i < mask.size(); i += stride) out.push_back(mask[i]);
  return out;
}

/// 1D convolution over time for x[T, C_in].
///
/// Dense weights are [k, C_in, C_out]; depthwise weights are [k, 1, C].
/// Zero padding of k/2 on both sides; output length ceil(T / stride).
/// Masked input rows contribute zero and masked output rows are re-zeroed,
/// where the output mask is the input mask subsampled by `stride`.
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, bool depthwise, const Mask& mask) {
  require(x.rank() == 2, ErrorKind::kShapeMismatch, "conv1d: input must be [T, C]");
  require(weight.rank() == 3, ErrorKind::kShapeMismatch, "conv1d: weight must be [k, C_in, C_out]");
  require(stride >= 1, ErrorKind::kInvalidArgument, "conv1d: stride must be >= 1");
  const std::size_t k = weight.dim(0);
  require(k % 2 == 1, ErrorKind::kInvalidArgument, "conv1d: kernel size must be odd");
  const std::size_t len = x.dim(0), cin = x.dim(1);
  require(mask.empty() || mask.size() == len, ErrorKind::kShapeMismatch, "conv1d: mask length");
  const std::size_t cout = weight.dim(2);
  if (depthwise) {
    require(weight.dim(1) == 1 && cout == cin, ErrorKind::kShapeMismatch,
            "conv1d: depthwise weight must be [k, 1, C] with C == C_in");
  } else {
    require(weight.dim(1) == cin, ErrorKind::kShapeMismatch, "conv1d: weight C_in mismatch");
  }
  const bool has_bias = bias.defined();
  if (has_bias) require(bias.numel() == cout, ErrorKind::kShapeMismatch, "conv1d: bias size");

  const std::size_t out_len = (len + stride - 1) / stride;
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const Mask out_mask = downsample_mask(mask, stride);
  auto src_index = [=](std::size_t o, std::size_t j) -> std::ptrdiff_t {
    const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(o * stride + j) - pad;
    if (s < 0 || s >= static_cast<std::ptrdiff_t>(len)) return -1;
    if (!detail::mask_valid(mask, static_cast<std::size_t>(s))) return -1;
    return s;
  };

  std::vector<T> out(out_len * cout, T(0));
  const T* xv = x.data().data();
  const T* wv = weight.data().data();

  if (depthwise) {
    for (std::size_t o = 0; o < out_len; ++o) {
      if (!detail::mask_valid(out_mask, o)) continue;
      T* orow = out.data() + o * cout;
      if (has_bias) std::copy_n(bias.data().data(), cout, orow);
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t s = src_index(o, j);
        if (s < 0) continue;
        const T* xrow = xv + static_cast<std::size_t>(s) * cin;
        for (std::size_t c = 0; c < cin; ++c) orow[c] += xrow[c] * wv[j * cin + c];
      }
    }
    return Tensor<T>::from_op(Shape{out_len, cout}, std::move(out),
                              {x.node(), weight.node(), has_bias ? bias.node() : nullptr},
                              [=](auto& self) {
      auto& px = *self.parents[0];
      auto& pw = *self.parents[1];
      auto* pb = self.parents[2].get();
      for (std::size_t o = 0; o < out_len; ++o) {
        if (!detail::mask_valid(out_mask, o)) continue;
        const T* dy = self.grad.data() + o * cout;
        if (pb && pb->requires_grad) {
          auto& gb = pb->ensure_grad();
          for (std::size_t c = 0; c < cout; ++c) gb[c] += dy[c];
        }
        for (std::size_t j = 0; j < k; ++j) {
          const std::ptrdiff_t s = src_index(o, j);
          if (s < 0) continue;
          const std::size_t si = static_cast<std::size_t>(s);
          if (pw.requires_grad) {
            auto& gw = pw.ensure_grad();
            for (std::size_t c = 0; c < cin; ++c) gw[j * cin + c] += dy[c] * px.value[si * cin + c];
          }
          if (px.requires_grad) {
            auto& gx = px.ensure_grad();
            for (std::size_t c = 0; c < cin; ++c) gx[si * cin + c] += dy[c] * pw.value[j * cin + c];
          }
        }
      }
    });
  }

  // Dense path: im2col then a single GEMM. Weight [k, C_in, C_out] is already
  // the [k*C_in, C_out] matrix in row-major order.
  const std::size_t kc = k * cin;
  std::vector<T> cols(out_len * kc, T(0));
  for (std::size_t o = 0; o < out_len; ++o) {
    if (!detail::mask_valid(out_mask, o)) continue;
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t s = src_index(o, j);
      if (s < 0) continue;
      std::copy_n(xv + static_cast<std::size_t>(s) * cin, cin, cols.data() + o * kc + j * cin);
    }
  }
  detail::MatMap<T> om(out.data(), out_len, cout);
  om.noalias() = detail::ConstMatMap<T>(cols.data(), out_len, kc) *
                 detail::ConstMatMap<T>(wv, kc, cout);
  for (std::size_t o = 0; o < out_len; ++o) {
    if (!detail::mask_valid(out_mask, o)) continue;
    if (has_bias)
      for (std::size_t c = 0; c < cout; ++c) out[o * cout + c] += bias.data()[c];
  }
  return Tensor<T>::from_op(Shape{out_len, cout}, std::move(out),
                            {x.node(), weight.node(), has_bias ? bias.node() : nullptr},
                            [=, cols = std::move(cols)](auto& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    auto* pb = self.parents[2].get();
    // Rows of masked outputs carry no gradient.
    std::vector<T> dy(self.grad);
    for (std::size_t o = 0; o < out_len; ++o)
      if (!detail::mask_valid(out_mask, o)) std::fill_n(dy.begin() + o * cout, cout, T(0));
    detail::ConstMatMap<T> dym(dy.data(), out_len, cout);
    if (pb && pb->requires_grad) {
      auto& gb = pb->ensure_grad();
      for (std::size_t o = 0; o < out_len; ++o)
        for (std::size_t c = 0; c < cout; ++c) gb[c] += dy[o * cout + c];
    }
    if (pw.requires_grad) {
      detail::MatMap<T>(pw.ensure_grad().data(), kc, cout).noalias() +=
          detail::ConstMatMap<T>(cols.data(), out_len, kc).transpose() * dym;
    }
    if (px.requires_grad) {
      detail::RowMatrix<T> dcols = dym * detail::ConstMatMap<T>(pw.value.data(), kc, cout).transpose();
      auto& gx = px.ensure_grad();
      for (std::size_t o = 0; o < out_len; ++o) {
        if (!detail::mask_valid(out_mask, o)) continue;
        for (std::size_t j = 0; j < k; ++j) {
          const std::ptrdiff_t s = src_index(o, j);
          if (s < 0) continue;
          T* g = gx.data() + static_cast<std::size_t>(s) * cin;
          const T* d = dcols.data() + o * kc + j * cin;
          for (std::size_t c = 0; c < cin; ++c) g[c] += d[c];
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Attention

/// Multi-head self-attention restricted to a window of `window` positions
/// centred on each query, over q, k, v of shape [T, D] (heads split D into
/// equal contiguous column blocks). Windows are truncated at the sequence
/// edges; masked keys are excluded and masked query rows produce zeros.
template <typename T>
Tensor<T> local_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                          const Mask& mask, std::size_t window, std::size_t heads) {
  require(window % 2 == 1, ErrorKind::kInvalidArgument, "local_attention: window must be odd");
  require(q.rank() == 2 && q.shape() == k.shape() && q.shape() == v.shape(),
          ErrorKind::kShapeMismatch, "local_attention: q, k, v must share shape [T, D]");
  const std::size_t len = q.dim(0), d = q.dim(1);
  require(heads >= 1 && d % heads == 0, ErrorKind::kInvalidArgument,
          "local_attention: heads must divide the embedding dimension");
  require(mask.empty() || mask.size() == len, ErrorKind::kShapeMismatch,
          "local_attention: mask length");
  const std::size_t dh = d / heads;
  const std::size_t radius = window / 2;
  const T scale_factor = T(1) / std::sqrt(static_cast<T>(dh));

  // probs[(t * heads + h) * window + (u - t + radius)]
  std::vector<T> probs(len * heads * window, T(0));
  std::vector<T> out(len * d, T(0));
  const T* qv = q.data().data();
  const T* kv = k.data().data();
  const T* vv = v.data().data();
  std::vector<T> scores(window);
  for (std::size_t t = 0; t < len; ++t) {
    if (!detail::mask_valid(mask, t)) continue;
    const std::size_t lo = t >= radius ? t - radius : 0;
    const std::size_t hi = std::min(len - 1, t + radius);
    for (std::size_t h = 0; h < heads; ++h) {
      const T* qrow = qv + t * d + h * dh;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t u = lo; u <= hi; ++u) {
        const std::size_t slot = u + radius - t;
        if (!detail::mask_valid(mask, u)) {
          scores[slot] = -std::numeric_limits<T>::infinity();
          continue;
        }
        const T* krow = kv + u * d + h * dh;
        T s = T(0);
        for (std::size_t c = 0; c < dh; ++c) s += qrow[c] * krow[c];
        scores[slot] = s * scale_factor;
        mx = std::max(mx, scores[slot]);
      }
      T* p = probs.data() + (t * heads + h) * window;
      T total = T(0);
      for (std::size_t u = lo; u <= hi; ++u) {
        const std::size_t slot = u + radius - t;
        p[slot] = detail::mask_valid(mask, u) ? std::exp(scores[slot] - mx) : T(0);
        total += p[slot];
      }
      T* orow = out.data() + t * d + h * dh;
      for (std::size_t u = lo; u <= hi; ++u) {
        const std::size_t slot = u + radius - t;
        p[slot] /= total;
        if (p[slot] == T(0)) continue;
        const T* vrow = vv + u * d + h * dh;
        for (std::size_t c = 0; c < dh; ++c) orow[c] += p[slot] * vrow[c];
      }
    }
  }

  return Tensor<T>::from_op(Shape{len, d}, std::move(out), {q.node(), k.node(), v.node()},
                            [probs = std::move(probs), mask, len, d, dh, heads, radius, window,
                             scale_factor](auto& self) {
    auto& pq = *self.parents[0];
    auto& pk = *self.parents[1];
    auto& pv = *self.parents[2];
    std::vector<T>* gq = pq.requires_grad ? &pq.ensure_grad() : nullptr;
    std::vector<T>* gk = pk.requires_grad ? &pk.ensure_grad() : nullptr;
    std::vector<T>* gv = pv.requires_grad ? &pv.ensure_grad() : nullptr;
    std::vector<T> dp(window);
    for (std::size_t t = 0; t < len; ++t) {
      if (!detail::mask_valid(mask, t)) continue;
      const std::size_t lo = t >= radius ? t - radius : 0;
      const std::size_t hi = std::min(len - 1, t + radius);
      for (std::size_t h = 0; h < heads; ++h) {
        const T* p = probs.data() + (t * heads + h) * window;
        const T* dout = self.grad.data() + t * d + h * dh;
        T dot = T(0);
        for (std::size_t u = lo; u <= hi; ++u) {
          const std::size_t slot = u + radius - t;
          if (p[slot] == T(0)) {
            dp[slot] = T(0);
            continue;
          }
          const T* vrow = pv.value.data() + u * d + h * dh;
          T s = T(0);
          for (std::size_t c = 0; c < dh; ++c) s += dout[c] * vrow[c];
          dp[slot] = s;
          dot += p[slot] * s;
          if (gv) {
            T* g = gv->data() + u * d + h * dh;
            for (std::size_t c = 0; c < dh; ++c) g[c] += p[slot] * dout[c];
          }
        }
        const T* qrow = pq.value.data() + t * d + h * dh;
        for (std::size_t u = lo; u <= hi; ++u) {
          const std::size_t slot = u + radius - t;
          if (p[slot] == T(0)) continue;
          const T ds = p[slot] * (dp[slot] - dot) * scale_factor;
          const T* krow = pk.value.data() + u * d + h * dh;
          if (gq) {
            T* g = gq->data() + t * d + h * dh;
            for (std::size_t c = 0; c < dh; ++c) g[c] += ds * krow[c];
          }
          if (gk) {
            T* g = gk->data() + u * d + h * dh;
            for (std::size_t c = 0; c < dh; ++c) g[c] += ds * qrow[c];
          }
        }
      }
    }
  });
}

/// Full multi-head self-attention composed from primitive ops
/// (matmul, masking, softmax_rows). Reference route for local_attention.
template <typename T>
Tensor<T> dense_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                          const Mask& mask, std::size_t heads) {
  const std::size_t d = q.dim(1);
  require(heads >= 1 && d % heads == 0, ErrorKind::kInvalidArgument,
          "dense_attention: heads must divide the embedding dimension");
  const std::size_t dh = d / heads;
  const T scale_factor = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<Tensor<T>> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    auto qh = slice_cols(q, h * dh, (h + 1) * dh);
    auto kh = slice_cols(k, h * dh, (h + 1) * dh);
    auto vh = slice_cols(v, h * dh, (h + 1) * dh);
    auto scores = mask_cols_neg_inf(scale(matmul(qh, transpose(kh)), scale_factor), mask);
    outs.push_back(matmul(softmax_rows(scores), vh));
  }
  return mask_rows(concat_cols(outs), mask);
}

// ---------------------------------------------------------------------------
// Resampling

/// Linear interpolation of a [N, D] table to `len` rows (align-corners
/// mapping: first and last rows are preserved).
template <typename T>
Tensor<T> interpolate_rows(const Tensor<T>& table, std::size_t len) {
  require(table.rank() == 2 && table.dim(0) >= 1 && len >= 1, ErrorKind::kShapeMismatch,
          "interpolate_rows: expected non-empty [N, D] table");
  const std::size_t n = table.dim(0), d = table.dim(1);
  std::vector<std::size_t> lo(len);
  std::vector<T> frac(len);
  for (std::size_t i = 0; i < len; ++i) {
    const T pos = (len == 1 || n == 1)
                      ? T(0)
                      : static_cast<T>(i) * static_cast<T>(n - 1) / static_cast<T>(len - 1);
    lo[i] = std::min(static_cast<std::size_t>(pos), n - 1);
    frac[i] = pos - static_cast<T>(lo[i]);
  }
  std::vector<T> out(len * d);
  for (std::size_t i = 0; i < len; ++i) {
    const std::size_t hi = std::min(lo[i] + 1, n - 1);
    for (std::size_t c = 0; c < d; ++c)
      out[i * d + c] = (T(1) - frac[i]) * table.data()[lo[i] * d + c] + frac[i] * table.data()[hi * d + c];
  }
  return Tensor<T>::from_op(Shape{len, d}, std::move(out), {table.node()},
                            [lo, frac, n, d, len](auto& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t hi = std::min(lo[i] + 1, n - 1);
      for (std::size_t c = 0; c < d; ++c) {
        g[lo[i] * d + c] += (T(1) - frac[i]) * self.grad[i * d + c];
        g[hi * d + c] += frac[i] * self.grad[i * d + c];
      }
    }
  });
}

/// First `len` rows of a matrix.
template <typename T>
Tensor<T> take_rows(const Tensor<T>& x, std::size_t len) {
  require(x.rank() == 2 && len <= x.dim(0), ErrorKind::kShapeMismatch, "take_rows: too many rows");
  const std::size_t d = x.dim(1);
  std::vector<T> out(x.data().begin(), x.data().begin() + len * d);
  return Tensor<T>::from_op(Shape{len, d}, std::move(out), {x.node()}, [](auto& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

}  // namespace actionformer

#endif  // ACTIONFORMER_OPS_HPP
