// Copyright 2026 The coldrec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Layer vocabulary: forward and backward passes over batched tensors. Every
// input carries a leading batch dimension; per-item shapes are (features)
// for vector layers and (channels, time) for time-axis layers.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "coldrec/neural/tensor.hpp"

namespace coldrec::nn {

enum class LayerKind { kDense, kConv1dTime, kMaxPoolTime, kRelu, kDropout, kBatchNorm, kL2Norm, kFlatten, kConcat };
enum class Padding { kSame, kValid };
enum class Mode { kTrain, kEval };

inline const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kConv1dTime: return "conv1d_time";
    case LayerKind::kMaxPoolTime: return "maxpool_time";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kDropout: return "dropout";
    case LayerKind::kBatchNorm: return "batchnorm";
    case LayerKind::kL2Norm: return "l2norm";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kConcat: return "concat";
  }
  return "?";
}

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::size_t units = 0;    // dense units, conv filters
  std::size_t width = 0;    // conv kernel width
  Padding padding = Padding::kSame;
  std::size_t pool = 0;     // fixed pooling window
  std::size_t pool_to = 0;  // adaptive pooling: exact number of output steps
  double rate = 0.0;        // dropout
  double momentum = 0.9;    // batchnorm running-stat momentum
  double eps = 1e-5;        // batchnorm variance epsilon
  std::size_t arity = 2;    // concat inputs

  static LayerSpec dense(std::size_t units) { return {.kind = LayerKind::kDense, .units = units}; }
  static LayerSpec conv1d_time(std::size_t filters, std::size_t width, Padding padding = Padding::kSame) {
    return {.kind = LayerKind::kConv1dTime, .units = filters, .width = width, .padding = padding};
  }
  static LayerSpec maxpool_time(std::size_t pool) { return {.kind = LayerKind::kMaxPoolTime, .pool = pool}; }
  /// Max pooling whose windows [floor(i*T/n), ceil((i+1)*T/n)) produce exactly n steps.
  static LayerSpec maxpool_time_to(std::size_t steps) { return {.kind = LayerKind::kMaxPoolTime, .pool_to = steps}; }
  static LayerSpec relu() { return {.kind = LayerKind::kRelu}; }
  static LayerSpec dropout(double rate) { return {.kind = LayerKind::kDropout, .rate = rate}; }
  static LayerSpec batchnorm(double momentum = 0.9, double eps = 1e-5) {
    return {.kind = LayerKind::kBatchNorm, .momentum = momentum, .eps = eps};
  }
  static LayerSpec l2norm() { return {.kind = LayerKind::kL2Norm}; }
  static LayerSpec flatten() { return {.kind = LayerKind::kFlatten}; }
  static LayerSpec concat(std::size_t arity = 2) { return {.kind = LayerKind::kConcat, .arity = arity}; }

  void validate() const {
    auto fail = [&](const std::string& why) { throw UsageError(std::string(kind_name(kind)) + ": " + why); };
    switch (kind) {
      case LayerKind::kDense: if (units < 1) fail("units must be >= 1"); break;
      case LayerKind::kConv1dTime:
        if (units < 1 || width < 1) fail("filters and width must be >= 1");
        break;
      case LayerKind::kMaxPoolTime:
        if ((pool == 0) == (pool_to == 0)) fail("exactly one of pool / pool_to must be set");
        break;
      case LayerKind::kDropout: if (!(rate >= 0.0 && rate < 1.0)) fail("rate must lie in [0, 1)"); break;
      case LayerKind::kBatchNorm:
        if (!(eps > 0.0) || !(momentum >= 0.0 && momentum <= 1.0)) fail("bad eps/momentum");
        break;
      case LayerKind::kConcat: if (arity < 2) fail("arity must be >= 2"); break;
      default: break;
    }
  }
};

/// Trainable tensors plus non-trainable state (batchnorm running statistics).
struct LayerParams {
  std::vector<Tensor> weights;
  std::vector<Tensor> state;
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

inline std::vector<std::string> weight_names(LayerKind k) {
  switch (k) {
    case LayerKind::kDense:
    case LayerKind::kConv1dTime: return {"W", "b"};
    case LayerKind::kBatchNorm: return {"gamma", "beta"};
    default: return {};
  }
}

inline std::vector<std::string> state_names(LayerKind k) {
  if (k == LayerKind::kBatchNorm) return {"running_mean", "running_var"};
  return {};
}

struct LayerCache {
  Tensor input;
  Tensor output;
  Tensor aux;                       // dropout scale mask, batchnorm x-hat
  std::vector<double> stats;        // batchnorm inverse std, l2norm norms
  std::vector<std::size_t> argmax;  // maxpool source index per output element
  Mode mode = Mode::kEval;
  // batchnorm running statistics after this step (train mode only)
  std::vector<double> new_mean, new_var;
};

// ---------------------------------------------------------------------------
// Shapes and initialization

inline std::size_t conv_out_length(const LayerSpec& s, std::size_t t) {
  if (s.padding == Padding::kSame) return t;
  if (t < s.width) throw ShapeError("conv1d_time: input shorter than the kernel");
  return t - s.width + 1;
}

inline std::size_t pool_out_length(const LayerSpec& s, std::size_t t) {
  if (s.pool_to) {
    if (t < 1) throw ShapeError("maxpool_time: empty input");
    return s.pool_to;
  }
  if (t / s.pool < 1) throw ShapeError("maxpool_time: input of " + std::to_string(t) + " steps too short for pool " + std::to_string(s.pool));
  return t / s.pool;
}

/// Per-item output shape; throws ShapeError when `in` is incompatible.
inline Shape output_shape(const LayerSpec& s, const Shape& in) {
  s.validate();
  auto need_rank = [&](std::size_t r) {
    if (in.size() != r)
      throw ShapeError(std::string(kind_name(s.kind)) + ": expected rank-" + std::to_string(r) + " input, got " + shape_string(in));
  };
  switch (s.kind) {
    case LayerKind::kDense: need_rank(1); return {s.units};
    case LayerKind::kConv1dTime: need_rank(2); return {s.units, conv_out_length(s, in[1])};
    case LayerKind::kMaxPoolTime: need_rank(2); return {in[0], pool_out_length(s, in[1])};
    case LayerKind::kBatchNorm:
    case LayerKind::kL2Norm: need_rank(1); return in;
    case LayerKind::kFlatten: need_rank(2); return {in[0] * in[1]};
    case LayerKind::kRelu:
    case LayerKind::kDropout: return in;
    case LayerKind::kConcat: throw ShapeError("concat takes several inputs; use concat_shape");
  }
  return in;
}

inline Shape concat_shape(const std::vector<Shape>& ins) {
  std::size_t total = 0;
  for (const auto& s : ins) {
    if (s.size() != 1) throw ShapeError("concat: inputs must be vectors, got " + shape_string(s));
    total += s[0];
  }
  return {total};
}

/// Glorot-uniform weights, zero biases, unit batchnorm gain.
inline LayerParams init_params(const LayerSpec& s, const Shape& in, std::mt19937_64& rng) {
  LayerParams p;
  auto glorot = [&](Shape shape, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Tensor t(std::move(shape));
    for (auto& x : t.data) x = dist(rng);
    return t;
  };
  switch (s.kind) {
    case LayerKind::kDense:
      p.weights.push_back(glorot({s.units, in[0]}, static_cast<double>(in[0]), static_cast<double>(s.units)));
      p.weights.emplace_back(Shape{s.units});
      break;
    case LayerKind::kConv1dTime:
      p.weights.push_back(glorot({s.units, in[0], s.width}, static_cast<double>(in[0] * s.width),
                                 static_cast<double>(s.units * s.width)));
      p.weights.emplace_back(Shape{s.units});
      break;
    case LayerKind::kBatchNorm:
      p.weights.emplace_back(Shape{in[0]}, 1.0);
      p.weights.emplace_back(Shape{in[0]}, 0.0);
      p.state.emplace_back(Shape{in[0]}, 0.0);
      p.state.emplace_back(Shape{in[0]}, 1.0);
      break;
    default: break;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMatrix>;
using CMapM = Eigen::Map<const RowMatrix>;

inline CMapM as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return CMapM(t.ptr(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline MapM as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MapM(t.ptr(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline std::size_t pad_left(const LayerSpec& s) { return s.padding == Padding::kSame ? (s.width - 1) / 2 : 0; }

inline void pool_window(const LayerSpec& s, std::size_t t_in, std::size_t i, std::size_t& lo, std::size_t& hi) {
  if (s.pool_to) {
    lo = i * t_in / s.pool_to;
    hi = ((i + 1) * t_in + s.pool_to - 1) / s.pool_to;
  } else {
    lo = i * s.pool;
    hi = lo + s.pool;
  }
}

inline void check_finite(const Tensor& t, const LayerSpec& s) {
  for (double x : t.data)
    if (!std::isfinite(x)) throw NumericalError(std::string(kind_name(s.kind)) + ": non-finite activation");
}

}  // namespace detail

/// Applies one single-input layer to a batch. `seed` drives the dropout mask;
/// batchnorm running-stat updates are left in the cache (see net training).
inline Tensor layer_forward(const LayerSpec& s, const LayerParams& p, const Tensor& x, Mode mode,
                            std::uint64_t seed, LayerCache* cache = nullptr) {
  if (x.rank() < 2) throw ShapeError(std::string(kind_name(s.kind)) + ": input needs a batch dimension");
  const Shape item_out = output_shape(s, x.item_shape());
  const std::size_t batch = x.batch();
  Shape out_shape{batch};
  out_shape.insert(out_shape.end(), item_out.begin(), item_out.end());
  Tensor y(out_shape);
  LayerCache local;
  LayerCache& c = cache ? *cache : local;
  c.mode = mode;

  switch (s.kind) {
    case LayerKind::kDense: {
      const std::size_t in = x.item_size();
      if (p.weights.size() != 2 || p.weights[0].shape != Shape{s.units, in})
        throw ShapeError("dense: parameter shape mismatch");
      auto w = detail::as_matrix(p.weights[0], s.units, in);
      auto b = detail::as_matrix(p.weights[1], 1, s.units);
      auto out = detail::as_matrix(y, batch, s.units);
      out.noalias() = detail::as_matrix(x, batch, in) * w.transpose();
      out.rowwise() += b.row(0);
      break;
    }
    case LayerKind::kConv1dTime: {
      const std::size_t channels = x.dim(1), t_in = x.dim(2), t_out = item_out[1];
      if (p.weights.size() != 2 || p.weights[0].shape != Shape{s.units, channels, s.width})
        throw ShapeError("conv1d_time: parameter shape mismatch");
      const std::size_t pad = detail::pad_left(s);
      const double* w = p.weights[0].ptr();
      for (std::size_t b = 0; b < batch; ++b) {
        const double* xb = x.ptr() + b * channels * t_in;
        double* yb = y.ptr() + b * s.units * t_out;
        for (std::size_t f = 0; f < s.units; ++f) {
          double* yf = yb + f * t_out;
          std::fill(yf, yf + t_out, p.weights[1][f]);
          for (std::size_t ch = 0; ch < channels; ++ch) {
            const double* xc = xb + ch * t_in;
            for (std::size_t k = 0; k < s.width; ++k) {
              const double wk = w[(f * channels + ch) * s.width + k];
              // output t reads input t + k - pad
              const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(pad);
              const std::size_t lo = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
              const std::ptrdiff_t hi_signed = static_cast<std::ptrdiff_t>(t_in) - shift;
              const std::size_t hi = std::min<std::size_t>(t_out, hi_signed > 0 ? static_cast<std::size_t>(hi_signed) : 0);
              for (std::size_t t = lo; t < hi; ++t) yf[t] += wk * xc[static_cast<std::ptrdiff_t>(t) + shift];
            }
          }
        }
      }
      break;
    }
    case LayerKind::kMaxPoolTime: {
      const std::size_t channels = x.dim(1), t_in = x.dim(2), t_out = item_out[1];
      c.argmax.assign(y.size(), 0);
      for (std::size_t row = 0; row < batch * channels; ++row) {
        const double* xr = x.ptr() + row * t_in;
        for (std::size_t i = 0; i < t_out; ++i) {
          std::size_t lo, hi;
          detail::pool_window(s, t_in, i, lo, hi);
          std::size_t best = lo;
          for (std::size_t t = lo + 1; t < hi; ++t)
            if (xr[t] > xr[best]) best = t;
          y[row * t_out + i] = xr[best];
          c.argmax[row * t_out + i] = row * t_in + best;
        }
      }
      break;
    }
    case LayerKind::kRelu:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
      break;
    case LayerKind::kDropout: {
      if (mode == Mode::kEval || s.rate == 0.0) {
        y.data = x.data;
        c.aux = Tensor(x.shape, 1.0);
        break;
      }
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      c.aux = Tensor(x.shape);
      const double keep_scale = 1.0 / (1.0 - s.rate);
      for (std::size_t i = 0; i < x.size(); ++i) {
        c.aux[i] = u(rng) < s.rate ? 0.0 : keep_scale;
        y[i] = x[i] * c.aux[i];
      }
      break;
    }
    case LayerKind::kBatchNorm: {
      const std::size_t features = x.dim(1);
      if (p.weights.size() != 2 || p.weights[0].shape != Shape{features})
        throw ShapeError("batchnorm: parameter shape mismatch");
      const auto& gamma = p.weights[0];
      const auto& beta = p.weights[1];
      c.aux = Tensor(x.shape);
      c.stats.assign(features, 0.0);
      if (mode == Mode::kTrain) {
        c.new_mean.assign(features, 0.0);
        c.new_var.assign(features, 0.0);
        for (std::size_t f = 0; f < features; ++f) {
          double mean = 0.0;
          for (std::size_t b = 0; b < batch; ++b) mean += x[b * features + f];
          mean /= static_cast<double>(batch);
          double var = 0.0;
          for (std::size_t b = 0; b < batch; ++b) {
            const double d = x[b * features + f] - mean;
            var += d * d;
          }
          var /= static_cast<double>(batch);
          const double inv = 1.0 / std::sqrt(var + s.eps);
          c.stats[f] = inv;
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t i = b * features + f;
            c.aux[i] = (x[i] - mean) * inv;
            y[i] = gamma[f] * c.aux[i] + beta[f];
          }
          c.new_mean[f] = s.momentum * p.state[0][f] + (1.0 - s.momentum) * mean;
          c.new_var[f] = s.momentum * p.state[1][f] + (1.0 - s.momentum) * var;
        }
      } else {
        for (std::size_t f = 0; f < features; ++f) {
          const double inv = 1.0 / std::sqrt(p.state[1][f] + s.eps);
          c.stats[f] = inv;
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t i = b * features + f;
            c.aux[i] = (x[i] - p.state[0][f]) * inv;
            y[i] = gamma[f] * c.aux[i] + beta[f];
          }
        }
      }
      break;
    }
    case LayerKind::kL2Norm: {
      const std::size_t features = x.dim(1);
      c.stats.assign(batch, 0.0);
      for (std::size_t b = 0; b < batch; ++b) {
        double sq = 0.0;
        for (std::size_t f = 0; f < features; ++f) sq += x[b * features + f] * x[b * features + f];
        const double n = std::max(std::sqrt(sq), 1e-12);
        c.stats[b] = n;
        for (std::size_t f = 0; f < features; ++f) y[b * features + f] = x[b * features + f] / n;
      }
      break;
    }
    case LayerKind::kFlatten:
      y.data = x.data;
      break;
    case LayerKind::kConcat:
      throw ShapeError("concat is applied through concat_forward");
  }
  detail::check_finite(y, s);
  if (cache) {
    c.input = x;
    c.output = y;
  }
  return y;
}

inline Tensor concat_forward(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  std::vector<Shape> shapes;
  for (const auto& x : xs) {
    if (x.rank() != 2 || x.batch() != xs[0].batch()) throw ShapeError("concat: inputs must be (batch, features) with equal batch");
    shapes.push_back(x.item_shape());
  }
  const std::size_t batch = xs[0].batch(), total = concat_shape(shapes)[0];
  Tensor y({batch, total});
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t offset = 0;
    for (const auto& x : xs) {
      const std::size_t n = x.dim(1);
      std::copy_n(x.ptr() + b * n, n, y.ptr() + b * total + offset);
      offset += n;
    }
  }
  return y;
}

/// Splits a concat output gradient back into per-input gradients.
inline std::vector<Tensor> concat_backward(const Tensor& grad, const std::vector<std::size_t>& widths) {
  const std::size_t batch = grad.batch(), total = grad.dim(1);
  std::vector<Tensor> out;
  std::size_t offset = 0;
  for (std::size_t n : widths) {
    Tensor g({batch, n});
    for (std::size_t b = 0; b < batch; ++b) std::copy_n(grad.ptr() + b * total + offset, n, g.ptr() + b * n);
    out.push_back(std::move(g));
    offset += n;
  }
  if (offset != total) throw ShapeError("concat_backward: widths do not cover the gradient");
  return out;
}

// ---------------------------------------------------------------------------
// Backward

struct LayerGradients {
  Tensor input;
  std::vector<Tensor> weights;  // aligned with LayerParams::weights
};

/// Exact gradients of the forward map recorded in `c`, in the same mode.
inline LayerGradients layer_backward(const LayerSpec& s, const LayerParams& p, const LayerCache& c,
                                     const Tensor& g) {
  if (g.shape != c.output.shape)
    throw ShapeError(std::string(kind_name(s.kind)) + ": gradient shape " + shape_string(g.shape) +
                     " does not match cached output " + shape_string(c.output.shape));
  const Tensor& x = c.input;
  const std::size_t batch = x.batch();
  LayerGradients out;
  out.input = Tensor(x.shape);
  Tensor& dx = out.input;

  switch (s.kind) {
    case LayerKind::kDense: {
      const std::size_t in = x.item_size();
      auto gm = detail::as_matrix(g, batch, s.units);
      Tensor dw({s.units, in}), db({s.units});
      detail::as_matrix(dw, s.units, in).noalias() = gm.transpose() * detail::as_matrix(x, batch, in);
      detail::as_matrix(db, 1, s.units).noalias() = gm.colwise().sum();
      detail::as_matrix(dx, batch, in).noalias() = gm * detail::as_matrix(p.weights[0], s.units, in);
      out.weights.push_back(std::move(dw));
      out.weights.push_back(std::move(db));
      break;
    }
    case LayerKind::kConv1dTime: {
      const std::size_t channels = x.dim(1), t_in = x.dim(2), t_out = g.dim(2);
      const std::size_t pad = detail::pad_left(s);
      Tensor dw(p.weights[0].shape), db({s.units});
      const double* w = p.weights[0].ptr();
      for (std::size_t b = 0; b < batch; ++b) {
        const double* xb = x.ptr() + b * channels * t_in;
        double* dxb = dx.ptr() + b * channels * t_in;
        const double* gb = g.ptr() + b * s.units * t_out;
        for (std::size_t f = 0; f < s.units; ++f) {
          const double* gf = gb + f * t_out;
          double bias_grad = 0.0;
          for (std::size_t t = 0; t < t_out; ++t) bias_grad += gf[t];
          db[f] += bias_grad;
          for (std::size_t ch = 0; ch < channels; ++ch) {
            const double* xc = xb + ch * t_in;
            double* dxc = dxb + ch * t_in;
            for (std::size_t k = 0; k < s.width; ++k) {
              const std::size_t widx = (f * channels + ch) * s.width + k;
              const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(pad);
              const std::size_t lo = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
              const std::ptrdiff_t hi_signed = static_cast<std::ptrdiff_t>(t_in) - shift;
              const std::size_t hi = std::min<std::size_t>(t_out, hi_signed > 0 ? static_cast<std::size_t>(hi_signed) : 0);
              const double wk = w[widx];
              double acc = 0.0;
              for (std::size_t t = lo; t < hi; ++t) {
                acc += gf[t] * xc[static_cast<std::ptrdiff_t>(t) + shift];
                dxc[static_cast<std::ptrdiff_t>(t) + shift] += wk * gf[t];
              }
              dw[widx] += acc;
            }
          }
        }
      }
      out.weights.push_back(std::move(dw));
      out.weights.push_back(std::move(db));
      break;
    }
    case LayerKind::kMaxPoolTime:
      for (std::size_t i = 0; i < g.size(); ++i) dx[c.argmax[i]] += g[i];
      break;
    case LayerKind::kRelu:
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] = x[i] > 0.0 ? g[i] : 0.0;
      break;
    case LayerKind::kDropout:
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g[i] * c.aux[i];
      break;
    case LayerKind::kBatchNorm: {
      const std::size_t features = x.dim(1);
      const auto& gamma = p.weights[0];
      Tensor dgamma({features}), dbeta({features});
      for (std::size_t f = 0; f < features; ++f) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
          const std::size_t i = b * features + f;
          sum_g += g[i];
          sum_gx += g[i] * c.aux[i];
        }
        dgamma[f] = sum_gx;
        dbeta[f] = sum_g;
        const double inv = c.stats[f];
        if (c.mode == Mode::kTrain) {
          const double n = static_cast<double>(batch);
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t i = b * features + f;
            dx[i] = gamma[f] * inv * (g[i] - sum_g / n - c.aux[i] * sum_gx / n);
          }
        } else {
          for (std::size_t b = 0; b < batch; ++b) dx[b * features + f] = g[b * features + f] * gamma[f] * inv;
        }
      }
      out.weights.push_back(std::move(dgamma));
      out.weights.push_back(std::move(dbeta));
      break;
    }
    case LayerKind::kL2Norm: {
      const std::size_t features = x.dim(1);
      for (std::size_t b = 0; b < batch; ++b) {
        const double n = c.stats[b];
        const double* yb = c.output.ptr() + b * features;
        const double* gb = g.ptr() + b * features;
        double* dxb = dx.ptr() + b * features;
        if (n <= 1e-12) {
          for (std::size_t f = 0; f < features; ++f) dxb[f] = gb[f] / 1e-12;
          continue;
        }
        double yg = 0.0;
        for (std::size_t f = 0; f < features; ++f) yg += yb[f] * gb[f];
        for (std::size_t f = 0; f < features; ++f) dxb[f] = (gb[f] - yb[f] * yg) / n;
      }
      break;
    }
    case LayerKind::kFlatten:
      dx.data = g.data;
      break;
    case LayerKind::kConcat:
      throw ShapeError("concat is differentiated through concat_backward");
  }
  return out;
}

}  // namespace coldrec::nn
