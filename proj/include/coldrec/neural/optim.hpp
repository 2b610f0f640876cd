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

// Cosine-proximity loss, Adam, and finite-difference gradient verification.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "coldrec/neural/network.hpp"

namespace coldrec::nn {

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// -<pred, target> / (max(|pred|, 1e-12) * |target|) and its gradient in pred.
inline LossAndGrad cosine_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw ShapeError("cosine_loss: vector lengths differ");
  double pt = 0.0, pp = 0.0, tt = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pt += pred[i] * target[i];
    pp += pred[i] * pred[i];
    tt += target[i] * target[i];
  }
  if (tt == 0.0) throw DataError("cosine_loss: zero target vector");
  const double tn = std::sqrt(tt);
  const double raw = std::sqrt(pp);
  const double pn = std::max(raw, 1e-12);
  LossAndGrad out;
  out.loss = -pt / (pn * tn);
  out.grad.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    out.grad[i] = -target[i] / (pn * tn);
    if (raw > 1e-12) out.grad[i] += pt * pred[i] / (pn * pn * pn * tn);
  }
  return out;
}

/// Mean cosine loss over a (batch, k) prediction and matching target rows;
/// the gradient is that of the mean.
inline std::pair<double, Tensor> cosine_loss_batch(const Tensor& pred, const Tensor& target) {
  if (pred.shape != target.shape || pred.rank() != 2) throw ShapeError("cosine_loss_batch: shape mismatch");
  const std::size_t batch = pred.batch(), k = pred.dim(1);
  Tensor grad(pred.shape);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    auto r = cosine_loss({pred.ptr() + b * k, k}, {target.ptr() + b * k, k});
    total += r.loss;
    for (std::size_t i = 0; i < k; ++i) grad[b * k + i] = r.grad[i] / static_cast<double>(batch);
  }
  return {total / static_cast<double>(batch), std::move(grad)};
}

struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  Gradients m;
  Gradients v;

  static AdamState zeros_like(const ParamSet& params) {
    AdamState s;
    for (const auto& layer : params.layers) {
      s.m.emplace_back();
      for (const auto& w : layer.weights) s.m.back().emplace_back(w.shape);
    }
    s.v = s.m;
    return s;
  }
};

/// One bias-corrected Adam update of every trainable tensor.
inline void adam_step(ParamSet& params, const Gradients& grads, AdamState& state) {
  if (state.m.empty()) {
    auto fresh = AdamState::zeros_like(params);
    state.m = std::move(fresh.m);
    state.v = std::move(fresh.v);
  }
  if (grads.size() != params.layers.size() || state.m.size() != params.layers.size())
    throw ShapeError("adam_step: gradient layout does not match parameters");
  ++state.t;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& weights = params.layers[l].weights;
    if (grads[l].size() != weights.size()) throw ShapeError("adam_step: gradient layout does not match parameters");
    for (std::size_t w = 0; w < weights.size(); ++w) {
      auto& theta = weights[w].data;
      const auto& g = grads[l][w].data;
      auto& m = state.m[l][w].data;
      auto& v = state.v[l][w].data;
      if (g.size() != theta.size()) throw ShapeError("adam_step: gradient shape mismatch");
      for (std::size_t i = 0; i < theta.size(); ++i) {
        m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
        v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
        theta[i] -= state.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
      }
    }
  }
}

/// Mean cosine loss of a forward pass; batch-mode layers run in `mode` with a
/// fixed seed so dropout masks stay frozen across evaluations.
inline double net_loss(const Network& net, const ParamSet& params, const std::vector<Tensor>& inputs,
                       const Tensor& target, Mode mode, std::uint64_t seed) {
  return cosine_loss_batch(net_forward(net, params, inputs, mode, seed), target).first;
}

struct GradientCheckOptions {
  double h = 1e-5;
  Mode mode = Mode::kTrain;
  std::uint64_t seed = 0;
  /// Coordinates checked per network; all of them when the network is smaller.
  std::size_t max_coordinates = 400;
};

/// Largest |a - n| / max(|a|, |n|, 1e-8) between analytic gradients and central
/// differences (f(x + h) - f(x - h)) / 2h over sampled parameter coordinates.
inline double gradient_check(const Network& net, const ParamSet& params, const std::vector<Tensor>& inputs,
                             const Tensor& target, const GradientCheckOptions& opt = {},
                             const Gradients* override_grads = nullptr) {
  ForwardTrace trace;
  const Tensor out = net_forward(net, params, inputs, opt.mode, opt.seed, &trace);
  const auto [loss, grad_out] = cosine_loss_batch(out, target);
  (void)loss;
  const Gradients analytic = override_grads ? *override_grads : net_backward(net, params, trace, grad_out);

  struct Coord {
    std::size_t layer, tensor, index;
  };
  std::vector<Coord> coords;
  for (std::size_t l = 0; l < params.layers.size(); ++l)
    for (std::size_t w = 0; w < params.layers[l].weights.size(); ++w)
      for (std::size_t i = 0; i < params.layers[l].weights[w].size(); ++i) coords.push_back({l, w, i});
  if (coords.size() > opt.max_coordinates) {
    std::mt19937_64 rng(sub_seed(opt.seed, "gradient_check"));
    for (std::size_t i = 0; i < opt.max_coordinates; ++i) {
      const std::size_t j = std::uniform_int_distribution<std::size_t>(i, coords.size() - 1)(rng);
      std::swap(coords[i], coords[j]);
    }
    coords.resize(opt.max_coordinates);
  }

  ParamSet probe = params;
  double worst = 0.0;
  for (const auto& c : coords) {
    double& theta = probe.layers[c.layer].weights[c.tensor].data[c.index];
    const double saved = theta;
    theta = saved + opt.h;
    const double up = net_loss(net, probe, inputs, target, opt.mode, opt.seed);
    theta = saved - opt.h;
    const double down = net_loss(net, probe, inputs, target, opt.mode, opt.seed);
    theta = saved;
    const double numeric = (up - down) / (2.0 * opt.h);
    const double a = analytic[c.layer][c.tensor].data[c.index];
    const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace coldrec::nn
