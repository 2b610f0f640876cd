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

// Layer composition: one or more input branches, optionally merged by a
// concat layer at the head of the trunk. The embedding tap marks the
// activation exported as a learned feature vector.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "coldrec/matrix_io.hpp"
#include "coldrec/neural/layers.hpp"

namespace coldrec::nn {

struct Branch {
  std::string name;
  Shape input;  // per-item shape
  std::vector<LayerSpec> layers;
};

struct NetworkSpec {
  std::vector<Branch> branches;
  std::vector<LayerSpec> trunk;
  /// Embedding = output of trunk layer `tap - 1` (the trunk input when 0).
  std::size_t tap = 0;
};

struct ParamSet {
  std::vector<LayerParams> layers;  // one entry per layer position

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& l : layers)
      for (const auto& w : l.weights) n += w.size();
    return n;
  }
  friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

/// Per-position weight gradients, aligned with ParamSet.
using Gradients = std::vector<std::vector<Tensor>>;

struct ForwardTrace {
  std::vector<LayerCache> caches;
  std::vector<std::size_t> concat_widths;
  Tensor embedding;
};

/// A shape-checked NetworkSpec. Layer positions enumerate branch layers in
/// branch order, then the trunk.
class Network {
 public:
  explicit Network(NetworkSpec spec) : spec_(std::move(spec)) {
    if (spec_.branches.empty()) throw UsageError("network needs at least one input branch");
    const bool merged = spec_.branches.size() > 1;
    std::vector<Shape> branch_out;
    for (const auto& br : spec_.branches) {
      if (br.input.empty()) throw UsageError("branch '" + br.name + "' has no input shape");
      Shape s = br.input;
      for (const auto& l : br.layers) {
        if (l.kind == LayerKind::kConcat) throw ShapeError("concat may only open the trunk");
        layers_.push_back(l);
        in_shapes_.push_back(s);
        s = nn::output_shape(l, s);
      }
      branch_out.push_back(s);
    }
    trunk_start_ = layers_.size();
    Shape s;
    std::size_t first = 0;
    if (merged) {
      if (spec_.trunk.empty() || spec_.trunk[0].kind != LayerKind::kConcat ||
          spec_.trunk[0].arity != spec_.branches.size())
        throw ShapeError("multi-branch networks must open the trunk with a concat of every branch");
      s = concat_shape(branch_out);
      layers_.push_back(spec_.trunk[0]);
      in_shapes_.push_back(branch_out[0]);
      first = 1;
    } else {
      s = branch_out[0];
    }
    if (spec_.tap == 0 && merged) throw UsageError("embedding tap must follow the concat");
    if (spec_.tap > spec_.trunk.size()) throw UsageError("embedding tap beyond the last layer");
    if (spec_.tap == first) embedding_shape_ = s;
    for (std::size_t i = first; i < spec_.trunk.size(); ++i) {
      const auto& l = spec_.trunk[i];
      if (l.kind == LayerKind::kConcat) throw ShapeError("concat may only open the trunk");
      layers_.push_back(l);
      in_shapes_.push_back(s);
      s = nn::output_shape(l, s);
      if (i + 1 == spec_.tap) embedding_shape_ = s;
    }
    output_shape_ = s;
  }

  const NetworkSpec& spec() const { return spec_; }
  std::size_t num_layers() const { return layers_.size(); }
  const LayerSpec& layer(std::size_t pos) const { return layers_[pos]; }
  const Shape& input_shape_at(std::size_t pos) const { return in_shapes_[pos]; }
  std::size_t trunk_start() const { return trunk_start_; }
  std::size_t num_inputs() const { return spec_.branches.size(); }
  const Shape& output_shape() const { return output_shape_; }
  const Shape& embedding_shape() const { return embedding_shape_; }
  std::size_t output_dim() const { return shape_size(output_shape_); }
  std::size_t embedding_dim() const { return shape_size(embedding_shape_); }

  /// Layer positions of branch `b` as [first, last).
  std::pair<std::size_t, std::size_t> branch_range(std::size_t b) const {
    std::size_t start = 0;
    for (std::size_t i = 0; i < b; ++i) start += spec_.branches[i].layers.size();
    return {start, start + spec_.branches[b].layers.size()};
  }

 private:
  NetworkSpec spec_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> in_shapes_;
  std::size_t trunk_start_ = 0;
  Shape output_shape_;
  Shape embedding_shape_;
};

inline ParamSet init_params(const Network& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamSet p;
  for (std::size_t pos = 0; pos < net.num_layers(); ++pos) {
    const auto& l = net.layer(pos);
    p.layers.push_back(l.kind == LayerKind::kConcat ? LayerParams{} : init_params(l, net.input_shape_at(pos), rng));
  }
  return p;
}

namespace detail {

inline Tensor run_span(const Network& net, const ParamSet& params, std::size_t first, std::size_t last, Tensor x,
                       Mode mode, std::uint64_t seed, ForwardTrace* trace) {
  for (std::size_t pos = first; pos < last; ++pos)
    x = layer_forward(net.layer(pos), params.layers[pos], x, mode, sub_seed(seed, pos),
                      trace ? &trace->caches[pos] : nullptr);
  return x;
}

inline void check_inputs(const Network& net, const ParamSet& params, const std::vector<Tensor>& inputs) {
  if (params.layers.size() != net.num_layers()) throw ShapeError("parameter set does not match the network");
  if (inputs.size() != net.num_inputs())
    throw ShapeError("network expects " + std::to_string(net.num_inputs()) + " inputs, got " +
                     std::to_string(inputs.size()));
  for (std::size_t b = 0; b < inputs.size(); ++b)
    if (inputs[b].rank() < 2 || inputs[b].item_shape() != net.spec().branches[b].input)
      throw ShapeError("input " + std::to_string(b) + " has shape " + shape_string(inputs[b].shape) +
                       ", expected (batch)" + shape_string(net.spec().branches[b].input));
}

/// Runs every branch and the concat; returns the trunk input and the first
/// trunk position still to run.
inline std::pair<Tensor, std::size_t> run_branches(const Network& net, const ParamSet& params,
                                                   const std::vector<Tensor>& inputs, Mode mode, std::uint64_t seed,
                                                   ForwardTrace* trace) {
  std::vector<Tensor> branch_out;
  for (std::size_t b = 0; b < net.num_inputs(); ++b) {
    auto [first, last] = net.branch_range(b);
    branch_out.push_back(run_span(net, params, first, last, inputs[b], mode, seed, trace));
  }
  std::size_t pos = net.trunk_start();
  if (net.num_inputs() == 1) return {std::move(branch_out[0]), pos};
  if (trace)
    for (const auto& t : branch_out) trace->concat_widths.push_back(t.dim(1));
  Tensor x = concat_forward(branch_out);
  if (trace) trace->caches[pos].output = x;
  return {std::move(x), pos + 1};
}

}  // namespace detail

/// Runs the network over a batch. With `trace` set, records per-layer caches
/// and the embedding activation for net_backward.
inline Tensor net_forward(const Network& net, const ParamSet& params, const std::vector<Tensor>& inputs, Mode mode,
                          std::uint64_t seed, ForwardTrace* trace = nullptr) {
  detail::check_inputs(net, params, inputs);
  if (trace) {
    trace->caches.assign(net.num_layers(), LayerCache{});
    trace->concat_widths.clear();
  }
  auto [x, pos] = detail::run_branches(net, params, inputs, mode, seed, trace);
  const std::size_t tap_pos = net.trunk_start() + net.spec().tap;
  for (;; ++pos) {
    if (trace && pos == tap_pos) trace->embedding = x;
    if (pos == net.num_layers()) break;
    x = layer_forward(net.layer(pos), params.layers[pos], x, mode, sub_seed(seed, pos),
                      trace ? &trace->caches[pos] : nullptr);
  }
  return x;
}

/// Eval-mode activations at the embedding tap.
inline Tensor net_embed(const Network& net, const ParamSet& params, const std::vector<Tensor>& inputs) {
  detail::check_inputs(net, params, inputs);
  auto [x, pos] = detail::run_branches(net, params, inputs, Mode::kEval, 0, nullptr);
  return detail::run_span(net, params, pos, net.trunk_start() + net.spec().tap, std::move(x), Mode::kEval, 0,
                          nullptr);
}

/// Reverse pass through a recorded forward trace.
inline Gradients net_backward(const Network& net, const ParamSet& params, const ForwardTrace& trace,
                              const Tensor& grad_output) {
  if (trace.caches.size() != net.num_layers()) throw ShapeError("trace does not match the network");
  Gradients grads(net.num_layers());
  Tensor g = grad_output;
  const bool merged = net.num_inputs() > 1;
  const std::size_t trunk_first = net.trunk_start() + (merged ? 1 : 0);
  for (std::size_t pos = net.num_layers(); pos-- > trunk_first;) {
    auto lg = layer_backward(net.layer(pos), params.layers[pos], trace.caches[pos], g);
    grads[pos] = std::move(lg.weights);
    g = std::move(lg.input);
  }
  std::vector<Tensor> branch_grads;
  if (merged) {
    branch_grads = concat_backward(g, trace.concat_widths);
  } else {
    branch_grads.push_back(std::move(g));
  }
  for (std::size_t b = net.num_inputs(); b-- > 0;) {
    auto [first, last] = net.branch_range(b);
    Tensor gb = std::move(branch_grads[b]);
    for (std::size_t pos = last; pos-- > first;) {
      auto lg = layer_backward(net.layer(pos), params.layers[pos], trace.caches[pos], gb);
      grads[pos] = std::move(lg.weights);
      gb = std::move(lg.input);
    }
  }
  return grads;
}

/// Moves the batchnorm running statistics of a train-mode pass into `params`.
inline void commit_running_stats(const Network& net, ParamSet& params, const ForwardTrace& trace) {
  for (std::size_t pos = 0; pos < net.num_layers(); ++pos) {
    const auto& c = trace.caches[pos];
    if (net.layer(pos).kind != LayerKind::kBatchNorm || c.new_mean.empty()) continue;
    params.layers[pos].state[0].data = c.new_mean;
    params.layers[pos].state[1].data = c.new_var;
  }
}

// ---------------------------------------------------------------------------
// Persistence: one CSMX section per tensor, named "L<pos>.<kind>.<tensor>".

inline std::vector<MatrixSection> param_sections(const Network& net, const ParamSet& params) {
  std::vector<MatrixSection> out;
  auto add = [&](std::size_t pos, const std::string& name, const Tensor& t) {
    const std::size_t rows = t.shape.empty() ? 1 : t.shape[0];
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(t.size() / rows));
    std::copy(t.data.begin(), t.data.end(), m.data());
    out.push_back({"L" + std::to_string(pos) + "." + kind_name(net.layer(pos).kind) + "." + name, std::move(m),
                   DType::kF64});
  };
  for (std::size_t pos = 0; pos < net.num_layers(); ++pos) {
    const auto kind = net.layer(pos).kind;
    const auto wn = weight_names(kind);
    const auto sn = state_names(kind);
    for (std::size_t i = 0; i < wn.size(); ++i) add(pos, wn[i], params.layers[pos].weights[i]);
    for (std::size_t i = 0; i < sn.size(); ++i) add(pos, sn[i], params.layers[pos].state[i]);
  }
  return out;
}

inline ParamSet params_from_sections(const Network& net, const std::vector<MatrixSection>& sections) {
  ParamSet p = init_params(net, 0);
  auto fill = [&](std::size_t pos, const std::string& name, Tensor& t) {
    const auto& sec =
        find_section(sections, "L" + std::to_string(pos) + "." + kind_name(net.layer(pos).kind) + "." + name);
    if (static_cast<std::size_t>(sec.data.size()) != t.size())
      throw DataError("parameter '" + sec.name + "' has the wrong size for this network");
    std::copy(sec.data.data(), sec.data.data() + sec.data.size(), t.data.begin());
  };
  for (std::size_t pos = 0; pos < net.num_layers(); ++pos) {
    const auto kind = net.layer(pos).kind;
    const auto wn = weight_names(kind);
    const auto sn = state_names(kind);
    for (std::size_t i = 0; i < wn.size(); ++i) fill(pos, wn[i], p.layers[pos].weights[i]);
    for (std::size_t i = 0; i < sn.size(); ++i) fill(pos, sn[i], p.layers[pos].state[i]);
  }
  return p;
}

inline void save_params(const std::filesystem::path& path, const Network& net, const ParamSet& params) {
  save_matrix(path, param_sections(net, params));
}

inline ParamSet load_params(const std::filesystem::path& path, const Network& net) {
  return params_from_sections(net, load_matrix(path));
}

}  // namespace coldrec::nn
