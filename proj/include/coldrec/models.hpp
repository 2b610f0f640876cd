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

// The three mapping architectures (artist text, track audio, late fusion),
// their training loop, and embedding/factor extraction.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "coldrec/audio.hpp"
#include "coldrec/neural/optim.hpp"
#include "coldrec/wmf.hpp"

namespace coldrec {

using nn::LayerSpec;
using nn::Network;
using nn::NetworkSpec;
using nn::ParamSet;
using nn::Tensor;

// ---------------------------------------------------------------------------
// Architectures

struct ArtistNetOptions {
  std::size_t hidden = 2048;
  double dropout = 0.0;
};

/// dense(2048)+relu -> dense(2048)+relu -> dense(k) -> l2norm. The embedding
/// is the second hidden activation.
inline NetworkSpec build_artist_net(std::size_t vocab_size, std::size_t k, const ArtistNetOptions& opt = {}) {
  if (vocab_size < 1 || k < 1) throw UsageError("artist net: vocab_size and k must be >= 1");
  NetworkSpec spec;
  spec.branches.push_back({"text", {vocab_size}, {}});
  auto& t = spec.trunk;
  for (int i = 0; i < 2; ++i) {
    t.push_back(LayerSpec::dense(opt.hidden));
    t.push_back(LayerSpec::relu());
    if (i == 1) spec.tap = t.size();
    if (opt.dropout > 0.0) t.push_back(LayerSpec::dropout(opt.dropout));
  }
  t.push_back(LayerSpec::dense(k));
  t.push_back(LayerSpec::l2norm());
  return spec;
}

struct TrackNetOptions {
  std::size_t conv_width = 4;
  double dropout = 0.5;
};

inline constexpr std::size_t kMinTrackPatchFrames = 64;

inline std::vector<std::size_t> track_filter_counts(double scale) {
  if (!(scale > 0.0 && scale <= 1.0)) throw UsageError("track net: channel scale must lie in (0, 1]");
  std::vector<std::size_t> out;
  for (double base : {256.0, 512.0, 1024.0, 1024.0}) out.push_back(static_cast<std::size_t>(std::ceil(scale * base)));
  return out;
}

/// Four time-axis convolutions (relu, dropout) with max-pool 4 after the
/// first three and a final pool to exactly four steps, then flatten ->
/// dense(k) -> l2norm. The embedding is the flattened activation.
inline NetworkSpec build_track_net(std::size_t bins, std::size_t patch_frames, std::size_t k, double scale,
                                   const TrackNetOptions& opt = {}) {
  if (bins < 1 || k < 1) throw UsageError("track net: bins and k must be >= 1");
  if (patch_frames < kMinTrackPatchFrames)
    throw UsageError("track net: patch of " + std::to_string(patch_frames) +
                     " frames is too short for the pooling pyramid (needs >= 64)");
  const auto filters = track_filter_counts(scale);
  NetworkSpec spec;
  spec.branches.push_back({"audio", {bins, patch_frames}, {}});
  auto& t = spec.trunk;
  for (std::size_t i = 0; i < filters.size(); ++i) {
    t.push_back(LayerSpec::conv1d_time(filters[i], opt.conv_width));
    t.push_back(LayerSpec::relu());
    t.push_back(i < 3 ? LayerSpec::maxpool_time(4) : LayerSpec::maxpool_time_to(4));
    if (opt.dropout > 0.0) t.push_back(LayerSpec::dropout(opt.dropout));
  }
  t.push_back(LayerSpec::flatten());
  spec.tap = t.size();
  t.push_back(LayerSpec::dense(k));
  t.push_back(LayerSpec::l2norm());
  return spec;
}

enum class FusionVariant { kLin, kH1 };

inline FusionVariant parse_fusion_variant(const std::string& name) {
  if (name == "lin") return FusionVariant::kLin;
  if (name == "h1") return FusionVariant::kH1;
  throw UsageError("unknown fusion variant '" + name + "' (expected lin or h1)");
}

inline const char* fusion_variant_name(FusionVariant v) { return v == FusionVariant::kLin ? "lin" : "h1"; }

struct FusionNetOptions {
  double input_dropout = 0.7;
  std::size_t hidden = 512;
};

/// lin: per branch l2norm -> dropout, concat, dense(k) -> l2norm.
/// h1:  per branch batchnorm -> dropout -> dense(512)+relu, concat,
///      dense(k) -> l2norm.
/// The embedding is the concatenation.
inline NetworkSpec build_fusion_net(FusionVariant variant, std::size_t dim_a, std::size_t dim_t, std::size_t k,
                                    const FusionNetOptions& opt = {}) {
  if (dim_a < 1 || dim_t < 1 || k < 1) throw UsageError("fusion net: dimensions must be >= 1");
  auto branch = [&](std::string name, std::size_t dim) {
    nn::Branch b{std::move(name), {dim}, {}};
    if (variant == FusionVariant::kLin) {
      b.layers.push_back(LayerSpec::l2norm());
      b.layers.push_back(LayerSpec::dropout(opt.input_dropout));
    } else {
      b.layers.push_back(LayerSpec::batchnorm());
      b.layers.push_back(LayerSpec::dropout(opt.input_dropout));
      b.layers.push_back(LayerSpec::dense(opt.hidden));
      b.layers.push_back(LayerSpec::relu());
    }
    return b;
  };
  NetworkSpec spec;
  spec.branches.push_back(branch("artist", dim_a));
  spec.branches.push_back(branch("track", dim_t));
  spec.trunk = {LayerSpec::concat(2), LayerSpec::dense(k), LayerSpec::l2norm()};
  spec.tap = 1;
  return spec;
}

inline NetworkSpec build_fusion_net(const std::string& variant, std::size_t dim_a, std::size_t dim_t, std::size_t k,
                                    const FusionNetOptions& opt = {}) {
  return build_fusion_net(parse_fusion_variant(variant), dim_a, dim_t, k, opt);
}

/// Linear single-modality head on one embedding: l2norm -> dropout ->
/// dense(k) -> l2norm.
inline NetworkSpec build_embedding_net(std::size_t dim, std::size_t k, double input_dropout = 0.7) {
  if (dim < 1 || k < 1) throw UsageError("embedding net: dimensions must be >= 1");
  NetworkSpec spec;
  spec.branches.push_back({"embedding", {dim}, {LayerSpec::l2norm(), LayerSpec::dropout(input_dropout)}});
  spec.trunk = {LayerSpec::dense(k), LayerSpec::l2norm()};
  spec.tap = 0;
  return spec;
}

// ---------------------------------------------------------------------------
// Feature sources

/// Row-addressable network inputs. `sample_seed` lets stochastic sources
/// (patch sampling) draw a fresh view per epoch.
class FeatureSource {
 public:
  virtual ~FeatureSource() = default;
  virtual std::size_t size() const = 0;
  virtual std::vector<Tensor> batch(std::span<const std::size_t> rows, std::uint64_t sample_seed) const = 0;
};

/// One or more aligned dense matrices, one per network input.
class DenseFeatures : public FeatureSource {
 public:
  explicit DenseFeatures(Matrix m) { mats_.push_back(std::move(m)); }
  explicit DenseFeatures(std::vector<Matrix> mats) : mats_(std::move(mats)) {
    for (const auto& m : mats_)
      if (m.rows() != mats_.at(0).rows()) throw DataError("feature matrices have different row counts");
  }
  std::size_t size() const override { return mats_.empty() ? 0 : static_cast<std::size_t>(mats_[0].rows()); }
  std::vector<Tensor> batch(std::span<const std::size_t> rows, std::uint64_t) const override {
    std::vector<Tensor> out;
    for (const auto& m : mats_) {
      const auto cols = static_cast<std::size_t>(m.cols());
      Tensor t({rows.size(), cols});
      for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy_n(m.row(static_cast<Eigen::Index>(rows[r])).data(), cols, t.ptr() + r * cols);
      out.push_back(std::move(t));
    }
    return out;
  }

 private:
  std::vector<Matrix> mats_;
};

/// One spectrogram per row; each batch samples a fixed-length patch.
class PatchFeatures : public FeatureSource {
 public:
  PatchFeatures(std::vector<std::string> item_ids, std::vector<std::shared_ptr<const Spectrogram>> spectrograms,
                std::size_t patch_length)
      : ids_(std::move(item_ids)), specs_(std::move(spectrograms)), length_(patch_length) {
    if (ids_.size() != specs_.size()) throw DataError("patch source: ids and spectrograms differ in count");
    for (std::size_t i = 0; i < specs_.size(); ++i)
      if (specs_[i]->bins != specs_.at(0)->bins) throw DataError("spectrogram bin counts differ: " + ids_[i]);
  }
  std::size_t size() const override { return ids_.size(); }
  std::size_t bins() const { return specs_.empty() ? 0 : specs_[0]->bins; }
  std::vector<Tensor> batch(std::span<const std::size_t> rows, std::uint64_t sample_seed) const override {
    Tensor t({rows.size(), bins(), length_});
    const std::size_t item = bins() * length_;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto patch = sample_patch(*specs_[rows[r]], length_, sample_seed, ids_[rows[r]]);
      std::copy(patch.data.begin(), patch.data.end(), t.ptr() + r * item);
    }
    return {std::move(t)};
  }

 private:
  std::vector<std::string> ids_;
  std::vector<std::shared_ptr<const Spectrogram>> specs_;
  std::size_t length_;
};

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t batch = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  double learning_rate = 0.001;

  void validate() const {
    if (batch < 1) throw UsageError("train: batch must be >= 1");
    if (patience < 1) throw UsageError("train: patience must be >= 1");
    if (max_epochs < 1) throw UsageError("train: max_epochs must be >= 1");
  }
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  ParamSet params;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::size_t steps_per_epoch = 0;
  std::size_t total_steps = 0;
};

namespace detail {

inline Tensor target_batch(const Matrix& targets, std::span<const std::size_t> rows) {
  const auto k = static_cast<std::size_t>(targets.cols());
  Tensor t({rows.size(), k});
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy_n(targets.row(static_cast<Eigen::Index>(rows[r])).data(), k, t.ptr() + r * k);
  return t;
}

inline constexpr std::uint64_t kEvalSampleSeed = 0x5eed;

}  // namespace detail

/// Eval-mode mean cosine loss over all rows.
inline double evaluate_loss(const Network& net, const ParamSet& params, const FeatureSource& features,
                            const Matrix& targets, std::size_t batch, std::uint64_t sample_seed = detail::kEvalSampleSeed) {
  double total = 0.0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < features.size(); start += batch) {
    rows.resize(std::min(batch, features.size() - start));
    std::iota(rows.begin(), rows.end(), start);
    const auto out = nn::net_forward(net, params, features.batch(rows, sample_seed), nn::Mode::kEval, 0);
    total += nn::cosine_loss_batch(out, detail::target_batch(targets, rows)).first * static_cast<double>(rows.size());
  }
  return total / static_cast<double>(features.size());
}

/// Mini-batch Adam on the mean cosine loss. Returns the parameters of the
/// epoch with the lowest validation loss; stops after `patience` epochs
/// without improvement. Without validation rows the training loss decides.
inline TrainResult train_mapping(const Network& net, const FeatureSource& train, const Matrix& train_targets,
                                 const FeatureSource* val, const Matrix* val_targets, const TrainConfig& cfg,
                                 const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  if (train.size() != static_cast<std::size_t>(train_targets.rows()))
    throw DataError("train_mapping: " + std::to_string(train.size()) + " feature rows vs " +
                    std::to_string(train_targets.rows()) + " target rows");
  if (train_targets.cols() != static_cast<Eigen::Index>(net.output_dim()))
    throw DataError("train_mapping: target width does not match the network output");
  const bool has_val = val && val_targets && val->size() > 0;
  if (has_val && val->size() != static_cast<std::size_t>(val_targets->rows()))
    throw DataError("train_mapping: validation features and targets are misaligned");
  if (train.size() == 0) throw DataError("train_mapping: no training rows");

  TrainResult result;
  ParamSet params = nn::init_params(net, sub_seed(cfg.seed, "init"));
  nn::AdamState adam = nn::AdamState::zeros_like(params);
  adam.lr = cfg.learning_rate;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  result.steps_per_epoch = (train.size() + cfg.batch - 1) / cfg.batch;
  std::vector<std::size_t> order(train.size());
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(sub_seed(sub_seed(cfg.seed, "shuffle"), epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
    const std::uint64_t sample_seed = sub_seed(sub_seed(cfg.seed, "patches"), epoch);

    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < result.steps_per_epoch; ++b) {
      const std::size_t start = b * cfg.batch;
      std::span<const std::size_t> rows(order.data() + start, std::min(cfg.batch, order.size() - start));
      nn::ForwardTrace trace;
      const auto out = nn::net_forward(net, params, train.batch(rows, sample_seed), nn::Mode::kTrain,
                                       sub_seed(cfg.seed, result.total_steps), &trace);
      const auto [loss, grad] = nn::cosine_loss_batch(out, detail::target_batch(train_targets, rows));
      if (!std::isfinite(loss))
        throw NumericalError("train_mapping: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(b));
      const auto grads = nn::net_backward(net, params, trace, grad);
      nn::commit_running_stats(net, params, trace);
      nn::adam_step(params, grads, adam);
      ++result.total_steps;
      epoch_loss += loss * static_cast<double>(rows.size());
    }
    EpochLog entry{epoch, epoch_loss / static_cast<double>(train.size()), 0.0};
    entry.val_loss = has_val ? evaluate_loss(net, params, *val, *val_targets, cfg.batch)
                             : evaluate_loss(net, params, train, train_targets, cfg.batch);
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (entry.val_loss < result.best_val_loss) {
      result.best_val_loss = entry.val_loss;
      result.best_epoch = epoch;
      result.params = params;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  return result;
}

inline void save_train_log(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  auto out = open_output(path);
  out << "epoch\ttrain_loss\tval_loss\n";
  for (const auto& e : log) out << e.epoch << '\t' << format_double(e.train_loss) << '\t' << format_double(e.val_loss) << '\n';
}

// ---------------------------------------------------------------------------
// Inference

struct EmbeddingSet {
  std::vector<std::string> ids;
  Matrix values;  // #ids x d
  std::size_t dim() const { return static_cast<std::size_t>(values.cols()); }
};

namespace detail {

template <typename Fn>
Matrix batched_rows(const FeatureSource& features, std::size_t width, std::size_t batch, Fn run) {
  Matrix out(static_cast<Eigen::Index>(features.size()), static_cast<Eigen::Index>(width));
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < features.size(); start += batch) {
    rows.resize(std::min(batch, features.size() - start));
    std::iota(rows.begin(), rows.end(), start);
    const Tensor t = run(features.batch(rows, kEvalSampleSeed));
    for (std::size_t r = 0; r < rows.size(); ++r)
      std::copy_n(t.ptr() + r * width, width, out.row(static_cast<Eigen::Index>(start + r)).data());
  }
  return out;
}

}  // namespace detail

/// Eval-mode activations at each network's embedding tap.
inline EmbeddingSet extract_embeddings(const Network& net, const ParamSet& params, const FeatureSource& features,
                                       std::vector<std::string> ids, std::size_t batch = 64) {
  if (ids.size() != features.size()) throw DataError("extract_embeddings: ids and features differ in count");
  EmbeddingSet set;
  set.ids = std::move(ids);
  set.values = detail::batched_rows(features, net.embedding_dim(), batch,
                                    [&](const std::vector<Tensor>& in) { return nn::net_embed(net, params, in); });
  if (!set.values.allFinite()) throw NumericalError("extract_embeddings: non-finite activations");
  return set;
}

/// Eval-mode outputs; rows are unit-norm through the l2norm head.
inline Matrix predict_factors(const Network& net, const ParamSet& params, const FeatureSource& features,
                              std::size_t batch = 64) {
  return detail::batched_rows(features, net.output_dim(), batch, [&](const std::vector<Tensor>& in) {
    return nn::net_forward(net, params, in, nn::Mode::kEval, 0);
  });
}

}  // namespace coldrec
