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


#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "coldrec/models.hpp"

namespace coldrec {
namespace {

std::vector<std::size_t> dense_widths(const Network& net) {
  std::vector<std::size_t> out{net.input_shape_at(0)[0]};
  for (std::size_t pos = 0; pos < net.num_layers(); ++pos)
    if (net.layer(pos).kind == nn::LayerKind::kDense) out.push_back(net.layer(pos).units);
  return out;
}

Matrix unit_rows(Matrix m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) m.row(r).normalize();
  return m;
}

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_normal_matrix(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols), 1.0, rng);
}

TEST(ArtistNet, FullScaleDimensions) {
  Network net(build_artist_net(10000, 200));
  EXPECT_EQ(dense_widths(net), (std::vector<std::size_t>{10000, 2048, 2048, 200}));
  EXPECT_EQ(net.embedding_dim(), 2048u);
  EXPECT_EQ(net.output_dim(), 200u);
  EXPECT_EQ(net.layer(net.num_layers() - 1).kind, nn::LayerKind::kL2Norm);
}

TEST(ArtistNet, SmallParameterization) {
  Network net(build_artist_net(5, 2));
  EXPECT_EQ(dense_widths(net), (std::vector<std::size_t>{5, 2048, 2048, 2}));
  EXPECT_THROW(build_artist_net(0, 2), UsageError);
}

TEST(TrackNet, FullScaleWidth) {
  Network net(build_track_net(96, 323, 200, 1.0));
  EXPECT_EQ(net.embedding_dim(), 4096u);
  EXPECT_EQ(net.embedding_shape(), (nn::Shape{4096}));
  std::vector<std::size_t> filters;
  for (std::size_t pos = 0; pos < net.num_layers(); ++pos)
    if (net.layer(pos).kind == nn::LayerKind::kConv1dTime) filters.push_back(net.layer(pos).units);
  EXPECT_EQ(filters, (std::vector<std::size_t>{256, 512, 1024, 1024}));
}

TEST(TrackNet, ScaledWidths) {
  EXPECT_EQ(track_filter_counts(0.125), (std::vector<std::size_t>{32, 64, 128, 128}));
  Network net(build_track_net(96, 323, 200, 0.125));
  EXPECT_EQ(net.embedding_dim(), 512u);
  Network shortest(build_track_net(24, 64, 8, 0.125));
  EXPECT_EQ(shortest.embedding_dim(), 512u);
}

TEST(TrackNet, TooShortPatch) {
  EXPECT_THROW(build_track_net(96, 63, 200, 1.0), UsageError);
  EXPECT_THROW(build_track_net(96, 323, 200, 0.0), UsageError);
}

TEST(FusionNet, Dimensions) {
  Network lin(build_fusion_net("lin", 2048, 4096, 200));
  EXPECT_EQ(lin.embedding_dim(), 6144u);
  EXPECT_EQ(lin.output_dim(), 200u);
  Network h1(build_fusion_net("h1", 37, 11, 5));
  EXPECT_EQ(h1.embedding_dim(), 1024u);
  EXPECT_THROW(build_fusion_net("h2", 2, 2, 2), UsageError);
}

TEST(TrainMapping, StepsPerEpoch) {
  Network net(build_embedding_net(4, 3, 0.0));
  TrainConfig cfg;
  cfg.max_epochs = 3;
  const Matrix x = random_matrix(64, 4, 1), y = random_matrix(64, 3, 2);
  const auto r = train_mapping(net, DenseFeatures(x), y, nullptr, nullptr, cfg);
  EXPECT_EQ(r.steps_per_epoch, 2u);
  EXPECT_EQ(r.total_steps, 6u);
  EXPECT_EQ(r.log.size(), 3u);
}

NetworkSpec linear_net(std::size_t dim) {
  NetworkSpec s;
  s.branches.push_back({"x", {dim}, {}});
  s.trunk = {LayerSpec::dense(dim), LayerSpec::l2norm()};
  return s;
}

TEST(TrainMapping, RealizableIdentity) {
  Network net(linear_net(6));
  const Matrix y = unit_rows(random_matrix(96, 6, 3));
  TrainConfig cfg;
  cfg.max_epochs = 200;
  cfg.patience = 200;
  cfg.learning_rate = 0.01;
  const auto r = train_mapping(net, DenseFeatures(y), y, nullptr, nullptr, cfg);
  EXPECT_LE(r.log.back().train_loss, -0.99);
  const Matrix pred = predict_factors(net, r.params, DenseFeatures(y));
  for (Eigen::Index i = 0; i < y.rows(); ++i) EXPECT_GE(pred.row(i).dot(y.row(i)), 0.99);
}

TEST(TrainMapping, DeterministicAndBestEpoch) {
  Network net(build_artist_net(10, 4, {.hidden = 16, .dropout = 0.2}));
  const Matrix x = random_matrix(40, 10, 4), y = random_matrix(40, 4, 5);
  const Matrix vx = random_matrix(12, 10, 6), vy = random_matrix(12, 4, 7);
  TrainConfig cfg;
  cfg.batch = 8;
  cfg.max_epochs = 25;
  cfg.patience = 4;
  cfg.seed = 11;
  DenseFeatures train(x), val(vx);
  const auto a = train_mapping(net, train, y, &val, &vy, cfg);
  const auto b = train_mapping(net, train, y, &val, &vy, cfg);
  EXPECT_EQ(a.params, b.params);
  for (const auto& e : a.log) EXPECT_LE(a.best_val_loss, e.val_loss);
  EXPECT_EQ(evaluate_loss(net, a.params, val, vy, cfg.batch), a.best_val_loss);
}

TEST(TrainMapping, Misalignment) {
  Network net(linear_net(3));
  TrainConfig cfg;
  EXPECT_THROW(train_mapping(net, DenseFeatures(random_matrix(5, 3, 1)), random_matrix(4, 3, 1), nullptr, nullptr, cfg),
               DataError);
  cfg.batch = 0;
  EXPECT_THROW(
      train_mapping(net, DenseFeatures(random_matrix(5, 3, 1)), random_matrix(5, 3, 1), nullptr, nullptr, cfg),
      UsageError);
}

TEST(Predict, UnitRowsAndBatchIndependence) {
  Network net(build_fusion_net(FusionVariant::kH1, 6, 5, 3, {.hidden = 8}));
  const Matrix a = random_matrix(20, 6, 1), t = random_matrix(20, 5, 2), y = random_matrix(20, 3, 3);
  TrainConfig cfg;
  cfg.batch = 4;
  cfg.max_epochs = 5;
  DenseFeatures feats(std::vector<Matrix>{a, t});
  const auto r = train_mapping(net, feats, y, nullptr, nullptr, cfg);
  const Matrix batched = predict_factors(net, r.params, feats, 64);
  const Matrix single = predict_factors(net, r.params, feats, 1);
  EXPECT_LT((batched - single).cwiseAbs().maxCoeff(), 1e-12);
  for (Eigen::Index i = 0; i < batched.rows(); ++i) EXPECT_NEAR(batched.row(i).norm(), 1.0, 1e-6);

  DenseFeatures zeros(std::vector<Matrix>{Matrix::Zero(1, 6), Matrix::Zero(1, 5)});
  EXPECT_NEAR(predict_factors(net, r.params, zeros).row(0).norm(), 1.0, 1e-6);
}

TEST(Extract, EmbeddingWidthsAndDeterminism) {
  Network net(build_artist_net(7, 3, {.hidden = 12}));
  const auto p = nn::init_params(net, 2);
  const Matrix x = random_matrix(9, 7, 8);
  std::vector<std::string> ids;
  for (int i = 0; i < 9; ++i) ids.push_back("a" + std::to_string(i));
  const auto e1 = extract_embeddings(net, p, DenseFeatures(x), ids, 4);
  const auto e2 = extract_embeddings(net, p, DenseFeatures(x), ids, 9);
  EXPECT_EQ(e1.dim(), 12u);
  EXPECT_EQ(e1.ids, ids);
  EXPECT_LT((e1.values - e2.values).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(e1.values, extract_embeddings(net, p, DenseFeatures(x), ids, 4).values);
  EXPECT_TRUE((e1.values.array() >= 0.0).all());  // post-relu tap
}

TEST(PatchSource, SamplesPerSeed) {
  std::vector<std::shared_ptr<const Spectrogram>> specs;
  std::vector<std::string> ids;
  for (int i = 0; i < 3; ++i) {
    specs.push_back(std::make_shared<Spectrogram>(synth_spectrogram(8, 100, {1.0, 0.5}, i, 0.1)));
    ids.push_back("t" + std::to_string(i));
  }
  PatchFeatures src(ids, specs, 64);
  const std::vector<std::size_t> rows{2, 0};
  const auto a = src.batch(rows, 1);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].shape, (nn::Shape{2, 8, 64}));
  EXPECT_EQ(a[0], src.batch(rows, 1)[0]);
  const auto p = sample_patch(*specs[2], 64, 1, "t2");
  for (std::size_t i = 0; i < p.data.size(); ++i) EXPECT_EQ(a[0][i], p.data[i]);
}

TEST(TrainLog, Format) {
  const auto path = std::filesystem::temp_directory_path() / "coldrec_log.tsv";
  save_train_log(path, {{1, -0.5, -0.25}, {2, -0.75, -0.5}});
  std::ifstream in(path);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(header, "epoch\ttrain_loss\tval_loss");
  EXPECT_EQ(first, "1\t-0.5\t-0.25");
}

}  // namespace
}  // namespace coldrec
