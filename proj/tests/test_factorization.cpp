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

#include <random>

#include "coldrec/wmf.hpp"
#include "oracles.hpp"

namespace coldrec {
namespace {

FeedbackMatrix dense_random(std::size_t users, std::size_t items, std::uint64_t seed, double density) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> u, i;
  for (std::size_t k = 0; k < users; ++k) u.push_back("u" + std::to_string(k));
  for (std::size_t k = 0; k < items; ++k) i.push_back("i" + std::to_string(k));
  FeedbackMatrix m{IdList(u), IdList(i)};
  std::bernoulli_distribution keep(density);
  std::uniform_int_distribution<int> count(1, 6);
  for (std::size_t a = 0; a < users; ++a)
    for (std::size_t b = 0; b < items; ++b)
      if (keep(rng)) m.add(a, b, static_cast<std::uint64_t>(count(rng)));
  return m;
}

Eigen::MatrixXd to_dense(const FeedbackMatrix& m) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m.num_users()), static_cast<Eigen::Index>(m.num_items()));
  for (const auto& e : m.entries()) d(e.user, e.item) = static_cast<double>(e.count);
  return d;
}

TEST(WmfConfigTest, RejectsZeroIterations) {
  WmfConfig cfg;
  cfg.iterations = 0;
  EXPECT_THROW(cfg.validate(), UsageError);
  cfg = {};
  cfg.lambda = 0.0;
  EXPECT_THROW(cfg.validate(), UsageError);
  cfg = {};
  cfg.k = 0;
  EXPECT_THROW(cfg.validate(), UsageError);
}

TEST(SolveRow, EmptyRowGivesZero) {
  Matrix y = Matrix::Random(5, 3);
  std::vector<std::pair<std::uint32_t, double>> none;
  EXPECT_TRUE(solve_row(y, none, 40.0, 0.1).isZero(0.0));
}

TEST(SolveRow, ScalarClosedForm) {
  Matrix y(1, 1);
  y(0, 0) = 1.0;
  std::vector<std::pair<std::uint32_t, double>> row{{0, 1.0}};
  for (double lambda : {1.0, 1e-3, 1e-8}) {
    const Vector x = solve_row(y, row, 1.0, lambda);
    EXPECT_NEAR(x[0], 2.0 / (2.0 + lambda), 1e-14);
  }
  EXPECT_THROW(solve_row(y, row, 1.0, 0.0), UsageError);
}

TEST(SolveRow, MatchesDenseSolve) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 6 + trial % 5, k = 1 + trial % 4;
    Matrix y = random_normal_matrix(n, k, 1.0, rng);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    std::vector<std::pair<std::uint32_t, double>> row;
    for (std::size_t j = 0; j < n; ++j)
      if (std::bernoulli_distribution(0.4)(rng)) {
        counts[static_cast<Eigen::Index>(j)] = 1 + static_cast<double>(rng() % 5);
        row.emplace_back(static_cast<std::uint32_t>(j), counts[static_cast<Eigen::Index>(j)]);
      }
    const double alpha = 3.0, lambda = 0.05;
    const Vector x = solve_row(y, row, alpha, lambda);
    const Eigen::VectorXd ref = oracle::dense_row_solve(y, counts, alpha, lambda);
    EXPECT_LT((x - ref).norm(), 1e-10 * std::max(1.0, ref.norm()));
  }
}

TEST(SolveRow, PerturbationDoesNotImprove) {
  std::mt19937_64 rng(3);
  Matrix y = random_normal_matrix(8, 3, 1.0, rng);
  std::vector<std::pair<std::uint32_t, double>> row{{1, 2.0}, {4, 1.0}, {6, 5.0}};
  const double alpha = 2.0, lambda = 0.3;
  auto partial = [&](const Vector& x) {
    double f = lambda * x.squaredNorm();
    for (Eigen::Index j = 0; j < y.rows(); ++j) {
      double count = 0;
      for (auto [i, c] : row)
        if (i == j) count = c;
      const double p = count > 0 ? 1.0 : 0.0;
      const double r = p - y.row(j).dot(x);
      f += (1.0 + alpha * count) * r * r;
    }
    return f;
  };
  const Vector x = solve_row(y, row, alpha, lambda);
  const double f0 = partial(x);
  for (Eigen::Index d = 0; d < 3; ++d)
    for (double delta : {1e-4, -1e-4}) {
      Vector z = x;
      z[d] += delta;
      EXPECT_GE(partial(z), f0);
    }
}

TEST(Objective, ZeroCases) {
  FeedbackMatrix empty{IdList({"u"}), IdList({"i"})};
  FactorModel zero{Matrix::Zero(1, 2), Matrix::Zero(1, 2)};
  EXPECT_EQ(als_objective(zero, empty, 40.0, 0.1), 0.0);
  FeedbackMatrix one{IdList({"u"}), IdList({"i"})};
  one.add(0, 0, 1);
  EXPECT_DOUBLE_EQ(als_objective(zero, one, 40.0, 0.1), 41.0);
}

TEST(Objective, MatchesDoubleLoop) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto m = dense_random(3, 3, 100 + trial, 0.5);
    FactorModel model{random_normal_matrix(3, 2, 1.0, rng), random_normal_matrix(3, 2, 1.0, rng)};
    const double ref = oracle::wmf_objective(to_dense(m), model.user_factors, model.item_factors, 7.0, 0.2);
    EXPECT_NEAR(als_objective(model, m, 7.0, 0.2), ref, 1e-10 * std::max(1.0, ref));
  }
}

TEST(Objective, DimensionMismatch) {
  auto m = dense_random(3, 3, 1, 0.5);
  FactorModel bad{Matrix::Zero(2, 2), Matrix::Zero(3, 2)};
  EXPECT_THROW(als_objective(bad, m, 1.0, 1.0), DataError);
}

TEST(Factorize, MonotoneObjective) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto m = dense_random(20, 30, seed, 0.2);
    WmfConfig cfg;
    cfg.k = 4;
    cfg.iterations = 25;
    cfg.seed = seed;
    std::vector<double> trace;
    factorize_wmf(m, cfg, &trace);
    ASSERT_EQ(trace.size(), 26u);
    for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1] + 1e-9);
  }
}

TEST(Factorize, MatchesGradientDescentOracle) {
  auto m = dense_random(5, 7, 21, 0.45);
  WmfConfig cfg;
  cfg.k = 3;
  cfg.alpha = 10.0;
  cfg.lambda = 0.1;
  cfg.iterations = 3000;
  cfg.init_scale = 0.1;
  cfg.seed = 4;
  cfg.early_stop_tol = 1e-15;
  const auto model = factorize_wmf(m, cfg);
  const double als = als_objective(model, m, cfg.alpha, cfg.lambda);

  std::mt19937_64 rng(cfg.seed);
  const Matrix x0 = random_normal_matrix(5, 3, cfg.init_scale, rng);
  const Matrix y0 = random_normal_matrix(7, 3, cfg.init_scale, rng);
  const double gd = oracle::wmf_gradient_descent(to_dense(m), x0, y0, cfg.alpha, cfg.lambda);
  EXPECT_LT(std::abs(als - gd) / gd, 1e-5) << "als " << als << " gd " << gd;
}

TEST(Factorize, SilentUsersGetZeroRows) {
  FeedbackMatrix m{IdList({"a", "b", "quiet"}), IdList({"x", "y"})};
  m.add(0, 0, 3);
  m.add(1, 1, 1);
  WmfConfig cfg;
  cfg.k = 2;
  const auto model = factorize_wmf(m, cfg);
  EXPECT_TRUE(model.user_factors.row(2).isZero(0.0));
}

TEST(Factorize, Deterministic) {
  auto m = dense_random(15, 12, 8, 0.3);
  WmfConfig cfg;
  cfg.k = 5;
  cfg.seed = 99;
  const auto a = factorize_wmf(m, cfg);
  const auto b = factorize_wmf(m, cfg);
  EXPECT_TRUE(a.user_factors == b.user_factors);
  EXPECT_TRUE(a.item_factors == b.item_factors);
}

TEST(Factorize, EmptyMatrixRejected) {
  FeedbackMatrix m{IdList({"u"}), IdList({"i"})};
  EXPECT_THROW(factorize_wmf(m, WmfConfig{}), DataError);
}

TEST(FoldIn, ReproducesItemUpdate) {
  auto m = dense_random(10, 6, 2, 0.5);
  WmfConfig cfg;
  cfg.k = 3;
  cfg.iterations = 5;
  const auto model = factorize_wmf(m, cfg);
  std::vector<std::ptrdiff_t> same(m.num_users());
  std::iota(same.begin(), same.end(), 0);
  const Matrix folded = fold_in_items(model.user_factors, m, same, cfg.alpha, cfg.lambda);
  // The final half-sweep solved items against these same user factors.
  EXPECT_LT((folded - model.item_factors).norm(), 1e-10);
}

TEST(PredictScores, Examples) {
  Matrix items(2, 2);
  items << 1, 0, 0, 1;
  Vector u(2);
  u << 1, 0;
  EXPECT_EQ(predict_scores(u, items), (Vector(2) << 1, 0).finished());
  EXPECT_TRUE(predict_scores(Vector::Zero(2), items).isZero(0.0));
  Matrix r(1, 2);
  r << 0.3, -1.5;
  Vector v(2);
  v << 2.0, 0.25;
  EXPECT_DOUBLE_EQ(predict_scores(v, r)[0], 0.3 * 2.0 + -1.5 * 0.25);
  EXPECT_THROW(predict_scores(Vector::Zero(3), items), DataError);
}

TEST(PredictScores, RankingInvariantUnderPositiveScaling) {
  std::mt19937_64 rng(12);
  const Matrix items = random_normal_matrix(30, 4, 1.0, rng);
  const Matrix users = random_normal_matrix(10, 4, 1.0, rng);
  for (Eigen::Index u = 0; u < users.rows(); ++u) {
    const Vector a = predict_scores(users.row(u).transpose(), items);
    const Vector b = predict_scores(users.row(u).transpose(), Matrix(3.7 * items));
    std::vector<double> sa(a.data(), a.data() + a.size()), sb(b.data(), b.data() + b.size());
    EXPECT_EQ(oracle::full_sort_ranking(sa), oracle::full_sort_ranking(sb));
  }
}

}  // namespace
}  // namespace coldrec
