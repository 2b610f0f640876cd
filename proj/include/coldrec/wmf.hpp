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

// Weighted matrix factorization of implicit feedback, fitted by alternating
// least squares. Preference p = [count > 0], confidence c = 1 + alpha * count.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "coldrec/common.hpp"
#include "coldrec/feedback.hpp"

namespace coldrec {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct WmfConfig {
  int k = 200;
  double alpha = 40.0;
  double lambda = 0.01;
  int iterations = 15;
  double init_scale = 0.01;
  std::uint64_t seed = 0;
  /// Stop once the relative objective improvement of a sweep drops below
  /// this value; 0 disables early stopping.
  double early_stop_tol = 0.0;

  void validate() const {
    if (k < 1) throw UsageError("wmf: k must be >= 1");
    if (!(alpha >= 0.0)) throw UsageError("wmf: alpha must be >= 0");
    if (!(lambda > 0.0)) throw UsageError("wmf: lambda must be > 0");
    if (iterations < 1) throw UsageError("wmf: iterations must be >= 1");
    if (!(init_scale >= 0.0)) throw UsageError("wmf: init_scale must be >= 0");
  }
};

struct FactorModel {
  Matrix user_factors;  // #users x k
  Matrix item_factors;  // #items x k
  int k() const { return static_cast<int>(user_factors.cols()); }
};

using SparseRow = std::span<const std::pair<std::uint32_t, double>>;

/// Closed-form least-squares update of one factor row against fixed
/// `other` factors: x = (Y'CY + lambda I)^-1 Y'Cp, assembled from the shared
/// Gram matrix `gram` = Y'Y plus rank-one corrections over the nonzero counts.
inline Vector solve_row(const Matrix& other, const Matrix& gram, SparseRow counts,
                        double alpha, double lambda) {
  const auto k = other.cols();
  if (counts.empty()) return Vector::Zero(k);
  Matrix a = gram;
  Vector b = Vector::Zero(k);
  for (const auto& [j, count] : counts) {
    const double c = 1.0 + alpha * count;
    const auto y = other.row(j).transpose();
    a.noalias() += (c - 1.0) * y * y.transpose();
    b.noalias() += c * y;
  }
  a.diagonal().array() += lambda;
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError("solve_row: system is not positive definite");
  return llt.solve(b);
}

inline Vector solve_row(const Matrix& other, SparseRow counts, double alpha, double lambda) {
  if (!(lambda > 0.0)) throw UsageError("solve_row: lambda must be > 0");
  const Matrix gram = other.transpose() * other;
  return solve_row(other, gram, counts, alpha, lambda);
}

/// Sum over all (u, i) of c_ui (p_ui - x_u.y_i)^2 plus lambda times the
/// squared Frobenius norms of both factor matrices. Zero-count pairs enter
/// with c = 1, p = 0; their total is recovered from trace((X'X)(Y'Y)).
inline double als_objective(const FactorModel& model, const FeedbackMatrix& m, double alpha,
                            double lambda) {
  const auto& x = model.user_factors;
  const auto& y = model.item_factors;
  if (x.rows() != static_cast<Eigen::Index>(m.num_users()) ||
      y.rows() != static_cast<Eigen::Index>(m.num_items()) || x.cols() != y.cols())
    throw DataError("als_objective: model dimensions do not match the matrix");
  const Matrix xtx = x.transpose() * x;
  const Matrix yty = y.transpose() * y;
  double loss = (xtx.array() * yty.array()).sum();
  for (const auto& e : m.entries()) {
    const double pred = x.row(e.user).dot(y.row(e.item));
    const double c = 1.0 + alpha * static_cast<double>(e.count);
    loss += c * (1.0 - pred) * (1.0 - pred) - pred * pred;
  }
  return loss + lambda * (x.squaredNorm() + y.squaredNorm());
}

namespace detail {

inline void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite())
    throw NumericalError(std::string("wmf: non-finite ") + what +
                         " factors; the system is ill-conditioned, consider raising lambda");
}

inline void solve_all(const Matrix& other,
                      const std::vector<std::vector<std::pair<std::uint32_t, double>>>& lists,
                      double alpha, double lambda, Matrix& target) {
  const Matrix gram = other.transpose() * other;
  for (std::size_t r = 0; r < lists.size(); ++r)
    target.row(static_cast<Eigen::Index>(r)) = solve_row(other, gram, lists[r], alpha, lambda).transpose();
}

}  // namespace detail

inline Matrix random_normal_matrix(std::size_t rows, std::size_t cols, double stddev,
                                   std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = stddev * dist(rng);
  return out;
}

/// Fits user and item factors to `m`. When `objective_trace` is given it
/// receives the objective before the first sweep and after every sweep.
inline FactorModel factorize_wmf(const FeedbackMatrix& m, const WmfConfig& cfg,
                                 std::vector<double>* objective_trace = nullptr) {
  cfg.validate();
  if (m.empty()) throw DataError("wmf: feedback matrix is empty");
  std::mt19937_64 rng(cfg.seed);
  FactorModel model;
  model.user_factors = random_normal_matrix(m.num_users(), cfg.k, cfg.init_scale, rng);
  model.item_factors = random_normal_matrix(m.num_items(), cfg.k, cfg.init_scale, rng);
  const auto rows = m.rows();
  const auto cols = m.columns();

  const bool need_objective = objective_trace != nullptr || cfg.early_stop_tol > 0.0;
  double previous = need_objective ? als_objective(model, m, cfg.alpha, cfg.lambda) : 0.0;
  if (objective_trace) objective_trace->push_back(previous);
  for (int sweep = 0; sweep < cfg.iterations; ++sweep) {
    detail::solve_all(model.item_factors, rows, cfg.alpha, cfg.lambda, model.user_factors);
    detail::check_finite(model.user_factors, "user");
    detail::solve_all(model.user_factors, cols, cfg.alpha, cfg.lambda, model.item_factors);
    detail::check_finite(model.item_factors, "item");
    if (!need_objective) continue;
    const double current = als_objective(model, m, cfg.alpha, cfg.lambda);
    if (objective_trace) objective_trace->push_back(current);
    if (cfg.early_stop_tol > 0.0 && previous > 0.0 &&
        (previous - current) / previous < cfg.early_stop_tol)
      break;
    previous = current;
  }
  return model;
}

/// Factors for items outside the fitted matrix, solved against fixed user
/// factors. `users_of_rows[r]` maps user r of `m` to a row of `user_factors`
/// (or -1 when that user has no factor, in which case its plays are ignored).
inline Matrix fold_in_items(const Matrix& user_factors, const FeedbackMatrix& m,
                            const std::vector<std::ptrdiff_t>& users_of_rows, double alpha,
                            double lambda) {
  const Matrix gram = user_factors.transpose() * user_factors;
  Matrix out(m.num_items(), user_factors.cols());
  auto cols = m.columns();
  for (std::size_t i = 0; i < cols.size(); ++i) {
    std::vector<std::pair<std::uint32_t, double>> mapped;
    for (const auto& [u, c] : cols[i])
      if (users_of_rows[u] >= 0) mapped.emplace_back(static_cast<std::uint32_t>(users_of_rows[u]), c);
    out.row(static_cast<Eigen::Index>(i)) = solve_row(user_factors, gram, mapped, alpha, lambda).transpose();
  }
  return out;
}

/// score_i = <user_factor, item_factor_i>.
inline Vector predict_scores(const Vector& user_factor, const Matrix& item_factors) {
  if (user_factor.size() != item_factors.cols())
    throw DataError("predict_scores: factor dimensions disagree");
  return item_factors * user_factor;
}

}  // namespace coldrec
