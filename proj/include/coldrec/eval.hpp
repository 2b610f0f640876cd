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

// Top-K ranking, average precision, MAP@K, the paired t-test, and baseline
// factor construction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <boost/math/special_functions/beta.hpp>
#include <nlohmann/json.hpp>

#include "coldrec/feedback.hpp"
#include "coldrec/wmf.hpp"

namespace coldrec {

/// Indices of the K highest scores, descending; equal scores keep ascending
/// item order.
inline std::vector<std::size_t> rank_scores(const Vector& scores, std::size_t k) {
  if (k < 1) throw UsageError("rank: K must be >= 1");
  std::vector<std::size_t> idx(static_cast<std::size_t>(scores.size()));
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t keep = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double sa = scores[static_cast<Eigen::Index>(a)], sb = scores[static_cast<Eigen::Index>(b)];
                      return sa != sb ? sa > sb : a < b;
                    });
  idx.resize(keep);
  return idx;
}

inline std::vector<std::size_t> rank_items(const Vector& user_factor, const Matrix& item_factors, std::size_t k) {
  return rank_scores(predict_scores(user_factor, item_factors), k);
}

/// Sum of precision@r over relevant hits at ranks r <= K, divided by
/// min(|relevant|, K).
inline double average_precision(std::span<const std::size_t> ranked, const std::unordered_set<std::size_t>& relevant,
                                std::size_t k) {
  if (relevant.empty()) throw DataError("average_precision: empty relevant set");
  if (k < 1) throw UsageError("average_precision: K must be >= 1");
  double sum = 0.0;
  std::size_t hits = 0;
  const std::size_t depth = std::min(k, ranked.size());
  for (std::size_t r = 0; r < depth; ++r) {
    if (!relevant.count(ranked[r])) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return sum / static_cast<double>(std::min(relevant.size(), k));
}

struct EvalReport {
  std::vector<std::string> user_ids;  // evaluated users, in user-index order
  std::vector<double> ap;
  double map = 0.0;
  std::size_t k = 0;
  std::size_t skipped = 0;
  std::size_t users() const { return ap.size(); }
};

/// MAP@K over the users of `test`. Row u of `user_factors` belongs to test
/// user u and row i of `item_factors` to test item i. Users without relevant
/// (count >= 1) items are skipped.
inline EvalReport map_at_k(const Matrix& user_factors, const Matrix& item_factors, const FeedbackMatrix& test,
                           std::size_t k) {
  if (k < 1) throw UsageError("map_at_k: K must be >= 1");
  if (user_factors.rows() != static_cast<Eigen::Index>(test.num_users()) ||
      item_factors.rows() != static_cast<Eigen::Index>(test.num_items()) ||
      user_factors.cols() != item_factors.cols())
    throw DataError("map_at_k: factor matrices are not aligned with the test matrix");
  EvalReport report;
  report.k = k;
  const auto rows = test.rows();
  for (std::size_t u = 0; u < rows.size(); ++u) {
    if (rows[u].empty()) {
      ++report.skipped;
      continue;
    }
    std::unordered_set<std::size_t> relevant;
    for (const auto& [item, count] : rows[u]) relevant.insert(item);
    const auto ranked = rank_items(user_factors.row(static_cast<Eigen::Index>(u)).transpose(), item_factors, k);
    report.user_ids.push_back(test.users()[u]);
    report.ap.push_back(average_precision(ranked, relevant, k));
  }
  if (report.ap.empty()) throw DataError("map_at_k: no user has relevant test items");
  double sum = 0.0;
  for (double a : report.ap) sum += a;
  report.map = sum / static_cast<double>(report.ap.size());
  return report;
}

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
};

/// Mean and standard error (sample standard deviation / sqrt(n)).
inline MeanStderr mean_stderr(std::span<const double> xs) {
  MeanStderr out;
  if (xs.empty()) return out;
  const double n = static_cast<double>(xs.size());
  out.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() < 2) return out;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.stderr_ = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return out;
}

struct TTestResult {
  double t = std::numeric_limits<double>::quiet_NaN();
  double p = std::numeric_limits<double>::quiet_NaN();
  std::size_t df = 0;
  /// All differences are equal, so the statistic is undefined.
  bool degenerate = false;
};

/// Paired two-sided t-test on per-user values aligned by position.
inline TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("paired_ttest: vectors differ in length");
  if (a.size() < 2) throw DataError("paired_ttest: need at least two pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double n = static_cast<double>(d.size());
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  TTestResult r;
  r.df = d.size() - 1;
  const double sd = std::sqrt(ss / (n - 1.0));
  double scale = 0.0;
  for (double x : d) scale = std::max(scale, std::abs(x));
  // Differences equal up to rounding (e.g. 0.2 - 0.1 vs 0.3 - 0.2).
  if (sd <= 64.0 * std::numeric_limits<double>::epsilon() * scale) {
    r.degenerate = true;
    return r;
  }
  r.t = mean / (sd / std::sqrt(n));
  const double nu = static_cast<double>(r.df);
  // Two-sided tail of Student's t: I_{nu / (nu + t^2)}(nu / 2, 1 / 2).
  r.p = boost::math::ibeta(nu / 2.0, 0.5, nu / (nu + r.t * r.t));
  return r;
}

// ---------------------------------------------------------------------------
// Baselines

/// Seeded rows drawn uniformly from the unit sphere.
inline Matrix random_unit_factors(std::size_t rows, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Matrix m = random_normal_matrix(rows, k, 1.0, rng);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double n = m.row(r).norm();
    if (n > 0.0) m.row(r) /= n;
  }
  return m;
}

enum class BaselineKind { kRandom, kUpperBound };

/// random: unit-norm item rows (user factors untouched, left empty).
/// upper_bound: factorization of the test feedback itself.
inline FactorModel make_baseline_factors(BaselineKind kind, const FeedbackMatrix& test, const WmfConfig& cfg,
                                         std::uint64_t seed) {
  if (kind == BaselineKind::kRandom) {
    FactorModel m;
    m.item_factors = random_unit_factors(test.num_items(), static_cast<std::size_t>(cfg.k), seed);
    return m;
  }
  WmfConfig c = cfg;
  c.seed = seed;
  return factorize_wmf(test, c);
}

// ---------------------------------------------------------------------------
// Persistence

inline void save_eval_report(const std::filesystem::path& tsv, const std::filesystem::path& json,
                             const EvalReport& r) {
  {
    auto out = open_output(tsv);
    for (std::size_t i = 0; i < r.ap.size(); ++i) out << r.user_ids[i] << '\t' << format_double(r.ap[i]) << '\n';
  }
  auto out = open_output(json);
  nlohmann::ordered_json j;
  j["map"] = r.map;
  j["k"] = r.k;
  j["users"] = r.users();
  j["skipped"] = r.skipped;
  out << j.dump(2) << '\n';
}

inline EvalReport load_eval_report(const std::filesystem::path& tsv, const std::filesystem::path& json) {
  EvalReport r;
  auto in = open_input(tsv);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 2) throw DataError(tsv.string() + ": malformed AP line");
    r.user_ids.push_back(fields[0]);
    r.ap.push_back(std::stod(fields[1]));
  }
  auto jin = open_input(json);
  const auto j = nlohmann::json::parse(jin);
  r.map = j.at("map").get<double>();
  r.k = j.at("k").get<std::size_t>();
  r.skipped = j.at("skipped").get<std::size_t>();
  return r;
}

}  // namespace coldrec
