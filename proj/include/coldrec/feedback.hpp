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

// User x item play counts, the item -> artist relation, and artist-disjoint
// train/validation/test partitioning.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "coldrec/common.hpp"

namespace coldrec {

/// Ordered list of opaque identifiers with a reverse index.
class IdList {
 public:
  IdList() = default;
  explicit IdList(std::vector<std::string> ids) {
    for (auto& id : ids) add(id);
  }

  /// Returns the index of `id`, appending it if new.
  std::size_t add(const std::string& id) {
    auto [it, inserted] = index_.try_emplace(id, ids_.size());
    if (inserted) ids_.push_back(id);
    return it->second;
  }

  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  std::size_t at(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw DataError("unknown id '" + id + "'");
    return it->second;
  }
  const std::string& operator[](std::size_t i) const { return ids_[i]; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::vector<std::string>& ids() const { return ids_; }

  friend bool operator==(const IdList& a, const IdList& b) { return a.ids_ == b.ids_; }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct FeedbackEntry {
  std::uint32_t user;
  std::uint32_t item;
  std::uint64_t count;
  friend bool operator==(const FeedbackEntry&, const FeedbackEntry&) = default;
};

/// Sparse play-count matrix. Entries keep first-appearance order so that
/// writing and re-reading a matrix reproduces it exactly.
class FeedbackMatrix {
 public:
  FeedbackMatrix() = default;
  FeedbackMatrix(IdList users, IdList items)
      : users_(std::move(users)), items_(std::move(items)) {}

  /// Adds `count` plays; repeated (user, item) pairs accumulate.
  void add(std::size_t user, std::size_t item, std::uint64_t count) {
    if (count == 0) throw DataError("play counts must be >= 1");
    if (user >= users_.size() || item >= items_.size())
      throw DataError("feedback entry index out of range");
    const auto key = (static_cast<std::uint64_t>(user) << 32) | item;
    auto [it, inserted] = slot_.try_emplace(key, entries_.size());
    if (inserted) {
      entries_.push_back({static_cast<std::uint32_t>(user),
                          static_cast<std::uint32_t>(item), count});
    } else {
      entries_[it->second].count += count;
    }
  }

  std::uint64_t count(std::size_t user, std::size_t item) const {
    auto it = slot_.find((static_cast<std::uint64_t>(user) << 32) | item);
    return it == slot_.end() ? 0 : entries_[it->second].count;
  }

  const IdList& users() const { return users_; }
  const IdList& items() const { return items_; }
  std::size_t num_users() const { return users_.size(); }
  std::size_t num_items() const { return items_.size(); }
  const std::vector<FeedbackEntry>& entries() const { return entries_; }
  std::size_t nnz() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  std::uint64_t total() const {
    std::uint64_t sum = 0;
    for (const auto& e : entries_) sum += e.count;
    return sum;
  }

  /// Per-user lists of (item, count), items ascending.
  std::vector<std::vector<std::pair<std::uint32_t, double>>> rows() const {
    std::vector<std::vector<std::pair<std::uint32_t, double>>> out(num_users());
    for (const auto& e : entries_) out[e.user].emplace_back(e.item, static_cast<double>(e.count));
    for (auto& r : out) std::sort(r.begin(), r.end());
    return out;
  }

  /// Per-item lists of (user, count), users ascending.
  std::vector<std::vector<std::pair<std::uint32_t, double>>> columns() const {
    std::vector<std::vector<std::pair<std::uint32_t, double>>> out(num_items());
    for (const auto& e : entries_) out[e.item].emplace_back(e.user, static_cast<double>(e.count));
    for (auto& c : out) std::sort(c.begin(), c.end());
    return out;
  }

  friend bool operator==(const FeedbackMatrix& a, const FeedbackMatrix& b) {
    return a.users_ == b.users_ && a.items_ == b.items_ && a.entries_ == b.entries_;
  }

 private:
  IdList users_;
  IdList items_;
  std::vector<FeedbackEntry> entries_;
  std::unordered_map<std::uint64_t, std::size_t> slot_;
};

/// Total item -> artist relation.
class ArtistMap {
 public:
  void set(const std::string& item, const std::string& artist) {
    auto [it, inserted] = artist_of_.try_emplace(item, artist);
    if (!inserted && it->second != artist)
      throw DataError("item '" + item + "' mapped to two artists");
    if (inserted) items_.push_back(item);
  }
  bool contains(const std::string& item) const { return artist_of_.count(item) != 0; }
  const std::string& artist(const std::string& item) const {
    auto it = artist_of_.find(item);
    if (it == artist_of_.end()) throw DataError("item '" + item + "' has no artist mapping");
    return it->second;
  }
  /// Items in insertion order.
  const std::vector<std::string>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

 private:
  std::unordered_map<std::string, std::string> artist_of_;
  std::vector<std::string> items_;
};

enum class Partition { kTrain, kVal, kTest };

inline const char* partition_name(Partition p) {
  switch (p) {
    case Partition::kTrain: return "train";
    case Partition::kVal: return "val";
    case Partition::kTest: return "test";
  }
  return "?";
}

inline Partition parse_partition(const std::string& s) {
  if (s == "train") return Partition::kTrain;
  if (s == "val") return Partition::kVal;
  if (s == "test") return Partition::kTest;
  throw DataError("unknown partition '" + s + "'");
}

struct SplitBundle {
  FeedbackMatrix train;
  FeedbackMatrix val;
  FeedbackMatrix test;
  /// Artists in the order they were assigned (shuffled order).
  std::vector<std::pair<std::string, Partition>> artist_assignment;

  const FeedbackMatrix& part(Partition p) const {
    return p == Partition::kTrain ? train : p == Partition::kVal ? val : test;
  }
};

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

// ---------------------------------------------------------------------------
// TSV codecs

inline std::uint64_t parse_count(const std::string& field, std::size_t line_no) {
  if (field.empty() || field.find_first_not_of("0123456789") != std::string::npos)
    throw DataError("line " + std::to_string(line_no) + ": malformed count '" + field + "'");
  std::uint64_t v = 0;
  try {
    v = std::stoull(field);
  } catch (const std::exception&) {
    throw DataError("line " + std::to_string(line_no) + ": count out of range");
  }
  if (v < 1) throw DataError("line " + std::to_string(line_no) + ": count must be >= 1");
  return v;
}

/// Reads `user<TAB>item<TAB>count` lines. Ids are indexed in first-appearance
/// order and duplicate pairs sum.
inline FeedbackMatrix load_triples(const std::filesystem::path& path) {
  auto in = open_input(path);
  struct Raw {
    std::string user, item;
    std::uint64_t count;
  };
  std::vector<Raw> raw;
  IdList users, items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty())
      throw DataError(path.string() + ": line " + std::to_string(line_no) +
                      ": expected user<TAB>item<TAB>count");
    const auto count = parse_count(fields[2], line_no);
    users.add(fields[0]);
    items.add(fields[1]);
    raw.push_back({std::move(fields[0]), std::move(fields[1]), count});
  }
  if (raw.empty()) throw DataError(path.string() + ": empty triples file");
  FeedbackMatrix m(std::move(users), std::move(items));
  for (const auto& r : raw) m.add(m.users().at(r.user), m.items().at(r.item), r.count);
  return m;
}

inline void save_triples(const std::filesystem::path& path, const FeedbackMatrix& m) {
  auto out = open_output(path);
  for (const auto& e : m.entries())
    out << m.users()[e.user] << '\t' << m.items()[e.item] << '\t' << e.count << '\n';
}

inline ArtistMap load_artist_map(const std::filesystem::path& path) {
  auto in = open_input(path);
  ArtistMap am;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty())
      throw DataError(path.string() + ": line " + std::to_string(line_no) +
                      ": expected item<TAB>artist");
    am.set(fields[0], fields[1]);
  }
  return am;
}

inline void save_artist_map(const std::filesystem::path& path, const ArtistMap& am) {
  auto out = open_output(path);
  for (const auto& item : am.items()) out << item << '\t' << am.artist(item) << '\n';
}

// ---------------------------------------------------------------------------
// Aggregation and splitting

/// R[u][a] = sum of m[u][s] over the songs s of artist a. Artists are ordered
/// by first appearance along the item index.
inline FeedbackMatrix aggregate_to_artist(const FeedbackMatrix& m, const ArtistMap& am) {
  IdList artists;
  std::vector<std::size_t> artist_of_item(m.num_items());
  for (std::size_t i = 0; i < m.num_items(); ++i)
    artist_of_item[i] = artists.add(am.artist(m.items()[i]));
  FeedbackMatrix r(m.users(), std::move(artists));
  for (const auto& e : m.entries()) r.add(e.user, artist_of_item[e.item], e.count);
  return r;
}

/// Distinct artists of `m`'s items, in item-index order of first appearance.
inline std::vector<std::string> artists_of(const FeedbackMatrix& m, const ArtistMap& am) {
  IdList artists;
  for (const auto& item : m.items().ids()) artists.add(am.artist(item));
  return artists.ids();
}

/// Restricts `m` to the items accepted by `keep`, preserving user ids and the
/// relative order of items and entries.
template <typename Pred>
FeedbackMatrix select_items(const FeedbackMatrix& m, Pred keep) {
  IdList items;
  std::vector<std::ptrdiff_t> remap(m.num_items(), -1);
  for (std::size_t i = 0; i < m.num_items(); ++i)
    if (keep(i)) remap[i] = static_cast<std::ptrdiff_t>(items.add(m.items()[i]));
  FeedbackMatrix out(m.users(), std::move(items));
  for (const auto& e : m.entries())
    if (remap[e.item] >= 0) out.add(e.user, static_cast<std::size_t>(remap[e.item]), e.count);
  return out;
}

/// Partitions artists (and with them every item column) into train/val/test.
/// Validation and test sizes are floor(ratio * #artists); train takes the rest.
inline SplitBundle split_by_artist(const FeedbackMatrix& m, const ArtistMap& am,
                                   const SplitRatios& ratios, std::uint64_t seed) {
  const std::array<double, 3> r{ratios.train, ratios.val, ratios.test};
  for (double x : r)
    if (!(x >= 0.0) || x > 1.0) throw UsageError("split ratios must lie in [0, 1]");
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9)
    throw UsageError("split ratios must sum to 1");

  auto artists = artists_of(m, am);
  const std::size_t n = artists.size();
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
    std::swap(artists[i - 1], artists[j]);
  }
  const auto n_val = static_cast<std::size_t>(std::floor(r[1] * static_cast<double>(n) + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(r[2] * static_cast<double>(n) + 1e-9));
  if (n_val + n_test > n) throw DataError("split sizes exceed the artist count");
  const std::size_t n_train = n - n_val - n_test;
  const std::array<std::size_t, 3> sizes{n_train, n_val, n_test};
  for (int p = 0; p < 3; ++p)
    if (r[p] > 0.0 && sizes[p] == 0)
      throw DataError(std::string("split leaves the ") + partition_name(static_cast<Partition>(p)) +
                      " partition without artists (" + std::to_string(n) + " artists)");

  SplitBundle bundle;
  std::unordered_map<std::string, Partition> where;
  for (std::size_t k = 0; k < n; ++k) {
    const Partition p = k < n_train ? Partition::kTrain
                        : k < n_train + n_val ? Partition::kVal
                                              : Partition::kTest;
    where.emplace(artists[k], p);
    bundle.artist_assignment.emplace_back(artists[k], p);
  }
  std::vector<Partition> item_part(m.num_items());
  for (std::size_t i = 0; i < m.num_items(); ++i) item_part[i] = where.at(am.artist(m.items()[i]));
  bundle.train = select_items(m, [&](std::size_t i) { return item_part[i] == Partition::kTrain; });
  bundle.val = select_items(m, [&](std::size_t i) { return item_part[i] == Partition::kVal; });
  bundle.test = select_items(m, [&](std::size_t i) { return item_part[i] == Partition::kTest; });
  return bundle;
}

inline void save_split(const std::filesystem::path& dir, const SplitBundle& b) {
  save_triples(dir / "train.tsv", b.train);
  save_triples(dir / "val.tsv", b.val);
  save_triples(dir / "test.tsv", b.test);
  auto out = open_output(dir / "artist_assignment.tsv");
  for (const auto& [artist, p] : b.artist_assignment) out << artist << '\t' << partition_name(p) << '\n';
}

/// Reads a partition assignment written by save_split.
inline std::vector<std::pair<std::string, Partition>> load_artist_assignment(
    const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<std::pair<std::string, Partition>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 2)
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": expected artist<TAB>partition");
    out.emplace_back(fields[0], parse_partition(fields[1]));
  }
  return out;
}

}  // namespace coldrec
