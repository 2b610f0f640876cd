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

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "coldrec/common.hpp"
#include "coldrec/feedback.hpp"
#include "coldrec/models.hpp"
#include "coldrec/wmf.hpp"

namespace coldrec {

/// Flat `key = value` settings with `#` comments. Keys may repeat only as an
/// error; values keep inner whitespace.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text, const std::string& origin) {
    KeyValues kv;
    kv.origin_ = origin;
    std::size_t line_no = 0, start = 0;
    while (start <= text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      std::string line = text.substr(start, end - start);
      start = end + 1;
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw UsageError(origin + ": line " + std::to_string(line_no) + ": expected key = value");
      const auto key = trim(line.substr(0, eq));
      if (key.empty()) throw UsageError(origin + ": line " + std::to_string(line_no) + ": empty key");
      if (!kv.values_.emplace(key, trim(line.substr(eq + 1))).second)
        throw UsageError(origin + ": line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    return kv;
  }

  static KeyValues load(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse(text, path.string());
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string str(const std::string& key, const std::string& fallback) {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  template <typename T>
  T num(const std::string& key, T fallback) {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& s = it->second;
    T v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
      throw UsageError(origin_ + ": '" + key + "' has invalid value '" + s + "'");
    return v;
  }

  bool flag(const std::string& key, bool fallback) {
    const auto s = str(key, fallback ? "true" : "false");
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw UsageError(origin_ + ": '" + key + "' must be true or false");
  }

  /// Rejects keys that no getter asked for (catches typos).
  void check_all_used() const {
    for (const auto& [key, value] : values_)
      if (!used_.count(key)) throw UsageError(origin_ + ": unknown key '" + key + "'");
  }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
  std::string origin_;
};

// ---------------------------------------------------------------------------
// Pipeline configuration

struct PipelinePaths {
  std::filesystem::path triples;
  std::filesystem::path artist_map;
  std::filesystem::path documents;
  std::filesystem::path annotations;
  std::filesystem::path kb_snapshot;
  std::filesystem::path properties;  // optional; empty selects the default map
  std::filesystem::path spectrograms;
  std::filesystem::path output;
};

struct PipelineConfig {
  PipelinePaths paths;
  std::uint64_t seed = 0;
  SplitRatios split;
  WmfConfig wmf_songs;
  WmfConfig wmf_artists;
  std::size_t vocab_size = 10000;
  bool enrich = true;
  double patch_seconds = 15.0;
  std::size_t patch_frames = 0;  // overrides patch_seconds when > 0
  double scale = 0.125;
  TrackNetOptions track;
  ArtistNetOptions artist;
  FusionNetOptions fusion;
  double sem_emb_dropout = 0.7;
  TrainConfig train_artist;
  TrainConfig train_track;
  TrainConfig train_fusion;
  std::vector<FusionVariant> fusion_variants{FusionVariant::kLin, FusionVariant::kH1};
  std::size_t eval_k = 500;
};

namespace detail {

inline void read_wmf(KeyValues& kv, const std::string& prefix, WmfConfig& w) {
  w.k = kv.num(prefix + "k", w.k);
  w.alpha = kv.num(prefix + "alpha", w.alpha);
  w.lambda = kv.num(prefix + "lambda", w.lambda);
  w.iterations = kv.num(prefix + "iterations", w.iterations);
  w.init_scale = kv.num(prefix + "init_scale", w.init_scale);
  w.early_stop_tol = kv.num(prefix + "early_stop_tol", w.early_stop_tol);
  w.validate();
}

inline void read_train(KeyValues& kv, const std::string& prefix, TrainConfig& t) {
  t.batch = kv.num(prefix + "batch", t.batch);
  t.max_epochs = kv.num(prefix + "max_epochs", t.max_epochs);
  t.patience = kv.num(prefix + "patience", t.patience);
  t.learning_rate = kv.num(prefix + "learning_rate", t.learning_rate);
  t.validate();
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  if (value.empty()) return {};
  std::filesystem::path p(value);
  return p.is_absolute() ? p : (base / p).lexically_normal();
}

}  // namespace detail

/// Builds a PipelineConfig; relative paths resolve against `base_dir`.
inline PipelineConfig pipeline_config_from(KeyValues kv, const std::filesystem::path& base_dir) {
  PipelineConfig c;
  auto path = [&](const std::string& key, const std::string& fallback) {
    return detail::resolve(base_dir, kv.str(key, fallback));
  };
  c.paths.triples = path("paths.triples", "triples.tsv");
  c.paths.artist_map = path("paths.artist_map", "artists.tsv");
  c.paths.documents = path("paths.documents", "documents.jsonl");
  c.paths.annotations = path("paths.annotations", "annotations.jsonl");
  c.paths.kb_snapshot = path("paths.kb_snapshot", "kb.jsonl");
  c.paths.properties = path("paths.properties", "");
  c.paths.spectrograms = path("paths.spectrograms", "spectrograms");
  c.paths.output = path("paths.output", "out");

  c.seed = kv.num<std::uint64_t>("seed", 0);
  c.split.train = kv.num("split.train", c.split.train);
  c.split.val = kv.num("split.val", c.split.val);
  c.split.test = kv.num("split.test", c.split.test);
  detail::read_wmf(kv, "wmf.songs.", c.wmf_songs);
  detail::read_wmf(kv, "wmf.artists.", c.wmf_artists);

  c.vocab_size = kv.num("text.vocab_size", c.vocab_size);
  c.enrich = kv.flag("text.enrich", c.enrich);
  c.patch_seconds = kv.num("audio.patch_seconds", c.patch_seconds);
  c.patch_frames = kv.num("audio.patch_frames", c.patch_frames);

  c.scale = kv.num("model.scale", c.scale);
  c.track.conv_width = kv.num("model.conv_width", c.track.conv_width);
  c.track.dropout = kv.num("model.track_dropout", c.track.dropout);
  c.artist.hidden = kv.num("model.artist_hidden", c.artist.hidden);
  c.artist.dropout = kv.num("model.artist_dropout", c.artist.dropout);
  c.fusion.hidden = kv.num("model.fusion_hidden", c.fusion.hidden);
  c.fusion.input_dropout = kv.num("model.fusion_dropout", c.fusion.input_dropout);
  c.sem_emb_dropout = kv.num("model.sem_emb_dropout", c.sem_emb_dropout);

  detail::read_train(kv, "train.artist.", c.train_artist);
  detail::read_train(kv, "train.track.", c.train_track);
  detail::read_train(kv, "train.fusion.", c.train_fusion);

  const auto variants = kv.str("fusion.variants", "lin,h1");
  c.fusion_variants.clear();
  for (const auto& v : split(variants, ','))
    if (!trim(v).empty()) c.fusion_variants.push_back(parse_fusion_variant(trim(v)));
  if (c.fusion_variants.empty()) throw UsageError("fusion.variants lists no variant");
  c.eval_k = kv.num("eval.k", c.eval_k);
  if (c.eval_k < 1) throw UsageError("eval.k must be >= 1");
  if (!(c.scale > 0.0 && c.scale <= 1.0)) throw UsageError("model.scale must lie in (0, 1]");
  kv.check_all_used();
  return c;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  return pipeline_config_from(KeyValues::load(path), path.parent_path());
}

// ---------------------------------------------------------------------------
// Synthetic dataset specification

struct SyntheticSpec {
  std::size_t users = 500;
  std::size_t artists = 200;
  std::size_t songs_per_artist = 10;
  std::size_t latent_dim = 16;
  /// Per-song deviation from its artist factor.
  double song_spread = 0.5;
  double text_noise = 0.5;
  double audio_noise = 0.5;
  /// Listening events per user: log-normal with this median and log-sd.
  double plays_median = 80.0;
  double plays_log_sd = 0.5;
  /// Softmax temperature multiplier on <user, song> / sqrt(latent_dim).
  double sharpness = 3.0;
  std::uint32_t bins = 48;
  std::uint32_t frames = 96;
  std::uint64_t seed = 0;
  std::filesystem::path output;

  void validate() const {
    if (users < 1 || artists < 1 || songs_per_artist < 1 || latent_dim < 1 || bins < 1 || frames < 1)
      throw UsageError("synthetic spec: all counts must be >= 1");
    if (latent_dim < 4) throw UsageError("synthetic spec: latent_dim must be >= 4 (two modalities, two halves)");
    if (!(text_noise >= 0.0) || !(audio_noise >= 0.0) || !(song_spread >= 0.0))
      throw UsageError("synthetic spec: noise levels must be >= 0");
    if (!(plays_median >= 1.0) || !(plays_log_sd >= 0.0)) throw UsageError("synthetic spec: bad plays distribution");
    if (bins < latent_dim) throw UsageError("synthetic spec: bins must be >= latent_dim (one band per template)");
  }
};

inline SyntheticSpec synthetic_spec_from(KeyValues kv, const std::filesystem::path& base_dir) {
  SyntheticSpec s;
  s.users = kv.num("users", s.users);
  s.artists = kv.num("artists", s.artists);
  s.songs_per_artist = kv.num("songs_per_artist", s.songs_per_artist);
  s.latent_dim = kv.num("latent_dim", s.latent_dim);
  s.song_spread = kv.num("song_spread", s.song_spread);
  s.text_noise = kv.num("text_noise", s.text_noise);
  s.audio_noise = kv.num("audio_noise", s.audio_noise);
  s.plays_median = kv.num("plays_median", s.plays_median);
  s.plays_log_sd = kv.num("plays_log_sd", s.plays_log_sd);
  s.sharpness = kv.num("sharpness", s.sharpness);
  s.bins = kv.num("bins", s.bins);
  s.frames = kv.num("frames", s.frames);
  s.seed = kv.num<std::uint64_t>("seed", s.seed);
  s.output = detail::resolve(base_dir, kv.str("output", "data"));
  kv.check_all_used();
  s.validate();
  return s;
}

inline SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  return synthetic_spec_from(KeyValues::load(path), path.parent_path());
}

}  // namespace coldrec
