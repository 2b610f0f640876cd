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

// Seeded synthetic corpus with a known latent structure. Artists, songs and
// users live in one latent space: the first half of the coordinates is
// readable from text (biographies cover the first quarter, knowledge-base
// entities the second) and the second half from audio.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "coldrec/audio.hpp"
#include "coldrec/config.hpp"
#include "coldrec/feedback.hpp"
#include "coldrec/matrix_io.hpp"
#include "coldrec/text.hpp"

namespace coldrec {

struct SyntheticDataset {
  std::vector<std::string> user_ids;
  std::vector<std::string> artist_ids;
  std::vector<std::string> song_ids;
  std::vector<std::size_t> artist_of_song;
  Matrix user_factors;
  Matrix artist_factors;
  Matrix song_factors;
  FeedbackMatrix plays;
  ArtistMap artist_map;
  std::vector<Document> documents;
  AnnotationSet annotations;
  KbSnapshot kb;

  /// Coordinate ranges: biography [0, q), entities [q, 2q), audio [2q, d).
  std::size_t bio_end() const { return static_cast<std::size_t>(artist_factors.cols()) / 4; }
  std::size_t text_end() const { return static_cast<std::size_t>(artist_factors.cols()) / 2; }
};

namespace detail {

inline std::string padded(const std::string& prefix, std::size_t i, std::size_t n) {
  std::string digits = std::to_string(i);
  const std::size_t width = std::to_string(n > 0 ? n - 1 : 0).size();
  return prefix + std::string(width > digits.size() ? width - digits.size() : 0, '0') + digits;
}

inline constexpr std::size_t kWordsPerPool = 3;
inline constexpr std::size_t kEntitiesPerPool = 4;
inline constexpr std::size_t kFillerWords = 40;
inline constexpr std::size_t kNoiseWords = 200;
inline constexpr std::size_t kDistractors = 60;
inline constexpr double kWordRate = 3.0;
inline constexpr double kEntityRate = 1.5;

inline std::string pool_word(std::size_t d, bool positive, std::size_t i) {
  return "tx" + std::to_string(d) + (positive ? "a" : "b") + std::to_string(i);
}

inline std::string genre_entity(std::size_t d, bool positive, std::size_t i) {
  return "genre_" + std::to_string(d) + (positive ? "p" : "n") + "_" + std::to_string(i);
}

}  // namespace detail

/// Builds the corpus in memory; deterministic for a given spec.
inline SyntheticDataset make_synthetic_dataset(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticDataset ds;
  const std::size_t dim = spec.latent_dim;
  const std::size_t n_songs = spec.artists * spec.songs_per_artist;
  std::normal_distribution<double> gauss(0.0, 1.0);

  {
    std::mt19937_64 rng(sub_seed(spec.seed, "factors"));
    ds.artist_factors = random_normal_matrix(spec.artists, dim, 1.0, rng);
    ds.user_factors = random_normal_matrix(spec.users, dim, 1.0, rng);
    ds.song_factors.resize(static_cast<Eigen::Index>(n_songs), static_cast<Eigen::Index>(dim));
    for (std::size_t a = 0; a < spec.artists; ++a) {
      ds.artist_ids.push_back(detail::padded("artist_", a, spec.artists));
      for (std::size_t j = 0; j < spec.songs_per_artist; ++j) {
        const auto s = static_cast<Eigen::Index>(ds.song_ids.size());
        ds.song_ids.push_back(detail::padded(ds.artist_ids.back() + "_song_", j, spec.songs_per_artist));
        ds.artist_of_song.push_back(a);
        ds.artist_map.set(ds.song_ids.back(), ds.artist_ids.back());
        for (std::size_t d = 0; d < dim; ++d)
          ds.song_factors(s, static_cast<Eigen::Index>(d)) =
              ds.artist_factors(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(d)) + spec.song_spread * gauss(rng);
      }
    }
    for (std::size_t u = 0; u < spec.users; ++u) ds.user_ids.push_back(detail::padded("user_", u, spec.users));
  }

  // Listening: each event picks a song with probability proportional to
  // exp(sharpness * <user, song> / sqrt(dim)).
  ds.plays = FeedbackMatrix(IdList(ds.user_ids), IdList(ds.song_ids));
  {
    const double temp = spec.sharpness / std::sqrt(static_cast<double>(dim));
    const Matrix logits = temp * (ds.user_factors * ds.song_factors.transpose());
    for (std::size_t u = 0; u < spec.users; ++u) {
      std::mt19937_64 rng(sub_seed(sub_seed(spec.seed, "plays"), u));
      const auto row = logits.row(static_cast<Eigen::Index>(u));
      const double top = row.maxCoeff();
      std::vector<double> w(n_songs);
      for (std::size_t s = 0; s < n_songs; ++s) w[s] = std::exp(row(static_cast<Eigen::Index>(s)) - top);
      std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
      const double events = std::exp(std::log(spec.plays_median) + spec.plays_log_sd * gauss(rng));
      const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(events)));
      std::vector<std::uint64_t> counts(n_songs, 0);
      for (std::size_t e = 0; e < n; ++e) ++counts[pick(rng)];
      for (std::size_t s = 0; s < n_songs; ++s)
        if (counts[s] > 0) ds.plays.add(u, s, counts[s]);
    }
  }

  // Biographies: three words per coordinate sign, with counts reading out
  // |a_d| on the matching sign; filler words everywhere, noise words at
  // random.
  const std::size_t q = ds.bio_end();
  for (std::size_t a = 0; a < spec.artists; ++a) {
    std::mt19937_64 rng(sub_seed(sub_seed(spec.seed, "text"), a));
    std::string text = "Biography of " + ds.artist_ids[a] + ".";
    auto emit = [&](const std::string& word, long count) {
      for (long c = 0; c < count; ++c) text += " " + word;
    };
    for (std::size_t d = 0; d < q; ++d) {
      const double v = ds.artist_factors(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(d));
      for (bool positive : {true, false}) {
        const double level = positive == (v > 0.0) ? std::abs(v) : 0.0;
        for (std::size_t i = 0; i < detail::kWordsPerPool; ++i) {
          const double x = detail::kWordRate * (level + spec.text_noise * gauss(rng));
          emit(detail::pool_word(d, positive, i), std::max(0L, std::lround(x)));
        }
      }
    }
    std::poisson_distribution<long> filler(2.0);
    for (std::size_t f = 0; f < detail::kFillerWords; ++f) emit("common" + std::to_string(f), filler(rng));
    std::poisson_distribution<long> noise_count(10.0 * spec.text_noise);
    std::uniform_int_distribution<std::size_t> noise_word(0, detail::kNoiseWords - 1);
    for (long n = noise_count(rng); n > 0; --n) emit("noise" + std::to_string(noise_word(rng)), 1);
    ds.documents.push_back({ds.artist_ids[a], text});
  }

  // Knowledge base: genre entities per coordinate sign of the second text
  // quarter, places (kept by the whitelist, uninformative) and non-music
  // distractors (dropped by the whitelist, informative if they leaked).
  const std::size_t h = ds.text_end();
  for (std::size_t d = q; d < h; ++d)
    for (bool positive : {true, false})
      for (std::size_t i = 0; i < detail::kEntitiesPerPool; ++i) {
        KbRecord rec;
        rec.classes = {"MusicGenre"};
        const std::string tag = std::to_string(d) + (positive ? "p" : "n");
        rec.properties["stylisticOrigin"] = {"Origin " + tag + " " + std::to_string(i)};
        rec.properties["instrument"] = {"Instrument " + tag + " " + std::to_string(i)};
        rec.categories = {"Genre family " + tag};
        ds.kb.emplace(detail::genre_entity(d, positive, i), std::move(rec));
      }
  for (std::size_t p = 0; p < detail::kDistractors; ++p) {
    KbRecord place;
    place.classes = {"Place"};
    place.categories = {"Region " + std::to_string(p)};
    ds.kb.emplace("place_" + std::to_string(p), std::move(place));
    KbRecord athlete;
    athlete.classes = {"SoccerPlayer"};
    athlete.categories = {"Club " + std::to_string(p)};
    ds.kb.emplace("athlete_" + std::to_string(p), std::move(athlete));
  }
  for (std::size_t a = 0; a < spec.artists; ++a) {
    std::mt19937_64 rng(sub_seed(sub_seed(spec.seed, "entities"), a));
    auto& list = ds.annotations[ds.artist_ids[a]];
    for (std::size_t d = q; d < h; ++d) {
      const double v = ds.artist_factors(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(d));
      const double x = detail::kEntityRate * (std::abs(v) + spec.text_noise * gauss(rng));
      const auto m = std::min<long>(static_cast<long>(detail::kEntitiesPerPool), std::max(0L, std::lround(x)));
      for (long i = 0; i < m; ++i) list.push_back(detail::genre_entity(d, v > 0.0, static_cast<std::size_t>(i)));
    }
    std::poisson_distribution<long> extra(1.0 + 2.0 * spec.text_noise);
    std::uniform_int_distribution<std::size_t> which(0, detail::kDistractors - 1);
    for (long n = extra(rng); n > 0; --n) list.push_back("place_" + std::to_string(which(rng)));
    // Athletes carry the sign of the first entity coordinate: useful only if
    // the class whitelist failed.
    for (long n = extra(rng); n > 0; --n) {
      const double v = ds.artist_factors(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(q));
      list.push_back("athlete_" + std::to_string(v > 0.0 ? which(rng) % (detail::kDistractors / 2)
                                                          : detail::kDistractors / 2 + which(rng) % (detail::kDistractors / 2)));
    }
    list.push_back("unknown_entity_" + std::to_string(a));
  }
  return ds;
}

/// Audio of one song: two band templates per audio coordinate (positive and
/// negative part of the song factor), with per-song template jitter and
/// per-bin noise scaled by the audio noise level, then log-compressed.
inline Spectrogram synthetic_spectrogram(const SyntheticSpec& spec, const SyntheticDataset& ds, std::size_t song) {
  const std::size_t dim = spec.latent_dim;
  const std::size_t h = ds.text_end();
  std::mt19937_64 rng(sub_seed(sub_seed(spec.seed, "audio"), song));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> weights;
  for (std::size_t d = h; d < dim; ++d) {
    const double v = ds.song_factors(static_cast<Eigen::Index>(song), static_cast<Eigen::Index>(d));
    for (bool positive : {true, false}) {
      const double level = positive == (v > 0.0) ? std::abs(v) : 0.0;
      weights.push_back(level + spec.audio_noise * std::abs(gauss(rng)));
    }
  }
  return log_compress(synth_spectrogram(spec.bins, spec.frames, weights, rng(), 0.5 * spec.audio_noise));
}

/// Writes the corpus under `spec.output`: triples.tsv, artists.tsv,
/// documents.jsonl, annotations.jsonl, kb.jsonl, spectrograms/<song>.cqts,
/// the latent factors under truth/, and a pipeline.conf pointing at them.
inline SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec) {
  if (spec.output.empty()) throw UsageError("synthetic spec: output directory is not set");
  SyntheticDataset ds = make_synthetic_dataset(spec);
  const auto& dir = spec.output;
  std::filesystem::create_directories(dir);
  save_triples(dir / "triples.tsv", ds.plays);
  save_artist_map(dir / "artists.tsv", ds.artist_map);
  save_documents(dir / "documents.jsonl", ds.documents);
  save_annotations(dir / "annotations.jsonl", ds.annotations);
  save_kb_snapshot(dir / "kb.jsonl", ds.kb);
  for (std::size_t s = 0; s < ds.song_ids.size(); ++s)
    write_spectrogram(spectrogram_path(dir / "spectrograms", ds.song_ids[s]), synthetic_spectrogram(spec, ds, s));
  save_labeled(dir / "truth" / "users.csmx", "factors", {ds.user_ids, ds.user_factors});
  save_labeled(dir / "truth" / "artists.csmx", "factors", {ds.artist_ids, ds.artist_factors});
  save_labeled(dir / "truth" / "songs.csmx", "factors", {ds.song_ids, ds.song_factors});

  auto conf = open_output(dir / "pipeline.conf");
  conf << "# Synthetic corpus, latent dimension " << spec.latent_dim << ".\n"
       << "paths.triples = triples.tsv\n"
       << "paths.artist_map = artists.tsv\n"
       << "paths.documents = documents.jsonl\n"
       << "paths.annotations = annotations.jsonl\n"
       << "paths.kb_snapshot = kb.jsonl\n"
       << "paths.spectrograms = spectrograms\n"
       << "paths.output = out\n"
       << "seed = " << spec.seed << '\n';
  if (spec.frames >= kMinTrackPatchFrames) conf << "audio.patch_frames = " << kMinTrackPatchFrames << '\n';
  return ds;
}

}  // namespace coldrec
