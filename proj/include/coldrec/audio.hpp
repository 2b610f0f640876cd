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

// Precomputed log-frequency spectrograms, fixed-length patch sampling, and a
// synthetic spectrogram generator.
//
// On-disk format (little-endian): "CQTS" | u32 version=1 | u32 bins |
// u32 frames | u32 sample_rate | u32 hop | bins*frames f32, bin-major.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "coldrec/common.hpp"

namespace coldrec {

struct Spectrogram {
  std::uint32_t bins = 96;
  std::uint32_t frames = 0;
  std::uint32_t sample_rate = 22050;
  std::uint32_t hop = 1024;
  std::vector<float> data;  // bins x frames, bin-major

  float at(std::size_t bin, std::size_t frame) const { return data[bin * frames + frame]; }
  float& at(std::size_t bin, std::size_t frame) { return data[bin * frames + frame]; }
  friend bool operator==(const Spectrogram&, const Spectrogram&) = default;
};

struct Patch {
  std::string item_id;
  std::size_t start = 0;
  std::size_t bins = 0;
  std::size_t length = 0;
  std::vector<float> data;  // bins x length, bin-major

  float at(std::size_t bin, std::size_t frame) const { return data[bin * length + frame]; }
};

/// Number of frames covering `seconds` of audio: floor(seconds * sr / hop) + 1.
inline std::size_t patch_frames(double seconds, double sample_rate, double hop) {
  if (!(seconds > 0) || !(sample_rate > 0) || !(hop > 0))
    throw UsageError("patch_frames: arguments must be positive");
  return static_cast<std::size_t>(std::floor(seconds * sample_rate / hop)) + 1;
}

/// Contiguous `length`-frame slice starting at a seeded uniform offset; the
/// offset depends only on (item id, seed).
inline Patch sample_patch(const Spectrogram& s, std::size_t length, std::uint64_t seed,
                          const std::string& item_id = {}) {
  if (length == 0) throw UsageError("sample_patch: patch length must be >= 1");
  if (s.frames < length)
    throw DataError("spectrogram of '" + item_id + "' has " + std::to_string(s.frames) +
                    " frames, shorter than the patch length " + std::to_string(length));
  std::mt19937_64 rng(sub_seed(seed, item_id));
  Patch p;
  p.item_id = item_id;
  p.start = std::uniform_int_distribution<std::size_t>(0, s.frames - length)(rng);
  p.bins = s.bins;
  p.length = length;
  p.data.resize(p.bins * length);
  for (std::size_t b = 0; b < p.bins; ++b)
    std::memcpy(&p.data[b * length], &s.data[b * s.frames + p.start], length * sizeof(float));
  return p;
}

/// Elementwise x -> ln(1 + x).
inline Spectrogram log_compress(const Spectrogram& s) {
  Spectrogram out = s;
  for (auto& x : out.data) {
    if (x < 0.0f) throw DataError("log_compress: negative magnitude");
    x = std::log1p(x);
  }
  return out;
}

/// Non-negative mixture of band templates: template j lights up the j-th of
/// `weights.size()` equal frequency bands with a slow periodic modulation.
/// `noise` scales additive half-normal noise.
inline Spectrogram synth_spectrogram(std::uint32_t bins, std::uint32_t frames,
                                     const std::vector<double>& weights, std::uint64_t seed,
                                     double noise = 0.0) {
  if (bins < 1 || frames < 1) throw UsageError("synth_spectrogram: bins and frames must be >= 1");
  if (weights.size() > bins) throw UsageError("synth_spectrogram: more templates than bins");
  Spectrogram s;
  s.bins = bins;
  s.frames = frames;
  s.data.assign(static_cast<std::size_t>(bins) * frames, 0.0f);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t n = weights.size();
  for (std::size_t j = 0; j < n; ++j) {
    const double phase = phase_dist(rng);
    if (weights[j] < 0.0) throw UsageError("synth_spectrogram: template weights must be >= 0");
    if (weights[j] == 0.0) continue;
    const std::size_t lo = j * bins / n;
    const std::size_t hi = (j + 1) * bins / n;
    const double period = 6.0 + 2.0 * static_cast<double>(j);
    for (std::size_t t = 0; t < frames; ++t) {
      const double mod = 1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period + phase);
      for (std::size_t b = lo; b < hi; ++b) s.at(b, t) += static_cast<float>(weights[j] * mod);
    }
  }
  if (noise > 0.0)
    for (auto& x : s.data) x += static_cast<float>(noise * std::abs(gauss(rng)));
  return s;
}

namespace detail {
template <typename T>
void put_le(std::string& buf, T v) {
  static_assert(std::endian::native == std::endian::little);
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.append(raw, sizeof(T));
}
}  // namespace detail

inline void write_spectrogram(const std::filesystem::path& path, const Spectrogram& s) {
  if (s.data.size() != static_cast<std::size_t>(s.bins) * s.frames)
    throw DataError("spectrogram payload does not match its shape");
  std::string buf = "CQTS";
  detail::put_le<std::uint32_t>(buf, 1);
  detail::put_le<std::uint32_t>(buf, s.bins);
  detail::put_le<std::uint32_t>(buf, s.frames);
  detail::put_le<std::uint32_t>(buf, s.sample_rate);
  detail::put_le<std::uint32_t>(buf, s.hop);
  buf.append(reinterpret_cast<const char*>(s.data.data()), s.data.size() * sizeof(float));
  auto out = open_output(path, std::ios::binary);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline Spectrogram read_spectrogram(const std::filesystem::path& path) {
  auto in = open_input(path, std::ios::binary);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  constexpr std::size_t kHeader = 4 + 5 * 4;
  if (buf.size() < kHeader || buf.compare(0, 4, "CQTS") != 0)
    throw DataError(path.string() + ": not a CQTS spectrogram");
  std::uint32_t header[5];
  std::memcpy(header, buf.data() + 4, sizeof header);
  if (header[0] != 1) throw DataError(path.string() + ": unsupported CQTS version");
  Spectrogram s;
  s.bins = header[1];
  s.frames = header[2];
  s.sample_rate = header[3];
  s.hop = header[4];
  if (s.bins < 1 || s.frames < 1) throw DataError(path.string() + ": empty spectrogram");
  const std::size_t count = static_cast<std::size_t>(s.bins) * s.frames;
  if (buf.size() != kHeader + count * sizeof(float))
    throw DataError(path.string() + ": payload size does not match header");
  s.data.resize(count);
  std::memcpy(s.data.data(), buf.data() + kHeader, count * sizeof(float));
  for (float x : s.data)
    if (!std::isfinite(x)) throw DataError(path.string() + ": non-finite value");
  return s;
}

inline std::filesystem::path spectrogram_path(const std::filesystem::path& dir, const std::string& item_id) {
  return dir / (item_id + ".cqts");
}

}  // namespace coldrec
