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

// Binary matrix container.
//
//   "CSMX" | u32 version=1 | u32 section_count
//   per section: u16 name_len | name (UTF-8) | u64 rows | u64 cols | u8 dtype
//                (1 = f64, 2 = f32) | row-major payload | u32 CRC32(payload)
//
// All integers and floats are little-endian. Row ids, when a matrix has them,
// live next to the container in "<file>.ids", one id per line.

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "coldrec/common.hpp"
#include "coldrec/wmf.hpp"

namespace coldrec {

static_assert(std::endian::native == std::endian::little, "CSMX codec assumes a little-endian host");

enum class DType : std::uint8_t { kF64 = 1, kF32 = 2 };

struct MatrixSection {
  std::string name;
  Matrix data;
  DType dtype = DType::kF64;
};

namespace detail {

inline std::uint32_t crc32_of(const void* data, std::size_t bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* p = static_cast<const Bytef*>(data);
  while (bytes > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    bytes -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

template <typename T>
void put(std::string& buf, T v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.append(raw, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& buf, const std::string& origin) : buf_(buf), origin_(origin) {}
  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const char* take(std::size_t n) {
    if (n > buf_.size() - pos_) throw DataError(origin_ + ": truncated matrix container");
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  const std::string& buf_;
  const std::string& origin_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_matrices(const std::vector<MatrixSection>& sections) {
  std::string buf = "CSMX";
  detail::put<std::uint32_t>(buf, 1);
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(sections.size()));
  for (const auto& s : sections) {
    if (s.name.size() > 0xFFFF) throw DataError("section name too long: " + s.name);
    if (!s.data.allFinite()) throw DataError("section '" + s.name + "' holds non-finite values");
    detail::put<std::uint16_t>(buf, static_cast<std::uint16_t>(s.name.size()));
    buf += s.name;
    detail::put<std::uint64_t>(buf, static_cast<std::uint64_t>(s.data.rows()));
    detail::put<std::uint64_t>(buf, static_cast<std::uint64_t>(s.data.cols()));
    detail::put<std::uint8_t>(buf, static_cast<std::uint8_t>(s.dtype));
    const std::size_t start = buf.size();
    if (s.dtype == DType::kF64) {
      buf.append(reinterpret_cast<const char*>(s.data.data()),
                 static_cast<std::size_t>(s.data.size()) * sizeof(double));
    } else {
      for (Eigen::Index i = 0; i < s.data.size(); ++i)
        detail::put<float>(buf, static_cast<float>(s.data.data()[i]));
    }
    detail::put<std::uint32_t>(buf, detail::crc32_of(buf.data() + start, buf.size() - start));
  }
  return buf;
}

inline std::vector<MatrixSection> decode_matrices(const std::string& buf,
                                                  const std::string& origin = "matrix") {
  detail::Reader r(buf, origin);
  if (buf.size() < 4 || std::memcmp(r.take(4), "CSMX", 4) != 0)
    throw DataError(origin + ": bad magic (expected CSMX)");
  const auto version = r.get<std::uint32_t>();
  if (version != 1) throw DataError(origin + ": unsupported version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  std::vector<MatrixSection> out;
  for (std::uint32_t s = 0; s < count; ++s) {
    MatrixSection sec;
    const auto name_len = r.get<std::uint16_t>();
    sec.name.assign(r.take(name_len), name_len);
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    const auto dtype = r.get<std::uint8_t>();
    if (dtype != 1 && dtype != 2) throw DataError(origin + ": unknown dtype in section " + sec.name);
    sec.dtype = static_cast<DType>(dtype);
    const std::size_t width = sec.dtype == DType::kF64 ? 8 : 4;
    if (cols != 0 && rows > (buf.size() / width) / cols) throw DataError(origin + ": truncated matrix container");
    const std::size_t bytes = static_cast<std::size_t>(rows * cols) * width;
    const char* payload = r.take(bytes);
    const auto stored_crc = r.get<std::uint32_t>();
    if (stored_crc != detail::crc32_of(payload, bytes))
      throw DataError(origin + ": checksum mismatch in section " + sec.name);
    sec.data.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if (sec.dtype == DType::kF64) {
      std::memcpy(sec.data.data(), payload, bytes);
    } else {
      for (std::size_t i = 0; i < rows * cols; ++i) {
        float f;
        std::memcpy(&f, payload + 4 * i, 4);
        sec.data.data()[i] = f;
      }
    }
    out.push_back(std::move(sec));
  }
  if (!r.at_end()) throw DataError(origin + ": trailing bytes after last section");
  return out;
}

inline void save_matrix(const std::filesystem::path& path, const std::vector<MatrixSection>& sections) {
  const auto buf = encode_matrices(sections);
  auto out = open_output(path, std::ios::binary);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

inline std::vector<MatrixSection> load_matrix(const std::filesystem::path& path) {
  auto in = open_input(path, std::ios::binary);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_matrices(buf, path.string());
}

inline const MatrixSection& find_section(const std::vector<MatrixSection>& sections,
                                         const std::string& name) {
  for (const auto& s : sections)
    if (s.name == name) return s;
  throw DataError("missing matrix section '" + name + "'");
}

inline std::filesystem::path ids_path(const std::filesystem::path& path) {
  return path.string() + ".ids";
}

inline void save_ids(const std::filesystem::path& path, const std::vector<std::string>& ids) {
  auto out = open_output(path);
  for (const auto& id : ids) out << id << '\n';
}

inline std::vector<std::string> load_ids(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) ids.push_back(line);
  return ids;
}

/// A single-section container plus its row ids.
struct LabeledMatrix {
  std::vector<std::string> ids;
  Matrix data;
};

inline void save_labeled(const std::filesystem::path& path, const std::string& section,
                         const LabeledMatrix& m) {
  if (m.ids.size() != static_cast<std::size_t>(m.data.rows()))
    throw DataError("row id count does not match matrix rows for " + path.string());
  save_matrix(path, {{section, m.data, DType::kF64}});
  save_ids(ids_path(path), m.ids);
}

inline LabeledMatrix load_labeled(const std::filesystem::path& path, const std::string& section) {
  LabeledMatrix m;
  m.data = find_section(load_matrix(path), section).data;
  m.ids = load_ids(ids_path(path));
  if (m.ids.size() != static_cast<std::size_t>(m.data.rows()))
    throw DataError(path.string() + ": row id count does not match matrix rows");
  return m;
}

}  // namespace coldrec
