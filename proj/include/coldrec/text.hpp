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

// Artist biographies: tokenization, knowledge-base enrichment of linked
// entities, vocabulary construction and tf-idf vectors.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "coldrec/common.hpp"
#include "coldrec/wmf.hpp"

namespace coldrec {

struct Document {
  std::string artist_id;
  std::string text;
  friend bool operator==(const Document&, const Document&) = default;
};

struct KbRecord {
  std::set<std::string> classes;
  std::map<std::string, std::vector<std::string>> properties;
  std::vector<std::string> categories;
  friend bool operator==(const KbRecord&, const KbRecord&) = default;
};

using KbSnapshot = std::map<std::string, KbRecord>;

/// artist id -> entity ids detected in that artist's biography.
using AnnotationSet = std::map<std::string, std::vector<std::string>>;

/// ontology class -> property names whose values are appended.
using PropertySelection = std::map<std::string, std::vector<std::string>>;

inline const std::set<std::string>& music_class_whitelist() {
  static const std::set<std::string> classes{"MusicalArtist", "Band",       "MusicGenre",
                                             "MusicalWork",   "RecordLabel", "Instrument",
                                             "Engineer",      "Place"};
  return classes;
}

inline PropertySelection default_property_selection() {
  return {
      {"MusicalArtist", {"homeTown", "instrument", "genre", "associatedBand"}},
      {"Band", {"homeTown", "genre", "associatedBand"}},
      {"MusicalWork", {"writer", "producer", "recordedIn"}},
      {"MusicGenre", {"stylisticOrigin", "instrument"}},
  };
}

// ---------------------------------------------------------------------------
// Tokenization

namespace detail {
// ASCII letters, digits and '_' form words; bytes >= 0x80 (UTF-8 sequences)
// are kept inside words.
inline bool is_word_byte(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

inline std::size_t utf8_length(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}
}  // namespace detail

/// Lowercased maximal runs of word characters, dropping tokens shorter than
/// two characters.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (detail::utf8_length(current) >= 2) tokens.push_back(current);
    current.clear();
  };
  for (unsigned char c : text) {
    if (detail::is_word_byte(c)) {
      current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

// ---------------------------------------------------------------------------
// Enrichment

/// Keeps entities present in `kb` with at least one whitelisted class, in
/// input order, without repeats.
inline std::vector<std::string> filter_entities(const std::vector<std::string>& entities,
                                                const KbSnapshot& kb,
                                                const std::set<std::string>& whitelist = music_class_whitelist()) {
  std::vector<std::string> kept;
  std::unordered_set<std::string> seen;
  for (const auto& e : entities) {
    auto it = kb.find(e);
    if (it == kb.end() || seen.count(e)) continue;
    const bool music = std::any_of(it->second.classes.begin(), it->second.classes.end(),
                                   [&](const std::string& c) { return whitelist.count(c) != 0; });
    if (!music) continue;
    seen.insert(e);
    kept.push_back(e);
  }
  return kept;
}

/// "Abbey Road  Studios" -> "Abbey_Road_Studios".
inline std::string join_words(const std::string& value) {
  std::string out;
  bool pending = false;
  for (unsigned char c : trim(value)) {
    if (std::isspace(c)) {
      pending = true;
      continue;
    }
    if (pending) out.push_back('_');
    pending = false;
    out.push_back(static_cast<char>(c));
  }
  return out;
}

/// Appends, per entity, the selected property values of its classes and then
/// its categories to the end of the text, space separated.
inline Document enrich_document(const Document& doc, const std::vector<std::string>& entities,
                                const KbSnapshot& kb,
                                const PropertySelection& props = default_property_selection()) {
  Document out = doc;
  for (const auto& id : entities) {
    auto it = kb.find(id);
    if (it == kb.end()) continue;
    const KbRecord& rec = it->second;
    std::set<std::string> used;
    for (const auto& cls : rec.classes) {
      auto sel = props.find(cls);
      if (sel == props.end()) continue;
      for (const auto& prop : sel->second) {
        if (!used.insert(prop).second) continue;
        auto values = rec.properties.find(prop);
        if (values == rec.properties.end()) continue;
        for (const auto& v : values->second) {
          auto term = join_words(v);
          if (!term.empty()) out.text += " " + term;
        }
      }
    }
    for (const auto& cat : rec.categories) {
      auto term = join_words(cat);
      if (!term.empty()) out.text += " " + term;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vector space model

struct Vocabulary {
  std::vector<std::string> terms;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::size_t> df;
  std::size_t num_documents = 0;

  std::size_t size() const { return terms.size(); }
  double idf(std::size_t t) const {
    return std::log((1.0 + static_cast<double>(num_documents)) / (1.0 + static_cast<double>(df[t]))) + 1.0;
  }
};

/// Keeps the `cap` terms with the highest document frequency; ties go to the
/// lexicographically smaller term.
inline Vocabulary build_vocab(const std::vector<Document>& corpus, std::size_t cap) {
  if (cap < 1) throw UsageError("vocabulary cap must be >= 1");
  if (corpus.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  std::unordered_map<std::string, std::size_t> df;
  for (const auto& doc : corpus) {
    auto tokens = tokenize(doc.text);
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    for (auto& t : tokens) ++df[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(df.begin(), df.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > cap) ranked.resize(cap);
  Vocabulary v;
  v.num_documents = corpus.size();
  for (auto& [term, count] : ranked) {
    v.index.emplace(term, v.terms.size());
    v.terms.push_back(term);
    v.df.push_back(count);
  }
  return v;
}

struct FeatureVector {
  std::size_t dim = 0;
  std::vector<std::pair<std::size_t, double>> weights;  // index ascending
  bool normalized = false;

  double norm() const {
    double s = 0.0;
    for (const auto& [i, w] : weights) s += w * w;
    return std::sqrt(s);
  }
};

/// tf * (ln((1 + N) / (1 + df)) + 1) with raw in-document counts, then L2
/// normalization. Documents without vocabulary terms map to the zero vector.
inline FeatureVector tfidf_transform(const Document& doc, const Vocabulary& vocab) {
  std::map<std::size_t, double> tf;
  for (const auto& tok : tokenize(doc.text)) {
    auto it = vocab.index.find(tok);
    if (it != vocab.index.end()) tf[it->second] += 1.0;
  }
  FeatureVector fv;
  fv.dim = vocab.size();
  for (const auto& [t, count] : tf) fv.weights.emplace_back(t, count * vocab.idf(t));
  const double n = fv.norm();
  if (n > 0.0) {
    for (auto& [t, w] : fv.weights) w /= n;
    fv.normalized = true;
  }
  return fv;
}

/// Dense #docs x |vocab| feature matrix.
inline Matrix tfidf_matrix(const std::vector<Document>& docs, const Vocabulary& vocab) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(docs.size()), static_cast<Eigen::Index>(vocab.size()));
  for (std::size_t d = 0; d < docs.size(); ++d)
    for (const auto& [t, w] : tfidf_transform(docs[d], vocab).weights)
      out(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(t)) = w;
  return out;
}

inline void save_vocab(const std::filesystem::path& path, const Vocabulary& v) {
  auto out = open_output(path);
  out << "#documents\t" << v.num_documents << '\n';
  for (std::size_t t = 0; t < v.size(); ++t) out << v.terms[t] << '\t' << v.df[t] << '\n';
}

inline Vocabulary load_vocab(const std::filesystem::path& path) {
  auto in = open_input(path);
  Vocabulary v;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = split(line, '\t');
    if (fields.size() != 2) throw DataError(path.string() + ": line " + std::to_string(line_no) + ": malformed");
    if (line_no == 1) {
      if (fields[0] != "#documents") throw DataError(path.string() + ": missing #documents header");
      v.num_documents = std::stoull(fields[1]);
      continue;
    }
    v.index.emplace(fields[0], v.terms.size());
    v.terms.push_back(fields[0]);
    v.df.push_back(std::stoull(fields[1]));
  }
  return v;
}

// ---------------------------------------------------------------------------
// JSON-lines codecs

namespace detail {

template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn fn) {
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      fn(nlohmann::json::parse(line), line_no);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline std::vector<std::string> string_list(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return {};
  return j.at(key).get<std::vector<std::string>>();
}

inline void write_json_lines(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows) {
  auto out = open_output(path);
  for (const auto& r : rows) out << r.dump() << '\n';
}

}  // namespace detail

inline std::vector<Document> load_documents(const std::filesystem::path& path) {
  std::vector<Document> docs;
  detail::for_each_json_line(path, [&](const nlohmann::json& j, std::size_t line_no) {
    Document d{j.at("artist_id").get<std::string>(), j.at("text").get<std::string>()};
    if (d.text.empty())
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": empty document text");
    docs.push_back(std::move(d));
  });
  return docs;
}

inline void save_documents(const std::filesystem::path& path, const std::vector<Document>& docs) {
  std::vector<nlohmann::json> rows;
  for (const auto& d : docs) rows.push_back({{"artist_id", d.artist_id}, {"text", d.text}});
  detail::write_json_lines(path, rows);
}

inline KbSnapshot load_kb_snapshot(const std::filesystem::path& path) {
  KbSnapshot kb;
  detail::for_each_json_line(path, [&](const nlohmann::json& j, std::size_t line_no) {
    KbRecord rec;
    for (auto& c : detail::string_list(j, "classes")) rec.classes.insert(c);
    if (j.contains("properties"))
      for (const auto& [name, values] : j.at("properties").items())
        rec.properties[name] = values.get<std::vector<std::string>>();
    rec.categories = detail::string_list(j, "categories");
    const auto id = j.at("entity_id").get<std::string>();
    if (!kb.emplace(id, std::move(rec)).second)
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": duplicate entity_id '" + id + "'");
  });
  return kb;
}

inline void save_kb_snapshot(const std::filesystem::path& path, const KbSnapshot& kb) {
  std::vector<nlohmann::json> rows;
  for (const auto& [id, rec] : kb) {
    nlohmann::json props = nlohmann::json::object();
    for (const auto& [name, values] : rec.properties) props[name] = values;
    rows.push_back({{"entity_id", id},
                    {"classes", std::vector<std::string>(rec.classes.begin(), rec.classes.end())},
                    {"properties", props},
                    {"categories", rec.categories}});
  }
  detail::write_json_lines(path, rows);
}

inline AnnotationSet load_annotations(const std::filesystem::path& path) {
  AnnotationSet set;
  detail::for_each_json_line(path, [&](const nlohmann::json& j, std::size_t) {
    auto& list = set[j.at("artist_id").get<std::string>()];
    for (auto& e : detail::string_list(j, "entities")) list.push_back(std::move(e));
  });
  return set;
}

inline void save_annotations(const std::filesystem::path& path, const AnnotationSet& set) {
  std::vector<nlohmann::json> rows;
  for (const auto& [artist, entities] : set) rows.push_back({{"artist_id", artist}, {"entities", entities}});
  detail::write_json_lines(path, rows);
}

inline PropertySelection load_property_selection(const std::filesystem::path& path) {
  auto in = open_input(path);
  try {
    return nlohmann::json::parse(in).get<PropertySelection>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace coldrec
