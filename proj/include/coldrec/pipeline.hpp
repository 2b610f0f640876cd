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

// Named pipeline stages over an output directory. Each stage reads the
// artifacts of earlier stages and writes its own; the stage table records
// which stage produces every artifact so that a missing input can name it.

#include <algorithm>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coldrec/audio.hpp"
#include "coldrec/config.hpp"
#include "coldrec/eval.hpp"
#include "coldrec/feedback.hpp"
#include "coldrec/matrix_io.hpp"
#include "coldrec/models.hpp"
#include "coldrec/text.hpp"
#include "coldrec/wmf.hpp"

namespace coldrec {

struct StageInfo {
  std::string name;
  std::string summary;
  std::vector<std::string> inputs;   // artifacts, relative to the output dir
  std::vector<std::string> outputs;  // artifacts, relative to the output dir
};

inline const std::vector<std::string>& song_approaches() {
  static const std::vector<std::string> names{"audio", "sem-emb", "mm-lf-lin", "mm-lf-h1", "random", "upper-bound"};
  return names;
}

inline std::string fusion_model_artifact(FusionVariant v) {
  return std::string("models/fusion-") + fusion_variant_name(v) + ".csmx";
}

/// Song-level approaches evaluated under `cfg` (fusion rows follow the
/// configured variants).
inline std::vector<std::string> evaluated_approaches(const PipelineConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& name : song_approaches()) {
    if (name.rfind("mm-lf-", 0) == 0) {
      const auto v = parse_fusion_variant(name.substr(6));
      if (std::find(cfg.fusion_variants.begin(), cfg.fusion_variants.end(), v) == cfg.fusion_variants.end()) continue;
    }
    out.push_back(name);
  }
  return out;
}

/// "a-sem" with knowledge-base enrichment, "a-text" without.
inline std::string artist_approach(const PipelineConfig& cfg) { return cfg.enrich ? "a-sem" : "a-text"; }

inline std::vector<StageInfo> pipeline_stages(const PipelineConfig& cfg) {
  std::vector<std::string> fusion_models{"models/sem-emb.csmx"};
  for (auto v : cfg.fusion_variants) fusion_models.push_back(fusion_model_artifact(v));
  std::vector<std::string> eval_outputs;
  for (const auto& a : evaluated_approaches(cfg)) eval_outputs.push_back("eval/" + a + ".json");
  eval_outputs.push_back("eval/artist.json");
  std::vector<std::string> fusion_logs;
  for (const auto& m : fusion_models) fusion_logs.push_back(m.substr(0, m.size() - 5) + ".log.tsv");
  std::vector<std::string> fusion_outputs = fusion_models;
  fusion_outputs.insert(fusion_outputs.end(), fusion_logs.begin(), fusion_logs.end());

  std::vector<std::string> eval_inputs{"split/test.tsv",          "songs/users.csmx",     "artists/users.csmx",
                                       "text/features.csmx",      "models/artist.csmx",   "models/track.csmx",
                                       "embeddings/artist.csmx",  "embeddings/track.csmx"};
  eval_inputs.insert(eval_inputs.end(), fusion_models.begin(), fusion_models.end());

  return {
      {"split", "artist-disjoint train/val/test split of the play counts", {},
       {"split/train.tsv", "split/val.tsv", "split/test.tsv", "split/artist_assignment.tsv"}},
      {"factorize-songs", "WMF on training song plays; validation songs folded in",
       {"split/train.tsv", "split/val.tsv"},
       {"songs/users.csmx", "songs/items.csmx", "songs/val_items.csmx"}},
      {"factorize-artists", "WMF on plays aggregated to artists; validation artists folded in",
       {"split/train.tsv", "split/val.tsv"},
       {"artists/users.csmx", "artists/items.csmx", "artists/val_items.csmx"}},
      {"enrich", "append knowledge-base terms to the biographies (copy when enrichment is off)", {},
       {"text/documents.jsonl"}},
      {"vectorize", "tf-idf features with a vocabulary from training artists",
       {"text/documents.jsonl", "split/artist_assignment.tsv"},
       {"text/vocab.tsv", "text/features.csmx"}},
      {"train-artist", "text network mapping tf-idf to artist factors",
       {"text/features.csmx", "artists/items.csmx", "artists/val_items.csmx"},
       {"models/artist.csmx", "models/artist.log.tsv"}},
      {"train-track", "audio network mapping spectrogram patches to song factors",
       {"songs/items.csmx", "songs/val_items.csmx"},
       {"models/track.csmx", "models/track.log.tsv"}},
      {"extract", "artist and track embeddings",
       {"text/features.csmx", "models/artist.csmx", "models/track.csmx", "split/train.tsv", "split/val.tsv",
        "split/test.tsv"},
       {"embeddings/artist.csmx", "embeddings/track.csmx"}},
      {"train-fusion", "single-embedding and late-fusion networks on song factors",
       {"embeddings/artist.csmx", "embeddings/track.csmx", "songs/items.csmx", "songs/val_items.csmx"},
       fusion_outputs},
      {"evaluate", "MAP@K of every approach on the test songs", eval_inputs, eval_outputs},
      {"report", "summary table and paired t-tests", eval_outputs, {"report.tsv", "report.json"}},
  };
}

inline std::vector<std::string> stage_names(const PipelineConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& s : pipeline_stages(cfg)) out.push_back(s.name);
  return out;
}

inline StageInfo find_stage(const PipelineConfig& cfg, const std::string& name) {
  const auto stages = pipeline_stages(cfg);
  for (const auto& s : stages)
    if (s.name == name) return s;
  std::string valid;
  for (const auto& s : stages) valid += (valid.empty() ? "" : ", ") + s.name;
  throw UsageError("unknown stage '" + name + "'; valid stages: " + valid);
}

/// Stage that writes `artifact`, or "" for none.
inline std::string producer_of(const PipelineConfig& cfg, const std::string& artifact) {
  for (const auto& s : pipeline_stages(cfg))
    if (std::find(s.outputs.begin(), s.outputs.end(), artifact) != s.outputs.end()) return s.name;
  return {};
}

/// Throws a DataError listing every missing input together with the stage
/// that produces it.
inline void check_stage_inputs(const PipelineConfig& cfg, const StageInfo& stage) {
  std::string missing;
  for (const auto& a : stage.inputs) {
    if (std::filesystem::exists(cfg.paths.output / a)) continue;
    missing += "\n  " + (cfg.paths.output / a).string() + " (produced by stage '" + producer_of(cfg, a) + "')";
  }
  if (!missing.empty())
    throw DataError("stage '" + stage.name + "' is missing inputs; run the producing stages first:" + missing);
}

namespace detail {

inline void require_path(const std::filesystem::path& p, const std::string& key) {
  if (p.empty()) throw UsageError("config key '" + key + "' is not set");
  if (!std::filesystem::exists(p)) throw DataError("config key '" + key + "': " + p.string() + " does not exist");
}

/// Row r of the result is row `index(ids[r])` of `m`.
inline Matrix gather_rows(const LabeledMatrix& m, const std::vector<std::string>& ids, const std::string& what) {
  IdList index(m.ids);
  Matrix out(static_cast<Eigen::Index>(ids.size()), m.data.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (!index.contains(ids[r])) throw DataError(what + ": no row for '" + ids[r] + "'");
    out.row(static_cast<Eigen::Index>(r)) = m.data.row(static_cast<Eigen::Index>(index.at(ids[r])));
  }
  return out;
}

/// Keeps the users of `m` that appear in `keep`, preserving order.
inline FeedbackMatrix restrict_users(const FeedbackMatrix& m, const IdList& keep) {
  IdList users;
  std::vector<std::ptrdiff_t> map(m.num_users(), -1);
  for (std::size_t u = 0; u < m.num_users(); ++u)
    if (keep.contains(m.users()[u])) map[u] = static_cast<std::ptrdiff_t>(users.add(m.users()[u]));
  FeedbackMatrix out(std::move(users), m.items());
  for (const auto& e : m.entries())
    if (map[e.user] >= 0) out.add(static_cast<std::size_t>(map[e.user]), e.item, e.count);
  return out;
}

inline std::vector<std::ptrdiff_t> user_rows(const FeedbackMatrix& m, const std::vector<std::string>& factor_ids) {
  IdList index(factor_ids);
  std::vector<std::ptrdiff_t> out(m.num_users(), -1);
  for (std::size_t u = 0; u < m.num_users(); ++u)
    if (index.contains(m.users()[u])) out[u] = static_cast<std::ptrdiff_t>(index.at(m.users()[u]));
  return out;
}

inline WmfConfig seeded(WmfConfig c, std::uint64_t seed) {
  c.seed = seed;
  return c;
}

inline TrainConfig seeded(TrainConfig c, std::uint64_t seed) {
  c.seed = seed;
  return c;
}

struct Spectrograms {
  std::vector<std::string> ids;
  std::vector<std::shared_ptr<const Spectrogram>> specs;
};

inline Spectrograms read_spectrograms(const PipelineConfig& cfg, const std::vector<std::string>& ids) {
  require_path(cfg.paths.spectrograms, "paths.spectrograms");
  Spectrograms out;
  out.ids = ids;
  for (const auto& id : ids)
    out.specs.push_back(std::make_shared<const Spectrogram>(read_spectrogram(spectrogram_path(cfg.paths.spectrograms, id))));
  return out;
}

inline std::size_t patch_length(const PipelineConfig& cfg, const Spectrogram& sample) {
  if (cfg.patch_frames > 0) return cfg.patch_frames;
  return patch_frames(cfg.patch_seconds, sample.sample_rate, sample.hop);
}

inline std::size_t spectrogram_bins(const Spectrograms& s) {
  if (s.specs.empty()) throw DataError("no spectrograms to read");
  return s.specs.front()->bins;
}

inline std::vector<std::string> items_of(const std::filesystem::path& triples) { return load_triples(triples).items().ids(); }

inline Network artist_network(const PipelineConfig& cfg, std::size_t vocab) {
  return Network(build_artist_net(vocab, static_cast<std::size_t>(cfg.wmf_artists.k), cfg.artist));
}

inline Network track_network(const PipelineConfig& cfg, std::size_t bins, std::size_t frames) {
  return Network(build_track_net(bins, frames, static_cast<std::size_t>(cfg.wmf_songs.k), cfg.scale, cfg.track));
}

inline void log_line(std::ostream* log, const std::string& s) {
  if (log) *log << s << '\n';
}

inline std::function<void(const EpochLog&)> epoch_logger(std::ostream* log, const std::string& what) {
  if (!log) return {};
  return [log, what](const EpochLog& e) {
    *log << what << " epoch " << e.epoch << " train " << format_double(e.train_loss) << " val "
         << format_double(e.val_loss) << '\n';
  };
}

// --- stages ---------------------------------------------------------------

inline void stage_split(const PipelineConfig& cfg, std::ostream*) {
  require_path(cfg.paths.triples, "paths.triples");
  require_path(cfg.paths.artist_map, "paths.artist_map");
  const auto plays = load_triples(cfg.paths.triples);
  const auto am = load_artist_map(cfg.paths.artist_map);
  save_split(cfg.paths.output / "split", split_by_artist(plays, am, cfg.split, sub_seed(cfg.seed, "split")));
}

inline void factorize(const PipelineConfig& cfg, const std::string& dir, const WmfConfig& wmf, bool artists,
                      std::ostream* log) {
  const auto& out = cfg.paths.output;
  auto train = load_triples(out / "split/train.tsv");
  auto val = load_triples(out / "split/val.tsv");
  if (artists) {
    require_path(cfg.paths.artist_map, "paths.artist_map");
    const auto am = load_artist_map(cfg.paths.artist_map);
    train = aggregate_to_artist(train, am);
    val = aggregate_to_artist(val, am);
  }
  std::vector<double> trace;
  const auto model = factorize_wmf(train, seeded(wmf, sub_seed(cfg.seed, "wmf-" + dir)), &trace);
  log_line(log, dir + ": objective " + format_double(trace.front()) + " -> " + format_double(trace.back()) + " after " +
                    std::to_string(trace.size() - 1) + " sweeps");
  save_labeled(out / dir / "users.csmx", "factors", {train.users().ids(), model.user_factors});
  save_labeled(out / dir / "items.csmx", "factors", {train.items().ids(), model.item_factors});
  const Matrix folded = fold_in_items(model.user_factors, val, user_rows(val, train.users().ids()), wmf.alpha, wmf.lambda);
  save_labeled(out / dir / "val_items.csmx", "factors", {val.items().ids(), folded});
}

inline void stage_enrich(const PipelineConfig& cfg, std::ostream* log) {
  require_path(cfg.paths.documents, "paths.documents");
  auto docs = load_documents(cfg.paths.documents);
  if (cfg.enrich) {
    require_path(cfg.paths.annotations, "paths.annotations");
    require_path(cfg.paths.kb_snapshot, "paths.kb_snapshot");
    const auto annotations = load_annotations(cfg.paths.annotations);
    const auto kb = load_kb_snapshot(cfg.paths.kb_snapshot);
    PropertySelection props = default_property_selection();
    if (!cfg.paths.properties.empty()) {
      require_path(cfg.paths.properties, "paths.properties");
      props = load_property_selection(cfg.paths.properties);
    }
    std::size_t linked = 0;
    for (auto& d : docs) {
      auto it = annotations.find(d.artist_id);
      if (it == annotations.end()) continue;
      const auto kept = filter_entities(it->second, kb);
      linked += kept.size();
      d = enrich_document(d, kept, kb, props);
    }
    log_line(log, "enrich: " + std::to_string(linked) + " music entities linked over " + std::to_string(docs.size()) +
                      " documents");
  }
  save_documents(cfg.paths.output / "text/documents.jsonl", docs);
}

inline void stage_vectorize(const PipelineConfig& cfg, std::ostream* log) {
  const auto& out = cfg.paths.output;
  const auto docs = load_documents(out / "text/documents.jsonl");
  std::set<std::string> train_artists;
  for (const auto& [artist, p] : load_artist_assignment(out / "split/artist_assignment.tsv"))
    if (p == Partition::kTrain) train_artists.insert(artist);
  std::vector<Document> corpus;
  std::set<std::string> seen;
  for (const auto& d : docs) {
    if (!seen.insert(d.artist_id).second) throw DataError("documents: duplicate artist '" + d.artist_id + "'");
    if (train_artists.count(d.artist_id)) corpus.push_back(d);
  }
  const auto vocab = build_vocab(corpus, cfg.vocab_size);
  log_line(log, "vectorize: " + std::to_string(vocab.size()) + " terms from " + std::to_string(corpus.size()) +
                    " training documents");
  std::vector<std::string> ids;
  for (const auto& d : docs) ids.push_back(d.artist_id);
  save_vocab(out / "text/vocab.tsv", vocab);
  save_labeled(out / "text/features.csmx", "tfidf", {ids, tfidf_matrix(docs, vocab)});
}

inline void stage_train_artist(const PipelineConfig& cfg, std::ostream* log) {
  const auto& out = cfg.paths.output;
  const auto features = load_labeled(out / "text/features.csmx", "tfidf");
  const auto train = load_labeled(out / "artists/items.csmx", "factors");
  const auto val = load_labeled(out / "artists/val_items.csmx", "factors");
  const Network net = artist_network(cfg, static_cast<std::size_t>(features.data.cols()));
  const DenseFeatures x_train(gather_rows(features, train.ids, "text features"));
  const DenseFeatures x_val(gather_rows(features, val.ids, "text features"));
  const auto result = train_mapping(net, x_train, train.data, &x_val, &val.data,
                                    seeded(cfg.train_artist, sub_seed(cfg.seed, "train-artist")),
                                    epoch_logger(log, "train-artist"));
  nn::save_params(out / "models/artist.csmx", net, result.params);
  save_train_log(out / "models/artist.log.tsv", result.log);
}

inline void stage_train_track(const PipelineConfig& cfg, std::ostream* log) {
  const auto& out = cfg.paths.output;
  const auto train = load_labeled(out / "songs/items.csmx", "factors");
  const auto val = load_labeled(out / "songs/val_items.csmx", "factors");
  const auto s_train = read_spectrograms(cfg, train.ids);
  const auto s_val = read_spectrograms(cfg, val.ids);
  const std::size_t length = patch_length(cfg, *s_train.specs.front());
  const Network net = track_network(cfg, spectrogram_bins(s_train), length);
  const PatchFeatures x_train(s_train.ids, s_train.specs, length);
  const PatchFeatures x_val(s_val.ids, s_val.specs, length);
  const auto result = train_mapping(net, x_train, train.data, &x_val, &val.data,
                                    seeded(cfg.train_track, sub_seed(cfg.seed, "train-track")),
                                    epoch_logger(log, "train-track"));
  nn::save_params(out / "models/track.csmx", net, result.params);
  save_train_log(out / "models/track.log.tsv", result.log);
}

/// Songs of the three split files, in train, val, test order.
inline std::vector<std::string> all_split_songs(const PipelineConfig& cfg) {
  std::vector<std::string> ids;
  for (const char* part : {"train", "val", "test"}) {
    const auto items = items_of(cfg.paths.output / "split" / (std::string(part) + ".tsv"));
    ids.insert(ids.end(), items.begin(), items.end());
  }
  return ids;
}

inline void stage_extract(const PipelineConfig& cfg, std::ostream* log) {
  const auto& out = cfg.paths.output;
  const auto features = load_labeled(out / "text/features.csmx", "tfidf");
  const Network artist_net = artist_network(cfg, static_cast<std::size_t>(features.data.cols()));
  const auto artist_params = nn::load_params(out / "models/artist.csmx", artist_net);
  const auto artist_emb = extract_embeddings(artist_net, artist_params, DenseFeatures(features.data), features.ids);
  save_labeled(out / "embeddings/artist.csmx", "embedding", {artist_emb.ids, artist_emb.values});

  const auto specs = read_spectrograms(cfg, all_split_songs(cfg));
  const std::size_t length = patch_length(cfg, *specs.specs.front());
  const Network track_net = track_network(cfg, spectrogram_bins(specs), length);
  const auto track_params = nn::load_params(out / "models/track.csmx", track_net);
  const auto track_emb =
      extract_embeddings(track_net, track_params, PatchFeatures(specs.ids, specs.specs, length), specs.ids);
  save_labeled(out / "embeddings/track.csmx", "embedding", {track_emb.ids, track_emb.values});
  log_line(log, "extract: " + std::to_string(artist_emb.ids.size()) + " artists x " +
                    std::to_string(artist_emb.dim()) + ", " + std::to_string(track_emb.ids.size()) + " tracks x " +
                    std::to_string(track_emb.dim()));
}

/// Artist embedding of each song's artist, aligned with `songs`.
inline Matrix artist_rows_for_songs(const PipelineConfig& cfg, const LabeledMatrix& artist_emb,
                                    const std::vector<std::string>& songs) {
  require_path(cfg.paths.artist_map, "paths.artist_map");
  const auto am = load_artist_map(cfg.paths.artist_map);
  std::vector<std::string> artists;
  for (const auto& s : songs) artists.push_back(am.artist(s));
  return gather_rows(artist_emb, artists, "artist embeddings");
}

inline Network sem_emb_network(const PipelineConfig& cfg, std::size_t dim) {
  return Network(build_embedding_net(dim, static_cast<std::size_t>(cfg.wmf_songs.k), cfg.sem_emb_dropout));
}

inline Network fusion_network(const PipelineConfig& cfg, FusionVariant v, std::size_t dim_a, std::size_t dim_t) {
  return Network(build_fusion_net(v, dim_a, dim_t, static_cast<std::size_t>(cfg.wmf_songs.k), cfg.fusion));
}

inline void stage_train_fusion(const PipelineConfig& cfg, std::ostream* log) {
  const auto& out = cfg.paths.output;
  const auto artist_emb = load_labeled(out / "embeddings/artist.csmx", "embedding");
  const auto track_emb = load_labeled(out / "embeddings/track.csmx", "embedding");
  const auto train = load_labeled(out / "songs/items.csmx", "factors");
  const auto val = load_labeled(out / "songs/val_items.csmx", "factors");
  const Matrix a_train = artist_rows_for_songs(cfg, artist_emb, train.ids);
  const Matrix a_val = artist_rows_for_songs(cfg, artist_emb, val.ids);
  const Matrix t_train = gather_rows(track_emb, train.ids, "track embeddings");
  const Matrix t_val = gather_rows(track_emb, val.ids, "track embeddings");

  auto fit = [&](const Network& net, const FeatureSource& x_train, const FeatureSource& x_val, const std::string& name) {
    const auto result = train_mapping(net, x_train, train.data, &x_val, &val.data,
                                      seeded(cfg.train_fusion, sub_seed(cfg.seed, "train-" + name)),
                                      epoch_logger(log, name));
    nn::save_params(out / "models" / (name + ".csmx"), net, result.params);
    save_train_log(out / "models" / (name + ".log.tsv"), result.log);
  };
  fit(sem_emb_network(cfg, static_cast<std::size_t>(a_train.cols())), DenseFeatures(a_train), DenseFeatures(a_val),
      "sem-emb");
  for (auto v : cfg.fusion_variants) {
    const auto net = fusion_network(cfg, v, static_cast<std::size_t>(a_train.cols()), static_cast<std::size_t>(t_train.cols()));
    fit(net, DenseFeatures(std::vector<Matrix>{a_train, t_train}), DenseFeatures(std::vector<Matrix>{a_val, t_val}),
        std::string("fusion-") + fusion_variant_name(v));
  }
}

inline void write_eval(const PipelineConfig& cfg, const std::string& approach, const EvalReport& r, std::ostream* log) {
  save_eval_report(cfg.paths.output / "eval" / (approach + ".tsv"), cfg.paths.output / "eval" / (approach + ".json"), r);
  log_line(log, "evaluate: " + approach + " MAP@" + std::to_string(r.k) + " = " + format_double(r.map) + " over " +
                    std::to_string(r.users()) + " users");
}

/// Test feedback restricted to users with training factors, plus those
/// factors aligned with its rows.
struct EvalUsers {
  FeedbackMatrix test;
  Matrix factors;
};

inline EvalUsers eval_users(const FeedbackMatrix& test, const LabeledMatrix& user_factors) {
  EvalUsers e;
  e.test = restrict_users(test, IdList(user_factors.ids));
  if (e.test.empty()) throw DataError("evaluate: no test user has training factors");
  e.factors = gather_rows(user_factors, e.test.users().ids(), "user factors");
  return e;
}

/// Artist-level MAP@K of the text network on the test artists. Needs only
/// the split, artist factors, text features and the artist model.
inline EvalReport evaluate_artist_level(const PipelineConfig& cfg) {
  const auto& out = cfg.paths.output;
  require_path(cfg.paths.artist_map, "paths.artist_map");
  const auto test = aggregate_to_artist(load_triples(out / "split/test.tsv"), load_artist_map(cfg.paths.artist_map));
  const auto users = eval_users(test, load_labeled(out / "artists/users.csmx", "factors"));
  const auto features = load_labeled(out / "text/features.csmx", "tfidf");
  const Network net = artist_network(cfg, static_cast<std::size_t>(features.data.cols()));
  const Matrix items = predict_factors(net, nn::load_params(out / "models/artist.csmx", net),
                                       DenseFeatures(gather_rows(features, users.test.items().ids(), "text features")));
  return map_at_k(users.factors, items, users.test, cfg.eval_k);
}

/// Predicted factors of the content-based approaches for `songs`, in
/// report order: audio, sem-emb, then one mm-lf row per fusion variant.
inline std::vector<std::pair<std::string, Matrix>> predict_song_factors(const PipelineConfig& cfg,
                                                                       const std::vector<std::string>& songs) {
  const auto& out = cfg.paths.output;
  std::vector<std::pair<std::string, Matrix>> preds;
  const auto specs = read_spectrograms(cfg, songs);
  const std::size_t length = patch_length(cfg, *specs.specs.front());
  const Network track_net = track_network(cfg, spectrogram_bins(specs), length);
  preds.emplace_back("audio", predict_factors(track_net, nn::load_params(out / "models/track.csmx", track_net),
                                              PatchFeatures(specs.ids, specs.specs, length)));

  const auto artist_emb = load_labeled(out / "embeddings/artist.csmx", "embedding");
  const auto track_emb = load_labeled(out / "embeddings/track.csmx", "embedding");
  const Matrix a = artist_rows_for_songs(cfg, artist_emb, songs);
  const Matrix t = gather_rows(track_emb, songs, "track embeddings");
  const Network sem = sem_emb_network(cfg, static_cast<std::size_t>(a.cols()));
  preds.emplace_back("sem-emb", predict_factors(sem, nn::load_params(out / "models/sem-emb.csmx", sem), DenseFeatures(a)));
  for (auto v : cfg.fusion_variants) {
    const auto net = fusion_network(cfg, v, static_cast<std::size_t>(a.cols()), static_cast<std::size_t>(t.cols()));
    preds.emplace_back(std::string("mm-lf-") + fusion_variant_name(v),
                       predict_factors(net, nn::load_params(out / fusion_model_artifact(v), net),
                                       DenseFeatures(std::vector<Matrix>{a, t})));
  }
  return preds;
}

/// Text network outputs for every artist with features.
inline LabeledMatrix predict_artist_factors(const PipelineConfig& cfg) {
  const auto& out = cfg.paths.output;
  const auto features = load_labeled(out / "text/features.csmx", "tfidf");
  const Network net = artist_network(cfg, static_cast<std::size_t>(features.data.cols()));
  return {features.ids,
          predict_factors(net, nn::load_params(out / "models/artist.csmx", net), DenseFeatures(features.data))};
}

inline void stage_evaluate(const PipelineConfig& cfg, std::ostream* log) {
  const auto& out = cfg.paths.output;
  const auto users = eval_users(load_triples(out / "split/test.tsv"), load_labeled(out / "songs/users.csmx", "factors"));
  const auto& test = users.test;
  const std::size_t k = cfg.eval_k;
  for (const auto& [name, items] : predict_song_factors(cfg, test.items().ids()))
    write_eval(cfg, name, map_at_k(users.factors, items, test, k), log);
  write_eval(cfg, "random",
             map_at_k(users.factors,
                      random_unit_factors(test.num_items(), static_cast<std::size_t>(cfg.wmf_songs.k),
                                          sub_seed(cfg.seed, "random")),
                      test, k),
             log);
  const auto upper = make_baseline_factors(BaselineKind::kUpperBound, test, cfg.wmf_songs, sub_seed(cfg.seed, "upper-bound"));
  write_eval(cfg, "upper-bound", map_at_k(upper.user_factors, upper.item_factors, test, k), log);

  const auto r = evaluate_artist_level(cfg);
  save_eval_report(out / "eval/artist.tsv", out / "eval/artist.json", r);
  log_line(log, "evaluate: " + artist_approach(cfg) + " (artist level) MAP@" + std::to_string(k) + " = " +
                    format_double(r.map) + " over " + std::to_string(r.users()) + " users");
}

inline nlohmann::ordered_json summary_row(const std::string& name, const EvalReport& r) {
  const auto ms = mean_stderr(r.ap);
  nlohmann::ordered_json j;
  j["approach"] = name;
  j["map"] = r.map;
  j["stderr"] = ms.stderr_;
  j["users"] = r.users();
  return j;
}

inline void stage_report(const PipelineConfig& cfg, std::ostream* log) {
  const auto& out = cfg.paths.output;
  const auto names = evaluated_approaches(cfg);
  std::vector<EvalReport> reports;
  for (const auto& n : names) reports.push_back(load_eval_report(out / "eval" / (n + ".tsv"), out / "eval" / (n + ".json")));
  const auto artist = load_eval_report(out / "eval/artist.tsv", out / "eval/artist.json");

  auto tsv = open_output(out / "report.tsv");
  tsv << "approach\tmap\tusers\n";
  nlohmann::ordered_json j;
  j["k"] = cfg.eval_k;
  j["approaches"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < names.size(); ++i) {
    tsv << names[i] << '\t' << format_double(reports[i].map) << '\t' << reports[i].users() << '\n';
    j["approaches"].push_back(summary_row(names[i], reports[i]));
    log_line(log, names[i] + "\t" + format_double(reports[i].map));
  }
  j["artist_level"] = summary_row(artist_approach(cfg), artist);
  j["paired_ttests"] = nlohmann::ordered_json::array();
  for (std::size_t a = 0; a < names.size(); ++a)
    for (std::size_t b = a + 1; b < names.size(); ++b) {
      if (reports[a].user_ids != reports[b].user_ids)
        throw DataError("report: " + names[a] + " and " + names[b] + " were evaluated on different users");
      const auto t = paired_ttest(reports[a].ap, reports[b].ap);
      nlohmann::ordered_json row;
      row["a"] = names[a];
      row["b"] = names[b];
      row["degenerate"] = t.degenerate;
      row["t"] = t.degenerate ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(t.t);
      row["p"] = t.degenerate ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(t.p);
      row["df"] = t.df;
      j["paired_ttests"].push_back(row);
    }
  auto json = open_output(out / "report.json");
  json << j.dump(2) << '\n';
}

}  // namespace detail

using detail::evaluate_artist_level;
using detail::predict_artist_factors;
using detail::predict_song_factors;

/// Runs one stage after checking that its inputs exist. Progress lines go to
/// `log` when given.
inline void run_stage(const PipelineConfig& cfg, const std::string& name, std::ostream* log = nullptr) {
  const StageInfo stage = find_stage(cfg, name);
  check_stage_inputs(cfg, stage);
  using Fn = void (*)(const PipelineConfig&, std::ostream*);
  static const std::map<std::string, Fn> table{
      {"split", detail::stage_split},
      {"factorize-songs",
       [](const PipelineConfig& c, std::ostream* l) { detail::factorize(c, "songs", c.wmf_songs, false, l); }},
      {"factorize-artists",
       [](const PipelineConfig& c, std::ostream* l) { detail::factorize(c, "artists", c.wmf_artists, true, l); }},
      {"enrich", detail::stage_enrich},
      {"vectorize", detail::stage_vectorize},
      {"train-artist", detail::stage_train_artist},
      {"train-track", detail::stage_train_track},
      {"extract", detail::stage_extract},
      {"train-fusion", detail::stage_train_fusion},
      {"evaluate", detail::stage_evaluate},
      {"report", detail::stage_report},
  };
  table.at(name)(cfg, log);
}

/// Every stage in table order.
inline void run_pipeline(const PipelineConfig& cfg, std::ostream* log = nullptr) {
  for (const auto& name : stage_names(cfg)) {
    detail::log_line(log, "== " + name);
    run_stage(cfg, name, log);
  }
}

}  // namespace coldrec
