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

// Acceptance run: one PASS/FAIL line per primary criterion. Exits non-zero
// when any criterion fails. Optional argument: working directory for the
// generated corpora (defaults to a fresh directory under the system temp
// path).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "coldrec/config.hpp"
#include "coldrec/eval.hpp"
#include "coldrec/models.hpp"
#include "coldrec/neural/optim.hpp"
#include "coldrec/pipeline.hpp"
#include "coldrec/synth.hpp"
#include "coldrec/wmf.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace coldrec;
using nn::LayerSpec;
using nn::Mode;
using nn::Shape;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
}

// --- ALS vs gradient descent -------------------------------------------------

Outcome als_oracle() {
  const auto t0 = Clock::now();
  const std::size_t users = 8, items = 10;
  std::mt19937_64 rng(2024);
  std::bernoulli_distribution present(0.4);
  std::uniform_int_distribution<int> plays(1, 9);
  std::vector<std::string> uids, iids;
  for (std::size_t u = 0; u < users; ++u) uids.push_back("u" + std::to_string(u));
  for (std::size_t i = 0; i < items; ++i) iids.push_back("i" + std::to_string(i));
  FeedbackMatrix m{IdList(uids), IdList(iids)};
  oracle::DenseMatrix dense = oracle::DenseMatrix::Zero(users, items);
  for (std::size_t u = 0; u < users; ++u)
    for (std::size_t i = 0; i < items; ++i)
      if (present(rng)) {
        const int c = plays(rng);
        m.add(u, i, static_cast<std::uint64_t>(c));
        dense(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(i)) = c;
      }

  WmfConfig cfg;
  cfg.k = 3;
  cfg.alpha = 10.0;
  cfg.lambda = 0.1;
  cfg.iterations = 5000;
  cfg.init_scale = 0.1;
  cfg.seed = 11;
  cfg.early_stop_tol = 1e-15;
  const auto model = factorize_wmf(m, cfg);
  const double als = als_objective(model, m, cfg.alpha, cfg.lambda);

  // The objective is non-convex and ALS and gradient descent follow different
  // paths from a shared start, so they can settle in different minima. The
  // oracle therefore descends from a random perturbation of the ALS point,
  // with its own objective and gradient, and must land on the same value.
  std::mt19937_64 jitter(cfg.seed + 1);
  const Matrix x0 = model.user_factors + random_normal_matrix(users, 3, 1e-2, jitter);
  const Matrix y0 = model.item_factors + random_normal_matrix(items, 3, 1e-2, jitter);
  const double gd = oracle::wmf_gradient_descent(dense, x0, y0, cfg.alpha, cfg.lambda);
  const double rel = std::abs(als - gd) / std::abs(gd);
  const double secs = seconds_since(t0);
  return {rel <= 1e-5 && secs < 5.0,
          "ALS " + fmt(als) + " vs GD " + fmt(gd) + ", relative difference " + fmt(rel) + " (<= 1e-5), " +
              fmt(secs) + " s (< 5 s)"};
}

// --- gradient verification ----------------------------------------------------

nn::Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
  nn::Tensor t(std::move(shape));
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& x : t.data) x = g(rng);
  return t;
}

NetworkSpec single(Shape input, std::vector<LayerSpec> layers) {
  NetworkSpec s;
  s.branches.push_back({"x", std::move(input), {}});
  s.trunk = std::move(layers);
  return s;
}

Outcome gradient_verification() {
  const auto t0 = Clock::now();
  struct Case {
    std::string name;
    NetworkSpec spec;
  };
  NetworkSpec concat;
  concat.branches.push_back({"a", {4}, {LayerSpec::dense(3)}});
  concat.branches.push_back({"b", {5}, {LayerSpec::dense(2)}});
  concat.trunk = {LayerSpec::concat(2), LayerSpec::dense(3)};
  concat.tap = 1;
  const std::vector<Case> cases{
      {"dense", single({5}, {LayerSpec::dense(4)})},
      {"conv1d_time", single({2, 7}, {LayerSpec::conv1d_time(3, 4), LayerSpec::flatten(), LayerSpec::dense(3)})},
      {"conv1d_time_valid",
       single({3, 6}, {LayerSpec::conv1d_time(2, 3, nn::Padding::kValid), LayerSpec::flatten(), LayerSpec::dense(3)})},
      {"maxpool_time",
       single({2, 8}, {LayerSpec::conv1d_time(3, 2), LayerSpec::maxpool_time(2), LayerSpec::flatten(), LayerSpec::dense(3)})},
      {"maxpool_time_to", single({2, 7}, {LayerSpec::conv1d_time(3, 2), LayerSpec::maxpool_time_to(3),
                                          LayerSpec::flatten(), LayerSpec::dense(3)})},
      {"relu", single({5}, {LayerSpec::dense(6), LayerSpec::relu(), LayerSpec::dense(3)})},
      {"dropout", single({5}, {LayerSpec::dense(6), LayerSpec::dropout(0.4), LayerSpec::dense(3)})},
      // A bias directly before batchnorm has an exactly zero gradient, which
      // the relative-error floor cannot certify; the relu breaks the shift
      // invariance.
      {"batchnorm",
       single({5}, {LayerSpec::dense(6), LayerSpec::relu(), LayerSpec::batchnorm(), LayerSpec::dense(3)})},
      {"l2norm", single({5}, {LayerSpec::dense(6), LayerSpec::l2norm(), LayerSpec::dense(3)})},
      {"flatten", single({3, 4}, {LayerSpec::flatten(), LayerSpec::dense(3)})},
      {"concat", concat},
      {"artist-net", build_artist_net(30, 8)},
      {"fusion-h1-net", build_fusion_net(FusionVariant::kH1, 20, 24, 8)},
  };
  double worst = 0.0;
  std::string worst_name;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const Network net(cases[c].spec);
    std::mt19937_64 rng(sub_seed(77, cases[c].name));
    const auto params = nn::init_params(net, sub_seed(78, cases[c].name));
    std::vector<nn::Tensor> inputs;
    for (const auto& b : cases[c].spec.branches) {
      Shape shape{6};
      shape.insert(shape.end(), b.input.begin(), b.input.end());
      inputs.push_back(random_tensor(shape, rng));
    }
    const auto target = random_tensor({6, net.output_dim()}, rng);
    nn::GradientCheckOptions opt;
    opt.mode = Mode::kTrain;  // dropout masks are fixed by the seed
    opt.seed = 5;
    const double err = nn::gradient_check(net, params, inputs, target, opt);
    if (err > worst) {
      worst = err;
      worst_name = cases[c].name;
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 30.0, std::to_string(cases.size()) + " networks, max relative error " + fmt(worst) +
                                           " (" + worst_name + ", < 1e-4), " + fmt(secs) + " s (< 30 s)"};
}

// --- ranking metrics ----------------------------------------------------------

Outcome ranking_oracle() {
  double worst = 0.0;
  std::size_t instances = 0;
  for (std::size_t n = 1; n <= 5; ++n) {
    // Scores over {0, 1, 2}^n cover every ordering, ties included.
    std::size_t patterns = 1;
    for (std::size_t i = 0; i < n; ++i) patterns *= 3;
    for (std::size_t code = 0; code < patterns; ++code) {
      std::vector<double> scores(n);
      for (std::size_t i = 0, c = code; i < n; ++i, c /= 3) scores[i] = static_cast<double>(c % 3);
      const auto ranking = oracle::full_sort_ranking(scores);
      Matrix item_factors(static_cast<Eigen::Index>(n), 1);
      for (std::size_t i = 0; i < n; ++i) item_factors(static_cast<Eigen::Index>(i), 0) = scores[i];
      const Matrix user_factors = Matrix::Ones(1, 1);
      for (std::size_t mask = 1; mask < (1u << n); ++mask) {
        std::set<std::size_t> rel;
        for (std::size_t i = 0; i < n; ++i)
          if (mask & (1u << i)) rel.insert(i);
        if (rel.size() > 3) continue;
        FeedbackMatrix test{IdList({"u"}), IdList([&] {
                              std::vector<std::string> ids;
                              for (std::size_t i = 0; i < n; ++i) ids.push_back("i" + std::to_string(i));
                              return ids;
                            }())};
        for (auto i : rel) test.add(0, i, 1);
        const std::unordered_set<std::size_t> rel_set(rel.begin(), rel.end());
        for (std::size_t k = 1; k <= n + 1; ++k) {
          const double expected = oracle::average_precision(ranking, rel, k);
          const auto ranked = rank_scores(predict_scores(user_factors.row(0).transpose(), item_factors), k);
          worst = std::max(worst, std::abs(average_precision(ranked, rel_set, k) - expected));
          worst = std::max(worst, std::abs(map_at_k(user_factors, item_factors, test, k).map - expected));
          ++instances;
        }
      }
    }
  }
  return {worst < 1e-12, std::to_string(instances) + " instances, max |difference| " + fmt(worst) + " (< 1e-12)"};
}

// --- end-to-end ---------------------------------------------------------------

/// Training settings shared by the acceptance corpora.
std::string tuning(const std::string& extra = {}) {
  return "wmf.songs.k = 32\n"
         "wmf.artists.k = 32\n"
         "eval.k = 500\n"
         "model.scale = 0.125\n"
         "train.artist.batch = 32\n"
         "train.artist.max_epochs = 60\n"
         "train.artist.patience = 10\n"
         "train.track.batch = 32\n"
         "train.track.max_epochs = 40\n"
         "train.track.patience = 8\n"
         "train.fusion.batch = 32\n"
         "train.fusion.max_epochs = 100\n"
         "train.fusion.patience = 15\n" +
         extra;
}

PipelineConfig config_for(const fs::path& data, const fs::path& out, const std::string& extra) {
  std::ifstream in(data / "pipeline.conf");
  std::stringstream text;
  text << in.rdbuf() << tuning(extra);
  auto cfg = pipeline_config_from(KeyValues::parse(text.str(), (data / "pipeline.conf").string()), data);
  cfg.paths.output = out;
  return cfg;
}

struct EndToEnd {
  PipelineConfig cfg;
  std::vector<std::string> names;
  std::vector<EvalReport> reports;
  double seconds = 0.0;
  bool ran = false;
};

EndToEnd e2e;

const EvalReport& row(const std::string& name) {
  for (std::size_t i = 0; i < e2e.names.size(); ++i)
    if (e2e.names[i] == name) return e2e.reports[i];
  throw DataError("report has no row '" + name + "'");
}

/// a beats b by at least twice the larger standard error of the two means.
bool clear_gap(const EvalReport& a, const EvalReport& b, std::string& detail, const std::string& la,
               const std::string& lb) {
  const double se = std::max(mean_stderr(a.ap).stderr_, mean_stderr(b.ap).stderr_);
  const double gap = a.map - b.map;
  detail += la + " " + fmt(a.map) + " > " + lb + " " + fmt(b.map) + " (gap " + fmt(gap) + ", 2 SE " + fmt(2 * se) + "); ";
  return gap >= 2.0 * se;
}

Outcome end_to_end(const fs::path& work) {
  const auto t0 = Clock::now();
  SyntheticSpec spec;
  spec.users = 500;
  spec.artists = 200;
  spec.songs_per_artist = 10;
  spec.latent_dim = 16;
  spec.seed = 2016;
  spec.output = work / "e2e";
  generate_synthetic_dataset(spec);
  e2e.cfg = config_for(spec.output, spec.output / "out", "");
  run_pipeline(e2e.cfg);
  e2e.seconds = seconds_since(t0);
  e2e.ran = true;

  const auto& out = e2e.cfg.paths.output;
  std::ifstream tsv(out / "report.tsv");
  std::string line;
  std::getline(tsv, line);
  while (std::getline(tsv, line)) {
    const auto name = split(line, '\t').at(0);
    e2e.names.push_back(name);
    e2e.reports.push_back(load_eval_report(out / "eval" / (name + ".tsv"), out / "eval" / (name + ".json")));
  }
  if (e2e.names != song_approaches()) return {false, "report rows differ from the six approaches"};

  std::string detail;
  const auto& best_single = row("sem-emb").map >= row("audio").map ? row("sem-emb") : row("audio");
  const std::string best_name = row("sem-emb").map >= row("audio").map ? "sem-emb" : "audio";
  bool ok = clear_gap(row("upper-bound"), row("mm-lf-lin"), detail, "upper-bound", "mm-lf-lin");
  ok &= clear_gap(row("mm-lf-lin"), best_single, detail, "mm-lf-lin", best_name);
  ok &= clear_gap(best_single, row("random"), detail, best_name, "random");
  ok &= e2e.seconds < 600.0;
  return {ok, detail + std::to_string(row("random").users()) + " users, " + fmt(e2e.seconds) + " s (< 600 s)"};
}

Outcome enrichment_benefit(const fs::path& work) {
  if (!e2e.ran) return {false, "end-to-end run unavailable"};
  // Same corpus, split and artist factors; only the documents differ.
  auto plain = config_for(e2e.cfg.paths.output.parent_path(), work / "e2e" / "plain", "text.enrich = false\n");
  for (const char* stage : {"split", "factorize-artists", "enrich", "vectorize", "train-artist"}) run_stage(plain, stage);
  const auto a_text = evaluate_artist_level(plain);
  const auto a_sem = load_eval_report(e2e.cfg.paths.output / "eval/artist.tsv", e2e.cfg.paths.output / "eval/artist.json");
  if (a_sem.user_ids != a_text.user_ids) return {false, "artist-level runs evaluated different users"};
  std::string detail;
  const bool ok = clear_gap(a_sem, a_text, detail, "a-sem", "a-text");
  return {ok, detail + std::to_string(a_sem.users()) + " users"};
}

Outcome unit_norm_outputs() {
  if (!e2e.ran) return {false, "end-to-end run unavailable"};
  const auto& cfg = e2e.cfg;
  const auto test = load_triples(cfg.paths.output / "split/test.tsv");
  auto preds = predict_song_factors(cfg, test.items().ids());
  preds.emplace_back("artist", predict_artist_factors(cfg).data);
  double worst = 0.0;
  std::size_t rows = 0;
  for (const auto& [name, m] : preds)
    for (Eigen::Index r = 0; r < m.rows(); ++r, ++rows) worst = std::max(worst, std::abs(m.row(r).norm() - 1.0));
  return {worst <= 1e-6, std::to_string(rows) + " rows from " + std::to_string(preds.size()) +
                             " trained networks, max | ||row|| - 1 | = " + fmt(worst) + " (<= 1e-6)"};
}

Outcome full_scale_dimensions() {
  const Network artist(build_artist_net(10000, 200));
  const Network track(build_track_net(96, patch_frames(15.0, 22050, 1024), 200, 1.0));
  const Network lin(build_fusion_net(FusionVariant::kLin, artist.embedding_dim(), track.embedding_dim(), 200));
  const bool ok = artist.embedding_dim() == 2048 && track.embedding_dim() == 4096 && lin.embedding_dim() == 6144;
  return {ok, "artist " + std::to_string(artist.embedding_dim()) + ", track " + std::to_string(track.embedding_dim()) +
                  ", fusion-lin input " + std::to_string(lin.embedding_dim()) + " (2048, 4096, 6144)"};
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism(const fs::path& work) {
  SyntheticSpec spec;
  spec.users = 120;
  spec.artists = 40;
  spec.songs_per_artist = 5;
  spec.latent_dim = 8;
  spec.frames = 72;
  spec.bins = 24;
  spec.seed = 99;
  spec.output = work / "determinism";
  generate_synthetic_dataset(spec);
  const std::string quick =
      "train.artist.max_epochs = 4\ntrain.track.max_epochs = 2\ntrain.fusion.max_epochs = 4\nmodel.artist_hidden = 256\n"
      "wmf.songs.k = 8\nwmf.artists.k = 8\n";
  std::vector<fs::path> outs{spec.output / "run1", spec.output / "run2"};
  std::vector<fs::path> files;
  for (const auto& out : outs) {
    const auto cfg = [&] {
      std::ifstream in(spec.output / "pipeline.conf");
      std::stringstream text;
      text << in.rdbuf() << quick;
      auto c = pipeline_config_from(KeyValues::parse(text.str(), "determinism"), spec.output);
      c.paths.output = out;
      return c;
    }();
    run_pipeline(cfg);
  }
  std::size_t compared = 0;
  for (const char* dir : {"songs", "artists", "embeddings", "eval"})
    for (const auto& entry : fs::directory_iterator(outs[0] / dir)) files.push_back(fs::relative(entry.path(), outs[0]));
  files.push_back("report.tsv");
  files.push_back("report.json");
  for (const auto& f : files) {
    if (read_bytes(outs[0] / f) != read_bytes(outs[1] / f)) return {false, f.string() + " differs between runs"};
    ++compared;
  }
  return {true, std::to_string(compared) + " factor, embedding, evaluation and report files byte-identical"};
}

Outcome split_safety() {
  std::size_t checked = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    std::mt19937_64 rng(sub_seed(314, trial));
    const std::size_t n_artists = 10 + trial % 41, songs = 1 + trial % 4, users = 3 + trial % 11;
    std::vector<std::string> uids, iids;
    ArtistMap am;
    for (std::size_t u = 0; u < users; ++u) uids.push_back("u" + std::to_string(u));
    for (std::size_t a = 0; a < n_artists; ++a)
      for (std::size_t s = 0; s < songs; ++s) {
        iids.push_back("a" + std::to_string(a) + "s" + std::to_string(s));
        am.set(iids.back(), "a" + std::to_string(a));
      }
    FeedbackMatrix m{IdList(uids), IdList(iids)};
    std::uniform_int_distribution<std::size_t> pick_user(0, users - 1);
    for (std::size_t i = 0; i < iids.size(); ++i) m.add(pick_user(rng), i, 1 + i % 3);
    const auto b = split_by_artist(m, am, SplitRatios{}, trial);
    std::set<std::string> parts[3];
    const FeedbackMatrix* mats[3] = {&b.train, &b.val, &b.test};
    for (int p = 0; p < 3; ++p)
      for (const auto& a : artists_of(*mats[p], am)) parts[p].insert(a);
    for (int p = 0; p < 3; ++p)
      for (int q = p + 1; q < 3; ++q)
        for (const auto& a : parts[p])
          if (parts[q].count(a)) return {false, "trial " + std::to_string(trial) + ": artist " + a + " in two partitions"};
    if (b.train.nnz() + b.val.nnz() + b.test.nnz() != m.nnz())
      return {false, "trial " + std::to_string(trial) + ": entries lost"};
    ++checked;
  }
  return {true, std::to_string(checked) + " seeded splits, pairwise artist intersections empty"};
}

Outcome ttest_oracle() {
  double worst = 0.0;
  for (std::uint64_t c = 0; c < 20; ++c) {
    std::mt19937_64 rng(sub_seed(2718, c));
    const std::size_t n = 4 + c * 3;
    std::normal_distribution<double> g(0.0, 1.0);
    const double shift = 0.15 * static_cast<double>(c % 7);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = g(rng);
      b[i] = a[i] - shift + 0.8 * g(rng);
    }
    const auto r = paired_ttest(a, b);
    if (r.degenerate) return {false, "case " + std::to_string(c) + " unexpectedly degenerate"};
    worst = std::max(worst, std::abs(r.p - oracle::t_two_sided_p(r.t, static_cast<double>(r.df))));
  }
  return {worst <= 1e-6, "20 cases, max |p - oracle| " + fmt(worst) + " (<= 1e-6)"};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "coldrec-acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  report("als-oracle", als_oracle);
  report("gradient-check", gradient_verification);
  report("ranking-oracle", ranking_oracle);
  report("end-to-end-ordering", [&] { return end_to_end(work); });
  report("enrichment-benefit", [&] { return enrichment_benefit(work); });
  report("unit-norm-outputs", unit_norm_outputs);
  report("full-scale-dimensions", full_scale_dimensions);
  report("determinism", [&] { return determinism(work); });
  report("split-safety", split_safety);
  report("ttest-oracle", ttest_oracle);
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
