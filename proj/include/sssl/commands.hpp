// Copyright 2026 The SSSL Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// End-to-end commands behind the `sssl` executable. Each command validates
// its inputs before long work starts, throws ConfigError for usage problems
// and any other sssl::Error for runtime failures.

#ifndef SSSL_COMMANDS_HPP
#define SSSL_COMMANDS_HPP

#include <filesystem>
#include <iomanip>
#include <optional>

#include <nlohmann/json.hpp>

#include "sssl/aggregate.hpp"
#include "sssl/config.hpp"
#include "sssl/feature_cache.hpp"
#include "sssl/metrics.hpp"
#include "sssl/ssl_train.hpp"
#include "sssl/synth.hpp"

namespace sssl::cli {

using config::RunConfig;
using json = nlohmann::ordered_json;

namespace detail {

inline void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " path is required");
  if (!std::filesystem::is_regular_file(path)) throw ConfigError(what + " not found: " + path);
}

inline void require_writable_parent(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " path is required");
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent))
    throw ConfigError(what + ": directory does not exist: " + parent.string());
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << text;
  if (!os) throw IoError("failed writing " + path);
}

inline std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Shared pipeline steps.

/// Segment model plus the input standardization it was trained with.
struct SegmentModel {
  nn::ModelFile file;

  InputScaling scaling() const {
    return {file.meta.value("input_mean", 0.0), file.meta.value("input_std", 1.0)};
  }
  std::vector<std::string> labels() const {
    return file.meta.value("labels", std::vector<std::string>{});
  }
};

struct TrainedSegmentModel {
  SegmentModel model;
  std::vector<ssl::EpochReport> reports;
};

/// Trains on `train_set` (raw features). Input scaling is fitted on the
/// training set and applied to both sets. `on_epoch` sees each report.
inline TrainedSegmentModel train_segment_model(const RunConfig& rc, SampleSet train_set, SampleSet heldout,
                                               const std::vector<std::string>& label_names,
                                               const std::function<void(const ssl::EpochReport&,
                                                                        const SegmentModel&)>& on_epoch = {},
                                               const std::string& diagnostics_dir = {}) {
  const InputScaling sc = InputScaling::fit(train_set);
  sc.apply(train_set);
  sc.apply(heldout);
  const auto net = [&] {
    try {
      return nn::NetworkConfig::parse(rc.arch, train_set.dims, label_names.size());
    } catch (const ShapeError& e) {
      throw ConfigError("arch '" + rc.arch + "' does not fit the features: " + e.what());
    }
  }();

  SegmentModel model;
  model.file.config = net;
  model.file.meta = {{"input_mean", sc.mean},
                     {"input_std", sc.stddev},
                     {"labels", label_names},
                     {"segment_duration", rc.segment_duration},
                     {"segment_overlap", rc.segment_overlap},
                     {"theta", rc.theta}};

  ssl::TrainHooks hooks;
  if (on_epoch) {
    hooks.on_epoch_end = [&](const ssl::EpochReport& rep, const nn::ModelParams& p) {
      model.file.params = p;
      on_epoch(rep, model);
    };
  }
  if (!diagnostics_dir.empty()) {
    hooks.on_partition = [&](std::size_t epoch, const partition::PartitionResult& r,
                             const partition::PartitionDiagnostics& d) {
      const auto path = std::filesystem::path(diagnostics_dir) / ("partition_epoch_" + std::to_string(epoch) + ".csv");
      partition::write_partition_csv(path.string(), d.losses, r);
    };
  }
  auto result = ssl::train(rc.train, net, train_set, heldout.size() ? &heldout : nullptr, hooks);
  model.file.params = std::move(result.params);
  return {std::move(model), std::move(result.reports)};
}

/// Aggregated song features for the given songs of a cache.
inline std::vector<aggregate::SongFeature> song_features_for(const SegmentModel& model,
                                                             const cache::FeatureCache& fc,
                                                             const std::vector<cache::FeatureCache::Song>& songs,
                                                             std::span<const std::size_t> which, double theta) {
  const InputScaling sc = model.scaling();
  std::vector<aggregate::SongFeature> out;
  for (std::size_t si : which) {
    SampleSet s = fc.samples(songs[si].records);
    sc.apply(s);
    out.push_back(aggregate::song_features(
        aggregate::segment_probs(model.file.params, model.file.config, s, songs[si].id), theta));
  }
  return out;
}

inline std::vector<std::vector<double>> feature_rows(const std::vector<aggregate::SongFeature>& fs) {
  std::vector<std::vector<double>> rows;
  for (const auto& f : fs) rows.push_back(f.values);
  return rows;
}

/// Segment-level predictions of a scaled copy of `s`.
inline std::vector<int> predict_segments(const SegmentModel& model, SampleSet s) {
  model.scaling().apply(s);
  std::vector<int> out;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < s.size(); start += 256) {
    idx.clear();
    for (std::size_t i = start; i < std::min(s.size(), start + 256); ++i) idx.push_back(i);
    const auto p = nn::argmax_rows(nn::predict(model.file.params, model.file.config, s.batch(idx)));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

inline void check_compatible(const SegmentModel& model, const cache::FeatureCache& fc) {
  if (fc.classes != model.file.config.classes())
    throw ConfigError("class count mismatch: model has " + std::to_string(model.file.config.classes()) +
                      ", features have " + std::to_string(fc.classes));
  if (fc.dims() != model.file.config.input())
    throw ConfigError("feature shape does not match the model input (check segment duration)");
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  RunConfig rc;
  std::string out_dir;
};

/// Feature mode writes train.ssfc (+ heldout.ssfc with true labels when
/// held-out songs are requested) and truth.csv; audio mode writes WAV files,
/// manifest.csv and truth.csv.
inline void cmd_synth(const SynthOptions& o, std::ostream& out) {
  const auto& sc = o.rc.synth;
  sc.validate();
  if (o.out_dir.empty()) throw ConfigError("synth: --out is required");
  std::error_code ec;
  std::filesystem::create_directories(o.out_dir, ec);
  if (!std::filesystem::is_directory(o.out_dir)) throw IoError("cannot create " + o.out_dir);
  const std::filesystem::path dir(o.out_dir);

  std::size_t songs = 0, flipped = 0, segments = 0;
  if (o.rc.synth_mode == "audio") {
    const auto corpus = synth::gen_audio_corpus(sc, o.out_dir);
    songs = corpus.manifest.rows.size();
    flipped = static_cast<std::size_t>(std::count(corpus.song_flipped.begin(), corpus.song_flipped.end(), 1));
    const auto per_song = audio::segment_count(
        static_cast<std::size_t>(std::llround(sc.song_duration_s * sc.sample_rate)), sc.sample_rate,
        o.rc.segment_duration, o.rc.segment_overlap);
    segments = songs * per_song;
  } else {
    const auto corpus = synth::gen_feature_corpus(sc);
    const auto train = corpus.training_set();
    cache::save((dir / "train.ssfc").string(), cache::from_samples(train, corpus.song_ids, sc.classes));
    if (sc.heldout_songs_per_class > 0)
      cache::save((dir / "heldout.ssfc").string(),
                  cache::from_samples(corpus.heldout_set(), corpus.song_ids, sc.classes));
    std::ofstream truth(dir / "truth.csv");
    truth << "song_id,true_label,label,flipped,heldout\n";
    for (std::size_t s = 0; s < corpus.song_ids.size(); ++s)
      truth << corpus.song_ids[s] << ",class" << corpus.song_true[s] << ",class" << corpus.song_label[s] << ','
            << static_cast<int>(corpus.song_flipped[s]) << ',' << static_cast<int>(corpus.song_heldout[s]) << '\n';
    songs = sc.classes * sc.songs_per_class;
    flipped = static_cast<std::size_t>(std::count(corpus.song_flipped.begin(), corpus.song_flipped.end(), 1));
    segments = corpus.segments();
  }
  out << "synth: mode=" << o.rc.synth_mode << " classes=" << sc.classes << " songs=" << songs
      << " segments=" << segments << " seed=" << sc.seed << '\n';
  out << "synth: injected label noise " << detail::fmt(100.0 * static_cast<double>(flipped) / static_cast<double>(songs), 1)
      << "% (" << flipped << " of " << songs << " songs)\n";
  out << "synth: wrote " << o.out_dir << '\n';
}

// ---------------------------------------------------------------------------
// featurize

struct FeaturizeOptions {
  std::string manifest;
  int segment_duration = 1;
  int segment_overlap = 0;
  std::string out;
  std::size_t threads = 1;
};

inline void cmd_featurize(const FeaturizeOptions& o, std::ostream& out) {
  detail::require_file(o.manifest, "manifest");
  detail::require_writable_parent(o.out, "output cache");
  if (o.segment_duration <= 0 || o.segment_overlap < 0 || o.segment_overlap >= o.segment_duration)
    throw ConfigError("featurize: overlap must be in [0, segment duration)");
  if (o.threads == 0) throw ConfigError("featurize: threads must be positive");
  const auto manifest = audio::load_manifest(o.manifest);
  const auto fc = cache::featurize(manifest, o.segment_duration, o.segment_overlap, o.threads);
  cache::save(o.out, fc);
  const auto songs = fc.songs();
  out << "featurize: " << songs.size() << " songs, " << fc.records.size() << " segments ("
      << manifest.rows.size() - songs.size() << " skipped), mel " << fc.n_mels << "x" << fc.n_frames << '\n';
}

// ---------------------------------------------------------------------------
// train-segment

struct TrainSegmentOptions {
  RunConfig rc;
  std::string cache;
  std::string heldout_cache;
  std::string model_out;
  std::string metrics_out;
  std::string diagnostics_dir;
};

inline void cmd_train_segment(const TrainSegmentOptions& o, std::ostream& out) {
  o.rc.validate();
  detail::require_file(o.cache, "feature cache");
  if (!o.heldout_cache.empty()) detail::require_file(o.heldout_cache, "held-out cache");
  detail::require_writable_parent(o.model_out, "model output");
  if (!o.metrics_out.empty()) detail::require_writable_parent(o.metrics_out, "metrics output");
  if (!o.diagnostics_dir.empty() && !std::filesystem::is_directory(o.diagnostics_dir))
    throw ConfigError("diagnostics directory does not exist: " + o.diagnostics_dir);

  const auto fc = cache::load(o.cache);
  const auto songs = fc.songs();
  if (songs.empty()) throw Error("feature cache has no segments");
  std::vector<std::size_t> train_idx, held_idx;
  SampleSet heldout;
  if (!o.heldout_cache.empty()) {
    const auto hc = cache::load(o.heldout_cache);
    if (hc.classes != fc.classes || hc.dims() != fc.dims())
      throw ConfigError("held-out cache is incompatible with the training cache");
    std::vector<std::size_t> all(hc.records.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    heldout = hc.samples(all);
    train_idx.resize(songs.size());
    std::iota(train_idx.begin(), train_idx.end(), std::size_t{0});
  } else {
    std::vector<std::size_t> order(songs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(o.rc.train.seed ^ 0x6865'6c64'6f75'74ULL);
    rng.shuffle(order);
    const auto n_held = static_cast<std::size_t>(std::llround(o.rc.heldout_fraction * static_cast<double>(songs.size())));
    held_idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(n_held, songs.size() - 1)));
    train_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(held_idx.size()), order.end());
    std::sort(held_idx.begin(), held_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    heldout = fc.song_samples(songs, held_idx);
  }
  const SampleSet train_set = fc.song_samples(songs, train_idx);

  std::ofstream metrics;
  if (!o.metrics_out.empty()) {
    metrics.open(o.metrics_out, std::ios::binary);
    if (!metrics) throw IoError("cannot write " + o.metrics_out);
  }
  auto on_epoch = [&](const ssl::EpochReport& rep, const SegmentModel& m) {
    if (metrics.is_open()) metrics << rep.to_json().dump() << '\n' << std::flush;
    if (o.rc.checkpoint_every > 0 && (rep.epoch + 1) % o.rc.checkpoint_every == 0)
      nn::save_model(o.model_out + ".epoch" + std::to_string(rep.epoch + 1), m.file);
  };
  const auto trained = train_segment_model(o.rc, train_set, heldout, fc.label_names, on_epoch, o.diagnostics_dir);
  nn::save_model(o.model_out, trained.model.file);
  const auto& last = trained.reports.back();
  out << "train-segment: " << train_set.size() << " training segments, " << heldout.size()
      << " held-out segments, mode " << (o.rc.train.baseline_mode ? "baseline" : "sssl") << '\n';
  out << "train-segment: final loss " << detail::fmt(last.total);
  if (last.heldout_accuracy) out << ", held-out segment accuracy " << detail::fmt(*last.heldout_accuracy);
  out << "\ntrain-segment: wrote " << o.model_out << '\n';
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  RunConfig rc;
  std::string model;
  std::string cache;
  std::string train_cache;  // songs used to fit the song classifier
  std::string song_model;   // or a previously fitted song classifier
  std::string song_model_out;
  std::string out;
  std::string features_out;  // aggregated song features, CSV
  std::string manifest;      // evaluate audio directly instead of `cache`
};

struct EvalResult {
  metrics::MetricsReport segment;
  metrics::MetricsReport song;
};

inline EvalResult cmd_eval(const EvalOptions& o, std::ostream& out) {
  o.rc.validate();
  detail::require_file(o.model, "model");
  if (o.cache.empty() == o.manifest.empty()) throw ConfigError("eval: give exactly one of --cache or --manifest");
  if (!o.cache.empty()) detail::require_file(o.cache, "feature cache");
  if (!o.manifest.empty()) detail::require_file(o.manifest, "manifest");
  if (o.song_model.empty() && o.train_cache.empty())
    throw ConfigError("eval: need --song-model or --train-cache to make song-level decisions");
  if (!o.song_model.empty()) detail::require_file(o.song_model, "song model");
  if (!o.train_cache.empty()) detail::require_file(o.train_cache, "training cache");
  if (!o.out.empty()) detail::require_writable_parent(o.out, "metrics output");
  if (!o.features_out.empty()) detail::require_writable_parent(o.features_out, "song feature output");

  SegmentModel model{nn::load_model(o.model)};
  const auto fc = o.cache.empty() ? cache::featurize(audio::load_manifest(o.manifest, model.labels()),
                                                     o.rc.segment_duration, o.rc.segment_overlap, o.rc.threads)
                                  : cache::load(o.cache);
  check_compatible(model, fc);
  const std::size_t K = fc.classes;

  std::vector<std::size_t> all(fc.records.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const SampleSet segs = fc.samples(all);
  EvalResult res;
  res.segment = metrics::MetricsReport::compute(segs.labels, predict_segments(model, segs), K);

  aggregate::LinearSongModel song_model;
  if (!o.song_model.empty()) {
    song_model = aggregate::load_song_model(o.song_model);
  } else {
    const auto tc = cache::load(o.train_cache);
    check_compatible(model, tc);
    const auto tsongs = tc.songs();
    std::vector<std::size_t> idx(tsongs.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<int> labels;
    for (const auto& s : tsongs) labels.push_back(s.label);
    song_model = aggregate::train_song_classifier(feature_rows(song_features_for(model, tc, tsongs, idx, o.rc.theta)),
                                                  labels, K, o.rc.svm);
    song_model.threshold = o.rc.theta;
    song_model.label_names = fc.label_names;
  }
  if (song_model.classes != K) throw ConfigError("song model class count does not match the features");
  if (!o.song_model_out.empty()) aggregate::save_song_model(o.song_model_out, song_model);

  const auto songs = fc.songs();
  std::vector<std::size_t> idx(songs.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto feats = song_features_for(model, fc, songs, idx, song_model.threshold);
  std::vector<int> truth, pred;
  for (std::size_t i = 0; i < songs.size(); ++i) {
    truth.push_back(songs[i].label);
    pred.push_back(aggregate::predict_song(song_model, feats[i].values).label);
  }
  res.song = metrics::MetricsReport::compute(truth, pred, K);
  if (!o.features_out.empty()) {
    std::vector<std::string> names;
    for (int t : truth) names.push_back(fc.label_names[static_cast<std::size_t>(t)]);
    aggregate::write_song_features_csv(o.features_out, feats, names);
  }

  if (!o.out.empty()) {
    json j;
    j["labels"] = fc.label_names;
    j["segment"] = res.segment.to_json();
    j["song"] = res.song.to_json();
    detail::write_text(o.out, j.dump(2) + "\n");
  }
  out << "eval: segment accuracy " << detail::fmt(res.segment.accuracy) << " macro-F1 "
      << detail::fmt(res.segment.macro_f1) << " (" << res.segment.total << " segments)\n";
  out << "eval: song accuracy " << detail::fmt(res.song.accuracy) << " macro-F1 " << detail::fmt(res.song.macro_f1)
      << " (" << res.song.total << " songs)\n";
  return res;
}

// ---------------------------------------------------------------------------
// cv

struct CvOptions {
  RunConfig rc;
  std::string cache;     // either a feature cache ...
  std::string manifest;  // ... or a manifest featurized on the fly
  std::size_t k = 10;
  std::string out;
};

struct CvResult {
  std::vector<metrics::MetricsReport> segment;
  std::vector<metrics::MetricsReport> song;
  metrics::MeanStd song_accuracy;
  metrics::MeanStd song_macro_f1;
  metrics::MeanStd segment_accuracy;
};

inline CvResult cmd_cv(const CvOptions& o, std::ostream& out) {
  o.rc.validate();
  if (o.k < 2) throw ConfigError("cv: k must be at least 2");
  if (o.cache.empty() == o.manifest.empty()) throw ConfigError("cv: give exactly one of --cache or --manifest");
  if (!o.cache.empty()) detail::require_file(o.cache, "feature cache");
  if (!o.manifest.empty()) detail::require_file(o.manifest, "manifest");
  if (!o.out.empty()) detail::require_writable_parent(o.out, "metrics output");

  const cache::FeatureCache fc =
      o.cache.empty() ? cache::featurize(audio::load_manifest(o.manifest), o.rc.segment_duration,
                                         o.rc.segment_overlap, o.rc.threads)
                      : cache::load(o.cache);
  const auto songs = fc.songs();
  if (songs.size() < o.k) throw ConfigError("cv: fewer songs than folds");
  std::vector<std::string> ids;
  for (const auto& s : songs) ids.push_back(s.id);
  const auto folds = aggregate::kfold_split(ids, o.k, o.rc.train.seed);

  CvResult res;
  json j;
  j["k"] = o.k;
  j["labels"] = fc.label_names;
  j["folds"] = json::array();
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<std::size_t> train_idx;
    for (std::size_t g = 0; g < folds.size(); ++g)
      if (g != f) train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
    std::sort(train_idx.begin(), train_idx.end());
    const auto& test_idx = folds[f];

    auto trained = train_segment_model(o.rc, fc.song_samples(songs, train_idx), fc.song_samples(songs, test_idx),
                                       fc.label_names);
    const SegmentModel& model = trained.model;

    std::vector<int> train_labels;
    for (std::size_t i : train_idx) train_labels.push_back(songs[i].label);
    auto song_model = aggregate::train_song_classifier(
        feature_rows(song_features_for(model, fc, songs, train_idx, o.rc.theta)), train_labels, fc.classes, o.rc.svm);

    const auto test_feats = song_features_for(model, fc, songs, test_idx, o.rc.theta);
    std::vector<int> truth, pred;
    for (std::size_t i = 0; i < test_idx.size(); ++i) {
      truth.push_back(songs[test_idx[i]].label);
      pred.push_back(aggregate::predict_song(song_model, test_feats[i].values).label);
    }
    auto song_report = metrics::MetricsReport::compute(truth, pred, fc.classes);
    song_report.fold = f;
    const SampleSet test_segs = fc.song_samples(songs, test_idx);
    auto seg_report = metrics::MetricsReport::compute(test_segs.labels, predict_segments(model, test_segs), fc.classes);
    seg_report.fold = f;

    json fold;
    fold["fold"] = f;
    fold["train_songs"] = train_idx.size();
    fold["test_songs"] = test_idx.size();
    fold["segment"] = seg_report.to_json();
    fold["song"] = song_report.to_json();
    fold["epochs"] = json::array();
    for (const auto& rep : trained.reports) fold["epochs"].push_back(rep.to_json());
    j["folds"].push_back(std::move(fold));
    out << "cv: fold " << f << ": segment accuracy " << detail::fmt(seg_report.accuracy) << ", song accuracy "
        << detail::fmt(song_report.accuracy) << ", song macro-F1 " << detail::fmt(song_report.macro_f1) << '\n';
    res.segment.push_back(std::move(seg_report));
    res.song.push_back(std::move(song_report));
  }
  std::vector<double> sacc, sf1, gacc;
  for (const auto& r : res.song) {
    sacc.push_back(r.accuracy);
    sf1.push_back(r.macro_f1);
  }
  for (const auto& r : res.segment) gacc.push_back(r.accuracy);
  res.song_accuracy = metrics::mean_std(sacc);
  res.song_macro_f1 = metrics::mean_std(sf1);
  res.segment_accuracy = metrics::mean_std(gacc);
  auto ms = [](const metrics::MeanStd& m) { return json{{"mean", m.mean}, {"std", m.stddev}}; };
  j["song_accuracy"] = ms(res.song_accuracy);
  j["song_macro_f1"] = ms(res.song_macro_f1);
  j["segment_accuracy"] = ms(res.segment_accuracy);
  if (!o.out.empty()) detail::write_text(o.out, j.dump(2) + "\n");
  out << "cv: mean song accuracy " << detail::fmt(res.song_accuracy.mean) << " +/- "
      << detail::fmt(res.song_accuracy.stddev) << ", macro-F1 " << detail::fmt(res.song_macro_f1.mean) << " +/- "
      << detail::fmt(res.song_macro_f1.stddev) << '\n';
  return res;
}

// ---------------------------------------------------------------------------
// predict

struct PredictOptions {
  RunConfig rc;
  std::string model;
  std::string song_model;
  std::string audio;     // a single file ...
  std::string manifest;  // ... or every file in a manifest
  std::string out;
  std::string dump_segments;
};

inline void cmd_predict(const PredictOptions& o, std::ostream& out) {
  o.rc.validate();
  detail::require_file(o.model, "model");
  detail::require_file(o.song_model, "song model");
  if (o.audio.empty() == o.manifest.empty()) throw ConfigError("predict: give exactly one of --audio or --manifest");
  if (!o.audio.empty()) detail::require_file(o.audio, "audio file");
  if (!o.manifest.empty()) detail::require_file(o.manifest, "manifest");
  detail::require_writable_parent(o.out, "predictions output");
  if (!o.dump_segments.empty()) detail::require_writable_parent(o.dump_segments, "segment dump");

  const SegmentModel model{nn::load_model(o.model)};
  const auto song_model = aggregate::load_song_model(o.song_model);
  const std::size_t K = model.file.config.classes();
  if (song_model.classes != K) throw ConfigError("song model and segment model disagree on the class count");
  auto names = model.labels();
  if (names.size() != K) {
    names.clear();
    for (std::size_t k = 0; k < K; ++k) names.push_back(std::to_string(k));
  }

  std::vector<std::pair<std::string, std::string>> inputs;  // (song id, path)
  if (!o.audio.empty()) {
    inputs.emplace_back(std::filesystem::path(o.audio).stem().string(), o.audio);
  } else {
    for (const auto& row : audio::load_manifest(o.manifest).rows) inputs.emplace_back(row.song_id, row.path);
  }

  std::ostringstream pred_csv, dump_csv;
  pred_csv << "song_id,predicted";
  for (std::size_t k = 0; k < K; ++k) pred_csv << ",margin_c" << k;
  pred_csv << '\n';
  dump_csv << "song_id,segment,start_s";
  for (std::size_t k = 0; k < K; ++k) dump_csv << ",p_c" << k;
  dump_csv << '\n';
  dump_csv << std::setprecision(9);
  pred_csv << std::setprecision(9);

  const InputScaling sc = model.scaling();
  for (const auto& [song_id, path] : inputs) {
    auto w = audio::load_audio(path);
    w.source_id = song_id;
    const auto segs = audio::segment(w, o.rc.segment_duration, o.rc.segment_overlap);
    if (segs.empty()) throw Error("song '" + song_id + "' is shorter than the segment duration");
    SampleSet s;
    s.dims = nn::Dims{1, audio::kMelBins, audio::frame_count(segs.front().samples.size())};
    if (s.dims != model.file.config.input())
      throw ConfigError("segment features do not match the model input (check --seg-dur)");
    for (const auto& seg : segs) {
      const auto spec = audio::mel_spectrogram(seg);
      std::vector<double> f(spec.values.begin(), spec.values.end());
      // Round through f32 exactly like the feature cache does.
      for (double& v : f) v = static_cast<double>(static_cast<float>(v));
      s.push_back(f, 0);
    }
    sc.apply(s);
    const auto seq = aggregate::segment_probs(model.file.params, model.file.config, s, song_id);
    const auto feat = aggregate::song_features(seq, song_model.threshold);
    const auto p = aggregate::predict_song(song_model, feat.values);
    pred_csv << song_id << ',' << names[static_cast<std::size_t>(p.label)];
    for (double m : p.margins) pred_csv << ',' << m;
    pred_csv << '\n';
    for (std::size_t i = 0; i < seq.probs.size(); ++i) {
      dump_csv << song_id << ',' << i << ',' << segs[i].start_s;
      for (double v : seq.probs[i]) dump_csv << ',' << v;
      dump_csv << '\n';
    }
    out << "predict: " << song_id << " -> " << names[static_cast<std::size_t>(p.label)] << " (" << segs.size()
        << " segments)\n";
  }
  detail::write_text(o.out, pred_csv.str());
  if (!o.dump_segments.empty()) detail::write_text(o.dump_segments, dump_csv.str());
}

}  // namespace sssl::cli

#endif  // SSSL_COMMANDS_HPP
