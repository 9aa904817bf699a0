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

// Song-level decisions from segment probability sequences.
//
// Each song becomes a 7 x K vector of order-free statistics of its segment
// probabilities (per class: max, min, three quartiles, mean, fraction above a
// threshold), and a one-vs-rest linear hinge-loss classifier maps that vector
// to a song label.

#ifndef SSSL_AGGREGATE_HPP
#define SSSL_AGGREGATE_HPP

#include <fstream>
#include <iomanip>

#include <nlohmann/json.hpp>

#include "sssl/dataset.hpp"

namespace sssl::aggregate {

inline constexpr std::size_t kStatsPerClass = 7;

struct SegmentProbSeq {
  std::string song_id;
  std::vector<std::vector<double>> probs;  // one K-vector per segment, temporal order
};

struct SongFeature {
  std::string song_id;
  std::vector<double> values;  // f1..f7 for class 0, then class 1, ...
  double threshold = 0.5;
};

/// Per class k: max, min, Q1, median, Q3 (linear interpolation), mean and the
/// fraction of segments with probability strictly above `threshold`.
inline SongFeature song_features(const SegmentProbSeq& seq, double threshold = 0.5) {
  if (seq.probs.empty()) throw Error("song_features: song '" + seq.song_id + "' has no segments");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("song_features: threshold must be in (0, 1)");
  const std::size_t K = seq.probs.front().size();
  const std::size_t n = seq.probs.size();
  SongFeature out{seq.song_id, std::vector<double>(kStatsPerClass * K), threshold};
  std::vector<double> col(n);
  for (std::size_t k = 0; k < K; ++k) {
    std::size_t above = 0;
    double sum = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      if (seq.probs[s].size() != K) throw ShapeError("song_features: ragged probability rows");
      col[s] = seq.probs[s][k];
      sum += col[s];
      above += col[s] > threshold;
    }
    std::sort(col.begin(), col.end());
    double* f = out.values.data() + k * kStatsPerClass;
    f[0] = col.back();
    f[1] = col.front();
    f[2] = sorted_quantile(col, 0.25);
    f[3] = sorted_quantile(col, 0.5);
    f[4] = sorted_quantile(col, 0.75);
    // Clamped: rounding in the sum must not push the mean outside [min, max].
    f[5] = std::clamp(sum / static_cast<double>(n), f[1], f[0]);
    f[6] = static_cast<double>(above) / static_cast<double>(n);
  }
  return out;
}

/// Segment probabilities of one song (dropout off), in the order the
/// segments are stored.
inline SegmentProbSeq segment_probs(const nn::ModelParams& params, const nn::NetworkConfig& cfg,
                                    const SampleSet& song_segments, const std::string& song_id) {
  if (song_segments.size() == 0)
    throw Error("song '" + song_id + "' has no segments (shorter than the segment duration)");
  std::vector<std::size_t> idx(song_segments.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const Tensor probs = nn::predict(params, cfg, song_segments.batch(idx));
  SegmentProbSeq seq{song_id, {}};
  for (std::size_t i = 0; i < probs.rows(); ++i) seq.probs.emplace_back(probs.row(i).begin(), probs.row(i).end());
  return seq;
}

// ---------------------------------------------------------------------------
// Linear one-vs-rest hinge classifier.

struct SvmOptions {
  double reg = 1e-3;       // L2 strength on weights (bias unregularized)
  std::size_t epochs = 300;
  double lr = 0.5;
};

struct LinearSongModel {
  std::size_t classes = 0;
  std::vector<double> mean;    // standardization, per dimension
  std::vector<double> scale;
  std::vector<std::vector<double>> weights;  // [class][dim]
  std::vector<double> bias;
  double reg = 0.0;
  double threshold = 0.5;      // segment threshold used for the features
  std::vector<std::string> label_names;
  std::vector<std::vector<double>> objective_history;  // per class, per epoch

  std::size_t dims() const { return mean.size(); }

  nlohmann::json to_json() const {
    return {{"classes", classes}, {"mean", mean},   {"scale", scale},         {"weights", weights},
            {"bias", bias},       {"reg", reg},     {"threshold", threshold}, {"labels", label_names}};
  }
  static LinearSongModel from_json(const nlohmann::json& j) {
    LinearSongModel m;
    m.classes = j.at("classes").get<std::size_t>();
    m.mean = j.at("mean").get<std::vector<double>>();
    m.scale = j.at("scale").get<std::vector<double>>();
    m.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    m.bias = j.at("bias").get<std::vector<double>>();
    m.reg = j.value("reg", 0.0);
    m.threshold = j.value("threshold", 0.5);
    m.label_names = j.value("labels", std::vector<std::string>{});
    if (m.weights.size() != m.classes || m.bias.size() != m.classes || m.scale.size() != m.mean.size())
      throw IoError("song model: inconsistent dimensions");
    return m;
  }
};

/// Mean hinge loss over (x, y in {-1, +1}) plus reg/2 * |w|^2.
inline double hinge_objective(std::span<const double> w, double b, const std::vector<std::vector<double>>& x,
                              std::span<const double> y, double reg) {
  double loss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double m = b;
    for (std::size_t j = 0; j < w.size(); ++j) m += w[j] * x[i][j];
    loss += std::max(0.0, 1.0 - y[i] * m);
  }
  double norm = 0.0;
  for (double v : w) norm += v * v;
  return loss / static_cast<double>(x.size()) + 0.5 * reg * norm;
}

/// Subgradient of hinge_objective; at a kink (margin exactly 1) the zero
/// branch is taken. Returns d/dw in `gw` and d/db.
inline double hinge_subgradient(std::span<const double> w, double b, const std::vector<std::vector<double>>& x,
                                std::span<const double> y, double reg, std::vector<double>& gw) {
  gw.assign(w.size(), 0.0);
  double gb = 0.0;
  const double inv_n = 1.0 / static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double m = b;
    for (std::size_t j = 0; j < w.size(); ++j) m += w[j] * x[i][j];
    if (y[i] * m < 1.0) {
      for (std::size_t j = 0; j < w.size(); ++j) gw[j] -= y[i] * x[i][j] * inv_n;
      gb -= y[i] * inv_n;
    }
  }
  for (std::size_t j = 0; j < w.size(); ++j) gw[j] += reg * w[j];
  return gb;
}

inline std::vector<double> standardize(const LinearSongModel& m, std::span<const double> f) {
  if (f.size() != m.dims()) throw ShapeError("song feature dimension does not match model");
  std::vector<double> z(f.size());
  for (std::size_t j = 0; j < f.size(); ++j) z[j] = (f[j] - m.mean[j]) / m.scale[j];
  return z;
}

/// Full-batch subgradient descent per class. The L2 term is applied as a
/// proximal step, w <- (w - lr * g) / (1 + lr * reg), which stays stable for
/// any regularization strength. The step size decays as lr / sqrt(t) and the
/// best iterate seen is kept.
inline LinearSongModel train_song_classifier(const std::vector<std::vector<double>>& features,
                                             std::span<const int> labels, std::size_t classes,
                                             const SvmOptions& opt = {}) {
  if (features.empty() || features.size() != labels.size())
    throw ShapeError("train_song_classifier: need one label per feature row");
  std::vector<char> present(classes, 0);
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) throw ShapeError("train_song_classifier: bad label");
    present[static_cast<std::size_t>(l)] = 1;
  }
  if (std::count(present.begin(), present.end(), 1) < 2)
    throw Error("train_song_classifier: training set contains a single class");

  const std::size_t n = features.size(), d = features.front().size();
  LinearSongModel m;
  m.classes = classes;
  m.reg = opt.reg;
  m.mean.assign(d, 0.0);
  m.scale.assign(d, 0.0);
  for (const auto& f : features) {
    if (f.size() != d) throw ShapeError("train_song_classifier: ragged features");
    for (std::size_t j = 0; j < d; ++j) m.mean[j] += f[j];
  }
  for (double& v : m.mean) v /= static_cast<double>(n);
  for (const auto& f : features)
    for (std::size_t j = 0; j < d; ++j) m.scale[j] += (f[j] - m.mean[j]) * (f[j] - m.mean[j]);
  for (double& v : m.scale) {
    v = std::sqrt(v / static_cast<double>(n));
    if (!(v > 1e-12)) v = 1.0;
  }
  std::vector<std::vector<double>> z;
  z.reserve(n);
  for (const auto& f : features) z.push_back(standardize(m, f));

  m.weights.assign(classes, std::vector<double>(d, 0.0));
  m.bias.assign(classes, 0.0);
  m.objective_history.assign(classes, {});
  std::vector<double> y(n), gw;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < n; ++i) y[i] = labels[i] == static_cast<int>(c) ? 1.0 : -1.0;
    std::vector<double> w(d, 0.0), best_w = w;
    double b = 0.0, best_b = 0.0;
    double best = hinge_objective(w, b, z, y, opt.reg);
    auto& hist = m.objective_history[c];
    hist.push_back(best);
    for (std::size_t t = 1; t <= opt.epochs; ++t) {
      const double step = opt.lr / std::sqrt(static_cast<double>(t));
      const double gb = hinge_subgradient(w, b, z, y, 0.0, gw);
      for (std::size_t j = 0; j < d; ++j) w[j] = (w[j] - step * gw[j]) / (1.0 + step * opt.reg);
      b -= step * gb;
      const double obj = hinge_objective(w, b, z, y, opt.reg);
      hist.push_back(obj);
      if (obj < best) {
        best = obj;
        best_w = w;
        best_b = b;
      }
    }
    m.weights[c] = std::move(best_w);
    m.bias[c] = best_b;
  }
  return m;
}

struct SongPrediction {
  int label = 0;
  std::vector<double> margins;
};

/// Argmax of one-vs-rest margins; ties go to the lowest class id.
inline SongPrediction predict_song(const LinearSongModel& m, std::span<const double> feature) {
  const auto z = standardize(m, feature);
  SongPrediction p;
  p.margins.resize(m.classes);
  for (std::size_t c = 0; c < m.classes; ++c) {
    double s = m.bias[c];
    for (std::size_t j = 0; j < z.size(); ++j) s += m.weights[c][j] * z[j];
    p.margins[c] = s;
    if (s > p.margins[static_cast<std::size_t>(p.label)]) p.label = static_cast<int>(c);
  }
  return p;
}

/// CSV export: `song_id,f1_c0,...,f7_c{K-1},label`, one row per song.
inline void write_song_features_csv(const std::string& path, const std::vector<SongFeature>& feats,
                                    const std::vector<std::string>& labels) {
  if (feats.size() != labels.size()) throw ShapeError("write_song_features_csv: one label per song");
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  const std::size_t K = feats.empty() ? 0 : feats.front().values.size() / kStatsPerClass;
  os << "song_id";
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t f = 1; f <= kStatsPerClass; ++f) os << ",f" << f << "_c" << k;
  os << ",label\n" << std::setprecision(9);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    os << feats[i].song_id;
    for (double v : feats[i].values) os << ',' << v;
    os << ',' << labels[i] << '\n';
  }
}

inline void save_song_model(const std::string& path, const LinearSongModel& m) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  os << m.to_json().dump(1) << '\n';
}

inline LinearSongModel load_song_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open song model " + path);
  try {
    return LinearSongModel::from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

/// Song-level k-fold split: returns k folds of indices into `song_ids`.
/// Songs are shuffled by `seed`; fold sizes differ by at most one.
inline std::vector<std::vector<std::size_t>> kfold_split(const std::vector<std::string>& song_ids, std::size_t k,
                                                         std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold_split: k must be at least 2");
  if (k > song_ids.size()) throw ConfigError("kfold_split: more folds than songs");
  std::vector<std::size_t> order(song_ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> folds(k);
  const std::size_t base = song_ids.size() / k, extra = song_ids.size() % k;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                    order.begin() + static_cast<std::ptrdiff_t>(pos + len));
    std::sort(folds[f].begin(), folds[f].end());
    pos += len;
  }
  return folds;
}

}  // namespace sssl::aggregate

#endif  // SSSL_AGGREGATE_HPP
