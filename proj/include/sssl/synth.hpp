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

// Synthetic corpora with exact-count label noise.
//
// Feature corpora: every class is a Gaussian cluster; every song has its own
// offset from its class center, and its segments scatter around the song.
// Audio corpora: every class is a chord recipe (class-specific fundamentals
// with a few harmonics) over a white-noise floor, written as 16-bit WAV.

#ifndef SSSL_SYNTH_HPP
#define SSSL_SYNTH_HPP

#include <filesystem>
#include <iomanip>

#include "sssl/audio.hpp"
#include "sssl/dataset.hpp"

namespace sssl::synth {

struct SynthConfig {
  std::size_t classes = 4;
  std::size_t songs_per_class = 50;
  std::size_t heldout_songs_per_class = 0;  // clean songs for evaluation
  std::size_t segments_per_song = 10;
  std::size_t feature_dim = 16;
  double separation = 3.0;      // norm of each class center
  double song_spread = 1.0;     // std of a song's offset from its class center
  double segment_spread = 1.0;  // std of segments around their song
  double noise_rate = 0.0;      // fraction of training songs with flipped labels
  double drift_fraction = 0.0;  // fraction of each song's segments from another class
  std::uint64_t seed = 1;
  // audio mode
  double song_duration_s = 10.0;
  int sample_rate = audio::kDefaultSampleRate;
  double noise_floor = 0.01;

  void validate() const {
    if (classes < 2) throw ConfigError("synth: need at least 2 classes");
    if (!(noise_rate >= 0.0 && noise_rate < 1.0)) throw ConfigError("synth: noise_rate must be in [0, 1)");
    if (!(drift_fraction >= 0.0 && drift_fraction <= 1.0))
      throw ConfigError("synth: drift_fraction must be in [0, 1]");
    if (songs_per_class == 0 || segments_per_song == 0 || feature_dim == 0)
      throw ConfigError("synth: sizes must be positive");
    if (!(song_duration_s > 0.0) || sample_rate <= 0) throw ConfigError("synth: bad audio settings");
  }
};

/// Flips exactly round(rate * n) labels, chosen uniformly without replacement,
/// each to a uniformly chosen different class. Returns the noisy labels;
/// `flipped` (optional) receives the mask.
inline std::vector<int> inject_label_noise(std::span<const int> labels, double rate, std::size_t classes, Rng& rng,
                                           std::vector<char>* flipped = nullptr) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("noise rate must be in [0, 1)");
  if (classes < 2 && rate > 0.0) throw ConfigError("label noise needs at least 2 classes");
  std::vector<int> out(labels.begin(), labels.end());
  const auto n_flip = static_cast<std::size_t>(std::llround(rate * static_cast<double>(labels.size())));
  std::vector<std::size_t> idx(labels.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < n_flip; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
  if (flipped) flipped->assign(labels.size(), 0);
  for (std::size_t i = 0; i < n_flip; ++i) {
    const std::size_t j = idx[i];
    const auto shift = 1 + static_cast<int>(rng.below(classes - 1));
    out[j] = (labels[j] + shift) % static_cast<int>(classes);
    if (flipped) (*flipped)[j] = 1;
  }
  return out;
}

struct SynthCorpus {
  nn::Dims dims;
  std::size_t classes = 0;
  std::vector<double> features;             // per segment
  std::vector<std::size_t> segment_song;
  std::vector<int> segment_true;            // true class of each segment (drift aware)
  std::vector<std::string> song_ids;
  std::vector<int> song_true;
  std::vector<int> song_label;              // inherited label (noisy for training songs)
  std::vector<char> song_flipped;
  std::vector<char> song_heldout;

  std::size_t segments() const { return segment_song.size(); }

  /// Training songs with inherited labels; `song` holds corpus song indices.
  SampleSet training_set() const { return collect(false, false); }
  /// Held-out songs labeled with their true segment classes.
  SampleSet heldout_set() const { return collect(true, true); }
  /// Per-segment "label is correct" mask aligned with training_set().
  std::vector<char> training_clean_mask() const {
    std::vector<char> mask;
    for (std::size_t s = 0; s < segments(); ++s)
      if (!song_heldout[segment_song[s]]) mask.push_back(song_label[segment_song[s]] == segment_true[s]);
    return mask;
  }

 private:
  SampleSet collect(bool heldout, bool true_labels) const {
    SampleSet out;
    out.dims = dims;
    const std::size_t d = dims.size();
    for (std::size_t s = 0; s < segments(); ++s) {
      const std::size_t song = segment_song[s];
      if (static_cast<bool>(song_heldout[song]) != heldout) continue;
      out.push_back({features.data() + s * d, d}, true_labels ? segment_true[s] : song_label[song], song);
    }
    return out;
  }
};

inline std::string song_name(std::size_t i) {
  std::ostringstream os;
  os << "song_" << std::setw(4) << std::setfill('0') << i;
  return os.str();
}

namespace detail {

/// Song classes interleave (song i has class i % K); held-out songs follow
/// the training songs. Noise is injected on training songs only.
inline void assign_songs(const SynthConfig& cfg, SynthCorpus& c, Rng& rng) {
  const std::size_t n_train = cfg.classes * cfg.songs_per_class;
  const std::size_t n_total = n_train + cfg.classes * cfg.heldout_songs_per_class;
  c.classes = cfg.classes;
  for (std::size_t i = 0; i < n_total; ++i) {
    c.song_ids.push_back(song_name(i));
    c.song_true.push_back(static_cast<int>(i % cfg.classes));
    c.song_heldout.push_back(i >= n_train);
  }
  std::vector<char> mask;
  const auto noisy = inject_label_noise(std::span<const int>(c.song_true.data(), n_train), cfg.noise_rate,
                                        cfg.classes, rng, &mask);
  c.song_label = c.song_true;
  c.song_flipped.assign(n_total, 0);
  for (std::size_t i = 0; i < n_train; ++i) {
    c.song_label[i] = noisy[i];
    c.song_flipped[i] = mask[i];
  }
}

/// Exactly round(fraction * n) positions, each paired with a different class.
inline std::vector<int> drift_classes(int song_class, std::size_t n, double fraction, std::size_t classes, Rng& rng) {
  std::vector<int> out(n, song_class);
  const auto n_drift = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < n_drift; ++i) {
    std::swap(idx[i], idx[i + rng.below(n - i)]);
    out[idx[i]] = (song_class + 1 + static_cast<int>(rng.below(classes - 1))) % static_cast<int>(classes);
  }
  return out;
}

}  // namespace detail

inline SynthCorpus gen_feature_corpus(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SynthCorpus c;
  c.dims = nn::Dims{1, cfg.feature_dim, 1};
  const std::size_t d = cfg.feature_dim;

  std::vector<std::vector<double>> centers(cfg.classes, std::vector<double>(d));
  for (auto& center : centers) {
    double norm = 0.0;
    for (double& v : center) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : center) v *= cfg.separation / norm;
  }
  detail::assign_songs(cfg, c, rng);

  std::vector<double> offset(d);
  for (std::size_t song = 0; song < c.song_ids.size(); ++song) {
    for (double& v : offset) v = cfg.song_spread * rng.normal();
    const auto seg_classes =
        detail::drift_classes(c.song_true[song], cfg.segments_per_song, cfg.drift_fraction, cfg.classes, rng);
    for (int cls : seg_classes) {
      const auto& center = centers[static_cast<std::size_t>(cls)];
      for (std::size_t j = 0; j < d; ++j) c.features.push_back(center[j] + offset[j] + cfg.segment_spread * rng.normal());
      c.segment_song.push_back(song);
      c.segment_true.push_back(cls);
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Audio

/// Fundamentals of a class recipe: a major triad rooted a fifth above the
/// previous class's root, starting at 110 Hz. Roots never coincide.
inline std::vector<double> class_fundamentals(std::size_t cls) {
  const double root = 110.0 * std::pow(2.0, 7.0 * static_cast<double>(cls) / 12.0);
  return {root, root * std::pow(2.0, 4.0 / 12.0), root * std::pow(2.0, 7.0 / 12.0)};
}

/// One second-block of a class recipe, appended to `out`.
inline void render_block(std::size_t cls, std::size_t n, int sample_rate, double detune, double noise_floor,
                         std::size_t t0, Rng& rng, std::vector<double>& out) {
  const double two_pi = 2.0 * 3.14159265358979323846;
  struct Partial {
    double freq, amp, phase;
  };
  std::vector<Partial> partials;
  for (double f0 : class_fundamentals(cls)) {
    for (int h = 1; h <= 4; ++h) {
      const double f = f0 * h * detune;
      if (f >= sample_rate / 2.0) break;
      partials.push_back({f, 1.0 / h, two_pi * rng.uniform()});
    }
  }
  double norm = 0.0;
  for (const auto& p : partials) norm += p.amp;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(t0 + i) / sample_rate;
    double s = 0.0;
    for (const auto& p : partials) s += p.amp * std::sin(two_pi * p.freq * t + p.phase);
    out.push_back(0.5 * s / norm + noise_floor * rng.normal());
  }
}

struct AudioCorpus {
  audio::Manifest manifest;
  std::vector<int> song_true;
  std::vector<char> song_flipped;
  std::string manifest_path;
};

/// Writes song_XXXX.wav files, manifest.csv (inherited labels) and truth.csv
/// (`song_id,true_label,label,flipped`) into `out_dir`.
inline AudioCorpus gen_audio_corpus(const SynthConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) throw IoError("cannot create output directory " + out_dir);
  Rng rng(cfg.seed);
  SynthCorpus songs;
  detail::assign_songs(cfg, songs, rng);

  AudioCorpus out;
  for (std::size_t k = 0; k < cfg.classes; ++k) out.manifest.label_names.push_back("class" + std::to_string(k));
  std::vector<std::string> rel;
  const auto total = static_cast<std::size_t>(std::llround(cfg.song_duration_s * cfg.sample_rate));
  const auto block = static_cast<std::size_t>(cfg.sample_rate);
  const std::size_t n_blocks = (total + block - 1) / block;
  for (std::size_t song = 0; song < songs.song_ids.size(); ++song) {
    const double detune = 1.0 + 0.02 * (2.0 * rng.uniform() - 1.0);
    const auto block_classes = detail::drift_classes(songs.song_true[song], n_blocks, cfg.drift_fraction,
                                                     cfg.classes, rng);
    std::vector<double> samples;
    samples.reserve(total);
    for (std::size_t b = 0; b < n_blocks; ++b) {
      const std::size_t len = std::min(block, total - b * block);
      render_block(static_cast<std::size_t>(block_classes[b]), len, cfg.sample_rate, detune, cfg.noise_floor,
                   b * block, rng, samples);
    }
    const std::string file = songs.song_ids[song] + ".wav";
    const std::string path = (std::filesystem::path(out_dir) / file).string();
    audio::write_wav16(path, samples, cfg.sample_rate);
    out.manifest.rows.push_back({path, songs.song_ids[song], songs.song_label[song]});
    rel.push_back(file);
  }
  out.song_true = songs.song_true;
  out.song_flipped = songs.song_flipped;
  out.manifest_path = (std::filesystem::path(out_dir) / "manifest.csv").string();
  audio::write_manifest(out.manifest_path, out.manifest, rel);

  std::ofstream truth(std::filesystem::path(out_dir) / "truth.csv");
  if (!truth) throw IoError("cannot write truth.csv in " + out_dir);
  truth << "song_id,true_label,label,flipped\n";
  for (std::size_t song = 0; song < songs.song_ids.size(); ++song)
    truth << songs.song_ids[song] << ",class" << songs.song_true[song] << ",class" << songs.song_label[song] << ','
          << static_cast<int>(songs.song_flipped[song]) << '\n';
  return out;
}

}  // namespace sssl::synth

#endif  // SSSL_SYNTH_HPP
