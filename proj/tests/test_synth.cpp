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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sssl/synth.hpp"

namespace sssl::synth {
namespace {

namespace fs = std::filesystem;

std::vector<int> cyclic_labels(std::size_t n, int K) {
  std::vector<int> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<int>(i) % K;
  return v;
}

TEST(LabelNoise, FlipsExactCountToOtherClasses) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const auto clean = cyclic_labels(100, 4);
    std::vector<char> mask;
    const auto noisy = inject_label_noise(clean, 0.3, 4, rng, &mask);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
      changed += noisy[i] != clean[i];
      EXPECT_EQ(static_cast<bool>(mask[i]), noisy[i] != clean[i]);
      EXPECT_GE(noisy[i], 0);
      EXPECT_LT(noisy[i], 4);
    }
    EXPECT_EQ(changed, 30u);
  }
}

TEST(LabelNoise, RoundingAndBinaryComplement) {
  Rng rng(9);
  const auto clean = cyclic_labels(10, 2);
  const auto noisy = inject_label_noise(clean, 0.5, 2, rng);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < clean.size(); ++i)
    if (noisy[i] != clean[i]) {
      ++changed;
      EXPECT_EQ(noisy[i], 1 - clean[i]);
    }
  EXPECT_EQ(changed, 5u);
  EXPECT_EQ(inject_label_noise(clean, 0.0, 2, rng), clean);
  EXPECT_THROW(inject_label_noise(clean, 1.0, 2, rng), ConfigError);
  EXPECT_THROW(inject_label_noise(clean, -0.1, 2, rng), ConfigError);
}

TEST(FeatureCorpus, ShapeAndNoiseOnTrainingSongsOnly) {
  SynthConfig cfg;
  cfg.classes = 4;
  cfg.songs_per_class = 25;
  cfg.heldout_songs_per_class = 5;
  cfg.segments_per_song = 6;
  cfg.feature_dim = 8;
  cfg.noise_rate = 0.3;
  const auto c = gen_feature_corpus(cfg);
  EXPECT_EQ(c.song_ids.size(), 120u);
  EXPECT_EQ(c.segments(), 720u);
  EXPECT_EQ(c.features.size(), 720u * 8u);
  std::size_t flipped = 0;
  for (std::size_t s = 0; s < c.song_ids.size(); ++s) {
    flipped += c.song_flipped[s];
    if (c.song_heldout[s]) {
      EXPECT_EQ(c.song_label[s], c.song_true[s]);
    }
    EXPECT_EQ(static_cast<bool>(c.song_flipped[s]), c.song_label[s] != c.song_true[s]);
  }
  EXPECT_EQ(flipped, 30u);
  const auto train = c.training_set();
  EXPECT_EQ(train.size(), 600u);
  EXPECT_EQ(c.heldout_set().size(), 120u);
  const auto mask = c.training_clean_mask();
  EXPECT_EQ(std::count(mask.begin(), mask.end(), 0), 30 * 6);
}

TEST(FeatureCorpus, DriftIsExactPerSong) {
  SynthConfig cfg;
  cfg.songs_per_class = 5;
  cfg.segments_per_song = 10;
  cfg.drift_fraction = 0.2;
  const auto c = gen_feature_corpus(cfg);
  std::vector<int> off(c.song_ids.size(), 0);
  for (std::size_t s = 0; s < c.segments(); ++s) off[c.segment_song[s]] += c.segment_true[s] != c.song_true[c.segment_song[s]];
  for (int v : off) EXPECT_EQ(v, 2);
}

TEST(FeatureCorpus, SeedDetermined) {
  SynthConfig cfg;
  cfg.noise_rate = 0.2;
  const auto a = gen_feature_corpus(cfg), b = gen_feature_corpus(cfg);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.song_label, b.song_label);
  cfg.seed = 2;
  EXPECT_NE(gen_feature_corpus(cfg).features, a.features);
}

TEST(FeatureCorpus, SeparableLimitIsNearestMeanPerfect) {
  SynthConfig cfg;
  cfg.separation = 20.0;
  cfg.song_spread = 0.1;
  cfg.segment_spread = 0.1;
  const auto c = gen_feature_corpus(cfg);
  const std::size_t d = cfg.feature_dim;
  std::vector<std::vector<double>> mean(cfg.classes, std::vector<double>(d, 0.0));
  std::vector<double> count(cfg.classes, 0.0);
  for (std::size_t s = 0; s < c.segments(); ++s) {
    const auto k = static_cast<std::size_t>(c.segment_true[s]);
    for (std::size_t j = 0; j < d; ++j) mean[k][j] += c.features[s * d + j];
    count[k] += 1.0;
  }
  for (std::size_t k = 0; k < cfg.classes; ++k)
    for (double& v : mean[k]) v /= count[k];
  for (std::size_t s = 0; s < c.segments(); ++s) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t k = 0; k < cfg.classes; ++k) {
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) dist += std::pow(c.features[s * d + j] - mean[k][j], 2);
      if (dist < best_d) best_d = dist, best = k;
    }
    ASSERT_EQ(static_cast<int>(best), c.segment_true[s]);
  }
}

TEST(FeatureCorpus, RejectsBadConfig) {
  SynthConfig cfg;
  cfg.noise_rate = 1.2;
  EXPECT_THROW(gen_feature_corpus(cfg), ConfigError);
  cfg = {};
  cfg.classes = 1;
  EXPECT_THROW(gen_feature_corpus(cfg), ConfigError);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

class AudioCorpusTest : public ::testing::Test {
 protected:
  fs::path dir = fs::temp_directory_path() / "sssl_synth_audio";
  SynthConfig cfg;
  void SetUp() override {
    fs::remove_all(dir);
    cfg.classes = 2;
    cfg.songs_per_class = 2;
    cfg.song_duration_s = 10.0;
    cfg.noise_rate = 0.25;
    cfg.seed = 4;
  }
  void TearDown() override { fs::remove_all(dir); }
};

TEST_F(AudioCorpusTest, ByteIdenticalForSameSeed) {
  const auto a = gen_audio_corpus(cfg, (dir / "a").string());
  gen_audio_corpus(cfg, (dir / "b").string());
  ASSERT_EQ(a.manifest.rows.size(), 4u);
  for (const auto& row : a.manifest.rows) {
    const auto name = fs::path(row.path).filename();
    EXPECT_EQ(slurp(dir / "a" / name), slurp(dir / "b" / name)) << name;
  }
  EXPECT_EQ(slurp(dir / "a" / "manifest.csv"), slurp(dir / "b" / "manifest.csv"));
  EXPECT_EQ(slurp(dir / "a" / "truth.csv"), slurp(dir / "b" / "truth.csv"));
  EXPECT_EQ(std::count(a.song_flipped.begin(), a.song_flipped.end(), 1), 1);
}

TEST_F(AudioCorpusTest, SongsSegmentAndSeparateInMelSpace) {
  const auto c = gen_audio_corpus(cfg, dir.string());
  const auto m = audio::load_manifest(c.manifest_path);
  ASSERT_EQ(m.rows.size(), 4u);
  std::vector<std::vector<double>> profile;  // mean log-mel per band, per song
  for (std::size_t song = 0; song < 4; ++song) {
    EXPECT_EQ(c.song_true[song], static_cast<int>(song % 2));
    const auto w = audio::load_audio(m.rows[song].path);
    EXPECT_NEAR(w.duration(), 10.0, 1e-9);
    const auto segs = audio::segment(w, 1, 0);
    ASSERT_EQ(segs.size(), 10u);
    std::vector<double> band(audio::kMelBins, 0.0);
    for (const auto& s : segs) {
      const auto mel = audio::mel_spectrogram(s);
      for (std::size_t b = 0; b < mel.n_mels; ++b)
        for (std::size_t f = 0; f < mel.n_frames; ++f) band[b] += mel.at(b, f) / (10.0 * mel.n_frames);
    }
    profile.push_back(band);
  }
  auto dist = [&](std::size_t a, std::size_t b) {
    double d = 0.0;
    for (std::size_t j = 0; j < audio::kMelBins; ++j) d += std::pow(profile[a][j] - profile[b][j], 2);
    return std::sqrt(d);
  };
  const double within = std::max(dist(0, 2), dist(1, 3));
  const double across = std::min({dist(0, 1), dist(0, 3), dist(2, 1), dist(2, 3)});
  EXPECT_LT(2.0 * within, across);
}

TEST(ClassRecipes, RootsAreDistinct) {
  for (std::size_t a = 0; a < 8; ++a)
    for (std::size_t b = a + 1; b < 8; ++b) EXPECT_NE(class_fundamentals(a)[0], class_fundamentals(b)[0]);
}

}  // namespace
}  // namespace sssl::synth
