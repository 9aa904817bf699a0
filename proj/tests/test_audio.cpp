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

#include "sssl/audio.hpp"

namespace sssl::audio {
namespace {

namespace fs = std::filesystem;

class TempDir : public ::testing::Test {
 protected:
  fs::path dir;
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("sssl_audio_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string file(const std::string& name) const { return (dir / name).string(); }
};

// Minimal RIFF writer for arbitrary formats; payload bytes are given raw.
void write_raw_wav(const std::string& path, std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
                   std::uint16_t bits, const std::vector<unsigned char>& payload) {
  std::ofstream os(path, std::ios::binary);
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) os.put(static_cast<char>(v >> (8 * i)));
  };
  auto put16 = [&](std::uint16_t v) {
    os.put(static_cast<char>(v));
    os.put(static_cast<char>(v >> 8));
  };
  os.write("RIFF", 4);
  put32(36 + static_cast<std::uint32_t>(payload.size()));
  os.write("WAVEfmt ", 8);
  put32(16);
  put16(format);
  put16(channels);
  put32(rate);
  put32(rate * channels * bits / 8);
  put16(static_cast<std::uint16_t>(channels * bits / 8));
  put16(bits);
  os.write("data", 4);
  put32(static_cast<std::uint32_t>(payload.size()));
  os.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
}

std::vector<unsigned char> pcm16(const std::vector<std::int16_t>& v) {
  std::vector<unsigned char> out;
  for (auto s : v) {
    out.push_back(static_cast<unsigned char>(s & 0xff));
    out.push_back(static_cast<unsigned char>((static_cast<std::uint16_t>(s) >> 8) & 0xff));
  }
  return out;
}

AudioError::Code error_code(const std::string& path) {
  try {
    load_audio(path);
  } catch (const AudioError& e) {
    return e.code();
  }
  ADD_FAILURE() << "no AudioError for " << path;
  return AudioError::Code::unreadable;
}

TEST_F(TempDir, DecimatesToTargetRate) {
  std::vector<double> x(44100);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.5 * std::sin(2.0 * M_PI * 440.0 * i / 44100.0);
  write_wav16(file("a.wav"), x, 44100);
  const auto w = load_audio(file("a.wav"), 22050);
  EXPECT_EQ(w.samples.size(), 22050u);
  EXPECT_EQ(w.sample_rate, 22050);
  for (double v : w.samples) {
    ASSERT_TRUE(std::isfinite(v));
    ASSERT_LE(std::abs(v), 1.0);
  }
}

TEST_F(TempDir, IdentityRateIsBitExact) {
  std::vector<std::int16_t> raw(3 * 22050);
  Rng rng(1);
  for (auto& s : raw) s = static_cast<std::int16_t>(static_cast<int>(rng.below(65536)) - 32768);
  write_raw_wav(file("b.wav"), 1, 1, 22050, 16, pcm16(raw));
  const auto w = load_audio(file("b.wav"), 22050);
  ASSERT_EQ(w.samples.size(), 66150u);
  for (std::size_t i = 0; i < raw.size(); ++i) ASSERT_EQ(w.samples[i], raw[i] / 32768.0);
}

TEST_F(TempDir, StereoIsAveraged) {
  std::vector<std::int16_t> raw;
  for (int i = 0; i < 1000; ++i) {
    raw.push_back(16384);
    raw.push_back(-16384);
  }
  write_raw_wav(file("c.wav"), 1, 2, 22050, 16, pcm16(raw));
  const auto w = load_audio(file("c.wav"));
  ASSERT_EQ(w.samples.size(), 1000u);
  for (double v : w.samples) EXPECT_EQ(v, 0.0);
}

TEST_F(TempDir, Float32IsDecoded) {
  std::vector<unsigned char> payload;
  for (float f : {0.25f, -0.5f, 2.0f}) {
    unsigned char b[4];
    std::memcpy(b, &f, 4);
    payload.insert(payload.end(), b, b + 4);
  }
  write_raw_wav(file("d.wav"), 3, 1, 22050, 32, payload);
  const auto w = load_audio(file("d.wav"));
  EXPECT_EQ(w.samples, (std::vector<double>{0.25, -0.5, 1.0}));  // clipped into [-1, 1]
}

TEST_F(TempDir, DistinctErrorsPerFailure) {
  EXPECT_EQ(error_code(file("missing.wav")), AudioError::Code::unreadable);
  std::ofstream(file("junk.wav")) << "definitely not audio";
  EXPECT_EQ(error_code(file("junk.wav")), AudioError::Code::unreadable);
  write_raw_wav(file("u8.wav"), 1, 1, 22050, 8, {1, 2, 3});
  EXPECT_EQ(error_code(file("u8.wav")), AudioError::Code::unsupported_encoding);
  write_raw_wav(file("empty.wav"), 1, 1, 22050, 16, {});
  EXPECT_EQ(error_code(file("empty.wav")), AudioError::Code::empty);
}

TEST(Resample, LengthAndEndpoints) {
  const std::vector<double> x{0, 1, 2, 3, 4, 5, 6, 7};
  EXPECT_EQ(resample_linear(x, 8, 8), x);
  const auto half = resample_linear(x, 8, 4);
  EXPECT_EQ(half, (std::vector<double>{0, 2, 4, 6}));
  const auto up = resample_linear(x, 4, 8);
  ASSERT_EQ(up.size(), 16u);
  EXPECT_DOUBLE_EQ(up[1], 0.5);
  EXPECT_THROW(resample_linear(x, 0, 8), ConfigError);
}

Waveform silent(double seconds, int sr = 100) {
  Waveform w;
  w.sample_rate = sr;
  w.samples.assign(static_cast<std::size_t>(std::llround(seconds * sr)), 0.0);
  return w;
}

TEST(Segment, CountsAndStarts) {
  const auto a = segment(silent(45), 1, 0);
  ASSERT_EQ(a.size(), 45u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_DOUBLE_EQ(a[i].start_s, static_cast<double>(i));
  const auto b = segment(silent(45), 3, 2);
  ASSERT_EQ(b.size(), 43u);
  EXPECT_DOUBLE_EQ(b[1].start_s - b[0].start_s, 1.0);
  EXPECT_TRUE(segment(silent(0.5), 1, 0).empty());
  EXPECT_THROW(segment(silent(5), 2, 2), ConfigError);
  EXPECT_THROW(segment(silent(5), 0, 0), ConfigError);
}

TEST(Segment, NoPaddingAndExactLength) {
  const auto w = silent(7.3);
  for (int d = 1; d <= 5; ++d) {
    for (const auto& s : segment(w, d, d - 1)) {
      EXPECT_EQ(s.samples.size(), static_cast<std::size_t>(d * w.sample_rate));
      EXPECT_LE(s.start_s + s.duration_s, w.duration() + 1e-12);
    }
  }
}

TEST(Segment, CountDropsByOnePerSecondOfDuration) {
  for (int L = 2; L <= 40; ++L)
    for (int d = 1; d + 1 <= L && d <= 5; ++d)
      EXPECT_EQ(segment(silent(L), d, d - 1).size() - segment(silent(L), d + 1, d).size(), 1u);
}

TEST(Segment, CoversTheClip) {
  Waveform w = silent(12.5);
  for (std::size_t i = 0; i < w.samples.size(); ++i) w.samples[i] = static_cast<double>(i);
  for (auto [d, o] : {std::pair{3, 1}, std::pair{2, 0}, std::pair{4, 3}}) {
    const auto segs = segment(w, d, o);
    std::vector<char> covered(w.samples.size(), 0);
    for (const auto& s : segs)
      for (double v : s.samples) covered[static_cast<std::size_t>(v)] = 1;
    const std::size_t end = static_cast<std::size_t>(segs.back().samples.back());
    for (std::size_t i = 0; i <= end; ++i) ASSERT_TRUE(covered[i]) << "d=" << d << " o=" << o << " i=" << i;
  }
}

TEST(Mel, ShapeOfOneSecond) {
  Segment s;
  s.samples.assign(22050, 0.0);
  const auto m = mel_spectrogram(s);
  EXPECT_EQ(m.n_mels, 128u);
  EXPECT_EQ(m.n_frames, 42u);  // floor((22050 - 1024) / 512) + 1
  EXPECT_EQ(m.values.size(), 128u * 42u);
  for (double v : m.values) EXPECT_DOUBLE_EQ(v, std::log(kLogFloor));
}

TEST(Mel, FrameCountAndShortInput) {
  EXPECT_EQ(frame_count(1023), 0u);
  EXPECT_EQ(frame_count(1024), 1u);
  EXPECT_EQ(frame_count(1535), 1u);
  EXPECT_EQ(frame_count(1536), 2u);
  EXPECT_THROW(mel_power(std::vector<double>(1000, 0.0), 22050), ConfigError);
}

TEST(Mel, FilterbankIsTriangularWithUnitPeak) {
  const auto edges = mel_band_edges(22050);
  ASSERT_EQ(edges.size(), 130u);
  EXPECT_DOUBLE_EQ(edges.front(), 0.0);
  EXPECT_NEAR(edges.back(), 11025.0, 1e-6);
  for (std::size_t m : {5u, 64u, 127u}) {
    EXPECT_NEAR(mel_filter_weight(edges, m, edges[m + 1]), 1.0, 1e-12);
    EXPECT_EQ(mel_filter_weight(edges, m, edges[m]), 0.0);
    EXPECT_EQ(mel_filter_weight(edges, m, edges[m + 2]), 0.0);
    EXPECT_NEAR(mel_filter_weight(edges, m, 0.5 * (edges[m] + edges[m + 1])), 0.5, 1e-12);
  }
  EXPECT_NEAR(hz_to_mel(700.0), 2595.0 * std::log10(2.0), 1e-9);
  EXPECT_NEAR(mel_to_hz(hz_to_mel(1234.5)), 1234.5, 1e-9);
}

TEST(Mel, SinusoidPeaksInItsBand) {
  for (std::size_t band : {40u, 60u, 90u, 120u}) {
    const double hz = mel_band_center(band, 22050);
    // Oracle: the band whose triangle responds most strongly to this frequency.
    const auto edges = mel_band_edges(22050);
    std::size_t best = 0;
    for (std::size_t m = 0; m < kMelBins; ++m)
      if (mel_filter_weight(edges, m, hz) > mel_filter_weight(edges, best, hz)) best = m;
    ASSERT_EQ(best, band);
    Segment s;
    for (int i = 0; i < 22050; ++i) s.samples.push_back(0.5 * std::sin(2.0 * M_PI * hz * i / 22050.0));
    const auto m = mel_spectrogram(s);
    for (std::size_t f = 0; f < m.n_frames; ++f) {
      std::size_t arg = 0;
      for (std::size_t b = 0; b < m.n_mels; ++b)
        if (m.at(b, f) > m.at(arg, f)) arg = b;
      ASSERT_EQ(arg, band) << "frame " << f << " at " << hz << " Hz";
    }
  }
}

TEST(Mel, EnergyScalesQuadratically) {
  Rng rng(3);
  std::vector<double> x(4096), y(4096);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = 0.37 * (x[i] = 0.3 * rng.normal());
  const auto px = mel_power(x, 22050), py = mel_power(y, 22050);
  const double ex = std::accumulate(px.begin(), px.end(), 0.0), ey = std::accumulate(py.begin(), py.end(), 0.0);
  EXPECT_NEAR(ey / ex, 0.37 * 0.37, 1e-6 * 0.37 * 0.37);
  EXPECT_EQ(px, mel_power(x, 22050));  // deterministic
}

TEST_F(TempDir, ManifestDensifiesLabelsInFirstSeenOrder) {
  std::ofstream(file("m.csv")) << "path,song_id,label\nx.wav,s1,Q3\n/abs/y.wav,s2,Q1\nz.wav,s3,Q3\n";
  const auto m = load_manifest(file("m.csv"));
  ASSERT_EQ(m.rows.size(), 3u);
  EXPECT_EQ(m.label_names, (std::vector<std::string>{"Q3", "Q1"}));
  EXPECT_EQ(m.rows[0].label, 0);
  EXPECT_EQ(m.rows[1].label, 1);
  EXPECT_EQ(m.rows[0].path, (dir / "x.wav").string());
  EXPECT_EQ(m.rows[1].path, "/abs/y.wav");
}

TEST_F(TempDir, ManifestTwoRowExample) {
  std::ofstream(file("m.csv")) << "path,song_id,label\na.wav,a,Q1\nb.wav,b,Q3\n";
  const auto m = load_manifest(file("m.csv"));
  EXPECT_EQ(m.classes(), 2u);
  EXPECT_EQ(m.rows[0].label, 0);
  EXPECT_EQ(m.rows[1].label, 1);
}

TEST_F(TempDir, ManifestErrors) {
  std::ofstream(file("dup.csv")) << "path,song_id,label\na.wav,song7,x\nb.wav,song7,y\n";
  try {
    load_manifest(file("dup.csv"));
    FAIL() << "duplicate accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("song7"), std::string::npos);
  }
  std::ofstream(file("nolabel.csv")) << "path,song_id,label\na.wav,s,\n";
  EXPECT_THROW(load_manifest(file("nolabel.csv")), ConfigError);
  std::ofstream(file("header.csv")) << "file,id,label\n";
  EXPECT_THROW(load_manifest(file("header.csv")), ConfigError);
  std::ofstream(file("known.csv")) << "path,song_id,label\na.wav,s,zz\n";
  EXPECT_THROW(load_manifest(file("known.csv"), {"aa", "bb"}), ConfigError);
  EXPECT_THROW(load_manifest(file("absent.csv")), IoError);
}

TEST_F(TempDir, ManifestHeaderOnlyIsEmpty) {
  std::ofstream(file("empty.csv")) << "path,song_id,label\n";
  const auto m = load_manifest(file("empty.csv"));
  EXPECT_TRUE(m.rows.empty());
  EXPECT_EQ(m.classes(), 0u);
}

TEST_F(TempDir, ManifestRoundTrip) {
  Manifest m;
  m.label_names = {"calm", "tense"};
  m.rows = {{"a.wav", "a", 1}, {"b.wav", "b", 0}};
  write_manifest(file("w.csv"), m);
  const auto back = load_manifest(file("w.csv"), m.label_names);
  EXPECT_EQ(back.rows[0].label, 1);
  EXPECT_EQ(back.rows[1].song_id, "b");
}

}  // namespace
}  // namespace sssl::audio
