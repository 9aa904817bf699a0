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

// Audio decoding, fixed-duration segmentation and log-mel features.
//
// Segments are never padded: a clip shorter than the segment duration yields
// nothing, and the tail that does not fill a whole segment is dropped. Frames
// are taken the same way (no centering), so a segment of n samples has
// floor((n - 1024) / 512) + 1 frames.

#ifndef SSSL_AUDIO_HPP
#define SSSL_AUDIO_HPP

#include <algorithm>
#include <array>
#include <complex>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>

#include <fftw3.h>

#include "sssl/core.hpp"

namespace sssl::audio {

inline constexpr int kDefaultSampleRate = 22050;
inline constexpr std::size_t kFftSize = 1024;
inline constexpr std::size_t kHopSize = 512;
inline constexpr std::size_t kMelBins = 128;
inline constexpr double kLogFloor = 1e-10;

class AudioError : public IoError {
 public:
  enum class Code { unreadable, unsupported_encoding, empty };
  AudioError(Code code, const std::string& msg) : IoError(msg), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

struct Waveform {
  std::vector<double> samples;  // mono, in [-1, 1]
  int sample_rate = kDefaultSampleRate;
  std::string source_id;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct Segment {
  std::string song_id;
  double start_s = 0.0;
  double duration_s = 0.0;
  std::vector<double> samples;
};

struct MelSpec {
  std::size_t n_mels = kMelBins;
  std::size_t n_frames = 0;
  std::vector<double> values;  // row major (mel, frame)
  std::string song_id;
  double start_s = 0.0;

  double at(std::size_t mel, std::size_t frame) const { return values[mel * n_frames + frame]; }
};

// ---------------------------------------------------------------------------
// WAV

namespace detail {

inline std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

/// Linear-interpolation resampler. Equal rates return the input unchanged.
inline std::vector<double> resample_linear(const std::vector<double>& x, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw ConfigError("sample rates must be positive");
  if (from_rate == to_rate || x.empty()) return x;
  const std::size_t n_out = static_cast<std::size_t>(static_cast<std::uint64_t>(x.size()) *
                                                     static_cast<std::uint64_t>(to_rate) /
                                                     static_cast<std::uint64_t>(from_rate));
  std::vector<double> y(n_out);
  const double step = static_cast<double>(from_rate) / static_cast<double>(to_rate);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double t = static_cast<double>(i) * step;
    const auto i0 = static_cast<std::size_t>(t);
    const double frac = t - static_cast<double>(i0);
    const double a = x[std::min(i0, x.size() - 1)];
    const double b = x[std::min(i0 + 1, x.size() - 1)];
    y[i] = frac == 0.0 ? a : a + frac * (b - a);
  }
  return y;
}

/// Decodes a RIFF WAV file (16-bit PCM or 32-bit float, mono or stereo),
/// averages channels and resamples to `target_rate`.
inline Waveform load_audio(const std::string& path, int target_rate = kDefaultSampleRate) {
  using Code = AudioError::Code;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw AudioError(Code::unreadable, "cannot open audio file " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw AudioError(Code::unreadable, path + ": not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t len = detail::le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size() && std::memcmp(chunk, "data", 4) != 0)
      throw AudioError(Code::unreadable, path + ": truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16) throw AudioError(Code::unreadable, path + ": short fmt chunk");
      format = detail::le16(bytes.data() + body);
      channels = detail::le16(bytes.data() + body + 2);
      rate = detail::le32(bytes.data() + body + 4);
      bits = detail::le16(bytes.data() + body + 14);
      if (format == 0xFFFE && len >= 26) format = detail::le16(bytes.data() + body + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = std::min<std::size_t>(len, bytes.size() - body);
    }
    pos = body + len + (len & 1u);
  }
  if (format == 0 || data == nullptr) throw AudioError(Code::unreadable, path + ": missing fmt or data chunk");
  const bool pcm16 = format == 1 && bits == 16;
  const bool float32 = format == 3 && bits == 32;
  if (!pcm16 && !float32)
    throw AudioError(Code::unsupported_encoding,
                     path + ": unsupported encoding (format " + std::to_string(format) + ", " +
                         std::to_string(bits) + " bits)");
  if (channels < 1 || channels > 2)
    throw AudioError(Code::unsupported_encoding, path + ": only mono and stereo are supported");
  if (rate == 0) throw AudioError(Code::unreadable, path + ": zero sample rate");

  const std::size_t frame_bytes = static_cast<std::size_t>(bits / 8) * channels;
  const std::size_t frames = data_len / frame_bytes;
  if (frames == 0) throw AudioError(Code::empty, path + ": no audio samples");

  std::vector<double> mono(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double sum = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + f * frame_bytes + c * (bits / 8);
      double v;
      if (pcm16) {
        v = static_cast<double>(static_cast<std::int16_t>(detail::le16(p))) / 32768.0;
      } else {
        const std::uint32_t u = detail::le32(p);
        float fv;
        std::memcpy(&fv, &u, 4);
        v = std::isfinite(fv) ? std::clamp(static_cast<double>(fv), -1.0, 1.0) : 0.0;
      }
      sum += v;
    }
    mono[f] = sum / channels;
  }
  Waveform w;
  w.samples = resample_linear(mono, static_cast<int>(rate), target_rate);
  w.sample_rate = target_rate;
  w.source_id = path;
  return w;
}

/// Writes mono 16-bit PCM. Samples are clipped to [-1, 1].
inline void write_wav16(const std::string& path, std::span<const double> samples, int sample_rate) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  auto put32 = [&](std::uint32_t v) {
    const char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                       static_cast<char>(v >> 24)};
    os.write(b, 4);
  };
  auto put16 = [&](std::uint16_t v) {
    const char b[2] = {static_cast<char>(v), static_cast<char>(v >> 8)};
    os.write(b, 2);
  };
  const auto data_len = static_cast<std::uint32_t>(samples.size() * 2);
  os.write("RIFF", 4);
  put32(36 + data_len);
  os.write("WAVEfmt ", 8);
  put32(16);
  put16(1);
  put16(1);
  put32(static_cast<std::uint32_t>(sample_rate));
  put32(static_cast<std::uint32_t>(sample_rate) * 2);
  put16(2);
  put16(16);
  os.write("data", 4);
  put32(data_len);
  for (double s : samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    put16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0))));
  }
  if (!os) throw IoError("failed writing " + path);
}

// ---------------------------------------------------------------------------
// Segmentation

/// Number of segments for a clip of `n_samples`.
inline std::size_t segment_count(std::size_t n_samples, int sample_rate, int duration_s, int overlap_s) {
  const std::size_t len = static_cast<std::size_t>(duration_s) * static_cast<std::size_t>(sample_rate);
  const std::size_t hop = static_cast<std::size_t>(duration_s - overlap_s) * static_cast<std::size_t>(sample_rate);
  if (n_samples < len) return 0;
  return (n_samples - len) / hop + 1;
}

inline std::vector<Segment> segment(const Waveform& w, int duration_s, int overlap_s) {
  if (duration_s <= 0) throw ConfigError("segment duration must be positive");
  if (overlap_s < 0 || overlap_s >= duration_s) throw ConfigError("segment overlap must be in [0, duration)");
  if (w.sample_rate <= 0) throw ConfigError("waveform has no sample rate");
  const std::size_t len = static_cast<std::size_t>(duration_s) * static_cast<std::size_t>(w.sample_rate);
  const std::size_t hop = static_cast<std::size_t>(duration_s - overlap_s) * static_cast<std::size_t>(w.sample_rate);
  const std::size_t count = segment_count(w.samples.size(), w.sample_rate, duration_s, overlap_s);
  std::vector<Segment> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Segment s;
    s.song_id = w.source_id;
    s.start_s = static_cast<double>(i * hop) / w.sample_rate;
    s.duration_s = duration_s;
    const auto first = w.samples.begin() + static_cast<std::ptrdiff_t>(i * hop);
    s.samples.assign(first, first + static_cast<std::ptrdiff_t>(len));
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mel spectrogram

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Band edges in Hz: n_mels + 2 points evenly spaced on the mel scale from
/// 0 Hz to Nyquist. Band m spans [edges[m], edges[m + 2]] peaking at edges[m + 1].
inline std::vector<double> mel_band_edges(int sample_rate, std::size_t n_mels = kMelBins) {
  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  return edges;
}

inline double mel_band_center(std::size_t band, int sample_rate, std::size_t n_mels = kMelBins) {
  return mel_band_edges(sample_rate, n_mels)[band + 1];
}

/// Triangular weight of band `m` at frequency `hz` (peak 1 at the center).
inline double mel_filter_weight(const std::vector<double>& edges, std::size_t m, double hz) {
  const double lo = edges[m], c = edges[m + 1], hi = edges[m + 2];
  if (hz <= lo || hz >= hi) return 0.0;
  return hz <= c ? (hz - lo) / (c - lo) : (hi - hz) / (hi - c);
}

/// (n_mels, kFftSize / 2 + 1) filterbank matrix, row major.
inline std::vector<double> mel_filterbank(int sample_rate, std::size_t n_mels = kMelBins) {
  const auto edges = mel_band_edges(sample_rate, n_mels);
  const std::size_t bins = kFftSize / 2 + 1;
  std::vector<double> fb(n_mels * bins);
  for (std::size_t m = 0; m < n_mels; ++m)
    for (std::size_t k = 0; k < bins; ++k)
      fb[m * bins + k] = mel_filter_weight(edges, m, static_cast<double>(k) * sample_rate / kFftSize);
  return fb;
}

inline std::size_t frame_count(std::size_t n_samples) {
  return n_samples < kFftSize ? 0 : (n_samples - kFftSize) / kHopSize + 1;
}

namespace detail {

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

/// Plan shared by all threads; fftw_execute_dft_r2c on fresh aligned buffers
/// is thread-safe, plan creation is not.
inline fftw_plan shared_r2c_plan() {
  static std::once_flag once;
  static fftw_plan plan = nullptr;
  std::call_once(once, [] {
    std::unique_ptr<double, FftwDeleter> in(static_cast<double*>(fftw_malloc(sizeof(double) * kFftSize)));
    std::unique_ptr<fftw_complex, FftwDeleter> out(
        static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (kFftSize / 2 + 1))));
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(kFftSize), in.get(), out.get(), FFTW_ESTIMATE);
  });
  return plan;
}

inline const std::vector<double>& hann_window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kFftSize);
    for (std::size_t n = 0; n < kFftSize; ++n)
      v[n] = 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * static_cast<double>(n) / kFftSize);
    return v;
  }();
  return w;
}

}  // namespace detail

/// Mel-band power (before the log), shape (n_mels, frames).
inline std::vector<double> mel_power(std::span<const double> samples, int sample_rate,
                                     std::size_t n_mels = kMelBins) {
  const std::size_t frames = frame_count(samples.size());
  if (frames == 0) throw ConfigError("segment shorter than one analysis window");
  const std::size_t bins = kFftSize / 2 + 1;
  const auto fb = mel_filterbank(sample_rate, n_mels);
  const auto& window = detail::hann_window();
  const fftw_plan plan = detail::shared_r2c_plan();
  std::unique_ptr<double, detail::FftwDeleter> in(static_cast<double*>(fftw_malloc(sizeof(double) * kFftSize)));
  std::unique_ptr<fftw_complex, detail::FftwDeleter> out(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins)));
  std::vector<double> power(bins);
  std::vector<double> mel(n_mels * frames, 0.0);
  for (std::size_t f = 0; f < frames; ++f) {
    const double* src = samples.data() + f * kHopSize;
    for (std::size_t n = 0; n < kFftSize; ++n) in.get()[n] = src[n] * window[n];
    fftw_execute_dft_r2c(plan, in.get(), out.get());
    for (std::size_t k = 0; k < bins; ++k) {
      const double re = out.get()[k][0], im = out.get()[k][1];
      power[k] = re * re + im * im;
    }
    for (std::size_t m = 0; m < n_mels; ++m) {
      const double* row = fb.data() + m * bins;
      double s = 0.0;
      for (std::size_t k = 0; k < bins; ++k) s += row[k] * power[k];
      mel[m * frames + f] = s;
    }
  }
  return mel;
}

inline MelSpec mel_spectrogram(const Segment& s, int sample_rate = kDefaultSampleRate) {
  MelSpec spec;
  spec.values = mel_power(s.samples, sample_rate);
  spec.n_frames = frame_count(s.samples.size());
  spec.song_id = s.song_id;
  spec.start_s = s.start_s;
  for (double& v : spec.values) v = std::log(v + kLogFloor);
  return spec;
}

// ---------------------------------------------------------------------------
// Manifest CSV: header `path,song_id,label`.

struct ManifestRow {
  std::string path;
  std::string song_id;
  int label = 0;
};

struct Manifest {
  std::vector<ManifestRow> rows;
  std::vector<std::string> label_names;

  std::size_t classes() const { return label_names.size(); }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

/// Parses a manifest. Relative audio paths are resolved against the
/// manifest's directory. Label ids follow first-seen order of label names.
/// `known_labels`, when given, fixes the label order up front.
inline Manifest load_manifest(const std::string& path, const std::vector<std::string>& known_labels = {}) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  Manifest m;
  m.label_names = known_labels;
  std::map<std::string, int> label_ids;
  for (std::size_t i = 0; i < known_labels.size(); ++i) label_ids[known_labels[i]] = static_cast<int>(i);
  std::map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (header) {
      if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
      if (line != "path,song_id,label")
        throw ConfigError(path + ": expected header 'path,song_id,label'");
      header = false;
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 3)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected 3 fields");
    if (f[1].empty()) throw ConfigError(path + ":" + std::to_string(line_no) + ": empty song_id");
    if (f[2].empty()) throw ConfigError(path + ":" + std::to_string(line_no) + ": empty label");
    if (seen.count(f[1])) throw ConfigError(path + ": duplicate song_id '" + f[1] + "'");
    seen[f[1]] = m.rows.size();
    auto it = label_ids.find(f[2]);
    if (it == label_ids.end()) {
      if (!known_labels.empty())
        throw ConfigError(path + ":" + std::to_string(line_no) + ": unknown label '" + f[2] + "'");
      it = label_ids.emplace(f[2], static_cast<int>(m.label_names.size())).first;
      m.label_names.push_back(f[2]);
    }
    std::filesystem::path audio(f[0]);
    if (audio.is_relative() && !base.empty()) audio = base / audio;
    m.rows.push_back({audio.string(), f[1], it->second});
  }
  if (header) throw ConfigError(path + ": empty file (missing header)");
  return m;
}

inline void write_manifest(const std::string& path, const Manifest& m,
                           const std::vector<std::string>& relative_paths = {}) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  os << "path,song_id,label\n";
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    const auto& r = m.rows[i];
    os << (relative_paths.empty() ? r.path : relative_paths[i]) << ',' << r.song_id << ','
       << m.label_names[static_cast<std::size_t>(r.label)] << '\n';
  }
}

}  // namespace sssl::audio

#endif  // SSSL_AUDIO_HPP
