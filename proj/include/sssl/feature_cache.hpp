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

// Binary feature cache.
//
//   header:  "SSFC", u32 version, u32 K, u32 n_mels, u32 n_frames, u32 count
//   record:  u32 song-id length, song-id bytes, f32 start_s, u16 label,
//            n_mels * n_frames f32 values (row major mel x frame)
//
// All integers and floats little-endian. A sidecar `<cache>.index.csv` lists
// `song_id,label,label_name,first_record,segments`, one row per song.

#ifndef SSSL_FEATURE_CACHE_HPP
#define SSSL_FEATURE_CACHE_HPP

#include <atomic>
#include <exception>
#include <map>
#include <thread>

#include "sssl/audio.hpp"
#include "sssl/dataset.hpp"

namespace sssl::cache {

inline constexpr std::uint32_t kCacheVersion = 1;

struct Record {
  std::string song_id;
  float start_s = 0.0f;
  std::uint16_t label = 0;
};

struct FeatureCache {
  std::size_t classes = 0;
  std::size_t n_mels = 0;
  std::size_t n_frames = 0;
  std::vector<std::string> label_names;
  std::vector<Record> records;
  std::vector<float> values;  // records.size() * n_mels * n_frames

  std::size_t feature_size() const { return n_mels * n_frames; }
  nn::Dims dims() const { return {1, n_mels, n_frames}; }

  void add(const std::string& song, double start_s, int label, std::span<const double> feat) {
    if (feat.size() != feature_size()) throw ShapeError("feature cache: record has the wrong size");
    records.push_back({song, static_cast<float>(start_s), static_cast<std::uint16_t>(label)});
    for (double v : feat) values.push_back(static_cast<float>(v));
  }

  struct Song {
    std::string id;
    int label = 0;
    std::vector<std::size_t> records;
  };

  /// Songs in order of first appearance.
  std::vector<Song> songs() const {
    std::vector<Song> out;
    std::map<std::string, std::size_t> pos;
    for (std::size_t r = 0; r < records.size(); ++r) {
      auto [it, inserted] = pos.emplace(records[r].song_id, out.size());
      if (inserted) out.push_back({records[r].song_id, records[r].label, {}});
      out[it->second].records.push_back(r);
    }
    return out;
  }

  /// Samples of the given records, labeled with their stored labels.
  SampleSet samples(std::span<const std::size_t> recs, std::size_t song_index = 0) const {
    SampleSet s;
    s.dims = dims();
    s.features.reserve(recs.size() * feature_size());
    for (std::size_t r : recs) {
      const float* src = values.data() + r * feature_size();
      s.features.insert(s.features.end(), src, src + feature_size());
      s.labels.push_back(records[r].label);
      s.song.push_back(song_index);
    }
    return s;
  }

  /// All segments of the selected songs; SampleSet::song indexes `songs`.
  SampleSet song_samples(const std::vector<Song>& all, std::span<const std::size_t> song_idx) const {
    SampleSet s;
    s.dims = dims();
    for (std::size_t si : song_idx) {
      for (std::size_t r : all[si].records) {
        const float* src = values.data() + r * feature_size();
        s.features.insert(s.features.end(), src, src + feature_size());
        s.labels.push_back(records[r].label);
        s.song.push_back(si);
      }
    }
    return s;
  }
};

namespace detail {
inline void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 24)};
  os.write(b, 4);
}
inline void put_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v), static_cast<char>(v >> 8)};
  os.write(b, 2);
}
inline void put_f32(std::ostream& os, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32(os, u);
}
inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("feature cache: unexpected end of file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
inline std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2)) throw IoError("feature cache: unexpected end of file");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}
inline float get_f32(std::istream& is) {
  const std::uint32_t u = get_u32(is);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}
}  // namespace detail

inline std::string index_path(const std::string& cache_path) { return cache_path + ".index.csv"; }

inline void save(const std::string& path, const FeatureCache& c) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write feature cache " + path);
  os.write("SSFC", 4);
  detail::put_u32(os, kCacheVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(c.classes));
  detail::put_u32(os, static_cast<std::uint32_t>(c.n_mels));
  detail::put_u32(os, static_cast<std::uint32_t>(c.n_frames));
  detail::put_u32(os, static_cast<std::uint32_t>(c.records.size()));
  for (std::size_t r = 0; r < c.records.size(); ++r) {
    const auto& rec = c.records[r];
    detail::put_u32(os, static_cast<std::uint32_t>(rec.song_id.size()));
    os.write(rec.song_id.data(), static_cast<std::streamsize>(rec.song_id.size()));
    detail::put_f32(os, rec.start_s);
    detail::put_u16(os, rec.label);
    for (std::size_t j = 0; j < c.feature_size(); ++j) detail::put_f32(os, c.values[r * c.feature_size() + j]);
  }
  // Optional trailer: every class name, so classes without songs keep theirs.
  os.write("LBLS", 4);
  for (std::size_t k = 0; k < c.classes; ++k) {
    const std::string name = k < c.label_names.size() ? c.label_names[k] : std::to_string(k);
    detail::put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
  }
  if (!os) throw IoError("failed writing feature cache " + path);

  std::ofstream idx(index_path(path));
  if (!idx) throw IoError("cannot write " + index_path(path));
  idx << "song_id,label,label_name,first_record,segments\n";
  for (const auto& s : c.songs()) {
    const auto name = static_cast<std::size_t>(s.label) < c.label_names.size()
                          ? c.label_names[static_cast<std::size_t>(s.label)]
                          : std::to_string(s.label);
    idx << s.id << ',' << s.label << ',' << name << ',' << s.records.front() << ',' << s.records.size() << '\n';
  }
}

inline FeatureCache load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open feature cache " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::string_view(magic, 4) != "SSFC") throw IoError(path + ": not a feature cache");
  if (const auto v = detail::get_u32(is); v != kCacheVersion)
    throw IoError(path + ": unsupported cache version " + std::to_string(v));
  FeatureCache c;
  c.classes = detail::get_u32(is);
  c.n_mels = detail::get_u32(is);
  c.n_frames = detail::get_u32(is);
  const std::uint32_t count = detail::get_u32(is);
  c.records.reserve(count);
  c.values.reserve(static_cast<std::size_t>(count) * c.feature_size());
  for (std::uint32_t r = 0; r < count; ++r) {
    Record rec;
    rec.song_id.resize(detail::get_u32(is));
    if (!is.read(rec.song_id.data(), static_cast<std::streamsize>(rec.song_id.size())))
      throw IoError(path + ": truncated record");
    rec.start_s = detail::get_f32(is);
    rec.label = detail::get_u16(is);
    if (rec.label >= c.classes) throw IoError(path + ": record label out of range");
    for (std::size_t j = 0; j < c.feature_size(); ++j) c.values.push_back(detail::get_f32(is));
    c.records.push_back(std::move(rec));
  }
  c.label_names.resize(c.classes);
  for (std::size_t k = 0; k < c.classes; ++k) c.label_names[k] = std::to_string(k);
  char tag[4];
  if (is.read(tag, 4) && std::string_view(tag, 4) == "LBLS") {
    for (auto& name : c.label_names) {
      name.resize(detail::get_u32(is));
      if (!is.read(name.data(), static_cast<std::streamsize>(name.size()))) throw IoError(path + ": truncated label names");
    }
  } else {
    // Older caches: names of populated classes come from the index.
    std::ifstream idx(index_path(path));
    std::string line;
    if (idx && std::getline(idx, line)) {
      while (std::getline(idx, line)) {
        const auto f = audio::split_csv_line(line);
        if (f.size() < 3) continue;
        const auto label = static_cast<std::size_t>(std::stoul(f[1]));
        if (label < c.classes) c.label_names[label] = f[2];
      }
    }
  }
  return c;
}

/// Segments and featurizes every manifest entry. Songs shorter than one
/// segment are skipped with a warning. Entries are processed on `threads`
/// workers; the output order follows the manifest regardless.
inline FeatureCache featurize(const audio::Manifest& m, int seg_dur, int overlap, std::size_t threads = 1,
                              int sample_rate = audio::kDefaultSampleRate) {
  if (seg_dur <= 0 || overlap < 0 || overlap >= seg_dur)
    throw ConfigError("segment duration must be positive and overlap in [0, duration)");
  std::string missing;
  for (const auto& row : m.rows)
    if (!std::filesystem::exists(row.path)) missing += (missing.empty() ? "" : ", ") + row.path;
  if (!missing.empty()) throw IoError("manifest references missing audio: " + missing);

  struct Result {
    std::vector<audio::MelSpec> specs;
    std::exception_ptr error;
  };
  std::vector<Result> results(m.rows.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < m.rows.size(); i = next++) {
      try {
        auto w = audio::load_audio(m.rows[i].path, sample_rate);
        w.source_id = m.rows[i].song_id;
        for (const auto& seg : audio::segment(w, seg_dur, overlap))
          results[i].specs.push_back(audio::mel_spectrogram(seg, sample_rate));
      } catch (...) {
        results[i].error = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(threads, m.rows.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  FeatureCache c;
  c.classes = m.classes();
  c.label_names = m.label_names;
  c.n_mels = audio::kMelBins;
  c.n_frames = audio::frame_count(static_cast<std::size_t>(seg_dur) * static_cast<std::size_t>(sample_rate));
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    if (results[i].error) std::rethrow_exception(results[i].error);
    if (results[i].specs.empty()) {
      warn("skipping song '" + m.rows[i].song_id + "': shorter than the segment duration");
      continue;
    }
    for (const auto& spec : results[i].specs) c.add(m.rows[i].song_id, spec.start_s, m.rows[i].label, spec.values);
  }
  return c;
}

/// Cache view of a synthetic feature corpus (vectors stored as n_mels x 1).
/// Every song's stored label is its inherited label.
inline FeatureCache from_samples(const SampleSet& s, const std::vector<std::string>& song_ids, std::size_t classes) {
  FeatureCache c;
  c.classes = classes;
  c.n_mels = s.sample_size();
  c.n_frames = 1;
  for (std::size_t k = 0; k < classes; ++k) c.label_names.push_back("class" + std::to_string(k));
  std::map<std::size_t, std::size_t> seen;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const std::size_t n = seen[s.song[i]]++;
    c.add(song_ids[s.song[i]], static_cast<double>(n), s.labels[i], s.sample(i));
  }
  return c;
}

}  // namespace sssl::cache

#endif  // SSSL_FEATURE_CACHE_HPP
