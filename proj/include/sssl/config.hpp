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

// Run configuration: flat `key = value` text with `#` comments. Command-line
// flags are applied on top of the file as the same keys.

#ifndef SSSL_CONFIG_HPP
#define SSSL_CONFIG_HPP

#include <fstream>
#include <map>

#include "sssl/aggregate.hpp"
#include "sssl/ssl_train.hpp"
#include "sssl/synth.hpp"

namespace sssl::config {

using KeyValues = std::map<std::string, std::string>;

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline KeyValues parse_text(std::istream& is, const std::string& origin = "config") {
  KeyValues kv;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(n) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(n) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline KeyValues load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  return parse_text(is, path);
}

/// Every tunable of the pipeline, with defaults.
struct RunConfig {
  ssl::TrainConfig train;
  std::string arch = "default";
  int segment_duration = 1;
  int segment_overlap = 0;
  double theta = 0.5;
  aggregate::SvmOptions svm;
  std::size_t threads = 1;
  double heldout_fraction = 0.1;
  std::size_t checkpoint_every = 0;
  std::size_t folds = 10;
  synth::SynthConfig synth;
  std::string synth_mode = "feature";

  /// Applies `key = value` pairs; unknown keys and malformed values are errors.
  void apply(const KeyValues& kv) {
    for (const auto& [key, value] : kv) set(key, value);
  }

  void set(const std::string& key, const std::string& value) {
    auto as_double = [&]() {
      try {
        std::size_t used = 0;
        const double d = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return d;
      } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + value + "'");
      }
    };
    auto as_size = [&]() {
      const double d = as_double();
      if (d < 0 || d != std::floor(d)) throw ConfigError("config key '" + key + "': expected a non-negative integer");
      return static_cast<std::size_t>(d);
    };
    auto as_int = [&]() {
      const double d = as_double();
      if (d != std::floor(d)) throw ConfigError("config key '" + key + "': expected an integer");
      return static_cast<int>(d);
    };
    auto as_bool = [&]() {
      if (value == "true" || value == "1" || value == "yes") return true;
      if (value == "false" || value == "0" || value == "no") return false;
      throw ConfigError("config key '" + key + "': expected true/false");
    };
    auto& t = train;
    auto& s = synth;
    if (key == "epochs") t.epochs = as_size();
    else if (key == "warm_up_epochs") t.warm_up_epochs = as_size();
    else if (key == "batch_size") t.batch_size = as_size();
    else if (key == "lr") t.lr = as_double();
    else if (key == "momentum") t.momentum = as_double();
    else if (key == "lr_decay") t.lr_decay = as_double();
    else if (key == "temperature") t.temperature = as_double();
    else if (key == "tau") t.tau = as_double();
    else if (key == "lambda") t.lambda = as_double();
    else if (key == "alpha") t.alpha = as_double();
    else if (key == "baseline") t.baseline_mode = as_bool();
    else if (key == "pseudo_refresh") {
      if (value == "epoch") t.pseudo_refresh = ssl::PseudoRefresh::epoch;
      else if (value == "batch") t.pseudo_refresh = ssl::PseudoRefresh::batch;
      else throw ConfigError("pseudo_refresh must be 'epoch' or 'batch'");
    } else if (key == "seed") {
      t.seed = as_size();
      s.seed = t.seed;
    } else if (key == "em_max_iter") t.em.max_iter = as_size();
    else if (key == "em_tol") t.em.tol = as_double();
    else if (key == "arch") arch = value;
    else if (key == "segment_duration") segment_duration = as_int();
    else if (key == "segment_overlap") segment_overlap = as_int();
    else if (key == "theta") theta = as_double();
    else if (key == "svm_reg") svm.reg = as_double();
    else if (key == "svm_epochs") svm.epochs = as_size();
    else if (key == "svm_lr") svm.lr = as_double();
    else if (key == "threads") threads = as_size();
    else if (key == "heldout_fraction") heldout_fraction = as_double();
    else if (key == "checkpoint_every") checkpoint_every = as_size();
    else if (key == "folds") folds = as_size();
    else if (key == "classes") s.classes = as_size();
    else if (key == "songs_per_class") s.songs_per_class = as_size();
    else if (key == "heldout_songs_per_class") s.heldout_songs_per_class = as_size();
    else if (key == "segments_per_song") s.segments_per_song = as_size();
    else if (key == "feature_dim") s.feature_dim = as_size();
    else if (key == "separation") s.separation = as_double();
    else if (key == "song_spread") s.song_spread = as_double();
    else if (key == "segment_spread") s.segment_spread = as_double();
    else if (key == "noise_rate") s.noise_rate = as_double();
    else if (key == "drift_fraction") s.drift_fraction = as_double();
    else if (key == "song_duration") s.song_duration_s = as_double();
    else if (key == "synth_mode") {
      if (value != "feature" && value != "audio") throw ConfigError("synth_mode must be 'feature' or 'audio'");
      synth_mode = value;
    } else throw ConfigError("unknown config key '" + key + "'");
  }

  void validate() const {
    train.validate();
    if (segment_duration <= 0 || segment_overlap < 0 || segment_overlap >= segment_duration)
      throw ConfigError("segment_overlap must be in [0, segment_duration)");
    if (!(theta > 0.0 && theta < 1.0)) throw ConfigError("theta must be in (0, 1)");
    if (!(heldout_fraction >= 0.0 && heldout_fraction < 1.0)) throw ConfigError("heldout_fraction must be in [0, 1)");
    if (!(svm.reg >= 0.0) || !(svm.lr > 0.0)) throw ConfigError("svm_reg must be >= 0 and svm_lr > 0");
    if (threads == 0) throw ConfigError("threads must be positive");
  }
};

}  // namespace sssl::config

#endif  // SSSL_CONFIG_HPP
