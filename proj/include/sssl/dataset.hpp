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

#ifndef SSSL_DATASET_HPP
#define SSSL_DATASET_HPP

#include <algorithm>

#include "sssl/nn.hpp"

namespace sssl {

/// In-memory segment dataset: fixed-shape features plus hard labels.
struct SampleSet {
  nn::Dims dims;
  std::vector<double> features;  // size() * dims.size() values
  std::vector<int> labels;       // current hard (inherited) labels
  std::vector<std::size_t> song; // parent song index per sample, may be empty

  std::size_t size() const { return labels.size(); }
  std::size_t sample_size() const { return dims.size(); }

  std::span<const double> sample(std::size_t i) const {
    return {features.data() + i * sample_size(), sample_size()};
  }

  void push_back(std::span<const double> x, int label, std::size_t song_index = 0) {
    if (x.size() != sample_size()) throw ShapeError("SampleSet::push_back: wrong feature size");
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
    song.push_back(song_index);
  }

  /// (B, c, h, w) tensor of the given samples.
  Tensor batch(std::span<const std::size_t> idx) const {
    Tensor t({idx.size(), dims.c, dims.h, dims.w});
    const std::size_t n = sample_size();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      auto src = sample(idx[b]);
      std::copy(src.begin(), src.end(), t.data.begin() + static_cast<std::ptrdiff_t>(b * n));
    }
    return t;
  }

  SampleSet subset(std::span<const std::size_t> idx) const {
    SampleSet s;
    s.dims = dims;
    s.features.reserve(idx.size() * sample_size());
    for (std::size_t i : idx) s.push_back(sample(i), labels[i], song.empty() ? 0 : song[i]);
    return s;
  }
};

/// Scalar input standardization shared by training and inference.
struct InputScaling {
  double mean = 0.0;
  double stddev = 1.0;

  static InputScaling fit(const SampleSet& s) {
    InputScaling sc;
    if (s.features.empty()) return sc;
    double sum = 0.0;
    for (double v : s.features) sum += v;
    sc.mean = sum / static_cast<double>(s.features.size());
    double var = 0.0;
    for (double v : s.features) var += (v - sc.mean) * (v - sc.mean);
    var /= static_cast<double>(s.features.size());
    sc.stddev = var > 1e-24 ? std::sqrt(var) : 1.0;
    return sc;
  }

  void apply(SampleSet& s) const {
    for (double& v : s.features) v = (v - mean) / stddev;
  }
};

}  // namespace sssl

#endif  // SSSL_DATASET_HPP
