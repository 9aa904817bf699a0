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

#ifndef SSSL_METRICS_HPP
#define SSSL_METRICS_HPP

#include <optional>

#include <nlohmann/json.hpp>

#include "sssl/core.hpp"

namespace sssl::metrics {

inline double macro_average(std::span<const double> per_class) {
  if (per_class.empty()) return 0.0;
  return std::accumulate(per_class.begin(), per_class.end(), 0.0) / static_cast<double>(per_class.size());
}

/// Classification summary. confusion[t][p] counts items of true class t
/// predicted as p. Undefined precision/recall/F1 (no predictions or no
/// support) count as 0.
struct MetricsReport {
  std::size_t classes = 0;
  std::vector<std::vector<std::size_t>> confusion;
  std::vector<std::size_t> support;
  std::vector<double> precision, recall, f1;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::size_t total = 0;
  std::optional<std::size_t> fold;

  static MetricsReport compute(std::span<const int> truth, std::span<const int> predicted, std::size_t classes) {
    if (truth.size() != predicted.size()) throw ShapeError("metrics: truth and prediction lengths differ");
    MetricsReport r;
    r.classes = classes;
    r.total = truth.size();
    r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] < 0 || predicted[i] < 0 || static_cast<std::size_t>(truth[i]) >= classes ||
          static_cast<std::size_t>(predicted[i]) >= classes)
        throw ShapeError("metrics: label out of range");
      ++r.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
    }
    std::size_t trace = 0;
    r.support.assign(classes, 0);
    r.precision.assign(classes, 0.0);
    r.recall.assign(classes, 0.0);
    r.f1.assign(classes, 0.0);
    for (std::size_t k = 0; k < classes; ++k) {
      std::size_t predicted_k = 0;
      for (std::size_t t = 0; t < classes; ++t) {
        r.support[k] += r.confusion[k][t];
        predicted_k += r.confusion[t][k];
      }
      const double tp = static_cast<double>(r.confusion[k][k]);
      trace += r.confusion[k][k];
      if (predicted_k) r.precision[k] = tp / static_cast<double>(predicted_k);
      if (r.support[k]) r.recall[k] = tp / static_cast<double>(r.support[k]);
      if (r.precision[k] + r.recall[k] > 0.0)
        r.f1[k] = 2.0 * r.precision[k] * r.recall[k] / (r.precision[k] + r.recall[k]);
    }
    r.accuracy = r.total ? static_cast<double>(trace) / static_cast<double>(r.total) : 0.0;
    r.macro_f1 = macro_average(r.f1);
    return r;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    if (fold) j["fold"] = *fold;
    j["total"] = total;
    j["accuracy"] = accuracy;
    j["macro_f1"] = macro_f1;
    j["precision"] = precision;
    j["recall"] = recall;
    j["f1"] = f1;
    j["support"] = support;
    j["confusion"] = confusion;
    return j;
  }
};

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Arithmetic mean and population standard deviation.
inline MeanStd mean_std(std::span<const double> xs) {
  MeanStd m;
  if (xs.empty()) return m;
  m.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m.mean) * (x - m.mean);
  m.stddev = std::sqrt(v / static_cast<double>(xs.size()));
  return m;
}

}  // namespace sssl::metrics

#endif  // SSSL_METRICS_HPP
