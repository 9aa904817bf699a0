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

// Two-component 1-D Gaussian mixture over per-sample losses, used to split a
// training set into a probably-clean labeled part and a probably-noisy part
// whose labels are discarded.

#ifndef SSSL_NOISE_PARTITION_HPP
#define SSSL_NOISE_PARTITION_HPP

#include <array>
#include <fstream>

#include "sssl/dataset.hpp"

namespace sssl::partition {

struct LossRecord {
  std::size_t sample_id = 0;
  double ce_loss = 0.0;
};

struct Gmm2 {
  std::array<double, 2> means{0.0, 0.0};
  std::array<double, 2> variances{1.0, 1.0};
  std::array<double, 2> weights{0.5, 0.5};
  /// All inputs equal; posterior() returns 1 and partitioning keeps everything.
  bool degenerate = false;
  /// One component lost (almost) all of its mass during EM.
  bool collapsed = false;
  std::size_t iterations = 0;
  /// Mean log-likelihood at the initial parameters and after each M-step.
  std::vector<double> log_likelihood;
};

struct EmOptions {
  std::size_t max_iter = 100;
  double tol = 1e-6;
  double variance_floor = 1e-6;
};

struct PartitionResult {
  std::vector<std::size_t> clean_ids;
  std::vector<std::size_t> noisy_ids;
  std::vector<double> posteriors;  // omega, aligned with the input id order
  double tau = 0.5;
};

/// Unreduced cross entropy of every sample against its hard label, dropout off.
inline std::vector<LossRecord> per_sample_losses(const nn::ModelParams& params, const nn::NetworkConfig& cfg,
                                                 const SampleSet& data, std::size_t batch_size) {
  if (data.size() == 0) throw Error("per_sample_losses: empty dataset");
  if (batch_size == 0) throw ConfigError("per_sample_losses: batch size must be positive");
  std::vector<LossRecord> out;
  out.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
    const Tensor probs = nn::predict(params, cfg, data.batch(idx));
    std::vector<int> labels;
    for (std::size_t i : idx) labels.push_back(data.labels[i]);
    const auto ce = nn::cross_entropy_per_sample(probs, nn::one_hot(labels, cfg.classes()));
    for (std::size_t b = 0; b < idx.size(); ++b) out.push_back({idx[b], ce[b]});
  }
  return out;
}

struct NormalizedLosses {
  std::vector<double> values;
  bool degenerate = false;  // constant input, every value mapped to 0.5
};

/// Affine map of the losses onto [0, 1] (min -> 0, max -> 1).
inline NormalizedLosses normalize_losses(std::span<const double> losses) {
  NormalizedLosses out;
  out.values.resize(losses.size());
  if (losses.empty()) return out;
  const auto [lo, hi] = std::minmax_element(losses.begin(), losses.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) {
    std::fill(out.values.begin(), out.values.end(), 0.5);
    out.degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < losses.size(); ++i) out.values[i] = (losses[i] - *lo) / range;
  return out;
}

namespace detail {
inline constexpr double kLog2Pi = 1.8378770664093454836;

inline double log_normal(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

inline double log_sum_exp(double a, double b) {
  const double m = std::max(a, b);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double component_log_joint(const Gmm2& g, int k, double x) {
  if (g.weights[k] <= 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(g.weights[k]) + log_normal(x, g.means[k], g.variances[k]);
}

inline double mean_log_likelihood(const Gmm2& g, std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += log_sum_exp(component_log_joint(g, 0, x), component_log_joint(g, 1, x));
  return s / static_cast<double>(xs.size());
}
}  // namespace detail

/// Fits a two-component mixture by EM. Initialization is deterministic:
/// means at the 25th/75th percentiles, both variances at the global
/// variance, equal weights. Components are returned sorted by mean.
inline Gmm2 fit_gmm_em(std::span<const double> losses, const EmOptions& opt = {}) {
  if (losses.size() < 10) throw Error("fit_gmm_em: need at least 10 samples");
  const std::size_t n = losses.size();
  std::vector<double> sorted(losses.begin(), losses.end());
  std::sort(sorted.begin(), sorted.end());

  Gmm2 g;
  double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double x : sorted) var += (x - mean) * (x - mean);
  var /= static_cast<double>(n);
  if (sorted.front() == sorted.back()) {
    g.degenerate = true;
    g.means = {sorted.front(), sorted.front()};
    g.variances = {opt.variance_floor, opt.variance_floor};
    g.weights = {1.0, 0.0};
    return g;
  }
  g.means = {sorted_quantile(sorted, 0.25), sorted_quantile(sorted, 0.75)};
  g.variances = {std::max(var, opt.variance_floor), std::max(var, opt.variance_floor)};
  g.weights = {0.5, 0.5};

  std::vector<double> resp(n);  // responsibility of component 0
  double ll = detail::mean_log_likelihood(g, losses);
  g.log_likelihood.push_back(ll);
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    // E-step
    for (std::size_t i = 0; i < n; ++i) {
      const double a = detail::component_log_joint(g, 0, losses[i]);
      const double b = detail::component_log_joint(g, 1, losses[i]);
      resp[i] = std::exp(a - detail::log_sum_exp(a, b));
    }
    // M-step
    std::array<double, 2> nk{0.0, 0.0}, mu{0.0, 0.0}, v{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      nk[0] += resp[i];
      nk[1] += 1.0 - resp[i];
      mu[0] += resp[i] * losses[i];
      mu[1] += (1.0 - resp[i]) * losses[i];
    }
    for (int k = 0; k < 2; ++k) {
      if (nk[k] > 0.0) {
        mu[k] /= nk[k];
      } else {
        mu[k] = g.means[k];
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double d0 = losses[i] - mu[0], d1 = losses[i] - mu[1];
      v[0] += resp[i] * d0 * d0;
      v[1] += (1.0 - resp[i]) * d1 * d1;
    }
    for (int k = 0; k < 2; ++k) {
      g.weights[k] = nk[k] / static_cast<double>(n);
      g.means[k] = mu[k];
      g.variances[k] = nk[k] > 0.0 ? std::max(v[k] / nk[k], opt.variance_floor) : opt.variance_floor;
    }
    ++g.iterations;
    const double next = detail::mean_log_likelihood(g, losses);
    g.log_likelihood.push_back(next);
    const double gain = next - ll;
    ll = next;
    if (!(gain >= opt.tol)) break;
  }
  if (g.means[0] > g.means[1]) {
    std::swap(g.means[0], g.means[1]);
    std::swap(g.variances[0], g.variances[1]);
    std::swap(g.weights[0], g.weights[1]);
  }
  g.collapsed = std::min(g.weights[0], g.weights[1]) < 1e-6;
  return g;
}

/// Posterior probability that `loss` belongs to the smaller-mean component.
inline double clean_posterior(const Gmm2& g, double loss) {
  if (g.degenerate) return 1.0;
  const double a = detail::component_log_joint(g, 0, loss);
  const double b = detail::component_log_joint(g, 1, loss);
  const double lse = detail::log_sum_exp(a, b);
  if (lse == -std::numeric_limits<double>::infinity()) return 0.5;
  return std::clamp(std::exp(a - lse), 0.0, 1.0);
}

/// Samples with omega > tau are clean; the rest are noisy.
inline PartitionResult partition(std::span<const std::size_t> ids, std::span<const double> posteriors,
                                 double tau) {
  if (ids.size() != posteriors.size()) throw ShapeError("partition: one posterior per id required");
  PartitionResult r;
  r.tau = tau;
  r.posteriors.assign(posteriors.begin(), posteriors.end());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (posteriors[i] > tau) {
      r.clean_ids.push_back(ids[i]);
    } else {
      r.noisy_ids.push_back(ids[i]);
    }
  }
  return r;
}

struct PartitionDiagnostics {
  std::vector<LossRecord> losses;
  Gmm2 gmm;
  bool degenerate = false;
};

/// Loss -> normalize -> EM -> posterior -> threshold, over the whole set.
inline PartitionResult partition_dataset(const nn::ModelParams& params, const nn::NetworkConfig& cfg,
                                         const SampleSet& data, double tau, std::size_t batch_size,
                                         const EmOptions& em = {}, PartitionDiagnostics* diag = nullptr) {
  const auto records = per_sample_losses(params, cfg, data, batch_size);
  std::vector<double> raw(records.size());
  std::vector<std::size_t> ids(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    raw[i] = records[i].ce_loss;
    ids[i] = records[i].sample_id;
  }
  const auto norm = normalize_losses(raw);
  Gmm2 g;
  std::vector<double> omega(records.size(), 1.0);
  if (!norm.degenerate && records.size() >= 10) {
    g = fit_gmm_em(norm.values, em);
    for (std::size_t i = 0; i < omega.size(); ++i) omega[i] = clean_posterior(g, norm.values[i]);
  } else {
    g.degenerate = true;
    warn("loss distribution is degenerate; treating every sample as clean");
  }
  if (diag) {
    diag->losses = records;
    diag->gmm = g;
    diag->degenerate = g.degenerate;
  }
  if (g.degenerate) {
    // Degenerate fallback: everything is clean regardless of tau.
    PartitionResult r;
    r.tau = tau;
    r.posteriors = omega;
    r.clean_ids = ids;
    return r;
  }
  return partition(ids, omega, tau);
}

/// Writes `sample_id,loss,omega,assigned_set` rows.
inline void write_partition_csv(const std::string& path, const std::vector<LossRecord>& losses,
                                const PartitionResult& r) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  std::vector<char> clean(losses.size(), 0);
  for (std::size_t id : r.clean_ids)
    if (id < clean.size()) clean[id] = 1;
  os << "sample_id,loss,omega,assigned_set\n";
  for (std::size_t i = 0; i < losses.size(); ++i) {
    os << losses[i].sample_id << ',' << losses[i].ce_loss << ',' << r.posteriors[i] << ','
       << (clean[losses[i].sample_id] ? "clean" : "noisy") << '\n';
  }
}

}  // namespace sssl::partition

#endif  // SSSL_NOISE_PARTITION_HPP
