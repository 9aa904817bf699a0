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

// Semi-supervised self-learning loop for segment classifiers trained on
// inherited (noisy) labels.
//
// After a plain cross-entropy warm-up, every epoch starts by fitting a loss
// mixture and splitting the training set. Clean samples keep their one-hot
// labels; noisy samples get sharpened model predictions as soft labels. The
// union is shuffled, neighbours in the shuffle are mixed, and the model is
// optimized on L_mix + lambda * L_kl, where L_kl is the symmetric KL between
// two dropout passes over noisy samples.
//
// The mixup loss is computed label-side: CE(f(x), d * y_p + (1 - d) * y_q).
// Cross entropy is linear in the label, so this equals the two-term form
// d * CE(f(x), y_p) + (1 - d) * CE(f(x), y_q); see mix_loss_two_term().

#ifndef SSSL_SSL_TRAIN_HPP
#define SSSL_SSL_TRAIN_HPP

#include <optional>
#include <random>

#include <nlohmann/json.hpp>

#include "sssl/noise_partition.hpp"

namespace sssl::ssl {

enum class PseudoRefresh { epoch, batch };

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t warm_up_epochs = 5;
  std::size_t batch_size = 64;
  double lr = 0.01;
  double momentum = 0.9;
  double lr_decay = 0.1;
  std::vector<double> lr_milestones{0.6, 0.8};  // fractions of `epochs`
  double temperature = 0.5;
  double tau = 0.5;
  double lambda = 1.0;
  double alpha = 0.75;
  bool baseline_mode = false;
  PseudoRefresh pseudo_refresh = PseudoRefresh::epoch;
  std::uint64_t seed = 1;
  partition::EmOptions em;

  void validate() const {
    if (epochs == 0) throw ConfigError("epochs must be positive");
    // warm_up_epochs == epochs is accepted: the run degenerates to the baseline.
    if (!baseline_mode && warm_up_epochs > epochs)
      throw ConfigError("warm_up_epochs must not exceed epochs");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
    if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must be in [0, 1]");
  }

  double lr_at(std::size_t epoch) const {
    double rate = lr;
    for (double m : lr_milestones)
      if (static_cast<double>(epoch) >= std::floor(m * static_cast<double>(epochs))) rate *= lr_decay;
    return rate;
  }
};

struct EpochReport {
  std::size_t epoch = 0;
  std::string phase;  // "ce" (warm-up, baseline, fallback) or "sssl"
  std::optional<std::size_t> clean_size;
  std::optional<std::size_t> noisy_size;
  double mean_mix = 0.0;  // mean objective of the labeled term (plain CE in "ce" epochs)
  std::optional<double> mean_kl;
  double total = 0.0;
  std::optional<double> heldout_accuracy;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["epoch"] = epoch;
    j["phase"] = phase;
    if (clean_size) j["clean"] = *clean_size;
    if (noisy_size) j["noisy"] = *noisy_size;
    j["loss_mix"] = mean_mix;
    if (mean_kl) j["loss_kl"] = *mean_kl;
    j["loss_total"] = total;
    if (heldout_accuracy) j["heldout_accuracy"] = *heldout_accuracy;
    return j;
  }
};

// ---------------------------------------------------------------------------
// Building blocks.

/// Temperature sharpening: p_k^(1/T) / sum_j p_j^(1/T).
inline std::vector<double> sharpen(std::span<const double> p, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("sharpen: temperature must be positive");
  std::vector<double> out(p.size());
  // Work in log space so small T does not underflow every entry.
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < p.size(); ++k) {
    out[k] = p[k] > 0.0 ? std::log(p[k]) / temperature : -std::numeric_limits<double>::infinity();
    m = std::max(m, out[k]);
  }
  if (!(m > -std::numeric_limits<double>::infinity())) throw Error("sharpen: no positive probability");
  double sum = 0.0;
  for (double& v : out) sum += (v = std::exp(v - m));
  for (double& v : out) v /= sum;
  return out;
}

inline double sample_beta(double alpha, Rng& rng) {
  if (!(alpha > 0.0)) throw ConfigError("beta parameter must be positive");
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double x = gamma(rng);
  const double y = gamma(rng);
  if (x + y <= 0.0) return 0.5;
  return x / (x + y);
}

/// Mixing coefficient: Beta(alpha, alpha) folded onto [0.5, 1].
inline double sample_delta(double alpha, Rng& rng) {
  const double d = sample_beta(alpha, rng);
  return std::max(d, 1.0 - d);
}

/// Convex combination of two equally sized vectors.
inline std::vector<double> mix(std::span<const double> a, std::span<const double> b, double delta) {
  if (a.size() != b.size()) throw ShapeError("mixup: shape mismatch");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = delta * a[i] + (1.0 - delta) * b[i];
  return out;
}

struct Mixed {
  std::vector<double> features;
  std::vector<double> label;
};

inline Mixed mixup(std::span<const double> xa, std::span<const double> ya, std::span<const double> xb,
                   std::span<const double> yb, double delta) {
  if (!(delta >= 0.0 && delta <= 1.0)) throw ConfigError("mixup: delta must be in [0, 1]");
  return {mix(xa, xb, delta), mix(ya, yb, delta)};
}

/// A batch of mixed samples together with both parents' labels.
struct MixedBatch {
  Tensor features;  // (B, c, h, w)
  Tensor label_p;   // (B, K)
  Tensor label_q;   // (B, K)
  std::vector<double> delta;

  Tensor mixed_labels() const {
    Tensor y(label_p.shape);
    for (std::size_t i = 0; i < label_p.rows(); ++i)
      for (std::size_t k = 0; k < label_p.row_size(); ++k)
        y(i, k) = delta[i] * label_p(i, k) + (1.0 - delta[i]) * label_q(i, k);
    return y;
  }
};

/// Label-side mixup loss: mean CE against the mixed soft label.
inline double mix_loss(const Tensor& probs, const MixedBatch& batch) {
  return nn::cross_entropy(probs, batch.mixed_labels());
}

/// Two-term mixup loss: mean of d * CE(p, y_p) + (1 - d) * CE(p, y_q).
inline double mix_loss_two_term(const Tensor& probs, const MixedBatch& batch) {
  const auto lp = nn::cross_entropy_per_sample(probs, batch.label_p);
  const auto lq = nn::cross_entropy_per_sample(probs, batch.label_q);
  double s = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) s += batch.delta[i] * lp[i] + (1.0 - batch.delta[i]) * lq[i];
  return lp.empty() ? 0.0 : s / static_cast<double>(lp.size());
}

/// Forward pass (dropout on) plus L_mix for a mixed batch.
inline double mix_loss(const nn::ModelParams& params, const nn::NetworkConfig& cfg, const MixedBatch& batch,
                       Rng& rng) {
  return mix_loss(nn::forward(params, cfg, batch.features, true, rng).probs, batch);
}

/// 0.5 * (KL(p || q) + KL(q || p)) with eps-smoothed logs.
inline double symmetric_kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("symmetric_kl: size mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k)
    s += (p[k] - q[k]) * (std::log(p[k] + nn::kLogEps) - std::log(q[k] + nn::kLogEps));
  return 0.5 * s;
}

struct KlTerms {
  double loss = 0.0;  // batch mean
  Tensor dp1;         // d loss / d p1
  Tensor dp2;         // d loss / d p2
};

/// Batch-mean symmetric KL between two passes and its gradients.
inline KlTerms rdrop_kl(const Tensor& p1, const Tensor& p2) {
  nn::check_same_shape(p1, p2, "rdrop_kl");
  KlTerms t{0.0, Tensor(p1.shape), Tensor(p2.shape)};
  const std::size_t B = p1.rows();
  if (B == 0) return t;
  const double scale = 1.0 / static_cast<double>(B);
  for (std::size_t i = 0; i < B; ++i) {
    t.loss += symmetric_kl(p1.row(i), p2.row(i));
    for (std::size_t k = 0; k < p1.row_size(); ++k) {
      const double a = p1(i, k), b = p2(i, k);
      const double diff_log = std::log(a + nn::kLogEps) - std::log(b + nn::kLogEps);
      t.dp1(i, k) = 0.5 * (diff_log + (a - b) / (a + nn::kLogEps)) * scale;
      t.dp2(i, k) = 0.5 * (-diff_log + (b - a) / (b + nn::kLogEps)) * scale;
    }
  }
  t.loss *= scale;
  return t;
}

/// L_kl for a batch: two independent dropout passes over the same inputs.
inline double rdrop_kl_loss(const nn::ModelParams& params, const nn::NetworkConfig& cfg, const Tensor& batch,
                            Rng& rng) {
  if (!cfg.has_active_dropout()) warn("rdrop_kl_loss: network has no active dropout; loss is identically 0");
  const auto a = nn::forward(params, cfg, batch, true, rng);
  const auto b = nn::forward(params, cfg, batch, true, rng);
  return rdrop_kl(a.probs, b.probs).loss;
}

inline double total_loss(double l_mix, double l_kl, double lambda) { return l_mix + lambda * l_kl; }

/// Pairs each noisy sample with its sharpened prediction (dropout off). The
/// original labels of these samples play no part.
inline std::vector<std::vector<double>> make_pseudo_labeled(const nn::ModelParams& params,
                                                            const nn::NetworkConfig& cfg, const SampleSet& data,
                                                            std::span<const std::size_t> noisy, double temperature,
                                                            std::size_t batch_size = 256) {
  std::vector<std::vector<double>> out;
  out.reserve(noisy.size());
  for (std::size_t start = 0; start < noisy.size(); start += batch_size) {
    const std::size_t end = std::min(noisy.size(), start + batch_size);
    const Tensor probs = nn::predict(params, cfg, data.batch(noisy.subspan(start, end - start)));
    for (std::size_t i = 0; i < probs.rows(); ++i) out.push_back(sharpen(probs.row(i), temperature));
  }
  return out;
}

inline double accuracy(const nn::ModelParams& params, const nn::NetworkConfig& cfg, const SampleSet& data,
                       std::size_t batch_size = 256) {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
    const auto pred = nn::argmax_rows(nn::predict(params, cfg, data.batch(idx)));
    for (std::size_t b = 0; b < idx.size(); ++b) correct += pred[b] == data.labels[idx[b]];
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Training loop.

struct TrainHooks {
  std::function<void(std::size_t epoch, const partition::PartitionResult&, const partition::PartitionDiagnostics&)>
      on_partition;
  std::function<void(const EpochReport&, const nn::ModelParams&)> on_epoch_end;
};

struct TrainResult {
  nn::ModelParams params;
  std::vector<EpochReport> reports;
};

namespace detail {

struct EpochLosses {
  double mix = 0.0, kl = 0.0;
  std::size_t samples = 0, kl_batches = 0;
};

inline EpochLosses ce_epoch(nn::ModelParams& params, const nn::NetworkConfig& cfg, const SampleSet& data,
                            const TrainConfig& tc, double lr, nn::SgdState& opt, Rng& rng) {
  EpochLosses out;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
    const std::span<const std::size_t> idx(order.data() + start,
                                           std::min(tc.batch_size, order.size() - start));
    std::vector<int> labels;
    for (std::size_t i : idx) labels.push_back(data.labels[i]);
    const Tensor y = nn::one_hot(labels, cfg.classes());
    const auto fw = nn::forward(params, cfg, data.batch(idx), true, rng);
    out.mix += nn::cross_entropy(fw.probs, y) * static_cast<double>(idx.size());
    out.samples += idx.size();
    const auto grads =
        nn::backward(params, cfg, fw.cache, nn::softmax_backward(fw.probs, nn::cross_entropy_grad(fw.probs, y)));
    nn::sgd_step(params, grads, lr, tc.momentum, opt);
  }
  return out;
}

inline EpochLosses sssl_epoch(nn::ModelParams& params, const nn::NetworkConfig& cfg, const SampleSet& data,
                              const partition::PartitionResult& part, const TrainConfig& tc, double lr,
                              nn::SgdState& opt, Rng& rng) {
  const std::size_t K = cfg.classes();
  const std::size_t dim = data.sample_size();

  struct Item {
    std::size_t sample;
    std::vector<double> label;
    bool pseudo;
  };
  std::vector<Item> items;
  items.reserve(data.size());
  for (std::size_t id : part.clean_ids) {
    std::vector<double> y(K, 0.0);
    y[static_cast<std::size_t>(data.labels[id])] = 1.0;
    items.push_back({id, std::move(y), false});
  }
  const auto pseudo = make_pseudo_labeled(params, cfg, data, part.noisy_ids, tc.temperature);
  for (std::size_t i = 0; i < part.noisy_ids.size(); ++i) items.push_back({part.noisy_ids[i], pseudo[i], true});

  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<std::size_t> kl_order = part.noisy_ids;
  rng.shuffle(kl_order);
  std::size_t kl_pos = 0;

  EpochLosses out;
  const std::size_t n = order.size();
  for (std::size_t start = 0; start < n; start += tc.batch_size) {
    const std::size_t B = std::min(tc.batch_size, n - start);

    if (tc.pseudo_refresh == PseudoRefresh::batch) {
      std::vector<std::size_t> stale;  // item indices of pseudo-labeled members of this batch and partners
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t pos : {start + b, (start + b + 1) % n})
          if (items[order[pos]].pseudo) stale.push_back(order[pos]);
      }
      std::sort(stale.begin(), stale.end());
      stale.erase(std::unique(stale.begin(), stale.end()), stale.end());
      std::vector<std::size_t> samples;
      for (std::size_t it : stale) samples.push_back(items[it].sample);
      const auto fresh = make_pseudo_labeled(params, cfg, data, samples, tc.temperature);
      for (std::size_t i = 0; i < stale.size(); ++i) items[stale[i]].label = fresh[i];
    }

    MixedBatch mb{Tensor({B, data.dims.c, data.dims.h, data.dims.w}), Tensor({B, K}), Tensor({B, K}), {}};
    mb.delta.resize(B);
    for (std::size_t b = 0; b < B; ++b) {
      const Item& p = items[order[start + b]];
      const Item& q = items[order[(start + b + 1) % n]];
      const double d = sample_delta(tc.alpha, rng);
      mb.delta[b] = d;
      const auto xp = data.sample(p.sample), xq = data.sample(q.sample);
      for (std::size_t j = 0; j < dim; ++j) mb.features.data[b * dim + j] = d * xp[j] + (1.0 - d) * xq[j];
      std::copy(p.label.begin(), p.label.end(), mb.label_p.row(b).begin());
      std::copy(q.label.begin(), q.label.end(), mb.label_q.row(b).begin());
    }
    const Tensor y = mb.mixed_labels();
    const auto fw = nn::forward(params, cfg, mb.features, true, rng);
    out.mix += nn::cross_entropy(fw.probs, y) * static_cast<double>(B);
    out.samples += B;
    nn::ModelParams grads =
        nn::backward(params, cfg, fw.cache, nn::softmax_backward(fw.probs, nn::cross_entropy_grad(fw.probs, y)));

    if (tc.lambda > 0.0 && !kl_order.empty()) {
      std::vector<std::size_t> kidx;
      const std::size_t kb = std::min(tc.batch_size, kl_order.size());
      for (std::size_t i = 0; i < kb; ++i) {
        kidx.push_back(kl_order[kl_pos]);
        kl_pos = (kl_pos + 1) % kl_order.size();
      }
      const Tensor xb = data.batch(kidx);
      const auto f1 = nn::forward(params, cfg, xb, true, rng);
      const auto f2 = nn::forward(params, cfg, xb, true, rng);
      const KlTerms kl = rdrop_kl(f1.probs, f2.probs);
      out.kl += kl.loss;
      ++out.kl_batches;
      nn::accumulate(grads, nn::backward(params, cfg, f1.cache, nn::softmax_backward(f1.probs, kl.dp1)), tc.lambda);
      nn::accumulate(grads, nn::backward(params, cfg, f2.cache, nn::softmax_backward(f2.probs, kl.dp2)), tc.lambda);
    }
    nn::sgd_step(params, grads, lr, tc.momentum, opt);
  }
  return out;
}

}  // namespace detail

/// Trains a segment classifier. With `baseline_mode` every epoch is plain
/// cross entropy on the inherited labels.
inline TrainResult train(const TrainConfig& tc, const nn::NetworkConfig& cfg, const SampleSet& train_set,
                         const SampleSet* heldout = nullptr, const TrainHooks& hooks = {}) {
  tc.validate();
  if (train_set.size() == 0) throw Error("train: empty training set");
  if (train_set.dims != cfg.input()) throw ShapeError("train: sample shape does not match network input");

  Rng rng(tc.seed);
  TrainResult res;
  res.params = nn::init_params(cfg, rng);
  nn::SgdState opt;

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const double lr = tc.lr_at(epoch);
    EpochReport rep;
    rep.epoch = epoch;
    detail::EpochLosses losses;
    bool ran_sssl = false;
    if (!tc.baseline_mode && epoch >= tc.warm_up_epochs) {
      partition::PartitionDiagnostics diag;
      const auto part =
          partition::partition_dataset(res.params, cfg, train_set, tc.tau, tc.batch_size, tc.em, &diag);
      if (hooks.on_partition) hooks.on_partition(epoch, part, diag);
      rep.clean_size = part.clean_ids.size();
      rep.noisy_size = part.noisy_ids.size();
      if (part.clean_ids.empty()) {
        warn("epoch " + std::to_string(epoch) + ": clean set is empty; running a plain cross-entropy epoch");
      } else {
        losses = detail::sssl_epoch(res.params, cfg, train_set, part, tc, lr, opt, rng);
        ran_sssl = true;
      }
    }
    if (!ran_sssl) losses = detail::ce_epoch(res.params, cfg, train_set, tc, lr, opt, rng);

    rep.phase = ran_sssl ? "sssl" : "ce";
    rep.mean_mix = losses.samples ? losses.mix / static_cast<double>(losses.samples) : 0.0;
    if (ran_sssl && tc.lambda > 0.0)
      rep.mean_kl = losses.kl_batches ? losses.kl / static_cast<double>(losses.kl_batches) : 0.0;
    rep.total = total_loss(rep.mean_mix, rep.mean_kl.value_or(0.0), ran_sssl ? tc.lambda : 0.0);
    if (heldout && heldout->size() > 0) rep.heldout_accuracy = accuracy(res.params, cfg, *heldout);
    info("epoch " + std::to_string(epoch) + " " + rep.to_json().dump());
    if (hooks.on_epoch_end) hooks.on_epoch_end(rep, res.params);
    res.reports.push_back(std::move(rep));
  }
  return res;
}

}  // namespace sssl::ssl

#endif  // SSSL_SSL_TRAIN_HPP
