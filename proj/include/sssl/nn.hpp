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

// Small convolutional/dense classifier with hand-written backpropagation.
//
// Activations are laid out per sample as (channels, height, width), row
// major, and batches are stored contiguously. Dense layers flatten their input
// implicitly. Dropout is inverted: kept units are scaled by 1 / (1 - rate) at
// train time so inference needs no rescaling.

#ifndef SSSL_NN_HPP
#define SSSL_NN_HPP

#include <algorithm>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sssl/core.hpp"

namespace sssl::nn {

inline constexpr double kLogEps = 1e-12;

struct Dims {
  std::size_t c = 1, h = 1, w = 1;
  std::size_t size() const { return c * h * w; }
  bool operator==(const Dims&) const = default;
};

enum class LayerType { conv2d, maxpool, relu, dropout, flatten, dense };

struct LayerSpec {
  LayerType type = LayerType::relu;
  std::size_t out_channels = 0;  // conv2d
  std::size_t kernel = 0;        // conv2d, maxpool
  std::size_t stride = 1;        // conv2d
  std::size_t out_dim = 0;       // dense
  double rate = 0.0;             // dropout

  bool has_params() const { return type == LayerType::conv2d || type == LayerType::dense; }
};

/// Default backbone for spectrogram-shaped inputs.
inline constexpr std::string_view kDefaultArch =
    "conv:8:3,relu,pool:2,conv:16:3,relu,pool:2,flatten,dropout:0.3,dense:64,relu,"
    "dropout:0.3,dense:K";
/// Fallback for inputs too small for the convolutional stack (feature vectors).
inline constexpr std::string_view kMlpArch = "flatten,dense:64,relu,dropout:0.3,dense:K";

class NetworkConfig {
 public:
  NetworkConfig() = default;
  NetworkConfig(Dims input, std::size_t classes, std::vector<LayerSpec> layers)
      : input_(input), classes_(classes), layers_(std::move(layers)) {
    shapes_ = compute_shapes();
  }

  /// Parses a comma separated layer list such as "conv:8:3,relu,pool:2,dense:K".
  /// `K` in a dense layer stands for the class count. "default" selects the
  /// default backbone, or the MLP fallback when the input cannot hold it.
  static NetworkConfig parse(std::string_view arch, Dims input, std::size_t classes) {
    if (arch == "default" || arch.empty()) {
      NetworkConfig conv;
      try {
        conv = parse(kDefaultArch, input, classes);
        return conv;
      } catch (const ShapeError&) {
        return parse(kMlpArch, input, classes);
      }
    }
    std::vector<LayerSpec> layers;
    std::size_t start = 0;
    while (start <= arch.size()) {
      std::size_t end = arch.find(',', start);
      if (end == std::string_view::npos) end = arch.size();
      layers.push_back(parse_layer(arch.substr(start, end - start), classes));
      start = end + 1;
    }
    return NetworkConfig(input, classes, std::move(layers));
  }

  std::string arch() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (i) os << ',';
      const auto& l = layers_[i];
      switch (l.type) {
        case LayerType::conv2d:
          os << "conv:" << l.out_channels << ':' << l.kernel;
          if (l.stride != 1) os << ':' << l.stride;
          break;
        case LayerType::maxpool: os << "pool:" << l.kernel; break;
        case LayerType::relu: os << "relu"; break;
        case LayerType::dropout: os << "dropout:" << l.rate; break;
        case LayerType::flatten: os << "flatten"; break;
        case LayerType::dense: os << "dense:" << l.out_dim; break;
      }
    }
    return os.str();
  }

  Dims input() const { return input_; }
  std::size_t classes() const { return classes_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  /// shapes()[i] is the input of layer i; shapes().back() is the output.
  const std::vector<Dims>& shapes() const { return shapes_; }

  bool has_active_dropout() const {
    return std::any_of(layers_.begin(), layers_.end(), [](const LayerSpec& l) {
      return l.type == LayerType::dropout && l.rate > 0.0;
    });
  }

  /// Parameter tensor shapes in storage order (weight then bias per layer).
  std::vector<std::vector<std::size_t>> param_shapes() const {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      const Dims in = shapes_[i];
      if (l.type == LayerType::conv2d) {
        out.push_back({l.out_channels, in.c, l.kernel, l.kernel});
        out.push_back({l.out_channels});
      } else if (l.type == LayerType::dense) {
        out.push_back({l.out_dim, in.size()});
        out.push_back({l.out_dim});
      }
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& s : param_shapes()) n += Tensor::count(s);
    return n;
  }

  nlohmann::json to_json() const {
    return {{"input", {input_.c, input_.h, input_.w}}, {"classes", classes_}, {"arch", arch()}};
  }

  static NetworkConfig from_json(const nlohmann::json& j) {
    const auto in = j.at("input").get<std::vector<std::size_t>>();
    if (in.size() != 3) throw ConfigError("network config: input must have 3 dims");
    return parse(j.at("arch").get<std::string>(), Dims{in[0], in[1], in[2]},
                 j.at("classes").get<std::size_t>());
  }

 private:
  static LayerSpec parse_layer(std::string_view tok, std::size_t classes) {
    std::vector<std::string> parts;
    std::size_t s = 0;
    while (true) {
      const std::size_t e = tok.find(':', s);
      parts.emplace_back(tok.substr(s, e == std::string_view::npos ? tok.size() - s : e - s));
      if (e == std::string_view::npos) break;
      s = e + 1;
    }
    auto num = [&](std::size_t i) -> std::size_t {
      if (i >= parts.size()) throw ConfigError("layer '" + std::string(tok) + "': missing argument");
      if (parts[i] == "K") return classes;
      try {
        return std::stoul(parts[i]);
      } catch (const std::exception&) {
        throw ConfigError("layer '" + std::string(tok) + "': bad number '" + parts[i] + "'");
      }
    };
    LayerSpec l;
    const std::string& kind = parts[0];
    if (kind == "conv") {
      l.type = LayerType::conv2d;
      l.out_channels = num(1);
      l.kernel = num(2);
      l.stride = parts.size() > 3 ? num(3) : 1;
    } else if (kind == "pool") {
      l.type = LayerType::maxpool;
      l.kernel = num(1);
    } else if (kind == "relu") {
      l.type = LayerType::relu;
    } else if (kind == "dropout") {
      l.type = LayerType::dropout;
      if (parts.size() < 2) throw ConfigError("dropout needs a rate");
      l.rate = std::stod(parts[1]);
      if (!(l.rate >= 0.0 && l.rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
    } else if (kind == "flatten") {
      l.type = LayerType::flatten;
    } else if (kind == "dense") {
      l.type = LayerType::dense;
      l.out_dim = num(1);
    } else {
      throw ConfigError("unknown layer type '" + kind + "'");
    }
    if ((l.type == LayerType::conv2d || l.type == LayerType::maxpool) && l.kernel == 0)
      throw ConfigError("kernel must be positive");
    if (l.type == LayerType::conv2d && (l.out_channels == 0 || l.stride == 0))
      throw ConfigError("conv needs positive channels and stride");
    if (l.type == LayerType::dense && l.out_dim == 0) throw ConfigError("dense needs positive width");
    return l;
  }

  std::vector<Dims> compute_shapes() const {
    if (classes_ < 1) throw ConfigError("network needs at least one class");
    if (input_.size() == 0) throw ShapeError("network input is empty");
    std::vector<Dims> shapes{input_};
    Dims d = input_;
    for (const auto& l : layers_) {
      switch (l.type) {
        case LayerType::conv2d:
          if (d.h < l.kernel || d.w < l.kernel)
            throw ShapeError("conv kernel larger than its input");
          d = Dims{l.out_channels, (d.h - l.kernel) / l.stride + 1, (d.w - l.kernel) / l.stride + 1};
          break;
        case LayerType::maxpool:
          if (d.h < l.kernel || d.w < l.kernel) throw ShapeError("pool kernel larger than its input");
          d = Dims{d.c, d.h / l.kernel, d.w / l.kernel};
          break;
        case LayerType::flatten: d = Dims{d.size(), 1, 1}; break;
        case LayerType::dense: d = Dims{l.out_dim, 1, 1}; break;
        case LayerType::relu:
        case LayerType::dropout: break;
      }
      shapes.push_back(d);
    }
    if (layers_.empty() || d.size() != classes_)
      throw ShapeError("final layer output (" + std::to_string(d.size()) +
                       ") does not match class count (" + std::to_string(classes_) + ")");
    return shapes;
  }

  Dims input_;
  std::size_t classes_ = 0;
  std::vector<LayerSpec> layers_;
  std::vector<Dims> shapes_;
};

/// Ordered weight and bias tensors of a network (also used for gradients and
/// optimizer state).
struct ModelParams {
  std::vector<Tensor> tensors;

  static ModelParams zeros(const NetworkConfig& cfg) {
    ModelParams p;
    for (auto& s : cfg.param_shapes()) p.tensors.emplace_back(std::move(s));
    return p;
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }

  /// Flat coordinate access across all tensors.
  double& at(std::size_t flat) {
    for (auto& t : tensors) {
      if (flat < t.size()) return t.data[flat];
      flat -= t.size();
    }
    throw Error("ModelParams::at: index out of range");
  }

  bool all_finite() const {
    return std::all_of(tensors.begin(), tensors.end(), [](const Tensor& t) { return t.all_finite(); });
  }

  bool matches(const NetworkConfig& cfg) const {
    const auto shapes = cfg.param_shapes();
    if (shapes.size() != tensors.size()) return false;
    for (std::size_t i = 0; i < shapes.size(); ++i)
      if (tensors[i].shape != shapes[i]) return false;
    return true;
  }
};

/// He-uniform weights (limit sqrt(6 / fan_in)) and zero biases.
inline ModelParams init_params(const NetworkConfig& cfg, Rng& rng) {
  ModelParams p = ModelParams::zeros(cfg);
  for (std::size_t i = 0; i < p.tensors.size(); i += 2) {
    Tensor& w = p.tensors[i];
    const std::size_t fan_in = w.size() / w.shape[0];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : w.data) v = (2.0 * rng.uniform() - 1.0) * limit;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Softmax and losses on (B, K) tensors.

inline Tensor softmax(const Tensor& logits) {
  Tensor out(logits.shape);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto in = logits.row(i);
    auto o = out.row(i);
    const double m = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) sum += (o[j] = std::exp(in[j] - m));
    for (double& v : o) v /= sum;
  }
  return out;
}

/// Maps a gradient with respect to softmax outputs onto the logits.
inline Tensor softmax_backward(const Tensor& probs, const Tensor& dprobs) {
  if (probs.shape != dprobs.shape) throw ShapeError("softmax_backward: shape mismatch");
  Tensor out(probs.shape);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto p = probs.row(i);
    auto g = dprobs.row(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) dot += p[j] * g[j];
    auto o = out.row(i);
    for (std::size_t j = 0; j < p.size(); ++j) o[j] = p[j] * (g[j] - dot);
  }
  return out;
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape != b.shape || a.shape.size() != 2)
    throw ShapeError(std::string(what) + ": expected matching (B, K) tensors");
}

/// Unreduced cross entropy -sum_j y_j log(p_j + eps), one value per row.
inline std::vector<double> cross_entropy_per_sample(const Tensor& probs, const Tensor& labels) {
  check_same_shape(probs, labels, "cross_entropy");
  std::vector<double> out(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto p = probs.row(i);
    auto y = labels.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j)
      if (y[j] != 0.0) s -= y[j] * std::log(p[j] + kLogEps);
    out[i] = s;
  }
  return out;
}

/// Batch-mean cross entropy against (possibly soft) labels.
inline double cross_entropy(const Tensor& probs, const Tensor& labels) {
  const auto per = cross_entropy_per_sample(probs, labels);
  if (per.empty()) return 0.0;
  return std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(per.size());
}

/// d cross_entropy / d probs (batch mean).
inline Tensor cross_entropy_grad(const Tensor& probs, const Tensor& labels) {
  check_same_shape(probs, labels, "cross_entropy_grad");
  Tensor g(probs.shape);
  const double scale = 1.0 / static_cast<double>(probs.rows());
  for (std::size_t i = 0; i < probs.size(); ++i)
    g.data[i] = -labels.data[i] / (probs.data[i] + kLogEps) * scale;
  return g;
}

/// One-hot (B, K) tensor from class ids.
inline Tensor one_hot(std::span<const int> labels, std::size_t classes) {
  Tensor t({labels.size(), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)
      throw ShapeError("one_hot: label out of range");
    t(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return t;
}

inline std::vector<int> argmax_rows(const Tensor& probs) {
  std::vector<int> out(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto r = probs.row(i);
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forward / backward.

struct ForwardCache {
  std::size_t batch = 0;
  std::vector<Dims> shapes;                          // copy of cfg.shapes() for validation
  std::vector<std::vector<double>> inputs;           // per layer input activations
  std::vector<std::vector<double>> masks;            // relu / dropout multipliers
  std::vector<std::vector<std::uint32_t>> argmax;    // maxpool winners (flat input index)
  Tensor probs;
};

struct ForwardResult {
  Tensor logits;
  Tensor probs;
  ForwardCache cache;
};

namespace detail {

inline void conv_forward(const double* in, Dims id, const Tensor& w, const Tensor& b,
                         const LayerSpec& l, Dims od, double* out) {
  const std::size_t k = l.kernel, s = l.stride;
  for (std::size_t o = 0; o < od.c; ++o) {
    double* op = out + o * od.h * od.w;
    std::fill(op, op + od.h * od.w, b.data[o]);
    for (std::size_t i = 0; i < id.c; ++i) {
      const double* ip = in + i * id.h * id.w;
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const double wv = w.data[((o * id.c + i) * k + ky) * k + kx];
          for (std::size_t y = 0; y < od.h; ++y) {
            const double* row = ip + (y * s + ky) * id.w + kx;
            double* orow = op + y * od.w;
            if (s == 1) {
              for (std::size_t x = 0; x < od.w; ++x) orow[x] += wv * row[x];
            } else {
              for (std::size_t x = 0; x < od.w; ++x) orow[x] += wv * row[x * s];
            }
          }
        }
      }
    }
  }
}

inline void conv_backward(const double* in, Dims id, const Tensor& w, const LayerSpec& l, Dims od,
                          const double* dout, Tensor& dw, Tensor& db, double* din) {
  const std::size_t k = l.kernel, s = l.stride;
  for (std::size_t o = 0; o < od.c; ++o) {
    const double* gp = dout + o * od.h * od.w;
    double bsum = 0.0;
    for (std::size_t j = 0; j < od.h * od.w; ++j) bsum += gp[j];
    db.data[o] += bsum;
    for (std::size_t i = 0; i < id.c; ++i) {
      const double* ip = in + i * id.h * id.w;
      double* dip = din + i * id.h * id.w;
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::size_t widx = ((o * id.c + i) * k + ky) * k + kx;
          const double wv = w.data[widx];
          double acc = 0.0;
          for (std::size_t y = 0; y < od.h; ++y) {
            const double* row = ip + (y * s + ky) * id.w + kx;
            double* drow = dip + (y * s + ky) * id.w + kx;
            const double* grow = gp + y * od.w;
            for (std::size_t x = 0; x < od.w; ++x) {
              acc += grow[x] * row[x * s];
              drow[x * s] += wv * grow[x];
            }
          }
          dw.data[widx] += acc;
        }
      }
    }
  }
}

}  // namespace detail

/// Runs the network on a batch whose first dimension is the batch size and
/// whose remaining dimensions hold cfg.input().size() values per sample.
/// Dropout masks are drawn from `rng` only when `dropout_on` is set.
inline ForwardResult forward(const ModelParams& params, const NetworkConfig& cfg, const Tensor& batch,
                             bool dropout_on, Rng& rng) {
  if (!params.matches(cfg)) throw ShapeError("forward: parameters do not match network config");
  const auto& shapes = cfg.shapes();
  const auto& layers = cfg.layers();
  const std::size_t B = batch.rows();
  if (batch.shape.size() < 2 || batch.row_size() != cfg.input().size())
    throw ShapeError("forward: batch shape does not match network input");

  ForwardResult res;
  ForwardCache& cache = res.cache;
  cache.batch = B;
  cache.shapes = shapes;
  cache.inputs.resize(layers.size());
  cache.masks.resize(layers.size());
  cache.argmax.resize(layers.size());

  std::vector<double> cur = batch.data;
  std::size_t pi = 0;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const LayerSpec& l = layers[li];
    const Dims id = shapes[li], od = shapes[li + 1];
    std::vector<double> next(B * od.size());
    switch (l.type) {
      case LayerType::conv2d: {
        const Tensor& w = params.tensors[pi];
        const Tensor& b = params.tensors[pi + 1];
        for (std::size_t n = 0; n < B; ++n)
          detail::conv_forward(cur.data() + n * id.size(), id, w, b, l, od, next.data() + n * od.size());
        pi += 2;
        break;
      }
      case LayerType::dense: {
        const Tensor& w = params.tensors[pi];
        const Tensor& b = params.tensors[pi + 1];
        const std::size_t in_dim = id.size();
        for (std::size_t n = 0; n < B; ++n) {
          const double* x = cur.data() + n * in_dim;
          double* y = next.data() + n * od.size();
          for (std::size_t o = 0; o < od.size(); ++o) {
            const double* wr = w.data.data() + o * in_dim;
            double s = b.data[o];
            for (std::size_t j = 0; j < in_dim; ++j) s += wr[j] * x[j];
            y[o] = s;
          }
        }
        pi += 2;
        break;
      }
      case LayerType::maxpool: {
        auto& am = cache.argmax[li];
        am.resize(next.size());
        const std::size_t k = l.kernel;
        for (std::size_t n = 0; n < B; ++n) {
          for (std::size_t c = 0; c < od.c; ++c) {
            for (std::size_t y = 0; y < od.h; ++y) {
              for (std::size_t x = 0; x < od.w; ++x) {
                std::size_t best = n * id.size() + (c * id.h + y * k) * id.w + x * k;
                for (std::size_t ky = 0; ky < k; ++ky)
                  for (std::size_t kx = 0; kx < k; ++kx) {
                    const std::size_t idx = n * id.size() + (c * id.h + y * k + ky) * id.w + x * k + kx;
                    if (cur[idx] > cur[best]) best = idx;
                  }
                const std::size_t oi = n * od.size() + (c * od.h + y) * od.w + x;
                next[oi] = cur[best];
                am[oi] = static_cast<std::uint32_t>(best);
              }
            }
          }
        }
        break;
      }
      case LayerType::relu: {
        auto& m = cache.masks[li];
        m.resize(cur.size());
        for (std::size_t i = 0; i < cur.size(); ++i) {
          m[i] = cur[i] > 0.0 ? 1.0 : 0.0;
          next[i] = cur[i] * m[i];
        }
        break;
      }
      case LayerType::dropout: {
        if (dropout_on && l.rate > 0.0) {
          auto& m = cache.masks[li];
          m.resize(cur.size());
          const double keep_scale = 1.0 / (1.0 - l.rate);
          for (std::size_t i = 0; i < cur.size(); ++i) {
            m[i] = rng.uniform() < l.rate ? 0.0 : keep_scale;
            next[i] = cur[i] * m[i];
          }
        } else {
          next = cur;
        }
        break;
      }
      case LayerType::flatten: next = cur; break;
    }
    cache.inputs[li] = std::move(cur);
    cur = std::move(next);
  }
  res.logits = Tensor({B, cfg.classes()}, std::move(cur));
  res.probs = softmax(res.logits);
  cache.probs = res.probs;
  return res;
}

/// Backpropagates a gradient with respect to the logits through the cached
/// forward pass. Returns gradients shaped like the parameters.
inline ModelParams backward(const ModelParams& params, const NetworkConfig& cfg, const ForwardCache& cache,
                            const Tensor& dlogits) {
  const auto& shapes = cfg.shapes();
  const auto& layers = cfg.layers();
  if (cache.shapes != shapes || cache.inputs.size() != layers.size())
    throw ShapeError("backward: cache does not come from this network");
  if (dlogits.rows() != cache.batch || dlogits.row_size() != cfg.classes())
    throw ShapeError("backward: gradient shape does not match cached batch");
  if (!params.matches(cfg)) throw ShapeError("backward: parameters do not match network config");

  ModelParams grads = ModelParams::zeros(cfg);
  const std::size_t B = cache.batch;
  std::vector<double> g = dlogits.data;
  std::size_t pi = params.tensors.size();
  for (std::size_t li = layers.size(); li-- > 0;) {
    const LayerSpec& l = layers[li];
    const Dims id = shapes[li], od = shapes[li + 1];
    const std::vector<double>& in = cache.inputs[li];
    std::vector<double> gin(B * id.size(), 0.0);
    switch (l.type) {
      case LayerType::conv2d: {
        pi -= 2;
        const Tensor& w = params.tensors[pi];
        for (std::size_t n = 0; n < B; ++n)
          detail::conv_backward(in.data() + n * id.size(), id, w, l, od, g.data() + n * od.size(),
                                grads.tensors[pi], grads.tensors[pi + 1], gin.data() + n * id.size());
        break;
      }
      case LayerType::dense: {
        pi -= 2;
        const Tensor& w = params.tensors[pi];
        Tensor& dw = grads.tensors[pi];
        Tensor& db = grads.tensors[pi + 1];
        const std::size_t in_dim = id.size(), out_dim = od.size();
        for (std::size_t n = 0; n < B; ++n) {
          const double* x = in.data() + n * in_dim;
          const double* gy = g.data() + n * out_dim;
          double* gx = gin.data() + n * in_dim;
          for (std::size_t o = 0; o < out_dim; ++o) {
            const double go = gy[o];
            if (go == 0.0) continue;
            db.data[o] += go;
            double* dwr = dw.data.data() + o * in_dim;
            const double* wr = w.data.data() + o * in_dim;
            for (std::size_t j = 0; j < in_dim; ++j) {
              dwr[j] += go * x[j];
              gx[j] += go * wr[j];
            }
          }
        }
        break;
      }
      case LayerType::maxpool: {
        const auto& am = cache.argmax[li];
        for (std::size_t i = 0; i < g.size(); ++i) gin[am[i]] += g[i];
        break;
      }
      case LayerType::relu:
      case LayerType::dropout: {
        const auto& m = cache.masks[li];
        if (m.empty()) {
          gin = g;
        } else {
          for (std::size_t i = 0; i < g.size(); ++i) gin[i] = g[i] * m[i];
        }
        break;
      }
      case LayerType::flatten: gin = g; break;
    }
    g = std::move(gin);
  }
  return grads;
}

/// Inference convenience: probabilities with dropout off.
inline Tensor predict(const ModelParams& params, const NetworkConfig& cfg, const Tensor& batch) {
  Rng unused(0);
  return forward(params, cfg, batch, false, unused).probs;
}

/// Adds `scale * src` into `dst`.
inline void accumulate(ModelParams& dst, const ModelParams& src, double scale = 1.0) {
  for (std::size_t t = 0; t < dst.tensors.size(); ++t)
    for (std::size_t i = 0; i < dst.tensors[t].size(); ++i)
      dst.tensors[t].data[i] += scale * src.tensors[t].data[i];
}

// ---------------------------------------------------------------------------
// Optimizer.

struct SgdState {
  ModelParams velocity;
};

/// SGD with momentum: v <- momentum * v + g; theta <- theta - lr * v.
inline void sgd_step(ModelParams& params, const ModelParams& grads, double lr, double momentum,
                     SgdState& state) {
  if (!(lr >= 0.0)) throw ConfigError("sgd_step: learning rate must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("sgd_step: momentum must be in [0, 1)");
  if (grads.tensors.size() != params.tensors.size()) throw ShapeError("sgd_step: gradient shape mismatch");
  for (std::size_t t = 0; t < params.tensors.size(); ++t)
    if (grads.tensors[t].shape != params.tensors[t].shape)
      throw ShapeError("sgd_step: gradient shape mismatch");
  if (!grads.all_finite()) throw Error("sgd_step: non-finite gradient");
  if (state.velocity.tensors.empty()) {
    for (const auto& t : params.tensors) state.velocity.tensors.emplace_back(t.shape);
  }
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    auto& v = state.velocity.tensors[t].data;
    auto& p = params.tensors[t].data;
    const auto& g = grads.tensors[t].data;
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = momentum * v[i] + g[i];
      p[i] -= lr * v[i];
    }
  }
}

// ---------------------------------------------------------------------------
// Gradient check.

class GradCheckError : public Error {
 public:
  using Error::Error;
};

struct GradCheckOptions {
  double eps = 1e-4;
  std::size_t coordinates = 200;   // sampled coordinates (all if the net is smaller)
  std::uint64_t seed = 0;
  bool dropout_on = false;
  /// Extra coordinates that are always checked.
  std::vector<std::size_t> forced;
  /// Applied to the analytic gradient before comparison (fault injection).
  std::function<void(ModelParams&)> tamper;
};

/// Compares the analytic gradient of the mean cross entropy against central
/// differences. Relative error is |a - n| / max(|a|, |n|, 1e-6); the floor
/// keeps coordinates with vanishing gradient from reporting rounding noise.
/// Coordinates whose perturbation flips a ReLU or max-pool decision are
/// resampled, since the loss is not differentiable across those kinks.
inline double grad_check(const NetworkConfig& cfg, const ModelParams& params, const Tensor& batch,
                         const Tensor& labels, const GradCheckOptions& opt = {}) {
  if (opt.dropout_on && cfg.has_active_dropout())
    throw GradCheckError("grad_check: loss is stochastic with dropout active");
  Rng unused(0);
  auto run = [&](const ModelParams& p) { return forward(p, cfg, batch, false, unused); };
  auto pattern = [](const ForwardCache& c) {
    std::vector<std::uint64_t> sig;
    for (std::size_t i = 0; i < c.masks.size(); ++i) {
      for (double m : c.masks[i]) sig.push_back(m > 0.0);
      for (auto a : c.argmax[i]) sig.push_back(a);
    }
    return sig;
  };

  const ForwardResult base = run(params);
  ModelParams analytic =
      backward(params, cfg, base.cache, softmax_backward(base.probs, cross_entropy_grad(base.probs, labels)));
  if (opt.tamper) opt.tamper(analytic);
  const auto base_pattern = pattern(base.cache);

  const std::size_t total = params.size();
  std::vector<std::size_t> coords = opt.forced;
  Rng rng(opt.seed);
  std::vector<std::size_t> pool(total);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  rng.shuffle(pool);

  double worst = 0.0;
  std::size_t checked = 0, next_pool = 0;
  std::size_t forced_left = coords.size();
  auto next_coord = [&]() -> std::optional<std::size_t> {
    if (!coords.empty()) {
      const std::size_t c = coords.front();
      coords.erase(coords.begin());
      return c;
    }
    if (next_pool < pool.size()) return pool[next_pool++];
    return std::nullopt;
  };
  const std::size_t target = std::min(total, opt.coordinates) + opt.forced.size();
  while (checked < target) {
    const auto c = next_coord();
    if (!c) break;
    const bool is_forced = forced_left > 0;
    if (is_forced) --forced_left;
    ModelParams p = params;
    const double orig = p.at(*c);
    p.at(*c) = orig + opt.eps;
    const ForwardResult plus = run(p);
    p.at(*c) = orig - opt.eps;
    const ForwardResult minus = run(p);
    if (!is_forced && (pattern(plus.cache) != base_pattern || pattern(minus.cache) != base_pattern))
      continue;
    const double numeric =
        (cross_entropy(plus.probs, labels) - cross_entropy(minus.probs, labels)) / (2.0 * opt.eps);
    const double a = analytic.at(*c);
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(a - numeric) / denom);
    ++checked;
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Model file: "SSSL", u32 version, u32-length-prefixed JSON config, then for
// each tensor u32 rank, u32 dims, little-endian f32 values.

inline constexpr std::uint32_t kModelFormatVersion = 1;

struct ModelFile {
  NetworkConfig config;
  ModelParams params;
  nlohmann::json meta = nlohmann::json::object();  // input scaling, labels, segmentation
};

namespace detail {
inline void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("unexpected end of file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
inline void put_f32(std::ostream& os, double v) {
  std::uint32_t bits;
  const float f = static_cast<float>(v);
  std::memcpy(&bits, &f, 4);
  put_u32(os, bits);
}
inline float get_f32(std::istream& is) {
  const std::uint32_t bits = get_u32(is);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}
}  // namespace detail

inline void save_model(const std::string& path, const ModelFile& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write model file " + path);
  os.write("SSSL", 4);
  detail::put_u32(os, kModelFormatVersion);
  nlohmann::json j = m.config.to_json();
  j["meta"] = m.meta;
  const std::string text = j.dump();
  detail::put_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : m.params.tensors) {
    detail::put_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) detail::put_u32(os, static_cast<std::uint32_t>(d));
    for (double v : t.data) detail::put_f32(os, v);
  }
  if (!os) throw IoError("failed writing model file " + path);
}

inline ModelFile load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open model file " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::string_view(magic, 4) != "SSSL")
    throw IoError(path + ": not a model file");
  const std::uint32_t version = detail::get_u32(is);
  if (version != kModelFormatVersion)
    throw IoError(path + ": unsupported model format version " + std::to_string(version));
  const std::uint32_t len = detail::get_u32(is);
  std::string text(len, '\0');
  if (!is.read(text.data(), len)) throw IoError(path + ": truncated config");
  ModelFile m;
  const auto j = nlohmann::json::parse(text);
  m.config = NetworkConfig::from_json(j);
  if (j.contains("meta")) m.meta = j.at("meta");
  for (const auto& shape : m.config.param_shapes()) {
    const std::uint32_t rank = detail::get_u32(is);
    std::vector<std::size_t> s(rank);
    for (auto& d : s) d = detail::get_u32(is);
    if (s != shape) throw IoError(path + ": tensor shape does not match config");
    Tensor t(s);
    for (double& v : t.data) v = detail::get_f32(is);
    m.params.tensors.push_back(std::move(t));
  }
  return m;
}

}  // namespace sssl::nn

#endif  // SSSL_NN_HPP
