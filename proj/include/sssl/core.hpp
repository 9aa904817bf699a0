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

#ifndef SSSL_CORE_HPP
#define SSSL_CORE_HPP

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sssl {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments. The CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Logging. Verbosity comes from SSSL_LOG (error|warn|info|debug), default warn.

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

namespace detail {
inline std::atomic<int>& log_level_slot() {
  static std::atomic<int> level = [] {
    const char* env = std::getenv("SSSL_LOG");
    if (env == nullptr) return static_cast<int>(LogLevel::warn);
    const std::string_view v(env);
    if (v == "error") return static_cast<int>(LogLevel::error);
    if (v == "info") return static_cast<int>(LogLevel::info);
    if (v == "debug") return static_cast<int>(LogLevel::debug);
    return static_cast<int>(LogLevel::warn);
  }();
  return level;
}
}  // namespace detail

inline LogLevel log_level() { return static_cast<LogLevel>(detail::log_level_slot().load()); }
inline void set_log_level(LogLevel level) { detail::log_level_slot().store(static_cast<int>(level)); }

inline void log(LogLevel level, std::string_view msg) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  static constexpr const char* names[] = {"error", "warn", "info", "debug"};
  std::cerr << "[sssl " << names[static_cast<int>(level)] << "] " << msg << '\n';
}

inline void warn(std::string_view msg) { log(LogLevel::warn, msg); }
inline void info(std::string_view msg) { log(LogLevel::info, msg); }

// ---------------------------------------------------------------------------
// Random numbers.

/// Counter-based SplitMix64 stream. The whole state is (seed, counter), so
/// copying an Rng forks an identical stream. Satisfies
/// UniformRandomBitGenerator for use with <random> distributions.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    std::uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    if (n == 0) throw Error("Rng::below: empty range");
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t r;
    do {
      r = (*this)();
    } while (r >= limit);
    return static_cast<std::size_t>(r % n);
  }

  /// Standard normal via Box-Muller; consumes exactly two draws.
  double normal() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    // Fisher-Yates; std::shuffle's draw pattern is implementation-defined.
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

// ---------------------------------------------------------------------------
// Tensor.

/// Dense row-major tensor of doubles.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
      : shape(std::move(s)), data(count(shape), fill) {}
  Tensor(std::vector<std::size_t> s, std::vector<double> values)
      : shape(std::move(s)), data(std::move(values)) {
    if (count(shape) != data.size()) throw ShapeError("Tensor: shape does not match data length");
  }

  static std::size_t count(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const { return data.size(); }
  /// Leading dimension (batch or rows).
  std::size_t rows() const { return shape.empty() ? 0 : shape.front(); }
  /// Number of elements per leading-dimension slice.
  std::size_t row_size() const { return rows() == 0 ? 0 : data.size() / rows(); }

  std::span<double> row(std::size_t i) { return {data.data() + i * row_size(), row_size()}; }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * row_size(), row_size()};
  }

  double& operator()(std::size_t i, std::size_t j) { return data[i * row_size() + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * row_size() + j]; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

/// Linear-interpolation quantile of already sorted values, q in [0, 1].
inline double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error("quantile of empty sequence");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = lo + 1 < sorted.size() ? lo + 1 : lo;
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace sssl

#endif  // SSSL_CORE_HPP
