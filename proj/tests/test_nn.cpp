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

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sssl/nn.hpp"

namespace sssl::nn {
namespace {

Tensor random_batch(std::size_t n, Dims d, Rng& rng) {
  Tensor t({n, d.c, d.h, d.w});
  for (double& v : t.data) v = rng.normal();
  return t;
}

Tensor random_labels(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<int> y;
  for (std::size_t i = 0; i < n; ++i) y.push_back(static_cast<int>(rng.below(k)));
  return one_hot(y, k);
}

TEST(NetworkConfig, DefaultBackboneShapes) {
  const auto cfg = NetworkConfig::parse("default", {1, 16, 16}, 4);
  // conv3 -> 14x14x8, pool -> 7x7, conv3 -> 5x5x16, pool -> 2x2 (floor), dense 64, dense 4
  const auto& s = cfg.shapes();
  EXPECT_EQ(s[1], (Dims{8, 14, 14}));
  EXPECT_EQ(s[3], (Dims{8, 7, 7}));
  EXPECT_EQ(s[6], (Dims{16, 2, 2}));
  EXPECT_EQ(s.back(), (Dims{4, 1, 1}));
  EXPECT_EQ(cfg.parameter_count(), 80u + 1168u + 4160u + 260u);
  EXPECT_TRUE(cfg.has_active_dropout());
}

TEST(NetworkConfig, DefaultFallsBackToMlpOnVectors) {
  const auto cfg = NetworkConfig::parse("default", {1, 32, 1}, 3);
  EXPECT_EQ(cfg.arch().find("conv"), std::string::npos);
  EXPECT_EQ(cfg.shapes().back(), (Dims{3, 1, 1}));
}

TEST(NetworkConfig, RejectsBadArchitectures) {
  EXPECT_THROW(NetworkConfig::parse("conv:8:5", {1, 3, 3}, 2), ShapeError);
  EXPECT_THROW(NetworkConfig::parse("flatten,dense:5", {1, 4, 4}, 2), Error);  // last layer must emit K
  EXPECT_THROW(NetworkConfig::parse("flatten,wobble:3,dense:K", {1, 4, 4}, 2), Error);
  EXPECT_THROW(NetworkConfig::parse("flatten,dropout:1.0,dense:K", {1, 4, 4}, 2), Error);
}

TEST(NetworkConfig, JsonRoundTrip) {
  const auto cfg = NetworkConfig::parse("default", {1, 16, 16}, 4);
  const auto back = NetworkConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.arch(), cfg.arch());
  EXPECT_EQ(back.input(), cfg.input());
  EXPECT_EQ(back.classes(), cfg.classes());
}

TEST(Init, HeUniformWeightsZeroBiases) {
  const auto cfg = NetworkConfig::parse(kMlpArch, {1, 10, 1}, 3);
  Rng rng(1);
  const auto p = init_params(cfg, rng);
  ASSERT_TRUE(p.matches(cfg));
  for (std::size_t t = 0; t < p.tensors.size(); t += 2) {
    const auto& w = p.tensors[t];
    const double limit = std::sqrt(6.0 / static_cast<double>(w.size() / w.shape[0]));
    for (double v : w.data) EXPECT_LE(std::abs(v), limit);
    for (double b : p.tensors[t + 1].data) EXPECT_EQ(b, 0.0);
  }
}

TEST(Softmax, RowsAreDistributions) {
  Rng rng(2);
  Tensor logits({50, 5});
  for (double& v : logits.data) v = 50.0 * rng.normal();
  logits(0, 0) = 1000.0;
  logits(0, 1) = 1000.0;
  const Tensor p = softmax(logits);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double s = 0.0;
    for (double v : p.row(i)) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_NEAR(p(0, 0), 0.5, 1e-12);
  EXPECT_TRUE(p.all_finite());
}

TEST(CrossEntropy, HandValues) {
  Tensor p({2, 3});
  p.data = {0.7, 0.2, 0.1, 0.0, 1.0, 0.0};
  const Tensor y = one_hot(std::vector<int>{0, 0}, 3);
  const auto per = cross_entropy_per_sample(p, y);
  EXPECT_NEAR(per[0], -std::log(0.7 + kLogEps), 1e-12);
  EXPECT_NEAR(per[1], -std::log(kLogEps), 1e-9);  // finite even at zero probability
  EXPECT_NEAR(cross_entropy(p, y), 0.5 * (per[0] + per[1]), 1e-12);
}

TEST(CrossEntropy, SoftmaxGradientIsProbsMinusLabels) {
  Tensor logits({1, 3});
  logits.data = {0.3, -1.2, 2.0};
  const Tensor p = softmax(logits);
  const Tensor y = one_hot(std::vector<int>{1}, 3);
  const Tensor g = softmax_backward(p, cross_entropy_grad(p, y));
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(g(0, k), p(0, k) - y(0, k), 1e-9);
}

TEST(Forward, ConvolutionHandCase) {
  const auto cfg = NetworkConfig::parse("conv:1:3,flatten,dense:K", {1, 3, 3}, 1);
  auto p = ModelParams::zeros(cfg);
  std::fill(p.tensors[0].data.begin(), p.tensors[0].data.end(), 1.0);
  p.tensors[1].data[0] = 0.5;
  p.tensors[2].data[0] = 2.0;  // dense weight
  Tensor x({1, 1, 3, 3});
  std::iota(x.data.begin(), x.data.end(), 1.0);
  Rng rng(0);
  const auto r = forward(p, cfg, x, false, rng);
  EXPECT_DOUBLE_EQ(r.logits(0, 0), 2.0 * (45.0 + 0.5));
}

TEST(Forward, MaxPoolFloorsAndPicksMaximum) {
  const auto cfg = NetworkConfig::parse("pool:2,flatten,dense:K", {1, 5, 5}, 4);
  EXPECT_EQ(cfg.shapes()[1], (Dims{1, 2, 2}));
  auto p = ModelParams::zeros(cfg);
  for (std::size_t k = 0; k < 4; ++k) p.tensors[0].data[k * 4 + k] = 1.0;  // identity readout
  Tensor x({1, 1, 5, 5});
  std::iota(x.data.begin(), x.data.end(), 0.0);
  Rng rng(0);
  const auto r = forward(p, cfg, x, false, rng);
  // top-left 2x2 windows of a row-major 0..24 grid: max at (1,1), (1,3), (3,1), (3,3)
  EXPECT_DOUBLE_EQ(r.logits(0, 0), 6.0);
  EXPECT_DOUBLE_EQ(r.logits(0, 1), 8.0);
  EXPECT_DOUBLE_EQ(r.logits(0, 2), 16.0);
  EXPECT_DOUBLE_EQ(r.logits(0, 3), 18.0);
}

TEST(Forward, InvertedDropoutIsUnbiased) {
  const auto cfg = NetworkConfig::parse("flatten,dropout:0.3,dense:K", {1, 100, 1}, 2);
  auto p = ModelParams::zeros(cfg);
  Tensor x({100, 1, 100, 1});
  std::fill(x.data.begin(), x.data.end(), 1.0);
  Rng rng(4);
  const auto r = forward(p, cfg, x, true, rng);
  const auto& mask = r.cache.masks[1];
  ASSERT_EQ(mask.size(), 10000u);
  double mean = 0.0;
  for (double m : mask) {
    EXPECT_TRUE(m == 0.0 || std::abs(m - 1.0 / 0.7) < 1e-12);
    mean += m;
  }
  EXPECT_NEAR(mean / 10000.0, 1.0, 0.02);
}

TEST(Forward, DropoutOffIsDeterministic) {
  const auto cfg = NetworkConfig::parse(kMlpArch, {1, 8, 1}, 3);
  Rng rng(6);
  const auto p = init_params(cfg, rng);
  const Tensor x = random_batch(5, cfg.input(), rng);
  EXPECT_EQ(predict(p, cfg, x).data, predict(p, cfg, x).data);
  Rng a(1), b(2);
  EXPECT_NE(forward(p, cfg, x, true, a).probs.data, forward(p, cfg, x, true, b).probs.data);
}

TEST(Forward, RejectsMismatchedInput) {
  const auto cfg = NetworkConfig::parse(kMlpArch, {1, 8, 1}, 3);
  Rng rng(6);
  const auto p = init_params(cfg, rng);
  EXPECT_THROW(forward(p, cfg, Tensor({2, 1, 7, 1}), false, rng), ShapeError);
  const auto other = NetworkConfig::parse(kMlpArch, {1, 9, 1}, 3);
  EXPECT_THROW(forward(init_params(other, rng), cfg, Tensor({2, 1, 8, 1}), false, rng), ShapeError);
}

class GradCheck : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(GradCheck, ConvBackboneMatchesFiniteDifferences) {
  const auto cfg = NetworkConfig::parse("default", {1, 16, 16}, 4);
  Rng rng(GetParam());
  const auto params = init_params(cfg, rng);
  const Tensor x = random_batch(3, cfg.input(), rng);
  GradCheckOptions opt;
  opt.seed = GetParam();
  EXPECT_LE(grad_check(cfg, params, x, random_labels(3, 4, rng), opt), 1e-4);
}

TEST_P(GradCheck, MlpMatchesFiniteDifferences) {
  const auto cfg = NetworkConfig::parse("flatten,dense:12,relu,dense:6,relu,dense:K", {2, 3, 2}, 3);
  Rng rng(GetParam() + 100);
  const auto params = init_params(cfg, rng);
  const Tensor x = random_batch(4, cfg.input(), rng);
  GradCheckOptions opt;
  opt.coordinates = 1000;  // every coordinate
  EXPECT_LE(grad_check(cfg, params, x, random_labels(4, 3, rng), opt), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Seeds, GradCheck, ::testing::Range<std::uint64_t>(1, 6));

TEST(GradCheckFaults, DetectsCorruptedGradient) {
  const auto cfg = NetworkConfig::parse(kMlpArch, {1, 6, 1}, 3);
  Rng rng(8);
  const auto params = init_params(cfg, rng);
  const Tensor x = random_batch(4, cfg.input(), rng);
  const Tensor y = random_labels(4, 3, rng);
  const std::size_t last_bias = params.size() - 1;
  GradCheckOptions opt;
  opt.forced = {last_bias};
  opt.tamper = [&](ModelParams& g) { g.at(last_bias) *= 1.1; };
  EXPECT_GT(grad_check(cfg, params, x, y, opt), 0.05);
}

TEST(Sgd, MomentumUnrollsTwoSteps) {
  const auto cfg = NetworkConfig::parse("flatten,dense:K", {1, 2, 1}, 2);
  auto p = ModelParams::zeros(cfg);
  auto g = ModelParams::zeros(cfg);
  for (auto& t : g.tensors) std::fill(t.data.begin(), t.data.end(), 0.5);
  SgdState state;
  sgd_step(p, g, 0.1, 0.9, state);
  sgd_step(p, g, 0.1, 0.9, state);
  // displacement = lr * g * (1 + (1 + momentum))
  for (const auto& t : p.tensors)
    for (double v : t.data) EXPECT_NEAR(v, -0.1 * 0.5 * (1.0 + 1.9), 1e-12);
}

TEST(Sgd, RejectsNonFiniteGradients) {
  const auto cfg = NetworkConfig::parse("flatten,dense:K", {1, 2, 1}, 2);
  auto p = ModelParams::zeros(cfg);
  auto g = ModelParams::zeros(cfg);
  g.at(0) = std::numeric_limits<double>::infinity();
  SgdState state;
  EXPECT_THROW(sgd_step(p, g, 0.1, 0.9, state), Error);
  EXPECT_EQ(p.at(0), 0.0);
}

TEST(Training, LossDecreasesOnSeparableData) {
  const auto cfg = NetworkConfig::parse(kMlpArch, {1, 4, 1}, 2);
  Rng rng(12);
  auto params = init_params(cfg, rng);
  Tensor x({64, 1, 4, 1});
  std::vector<int> labels;
  for (std::size_t i = 0; i < 64; ++i) {
    labels.push_back(static_cast<int>(i % 2));
    for (std::size_t j = 0; j < 4; ++j) x.data[i * 4 + j] = (i % 2 ? 1.0 : -1.0) + 0.3 * rng.normal();
  }
  const Tensor y = one_hot(labels, 2);
  const double before = cross_entropy(predict(params, cfg, x), y);
  SgdState state;
  for (int step = 0; step < 50; ++step) {
    const auto fw = forward(params, cfg, x, true, rng);
    sgd_step(params, backward(params, cfg, fw.cache, softmax_backward(fw.probs, cross_entropy_grad(fw.probs, y))),
             0.05, 0.9, state);
  }
  EXPECT_LT(cross_entropy(predict(params, cfg, x), y), 0.25 * before);
}

class ModelFileTest : public ::testing::Test {
 protected:
  std::string path = (std::filesystem::temp_directory_path() / "sssl_model_test.bin").string();
  void TearDown() override { std::filesystem::remove(path); }
};

TEST_F(ModelFileTest, RoundTripKeepsConfigMetaAndF32Values) {
  ModelFile m;
  m.config = NetworkConfig::parse("default", {1, 16, 16}, 4);
  Rng rng(3);
  m.params = init_params(m.config, rng);
  m.meta = {{"labels", {"a", "b", "c", "d"}}, {"input_mean", -3.5}};
  save_model(path, m);
  const auto back = load_model(path);
  EXPECT_EQ(back.config.arch(), m.config.arch());
  EXPECT_EQ(back.meta, m.meta);
  ASSERT_TRUE(back.params.matches(m.config));
  for (std::size_t t = 0; t < m.params.tensors.size(); ++t)
    for (std::size_t i = 0; i < m.params.tensors[t].size(); ++i)
      EXPECT_EQ(back.params.tensors[t].data[i], static_cast<double>(static_cast<float>(m.params.tensors[t].data[i])));
}

TEST_F(ModelFileTest, RejectsForeignAndTruncatedFiles) {
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE1234";
  }
  EXPECT_THROW(load_model(path), IoError);
  ModelFile m;
  m.config = NetworkConfig::parse(kMlpArch, {1, 4, 1}, 2);
  Rng rng(1);
  m.params = init_params(m.config, rng);
  save_model(path, m);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 10);
  EXPECT_THROW(load_model(path), IoError);
  EXPECT_THROW(load_model(path + ".missing"), IoError);
}

}  // namespace
}  // namespace sssl::nn
