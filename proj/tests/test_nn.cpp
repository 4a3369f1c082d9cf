/* Copyright 2026 The implicit-align Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include <gtest/gtest.h>

#include "implicit_align/nn.hpp"
#include "support/finite_diff.hpp"

namespace ialign {
namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.input_dim = 3;
  c.num_classes = 4;
  c.hidden = {8, 6};
  c.feature_dim = 5;
  c.head_hidden = 7;
  return c;
}

Tensor random_input(std::size_t rows, std::size_t cols, Rng& rng) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.uniform(-2.0, 2.0);
  return Tensor::from({rows, cols}, std::move(v));
}

TEST(LinearTest, HeUniformInitAndZeroBias) {
  Rng rng(1);
  Linear layer(24, 10, rng);
  const double bound = std::sqrt(6.0 / 24.0);
  double max_abs = 0.0;
  for (double w : layer.weight.values()) max_abs = std::max(max_abs, std::abs(w));
  EXPECT_LE(max_abs, bound);
  EXPECT_GT(max_abs, 0.8 * bound);
  for (double b : layer.bias.values()) EXPECT_EQ(b, 0.0);
}

TEST(AdaptationModelTest, ShapeContract) {
  AdaptationModel model(small_config(), Rng(2));
  Rng rng(3);
  auto z = model.features(random_input(5, 3, rng));
  EXPECT_EQ(z.shape(), (Shape{5, 5}));
  EXPECT_EQ(model.logits(random_input(5, 3, rng)).shape(), (Shape{5, 4}));
  EXPECT_EQ(model.auxiliary()(z).shape(), (Shape{5, 4}));
  EXPECT_EQ(model.discriminator()(z).shape(), (Shape{5, 1}));
  EXPECT_THROW(model.features(random_input(5, 2, rng)), ShapeError);
}

TEST(AdaptationModelTest, SingleRowMatchesBatchedRow) {
  AdaptationModel model(small_config(), Rng(4));
  Rng rng(5);
  auto x = random_input(6, 3, rng);
  auto batched = model.features(x);
  for (std::size_t i = 0; i < 6; ++i) {
    auto row = model.features(slice_rows(x, i, i + 1));
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(row.at(0, j), batched.at(i, j));
  }
}

TEST(AdaptationModelTest, FeatureGradientMatchesFiniteDifferences) {
  AdaptationModel model(small_config(), Rng(6));
  Rng rng(7);
  auto x = random_input(4, 3, rng);
  auto params = model.parameters();
  ASSERT_EQ(params[0].name, "feature_extractor.0.weight");
  auto r = testing::check_gradient({params[0].tensor},
                                   [&] { return sum(model.features(x)); });
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
}

TEST(AdaptationModelTest, PredictRowsSumToOne) {
  AdaptationModel model(small_config(), Rng(8));
  Rng rng(9);
  auto p = model.predict(random_input(7, 3, rng));
  EXPECT_FALSE(p.requires_grad());
  for (std::size_t i = 0; i < 7; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) s += p.at(i, j);
    EXPECT_NEAR(s, 1.0, 1e-14);
  }
}

TEST(AdaptationModelTest, ChunkedPredictionMatchesSingleCall) {
  AdaptationModel model(small_config(), Rng(10));
  Rng rng(11);
  auto x = random_input(50, 3, rng);
  const auto whole = model.predict_labels(x);
  const auto chunked = model.predict_labels(x.values(), 7);
  EXPECT_EQ(whole, chunked);
  for (int y : whole) {
    EXPECT_GE(y, 0);
    EXPECT_LT(y, 4);
  }
}

TEST(AdaptationModelTest, SeedDeterminesInitialization) {
  AdaptationModel a(small_config(), Rng(12)), b(small_config(), Rng(12)), c(small_config(), Rng(13));
  auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_TRUE(std::equal(pa[i].tensor.values().begin(), pa[i].tensor.values().end(),
                           pb[i].tensor.values().begin()));
    differs |= !std::equal(pa[i].tensor.values().begin(), pa[i].tensor.values().end(),
                           pc[i].tensor.values().begin());
  }
  EXPECT_TRUE(differs);
}

TEST(ArgmaxTest, LargestWinsAndTiesGoToSmallestLabel) {
  EXPECT_EQ(argmax_rows(std::vector<double>{2, 1, 1}, 3), std::vector<int>{0});
  EXPECT_EQ(argmax_rows(std::vector<double>{1, 1, 0}, 3), std::vector<int>{0});
  EXPECT_EQ(argmax_rows(std::vector<double>{0, 3, 3}, 3), std::vector<int>{1});
  const ClassMask mask{0, 1, 1};
  EXPECT_EQ(argmax_rows(std::vector<double>{9, 1, 2}, 3, mask), std::vector<int>{2});
}

TEST(ArgmaxTest, InvariantToConstantShift) {
  Rng rng(14);
  std::vector<double> v(40 * 6);
  for (double& x : v) x = std::round(rng.uniform(-8, 8) * 4.0) / 4.0;
  auto shifted = v;
  for (double& x : shifted) x += 16.0;
  EXPECT_EQ(argmax_rows(v, 6), argmax_rows(shifted, 6));
}

TEST(ArgmaxTest, RandomLogitsGiveUniformLabels) {
  const std::size_t C = 65, draws = 10000;
  Rng rng(15);
  std::vector<double> logits(C);
  std::vector<double> counts(C, 0.0);
  for (std::size_t k = 0; k < draws; ++k) {
    for (double& x : logits) x = rng.normal();
    counts[argmax_rows(logits, C)[0]] += 1.0;
  }
  const double expected = static_cast<double>(draws) / static_cast<double>(C);
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 104.7);  // 0.999 quantile of chi-square with 64 dof
}

TEST(SgdTest, PlainStep) {
  std::vector<double> theta{1.0}, grad{1.0}, buf{0.0};
  SgdConfig cfg{0.1, 0.0, 0.0, true};
  sgd_update(theta, grad, buf, cfg, true);
  EXPECT_NEAR(theta[0], 0.9, 1e-15);
}

TEST(SgdTest, DecayOnlyShrinksWeights) {
  std::vector<double> theta{2.0, -2.0}, grad{0.0, 0.0}, buf{0.0, 0.0};
  SgdConfig cfg{0.1, 0.9, 0.01, true};
  sgd_update(theta, grad, buf, cfg, true);
  EXPECT_LT(theta[0], 2.0);
  EXPECT_GT(theta[0], 0.0);
  EXPECT_GT(theta[1], -2.0);
  std::vector<double> bias{2.0}, gb{0.0}, bb{0.0};
  sgd_update(bias, gb, bb, cfg, false);
  EXPECT_EQ(bias[0], 2.0);
}

TEST(SgdTest, NesterovTrajectoryOnQuadratic) {
  // f(x) = 0.5 * a * x^2, gradient a * x.
  const double a = 3.0, lr = 0.05, mu = 0.9, wd = 0.01;
  std::vector<double> theta{1.5}, buf{0.0};
  double x = 1.5, v = 0.0;
  SgdConfig cfg{lr, mu, wd, true};
  for (int step = 0; step < 3; ++step) {
    std::vector<double> grad{a * theta[0]};
    sgd_update(theta, grad, buf, cfg, true);
    // Independent form: v <- mu v + g; x <- x - lr (g + mu v).
    const double g = a * x + wd * x;
    v = mu * v + g;
    x -= lr * (g + mu * v);
    EXPECT_NEAR(theta[0], x, 1e-15) << "step " << step;
  }
}

TEST(SgdTest, ConfigValidation) {
  EXPECT_THROW((SgdConfig{0.0, 0.9, 0.0, true}.validate()), Error);
  EXPECT_THROW((SgdConfig{0.1, 1.0, 0.0, true}.validate()), Error);
  EXPECT_THROW((SgdConfig{0.1, 0.9, -1.0, true}.validate()), Error);
  EXPECT_NO_THROW(SgdConfig{}.validate());
  std::vector<double> t{1.0}, g{1.0, 2.0}, b{0.0};
  EXPECT_THROW(sgd_update(t, g, b, SgdConfig{}, true), ShapeError);
}

TEST(SgdTest, StepSkipsParametersWithoutGradient) {
  AdaptationModel model(small_config(), Rng(16));
  Rng rng(17);
  const auto before = checkpoint_json(model);
  cross_entropy(model.logits(random_input(4, 3, rng)), std::vector<int>{0, 1, 2, 3}).backward();
  Sgd opt(SgdConfig{});
  opt.step(model.parameters());
  const auto after = checkpoint_json(model);
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& name = params[i].name;
    const bool touched = before["parameters"][i] != after["parameters"][i];
    if (name.rfind("auxiliary", 0) == 0 || name.rfind("discriminator", 0) == 0) {
      EXPECT_FALSE(touched) << name;
    } else if (params[i].is_weight) {
      EXPECT_TRUE(touched) << name;
    }
  }
}

TEST(CheckpointTest, RoundTripIsExact) {
  AdaptationModel model(small_config(), Rng(18));
  const auto path = (std::filesystem::temp_directory_path() / "ialign_ckpt_test.json").string();
  save_checkpoint(model, path);
  const auto loaded = load_checkpoint(path);
  const auto a = model.parameters(), b = loaded.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].tensor.numel(), b[i].tensor.numel());
    for (std::size_t k = 0; k < a[i].tensor.numel(); ++k)
      EXPECT_EQ(a[i].tensor.at(k), b[i].tensor.at(k));
  }
  std::remove(path.c_str());
}

TEST(CheckpointTest, RejectsMismatchedShapes) {
  AdaptationModel model(small_config(), Rng(19));
  auto j = checkpoint_json(model);
  j["model"]["feature_dim"] = 9;
  EXPECT_THROW(model_from_checkpoint(j), ShapeError);
  auto k = checkpoint_json(model);
  k["format"] = "other";
  EXPECT_THROW(model_from_checkpoint(k), DataError);
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.json"), DataError);
}

}  // namespace
}  // namespace ialign
