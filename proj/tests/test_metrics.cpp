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
#include <vector>

#include <gtest/gtest.h>

#include "implicit_align/metrics.hpp"

namespace ialign {
namespace {

TEST(MetricsTest, PerfectPredictions) {
  const std::vector<int> y{0, 1, 2, 2, 1};
  auto m = evaluate_labels(y, y, 3);
  EXPECT_EQ(m.count, 5u);
  EXPECT_DOUBLE_EQ(m.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(m.per_class_accuracy, 1.0);
  EXPECT_DOUBLE_EQ(m.macro_f1, 1.0);
  EXPECT_DOUBLE_EQ(m.weighted_precision, 1.0);
}

TEST(MetricsTest, PerClassAccuracyIsMeanRecall) {
  // Class 0 recall 1.0 (1 row), class 1 recall 0.5 (2 rows).
  const std::vector<int> truth{0, 1, 1}, pred{0, 1, 0};
  auto m = evaluate_labels(pred, truth, 2);
  EXPECT_DOUBLE_EQ(m.per_class_accuracy, 0.75);
  EXPECT_NEAR(m.accuracy, 2.0 / 3.0, 1e-15);
}

TEST(MetricsTest, ThreeClassReference) {
  const std::vector<int> truth{0, 0, 0, 1, 1, 2, 2, 2, 2};
  const std::vector<int> pred{0, 0, 1, 1, 2, 2, 2, 2, 1};
  auto cm = confusion_matrix(pred, truth, 3);
  EXPECT_EQ(cm[0], (std::vector<std::size_t>{2, 1, 0}));
  EXPECT_EQ(cm[1], (std::vector<std::size_t>{0, 1, 1}));
  EXPECT_EQ(cm[2], (std::vector<std::size_t>{0, 1, 3}));
  auto m = metrics_from_confusion(cm);
  EXPECT_NEAR(m.accuracy, 6.0 / 9.0, 1e-15);
  EXPECT_NEAR(m.macro_recall, (2.0 / 3 + 1.0 / 2 + 3.0 / 4) / 3, 1e-15);
  EXPECT_NEAR(m.macro_precision, (1.0 + 1.0 / 3 + 3.0 / 4) / 3, 1e-15);
  EXPECT_NEAR(m.macro_f1, (0.8 + 0.4 + 0.75) / 3, 1e-15);
  EXPECT_NEAR(m.weighted_recall, m.accuracy, 1e-15);
  EXPECT_NEAR(m.weighted_precision, (3 * 1.0 + 2 * (1.0 / 3) + 4 * 0.75) / 9, 1e-15);
  EXPECT_NEAR(m.weighted_f1, (3 * 0.8 + 2 * 0.4 + 4 * 0.75) / 9, 1e-15);
}

TEST(MetricsTest, AbsentClassesAreExcluded) {
  const std::vector<int> truth{0, 0, 2}, pred{0, 1, 2};
  auto m = evaluate_labels(pred, truth, 3);
  EXPECT_EQ(m.absent_classes, 1u);
  EXPECT_EQ(m.recall[1], -1.0);
  EXPECT_DOUBLE_EQ(m.per_class_accuracy, 0.75);
  auto never = evaluate_labels(std::vector<int>{0, 0}, std::vector<int>{0, 1}, 2);
  EXPECT_EQ(never.recall[1], 0.0);
  EXPECT_DOUBLE_EQ(never.macro_precision, 0.25);
}

TEST(MetricsTest, Errors) {
  EXPECT_THROW(evaluate_labels(std::vector<int>{}, std::vector<int>{}, 2), Error);
  EXPECT_THROW(confusion_matrix(std::vector<int>{0}, std::vector<int>{0, 1}, 2), Error);
  EXPECT_THROW(confusion_matrix(std::vector<int>{2}, std::vector<int>{0}, 2), Error);
  ModelConfig mc;
  mc.input_dim = 2;
  mc.num_classes = 2;
  AdaptationModel model(mc, Rng(1));
  Dataset empty;
  empty.input_dim = 2;
  EXPECT_THROW(evaluate(model, empty, std::vector<int>{}), Error);
}

TEST(MetricsTest, JsonFields) {
  auto m = evaluate_labels(std::vector<int>{0, 1}, std::vector<int>{0, 0}, 2);
  auto j = metrics_json(m);
  EXPECT_EQ(j["count"], 2);
  EXPECT_DOUBLE_EQ(j["accuracy"].get<double>(), 0.5);
  EXPECT_EQ(j["recall"].size(), 2u);
}

}  // namespace
}  // namespace ialign
