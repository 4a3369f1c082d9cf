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
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "implicit_align/data.hpp"
#include "implicit_align/error.hpp"
#include "implicit_align/nn.hpp"

namespace ialign {

// Classification metrics from a confusion matrix. Macro averages run over
// classes present in the evaluation labels; absent classes are counted in
// `absent_classes` and excluded. Precision of a class that is never
// predicted is 0.
struct EvalMetrics {
  std::size_t count = 0;
  double accuracy = 0.0;
  double per_class_accuracy = 0.0;  // unweighted mean of per-class recalls
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  std::size_t absent_classes = 0;
  std::vector<double> recall;  // per class; -1 for absent classes
};

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;  // [true][pred]

inline ConfusionMatrix confusion_matrix(std::span<const int> predicted,
                                        std::span<const int> truth,
                                        std::size_t num_classes) {
  if (predicted.size() != truth.size()) {
    throw Error("confusion_matrix: " + std::to_string(predicted.size()) +
                " predictions for " + std::to_string(truth.size()) + " labels");
  }
  ConfusionMatrix cm(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || predicted[i] < 0 || static_cast<std::size_t>(truth[i]) >= num_classes ||
        static_cast<std::size_t>(predicted[i]) >= num_classes) {
      throw Error("confusion_matrix: label out of range at row " + std::to_string(i));
    }
    ++cm[truth[i]][predicted[i]];
  }
  return cm;
}

inline EvalMetrics metrics_from_confusion(const ConfusionMatrix& cm) {
  const std::size_t C = cm.size();
  EvalMetrics m;
  std::vector<std::size_t> support(C, 0), predicted(C, 0);
  std::size_t correct = 0;
  for (std::size_t t = 0; t < C; ++t) {
    for (std::size_t p = 0; p < C; ++p) {
      support[t] += cm[t][p];
      predicted[p] += cm[t][p];
      m.count += cm[t][p];
    }
    correct += cm[t][t];
  }
  if (m.count == 0) throw Error("evaluate: empty dataset");
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.count);
  m.recall.assign(C, -1.0);
  std::size_t present = 0;
  for (std::size_t c = 0; c < C; ++c) {
    if (support[c] == 0) {
      ++m.absent_classes;
      continue;
    }
    ++present;
    const double tp = static_cast<double>(cm[c][c]);
    const double recall = tp / static_cast<double>(support[c]);
    const double precision = predicted[c] ? tp / static_cast<double>(predicted[c]) : 0.0;
    const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    const double w = static_cast<double>(support[c]) / static_cast<double>(m.count);
    m.recall[c] = recall;
    m.macro_recall += recall;
    m.macro_precision += precision;
    m.macro_f1 += f1;
    m.weighted_recall += w * recall;
    m.weighted_precision += w * precision;
    m.weighted_f1 += w * f1;
  }
  const double n = static_cast<double>(present);
  m.macro_recall /= n;
  m.macro_precision /= n;
  m.macro_f1 /= n;
  m.per_class_accuracy = m.macro_recall;
  return m;
}

inline EvalMetrics evaluate_labels(std::span<const int> predicted, std::span<const int> truth,
                                   std::size_t num_classes) {
  if (truth.empty()) throw Error("evaluate: empty dataset");
  return metrics_from_confusion(confusion_matrix(predicted, truth, num_classes));
}

// Evaluates the main classifier on `ds` against `truth` (the dataset's own
// labels for source data, the hidden channel for target data).
inline EvalMetrics evaluate(const AdaptationModel& model, const Dataset& ds,
                            std::span<const int> truth) {
  if (ds.empty()) throw Error("evaluate: empty dataset");
  if (truth.size() != ds.size()) throw Error("evaluate: label count does not match dataset");
  const auto pred = model.predict_labels(std::span<const double>(ds.features));
  return evaluate_labels(pred, truth, model.num_classes());
}

inline nlohmann::json metrics_json(const EvalMetrics& m) {
  return {{"count", m.count},
          {"accuracy", m.accuracy},
          {"per_class_accuracy", m.per_class_accuracy},
          {"macro_precision", m.macro_precision},
          {"macro_recall", m.macro_recall},
          {"macro_f1", m.macro_f1},
          {"weighted_precision", m.weighted_precision},
          {"weighted_recall", m.weighted_recall},
          {"weighted_f1", m.weighted_f1},
          {"absent_classes", m.absent_classes},
          {"recall", m.recall}};
}

}  // namespace ialign
