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

#include <cmath>
#include <cstddef>
#include <fstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "implicit_align/error.hpp"
#include "implicit_align/rng.hpp"
#include "implicit_align/tensor.hpp"

namespace ialign {

// Fully connected layer y = x W + b with W stored as [in, out].
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng) {
    // Uniform He initialization: U(-b, b) with b = sqrt(6 / fan_in).
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    std::vector<double> w(in * out);
    for (double& v : w) v = rng.uniform(-bound, bound);
    weight = Tensor::from({in, out}, std::move(w), true);
    bias = Tensor::zeros({out}, true);
  }

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  Tensor operator()(const Tensor& x) const {
    return add_bias(matmul(x, weight), bias);
  }
};

struct Parameter {
  std::string name;
  Tensor tensor;
  bool is_weight;  // biases are exempt from weight decay
};

// Stack of Linear layers with relu between them. `relu_output` also applies
// relu after the final layer.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<std::size_t> widths, bool relu_output, Rng& rng)
      : widths_(std::move(widths)), relu_output_(relu_output) {
    if (widths_.size() < 2) throw Error("Mlp needs at least two widths");
    for (std::size_t i = 0; i + 1 < widths_.size(); ++i)
      layers_.emplace_back(widths_[i], widths_[i + 1], rng);
  }

  std::size_t input_dim() const { return widths_.front(); }
  std::size_t output_dim() const { return widths_.back(); }
  const std::vector<std::size_t>& widths() const { return widths_; }

  Tensor operator()(const Tensor& x) const {
    if (x.rank() != 2 || x.dim(1) != input_dim()) {
      throw ShapeError("Mlp: expected input [batch, " +
                       std::to_string(input_dim()) + "], got " +
                       shape_string(x.shape()));
    }
    Tensor h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      h = layers_[i](h);
      if (i + 1 < layers_.size() || relu_output_) h = relu(h);
    }
    return h;
  }

  void collect(const std::string& prefix, std::vector<Parameter>& out) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const std::string base = prefix + "." + std::to_string(i);
      out.push_back({base + ".weight", layers_[i].weight, true});
      out.push_back({base + ".bias", layers_[i].bias, false});
    }
  }

 private:
  std::vector<std::size_t> widths_;
  bool relu_output_ = false;
  std::vector<Linear> layers_;
};

struct ModelConfig {
  std::size_t input_dim = 2;
  std::size_t num_classes = 10;
  std::vector<std::size_t> hidden = {128, 128};
  std::size_t feature_dim = 64;
  std::size_t head_hidden = 64;
  // Off gives a linear bottleneck, which cannot die at z = 0.
  bool relu_features = true;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"input_dim", c.input_dim},
       {"num_classes", c.num_classes},
       {"hidden", c.hidden},
       {"feature_dim", c.feature_dim},
       {"head_hidden", c.head_hidden},
       {"relu_features", c.relu_features}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("input_dim").get_to(c.input_dim);
  j.at("num_classes").get_to(c.num_classes);
  j.at("hidden").get_to(c.hidden);
  j.at("feature_dim").get_to(c.feature_dim);
  j.at("head_hidden").get_to(c.head_hidden);
  c.relu_features = j.value("relu_features", true);
}

// Feature extractor producing z, main classifier f, auxiliary classifier f'
// and domain discriminator f_d. All heads read the same feature vector.
class AdaptationModel {
 public:
  AdaptationModel(const ModelConfig& config, Rng rng) : config_(config) {
    if (config.num_classes < 2) throw Error("model needs at least two classes");
    std::vector<std::size_t> widths = {config.input_dim};
    widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
    widths.push_back(config.feature_dim);
    Rng fe = rng.substream("feature_extractor");
    Rng fc = rng.substream("classifier");
    Rng fa = rng.substream("auxiliary");
    Rng fd = rng.substream("discriminator");
    feature_extractor_ = Mlp(widths, config.relu_features, fe);
    classifier_ =
        Mlp({config.feature_dim, config.head_hidden, config.num_classes}, false, fc);
    auxiliary_ =
        Mlp({config.feature_dim, config.head_hidden, config.num_classes}, false, fa);
    discriminator_ = Mlp({config.feature_dim, config.head_hidden, 1}, false, fd);
  }

  const ModelConfig& config() const { return config_; }
  std::size_t num_classes() const { return config_.num_classes; }

  const Mlp& feature_extractor() const { return feature_extractor_; }
  const Mlp& classifier() const { return classifier_; }
  const Mlp& auxiliary() const { return auxiliary_; }
  const Mlp& discriminator() const { return discriminator_; }

  Tensor features(const Tensor& x) const { return feature_extractor_(x); }
  Tensor logits(const Tensor& x) const { return classifier_(features(x)); }

  // Class probabilities of the main classifier; not recorded for autodiff.
  Tensor predict(const Tensor& x) const {
    NoGradGuard guard;
    return softmax(logits(x));
  }

  std::vector<int> predict_labels(const Tensor& x) const;

  // Predicts every row of a row-major [n, input_dim] matrix in chunks.
  std::vector<int> predict_labels(std::span<const double> rows,
                                  std::size_t chunk = 1024) const {
    const std::size_t d = config_.input_dim;
    if (rows.size() % d != 0) throw ShapeError("predict_labels: ragged input");
    const std::size_t n = rows.size() / d;
    std::vector<int> out;
    out.reserve(n);
    for (std::size_t begin = 0; begin < n; begin += chunk) {
      const std::size_t end = std::min(n, begin + chunk);
      Tensor x = Tensor::from(
          {end - begin, d},
          std::vector<double>(rows.begin() + begin * d, rows.begin() + end * d));
      auto labels = predict_labels(x);
      out.insert(out.end(), labels.begin(), labels.end());
    }
    return out;
  }

  std::vector<Parameter> parameters() const {
    std::vector<Parameter> out;
    feature_extractor_.collect("feature_extractor", out);
    classifier_.collect("classifier", out);
    auxiliary_.collect("auxiliary", out);
    discriminator_.collect("discriminator", out);
    return out;
  }

  void zero_grad() const {
    for (auto& p : parameters()) {
      Tensor t = p.tensor;
      t.zero_grad();
    }
  }

 private:
  ModelConfig config_;
  Mlp feature_extractor_;
  Mlp classifier_;
  Mlp auxiliary_;
  Mlp discriminator_;
};

// Row-wise argmax; ties resolve to the smallest column.
inline std::vector<int> argmax_rows(std::span<const double> values,
                                    std::size_t cols,
                                    std::span<const std::uint8_t> mask = {}) {
  const std::size_t rows = values.size() / cols;
  std::vector<int> out(rows, -1);
  for (std::size_t i = 0; i < rows; ++i) {
    double best = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      if (!mask.empty() && !mask[j]) continue;
      const double v = values[i * cols + j];
      if (out[i] < 0 || v > best) {
        best = v;
        out[i] = static_cast<int>(j);
      }
    }
  }
  return out;
}

inline std::vector<int> AdaptationModel::predict_labels(const Tensor& x) const {
  NoGradGuard guard;
  Tensor l = logits(x);
  return argmax_rows(l.values(), l.cols());
}

struct SgdConfig {
  double learning_rate = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  bool nesterov = true;

  void validate() const {
    if (!(learning_rate > 0.0)) throw Error("sgd: learning_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw Error("sgd: momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw Error("sgd: weight_decay must be >= 0");
  }
};

// One SGD update of a single parameter array.
//   g <- grad + wd * theta            (weights only)
//   buf <- momentum * buf + g
//   d <- g + momentum * buf           (nesterov)  |  buf  (classical)
//   theta <- theta - lr * d
inline void sgd_update(std::span<double> theta, std::span<const double> grad,
                       std::span<double> buffer, const SgdConfig& config,
                       bool apply_decay) {
  if (theta.size() != grad.size() || theta.size() != buffer.size()) {
    throw ShapeError("sgd_update: parameter, gradient and buffer sizes differ (" +
                     std::to_string(theta.size()) + ", " +
                     std::to_string(grad.size()) + ", " +
                     std::to_string(buffer.size()) + ")");
  }
  const double wd = apply_decay ? config.weight_decay : 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i] + wd * theta[i];
    buffer[i] = config.momentum * buffer[i] + g;
    const double step = config.nesterov ? g + config.momentum * buffer[i] : buffer[i];
    theta[i] -= config.learning_rate * step;
  }
}

class Sgd {
 public:
  explicit Sgd(SgdConfig config) : config_(config) { config_.validate(); }

  const SgdConfig& config() const { return config_; }

  // Updates every parameter holding a gradient; others are left untouched.
  void step(const std::vector<Parameter>& params) {
    if (buffers_.empty()) {
      for (const auto& p : params) buffers_.emplace_back(p.tensor.numel(), 0.0);
    }
    if (buffers_.size() != params.size()) {
      throw ShapeError("Sgd::step: parameter list changed between steps");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor t = params[i].tensor;
      if (!t.has_grad()) continue;
      sgd_update(t.mutable_values(), t.grad(), buffers_[i], config_,
                 params[i].is_weight);
    }
  }

 private:
  SgdConfig config_;
  std::vector<std::vector<double>> buffers_;
};

// ---- checkpoints --------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json checkpoint_json(const AdaptationModel& model) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : model.parameters()) {
    params.push_back({{"name", p.name},
                      {"shape", p.tensor.shape()},
                      {"values", std::vector<double>(p.tensor.values().begin(),
                                                     p.tensor.values().end())}});
  }
  return {{"format", "ialign-checkpoint"},
          {"version", kCheckpointVersion},
          {"model", model.config()},
          {"parameters", params}};
}

inline AdaptationModel model_from_checkpoint(const nlohmann::json& j) {
  if (j.value("format", "") != "ialign-checkpoint") {
    throw DataError("not an ialign checkpoint");
  }
  if (j.value("version", 0) != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " +
                    j.value("version", nlohmann::json()).dump());
  }
  AdaptationModel model(j.at("model").get<ModelConfig>(), Rng(0));
  auto params = model.parameters();
  const auto& stored = j.at("parameters");
  if (stored.size() != params.size()) {
    throw ShapeError("checkpoint has " + std::to_string(stored.size()) +
                     " parameters, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& s = stored[i];
    const auto name = s.at("name").get<std::string>();
    const auto shape = s.at("shape").get<Shape>();
    if (name != params[i].name || shape != params[i].tensor.shape()) {
      throw ShapeError("checkpoint parameter " + name + " " + shape_string(shape) +
                       " does not match model parameter " + params[i].name + " " +
                       shape_string(params[i].tensor.shape()));
    }
    const auto values = s.at("values").get<std::vector<double>>();
    Tensor t = params[i].tensor;
    if (values.size() != t.numel()) {
      throw ShapeError("checkpoint parameter " + name + " has wrong value count");
    }
    std::copy(values.begin(), values.end(), t.mutable_values().begin());
  }
  return model;
}

inline void save_checkpoint(const AdaptationModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out << checkpoint_json(model).dump() << "\n";
  if (!out) throw DataError("failed writing checkpoint " + path);
}

inline AdaptationModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read checkpoint " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint " + path + ": " + e.what());
  }
  return model_from_checkpoint(j);
}

}  // namespace ialign
