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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "implicit_align/error.hpp"
#include "implicit_align/nn.hpp"
#include "implicit_align/sampler.hpp"
#include "implicit_align/tensor.hpp"

namespace ialign {

// Mean softmax cross-entropy of source logits against true labels.
inline Tensor source_classification_loss(const Tensor& logits,
                                         std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("source_classification_loss: logits " +
                     shape_string(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= logits.dim(1)) {
      throw Error("source_classification_loss: label " + std::to_string(y) +
                  " out of range for " + std::to_string(logits.dim(1)) + " classes");
    }
  }
  return cross_entropy(logits, labels);
}

// Domain-adversarial loss: the discriminator sees features through a
// gradient reversal layer and is scored by binary cross-entropy with
// source = 1, target = 0 over both halves.
inline Tensor dann_loss(const Tensor& source_features, const Tensor& target_features,
                        const Mlp& discriminator, double lambda) {
  if (source_features.rank() != 2 || target_features.rank() != 2 ||
      source_features.dim(0) == 0 || target_features.dim(0) == 0) {
    throw ShapeError("dann_loss: both halves must be non-empty feature matrices");
  }
  const Tensor z = concat_rows(source_features, target_features);
  const Tensor logits = discriminator(gradient_reversal(z, lambda));
  std::vector<double> domain(z.dim(0), 0.0);
  std::fill_n(domain.begin(), source_features.dim(0), 1.0);
  return bce_with_logits(logits, domain);
}

struct MddTerms {
  Tensor value;          // target term + source term
  Tensor target_term;    // mean -log(1 - p'_yhat) over target rows
  Tensor source_term;    // gamma * mean -log p'_yhat over source rows
  std::vector<int> source_pred;
  std::vector<int> target_pred;
};

// Margin disparity between the main classifier f and the auxiliary head f'.
// y_hat is the argmax of f; the value is
//   mean_T [-log(1 - p'_yhat)] + gamma * mean_S [-log p'_yhat],
// which f' minimizes (agreeing with f on source, disagreeing on target) and
// the feature extractor maximizes through gradient reversal.
//
// A non-empty mask restricts every softmax, and the argmax, to the classes
// it marks. Only the f' logits are differentiated.
inline MddTerms mdd_discrepancy(const Tensor& f_source, const Tensor& aux_source,
                                const Tensor& f_target, const Tensor& aux_target,
                                double gamma, std::span<const std::uint8_t> mask = {}) {
  if (f_source.shape() != aux_source.shape() || f_target.shape() != aux_target.shape() ||
      f_source.rank() != 2 || f_target.rank() != 2 ||
      f_source.dim(1) != f_target.dim(1)) {
    throw ShapeError("mdd_discrepancy: logits shapes " + shape_string(f_source.shape()) +
                     ", " + shape_string(aux_source.shape()) + ", " +
                     shape_string(f_target.shape()) + ", " +
                     shape_string(aux_target.shape()) + " do not conform");
  }
  const std::size_t C = f_source.dim(1);
  if (!mask.empty()) {
    if (mask.size() != C) throw ShapeError("mdd_discrepancy: mask length mismatch");
    if (std::none_of(mask.begin(), mask.end(), [](auto v) { return v != 0; })) {
      throw Error("mdd_discrepancy: mask selects no classes");
    }
  }
  MddTerms t;
  t.source_pred = argmax_rows(f_source.values(), C, mask);
  t.target_pred = argmax_rows(f_target.values(), C, mask);
  t.source_term = scale(mean(pick_log_softmax(aux_source, t.source_pred, mask)), -gamma);
  const Tensor p_target = pick(softmax(aux_target, mask), t.target_pred);
  t.target_term = scale(mean(log1m(p_target)), -1.0);
  t.value = add(t.target_term, t.source_term);
  return t;
}

// ---- explicit prototype alignment --------------------------------------

enum class PrototypeVariant { basic, moving_avg, curriculum };

inline const char* prototype_variant_name(PrototypeVariant v) {
  switch (v) {
    case PrototypeVariant::basic: return "basic";
    case PrototypeVariant::moving_avg: return "moving_avg";
    case PrototypeVariant::curriculum: return "curriculum";
  }
  return "?";
}

// EMA state of per-class prototypes for each domain.
struct PrototypeBank {
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  std::vector<std::vector<double>> source;
  std::vector<std::vector<double>> target;
  std::vector<bool> source_seen;
  std::vector<bool> target_seen;

  PrototypeBank() = default;
  PrototypeBank(std::size_t classes, std::size_t dim)
      : num_classes(classes),
        feature_dim(dim),
        source(classes, std::vector<double>(dim, 0.0)),
        target(classes, std::vector<double>(dim, 0.0)),
        source_seen(classes, false),
        target_seen(classes, false) {}
};

struct PrototypeLossOptions {
  PrototypeVariant variant = PrototypeVariant::basic;
  double ema_decay = 0.7;
  // Curriculum: target rows count only when their max probability reaches
  // tau, which ramps linearly from tau_start to tau_end over the run.
  double tau_start = 0.5;
  double tau_end = 0.9;
};

inline double curriculum_threshold(const PrototypeLossOptions& o, long long step,
                                   long long total_steps) {
  const double t = total_steps <= 0
                       ? 1.0
                       : std::clamp(static_cast<double>(step) / static_cast<double>(total_steps), 0.0, 1.0);
  return o.tau_start + (o.tau_end - o.tau_start) * t;
}

struct PrototypeLoss {
  Tensor value;
  std::size_t shared_classes = 0;
  bool no_shared = false;
};

// Sum over classes present in both halves of the squared Euclidean distance
// between source and target prototypes.
//   basic       prototypes are batch means
//   moving_avg  prototypes are EMA states updated with the batch means, then
//               compared; gradients flow through the batch-mean share
//   curriculum  target rows count only when `target_confidence` (max
//               predicted probability) reaches the ramped threshold
inline PrototypeLoss explicit_prototype_loss(
    const Tensor& source_features, std::span<const int> source_labels,
    const Tensor& target_features, std::span<const int> target_pseudo,
    std::size_t num_classes, const PrototypeLossOptions& options,
    PrototypeBank* bank = nullptr, std::span<const double> target_confidence = {},
    long long step = 0, long long total_steps = 0) {
  if (source_features.rank() != 2 || target_features.rank() != 2 ||
      source_features.dim(1) != target_features.dim(1) ||
      source_features.dim(0) != source_labels.size() ||
      target_features.dim(0) != target_pseudo.size()) {
    throw ShapeError("explicit_prototype_loss: features " +
                     shape_string(source_features.shape()) + " / " +
                     shape_string(target_features.shape()) + " do not match labels");
  }
  const bool ema = options.variant == PrototypeVariant::moving_avg;
  if (ema) {
    if (!bank) throw Error("explicit_prototype_loss: moving_avg needs a prototype bank");
    if (bank->num_classes != num_classes || bank->feature_dim != source_features.dim(1)) {
      throw ShapeError("explicit_prototype_loss: prototype bank shape mismatch");
    }
  }
  std::vector<bool> keep;
  if (options.variant == PrototypeVariant::curriculum) {
    if (target_confidence.size() != target_pseudo.size()) {
      throw ShapeError("explicit_prototype_loss: curriculum needs target confidences");
    }
    const double tau = curriculum_threshold(options, step, total_steps);
    keep.resize(target_pseudo.size());
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = target_confidence[i] >= tau;
  }
  std::vector<std::vector<std::size_t>> src_rows(num_classes), tgt_rows(num_classes);
  for (std::size_t i = 0; i < source_labels.size(); ++i) {
    if (source_labels[i] >= 0) src_rows.at(static_cast<std::size_t>(source_labels[i])).push_back(i);
  }
  for (std::size_t i = 0; i < target_pseudo.size(); ++i) {
    if (target_pseudo[i] < 0 || (!keep.empty() && !keep[i])) continue;
    tgt_rows.at(static_cast<std::size_t>(target_pseudo[i])).push_back(i);
  }

  const double rho = options.ema_decay;
  auto blend = [rho](const Tensor& batch_mean, const std::vector<double>& old, bool seen) {
    if (!seen) return batch_mean;
    std::vector<double> carried(old.size());
    for (std::size_t j = 0; j < old.size(); ++j) carried[j] = rho * old[j];
    return add(scale(batch_mean, 1.0 - rho), Tensor::from({old.size()}, std::move(carried)));
  };
  auto store = [](const Tensor& c, std::vector<double>& state) {
    state.assign(c.values().begin(), c.values().end());
  };

  PrototypeLoss out;
  for (std::size_t y = 0; y < num_classes; ++y) {
    const bool in_source = !src_rows[y].empty();
    const bool in_target = !tgt_rows[y].empty();
    Tensor cs, ct;
    if (in_source) cs = mean_rows(gather_rows(source_features, src_rows[y]));
    if (in_target) ct = mean_rows(gather_rows(target_features, tgt_rows[y]));
    if (ema) {
      if (in_source) cs = blend(cs, bank->source[y], bank->source_seen[y]);
      if (in_target) ct = blend(ct, bank->target[y], bank->target_seen[y]);
    }
    if (in_source && in_target) {
      const Tensor d = sub(cs, ct);
      const Tensor term = sum(mul(d, d));
      out.value = out.shared_classes == 0 ? term : add(out.value, term);
      ++out.shared_classes;
    }
    if (ema) {
      if (in_source) {
        store(cs, bank->source[y]);
        bank->source_seen[y] = true;
      }
      if (in_target) {
        store(ct, bank->target[y]);
        bank->target_seen[y] = true;
      }
    }
  }
  if (out.shared_classes == 0) {
    out.value = Tensor::scalar(0.0);
    out.no_shared = true;
  }
  return out;
}

// ---- per-step objective --------------------------------------------------

enum class TransferKind { none, dann, mdd, mdd_masked, explicit_prototype };

inline const char* transfer_kind_name(TransferKind k) {
  switch (k) {
    case TransferKind::none: return "none";
    case TransferKind::dann: return "dann";
    case TransferKind::mdd: return "mdd";
    case TransferKind::mdd_masked: return "mdd_masked";
    case TransferKind::explicit_prototype: return "explicit_prototype";
  }
  return "?";
}

inline TransferKind parse_transfer_kind(const std::string& s) {
  for (auto k : {TransferKind::none, TransferKind::dann, TransferKind::mdd,
                 TransferKind::mdd_masked, TransferKind::explicit_prototype}) {
    if (s == transfer_kind_name(k)) return k;
  }
  throw Error("unknown objective '" + s + "'");
}

inline PrototypeVariant parse_prototype_variant(const std::string& s) {
  for (auto v : {PrototypeVariant::basic, PrototypeVariant::moving_avg,
                 PrototypeVariant::curriculum}) {
    if (s == prototype_variant_name(v)) return v;
  }
  throw Error("unknown prototype variant '" + s + "'");
}

struct TransferLossConfig {
  TransferKind kind = TransferKind::mdd;
  double eta = 1.0;    // weight of the transfer term
  double gamma = 4.0;  // MDD margin factor
  PrototypeLossOptions prototype;

  std::vector<std::string> validate() const {
    std::vector<std::string> errors;
    if (!(eta >= 0.0)) errors.push_back("objective.eta must be >= 0");
    if (!(gamma >= 1.0)) errors.push_back("objective.gamma must be >= 1");
    if (!(prototype.ema_decay >= 0.0 && prototype.ema_decay < 1.0))
      errors.push_back("objective.prototype.ema_decay must lie in [0, 1)");
    if (!(prototype.tau_start >= 0.0 && prototype.tau_start <= 1.0 &&
          prototype.tau_end >= 0.0 && prototype.tau_end <= 1.0))
      errors.push_back("objective.prototype.tau must lie in [0, 1]");
    return errors;
  }
};

struct StepContext {
  PrototypeBank* bank = nullptr;
  long long step = 0;
  long long total_steps = 0;
};

struct StepLoss {
  Tensor total;
  double source_loss = 0.0;
  double transfer_loss = 0.0;
  std::optional<double> discrepancy;           // MDD value as optimized
  std::optional<double> unmasked_discrepancy;  // reported alongside masked runs
  std::optional<double> prototype_loss;
};

// Source cross-entropy plus eta times the transfer term. The transfer term
// reaches the feature extractor through gradient reversal (DANN, MDD), so one
// backward pass trains the adversarial head against the features.
//
// The masked MDD support is the set of labels in the batch's source half;
// for class-aligned batches that is exactly the sampled class set.
inline StepLoss total_step_loss(const TransferLossConfig& config, const Minibatch& batch,
                                const AdaptationModel& model, double lambda,
                                const StepContext& ctx = {}) {
  StepLoss out;
  const Tensor z_s = model.features(batch.source_x);
  const Tensor logits_s = model.classifier()(z_s);
  const Tensor ce = source_classification_loss(logits_s, batch.source_labels);
  out.source_loss = ce.item();
  if (config.kind == TransferKind::none || config.eta == 0.0) {
    out.total = ce;
    return out;
  }
  const Tensor z_t = model.features(batch.target_x);
  Tensor transfer;
  if (config.kind == TransferKind::dann) {
    transfer = dann_loss(z_s, z_t, model.discriminator(), lambda);
  } else {
    const Tensor logits_t = model.classifier()(z_t);
    const std::size_t m_s = z_s.dim(0), m_t = z_t.dim(0);
    const Tensor aux = model.auxiliary()(gradient_reversal(concat_rows(z_s, z_t), lambda));
    const Tensor aux_s = slice_rows(aux, 0, m_s);
    const Tensor aux_t = slice_rows(aux, m_s, m_s + m_t);
    ClassMask mask;
    if (config.kind == TransferKind::mdd_masked) {
      mask = mask_from_labels(batch.source_labels, model.num_classes());
    }
    const auto mdd = mdd_discrepancy(logits_s, aux_s, logits_t, aux_t, config.gamma, mask);
    transfer = mdd.value;
    out.discrepancy = mdd.value.item();
    if (config.kind == TransferKind::mdd_masked) {
      NoGradGuard guard;
      out.unmasked_discrepancy =
          mdd_discrepancy(logits_s, aux_s, logits_t, aux_t, config.gamma).value.item();
    }
    if (config.kind == TransferKind::explicit_prototype) {
      std::vector<double> confidence;
      {
        NoGradGuard guard;
        const Tensor p = softmax(logits_t);
        const std::size_t C = p.cols();
        for (std::size_t i = 0; i < p.rows(); ++i) {
          confidence.push_back(*std::max_element(p.values().begin() + i * C,
                                                 p.values().begin() + (i + 1) * C));
        }
      }
      auto proto = explicit_prototype_loss(z_s, batch.source_labels, z_t, mdd.target_pred,
                                           model.num_classes(), config.prototype, ctx.bank,
                                           confidence, ctx.step, ctx.total_steps);
      out.prototype_loss = proto.value.item();
      if (!proto.no_shared) transfer = add(transfer, proto.value);
    }
  }
  out.transfer_loss = transfer.item();
  out.total = add(ce, scale(transfer, config.eta));
  return out;
}

}  // namespace ialign
