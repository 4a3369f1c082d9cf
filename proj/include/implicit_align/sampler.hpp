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

// Class-aligned minibatch construction driven by target pseudo-labels, plus
// the random and source-balanced baseline samplers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "implicit_align/data.hpp"
#include "implicit_align/error.hpp"
#include "implicit_align/rng.hpp"
#include "implicit_align/tensor.hpp"

namespace ialign {

// Probability p(y) of picking each label as one of the classes to align.
class AlignmentDistribution {
 public:
  explicit AlignmentDistribution(std::vector<double> p) : p_(std::move(p)) {
    if (p_.empty()) throw Error("alignment distribution over zero labels");
    double s = 0.0;
    for (double v : p_) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw Error("alignment distribution entries must be finite and >= 0");
      }
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-12) {
      throw Error("alignment distribution sums to " + std::to_string(s) + ", not 1");
    }
  }

  static AlignmentDistribution uniform(std::size_t num_labels) {
    return AlignmentDistribution(
        std::vector<double>(num_labels, 1.0 / static_cast<double>(num_labels)));
  }

  std::size_t size() const { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  std::span<const double> probabilities() const { return p_; }

 private:
  std::vector<double> p_;
};

// Target pseudo-labels and the class index built from them. Replaced
// wholesale on every refresh.
struct PseudoLabelCache {
  std::vector<int> labels;
  ClassIndex index;
  long long step = -1;  // step of the last refresh, -1 before the first
  std::size_t refresh_period = 20;

  bool empty() const { return step < 0; }
  bool due(long long current_step) const {
    return step < 0 || current_step % static_cast<long long>(refresh_period) == 0;
  }
};

// Accuracy of a label vector against the hidden ground truth.
inline double label_accuracy(std::span<const int> predicted,
                             std::span<const int> truth) {
  if (predicted.size() != truth.size() || truth.empty()) {
    throw Error("label_accuracy: size mismatch");
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

// Installs a complete pseudo-label vector into the cache.
inline void install_pseudo_labels(PseudoLabelCache& cache, std::vector<int> labels,
                                  std::size_t num_classes, long long step) {
  ClassIndex index(labels, num_classes);
  for (int y : labels) {
    if (y < 0) throw Error("pseudo-label cache must cover every target example");
  }
  cache.labels = std::move(labels);
  cache.index = std::move(index);
  cache.step = step;
}

// Re-predicts every target example with `model` and rebuilds the cache.
// `Model` needs predict_labels(std::span<const double>) -> std::vector<int>.
template <class Model>
void refresh_pseudo_labels(const Model& model, const Dataset& target,
                           PseudoLabelCache& cache, long long step) {
  install_pseudo_labels(cache, model.predict_labels(std::span<const double>(target.features)),
                        target.num_classes, step);
}

namespace detail {

// Index into `remaining` drawn proportionally to p restricted to it.
inline std::size_t draw_proportional(const std::vector<int>& remaining,
                                     const AlignmentDistribution& p, Rng& rng) {
  double mass = 0.0;
  for (int y : remaining) mass += p[y];
  double u = rng.uniform() * mass;
  for (std::size_t k = 0; k < remaining.size(); ++k) {
    u -= p[remaining[k]];
    if (u < 0.0) return k;
  }
  return remaining.size() - 1;
}

}  // namespace detail

// Draws n distinct labels sequentially, each proportional to p(y)
// renormalized over the labels not yet drawn.
inline std::vector<int> sample_classes(const AlignmentDistribution& p, std::size_t n,
                                       Rng& rng) {
  std::vector<int> remaining;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) remaining.push_back(static_cast<int>(i));
  if (n > remaining.size()) {
    throw Error("cannot sample " + std::to_string(n) + " unique classes from " +
                std::to_string(remaining.size()) + " labels with positive mass");
  }
  std::vector<int> out;
  out.reserve(n);
  while (out.size() < n) {
    const std::size_t pick = detail::draw_proportional(remaining, p, rng);
    out.push_back(remaining[pick]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return out;
}

// A paired source/target minibatch. For class-aligned batches every class in
// `classes` contributes exactly K rows to each half; `mask` marks those
// classes. Baseline samplers leave `classes` empty and the mask all ones.
struct Minibatch {
  std::vector<std::size_t> source_indices;
  std::vector<int> source_labels;
  std::vector<std::size_t> target_indices;
  std::vector<int> target_pseudo_labels;  // -1 where no cache is available
  std::vector<int> classes;
  ClassMask mask;
  std::size_t requested_classes = 0;
  std::size_t rejected_classes = 0;
  bool degraded = false;
  Tensor source_x;
  Tensor target_x;

  std::size_t size() const { return source_indices.size(); }
};

using AlignedMinibatch = Minibatch;

namespace detail {

// K indices from a bucket: without replacement when it is large enough,
// otherwise with replacement.
inline void draw_from_bucket(const std::vector<std::size_t>& bucket, std::size_t k,
                             Rng& rng, std::vector<std::size_t>& out) {
  if (bucket.size() >= k) {
    std::vector<std::size_t> pool = bucket;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + rng.below(pool.size() - i);
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
  } else {
    for (std::size_t i = 0; i < k; ++i) out.push_back(bucket[rng.below(bucket.size())]);
  }
}

inline void finish_batch(Minibatch& b, const Dataset& source, const Dataset& target,
                         const PseudoLabelCache* cache) {
  b.source_labels.clear();
  for (std::size_t i : b.source_indices) b.source_labels.push_back(source.labels[i]);
  b.target_pseudo_labels.clear();
  for (std::size_t i : b.target_indices) {
    b.target_pseudo_labels.push_back(cache && !cache->empty() ? cache->labels[i] : -1);
  }
  b.source_x = source.rows(b.source_indices);
  b.target_x = target.rows(b.target_indices);
}

}  // namespace detail

// Algorithm: pick classes from p(y), then K source examples from p_S(x|y)
// and K target examples from p_T(x|y_hat = y) for each picked class.
//
// A class whose target pseudo-bucket is empty is rejected and the draw
// continues over the remaining mass. When fewer than `num_classes` live
// classes exist the batch shrinks and `degraded` is set; fewer than
// `min_classes` raises DegenerateCacheError.
inline AlignedMinibatch build_aligned_minibatch(
    const Dataset& source, const ClassIndex& source_index, const Dataset& target,
    const PseudoLabelCache& cache, const AlignmentDistribution& p,
    std::size_t num_classes, std::size_t per_class, Rng& rng,
    std::size_t min_classes = 1) {
  const std::size_t C = source_index.num_classes();
  if (p.size() != C || cache.index.num_classes() != C) {
    throw Error("aligned sampler: label space sizes disagree");
  }
  if (num_classes == 0 || per_class == 0) {
    throw Error("aligned sampler: N and K must be positive");
  }
  if (cache.empty()) throw Error("aligned sampler: pseudo-label cache is empty");
  for (std::size_t y = 0; y < C; ++y) {
    if (p[y] > 0.0 && source_index.count(y) == 0) {
      throw Error("aligned sampler: class " + std::to_string(y) +
                  " has no source examples");
    }
  }
  std::vector<int> remaining;
  for (std::size_t y = 0; y < C; ++y)
    if (p[y] > 0.0) remaining.push_back(static_cast<int>(y));
  if (num_classes > remaining.size()) {
    throw Error("cannot sample " + std::to_string(num_classes) +
                " unique classes from " + std::to_string(remaining.size()) +
                " labels with positive mass");
  }

  AlignedMinibatch b;
  b.requested_classes = num_classes;
  while (b.classes.size() < num_classes && !remaining.empty()) {
    const std::size_t pick = detail::draw_proportional(remaining, p, rng);
    const int y = remaining[pick];
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    if (cache.index.count(y) == 0) {
      ++b.rejected_classes;
      continue;
    }
    b.classes.push_back(y);
  }
  if (b.classes.size() < min_classes) {
    throw DegenerateCacheError(b.classes.size(), min_classes);
  }
  b.degraded = b.classes.size() < num_classes;

  for (int y : b.classes) {
    detail::draw_from_bucket(source_index.bucket(y), per_class, rng, b.source_indices);
    detail::draw_from_bucket(cache.index.bucket(y), per_class, rng, b.target_indices);
  }
  b.mask.assign(C, 0);
  for (int y : b.classes) b.mask[y] = 1;
  detail::finish_batch(b, source, target, &cache);
  return b;
}

// m indices drawn uniformly with replacement.
inline std::vector<std::size_t> random_batch(const Dataset& ds, std::size_t m, Rng& rng) {
  if (ds.empty()) throw Error("random_batch: empty dataset");
  std::vector<std::size_t> idx(m);
  for (auto& i : idx) i = rng.below(ds.size());
  return idx;
}

// Both halves uniformly random, m rows each.
inline Minibatch random_pair_batch(const Dataset& source, const Dataset& target,
                                   std::size_t m, Rng& rng,
                                   const PseudoLabelCache* cache = nullptr) {
  Minibatch b;
  b.source_indices = random_batch(source, m, rng);
  b.target_indices = random_batch(target, m, rng);
  b.mask.assign(source.num_classes, 1);
  detail::finish_batch(b, source, target, cache);
  return b;
}

// Source half class-balanced (N uniform classes, K each); target half
// uniformly random with the same size.
inline Minibatch source_balanced_batch(const Dataset& source, const ClassIndex& source_index,
                                       const Dataset& target, std::size_t num_classes,
                                       std::size_t per_class, Rng& rng,
                                       const PseudoLabelCache* cache = nullptr) {
  if (source.empty() || target.empty()) throw Error("source_balanced_batch: empty dataset");
  const std::size_t C = source_index.num_classes();
  std::vector<double> p(C, 0.0);
  std::size_t live = 0;
  for (std::size_t y = 0; y < C; ++y) live += source_index.count(y) > 0;
  for (std::size_t y = 0; y < C; ++y)
    if (source_index.count(y) > 0) p[y] = 1.0 / static_cast<double>(live);
  // Renormalize exactly to absorb rounding in 1/live.
  double s = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& v : p) v /= s;
  Minibatch b;
  b.requested_classes = num_classes;
  std::vector<int> classes;
  {
    std::vector<int> remaining;
    for (std::size_t y = 0; y < C; ++y)
      if (p[y] > 0.0) remaining.push_back(static_cast<int>(y));
    if (num_classes > remaining.size()) {
      throw Error("cannot sample " + std::to_string(num_classes) +
                  " unique classes from " + std::to_string(remaining.size()) +
                  " source classes");
    }
    for (std::size_t k = 0; k < num_classes; ++k) {
      const std::size_t pick = rng.below(remaining.size());
      classes.push_back(remaining[pick]);
      remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    }
  }
  b.classes = classes;
  for (int y : classes)
    detail::draw_from_bucket(source_index.bucket(y), per_class, rng, b.source_indices);
  b.target_indices = random_batch(target, num_classes * per_class, rng);
  b.mask.assign(C, 1);
  detail::finish_batch(b, source, target, cache);
  return b;
}

// Number of distinct non-negative labels.
inline std::size_t unique_class_count(std::span<const int> labels) {
  std::unordered_set<int> seen;
  for (int y : labels)
    if (y >= 0) seen.insert(y);
  return seen.size();
}

// E|Y| = n [1 - ((n - 1) / n)^k] for k uniform draws with replacement from
// n classes.
inline double expected_diversity(std::size_t n, std::size_t k) {
  if (n == 0) throw Error("expected_diversity: n must be positive");
  const double nd = static_cast<double>(n);
  return nd * (1.0 - std::pow((nd - 1.0) / nd, static_cast<double>(k)));
}

// Mask with ones at the labels present in `labels`.
inline ClassMask mask_from_labels(std::span<const int> labels, std::size_t num_classes) {
  ClassMask m(num_classes, 0);
  for (int y : labels)
    if (y >= 0) m.at(static_cast<std::size_t>(y)) = 1;
  return m;
}

// Checks the class-aligned batch invariants; returns an empty string when
// they hold, otherwise a description of the first violation.
inline std::string check_aligned_batch(const AlignedMinibatch& b, std::size_t per_class) {
  if (b.source_indices.size() != b.target_indices.size()) return "batch halves differ in size";
  if (b.source_indices.size() != b.classes.size() * per_class) return "batch size is not N*K";
  auto src = b.source_labels, tgt = b.target_pseudo_labels;
  std::sort(src.begin(), src.end());
  std::sort(tgt.begin(), tgt.end());
  if (src != tgt) return "source label multiset differs from target pseudo-label multiset";
  std::vector<int> expected;
  for (int y : b.classes)
    for (std::size_t k = 0; k < per_class; ++k) expected.push_back(y);
  std::sort(expected.begin(), expected.end());
  if (src != expected) return "labels are not K copies of each sampled class";
  const auto ones = static_cast<std::size_t>(std::count(b.mask.begin(), b.mask.end(), 1));
  if (ones != b.classes.size()) return "mask ones differ from the number of classes";
  for (int y : b.classes)
    if (!b.mask.at(y)) return "mask misses a sampled class";
  if (b.degraded != (b.classes.size() < b.requested_classes)) return "degraded flag inconsistent";
  return {};
}

}  // namespace ialign
