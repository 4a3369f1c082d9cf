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

// Exact minibatch H-delta-H divergence over finite hypothesis classes and
// its split into a class-aligned and a class-misaligned part.
//
// For batches B_S, B_T of equal size m_b and label sets Y_S, Y_T, let
// Y_C = Y_S & Y_T. Rows whose label is in Y_C are "aligned", the rest
// "misaligned". For a hypothesis pair (h, h'):
//   xi_C    = #disagree(B_T aligned)    - #disagree(B_S aligned)
//   xi_Cbar = #disagree(B_T misaligned) - #disagree(B_S misaligned)
// and d_hat = max over ordered pairs of |xi_C + xi_Cbar|.

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "implicit_align/data.hpp"
#include "implicit_align/error.hpp"
#include "implicit_align/sampler.hpp"

namespace ialign {

struct LabeledBatchPair {
  std::size_t input_dim = 0;
  std::vector<double> source_features;
  std::vector<int> source_labels;
  std::vector<double> target_features;
  std::vector<int> target_labels;

  std::size_t size() const { return source_labels.size(); }
  std::span<const double> source_row(std::size_t i) const {
    return {source_features.data() + i * input_dim, input_dim};
  }
  std::span<const double> target_row(std::size_t i) const {
    return {target_features.data() + i * input_dim, input_dim};
  }

  void validate() const {
    if (source_labels.size() != target_labels.size()) {
      throw Error("batch pair halves differ in size: " +
                  std::to_string(source_labels.size()) + " vs " +
                  std::to_string(target_labels.size()));
    }
    if (source_features.size() != source_labels.size() * input_dim ||
        target_features.size() != target_labels.size() * input_dim) {
      throw ShapeError("batch pair feature matrix does not match its labels");
    }
  }
};

// Builds a labeled pair from a minibatch. Target labels come from the
// supplied label vector (hidden ground truth or pseudo-labels).
inline LabeledBatchPair labeled_pair(const Minibatch& batch, const Dataset& source,
                                     const Dataset& target,
                                     std::span<const int> target_labels) {
  LabeledBatchPair p;
  p.input_dim = source.input_dim;
  for (std::size_t i : batch.source_indices) {
    auto r = source.row(i);
    p.source_features.insert(p.source_features.end(), r.begin(), r.end());
    p.source_labels.push_back(source.labels[i]);
  }
  for (std::size_t i : batch.target_indices) {
    auto r = target.row(i);
    p.target_features.insert(p.target_features.end(), r.begin(), r.end());
    p.target_labels.push_back(target_labels[i]);
  }
  return p;
}

struct LabelPartition {
  std::vector<int> shared;       // Y_C
  std::vector<int> source_only;  // Y_S - Y_C
  std::vector<int> target_only;  // Y_T - Y_C
  std::vector<std::uint8_t> source_aligned;  // per row of B_S
  std::vector<std::uint8_t> target_aligned;  // per row of B_T

  std::size_t source_aligned_count() const {
    return static_cast<std::size_t>(std::count(source_aligned.begin(), source_aligned.end(), 1));
  }
  std::size_t target_aligned_count() const {
    return static_cast<std::size_t>(std::count(target_aligned.begin(), target_aligned.end(), 1));
  }
};

inline LabelPartition partition(const LabeledBatchPair& pair) {
  pair.validate();
  std::vector<int> ys(pair.source_labels), yt(pair.target_labels);
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
  std::sort(yt.begin(), yt.end());
  yt.erase(std::unique(yt.begin(), yt.end()), yt.end());
  LabelPartition p;
  std::set_intersection(ys.begin(), ys.end(), yt.begin(), yt.end(), std::back_inserter(p.shared));
  std::set_difference(ys.begin(), ys.end(), p.shared.begin(), p.shared.end(),
                      std::back_inserter(p.source_only));
  std::set_difference(yt.begin(), yt.end(), p.shared.begin(), p.shared.end(),
                      std::back_inserter(p.target_only));
  auto in_shared = [&](int y) { return std::binary_search(p.shared.begin(), p.shared.end(), y); };
  for (int y : pair.source_labels) p.source_aligned.push_back(in_shared(y));
  for (int y : pair.target_labels) p.target_aligned.push_back(in_shared(y));
  return p;
}

// A binary hypothesis evaluated on one batch row. Receives the row's domain
// and position so that tabulated hypotheses can be expressed too.
struct Hypothesis {
  std::string name;
  std::function<int(Domain, std::size_t, std::span<const double>, int)> fn;

  int operator()(Domain d, std::size_t pos, std::span<const double> x, int label) const {
    return fn(d, pos, x, label) ? 1 : 0;
  }
};

inline constexpr std::size_t kDefaultHypothesisCap = 512;

class HypothesisClass {
 public:
  HypothesisClass() = default;
  explicit HypothesisClass(std::vector<Hypothesis> members,
                           std::size_t cap = kDefaultHypothesisCap)
      : members_(std::move(members)), cap_(cap) {
    check_cap();
  }

  void add(Hypothesis h) {
    members_.push_back(std::move(h));
    check_cap();
  }

  std::size_t size() const { return members_.size(); }
  std::size_t cap() const { return cap_; }
  const Hypothesis& operator[](std::size_t i) const { return members_[i]; }

  // h_L(x) = [label(x) in L] for every subset L of {0, ..., n - 1}; subset
  // bit masks enumerate in increasing order, so index 0 is the constant 0.
  static HypothesisClass label_oracle(std::size_t label_count,
                                      std::size_t cap = kDefaultHypothesisCap) {
    if (label_count > 20) throw Error("label_oracle: label set too large");
    std::vector<Hypothesis> hs;
    const std::size_t n = std::size_t{1} << label_count;
    if (n > cap) {
      throw Error("hypothesis class of size " + std::to_string(n) + " exceeds cap " +
                  std::to_string(cap));
    }
    for (std::size_t bits = 0; bits < n; ++bits) {
      std::string name = "label_in{";
      bool first = true;
      for (std::size_t y = 0; y < label_count; ++y) {
        if (bits >> y & 1) {
          name += (first ? "" : ",") + std::to_string(y);
          first = false;
        }
      }
      name += "}";
      hs.push_back({name, [bits](Domain, std::size_t, std::span<const double>, int label) {
                      return label >= 0 && label < 64 && ((bits >> label) & 1) ? 1 : 0;
                    }});
    }
    return HypothesisClass(std::move(hs), cap);
  }

  // Oracle hypotheses for the given explicit label subsets.
  static HypothesisClass label_sets(const std::vector<std::vector<int>>& subsets,
                                    std::size_t cap = kDefaultHypothesisCap) {
    std::vector<Hypothesis> hs;
    for (const auto& s : subsets) {
      std::string name = "label_in{";
      for (std::size_t i = 0; i < s.size(); ++i) name += (i ? "," : "") + std::to_string(s[i]);
      name += "}";
      hs.push_back({name, [s](Domain, std::size_t, std::span<const double>, int label) {
                      return std::find(s.begin(), s.end(), label) != s.end() ? 1 : 0;
                    }});
    }
    return HypothesisClass(std::move(hs), cap);
  }

  // Axis-aligned stumps [x_d > t] and [x_d <= t] on an evenly spaced
  // threshold grid in [lo, hi].
  static HypothesisClass stumps(std::size_t input_dim, std::size_t thresholds, double lo,
                                double hi, std::size_t cap = kDefaultHypothesisCap) {
    std::vector<Hypothesis> hs;
    for (std::size_t d = 0; d < input_dim; ++d) {
      for (std::size_t k = 0; k < thresholds; ++k) {
        const double t = thresholds == 1
                             ? 0.5 * (lo + hi)
                             : lo + (hi - lo) * static_cast<double>(k) /
                                        static_cast<double>(thresholds - 1);
        const std::string base = "x" + std::to_string(d);
        hs.push_back({base + ">" + format_double(t),
                      [d, t](Domain, std::size_t, std::span<const double> x, int) {
                        return x[d] > t ? 1 : 0;
                      }});
        hs.push_back({base + "<=" + format_double(t),
                      [d, t](Domain, std::size_t, std::span<const double> x, int) {
                        return x[d] <= t ? 1 : 0;
                      }});
      }
    }
    return HypothesisClass(std::move(hs), cap);
  }

  // Hypothesis given by explicit outputs for each source and target row.
  static Hypothesis table(std::string name, std::vector<int> source_out,
                          std::vector<int> target_out) {
    return {std::move(name),
            [s = std::move(source_out), t = std::move(target_out)](
                Domain d, std::size_t pos, std::span<const double>, int) {
              const auto& v = d == Domain::source ? s : t;
              if (pos >= v.size()) throw Error("table hypothesis: row out of range");
              return v[pos];
            }};
  }

 private:
  void check_cap() const {
    if (members_.size() > cap_) {
      throw Error("hypothesis class of size " + std::to_string(members_.size()) +
                  " exceeds cap " + std::to_string(cap_));
    }
  }

  std::vector<Hypothesis> members_;
  std::size_t cap_ = kDefaultHypothesisCap;
};

// Hypothesis outputs on every row of a batch pair; any nonzero output counts as 1.
struct EvaluatedHypotheses {
  std::size_t m = 0;
  std::vector<std::vector<std::uint8_t>> source;  // [h][row]
  std::vector<std::vector<std::uint8_t>> target;
  std::vector<std::vector<std::uint64_t>> source_bits;  // rows packed 64 per word
  std::vector<std::vector<std::uint64_t>> target_bits;
};

inline EvaluatedHypotheses evaluate_hypotheses(const LabeledBatchPair& pair,
                                               const HypothesisClass& hc) {
  pair.validate();
  EvaluatedHypotheses e;
  e.m = pair.size();
  const std::size_t words = (e.m + 63) / 64;
  e.source.resize(hc.size());
  e.target.resize(hc.size());
  e.source_bits.assign(hc.size(), std::vector<std::uint64_t>(words, 0));
  e.target_bits.assign(hc.size(), std::vector<std::uint64_t>(words, 0));
  for (std::size_t h = 0; h < hc.size(); ++h) {
    e.source[h].resize(e.m);
    e.target[h].resize(e.m);
    for (std::size_t i = 0; i < e.m; ++i) {
      e.source[h][i] = static_cast<std::uint8_t>(
          hc[h](Domain::source, i, pair.source_row(i), pair.source_labels[i]) != 0);
      e.target[h][i] = static_cast<std::uint8_t>(
          hc[h](Domain::target, i, pair.target_row(i), pair.target_labels[i]) != 0);
      e.source_bits[h][i / 64] |= std::uint64_t{e.source[h][i]} << (i % 64);
      e.target_bits[h][i / 64] |= std::uint64_t{e.target[h][i]} << (i % 64);
    }
  }
  return e;
}

struct XiTerms {
  long long aligned = 0;     // xi_C
  long long misaligned = 0;  // xi_Cbar
};

inline XiTerms xi_terms(const EvaluatedHypotheses& e, const LabelPartition& part,
                        std::size_t h, std::size_t hp) {
  XiTerms x;
  for (std::size_t i = 0; i < e.m; ++i) {
    const long long dt = e.target[h][i] != e.target[hp][i];
    const long long ds = e.source[h][i] != e.source[hp][i];
    (part.target_aligned[i] ? x.aligned : x.misaligned) += dt;
    (part.source_aligned[i] ? x.aligned : x.misaligned) -= ds;
  }
  return x;
}

inline XiTerms xi_terms(const LabeledBatchPair& pair, const LabelPartition& part,
                        const Hypothesis& h, const Hypothesis& hp) {
  pair.validate();
  XiTerms x;
  for (std::size_t i = 0; i < pair.size(); ++i) {
    const long long dt = (h(Domain::target, i, pair.target_row(i), pair.target_labels[i]) != 0) !=
                         (hp(Domain::target, i, pair.target_row(i), pair.target_labels[i]) != 0);
    const long long ds = (h(Domain::source, i, pair.source_row(i), pair.source_labels[i]) != 0) !=
                         (hp(Domain::source, i, pair.source_row(i), pair.source_labels[i]) != 0);
    (part.target_aligned[i] ? x.aligned : x.misaligned) += dt;
    (part.source_aligned[i] ? x.aligned : x.misaligned) -= ds;
  }
  return x;
}

// sum over B_T of [h != h'] minus sum over B_S of [h != h'].
inline long long disagreement_difference(const EvaluatedHypotheses& e, std::size_t h,
                                         std::size_t hp) {
  long long t = 0, s = 0;
  const auto& th = e.target_bits[h];
  const auto& thp = e.target_bits[hp];
  const auto& sh = e.source_bits[h];
  const auto& shp = e.source_bits[hp];
  for (std::size_t w = 0; w < th.size(); ++w) {
    t += std::popcount(th[w] ^ thp[w]);
    s += std::popcount(sh[w] ^ shp[w]);
  }
  return t - s;
}

struct DivergenceReport {
  std::size_t batch_size = 0;
  long long xi_aligned = 0;
  long long xi_misaligned = 0;
  long long unnormalized = 0;
  double normalized = 0.0;
  std::size_t h = 0;
  std::size_t h_prime = 0;
  std::string h_name;
  std::string h_prime_name;
  std::size_t shared_labels = 0;
  std::size_t source_only_labels = 0;
  std::size_t target_only_labels = 0;
  std::size_t source_misaligned_rows = 0;
  std::size_t target_misaligned_rows = 0;
};

inline void to_json(nlohmann::json& j, const DivergenceReport& r) {
  j = {{"batch_size", r.batch_size},
       {"d_hat", r.unnormalized},
       {"d_hat_normalized", r.normalized},
       {"xi_aligned", r.xi_aligned},
       {"xi_misaligned", r.xi_misaligned},
       {"argmax", {{"h", r.h}, {"h_prime", r.h_prime}, {"h_name", r.h_name},
                   {"h_prime_name", r.h_prime_name}}},
       {"partition", {{"shared_labels", r.shared_labels},
                      {"source_only_labels", r.source_only_labels},
                      {"target_only_labels", r.target_only_labels},
                      {"source_misaligned_rows", r.source_misaligned_rows},
                      {"target_misaligned_rows", r.target_misaligned_rows}}}};
}

// Exact supremum over all ordered hypothesis pairs. Ties resolve to the
// lexicographically smallest (h, h') index pair. The objective is symmetric
// in (h, h'), so scanning h' >= h finds the same pair.
inline DivergenceReport empirical_divergence(const LabeledBatchPair& pair,
                                             const HypothesisClass& hc) {
  if (hc.size() == 0) throw Error("empirical_divergence: empty hypothesis class");
  if (hc.size() > hc.cap()) throw Error("empirical_divergence: hypothesis cap exceeded");
  const auto part = partition(pair);
  const auto e = evaluate_hypotheses(pair, hc);
  DivergenceReport r;
  r.batch_size = pair.size();
  long long best = -1;
  for (std::size_t h = 0; h < hc.size(); ++h) {
    for (std::size_t hp = h; hp < hc.size(); ++hp) {
      const long long v = std::llabs(disagreement_difference(e, h, hp));
      if (v > best) {
        best = v;
        r.h = h;
        r.h_prime = hp;
      }
    }
  }
  const auto x = xi_terms(e, part, r.h, r.h_prime);
  r.xi_aligned = x.aligned;
  r.xi_misaligned = x.misaligned;
  r.unnormalized = best;
  r.normalized = pair.size() ? static_cast<double>(best) / static_cast<double>(pair.size()) : 0.0;
  r.h_name = hc[r.h].name;
  r.h_prime_name = hc[r.h_prime].name;
  r.shared_labels = part.shared.size();
  r.source_only_labels = part.source_only.size();
  r.target_only_labels = part.target_only.size();
  r.source_misaligned_rows = pair.size() - part.source_aligned_count();
  r.target_misaligned_rows = pair.size() - part.target_aligned_count();
  return r;
}

struct ShortcutGap {
  std::size_t pairs = 0;
  double d_hat_random = 0.0;   // mean unnormalized d_hat
  double d_hat_aligned = 0.0;
  double xi_misaligned_random = 0.0;   // mean xi_Cbar of the argmax pair
  double xi_misaligned_aligned = 0.0;
  long long max_abs_xi_misaligned_aligned = 0;
  std::vector<DivergenceReport> random_reports;
  std::vector<DivergenceReport> aligned_reports;
};

// Draws `pairs` batch pairs from each sampler and compares the divergence
// reports of the two sampling schemes.
inline ShortcutGap shortcut_gap(const std::function<LabeledBatchPair()>& random_sampler,
                                const std::function<LabeledBatchPair()>& aligned_sampler,
                                const HypothesisClass& hc, std::size_t pairs) {
  if (pairs == 0) throw Error("shortcut_gap: need at least one pair");
  ShortcutGap g;
  g.pairs = pairs;
  for (std::size_t k = 0; k < pairs; ++k) {
    auto r = empirical_divergence(random_sampler(), hc);
    auto a = empirical_divergence(aligned_sampler(), hc);
    g.d_hat_random += static_cast<double>(r.unnormalized);
    g.d_hat_aligned += static_cast<double>(a.unnormalized);
    g.xi_misaligned_random += static_cast<double>(r.xi_misaligned);
    g.xi_misaligned_aligned += static_cast<double>(a.xi_misaligned);
    g.max_abs_xi_misaligned_aligned =
        std::max(g.max_abs_xi_misaligned_aligned, std::llabs(a.xi_misaligned));
    g.random_reports.push_back(std::move(r));
    g.aligned_reports.push_back(std::move(a));
  }
  const double n = static_cast<double>(pairs);
  g.d_hat_random /= n;
  g.d_hat_aligned /= n;
  g.xi_misaligned_random /= n;
  g.xi_misaligned_aligned /= n;
  return g;
}

}  // namespace ialign
