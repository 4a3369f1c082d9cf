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

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "implicit_align/data.hpp"
#include "implicit_align/divergence.hpp"
#include "implicit_align/error.hpp"
#include "implicit_align/metrics.hpp"
#include "implicit_align/nn.hpp"
#include "implicit_align/objectives.hpp"
#include "implicit_align/rng.hpp"
#include "implicit_align/sampler.hpp"
#include "implicit_align/tensor.hpp"

namespace ialign {

// Gradient reversal coefficient at step i, rising from 0 towards `ceiling`.
// The default ceiling gives 0.2 / (1 + exp(-i / 1000)) - 0.1.
inline double lambda_schedule(long long step, double ceiling = 0.1) {
  if (step < 0) throw Error("lambda_schedule: negative step");
  return 2.0 * ceiling / (1.0 + std::exp(-static_cast<double>(step) / 1000.0)) - ceiling;
}

enum class SamplerKind { random, source_balanced, aligned, aligned_oracle };

inline const char* sampler_kind_name(SamplerKind k) {
  switch (k) {
    case SamplerKind::random: return "random";
    case SamplerKind::source_balanced: return "source_balanced";
    case SamplerKind::aligned: return "aligned";
    case SamplerKind::aligned_oracle: return "aligned_oracle";
  }
  return "?";
}

inline SamplerKind parse_sampler_kind(const std::string& s) {
  for (auto k : {SamplerKind::random, SamplerKind::source_balanced, SamplerKind::aligned,
                 SamplerKind::aligned_oracle}) {
    if (s == sampler_kind_name(k)) return k;
  }
  throw Error("unknown sampler '" + s + "'");
}

inline bool is_aligned(SamplerKind k) {
  return k == SamplerKind::aligned || k == SamplerKind::aligned_oracle;
}

struct TrainConfig {
  long long steps = 5000;
  std::size_t classes_per_batch = 10;  // N
  std::size_t per_class = 3;           // K
  std::size_t batch_size = 0;          // random sampler rows per domain; 0 means N*K
  SamplerKind sampler = SamplerKind::aligned;
  TransferLossConfig objective;
  SgdConfig sgd;
  std::size_t refresh_period = 20;  // U
  long long eval_period = 500;
  std::uint64_t seed = 0;
  ModelConfig model;
  std::size_t min_classes = 1;
  long long warmup_steps = 0;  // source-only steps before adaptation starts
  double lambda_max = 0.1;     // ceiling of the gradient reversal schedule
  std::vector<double> alignment;  // p(y); empty means uniform
  bool probe_divergence = false;

  std::size_t rows_per_domain() const {
    return batch_size ? batch_size : classes_per_batch * per_class;
  }

  // All violations, not only the first.
  std::vector<std::string> validate() const {
    std::vector<std::string> e;
    if (steps <= 0) e.push_back("steps must be positive");
    if (classes_per_batch == 0) e.push_back("batch.classes (N) must be positive");
    if (per_class == 0) e.push_back("batch.per_class (K) must be positive");
    if (refresh_period == 0) e.push_back("refresh_period must be positive");
    if (eval_period <= 0) e.push_back("eval_period must be positive");
    if (!(lambda_max >= 0.0 && std::isfinite(lambda_max)))
      e.push_back("lambda_max must be finite and >= 0");
    if (warmup_steps < 0 || warmup_steps >= steps)
      e.push_back("warmup_steps must lie in [0, steps)");
    if (min_classes == 0 || min_classes > classes_per_batch)
      e.push_back("min_classes must lie in [1, N]");
    if (model.num_classes < 2) e.push_back("model.num_classes must be >= 2");
    if (model.input_dim == 0) e.push_back("model.input_dim must be positive");
    if (model.feature_dim == 0) e.push_back("model.feature_dim must be positive");
    if (model.head_hidden == 0) e.push_back("model.head_hidden must be positive");
    if (classes_per_batch > model.num_classes)
      e.push_back("batch.classes (N) exceeds the number of classes");
    if (!alignment.empty() && alignment.size() != model.num_classes)
      e.push_back("alignment must have one entry per class");
    if (!alignment.empty()) {
      try {
        AlignmentDistribution check(alignment);
      } catch (const Error& ex) {
        e.push_back(std::string("alignment: ") + ex.what());
      }
    }
    if (objective.kind == TransferKind::mdd_masked && sampler == SamplerKind::random)
      e.push_back("objective mdd_masked needs a class-structured sampler "
                  "(source_balanced, aligned or aligned_oracle)");
    if (probe_divergence && model.num_classes > 10)
      e.push_back("probe_divergence supports at most 10 classes");
    try {
      sgd.validate();
    } catch (const Error& ex) {
      e.push_back(ex.what());
    }
    for (auto& s : objective.validate()) e.push_back(std::move(s));
    return e;
  }
};

// One evaluation snapshot. Loss components and batch statistics are means
// over the steps since the previous record.
struct MetricsRecord {
  long long step = 0;
  double lambda = 0.0;
  double source_accuracy = 0.0;
  EvalMetrics target;
  std::optional<double> pseudo_label_accuracy;
  double batch_class_diversity = 0.0;
  double batch_rows = 0.0;
  std::size_t degraded_batches = 0;
  double source_loss = 0.0;
  double transfer_loss = 0.0;
  double total_loss = 0.0;
  std::optional<double> discrepancy;
  std::optional<double> unmasked_discrepancy;
  std::optional<double> prototype_loss;
  std::optional<DivergenceReport> divergence;
};

inline nlohmann::json record_json(const MetricsRecord& r) {
  nlohmann::json j = {{"step", r.step},
                      {"lambda", r.lambda},
                      {"source_accuracy", r.source_accuracy},
                      {"target_accuracy", r.target.accuracy},
                      {"target_per_class_accuracy", r.target.per_class_accuracy},
                      {"target_macro_f1", r.target.macro_f1},
                      {"target_macro_precision", r.target.macro_precision},
                      {"target_macro_recall", r.target.macro_recall},
                      {"target_weighted_f1", r.target.weighted_f1},
                      {"target_weighted_precision", r.target.weighted_precision},
                      {"target_weighted_recall", r.target.weighted_recall},
                      {"target_absent_classes", r.target.absent_classes},
                      {"batch_class_diversity", r.batch_class_diversity},
                      {"batch_rows", r.batch_rows},
                      {"degraded_batches", r.degraded_batches},
                      {"source_loss", r.source_loss},
                      {"transfer_loss", r.transfer_loss},
                      {"total_loss", r.total_loss}};
  j["pseudo_label_accuracy"] =
      r.pseudo_label_accuracy ? nlohmann::json(*r.pseudo_label_accuracy) : nlohmann::json();
  if (r.discrepancy) j["discrepancy"] = *r.discrepancy;
  if (r.unmasked_discrepancy) j["unmasked_discrepancy"] = *r.unmasked_discrepancy;
  if (r.prototype_loss) j["prototype_loss"] = *r.prototype_loss;
  if (r.divergence) j["divergence"] = *r.divergence;
  return j;
}

// Training inputs. `target_labels` is the evaluation channel: the loop reads
// it only for metrics and for the oracle sampler.
struct TrainData {
  const Dataset* source = nullptr;
  const Dataset* target = nullptr;
  const std::vector<int>* target_labels = nullptr;
};

struct TrainResult {
  AdaptationModel model;
  std::vector<MetricsRecord> records;

  const MetricsRecord& final_record() const { return records.back(); }
};

using RecordSink = std::function<void(const MetricsRecord&)>;

namespace detail {

struct Accumulator {
  std::size_t steps = 0;
  double diversity = 0.0, rows = 0.0, source = 0.0, transfer = 0.0, total = 0.0;
  double disc = 0.0, unmasked = 0.0, proto = 0.0;
  std::size_t disc_n = 0, unmasked_n = 0, proto_n = 0, degraded = 0;

  void add(const Minibatch& b, const StepLoss& l, double total_value) {
    ++steps;
    diversity += static_cast<double>(unique_class_count(b.source_labels));
    rows += static_cast<double>(b.size());
    source += l.source_loss;
    transfer += l.transfer_loss;
    total += total_value;
    if (l.discrepancy) disc += *l.discrepancy, ++disc_n;
    if (l.unmasked_discrepancy) unmasked += *l.unmasked_discrepancy, ++unmasked_n;
    if (l.prototype_loss) proto += *l.prototype_loss, ++proto_n;
    degraded += b.degraded;
  }

  void flush(MetricsRecord& r) {
    const double n = static_cast<double>(steps ? steps : 1);
    r.batch_class_diversity = diversity / n;
    r.batch_rows = rows / n;
    r.source_loss = source / n;
    r.transfer_loss = transfer / n;
    r.total_loss = total / n;
    r.degraded_batches = degraded;
    if (disc_n) r.discrepancy = disc / static_cast<double>(disc_n);
    if (unmasked_n) r.unmasked_discrepancy = unmasked / static_cast<double>(unmasked_n);
    if (proto_n) r.prototype_loss = proto / static_cast<double>(proto_n);
    *this = Accumulator{};
  }
};

inline std::string batch_diagnostics(const Minibatch& b, const StepLoss& l) {
  std::ostringstream os;
  os << "rows=" << b.size() << " classes=" << b.classes.size()
     << " source_loss=" << l.source_loss << " transfer_loss=" << l.transfer_loss;
  if (l.discrepancy) os << " discrepancy=" << *l.discrepancy;
  if (l.prototype_loss) os << " prototype_loss=" << *l.prototype_loss;
  return os.str();
}

}  // namespace detail

inline void check_train_data(const TrainConfig& config, const TrainData& data) {
  if (!data.source || !data.target || !data.target_labels) throw Error("train: missing dataset");
  const auto& s = *data.source;
  const auto& t = *data.target;
  if (s.empty() || t.empty()) throw DataError("train: empty dataset");
  if (s.input_dim != config.model.input_dim || t.input_dim != config.model.input_dim)
    throw DataError("train: dataset input_dim does not match model.input_dim");
  if (s.num_classes != config.model.num_classes || t.num_classes != config.model.num_classes)
    throw DataError("train: dataset num_classes does not match model.num_classes");
  if (data.target_labels->size() != t.size())
    throw DataError("train: target label channel does not match target size");
  for (int y : s.labels)
    if (y < 0) throw DataError("train: source dataset has unlabeled rows");
  for (int y : t.labels)
    if (y >= 0) throw DataError("train: target dataset exposes labels to training");
}

// Minimax training loop. Deterministic given (config, data).
inline TrainResult train(const TrainConfig& config, const TrainData& data,
                         const RecordSink& sink = {}) {
  if (auto errors = config.validate(); !errors.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw Error(msg);
  }
  check_train_data(config, data);
  const Dataset& source = *data.source;
  const Dataset& target = *data.target;
  const std::vector<int>& truth = *data.target_labels;
  const std::size_t C = config.model.num_classes;

  Rng root(config.seed);
  TrainResult result{AdaptationModel(config.model, root.substream("init")), {}};
  AdaptationModel& model = result.model;
  Rng sampler_rng = root.substream("sampler");
  Sgd optimizer(config.sgd);

  const ClassIndex source_index(source.labels, C);
  const AlignmentDistribution p = config.alignment.empty()
                                      ? AlignmentDistribution::uniform(C)
                                      : AlignmentDistribution(config.alignment);
  PseudoLabelCache cache;
  cache.refresh_period = config.refresh_period;
  if (config.sampler == SamplerKind::aligned_oracle) install_pseudo_labels(cache, truth, C, 0);

  PrototypeBank bank(C, config.model.feature_dim);
  std::optional<HypothesisClass> probe_family;
  if (config.probe_divergence)
    probe_family = HypothesisClass::label_oracle(C, std::size_t{1} << C);

  TransferLossConfig warmup_objective = config.objective;
  warmup_objective.kind = TransferKind::none;

  detail::Accumulator acc;
  for (long long step = 0; step < config.steps; ++step) {
    const bool warm = step < config.warmup_steps;
    const SamplerKind sampler = warm ? SamplerKind::random : config.sampler;
    if (sampler == SamplerKind::aligned &&
        (cache.due(step) || step == config.warmup_steps))
      refresh_pseudo_labels(model, target, cache, step);

    const PseudoLabelCache* cache_ptr = cache.empty() ? nullptr : &cache;
    Minibatch batch;
    try {
      switch (sampler) {
        case SamplerKind::random:
          batch = random_pair_batch(source, target, config.rows_per_domain(), sampler_rng,
                                    cache_ptr);
          break;
        case SamplerKind::source_balanced:
          batch = source_balanced_batch(source, source_index, target, config.classes_per_batch,
                                        config.per_class, sampler_rng, cache_ptr);
          break;
        case SamplerKind::aligned:
        case SamplerKind::aligned_oracle:
          batch = build_aligned_minibatch(source, source_index, target, cache, p,
                                          config.classes_per_batch, config.per_class,
                                          sampler_rng, config.min_classes);
          if (auto bad = check_aligned_batch(batch, config.per_class); !bad.empty())
            throw Error("aligned batch invariant violated: " + bad);
          break;
      }
    } catch (const DegenerateCacheError& e) {
      throw DegenerateCacheError(e.live_classes(), e.required(),
                                 "step " + std::to_string(step) + ": " + e.what());
    }

    // The ramp restarts at zero when adaptation begins.
    const double lambda =
        warm ? 0.0 : lambda_schedule(step - config.warmup_steps, config.lambda_max);
    StepContext ctx{&bank, step, config.steps};
    StepLoss loss =
        total_step_loss(warm ? warmup_objective : config.objective, batch, model, lambda, ctx);
    const double total = loss.total.item();
    if (!std::isfinite(total)) {
      throw Error("non-finite loss at step " + std::to_string(step) + ": " +
                  detail::batch_diagnostics(batch, loss));
    }
    acc.add(batch, loss, total);

    model.zero_grad();
    loss.total.backward();
    optimizer.step(model.parameters());

    const long long done = step + 1;
    if (done % config.eval_period == 0 || done == config.steps) {
      MetricsRecord r;
      r.step = done;
      r.lambda = lambda;
      r.source_accuracy = evaluate(model, source, source.labels).accuracy;
      r.target = evaluate(model, target, truth);
      if (config.sampler == SamplerKind::aligned && !cache.empty())
        r.pseudo_label_accuracy = label_accuracy(cache.labels, truth);
      if (probe_family) {
        r.divergence = empirical_divergence(labeled_pair(batch, source, target, truth),
                                            *probe_family);
      }
      acc.flush(r);
      if (sink) sink(r);
      result.records.push_back(std::move(r));
    }
  }
  return result;
}

// ---- output --------------------------------------------------------------

inline void write_record_line(std::ostream& os, const MetricsRecord& r) {
  os << record_json(r).dump() << '\n';
}

inline std::string summary_csv(const TrainConfig& config, const MetricsRecord& r) {
  std::ostringstream os;
  os << "seed,sampler,objective,steps,source_accuracy,target_accuracy,"
        "target_per_class_accuracy,target_macro_f1,target_weighted_f1,pseudo_label_accuracy\n";
  os << config.seed << ',' << sampler_kind_name(config.sampler) << ','
     << transfer_kind_name(config.objective.kind) << ',' << r.step << ','
     << format_double(r.source_accuracy) << ',' << format_double(r.target.accuracy) << ','
     << format_double(r.target.per_class_accuracy) << ',' << format_double(r.target.macro_f1)
     << ',' << format_double(r.target.weighted_f1) << ','
     << (r.pseudo_label_accuracy ? format_double(*r.pseudo_label_accuracy) : "") << '\n';
  return os.str();
}

// ---- ablation grids ------------------------------------------------------

struct GridCell {
  std::string name;
  std::vector<std::pair<std::string, std::string>> parameters;
  TrainConfig config;
};

// Grid forms:
//   mask_sampling[:off_sampler]   masking {off,on} x sampling {off,on}
//   samplers:k1,k2,...            one cell per sampler kind
//   refresh:u1,u2,...             one cell per refresh period
//   single                        the base config alone
inline std::vector<GridCell> expand_grid(const std::string& spec, const TrainConfig& base) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
  auto list = [&rest]() {
    std::vector<std::string> out;
    std::stringstream ss(rest);
    for (std::string item; std::getline(ss, item, ',');)
      if (!item.empty()) out.push_back(item);
    if (out.empty()) throw Error("grid: empty value list");
    return out;
  };
  std::vector<GridCell> cells;
  if (kind == "single") {
    cells.push_back({"single", {}, base});
  } else if (kind == "mask_sampling") {
    const SamplerKind off = rest.empty() ? SamplerKind::source_balanced : parse_sampler_kind(rest);
    for (bool mask : {false, true}) {
      for (bool sampling : {false, true}) {
        GridCell c{std::string("mask=") + (mask ? "on" : "off") + ",sampling=" +
                       (sampling ? "on" : "off"),
                   {{"masking", mask ? "on" : "off"}, {"sampling", sampling ? "on" : "off"}},
                   base};
        c.config.objective.kind = mask ? TransferKind::mdd_masked : TransferKind::mdd;
        c.config.sampler = sampling ? SamplerKind::aligned : off;
        cells.push_back(std::move(c));
      }
    }
  } else if (kind == "samplers") {
    for (const auto& s : list()) {
      GridCell c{"sampler=" + s, {{"sampler", s}}, base};
      c.config.sampler = parse_sampler_kind(s);
      cells.push_back(std::move(c));
    }
  } else if (kind == "refresh") {
    for (const auto& s : list()) {
      GridCell c{"refresh=" + s, {{"refresh_period", s}}, base};
      try {
        c.config.refresh_period = std::stoul(s);
      } catch (const std::exception&) {
        throw Error("grid: bad refresh period '" + s + "'");
      }
      cells.push_back(std::move(c));
    }
  } else {
    throw Error("unknown grid '" + spec + "'");
  }
  return cells;
}

struct SeedRun {
  std::uint64_t seed = 0;
  std::optional<MetricsRecord> final;
  std::string error;
};

struct CellResult {
  GridCell cell;
  std::vector<SeedRun> runs;

  std::size_t succeeded() const {
    std::size_t n = 0;
    for (const auto& r : runs) n += r.final.has_value();
    return n;
  }
};

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;
};

inline MeanStderr mean_stderr(std::span<const double> v) {
  MeanStderr m;
  m.n = v.size();
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.stderr_ = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return m;
}

inline MeanStderr cell_statistic(const CellResult& c,
                                 const std::function<double(const MetricsRecord&)>& metric) {
  std::vector<double> v;
  for (const auto& r : c.runs)
    if (r.final) v.push_back(metric(*r.final));
  return mean_stderr(v);
}

// Runs every cell for seeds base.seed + 0..seeds-1. Per-cell failures are
// captured in the run and do not stop the grid. `jobs` > 1 runs cells on
// worker threads; results land at fixed positions so output order is stable.
inline std::vector<CellResult> ablate(const std::vector<GridCell>& cells, std::size_t seeds,
                                      const TrainData& data, std::size_t jobs = 1) {
  if (seeds == 0) throw Error("ablate: need at least one seed");
  std::vector<CellResult> results(cells.size());
  std::vector<std::pair<std::size_t, std::size_t>> work;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    results[c].cell = cells[c];
    results[c].runs.resize(seeds);
    for (std::size_t s = 0; s < seeds; ++s) work.emplace_back(c, s);
  }
  auto run_one = [&](std::size_t c, std::size_t s) {
    SeedRun& run = results[c].runs[s];
    TrainConfig cfg = cells[c].config;
    cfg.seed = cells[c].config.seed + s;
    run.seed = cfg.seed;
    try {
      auto out = train(cfg, data);
      run.final = out.final_record();
    } catch (const std::exception& e) {
      run.error = e.what();
    }
  };
  if (jobs <= 1) {
    for (auto [c, s] : work) run_one(c, s);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) {
      pool.emplace_back([&] {
        for (std::size_t k; (k = next++) < work.size();) run_one(work[k].first, work[k].second);
      });
    }
    for (auto& t : pool) t.join();
  }
  return results;
}

inline double per_class_metric(const MetricsRecord& r) { return r.target.per_class_accuracy; }
inline double accuracy_metric(const MetricsRecord& r) { return r.target.accuracy; }

// One row per cell: cell parameters, seed count, then mean and stderr of the
// target per-class accuracy and target accuracy.
inline std::string ablation_csv(const std::vector<CellResult>& results) {
  std::ostringstream os;
  std::vector<std::string> keys;
  for (const auto& r : results)
    for (const auto& [k, v] : r.cell.parameters)
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  os << "cell";
  for (const auto& k : keys) os << ',' << k;
  os << ",seeds,failed,per_class_accuracy_mean,per_class_accuracy_stderr,accuracy_mean,"
        "accuracy_stderr\n";
  for (const auto& r : results) {
    os << '"' << r.cell.name << '"';
    for (const auto& k : keys) {
      os << ',';
      for (const auto& [pk, pv] : r.cell.parameters)
        if (pk == k) os << pv;
    }
    const auto pc = cell_statistic(r, per_class_metric);
    const auto acc = cell_statistic(r, accuracy_metric);
    os << ',' << r.succeeded() << ',' << r.runs.size() - r.succeeded() << ','
       << format_double(pc.mean) << ',' << format_double(pc.stderr_) << ','
       << format_double(acc.mean) << ',' << format_double(acc.stderr_) << '\n';
  }
  return os.str();
}

}  // namespace ialign
