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

// ialign: command-line driver for data generation, training, evaluation,
// divergence probing and ablation grids.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "implicit_align/implicit_align.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ialign::cli {
namespace {

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory " + dir);
}

std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      out.push_back(std::stoul(item));
    } catch (const std::exception&) {
      throw Error("bad integer list '" + s + "'");
    }
  }
  return out;
}

// Largest label + 1 over a labeled dataset file.
std::size_t infer_num_classes(const std::string& path) {
  const auto ds = load_dataset(path, static_cast<std::size_t>(std::numeric_limits<int>::max()));
  const int top = *std::max_element(ds.labels.begin(), ds.labels.end());
  if (top < 0) throw DataError(path + ": no labeled rows to infer the class count from");
  return static_cast<std::size_t>(top) + 1;
}

// ---- gen-data --------------------------------------------------------------

struct GenFlags {
  std::uint64_t seed = 0;
  std::size_t classes = 10;
  std::size_t dim = 2;
  std::string shift = "none";
  std::string source_profile = "balanced";
  std::string target_profile = "balanced";
  std::size_t max_count = 100;
  std::optional<std::size_t> source_max;
  std::optional<std::size_t> target_max;
  double radius = 4.0;
  double sigma = 0.6;
  std::string out;
};

void run_gen_data(const GenFlags& f) {
  if (f.classes < 2) throw Error("--classes must be >= 2");
  ensure_dir(f.out);
  RunManifest manifest;
  manifest.command = "gen-data";
  manifest.seed = f.seed;
  manifest.config = {{"seed", f.seed},           {"classes", f.classes},
                     {"dim", f.dim},             {"shift", f.shift},
                     {"source_profile", f.source_profile},
                     {"target_profile", f.target_profile},
                     {"max_count", f.max_count}, {"radius", f.radius},
                     {"sigma", f.sigma}};
  if (f.source_max) manifest.config["source_max_count"] = *f.source_max;
  if (f.target_max) manifest.config["target_max_count"] = *f.target_max;
  const std::string manifest_path = join_path(f.out, "manifest.json");
  manifest.outputs = {{"source", join_path(f.out, "source.csv")},
                      {"target", join_path(f.out, "target.csv")},
                      {"target_labels", join_path(f.out, "target_labels.csv")}};
  manifest.write(manifest_path);
  try {
    GeneratorParams p;
    p.seed = f.seed;
    p.num_classes = f.classes;
    p.input_dim = f.dim;
    p.radius = f.radius;
    p.sigma = f.sigma;
    p.shift = parse_shift(f.shift);
    const auto sp = parse_profile(f.source_profile, f.classes, f.source_max.value_or(f.max_count));
    const auto tp = parse_profile(f.target_profile, f.classes, f.target_max.value_or(f.max_count));
    const auto pair = generate_domain_pair(p, sp, tp);
    save_dataset(pair.source, manifest.outputs["source"]);
    save_dataset(pair.target, manifest.outputs["target"]);
    save_labels(pair.target_labels, manifest.outputs["target_labels"]);
    manifest.config["generator"] = generator_manifest(pair);
    manifest.status = "complete";
    manifest.write(manifest_path);
  } catch (const std::exception& e) {
    manifest.status = "incomplete";
    manifest.error = e.what();
    manifest.write(manifest_path);
    throw;
  }
}

// ---- shared training options ----------------------------------------------

struct TrainFlags {
  std::string config_path;
  std::optional<std::string> source, target, target_labels;
  std::optional<std::string> objective, sampler, mask, variant;
  std::optional<double> eta, gamma, lr, lambda_max;
  std::optional<long long> steps, eval_period, warmup;
  std::optional<std::size_t> classes_per_batch, per_class, batch_size, refresh, num_classes;
  std::optional<std::size_t> feature_dim, head_hidden;
  std::optional<std::string> hidden;
  std::optional<std::uint64_t> seed;
  bool probe = false;
  bool linear_features = false;
  std::vector<std::string> overrides;
};

void add_train_options(CLI::App* app, TrainFlags& f) {
  app->add_option("--config", f.config_path, "JSON config with flat dotted keys, or a run manifest");
  app->add_option("--source", f.source, "labeled source CSV");
  app->add_option("--target", f.target, "unlabeled target CSV");
  app->add_option("--target-labels", f.target_labels, "evaluation-only target labels CSV");
  app->add_option("--objective", f.objective, "none | dann | mdd | mdd_masked | explicit_prototype");
  app->add_option("--sampler", f.sampler, "random | source_balanced | aligned | aligned_oracle");
  app->add_option("--mask", f.mask, "on | off: masked MDD")->check(CLI::IsMember({"on", "off"}));
  app->add_option("--prototype-variant", f.variant, "basic | moving_avg | curriculum");
  app->add_option("--eta", f.eta, "transfer loss weight");
  app->add_option("--gamma", f.gamma, "MDD margin factor");
  app->add_option("--lr", f.lr, "SGD learning rate");
  app->add_option("--lambda-max", f.lambda_max, "ceiling of the gradient reversal schedule");
  app->add_option("--steps", f.steps, "training steps");
  app->add_option("--eval-period", f.eval_period, "steps between metrics records");
  app->add_option("--warmup", f.warmup, "source-only steps before adaptation");
  app->add_option("--classes-per-batch,-N", f.classes_per_batch, "classes per minibatch (N)");
  app->add_option("--per-class,-K", f.per_class, "examples per class (K)");
  app->add_option("--batch-size", f.batch_size, "rows per domain for the random sampler");
  app->add_option("--refresh", f.refresh, "pseudo-label refresh period (U)");
  app->add_option("--num-classes", f.num_classes, "label space size (default: inferred)");
  app->add_option("--hidden", f.hidden, "feature extractor widths, e.g. 128,128");
  app->add_option("--feature-dim", f.feature_dim, "representation width");
  app->add_option("--head-hidden", f.head_hidden, "hidden width of the heads");
  app->add_option("--seed", f.seed, "run seed");
  app->add_flag("--linear-features", f.linear_features, "no relu on the representation");
  app->add_flag("--probe", f.probe, "log the minibatch divergence at each record");
  app->add_option("--set", f.overrides, "config override key=value (repeatable)");
}

struct ResolvedRun {
  TrainConfig config;
  std::string source, target, target_labels;
};

ResolvedRun resolve_train(const TrainFlags& f) {
  ResolvedRun r;
  json keys = json::object();
  std::map<std::string, std::string> recorded_inputs;
  if (!f.config_path.empty()) {
    const auto file = read_json_file(f.config_path);
    if (is_manifest(file)) {
      keys = file["config"];
      recorded_inputs = manifest_inputs(file);
    } else {
      keys = file;
    }
  }
  auto pick_path = [&](const std::optional<std::string>& flag, const char* role) {
    if (flag) return *flag;
    if (auto it = recorded_inputs.find(role); it != recorded_inputs.end()) return it->second;
    throw Error(std::string("missing --") + (std::string(role) == "target_labels"
                                                 ? "target-labels"
                                                 : role));
  };
  r.source = pick_path(f.source, "source");
  r.target = pick_path(f.target, "target");
  r.target_labels = pick_path(f.target_labels, "target_labels");

  if (f.objective) keys["objective.kind"] = *f.objective;
  if (f.sampler) keys["sampler"] = *f.sampler;
  if (f.variant) keys["objective.prototype.variant"] = *f.variant;
  if (f.eta) keys["objective.eta"] = *f.eta;
  if (f.gamma) keys["objective.gamma"] = *f.gamma;
  if (f.lr) keys["sgd.learning_rate"] = *f.lr;
  if (f.lambda_max) keys["lambda_max"] = *f.lambda_max;
  if (f.steps) keys["steps"] = *f.steps;
  if (f.eval_period) keys["eval_period"] = *f.eval_period;
  if (f.warmup) keys["warmup_steps"] = *f.warmup;
  if (f.classes_per_batch) keys["batch.classes"] = *f.classes_per_batch;
  if (f.per_class) keys["batch.per_class"] = *f.per_class;
  if (f.batch_size) keys["batch.size"] = *f.batch_size;
  if (f.refresh) keys["refresh_period"] = *f.refresh;
  if (f.num_classes) keys["model.num_classes"] = *f.num_classes;
  if (f.hidden) keys["model.hidden"] = parse_size_list(*f.hidden);
  if (f.feature_dim) keys["model.feature_dim"] = *f.feature_dim;
  if (f.head_hidden) keys["model.head_hidden"] = *f.head_hidden;
  if (f.seed) keys["seed"] = *f.seed;
  if (f.linear_features) keys["model.relu_features"] = false;
  if (f.probe) keys["probe_divergence"] = true;
  for (const auto& o : f.overrides) {
    auto [k, v] = parse_override(o);
    keys[k] = v;
  }

  std::vector<std::string> errors = apply_config_json(keys, r.config);
  if (f.mask) {
    const bool on = *f.mask == "on";
    auto& kind = r.config.objective.kind;
    if (kind == TransferKind::mdd || kind == TransferKind::mdd_masked)
      kind = on ? TransferKind::mdd_masked : TransferKind::mdd;
    else if (on)
      errors.push_back("--mask on applies only to the mdd objective");
  }
  if (!keys.contains("model.num_classes")) {
    try {
      r.config.model.num_classes = infer_num_classes(r.source);
    } catch (const std::exception& e) {
      errors.push_back(e.what());
    }
  }
  if (!keys.contains("model.input_dim")) {
    try {
      r.config.model.input_dim =
          load_dataset(r.source, std::numeric_limits<int>::max()).input_dim;
    } catch (const std::exception& e) {
      errors.push_back(e.what());
    }
  }
  for (auto& e : r.config.validate()) errors.push_back(std::move(e));
  if (!errors.empty()) {
    std::string msg = "invalid configuration (" + std::to_string(errors.size()) + " problems):";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw Error(msg);
  }
  return r;
}

struct LoadedData {
  Dataset source, target;
  std::vector<int> target_labels;
  TrainData view() const { return {&source, &target, &target_labels}; }
};

LoadedData load_data(const ResolvedRun& r) {
  LoadedData d;
  const std::size_t C = r.config.model.num_classes;
  d.source = load_dataset(r.source, C);
  d.target = load_dataset(r.target, C);
  d.target_labels = load_labels(r.target_labels, C);
  if (d.source.domain != Domain::source) throw DataError(r.source + " is not a source dataset");
  if (d.target.domain != Domain::target) throw DataError(r.target + " is not a target dataset");
  return d;
}

// ---- train -----------------------------------------------------------------

void run_train(const TrainFlags& f, const std::string& out) {
  const ResolvedRun r = resolve_train(f);
  ensure_dir(out);
  RunManifest manifest;
  manifest.command = "train";
  manifest.config = config_to_json(r.config);
  manifest.seed = r.config.seed;
  manifest.add_input("source", r.source);
  manifest.add_input("target", r.target);
  manifest.add_input("target_labels", r.target_labels);
  manifest.outputs = {{"metrics", join_path(out, "metrics.jsonl")},
                      {"summary", join_path(out, "summary.csv")},
                      {"checkpoint", join_path(out, "checkpoint.json")}};
  const std::string manifest_path = join_path(out, "manifest.json");
  manifest.write(manifest_path);
  try {
    const LoadedData data = load_data(r);
    std::ofstream metrics(manifest.outputs["metrics"], std::ios::binary | std::ios::trunc);
    if (!metrics) throw Error("cannot write " + manifest.outputs["metrics"]);
    auto result = train(r.config, data.view(), [&](const MetricsRecord& rec) {
      write_record_line(metrics, rec);
      metrics.flush();
    });
    write_text_file(manifest.outputs["summary"], summary_csv(r.config, result.final_record()));
    save_checkpoint(result.model, manifest.outputs["checkpoint"]);
    manifest.status = "complete";
    manifest.write(manifest_path);
    const auto& last = result.final_record();
    std::cout << "step " << last.step << ": source accuracy " << last.source_accuracy
              << ", target accuracy " << last.target.accuracy << ", per-class "
              << last.target.per_class_accuracy << "\n";
  } catch (const std::exception& e) {
    manifest.status = "incomplete";
    manifest.error = e.what();
    manifest.write(manifest_path);
    throw;
  }
}

// ---- eval ------------------------------------------------------------------

void run_eval(const std::string& checkpoint, const std::string& data_path,
              const std::string& labels_path, const std::string& out) {
  const AdaptationModel model = load_checkpoint(checkpoint);
  const std::size_t C = model.num_classes();
  const Dataset ds = load_dataset(data_path, C);
  if (ds.input_dim != model.config().input_dim) {
    throw ShapeError("checkpoint expects input_dim " + std::to_string(model.config().input_dim) +
                     " but " + data_path + " has " + std::to_string(ds.input_dim));
  }
  std::vector<int> truth;
  if (!labels_path.empty()) {
    truth = load_labels(labels_path, C);
  } else {
    truth = ds.labels;
    if (std::any_of(truth.begin(), truth.end(), [](int y) { return y < 0; }))
      throw DataError(data_path + " has unlabeled rows; pass --labels");
  }
  json j = metrics_json(evaluate(model, ds, truth));
  j["data"] = data_path;
  j["checkpoint"] = checkpoint;
  const std::string text = j.dump(2) + "\n";
  if (out.empty())
    std::cout << text;
  else
    write_text_file(out, text);
}

// ---- divergence ------------------------------------------------------------

struct DivFlags {
  std::string source, target, target_labels, checkpoint, out;
  std::string sampler = "random";
  std::string hypotheses = "label_oracle";
  std::size_t pairs = 100;
  std::size_t classes_per_batch = 5;
  std::size_t per_class = 4;
  std::uint64_t seed = 0;
  std::optional<std::size_t> num_classes;
};

HypothesisClass make_hypotheses(const std::string& spec, std::size_t C, std::size_t dim) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  if (kind == "label_oracle") {
    if (C > 10) throw Error("label_oracle hypotheses support at most 10 classes");
    return HypothesisClass::label_oracle(C, std::max<std::size_t>(kDefaultHypothesisCap,
                                                                   std::size_t{1} << C));
  }
  if (kind == "stumps") {
    std::size_t t = 16;
    if (colon != std::string::npos) t = std::stoul(spec.substr(colon + 1));
    return HypothesisClass::stumps(dim, t, -6.0, 6.0);
  }
  throw Error("unknown hypothesis family '" + spec + "' (label_oracle | stumps[:T])");
}

void run_divergence(const DivFlags& f) {
  const std::size_t C = f.num_classes ? *f.num_classes : infer_num_classes(f.source);
  const Dataset source = load_dataset(f.source, C);
  const Dataset target = load_dataset(f.target, C);
  const auto truth = load_labels(f.target_labels, C);
  if (truth.size() != target.size()) throw DataError("target label count does not match target");
  const SamplerKind kind = parse_sampler_kind(f.sampler);
  const auto hc = make_hypotheses(f.hypotheses, C, source.input_dim);
  const ClassIndex source_index(source.labels, C);
  const auto p = AlignmentDistribution::uniform(C);
  PseudoLabelCache cache;
  if (kind == SamplerKind::aligned_oracle) {
    install_pseudo_labels(cache, truth, C, 0);
  } else if (kind == SamplerKind::aligned) {
    if (f.checkpoint.empty()) throw Error("--sampler aligned needs --checkpoint for pseudo-labels");
    const auto model = load_checkpoint(f.checkpoint);
    if (model.num_classes() != C || model.config().input_dim != source.input_dim)
      throw ShapeError("checkpoint does not match the datasets");
    refresh_pseudo_labels(model, target, cache, 0);
  }
  Rng rng = Rng(f.seed).substream("divergence");
  const std::size_t m = f.classes_per_batch * f.per_class;
  json reports = json::array();
  double sum = 0.0, xi_a = 0.0, xi_m = 0.0;
  long long max_abs_mis = 0;
  for (std::size_t k = 0; k < f.pairs; ++k) {
    Minibatch b;
    switch (kind) {
      case SamplerKind::random: b = random_pair_batch(source, target, m, rng); break;
      case SamplerKind::source_balanced:
        b = source_balanced_batch(source, source_index, target, f.classes_per_batch, f.per_class,
                                  rng);
        break;
      default:
        b = build_aligned_minibatch(source, source_index, target, cache, p, f.classes_per_batch,
                                    f.per_class, rng);
    }
    const auto r = empirical_divergence(labeled_pair(b, source, target, truth), hc);
    sum += static_cast<double>(r.unnormalized);
    xi_a += static_cast<double>(r.xi_aligned);
    xi_m += static_cast<double>(r.xi_misaligned);
    max_abs_mis = std::max(max_abs_mis, std::llabs(r.xi_misaligned));
    reports.push_back(r);
  }
  const double n = static_cast<double>(f.pairs);
  json j = {{"sampler", f.sampler},
            {"hypotheses", f.hypotheses},
            {"hypothesis_count", hc.size()},
            {"pairs", f.pairs},
            {"mean_d_hat", sum / n},
            {"mean_xi_aligned", xi_a / n},
            {"mean_xi_misaligned", xi_m / n},
            {"max_abs_xi_misaligned", max_abs_mis},
            {"reports", reports}};
  const std::string text = j.dump(2) + "\n";
  if (f.out.empty())
    std::cout << text;
  else
    write_text_file(f.out, text);
}

// ---- ablate ----------------------------------------------------------------

void run_ablate(const TrainFlags& f, const std::string& grid, std::size_t seeds,
                std::size_t jobs, const std::string& out) {
  const ResolvedRun r = resolve_train(f);
  const auto cells = expand_grid(grid, r.config);
  ensure_dir(out);
  RunManifest manifest;
  manifest.command = "ablate";
  manifest.config = config_to_json(r.config);
  manifest.config["grid"] = grid;
  manifest.config["grid.seeds"] = seeds;
  manifest.seed = r.config.seed;
  manifest.add_input("source", r.source);
  manifest.add_input("target", r.target);
  manifest.add_input("target_labels", r.target_labels);
  manifest.outputs = {{"table", join_path(out, "ablation.csv")},
                      {"runs", join_path(out, "runs.jsonl")}};
  const std::string manifest_path = join_path(out, "manifest.json");
  manifest.write(manifest_path);
  try {
    const LoadedData data = load_data(r);
    const auto results = ablate(cells, seeds, data.view(), jobs);
    write_text_file(manifest.outputs["table"], ablation_csv(results));
    std::ofstream runs(manifest.outputs["runs"], std::ios::binary | std::ios::trunc);
    std::size_t failed = 0;
    for (const auto& c : results) {
      for (const auto& run : c.runs) {
        json j = {{"cell", c.cell.name}, {"seed", run.seed}};
        if (run.final) {
          j["final"] = record_json(*run.final);
        } else {
          j["error"] = run.error;
          ++failed;
        }
        runs << j.dump() << '\n';
      }
    }
    std::cout << ablation_csv(results);
    if (failed) {
      manifest.status = "incomplete";
      manifest.error = std::to_string(failed) + " grid runs failed; see runs.jsonl";
      manifest.write(manifest_path);
      throw Error(manifest.error);
    }
    manifest.status = "complete";
    manifest.write(manifest_path);
  } catch (const std::exception& e) {
    if (manifest.status == "running") {
      manifest.status = "incomplete";
      manifest.error = e.what();
      manifest.write(manifest_path);
    }
    throw;
  }
}

}  // namespace
}  // namespace ialign::cli

int main(int argc, char** argv) {
  using namespace ialign::cli;
  CLI::App app{"implicit class-conditioned domain alignment toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ialign::kToolVersion));

  GenFlags gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic source/target pair");
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--classes", gen.classes);
  gen_cmd->add_option("--dim", gen.dim);
  gen_cmd->add_option("--shift", gen.shift, "none or rot=..,tx=..,ty=..,scale=..,off=..");
  gen_cmd->add_option("--source-profile", gen.source_profile, "kind[:param][:rev]");
  gen_cmd->add_option("--target-profile", gen.target_profile, "kind[:param][:rev]");
  gen_cmd->add_option("--max-count", gen.max_count, "largest class size");
  gen_cmd->add_option("--source-max-count", gen.source_max);
  gen_cmd->add_option("--target-max-count", gen.target_max);
  gen_cmd->add_option("--radius", gen.radius);
  gen_cmd->add_option("--sigma", gen.sigma);
  gen_cmd->add_option("--out", gen.out, "output directory")->required();

  TrainFlags train_flags;
  std::string train_out;
  auto* train_cmd = app.add_subcommand("train", "train one model");
  add_train_options(train_cmd, train_flags);
  train_cmd->add_option("--out", train_out, "output directory")->required();

  std::string ev_ckpt, ev_data, ev_labels, ev_out;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", ev_ckpt)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ev_data)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--labels", ev_labels, "label file (default: labels in --data)")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", ev_out, "output JSON (default: stdout)");

  DivFlags div;
  auto* div_cmd = app.add_subcommand("divergence", "minibatch divergence report");
  div_cmd->add_option("--source", div.source)->required()->check(CLI::ExistingFile);
  div_cmd->add_option("--target", div.target)->required()->check(CLI::ExistingFile);
  div_cmd->add_option("--target-labels", div.target_labels)->required()->check(CLI::ExistingFile);
  div_cmd->add_option("--sampler", div.sampler,
                      "random | source_balanced | aligned | aligned_oracle");
  div_cmd->add_option("--checkpoint", div.checkpoint, "model for --sampler aligned");
  div_cmd->add_option("--hypotheses", div.hypotheses, "label_oracle | stumps[:T]");
  div_cmd->add_option("--pairs", div.pairs);
  div_cmd->add_option("--classes-per-batch,-N", div.classes_per_batch);
  div_cmd->add_option("--per-class,-K", div.per_class);
  div_cmd->add_option("--num-classes", div.num_classes);
  div_cmd->add_option("--seed", div.seed);
  div_cmd->add_option("--out", div.out, "output JSON (default: stdout)");

  TrainFlags ab_flags;
  std::string grid, ab_out;
  std::size_t seeds = 5, jobs = 1;
  auto* ab_cmd = app.add_subcommand("ablate", "run an ablation grid");
  add_train_options(ab_cmd, ab_flags);
  ab_cmd->add_option("--grid", grid,
                     "mask_sampling[:off_sampler] | samplers:a,b | refresh:u1,u2 | single")
      ->required();
  ab_cmd->add_option("--seeds", seeds, "seeds per cell");
  ab_cmd->add_option("--jobs", jobs, "worker threads");
  ab_cmd->add_option("--out", ab_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen_cmd) run_gen_data(gen);
    else if (*train_cmd) run_train(train_flags, train_out);
    else if (*eval_cmd) run_eval(ev_ckpt, ev_data, ev_labels, ev_out);
    else if (*div_cmd) run_divergence(div);
    else if (*ab_cmd) run_ablate(ab_flags, grid, seeds, jobs, ab_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
