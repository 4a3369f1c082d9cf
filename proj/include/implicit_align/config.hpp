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

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "implicit_align/error.hpp"
#include "implicit_align/rng.hpp"
#include "implicit_align/train.hpp"

namespace ialign {

inline constexpr const char* kToolVersion = "0.1.0";

// Flat dotted-key form of a TrainConfig, e.g. {"objective.eta": 1.0}.
inline nlohmann::json config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["steps"] = c.steps;
  j["batch.classes"] = c.classes_per_batch;
  j["batch.per_class"] = c.per_class;
  j["batch.size"] = c.batch_size;
  j["sampler"] = sampler_kind_name(c.sampler);
  j["objective.kind"] = transfer_kind_name(c.objective.kind);
  j["objective.eta"] = c.objective.eta;
  j["objective.gamma"] = c.objective.gamma;
  j["objective.prototype.variant"] = prototype_variant_name(c.objective.prototype.variant);
  j["objective.prototype.ema_decay"] = c.objective.prototype.ema_decay;
  j["objective.prototype.tau_start"] = c.objective.prototype.tau_start;
  j["objective.prototype.tau_end"] = c.objective.prototype.tau_end;
  j["sgd.learning_rate"] = c.sgd.learning_rate;
  j["sgd.momentum"] = c.sgd.momentum;
  j["sgd.weight_decay"] = c.sgd.weight_decay;
  j["sgd.nesterov"] = c.sgd.nesterov;
  j["refresh_period"] = c.refresh_period;
  j["eval_period"] = c.eval_period;
  j["seed"] = c.seed;
  j["model.input_dim"] = c.model.input_dim;
  j["model.num_classes"] = c.model.num_classes;
  j["model.hidden"] = c.model.hidden;
  j["model.feature_dim"] = c.model.feature_dim;
  j["model.head_hidden"] = c.model.head_hidden;
  j["model.relu_features"] = c.model.relu_features;
  j["min_classes"] = c.min_classes;
  j["warmup_steps"] = c.warmup_steps;
  j["lambda_max"] = c.lambda_max;
  j["alignment"] = c.alignment;
  j["probe_divergence"] = c.probe_divergence;
  return j;
}

namespace detail {

template <class T>
void read_key(const nlohmann::json& v, const std::string& key, T& out,
              std::vector<std::string>& errors) {
  try {
    out = v.get<T>();
  } catch (const nlohmann::json::exception&) {
    errors.push_back("config key '" + key + "' has the wrong type (" + v.dump() + ")");
  }
}

template <class Parse, class T>
void read_enum(const nlohmann::json& v, const std::string& key, T& out, Parse parse,
               std::vector<std::string>& errors) {
  if (!v.is_string()) {
    errors.push_back("config key '" + key + "' must be a string");
    return;
  }
  try {
    out = parse(v.get<std::string>());
  } catch (const Error& e) {
    errors.push_back("config key '" + key + "': " + e.what());
  }
}

inline bool non_negative_integer(const nlohmann::json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
}

}  // namespace detail

// Applies flat keys onto `c`. Unknown keys and type errors are collected,
// not thrown, so every problem can be reported at once.
inline std::vector<std::string> apply_config_json(const nlohmann::json& j, TrainConfig& c) {
  std::vector<std::string> errors;
  if (!j.is_object()) return {"config must be a JSON object"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const auto& v = it.value();
    auto size_key = [&](std::size_t& out) {
      if (!detail::non_negative_integer(v))
        errors.push_back("config key '" + k + "' must be a non-negative integer");
      else
        out = v.get<std::size_t>();
    };
    if (k == "steps") detail::read_key(v, k, c.steps, errors);
    else if (k == "batch.classes") size_key(c.classes_per_batch);
    else if (k == "batch.per_class") size_key(c.per_class);
    else if (k == "batch.size") size_key(c.batch_size);
    else if (k == "sampler") detail::read_enum(v, k, c.sampler, parse_sampler_kind, errors);
    else if (k == "objective.kind")
      detail::read_enum(v, k, c.objective.kind, parse_transfer_kind, errors);
    else if (k == "objective.eta") detail::read_key(v, k, c.objective.eta, errors);
    else if (k == "objective.gamma") detail::read_key(v, k, c.objective.gamma, errors);
    else if (k == "objective.prototype.variant")
      detail::read_enum(v, k, c.objective.prototype.variant, parse_prototype_variant, errors);
    else if (k == "objective.prototype.ema_decay")
      detail::read_key(v, k, c.objective.prototype.ema_decay, errors);
    else if (k == "objective.prototype.tau_start")
      detail::read_key(v, k, c.objective.prototype.tau_start, errors);
    else if (k == "objective.prototype.tau_end")
      detail::read_key(v, k, c.objective.prototype.tau_end, errors);
    else if (k == "sgd.learning_rate") detail::read_key(v, k, c.sgd.learning_rate, errors);
    else if (k == "sgd.momentum") detail::read_key(v, k, c.sgd.momentum, errors);
    else if (k == "sgd.weight_decay") detail::read_key(v, k, c.sgd.weight_decay, errors);
    else if (k == "sgd.nesterov") detail::read_key(v, k, c.sgd.nesterov, errors);
    else if (k == "refresh_period") size_key(c.refresh_period);
    else if (k == "eval_period") detail::read_key(v, k, c.eval_period, errors);
    else if (k == "seed") {
      if (!detail::non_negative_integer(v))
        errors.push_back("config key 'seed' must be a non-negative integer");
      else
        c.seed = v.get<std::uint64_t>();
    }
    else if (k == "model.input_dim") size_key(c.model.input_dim);
    else if (k == "model.num_classes") size_key(c.model.num_classes);
    else if (k == "model.hidden") detail::read_key(v, k, c.model.hidden, errors);
    else if (k == "model.feature_dim") size_key(c.model.feature_dim);
    else if (k == "model.head_hidden") size_key(c.model.head_hidden);
    else if (k == "model.relu_features") detail::read_key(v, k, c.model.relu_features, errors);
    else if (k == "min_classes") size_key(c.min_classes);
    else if (k == "warmup_steps") detail::read_key(v, k, c.warmup_steps, errors);
    else if (k == "lambda_max") detail::read_key(v, k, c.lambda_max, errors);
    else if (k == "alignment") detail::read_key(v, k, c.alignment, errors);
    else if (k == "probe_divergence") detail::read_key(v, k, c.probe_divergence, errors);
    else errors.push_back("unknown config key '" + k + "'");
  }
  return errors;
}

// Parses a command-line override "key=value". The value is read as JSON
// when possible (numbers, booleans, arrays) and as a string otherwise.
inline std::pair<std::string, nlohmann::json> parse_override(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw Error("override '" + s + "' is not key=value");
  const std::string key = s.substr(0, eq);
  const std::string raw = s.substr(eq + 1);
  nlohmann::json v = nlohmann::json::parse(raw, nullptr, false);
  if (v.is_discarded()) v = raw;
  return {key, v};
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << text;
  if (!out) throw Error("write failed for " + path);
}

inline nlohmann::json read_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error("malformed JSON in " + path);
  return j;
}

// 64-bit FNV-1a of a file's bytes as 16 hex digits.
inline std::string file_digest(const std::string& path) {
  const std::string bytes = read_text_file(path);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

inline constexpr const char* kManifestFormat = "ialign-manifest";

// Written before any work starts with status "running"; rewritten as
// "complete" or "incomplete" (with the error) when the command ends.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;   // role -> path
  std::map<std::string, std::string> digests;  // role -> digest
  std::map<std::string, std::string> outputs;  // role -> path
  std::string status = "running";
  std::string error;

  void add_input(const std::string& role, const std::string& path) {
    inputs[role] = path;
    digests[role] = file_digest(path);
  }

  nlohmann::json to_json() const {
    nlohmann::json in = nlohmann::json::object();
    for (const auto& [role, path] : inputs)
      in[role] = {{"path", path}, {"digest", digests.at(role)}};
    nlohmann::json j = {{"format", kManifestFormat},
                        {"tool", "ialign"},
                        {"version", kToolVersion},
                        {"command", command},
                        {"status", status},
                        {"seed", seed},
                        {"config", config},
                        {"inputs", in},
                        {"outputs", outputs}};
    if (!error.empty()) j["error"] = error;
    return j;
  }

  void write(const std::string& path) const { write_text_file(path, to_json().dump(2) + "\n"); }
};

inline bool is_manifest(const nlohmann::json& j) {
  return j.is_object() && j.value("format", "") == kManifestFormat;
}

// Config keys from a file: a manifest contributes its "config" object, any
// other JSON object is taken as flat keys directly.
inline nlohmann::json config_keys_from_file(const std::string& path) {
  auto j = read_json_file(path);
  if (is_manifest(j)) {
    if (!j.contains("config") || !j["config"].is_object())
      throw Error("manifest " + path + " has no config object");
    return j["config"];
  }
  return j;
}

// Input paths recorded in a manifest, verified against their digests.
inline std::map<std::string, std::string> manifest_inputs(const nlohmann::json& manifest) {
  std::map<std::string, std::string> out;
  if (!manifest.contains("inputs")) return out;
  for (auto it = manifest["inputs"].begin(); it != manifest["inputs"].end(); ++it) {
    const std::string path = it.value().value("path", "");
    const std::string digest = it.value().value("digest", "");
    if (file_digest(path) != digest)
      throw Error("input '" + it.key() + "' (" + path + ") changed since the manifest was written");
    out[it.key()] = path;
  }
  return out;
}

}  // namespace ialign
