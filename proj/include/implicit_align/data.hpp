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
#include <cstdio>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "implicit_align/error.hpp"
#include "implicit_align/rng.hpp"
#include "implicit_align/tensor.hpp"

namespace ialign {

enum class Domain { source, target };

inline const char* domain_name(Domain d) {
  return d == Domain::source ? "source" : "target";
}

struct ExampleView {
  std::span<const double> features;
  int label;  // -1 when unlabeled
  Domain domain;
};

// Examples of one domain stored as a row-major feature matrix. Target
// datasets used for training carry label -1 everywhere; their ground truth
// travels separately and is only read by evaluation.
struct Dataset {
  Domain domain = Domain::source;
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }

  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * input_dim, input_dim};
  }
  ExampleView example(std::size_t i) const { return {row(i), labels[i], domain}; }

  Tensor rows(std::span<const std::size_t> index) const {
    std::vector<double> out;
    out.reserve(index.size() * input_dim);
    for (std::size_t i : index) {
      auto r = row(i);
      out.insert(out.end(), r.begin(), r.end());
    }
    return Tensor::from({index.size(), input_dim}, std::move(out));
  }

  void push_back(std::span<const double> x, int label) {
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// For each label, the indices of examples carrying it. Unlabeled (-1)
// examples are skipped.
class ClassIndex {
 public:
  ClassIndex() = default;
  ClassIndex(std::span<const int> labels, std::size_t num_classes)
      : buckets_(num_classes) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const int y = labels[i];
      if (y < 0) continue;
      if (static_cast<std::size_t>(y) >= num_classes) {
        throw DataError("label " + std::to_string(y) + " out of range for " +
                        std::to_string(num_classes) + " classes");
      }
      buckets_[y].push_back(i);
    }
  }

  std::size_t num_classes() const { return buckets_.size(); }
  const std::vector<std::size_t>& bucket(std::size_t label) const {
    return buckets_.at(label);
  }
  std::size_t count(std::size_t label) const { return buckets_.at(label).size(); }
  std::size_t live_classes() const {
    return std::count_if(buckets_.begin(), buckets_.end(),
                         [](const auto& b) { return !b.empty(); });
  }

 private:
  std::vector<std::vector<std::size_t>> buckets_;
};

// ---- label profiles -----------------------------------------------------

enum class ProfileKind { balanced, mild, extreme, rs_ut_source, rs_ut_target };

inline const char* profile_kind_name(ProfileKind k) {
  switch (k) {
    case ProfileKind::balanced: return "balanced";
    case ProfileKind::mild: return "mild";
    case ProfileKind::extreme: return "extreme";
    case ProfileKind::rs_ut_source: return "rs_ut_source";
    case ProfileKind::rs_ut_target: return "rs_ut_target";
  }
  return "?";
}

inline ProfileKind parse_profile_kind(const std::string& s) {
  for (auto k : {ProfileKind::balanced, ProfileKind::mild, ProfileKind::extreme,
                 ProfileKind::rs_ut_source, ProfileKind::rs_ut_target}) {
    if (s == profile_kind_name(k)) return k;
  }
  throw Error("unknown label profile '" + s + "'");
}

inline double default_profile_parameter(ProfileKind k) {
  switch (k) {
    case ProfileKind::mild: return 3.0;
    case ProfileKind::extreme:
    case ProfileKind::rs_ut_source:
    case ProfileKind::rs_ut_target: return 1.5;
    default: return 0.0;
  }
}

struct LabelProfile {
  ProfileKind kind = ProfileKind::balanced;
  double parameter = 0.0;  // max:min ratio for mild, tail exponent otherwise
  bool reversed = false;
  std::vector<std::size_t> counts;

  std::size_t total() const {
    std::size_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
};

// Reverses the class-rank order of the counts.
inline LabelProfile reverse_profile(LabelProfile p) {
  std::reverse(p.counts.begin(), p.counts.end());
  p.reversed = !p.reversed;
  return p;
}

// Per-class counts by class rank r = 0..C-1:
//   balanced  max_count
//   mild      floor of a linear ramp from max_count to max_count / ratio
//   extreme   floor(max_count * (r + 1)^-alpha), at least 2
//   rs_ut_*   the extreme law; the source variant in reversed rank order
inline LabelProfile make_profile(ProfileKind kind, std::size_t num_classes,
                                 std::size_t max_count,
                                 std::optional<double> parameter = std::nullopt) {
  if (num_classes < 2) throw Error("profile needs at least 2 classes");
  if (max_count < num_classes) {
    throw Error("profile max_count " + std::to_string(max_count) +
                " is smaller than the class count " + std::to_string(num_classes));
  }
  LabelProfile p;
  p.kind = kind;
  p.parameter = parameter.value_or(default_profile_parameter(kind));
  p.counts.resize(num_classes);
  const double top = static_cast<double>(max_count);
  switch (kind) {
    case ProfileKind::balanced:
      std::fill(p.counts.begin(), p.counts.end(), max_count);
      break;
    case ProfileKind::mild: {
      const double ratio = p.parameter;
      if (!(ratio >= 1.0)) throw Error("mild profile ratio must be >= 1");
      const double bottom = top / ratio;
      for (std::size_t r = 0; r < num_classes; ++r) {
        const double t = static_cast<double>(r) / static_cast<double>(num_classes - 1);
        const double v = top - (top - bottom) * t;
        p.counts[r] = std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(v + 1e-9)));
      }
      break;
    }
    case ProfileKind::extreme:
    case ProfileKind::rs_ut_source:
    case ProfileKind::rs_ut_target: {
      const double alpha = p.parameter;
      if (!(alpha > 0.0)) throw Error("extreme profile exponent must be > 0");
      for (std::size_t r = 0; r < num_classes; ++r) {
        const double v = top * std::pow(static_cast<double>(r + 1), -alpha);
        p.counts[r] = std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(v + 1e-9)));
      }
      if (kind == ProfileKind::rs_ut_source) {
        std::reverse(p.counts.begin(), p.counts.end());
        p.reversed = true;
      }
      break;
    }
  }
  return p;
}

// Parses "kind[:parameter][:rev]", e.g. "extreme:1.5", "mild:3:rev".
inline LabelProfile parse_profile(const std::string& spec, std::size_t num_classes,
                                  std::size_t max_count) {
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  for (std::string item; std::getline(ss, item, ':');) parts.push_back(item);
  if (parts.empty()) throw Error("empty profile spec");
  const ProfileKind kind = parse_profile_kind(parts[0]);
  std::optional<double> param;
  bool rev = false;
  for (std::size_t i = 1; i < parts.size(); ++i) {
    if (parts[i] == "rev") {
      rev = true;
    } else {
      try {
        param = std::stod(parts[i]);
      } catch (const std::exception&) {
        throw Error("bad profile parameter '" + parts[i] + "' in '" + spec + "'");
      }
    }
  }
  auto p = make_profile(kind, num_classes, max_count, param);
  return rev ? reverse_profile(std::move(p)) : p;
}

// ---- synthetic domain pairs --------------------------------------------

// Transform carrying source blobs to target blobs in the class plane:
// x_T = scale * R(rotation) x_S + translation. `offset` translates along a
// fixed direction orthogonal to the class plane (input_dim >= 3 only).
struct ShiftSpec {
  double rotation_deg = 0.0;
  double translate_x = 0.0;
  double translate_y = 0.0;
  double scale = 1.0;
  double offset = 0.0;

  bool is_identity() const {
    return rotation_deg == 0.0 && translate_x == 0.0 && translate_y == 0.0 &&
           scale == 1.0 && offset == 0.0;
  }
};

// Parses "rot=30,tx=1,ty=0,scale=1,off=0"; "none" is the identity.
inline ShiftSpec parse_shift(const std::string& spec) {
  ShiftSpec s;
  if (spec.empty() || spec == "none") return s;
  std::stringstream ss(spec);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error("bad shift term '" + item + "'");
    const std::string key = item.substr(0, eq);
    double v;
    try {
      v = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw Error("bad shift value in '" + item + "'");
    }
    if (key == "rot") s.rotation_deg = v;
    else if (key == "tx") s.translate_x = v;
    else if (key == "ty") s.translate_y = v;
    else if (key == "scale") s.scale = v;
    else if (key == "off") s.offset = v;
    else throw Error("unknown shift key '" + key + "'");
  }
  return s;
}

inline std::string shift_string(const ShiftSpec& s) {
  std::ostringstream os;
  os.precision(17);
  os << "rot=" << s.rotation_deg << ",tx=" << s.translate_x
     << ",ty=" << s.translate_y << ",scale=" << s.scale;
  if (s.offset != 0.0) os << ",off=" << s.offset;
  return os.str();
}

struct GeneratorParams {
  std::uint64_t seed = 0;
  std::size_t num_classes = 10;
  std::size_t input_dim = 2;
  double radius = 4.0;
  double sigma = 0.6;
  ShiftSpec shift;
};

struct DomainPair {
  Dataset source;
  Dataset target;                  // labels hidden (-1)
  std::vector<int> target_labels;  // evaluation channel only
  LabelProfile source_profile;
  LabelProfile target_profile;
  GeneratorParams params;
};

namespace detail {

// Random orthonormal [dim, 2] embedding via Gram-Schmidt on Gaussian columns.
inline std::vector<double> orthonormal_embedding(std::size_t dim, Rng& rng) {
  std::vector<double> q(dim * 2);
  for (int attempt = 0;; ++attempt) {
    for (double& v : q) v = rng.normal();
    auto col = [&](int c, std::size_t r) -> double& { return q[r * 2 + c]; };
    double n0 = 0.0;
    for (std::size_t r = 0; r < dim; ++r) n0 += col(0, r) * col(0, r);
    n0 = std::sqrt(n0);
    for (std::size_t r = 0; r < dim; ++r) col(0, r) /= n0;
    double dot = 0.0;
    for (std::size_t r = 0; r < dim; ++r) dot += col(0, r) * col(1, r);
    for (std::size_t r = 0; r < dim; ++r) col(1, r) -= dot * col(0, r);
    double n1 = 0.0;
    for (std::size_t r = 0; r < dim; ++r) n1 += col(1, r) * col(1, r);
    n1 = std::sqrt(n1);
    if (n1 > 1e-8 || attempt > 16) {
      for (std::size_t r = 0; r < dim; ++r) col(1, r) /= n1;
      return q;
    }
  }
}

// Unit vector orthogonal to both columns of `embedding`.
inline std::vector<double> orthogonal_direction(const std::vector<double>& embedding,
                                                std::size_t dim, Rng& rng) {
  std::vector<double> u(dim);
  for (int attempt = 0;; ++attempt) {
    for (double& v : u) v = rng.normal();
    for (int c = 0; c < 2; ++c) {
      double dot = 0.0;
      for (std::size_t r = 0; r < dim; ++r) dot += embedding[r * 2 + c] * u[r];
      for (std::size_t r = 0; r < dim; ++r) u[r] -= dot * embedding[r * 2 + c];
    }
    double n = 0.0;
    for (double v : u) n += v * v;
    n = std::sqrt(n);
    if (n > 1e-8 || attempt > 16) {
      for (double& v : u) v /= n;
      return u;
    }
  }
}

inline Dataset sample_domain(Domain domain, const GeneratorParams& p,
                             const LabelProfile& profile, bool apply_shift,
                             const std::vector<double>& embedding,
                             const std::vector<double>& offset_dir, Rng& rng,
                             bool hide_labels, std::vector<int>* hidden) {
  const double theta = p.shift.rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  Dataset ds;
  ds.domain = domain;
  ds.input_dim = p.input_dim;
  ds.num_classes = p.num_classes;
  std::vector<std::pair<std::vector<double>, int>> rows;
  for (std::size_t j = 0; j < p.num_classes; ++j) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(j) /
                         static_cast<double>(p.num_classes);
    const double mx = p.radius * std::cos(angle), my = p.radius * std::sin(angle);
    for (std::size_t i = 0; i < profile.counts[j]; ++i) {
      double x = mx + p.sigma * rng.normal();
      double y = my + p.sigma * rng.normal();
      if (apply_shift) {
        const double rx = c * x - s * y, ry = s * x + c * y;
        x = p.shift.scale * rx + p.shift.translate_x;
        y = p.shift.scale * ry + p.shift.translate_y;
      }
      std::vector<double> f;
      if (p.input_dim == 2) {
        f = {x, y};
      } else {
        f.resize(p.input_dim);
        for (std::size_t r = 0; r < p.input_dim; ++r)
          f[r] = embedding[r * 2] * x + embedding[r * 2 + 1] * y;
        if (apply_shift && p.shift.offset != 0.0) {
          for (std::size_t r = 0; r < p.input_dim; ++r) f[r] += p.shift.offset * offset_dir[r];
        }
      }
      rows.emplace_back(std::move(f), static_cast<int>(j));
    }
  }
  // Fisher-Yates with the domain stream so example order carries no label info.
  for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[rng.below(i)]);
  for (auto& [f, y] : rows) {
    ds.push_back(f, hide_labels ? -1 : y);
    if (hidden) hidden->push_back(y);
  }
  return ds;
}

}  // namespace detail

// Gaussian blobs with class means evenly spaced on a circle; the target
// domain applies `shift` to the source geometry. Reproducible from params.
inline DomainPair generate_domain_pair(const GeneratorParams& params,
                                       const LabelProfile& source_profile,
                                       const LabelProfile& target_profile) {
  if (params.num_classes < 2) throw Error("need at least 2 classes");
  if (params.input_dim < 2) throw Error("input_dim must be at least 2");
  if (source_profile.counts.size() != params.num_classes ||
      target_profile.counts.size() != params.num_classes) {
    throw Error("label profile length does not match num_classes " +
                std::to_string(params.num_classes));
  }
  const auto& sh = params.shift;
  if (!std::isfinite(sh.rotation_deg) || !std::isfinite(sh.translate_x) ||
      !std::isfinite(sh.translate_y) || !std::isfinite(sh.scale) || sh.scale == 0.0 ||
      !std::isfinite(sh.offset)) {
    throw Error("degenerate shift spec " + shift_string(sh));
  }
  if (sh.offset != 0.0 && params.input_dim < 3) {
    throw Error("off-plane shift needs input_dim >= 3");
  }
  Rng root = Rng(params.seed).substream("data");
  Rng embed_rng = root.substream("embedding");
  Rng src_rng = root.substream("source");
  Rng tgt_rng = root.substream("target");
  std::vector<double> embedding;
  if (params.input_dim > 2) embedding = detail::orthonormal_embedding(params.input_dim, embed_rng);
  std::vector<double> offset_dir;
  if (sh.offset != 0.0) {
    Rng offset_rng = root.substream("offset");
    offset_dir = detail::orthogonal_direction(embedding, params.input_dim, offset_rng);
  }

  DomainPair pair;
  pair.params = params;
  pair.source_profile = source_profile;
  pair.target_profile = target_profile;
  pair.source = detail::sample_domain(Domain::source, params, source_profile, false,
                                      embedding, offset_dir, src_rng, false, nullptr);
  pair.target = detail::sample_domain(Domain::target, params, target_profile, true,
                                      embedding, offset_dir, tgt_rng, true, &pair.target_labels);
  return pair;
}

inline nlohmann::json generator_manifest(const DomainPair& pair) {
  auto profile_json = [](const LabelProfile& p) {
    return nlohmann::json{{"kind", profile_kind_name(p.kind)},
                          {"parameter", p.parameter},
                          {"reversed", p.reversed},
                          {"counts", p.counts}};
  };
  const auto& p = pair.params;
  return {{"seed", p.seed},
          {"num_classes", p.num_classes},
          {"input_dim", p.input_dim},
          {"radius", p.radius},
          {"sigma", p.sigma},
          {"shift", shift_string(p.shift)},
          {"source_profile", profile_json(pair.source_profile)},
          {"target_profile", profile_json(pair.target_profile)},
          {"source_size", pair.source.size()},
          {"target_size", pair.target.size()}};
}

// ---- CSV ----------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset " + path);
  out << "domain,label";
  for (std::size_t j = 0; j < ds.input_dim; ++j) out << ",f" << j;
  out << "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << domain_name(ds.domain) << "," << ds.labels[i];
    for (double v : ds.row(i)) out << "," << format_double(v);
    out << "\n";
  }
  if (!out) throw DataError("failed writing dataset " + path);
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace detail

// Reads a dataset CSV; labels must be -1 or lie in [0, num_classes).
inline Dataset load_dataset(const std::string& path, std::size_t num_classes) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read dataset " + path);
  std::string line;
  if (!std::getline(in, line) || line.empty()) {
    throw DataError("empty dataset file " + path);
  }
  auto header = detail::split_csv(line);
  if (header.size() < 3 || header[0] != "domain" || header[1] != "label") {
    throw DataError(path + ": header must be domain,label,f0,...");
  }
  Dataset ds;
  ds.input_dim = header.size() - 2;
  ds.num_classes = num_classes;
  bool first = true;
  std::size_t row = 1;
  std::vector<double> x(ds.input_dim);
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = detail::split_csv(line);
    if (cells.size() != header.size()) {
      throw DataError(path + ": row " + std::to_string(row) + " has " +
                      std::to_string(cells.size()) + " fields, expected " +
                      std::to_string(header.size()));
    }
    Domain d;
    if (cells[0] == "source") d = Domain::source;
    else if (cells[0] == "target") d = Domain::target;
    else throw DataError(path + ": row " + std::to_string(row) + " has unknown domain '" + cells[0] + "'");
    if (first) {
      ds.domain = d;
      first = false;
    } else if (d != ds.domain) {
      throw DataError(path + ": row " + std::to_string(row) + " mixes domains");
    }
    int label;
    try {
      std::size_t pos = 0;
      label = std::stoi(cells[1], &pos);
      if (pos != cells[1].size()) throw std::invalid_argument("trailing");
      for (std::size_t j = 0; j < ds.input_dim; ++j) {
        x[j] = std::stod(cells[j + 2], &pos);
        if (pos != cells[j + 2].size()) throw std::invalid_argument("trailing");
      }
    } catch (const std::exception&) {
      throw DataError(path + ": row " + std::to_string(row) + " is not numeric");
    }
    if (label < -1 || label >= static_cast<int>(num_classes)) {
      throw DataError(path + ": row " + std::to_string(row) + " label " +
                      std::to_string(label) + " out of range for " +
                      std::to_string(num_classes) + " classes");
    }
    ds.push_back(x, label);
  }
  if (ds.empty()) throw DataError("empty dataset file " + path);
  return ds;
}

// Evaluation-only label file: header "index,label".
inline void save_labels(std::span<const int> labels, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write labels " + path);
  out << "index,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out << i << "," << labels[i] << "\n";
  if (!out) throw DataError("failed writing labels " + path);
}

inline std::vector<int> load_labels(const std::string& path, std::size_t num_classes) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read labels " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("index,label", 0) != 0) {
    throw DataError(path + ": header must be index,label");
  }
  std::vector<int> labels;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = detail::split_csv(line);
    if (cells.size() != 2) throw DataError(path + ": row " + std::to_string(row) + " is ragged");
    int idx, y;
    try {
      idx = std::stoi(cells[0]);
      y = std::stoi(cells[1]);
    } catch (const std::exception&) {
      throw DataError(path + ": row " + std::to_string(row) + " is not numeric");
    }
    if (idx != static_cast<int>(labels.size())) {
      throw DataError(path + ": row " + std::to_string(row) + " index out of sequence");
    }
    if (y < 0 || y >= static_cast<int>(num_classes)) {
      throw DataError(path + ": row " + std::to_string(row) + " label " +
                      std::to_string(y) + " out of range");
    }
    labels.push_back(y);
  }
  if (labels.empty()) throw DataError("empty label file " + path);
  return labels;
}

}  // namespace ialign
