// Copyright 2026 The UAST Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "uast/dataset.hpp"
#include "uast/error.hpp"
#include "uast/rng.hpp"
#include "uast/selftrain.hpp"

namespace uast {

enum class SyntheticKind { two_moons, blobs };

inline SyntheticKind parse_synthetic_kind(const std::string& s) {
  if (s == "two_moons") return SyntheticKind::two_moons;
  if (s == "blobs") return SyntheticKind::blobs;
  throw UsageError("unknown dataset kind '" + s + "' (two_moons|blobs)");
}

inline const char* to_string(SyntheticKind k) { return k == SyntheticKind::two_moons ? "two_moons" : "blobs"; }

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::two_moons;
  std::size_t n_source = 500;
  std::size_t n_target = 500;
  double rotation_deg = 30.0;        // about the origin, in the (x0, x1) plane
  std::vector<double> translation;   // empty = none; else one entry per dim
  double noise = 0.1;                // isotropic Gaussian std
  std::size_t dim = 2;               // blobs only; two_moons is 2-D
  int classes = 2;                   // blobs only; two_moons has 2
  double center_box = 4.0;           // blobs: centers ~ U[-box, box]^dim

  std::size_t resolved_dim() const { return kind == SyntheticKind::two_moons ? 2 : dim; }
  int resolved_classes() const { return kind == SyntheticKind::two_moons ? 2 : classes; }
};

// Untransformed generator positions for `n` points from stream `rng`; row i
// has label labels[i]. `centers` is only read for blobs.
inline Dataset draw_points(const SyntheticSpec& spec, const Matrix& centers, SeededRng& rng, std::size_t n) {
  const std::size_t d = spec.resolved_dim();
  const int c = spec.resolved_classes();
  Dataset out;
  out.class_count = c;
  out.features = Matrix(n, d);
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % static_cast<std::size_t>(c));
    out.labels[i] = y;
    auto row = out.features.row(i);
    if (spec.kind == SyntheticKind::two_moons) {
      const double t = rng.uniform(0.0, std::numbers::pi);
      if (y == 0) {
        row[0] = std::cos(t);
        row[1] = std::sin(t);
      } else {
        row[0] = 1.0 - std::cos(t);
        row[1] = 0.5 - std::sin(t);
      }
    } else {
      for (std::size_t j = 0; j < d; ++j) row[j] = centers(static_cast<std::size_t>(y), j);
    }
    for (double& v : row) v += spec.noise * rng.normal();
  }
  return out;
}

inline void apply_shift(const SyntheticSpec& spec, Matrix& x) {
  const double a = spec.rotation_deg * std::numbers::pi / 180.0;
  const double ca = std::cos(a);
  const double sa = std::sin(a);
  if (!spec.translation.empty() && spec.translation.size() != x.cols()) {
    throw ParameterError("translation has " + std::to_string(spec.translation.size()) +
                         " entries, data has " + std::to_string(x.cols()) + " dims");
  }
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = x.row(i);
    if (spec.rotation_deg != 0.0) {
      const double u = row[0];
      const double v = row[1];
      row[0] = ca * u - sa * v;
      row[1] = sa * u + ca * v;
    }
    for (std::size_t j = 0; j < spec.translation.size(); ++j) row[j] += spec.translation[j];
  }
}

inline Matrix blob_centers(const SyntheticSpec& spec, std::uint64_t seed) {
  SeededRng rng(SeededRng::split_seed(seed, 0));
  const auto c = static_cast<std::size_t>(spec.resolved_classes());
  Matrix centers(c, spec.resolved_dim());
  for (double& v : centers.data()) v = rng.uniform(-spec.center_box, spec.center_box);
  return centers;
}

// Source split from stream 1, target (unlabeled) from stream 2, held-out
// target test split from stream 3. Target streams pass through the shift.
inline DomainSplits gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.n_source < 4 || spec.n_target < 4) throw ParameterError("gen: n_source and n_target must be >= 4");
  if (!(spec.noise >= 0.0)) throw ParameterError("gen: noise must be >= 0");
  if (spec.kind == SyntheticKind::blobs && (spec.dim < 2 || spec.classes < 2)) {
    throw ParameterError("gen: blobs need dim >= 2 and classes >= 2");
  }
  const Matrix centers = spec.kind == SyntheticKind::blobs ? blob_centers(spec, seed) : Matrix();
  SeededRng source_rng(SeededRng::split_seed(seed, 1));
  SeededRng target_rng(SeededRng::split_seed(seed, 2));
  SeededRng test_rng(SeededRng::split_seed(seed, 3));

  DomainSplits out;
  out.labeled = draw_points(spec, centers, source_rng, spec.n_source);
  out.unlabeled = draw_points(spec, centers, target_rng, spec.n_target);
  out.test = draw_points(spec, centers, test_rng, spec.n_target);
  apply_shift(spec, out.unlabeled.features);
  apply_shift(spec, out.test.features);
  std::fill(out.unlabeled.labels.begin(), out.unlabeled.labels.end(), kUnlabeled);
  return out;
}

// ---- CSV ----------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Header f0..f{d-1}[,label]; values with 17 significant digits; -1 marks an
// unlabeled row.
inline std::string to_csv(const Dataset& data, bool with_labels) {
  std::string out;
  for (std::size_t j = 0; j < data.dim(); ++j) {
    if (j) out += ',';
    out += "f" + std::to_string(j);
  }
  if (with_labels) out += ",label";
  out += '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.dim(); ++j) {
      if (j) out += ',';
      out += format_double(data.features(i, j));
    }
    if (with_labels) out += "," + std::to_string(data.labels[i]);
    out += '\n';
  }
  return out;
}

inline void write_csv(const std::string& path, const Dataset& data, bool with_labels) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << to_csv(data, with_labels);
  if (!out) throw IoError("short write to " + path);
}

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line_no, const std::string& source) {
  field = trim(field);
  T value{};
  const auto* end = field.data() + field.size();
  const auto res = std::from_chars(field.data(), end, value);
  if (field.empty() || res.ec != std::errc() || res.ptr != end) {
    throw ParseError(source + ":" + std::to_string(line_no) + ": not a number: '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace detail

// Parses CSV text. class_count is `declared_classes` when given (labels at or
// above it are a consistency error), else 1 + the largest label.
inline Dataset parse_csv(std::string_view text, std::optional<int> declared_classes = std::nullopt,
                         const std::string& source = "<csv>") {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  if (lines.empty()) throw ParseError(source + ": empty file");

  const auto header = detail::split_fields(lines[0]);
  std::size_t d = 0;
  bool has_label = false;
  for (std::size_t j = 0; j < header.size(); ++j) {
    const auto name = detail::trim(header[j]);
    if (name == "label" && j + 1 == header.size()) {
      has_label = true;
    } else if (name == "f" + std::to_string(j)) {
      ++d;
    } else {
      throw ParseError(source + ":1: unexpected column '" + std::string(name) + "' (want f" + std::to_string(j) +
                       " or trailing label)");
    }
  }
  if (d == 0) throw ParseError(source + ":1: no feature columns");

  std::vector<double> values;
  std::vector<int> labels;
  int max_label = -1;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty()) continue;
    const auto fields = detail::split_fields(lines[i]);
    if (fields.size() != header.size()) {
      throw ParseError(source + ":" + std::to_string(i + 1) + ": expected " + std::to_string(header.size()) +
                       " fields, got " + std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < d; ++j) {
      const double v = detail::parse_number<double>(fields[j], i + 1, source);
      if (!std::isfinite(v)) throw ParseError(source + ":" + std::to_string(i + 1) + ": non-finite value");
      values.push_back(v);
    }
    int y = kUnlabeled;
    if (has_label) {
      y = detail::parse_number<int>(fields[d], i + 1, source);
      if (y < kUnlabeled) throw ParseError(source + ":" + std::to_string(i + 1) + ": label must be >= -1");
      if (declared_classes && y >= *declared_classes) {
        throw ConsistencyError(source + ":" + std::to_string(i + 1) + ": label " + std::to_string(y) +
                               " >= declared class count " + std::to_string(*declared_classes));
      }
      max_label = std::max(max_label, y);
    }
    labels.push_back(y);
  }
  Dataset out;
  out.features = Matrix(labels.size(), d, std::move(values));
  out.labels = std::move(labels);
  out.class_count = declared_classes ? *declared_classes : max_label + 1;
  return out;
}

inline Dataset load_csv(const std::string& path, std::optional<int> declared_classes = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), declared_classes, path);
}

}  // namespace uast
