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

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "uast/error.hpp"
#include "uast/matrix.hpp"

namespace uast {

inline constexpr int kUnlabeled = -1;

// Feature rows plus one label slot per row. Labeled and unlabeled rows may
// share a dataset; the label slot holds kUnlabeled for the latter.
struct Dataset {
  Matrix features;
  std::vector<int> labels;
  int class_count = 0;

  std::size_t size() const noexcept { return features.rows(); }
  std::size_t dim() const noexcept { return features.cols(); }
  bool is_labeled(std::size_t i) const { return labels[i] != kUnlabeled; }

  std::vector<std::size_t> labeled_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] != kUnlabeled) out.push_back(i);
    return out;
  }

  std::vector<std::size_t> unlabeled_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == kUnlabeled) out.push_back(i);
    return out;
  }

  Dataset subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.class_count = class_count;
    out.features = Matrix(rows.size(), dim());
    out.labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::copy_n(features.row(rows[i]).begin(), dim(), out.features.row(i).begin());
      out.labels.push_back(labels[rows[i]]);
    }
    return out;
  }

  void validate() const {
    if (labels.size() != features.rows()) {
      throw ShapeError("dataset has " + std::to_string(features.rows()) + " rows but " +
                       std::to_string(labels.size()) + " labels");
    }
    if (class_count < 1) throw ConsistencyError("dataset class_count must be >= 1");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const int y = labels[i];
      if (y != kUnlabeled && (y < 0 || y >= class_count)) {
        throw ConsistencyError("label " + std::to_string(y) + " at row " + std::to_string(i) +
                               " outside [0, " + std::to_string(class_count) + ")");
      }
    }
    if (!all_finite(features)) throw NumericError("dataset contains non-finite features");
  }
};

// Stacks a over b (same column count, same class count).
inline Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.dim() != b.dim()) throw ShapeError("concat: feature dimensions differ");
  Dataset out;
  out.class_count = std::max(a.class_count, b.class_count);
  std::vector<double> values(a.features.values());
  values.insert(values.end(), b.features.values().begin(), b.features.values().end());
  out.features = Matrix(a.size() + b.size(), a.dim(), std::move(values));
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  return out;
}

// N x C one-hot encoding; unlabeled rows become all-zero rows.
inline Matrix one_hot(std::span<const int> labels, int class_count) {
  Matrix out(labels.size(), static_cast<std::size_t>(class_count));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kUnlabeled) continue;
    if (labels[i] < 0 || labels[i] >= class_count) throw ContractError("one_hot: label out of range");
    out(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return out;
}

}  // namespace uast
