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
#include <cmath>
#include <functional>
#include <string>

#include "uast/error.hpp"
#include "uast/matrix.hpp"

namespace uast {

using MatrixFunction = std::function<double(const Matrix&)>;

// Central differences (f(x + h e_ij) - f(x - h e_ij)) / 2h for every entry.
inline Matrix finite_diff_grad(const MatrixFunction& f, const Matrix& at, double h = 1e-5) {
  if (!(h > 0.0)) throw ParameterError("finite_diff_grad: step must be positive");
  Matrix probe = at;
  Matrix grad(at.rows(), at.cols());
  auto values = probe.data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double plus = f(probe);
    values[i] = saved - h;
    const double minus = f(probe);
    values[i] = saved;
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw NumericError("finite_diff_grad: non-finite evaluation at entry " +
                         std::to_string(i));
    }
    grad.data()[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

struct GradientComparison {
  double worst_relative = 0.0;  // over entries failing the absolute test
  double worst_absolute = 0.0;
  bool ok = true;
};

// Entry-wise check: an entry passes when |a - b| <= abs_tol or
// |a - b| / max(|a|, |b|) <= rel_tol.
inline GradientComparison compare_gradients(const Matrix& analytic, const Matrix& numeric,
                                            double rel_tol = 1e-4, double abs_tol = 1e-7) {
  if (!analytic.same_shape(numeric)) throw ShapeError("compare_gradients: shape mismatch");
  GradientComparison out;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double x = analytic.data()[i];
    const double y = numeric.data()[i];
    const double diff = std::abs(x - y);
    out.worst_absolute = std::max(out.worst_absolute, diff);
    if (diff <= abs_tol) continue;
    const double rel = diff / std::max(std::abs(x), std::abs(y));
    out.worst_relative = std::max(out.worst_relative, rel);
    if (rel > rel_tol) out.ok = false;
  }
  return out;
}

}  // namespace uast
