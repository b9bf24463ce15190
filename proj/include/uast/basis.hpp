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

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "uast/config.hpp"
#include "uast/dataset.hpp"
#include "uast/error.hpp"
#include "uast/log.hpp"
#include "uast/matrix.hpp"
#include "uast/model.hpp"
#include "uast/rng.hpp"

namespace uast {

// K unit-covariance Gaussian means, one per row of `mu` (K x d). The
// covariance is the identity by construction and is never stored.
struct BasisSet {
  Matrix mu;

  std::size_t k() const noexcept { return mu.rows(); }
  std::size_t d() const noexcept { return mu.cols(); }

  void validate() const {
    if (mu.rows() == 0 || mu.cols() == 0) throw ShapeError("basis set is empty");
    if (!all_finite(mu)) throw NumericError("basis set has non-finite entries");
    for (std::size_t a = 0; a < k(); ++a) {
      for (std::size_t b = a + 1; b < k(); ++b) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < d(); ++j) {
          const double diff = mu(a, j) - mu(b, j);
          d2 += diff * diff;
        }
        if (std::sqrt(d2) <= 1e-8) {
          throw ConsistencyError("bases " + std::to_string(a) + " and " + std::to_string(b) +
                                 " coincide");
        }
      }
    }
  }
};

inline void to_json(nlohmann::json& j, const BasisSet& b) {
  j = nlohmann::json{{"k", b.k()}, {"d", b.d()}, {"mu", b.mu.values()}};
}

inline void from_json(const nlohmann::json& j, BasisSet& b) {
  const auto k = j.at("k").get<std::size_t>();
  const auto d = j.at("d").get<std::size_t>();
  b.mu = Matrix(k, d, j.at("mu").get<std::vector<double>>());
}

// Z = X mu^T: coordinates of every feature row against every basis (N x K).
inline Matrix att_project(const Matrix& x, const BasisSet& basis) {
  if (x.cols() != basis.d()) {
    throw ShapeError("att_project: features have " + std::to_string(x.cols()) +
                     " columns, bases have " + std::to_string(basis.d()));
  }
  return matmul_transposed(x, basis.mu);
}

struct ObjectiveWeights {
  double reconstruction = 1.0;
  double label_gram = 1.0;
  double ortho = 1.0;

  static ObjectiveWeights from(const RoundConfig& cfg) {
    return {cfg.recon_weight, cfg.gram_weight, cfg.ortho_weight};
  }
};

struct BasisObjectiveReport {
  double reconstruction = 0.0;  // ||X - Z mu||_F
  double label_gram = 0.0;      // ||Z Z^T - Y Y^T||_F
  double ortho = 0.0;           // ||mu mu^T - I||_F
  double total = 0.0;           // weighted sum
};

namespace detail {

inline void check_objective_shapes(const Matrix& x, const Matrix& onehot, const BasisSet& basis) {
  if (x.cols() != basis.d()) throw ShapeError("basis objective: feature/basis width mismatch");
  if (onehot.rows() != x.rows()) throw ShapeError("basis objective: label rows != feature rows");
}

// Norms at or below this are treated as exactly zero; the gradient of a
// Frobenius norm is undefined there and we take the zero subgradient.
inline constexpr double kKinkTolerance = 1e-12;

// ||Z Z^T - Y Y^T||_F through K x K and C x C Gram matrices:
//   ||G||^2 = ||Z^T Z||^2 - 2 ||Z^T Y||^2 + ||Y^T Y||^2
// which avoids the N x N matrix. Rounding can push the sum slightly below
// zero at an exact fit; it is clamped.
inline double label_gram_norm(const Matrix& z, const Matrix& y) {
  const double zz = frobenius_norm(transposed_matmul(z, z));
  const double zy = frobenius_norm(transposed_matmul(z, y));
  const double yy = frobenius_norm(transposed_matmul(y, y));
  return std::sqrt(std::max(0.0, zz * zz - 2.0 * zy * zy + yy * yy));
}

}  // namespace detail

inline BasisObjectiveReport basis_objective(const Matrix& x, const Matrix& onehot, const BasisSet& basis,
                                            const ObjectiveWeights& w = {}) {
  detail::check_objective_shapes(x, onehot, basis);
  const Matrix z = att_project(x, basis);
  BasisObjectiveReport rep;
  rep.reconstruction = frobenius_norm(x - matmul(z, basis.mu));
  rep.label_gram = detail::label_gram_norm(z, onehot);
  rep.ortho = orthogonality_residual(basis.mu);
  rep.total = w.reconstruction * rep.reconstruction + w.label_gram * rep.label_gram + w.ortho * rep.ortho;
  return rep;
}

// d total / d mu (K x d). With R = X - Z mu and G = Z Z^T - Y Y^T:
//   d||R|| = -(mu R^T X + Z^T R) / ||R||
//   d||G|| = 2 Z^T G X / ||G||,  Z^T G = (Z^T Z) Z^T - (Z^T Y) Y^T
//   d||mu mu^T - I|| = 2 (mu mu^T - I) mu / ||mu mu^T - I||
inline Matrix basis_objective_grad(const Matrix& x, const Matrix& onehot, const BasisSet& basis,
                                   const ObjectiveWeights& w = {}) {
  detail::check_objective_shapes(x, onehot, basis);
  const Matrix& mu = basis.mu;
  const Matrix z = att_project(x, basis);
  Matrix grad(mu.rows(), mu.cols());

  const Matrix r = x - matmul(z, mu);
  const double r_norm = frobenius_norm(r);
  if (w.reconstruction != 0.0 && r_norm > detail::kKinkTolerance) {
    Matrix g = matmul(mu, transposed_matmul(r, x)) + transposed_matmul(z, r);
    grad -= g * (w.reconstruction / r_norm);
  }

  const double g_norm = detail::label_gram_norm(z, onehot);
  if (w.label_gram != 0.0 && g_norm > detail::kKinkTolerance) {
    const Matrix ztg = matmul(transposed_matmul(z, z), transpose(z)) -
                       matmul(transposed_matmul(z, onehot), transpose(onehot));
    grad += matmul(ztg, x) * (2.0 * w.label_gram / g_norm);
  }

  if (w.ortho != 0.0 && orthogonality_residual(mu) > detail::kKinkTolerance) {
    grad += orthogonality_residual_grad(mu) * w.ortho;
  }
  return grad;
}

struct RefineResult {
  BasisSet basis;
  BasisObjectiveReport initial;
  BasisObjectiveReport final;
  std::size_t steps = 0;
  bool converged = false;
};

// Gradient descent on the basis objective starting from `init`. The step
// size is capped at cfg.refine_lr and halved until the objective decreases
// (Armijo); after an accepted step the next trial doubles it again.
// Returns the lowest-objective iterate whose orthogonality term stays at or
// below `ortho_ceiling` (default: the initial term).
inline RefineResult refine_basis(const Matrix& x, const Matrix& onehot, const BasisSet& init,
                                 const RoundConfig& cfg,
                                 std::optional<double> ortho_ceiling = std::nullopt) {
  const auto weights = ObjectiveWeights::from(cfg);
  RefineResult out;
  out.initial = basis_objective(x, onehot, init, weights);
  out.basis = init;
  out.final = out.initial;
  const double ceiling = std::max(ortho_ceiling.value_or(out.initial.ortho), out.initial.ortho);

  BasisSet current = init;
  BasisObjectiveReport current_rep = out.initial;
  double lr = cfg.refine_lr;
  for (std::size_t step = 0; step < cfg.stage1_refine_steps; ++step) {
    const Matrix g = basis_objective_grad(x, onehot, current, weights);
    const double g_norm = frobenius_norm(g);
    if (g_norm < cfg.refine_tol) {
      out.converged = true;
      break;
    }
    BasisSet trial;
    BasisObjectiveReport trial_rep;
    bool accepted = false;
    while (lr > 1e-14) {
      trial.mu = current.mu - g * lr;
      trial_rep = basis_objective(x, onehot, trial, weights);
      if (trial_rep.total <= current_rep.total - 1e-4 * lr * g_norm * g_norm) {
        accepted = true;
        break;
      }
      lr *= 0.5;
    }
    if (!accepted) {
      out.converged = true;
      break;
    }
    current = std::move(trial);
    current_rep = trial_rep;
    out.steps = step + 1;
    if (current_rep.ortho <= ceiling && current_rep.total < out.final.total) {
      out.basis = current;
      out.final = current_rep;
    }
    lr = std::min(cfg.refine_lr, 2.0 * lr);
  }
  return out;
}

struct Stage1Result {
  MlpModel model;
  BasisSet basis;
  double ortho_at_init = 0.0;     // residual of the freshly initialized ATT block
  double ortho_after_fit = 0.0;   // residual after the L_nll + L_2 fit
  double ortho_ceiling = 0.0;     // largest residual refinement may return
  RefineResult refine;
  std::vector<double> loss_curve;  // mean minibatch loss per epoch
};

inline void require_class_coverage(const Dataset& labeled, std::size_t basis_count) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(labeled.class_count), 0);
  std::size_t total = 0;
  for (int y : labeled.labels) {
    if (y == kUnlabeled) continue;
    ++counts[static_cast<std::size_t>(y)];
    ++total;
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) throw ConfigError("class " + std::to_string(c) + " has no labeled rows");
  }
  if (total < basis_count) {
    throw ConfigError("need at least K=" + std::to_string(basis_count) + " labeled rows, have " +
                      std::to_string(total));
  }
  if (basis_count < counts.size()) {
    throw ConfigError("basis count K=" + std::to_string(basis_count) + " is below class count");
  }
}

struct EpochStats {
  double mean_loss = 0.0;
};

// One shuffled pass of minibatch SGD on weighted NLL plus the ATT-block
// orthogonality penalty. Rows flagged in `rescale` have their weights
// rescaled to mean 1 within each minibatch. Shared by stage 1 and retraining.

inline EpochStats run_epoch(MlpModel& model, Sgd& opt, const Matrix& x, std::span<const int> labels,
                            std::span<const double> weights, double ortho_weight,
                            std::size_t batch_size, SeededRng& rng,
                            std::span<const unsigned char> rescale = {}) {
  std::vector<std::size_t> order(x.rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  double loss_sum = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    Matrix xb(end - start, x.cols());
    std::vector<int> yb;
    std::vector<double> wb;
    for (std::size_t i = start; i < end; ++i) {
      std::copy_n(x.row(order[i]).begin(), x.cols(), xb.row(i - start).begin());
      yb.push_back(labels[order[i]]);
      if (!weights.empty()) wb.push_back(weights[order[i]]);
    }
    if (!rescale.empty() && !wb.empty()) {
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t i = start; i < end; ++i) {
        if (!rescale[order[i]]) continue;
        sum += wb[i - start];
        ++count;
      }
      if (count > 0 && sum > 0.0) {
        const double mean = sum / static_cast<double>(count);
        for (std::size_t i = start; i < end; ++i) {
          if (rescale[order[i]]) wb[i - start] /= mean;
        }
      }
    }
    const Gradients g = backward(model, xb, {yb, wb, ortho_weight});
    if (!std::isfinite(g.loss)) throw NumericError("non-finite training loss");
    model = opt.step(std::move(model), g);
    loss_sum += g.loss;
    ++batches;
  }
  return {batches == 0 ? 0.0 : loss_sum / static_cast<double>(batches)};
}

// Fits the feature extractor, classifier and ATT block on the labeled rows
// with L_nll + ||W W^T - I||_F, then refines W into the initial bases.
inline Stage1Result train_stage1(const Dataset& data, const RoundConfig& cfg, SeededRng& rng) {
  data.validate();
  const Dataset labeled = data.subset(data.labeled_indices());
  const std::size_t k = cfg.resolved_basis_count(data.class_count);
  require_class_coverage(labeled, k);

  Stage1Result out;
  out.model = make_mlp(data.dim(), cfg.hidden, static_cast<std::size_t>(data.class_count), k, rng);
  out.ortho_at_init = orthogonality_residual(out.model.att);

  Sgd opt({cfg.stage1_lr, cfg.momentum, cfg.weight_decay});
  for (std::size_t epoch = 0; epoch < cfg.stage1_epochs; ++epoch) {
    const auto stats = run_epoch(out.model, opt, labeled.features, labeled.labels, {}, 1.0,
                                 cfg.batch_size, rng);
    out.loss_curve.push_back(stats.mean_loss);
  }
  out.ortho_after_fit = orthogonality_residual(out.model.att);

  const Matrix features = forward(out.model, labeled.features).features;
  const Matrix onehot = one_hot(labeled.labels, data.class_count);
  // Refinement may trade orthogonality for fit, but never beyond half of
  // the residual the ATT block started from.
  const double fitted = out.ortho_after_fit;
  out.ortho_ceiling = fitted < 1e-6 ? fitted : std::max(fitted, 0.5 * out.ortho_at_init);
  out.refine = refine_basis(features, onehot, BasisSet{out.model.att}, cfg, out.ortho_ceiling);
  out.basis = out.refine.basis;
  log::info("stage1: ortho init=", out.ortho_at_init, " fit=", out.ortho_after_fit,
            " refined=", out.refine.final.ortho, " objective ", out.refine.initial.total, " -> ",
            out.refine.final.total, " in ", out.refine.steps, " steps");
  return out;
}

}  // namespace uast
