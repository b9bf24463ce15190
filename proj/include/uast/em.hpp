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
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "uast/basis.hpp"
#include "uast/config.hpp"
#include "uast/dataset.hpp"
#include "uast/error.hpp"
#include "uast/log.hpp"
#include "uast/matrix.hpp"
#include "uast/model.hpp"
#include "uast/rng.hpp"

namespace uast {

// Row-stochastic soft assignment of N samples to K bases.
struct Assignment {
  Matrix z;
};

// Distribution of a sample's pseudo-label, summarized by Monte-Carlo moments
// of the class-probability vector.
struct SoftPseudoLabel {
  std::vector<double> mean;  // sums to 1
  std::vector<double> var;   // per-class sample variance
  double uncertainty = 0.0;  // sum of var (trace of the covariance)
  std::size_t sample_index = 0;

  std::size_t predicted_class() const {
    return static_cast<std::size_t>(std::max_element(mean.begin(), mean.end()) - mean.begin());
  }
};

inline void to_json(nlohmann::json& j, const SoftPseudoLabel& p) {
  j = nlohmann::json{{"index", p.sample_index}, {"mean", p.mean}, {"var", p.var},
                     {"uncertainty", p.uncertainty}};
}

inline void from_json(const nlohmann::json& j, SoftPseudoLabel& p) {
  j.at("index").get_to(p.sample_index);
  j.at("mean").get_to(p.mean);
  j.at("var").get_to(p.var);
  j.at("uncertainty").get_to(p.uncertainty);
}

struct EmState {
  BasisSet basis;
  Assignment assignment;
  LinearHead head;
  std::size_t iteration = 0;
};

// z = softmax(temp * X mu^T) row by row: the dot-product kernel
// exp(temp <x, mu_k>) normalized over bases.
inline Assignment e_step(const Matrix& x, const BasisSet& basis, double temp) {
  return {row_softmax(att_project(x, basis), temp)};
}

namespace detail {

// mu_k = sum_n z_nk x_n / sum_n z_nk, n ascending. Writes the column masses.
inline Matrix weighted_means(const Matrix& x, const Matrix& z, std::vector<double>& mass) {
  if (x.rows() != z.rows()) throw ShapeError("m_step: assignment rows != feature rows");
  const std::size_t k = z.cols();
  const std::size_t d = x.cols();
  Matrix mu(k, d);
  mass.assign(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    auto out = mu.row(c);
    for (std::size_t n = 0; n < x.rows(); ++n) {
      const double w = z(n, c);
      mass[c] += w;
      const auto xn = x.row(n);
      for (std::size_t j = 0; j < d; ++j) out[j] += w * xn[j];
    }
    if (mass[c] >= 1e-12)
      for (double& v : out) v /= mass[c];
  }
  return mu;
}

}  // namespace detail

inline constexpr double kDegenerateMass = 1e-12;

inline BasisSet m_step(const Matrix& x, const Assignment& a) {
  std::vector<double> mass;
  Matrix mu = detail::weighted_means(x, a.z, mass);
  for (std::size_t c = 0; c < mass.size(); ++c) {
    if (mass[c] < kDegenerateMass) throw DegenerateBasisError(c, mass[c]);
  }
  return {std::move(mu)};
}

// Randomness behind m latent draws: one uniform per draw for the component
// choice and a standard-normal noise row per draw.
struct LatentDraws {
  std::vector<double> uniforms;
  Matrix noise;  // m x d
};

inline LatentDraws draw_latent_noise(SeededRng& rng, std::size_t m, std::size_t d) {
  LatentDraws draws;
  draws.uniforms.resize(m);
  draws.noise = Matrix(m, d);
  for (std::size_t i = 0; i < m; ++i) {
    draws.uniforms[i] = rng.uniform();
    for (double& e : draws.noise.row(i)) e = rng.normal();
  }
  return draws;
}

// Mixture mode: component k by inverse CDF of z_row at uniforms[i], then
// x = mu_k + eps. Blended mode: x = sum_k z_k mu_k + eps for every draw.
inline Matrix compose_latents(std::span<const double> z_row, const BasisSet& basis,
                              const LatentDraws& draws, LatentMode mode = LatentMode::mixture) {
  if (z_row.size() != basis.k()) throw ShapeError("latent sampling: z row length != K");
  if (draws.noise.cols() != basis.d()) throw ShapeError("latent sampling: noise width != d");
  const std::size_t m = draws.noise.rows();
  Matrix out(m, basis.d());
  std::vector<double> blended;
  if (mode == LatentMode::blended) {
    blended.assign(basis.d(), 0.0);
    for (std::size_t k = 0; k < basis.k(); ++k)
      for (std::size_t j = 0; j < basis.d(); ++j) blended[j] += z_row[k] * basis.mu(k, j);
  }
  for (std::size_t i = 0; i < m; ++i) {
    std::span<const double> center = blended;
    if (mode == LatentMode::mixture) {
      center = basis.mu.row(SeededRng::categorical_at(z_row, draws.uniforms[i]));
    }
    auto row = out.row(i);
    const auto eps = draws.noise.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = center[j] + eps[j];
  }
  return out;
}

inline Matrix sample_latent(std::span<const double> z_row, const BasisSet& basis, SeededRng& rng,
                            std::size_t m, LatentMode mode = LatentMode::mixture) {
  if (m < 1) throw ParameterError("sample_latent: need at least one sample");
  return compose_latents(z_row, basis, draw_latent_noise(rng, m, basis.d()), mode);
}

namespace detail {

inline Matrix head_probabilities(const Matrix& latents, const LinearHead& head) {
  if (latents.cols() != head.in_dim()) throw ShapeError("pseudo label: latent width != head input");
  return row_softmax(apply_layer(head, latents), 1.0);
}

}  // namespace detail

// Monte-Carlo moments of softmax(head(latent)) over the rows of `latents`.
inline SoftPseudoLabel pseudo_label_from_latents(const Matrix& latents, const LinearHead& head,
                                                 std::size_t sample_index = 0) {
  const std::size_t m = latents.rows();
  if (m < 2) throw ParameterError("pseudo label: need at least two latent samples");
  const Matrix probs = detail::head_probabilities(latents, head);
  const std::size_t c = probs.cols();
  SoftPseudoLabel out;
  out.sample_index = sample_index;
  out.mean.assign(c, 0.0);
  out.var.assign(c, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < c; ++j) out.mean[j] += probs(i, j);
  for (double& v : out.mean) v /= static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double dv = probs(i, j) - out.mean[j];
      out.var[j] += dv * dv;
    }
  }
  for (double& v : out.var) v /= static_cast<double>(m - 1);
  double total = 0.0;
  for (double v : out.mean) total += v;
  for (double& v : out.mean) v /= total;
  for (double v : out.var) out.uncertainty += v;
  return out;
}

inline SoftPseudoLabel pseudo_label_distribution(std::span<const double> z_row, const BasisSet& basis,
                                                 const LinearHead& head, SeededRng& rng, std::size_t m,
                                                 LatentMode mode = LatentMode::mixture,
                                                 std::size_t sample_index = 0) {
  if (m < 2) throw ParameterError("pseudo_label_distribution: need m >= 2");
  return pseudo_label_from_latents(sample_latent(z_row, basis, rng, m, mode), head, sample_index);
}

struct LinearMoments {
  std::vector<double> mean;
  std::vector<double> var;
};

// Moments of the head's logits (no softmax) over the latent rows; for a
// one-hot z the exact variance of output c is ||W[:, c]||^2.
inline LinearMoments linear_pushforward_moments(const Matrix& latents, const LinearHead& head) {
  const Matrix out = apply_layer(head, latents);
  const std::size_t m = out.rows();
  LinearMoments mom;
  mom.mean.assign(out.cols(), 0.0);
  mom.var.assign(out.cols(), 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) mom.mean[j] += out(i, j);
  for (double& v : mom.mean) v /= static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) {
      const double dv = out(i, j) - mom.mean[j];
      mom.var[j] += dv * dv;
    }
  }
  for (double& v : mom.var) v /= static_cast<double>(m - 1);
  return mom;
}

namespace detail {
inline constexpr double kProbabilityFloor = 1e-300;
}

// Labeled entries contribute -log mean[y]; unlabeled entries contribute
// their uncertainty. Each group is averaged on its own and the two averages
// are added, so the gate picks exactly one term per sample.
inline double combined_loss(std::span<const SoftPseudoLabel> labels, std::span<const int> truth) {
  if (labels.size() != truth.size()) throw ShapeError("combined_loss: label/truth length mismatch");
  double labeled = 0.0;
  double unlabeled = 0.0;
  std::size_t n_labeled = 0;
  std::size_t n_unlabeled = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (truth[i] == kUnlabeled) {
      unlabeled += labels[i].uncertainty;
      ++n_unlabeled;
    } else {
      const double p = labels[i].mean.at(static_cast<std::size_t>(truth[i]));
      labeled += -std::log(std::max(p, detail::kProbabilityFloor));
      ++n_labeled;
    }
  }
  double loss = 0.0;
  if (n_labeled > 0) loss += labeled / static_cast<double>(n_labeled);
  if (n_unlabeled > 0) loss += unlabeled / static_cast<double>(n_unlabeled);
  return loss;
}

struct HeadGradient {
  double loss = 0.0;
  Matrix weight;
  std::vector<double> bias;
};

// combined_loss and its gradient with respect to the head, holding the
// latent draws fixed (reparameterized sampling).
inline HeadGradient combined_loss_head_grad(std::span<const Matrix> latents, std::span<const int> truth,
                                            const LinearHead& head) {
  if (latents.size() != truth.size()) throw ShapeError("head grad: latent/truth length mismatch");
  std::size_t n_labeled = 0;
  for (int y : truth) n_labeled += y != kUnlabeled;
  const std::size_t n_unlabeled = truth.size() - n_labeled;

  HeadGradient out;
  out.weight = Matrix(head.in_dim(), head.out_dim());
  out.bias.assign(head.out_dim(), 0.0);
  std::vector<SoftPseudoLabel> labels;
  labels.reserve(latents.size());

  const std::size_t c = head.out_dim();
  std::vector<double> g(c);
  for (std::size_t n = 0; n < latents.size(); ++n) {
    const Matrix& lat = latents[n];
    const std::size_t m = lat.rows();
    const Matrix probs = detail::head_probabilities(lat, head);
    labels.push_back(pseudo_label_from_latents(lat, head, n));
    const SoftPseudoLabel& pl = labels.back();
    // Unnormalized mean: the renormalization in pseudo_label_from_latents is
    // a no-op up to rounding and is not differentiated.
    std::vector<double> mean(c, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < c; ++j) mean[j] += probs(i, j) / static_cast<double>(m);

    const bool labeled = truth[n] != kUnlabeled;
    const double group = labeled ? static_cast<double>(n_labeled) : static_cast<double>(n_unlabeled);
    for (std::size_t i = 0; i < m; ++i) {
      // g = d loss_n / d p_i, scaled by the group average.
      if (labeled) {
        std::fill(g.begin(), g.end(), 0.0);
        const auto y = static_cast<std::size_t>(truth[n]);
        g[y] = -1.0 / (std::max(pl.mean[y], detail::kProbabilityFloor) * static_cast<double>(m) * group);
      } else {
        for (std::size_t j = 0; j < c; ++j)
          g[j] = 2.0 * (probs(i, j) - mean[j]) / (static_cast<double>(m - 1) * group);
      }
      double gp = 0.0;
      for (std::size_t j = 0; j < c; ++j) gp += g[j] * probs(i, j);
      const auto xi = lat.row(i);
      for (std::size_t j = 0; j < c; ++j) {
        const double dlogit = probs(i, j) * (g[j] - gp);
        out.bias[j] += dlogit;
        for (std::size_t a = 0; a < xi.size(); ++a) out.weight(a, j) += xi[a] * dlogit;
      }
    }
  }
  out.loss = combined_loss(labels, truth);
  return out;
}

struct EmResult {
  EmState state;
  std::vector<SoftPseudoLabel> pseudo_labels;  // one per unlabeled row, in row order
  std::vector<double> loss_curve;              // combined loss per iteration
  std::size_t reseeds = 0;
};

// Seed of the Monte-Carlo stream for (iteration, row); iteration T + 1 is
// the final pseudo-label pass.
inline std::uint64_t latent_stream_seed(std::uint64_t base, std::size_t iteration, std::size_t row) {
  return SeededRng::split_seed(SeededRng::split_seed(base, iteration), row);
}

// Adapted EM over latent features. `data.features` are feature-space rows
// (labeled and unlabeled); labels gate which loss term a row feeds. Each of
// the T iterations runs, in order: e-step, latent sampling, pseudo-label
// moments, combined loss, one full-batch head update, m-step.
inline EmResult run_em(const Dataset& data, const BasisSet& init, const LinearHead& head_init,
                       const RoundConfig& cfg, SeededRng& rng) {
  if (cfg.em_iterations < 1) throw ConfigError("run_em: T must be >= 1");
  if (data.dim() != init.d()) throw ShapeError("run_em: feature width != basis width");
  if (head_init.in_dim() != init.d()) throw ShapeError("run_em: head input width != basis width");
  const Matrix& x = data.features;
  const std::size_t n = data.size();
  const auto labeled_rows = data.labeled_indices();
  const std::uint64_t base = rng.seed();

  EmResult out;
  EmState& st = out.state;
  st.basis = init;
  st.head = head_init;

  std::vector<Matrix> latents(n);
  for (std::size_t t = 1; t <= cfg.em_iterations; ++t) {
    st.assignment = e_step(x, st.basis, cfg.temp);
    for (std::size_t r = 0; r < n; ++r) {
      double sum = 0.0;
      for (double v : st.assignment.z.row(r)) sum += v;
      if (std::abs(sum - 1.0) > 1e-9) throw NumericError("e_step row " + std::to_string(r) + " not stochastic");
    }

    for (std::size_t r = 0; r < n; ++r) {
      SeededRng sample_rng(latent_stream_seed(base, t, r));
      latents[r] = compose_latents(st.assignment.z.row(r), st.basis,
                                   draw_latent_noise(sample_rng, cfg.mc_samples, st.basis.d()),
                                   cfg.latent_mode);
    }
    const HeadGradient hg = combined_loss_head_grad(latents, data.labels, st.head);
    if (!std::isfinite(hg.loss)) throw NumericError("run_em: non-finite combined loss at t=" + std::to_string(t));
    out.loss_curve.push_back(hg.loss);
    if (cfg.em_head_lr > 0.0) {
      st.head.weight -= hg.weight * cfg.em_head_lr;
      for (std::size_t j = 0; j < st.head.bias.size(); ++j) st.head.bias[j] -= cfg.em_head_lr * hg.bias[j];
    }

    std::vector<double> mass;
    Matrix mu = detail::weighted_means(x, st.assignment.z, mass);
    for (std::size_t k = 0; k < mass.size(); ++k) {
      if (mass[k] >= kDegenerateMass) continue;
      const std::size_t pick = labeled_rows.empty() ? rng.below(n) : labeled_rows[rng.below(labeled_rows.size())];
      std::copy_n(x.row(pick).begin(), x.cols(), mu.row(k).begin());
      ++out.reseeds;
      log::info("em: basis ", k, " degenerate (mass ", mass[k], ") at t=", t, "; re-seeded at row ", pick);
    }
    st.basis.mu = std::move(mu);
    if (!all_finite(st.basis.mu)) throw NumericError("run_em: non-finite basis at t=" + std::to_string(t));
    st.iteration = t;
    log::debug("em: t=", t, " loss=", hg.loss);
  }

  st.assignment = e_step(x, st.basis, cfg.temp);
  for (std::size_t r = 0; r < n; ++r) {
    if (data.is_labeled(r)) continue;
    SeededRng sample_rng(latent_stream_seed(base, cfg.em_iterations + 1, r));
    out.pseudo_labels.push_back(pseudo_label_distribution(st.assignment.z.row(r), st.basis, st.head, sample_rng,
                                                          cfg.mc_samples, cfg.latent_mode, r));
  }
  return out;
}

// One JSON object per line: {index, mean, var, uncertainty}.
inline void write_pseudo_labels(const std::string& path, std::span<const SoftPseudoLabel> labels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const auto& p : labels) out << nlohmann::json(p).dump() << '\n';
  if (!out) throw IoError("short write to " + path);
}

}  // namespace uast
