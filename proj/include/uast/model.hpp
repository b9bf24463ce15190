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
#include <span>
#include <string>
#include <vector>

#include "uast/dataset.hpp"
#include "uast/error.hpp"
#include "uast/matrix.hpp"
#include "uast/rng.hpp"

namespace uast {

enum class Activation { identity = 0, tanh = 1 };

// Dense layer y = act(x W + b) with W stored d_in x d_out.
struct Layer {
  Matrix weight;
  std::vector<double> bias;
  Activation activation = Activation::identity;

  std::size_t in_dim() const noexcept { return weight.rows(); }
  std::size_t out_dim() const noexcept { return weight.cols(); }
};

// A linear classifier over latent features; the EM stage trains one of these.
using LinearHead = Layer;

// Feature extractor + classifier. The last layer is the classifier head and
// its input is the feature space the bases live in. `att` is the K x d
// attention-block matrix whose rows seed the bases; it does not take part in
// the forward pass.
struct MlpModel {
  std::vector<Layer> layers;
  Matrix att;

  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t feature_dim() const { return layers.back().in_dim(); }
  std::size_t class_count() const { return layers.back().out_dim(); }
  const LinearHead& head() const { return layers.back(); }

  void validate() const {
    if (layers.empty()) throw ShapeError("model has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const Layer& layer = layers[l];
      if (layer.bias.size() != layer.out_dim()) {
        throw ShapeError("layer " + std::to_string(l) + ": bias length mismatch");
      }
      if (l > 0 && layers[l - 1].out_dim() != layer.in_dim()) {
        throw ShapeError("layer " + std::to_string(l) + ": input dim does not chain");
      }
    }
    if (!att.empty() && att.cols() != feature_dim()) {
      throw ShapeError("attention block width " + std::to_string(att.cols()) +
                       " != feature dim " + std::to_string(feature_dim()));
    }
  }
};

// Uniform(-1/sqrt(d_in), 1/sqrt(d_in)) for every weight and bias.
inline Layer make_layer(std::size_t d_in, std::size_t d_out, Activation act, SeededRng& rng) {
  Layer layer;
  layer.activation = act;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
  layer.weight = Matrix(d_in, d_out);
  for (double& w : layer.weight.data()) w = rng.uniform(-bound, bound);
  layer.bias.resize(d_out);
  for (double& b : layer.bias) b = rng.uniform(-bound, bound);
  return layer;
}

inline MlpModel make_mlp(std::size_t input_dim, std::span<const std::size_t> hidden,
                         std::size_t class_count, std::size_t basis_count, SeededRng& rng) {
  MlpModel model;
  std::size_t d = input_dim;
  for (std::size_t width : hidden) {
    model.layers.push_back(make_layer(d, width, Activation::tanh, rng));
    d = width;
  }
  model.layers.push_back(make_layer(d, class_count, Activation::identity, rng));
  if (basis_count > 0) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    model.att = Matrix(basis_count, d);
    for (double& w : model.att.data()) w = rng.uniform(-bound, bound);
  }
  return model;
}

inline Matrix apply_layer(const Layer& layer, const Matrix& x) {
  Matrix out = matmul(x, layer.weight);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      row[c] += layer.bias[c];
      if (layer.activation == Activation::tanh) row[c] = std::tanh(row[c]);
    }
  }
  return out;
}

// Output of every layer; activations[0] is the input.
inline std::vector<Matrix> forward_trace(const MlpModel& model, const Matrix& x) {
  if (x.cols() != model.input_dim()) {
    throw ShapeError("forward: input has " + std::to_string(x.cols()) + " columns, model expects " +
                     std::to_string(model.input_dim()));
  }
  std::vector<Matrix> activations;
  activations.reserve(model.layers.size() + 1);
  activations.push_back(x);
  for (const Layer& layer : model.layers) activations.push_back(apply_layer(layer, activations.back()));
  return activations;
}

struct ForwardResult {
  Matrix features;
  Matrix logits;
};

inline ForwardResult forward(const MlpModel& model, const Matrix& x) {
  auto trace = forward_trace(model, x);
  ForwardResult out;
  out.logits = std::move(trace.back());
  out.features = std::move(trace[trace.size() - 2]);
  return out;
}

// -log softmax(logits)[label], computed with the log-sum-exp shift.
inline double row_nll(std::span<const double> logits, int label) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  return std::log(sum) - (logits[static_cast<std::size_t>(label)] - mx);
}

inline void check_label(int label, std::size_t classes, std::size_t row) {
  if (label == kUnlabeled) {
    throw ContractError("nll: row " + std::to_string(row) + " is unlabeled; filter it first");
  }
  if (label < 0 || static_cast<std::size_t>(label) >= classes) {
    throw ContractError("nll: label " + std::to_string(label) + " out of range at row " +
                        std::to_string(row));
  }
}

inline double nll_loss(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows() != labels.size()) throw ShapeError("nll_loss: row/label count mismatch");
  if (labels.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    check_label(labels[r], logits.cols(), r);
    acc += row_nll(logits.row(r), labels[r]);
  }
  return acc / static_cast<double>(labels.size());
}

// What backward differentiates: (1/N) sum_i w_i nll_i + ortho_weight *
// ||att att^T - I||_F. Empty weights mean w_i = 1.
struct LossSpec {
  std::span<const int> labels;
  std::span<const double> weights;
  double ortho_weight = 0.0;
};

struct Gradients {
  std::vector<Matrix> weight;
  std::vector<std::vector<double>> bias;
  Matrix att;
  double loss = 0.0;
};

inline double weighted_loss(const MlpModel& model, const Matrix& x, const LossSpec& spec) {
  const Matrix logits = forward(model, x).logits;
  if (logits.rows() != spec.labels.size()) throw ShapeError("loss: row/label count mismatch");
  double acc = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    check_label(spec.labels[r], logits.cols(), r);
    const double w = spec.weights.empty() ? 1.0 : spec.weights[r];
    acc += w * row_nll(logits.row(r), spec.labels[r]);
  }
  double loss = logits.rows() == 0 ? 0.0 : acc / static_cast<double>(logits.rows());
  if (spec.ortho_weight != 0.0 && !model.att.empty()) {
    loss += spec.ortho_weight * orthogonality_residual(model.att);
  }
  return loss;
}

inline Gradients backward(const MlpModel& model, const Matrix& x, const LossSpec& spec) {
  const auto trace = forward_trace(model, x);
  const std::size_t n = x.rows();
  if (spec.labels.size() != n) throw ShapeError("backward: row/label count mismatch");
  if (!spec.weights.empty() && spec.weights.size() != n) {
    throw ShapeError("backward: weight count mismatch");
  }
  for (std::size_t l = 1; l < trace.size(); ++l) {
    if (!all_finite(trace[l])) {
      throw NumericError("backward: non-finite activation in layer " + std::to_string(l - 1));
    }
  }

  Gradients g;
  const std::size_t depth = model.layers.size();
  g.weight.resize(depth);
  g.bias.resize(depth);

  // dL/d(output of last layer)
  const Matrix& logits = trace.back();
  Matrix delta(n, logits.cols());
  double loss = 0.0;
  const double inv_n = n == 0 ? 0.0 : 1.0 / static_cast<double>(n);
  std::vector<double> probs(logits.cols());
  for (std::size_t r = 0; r < n; ++r) {
    check_label(spec.labels[r], logits.cols(), r);
    const double w = spec.weights.empty() ? 1.0 : spec.weights[r];
    loss += w * row_nll(logits.row(r), spec.labels[r]);
    softmax_into(logits.row(r), 1.0, probs);
    auto d = delta.row(r);
    for (std::size_t c = 0; c < d.size(); ++c) d[c] = w * inv_n * probs[c];
    d[static_cast<std::size_t>(spec.labels[r])] -= w * inv_n;
  }
  g.loss = loss * inv_n;

  for (std::size_t l = depth; l-- > 0;) {
    const Layer& layer = model.layers[l];
    const Matrix& out = trace[l + 1];
    if (layer.activation == Activation::tanh) {
      for (std::size_t i = 0; i < delta.size(); ++i) {
        const double y = out.data()[i];
        delta.data()[i] *= 1.0 - y * y;
      }
    }
    g.weight[l] = transposed_matmul(trace[l], delta);
    g.bias[l].assign(layer.out_dim(), 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < layer.out_dim(); ++c) g.bias[l][c] += delta(r, c);
    if (!all_finite(g.weight[l]) || !all_finite(g.bias[l])) {
      throw NumericError("backward: non-finite gradient in layer " + std::to_string(l));
    }
    if (l > 0) delta = matmul_transposed(delta, layer.weight);
  }

  if (!model.att.empty()) {
    g.att = Matrix(model.att.rows(), model.att.cols());
    if (spec.ortho_weight != 0.0) {
      g.att = orthogonality_residual_grad(model.att) * spec.ortho_weight;
      g.loss += spec.ortho_weight * orthogonality_residual(model.att);
    }
  }
  return g;
}

// Parameters (and matching gradients) in a fixed order: per layer weight
// then bias, then the attention block.
inline std::vector<std::span<double>> parameter_spans(MlpModel& model) {
  std::vector<std::span<double>> out;
  for (Layer& layer : model.layers) {
    out.push_back(layer.weight.data());
    out.push_back(layer.bias);
  }
  if (!model.att.empty()) out.push_back(model.att.data());
  return out;
}

inline std::vector<std::span<const double>> gradient_spans(const Gradients& g) {
  std::vector<std::span<const double>> out;
  for (std::size_t l = 0; l < g.weight.size(); ++l) {
    out.push_back(g.weight[l].data());
    out.push_back(g.bias[l]);
  }
  if (!g.att.empty()) out.push_back(g.att.data());
  return out;
}

struct SgdOptions {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

// Heavy-ball SGD: v = momentum v - lr (g + wd p); p += v.
class Sgd {
 public:
  explicit Sgd(SgdOptions options) : options_(options) {
    if (!(options_.lr > 0.0)) throw ParameterError("sgd: learning rate must be positive");
    if (options_.momentum < 0.0 || options_.momentum >= 1.0) {
      throw ParameterError("sgd: momentum must lie in [0, 1)");
    }
    if (options_.weight_decay < 0.0) throw ParameterError("sgd: weight decay must be >= 0");
  }

  const SgdOptions& options() const noexcept { return options_; }

  MlpModel step(MlpModel model, const Gradients& grads) {
    auto params = parameter_spans(model);
    const auto gs = gradient_spans(grads);
    if (params.size() != gs.size()) throw ShapeError("sgd: gradient set does not match model");
    if (velocity_.empty()) {
      for (const auto& p : params) velocity_.emplace_back(p.size(), 0.0);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].size() != gs[i].size() || velocity_[i].size() != params[i].size()) {
        throw ShapeError("sgd: parameter block " + std::to_string(i) + " shape mismatch");
      }
      auto& v = velocity_[i];
      for (std::size_t j = 0; j < params[i].size(); ++j) {
        v[j] = options_.momentum * v[j] -
               options_.lr * (gs[i][j] + options_.weight_decay * params[i][j]);
        params[i][j] += v[j];
      }
      if (!all_finite(params[i])) {
        throw NumericError("sgd: non-finite parameter after update in block " + std::to_string(i));
      }
    }
    return model;
  }

 private:
  SgdOptions options_;
  std::vector<std::vector<double>> velocity_;
};

inline MlpModel sgd_step(MlpModel model, const Gradients& grads, double lr, double momentum,
                         double weight_decay) {
  Sgd opt({lr, momentum, weight_decay});
  return opt.step(std::move(model), grads);
}

inline std::vector<int> predict(const MlpModel& model, const Matrix& x) {
  const Matrix logits = forward(model, x).logits;
  std::vector<int> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

struct AccuracyReport {
  std::vector<double> per_class;     // NaN-free: classes without rows are skipped
  std::vector<std::size_t> support;  // rows per true class
  double mean_class_accuracy = 0.0;  // unweighted mean over classes with support
  double accuracy = 0.0;
};

inline AccuracyReport class_accuracy(std::span<const int> truth, std::span<const int> predicted,
                                     int class_count) {
  if (truth.size() != predicted.size()) throw ShapeError("accuracy: length mismatch");
  AccuracyReport rep;
  const auto c = static_cast<std::size_t>(class_count);
  std::vector<std::size_t> hits(c, 0);
  rep.support.assign(c, 0);
  std::size_t correct = 0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == kUnlabeled) continue;
    const auto y = static_cast<std::size_t>(truth[i]);
    ++rep.support[y];
    ++counted;
    if (predicted[i] == truth[i]) {
      ++hits[y];
      ++correct;
    }
  }
  rep.per_class.assign(c, 0.0);
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < c; ++k) {
    if (rep.support[k] == 0) continue;
    rep.per_class[k] = static_cast<double>(hits[k]) / static_cast<double>(rep.support[k]);
    sum += rep.per_class[k];
    ++present;
  }
  rep.mean_class_accuracy = present == 0 ? 0.0 : sum / static_cast<double>(present);
  rep.accuracy = counted == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(counted);
  return rep;
}

inline AccuracyReport evaluate(const MlpModel& model, const Dataset& data) {
  const auto pred = predict(model, data.features);
  return class_accuracy(data.labels, pred, static_cast<int>(model.class_count()));
}

}  // namespace uast
