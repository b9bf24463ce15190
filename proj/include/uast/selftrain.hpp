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
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "uast/basis.hpp"
#include "uast/config.hpp"
#include "uast/dataset.hpp"
#include "uast/em.hpp"
#include "uast/error.hpp"
#include "uast/log.hpp"
#include "uast/model.hpp"
#include "uast/rng.hpp"

namespace uast {

// Source rows with labels, target rows without, and a labeled target split
// that only evaluation touches.
struct DomainSplits {
  Dataset labeled;
  Dataset unlabeled;
  Dataset test;
};

struct SelectionEntry {
  std::size_t index = 0;   // row in the unlabeled split
  std::size_t group = 0;   // argmax class of the pseudo-label mean
  double score = 0.0;      // ranking key, lower is kept first
  double uncertainty = 0.0;
  int hard_label = kUnlabeled;
  double weight = 0.0;     // raw 1/max(uncertainty, floor); 1 under confidence ranking
};

struct SelectionResult {
  std::vector<SelectionEntry> kept;
  std::vector<SelectionEntry> discarded;
  std::vector<std::size_t> group_sizes;
  std::vector<double> keep_fraction_used;  // per class; 0 for empty groups

  std::vector<std::size_t> kept_per_class() const {
    std::vector<std::size_t> out(group_sizes.size(), 0);
    for (const auto& e : kept) ++out[e.group];
    return out;
  }
};

struct SelectionOptions {
  SelectionPolicy policy = SelectionPolicy::variance;
  HardLabelMode hard_labels = HardLabelMode::sample;
  double var_floor = 1e-6;

  static SelectionOptions from(const RoundConfig& cfg) {
    return {cfg.selection, cfg.hard_labels, cfg.var_floor};
  }
};

// Number of rows kept from a group of `n` at fraction f: ceil(f n), with a
// small slack so 0.6 * 5 keeps 3 rather than 4.
inline std::size_t keep_count(double fraction, std::size_t n) {
  const double raw = std::ceil(fraction * static_cast<double>(n) - 1e-9);
  return std::min(n, static_cast<std::size_t>(std::max(0.0, raw)));
}

// Class-dependent selection: within each predicted class keep the
// lowest-scoring ceil(fraction * group) samples. Scores are the scalar
// uncertainty (variance policy) or 1 - max mean (confidence policy). Ties
// break by sample index. Hard labels are drawn from Categorical(mean) in
// class order then rank order.
inline SelectionResult select_samples(std::span<const SoftPseudoLabel> labels, double keep_fraction,
                                      SeededRng& rng, const SelectionOptions& opts = {}) {
  if (labels.empty()) throw ContractError("select_samples: no pseudo-labels");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw ParameterError("select_samples: keep fraction must lie in (0, 1]");
  }
  if (opts.policy == SelectionPolicy::none) throw ParameterError("select_samples: policy 'none' selects nothing");
  const std::size_t c = labels.front().mean.size();

  struct Candidate {
    SelectionEntry entry;
    const SoftPseudoLabel* source;
  };
  std::vector<std::vector<Candidate>> groups(c);
  for (const auto& p : labels) {
    if (p.mean.size() != c) throw ShapeError("select_samples: inconsistent class counts");
    SelectionEntry e;
    e.index = p.sample_index;
    e.group = p.predicted_class();
    e.uncertainty = p.uncertainty;
    e.score = opts.policy == SelectionPolicy::variance ? p.uncertainty : 1.0 - p.mean[e.group];
    groups[e.group].push_back({e, &p});
  }

  SelectionResult out;
  out.group_sizes.resize(c);
  out.keep_fraction_used.assign(c, 0.0);
  for (std::size_t g = 0; g < c; ++g) {
    auto& members = groups[g];
    out.group_sizes[g] = members.size();
    if (members.empty()) {
      log::info("select: class ", g, " has no pseudo-labeled samples; skipped");
      continue;
    }
    std::sort(members.begin(), members.end(), [](const Candidate& x, const Candidate& y) {
      const auto& a = x.entry;
      const auto& b = y.entry;
      return a.score != b.score ? a.score < b.score : a.index < b.index;
    });
    const std::size_t keep = keep_count(keep_fraction, members.size());
    out.keep_fraction_used[g] = static_cast<double>(keep) / static_cast<double>(members.size());
    for (std::size_t i = 0; i < members.size(); ++i) {
      SelectionEntry e = members[i].entry;
      if (i >= keep) {
        out.discarded.push_back(e);
        continue;
      }
      const SoftPseudoLabel& p = *members[i].source;
      e.hard_label = opts.hard_labels == HardLabelMode::sample ? static_cast<int>(rng.categorical(p.mean))
                                                               : static_cast<int>(g);
      e.weight = opts.policy == SelectionPolicy::variance ? 1.0 / std::max(e.uncertainty, opts.var_floor) : 1.0;
      out.kept.push_back(e);
    }
  }
  return out;
}

// True when, in every class, no kept score exceeds a discarded score.
inline bool rank_consistent(const SelectionResult& sel) {
  const std::size_t c = sel.group_sizes.size();
  std::vector<double> max_kept(c, -INFINITY);
  std::vector<double> min_discarded(c, INFINITY);
  for (const auto& e : sel.kept) max_kept[e.group] = std::max(max_kept[e.group], e.score);
  for (const auto& e : sel.discarded) min_discarded[e.group] = std::min(min_discarded[e.group], e.score);
  for (std::size_t g = 0; g < c; ++g)
    if (max_kept[g] > min_discarded[g]) return false;
  return true;
}

// Kept weights rescaled to mean 1 over the selected set.
inline std::vector<double> normalized_weights(const SelectionResult& sel) {
  std::vector<double> w;
  w.reserve(sel.kept.size());
  double sum = 0.0;
  for (const auto& e : sel.kept) {
    w.push_back(e.weight);
    sum += e.weight;
  }
  if (w.empty()) return w;
  const double mean = sum / static_cast<double>(w.size());
  for (double& v : w) v /= mean;
  return w;
}

struct RetrainResult {
  MlpModel model;
  std::vector<double> loss_curve;  // mean minibatch loss per epoch
};

// Weighted SGD on the labeled rows (weight 1) plus the kept pseudo-labeled
// rows of `unlabeled`, whose 1/Var weights are normalized to mean 1 either
// per minibatch or over the whole kept set (cfg.weight_normalization).
inline RetrainResult retrain(MlpModel model, const Dataset& labeled, const SelectionResult& selected,
                             const Dataset& unlabeled, const RoundConfig& cfg, SeededRng& rng) {
  const auto labeled_rows = labeled.labeled_indices();
  const std::size_t n = labeled_rows.size() + selected.kept.size();
  Matrix x(n, labeled.dim());
  std::vector<int> y;
  std::vector<double> w;
  std::vector<unsigned char> pseudo(n, 0);
  y.reserve(n);
  w.reserve(n);
  std::size_t row = 0;
  for (std::size_t i : labeled_rows) {
    std::copy_n(labeled.features.row(i).begin(), labeled.dim(), x.row(row++).begin());
    y.push_back(labeled.labels[i]);
    w.push_back(1.0);
  }
  const auto pseudo_weights = normalized_weights(selected);
  const bool per_batch = cfg.weight_normalization == WeightNormalization::batch;
  for (std::size_t i = 0; i < selected.kept.size(); ++i) {
    const auto& e = selected.kept[i];
    if (e.index >= unlabeled.size()) throw ContractError("retrain: selected index out of range");
    if (unlabeled.dim() != labeled.dim()) throw ShapeError("retrain: split widths differ");
    std::copy_n(unlabeled.features.row(e.index).begin(), unlabeled.dim(), x.row(row++).begin());
    y.push_back(e.hard_label);
    w.push_back(per_batch ? e.weight : pseudo_weights[i]);
    pseudo[row - 1] = per_batch ? 1 : 0;
  }

  RetrainResult out;
  Sgd opt({cfg.retrain_lr, cfg.momentum, cfg.weight_decay});
  for (std::size_t epoch = 0; epoch < cfg.retrain_epochs; ++epoch) {
    EpochStats stats;
    try {
      stats = run_epoch(model, opt, x, y, w, 0.0, cfg.batch_size, rng, pseudo);
    } catch (const NumericError& e) {
      throw NumericError(std::string("retrain aborted in epoch ") + std::to_string(epoch) + ": " + e.what());
    }
    out.loss_curve.push_back(stats.mean_loss);
  }
  out.model = std::move(model);
  return out;
}

struct RoundMetrics {
  std::size_t round = 0;  // 1-based
  double keep_fraction = 0.0;
  double target_accuracy = 0.0;  // mean class accuracy on the target test split
  double source_accuracy = 0.0;  // mean class accuracy on the labeled source split
  std::vector<std::size_t> kept_count_per_class;
  std::optional<double> mean_uncertainty_kept;
  std::optional<double> mean_uncertainty_discarded;
  std::size_t kept_count = 0;
  std::size_t discarded_count = 0;
  std::vector<double> loss_curve;
  std::vector<double> em_loss_curve;
  std::size_t em_reseeds = 0;
};

inline void to_json(nlohmann::json& j, const RoundMetrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j = nlohmann::json{{"round", m.round},
                     {"keep_fraction", m.keep_fraction},
                     {"target_accuracy", m.target_accuracy},
                     {"source_accuracy", m.source_accuracy},
                     {"kept_count_per_class", m.kept_count_per_class},
                     {"mean_uncertainty_kept", opt(m.mean_uncertainty_kept)},
                     {"mean_uncertainty_discarded", opt(m.mean_uncertainty_discarded)},
                     {"kept_count", m.kept_count},
                     {"discarded_count", m.discarded_count},
                     {"loss_curve", m.loss_curve},
                     {"em_loss_curve", m.em_loss_curve},
                     {"em_reseeds", m.em_reseeds}};
}

struct RoundResult {
  MlpModel model;
  BasisSet basis;  // final EM basis (the input basis when EM is skipped)
  RoundMetrics metrics;
  std::vector<SoftPseudoLabel> pseudo_labels;
  SelectionResult selection;
};

namespace detail {
inline std::optional<double> mean_uncertainty(std::span<const SelectionEntry> entries) {
  if (entries.empty()) return std::nullopt;
  double s = 0.0;
  for (const auto& e : entries) s += e.uncertainty;
  return s / static_cast<double>(entries.size());
}
}  // namespace detail

// One round: pseudo-label generation (EM) -> selection -> retraining.
// `round` is 0-based and picks the keep fraction. With policy `none` the
// round skips EM and selection and fine-tunes on the labeled rows only.
inline RoundResult run_round(const MlpModel& model, const BasisSet& basis, const DomainSplits& data,
                             const RoundConfig& cfg, std::size_t round, SeededRng& rng) {
  RoundResult out;
  out.basis = basis;
  out.metrics.round = round + 1;
  out.metrics.keep_fraction = cfg.keep_fraction_for_round(round);

  SeededRng em_rng = rng.split(1);
  SeededRng select_rng = rng.split(2);
  SeededRng train_rng = rng.split(3);

  if (cfg.selection != SelectionPolicy::none && data.unlabeled.size() > 0) {
    Dataset em_data;
    em_data.class_count = data.labeled.class_count;
    em_data.features = forward(model, data.labeled.features).features;
    em_data.labels = data.labeled.labels;
    Dataset target;
    target.class_count = em_data.class_count;
    target.features = forward(model, data.unlabeled.features).features;
    target.labels.assign(data.unlabeled.size(), kUnlabeled);
    em_data = concat(em_data, target);

    EmResult em = run_em(em_data, basis, model.head(), cfg, em_rng);
    for (auto& p : em.pseudo_labels) p.sample_index -= data.labeled.size();
    out.basis = em.state.basis;
    out.metrics.em_loss_curve = em.loss_curve;
    out.metrics.em_reseeds = em.reseeds;
    out.pseudo_labels = std::move(em.pseudo_labels);
    out.selection = select_samples(out.pseudo_labels, out.metrics.keep_fraction, select_rng,
                                   SelectionOptions::from(cfg));
  } else {
    out.selection.group_sizes.assign(static_cast<std::size_t>(data.labeled.class_count), 0);
    out.selection.keep_fraction_used.assign(out.selection.group_sizes.size(), 0.0);
  }

  RetrainResult rt = retrain(model, data.labeled, out.selection, data.unlabeled, cfg, train_rng);
  out.model = std::move(rt.model);

  auto& m = out.metrics;
  m.loss_curve = std::move(rt.loss_curve);
  m.kept_count_per_class = out.selection.kept_per_class();
  m.kept_count = out.selection.kept.size();
  m.discarded_count = out.selection.discarded.size();
  m.mean_uncertainty_kept = detail::mean_uncertainty(out.selection.kept);
  m.mean_uncertainty_discarded = detail::mean_uncertainty(out.selection.discarded);
  m.source_accuracy = evaluate(out.model, data.labeled).mean_class_accuracy;
  if (data.test.size() > 0) m.target_accuracy = evaluate(out.model, data.test).mean_class_accuracy;
  log::info("round ", m.round, ": kept ", m.kept_count, " discarded ", m.discarded_count,
            " target acc ", m.target_accuracy, " source acc ", m.source_accuracy);
  return out;
}

struct SelfTrainingRun {
  Stage1Result stage1;
  double stage1_target_accuracy = 0.0;
  MlpModel model;
  std::vector<RoundResult> rounds;
};

// Bases for a round after the first: the ATT block of the current model
// refined against its labeled features, under the same orthogonality
// ceiling as stage 1.
inline BasisSet reextract_basis(const MlpModel& model, const Dataset& labeled, const RoundConfig& cfg,
                                std::optional<double> ortho_ceiling = std::nullopt) {
  const Dataset rows = labeled.subset(labeled.labeled_indices());
  const Matrix features = forward(model, rows.features).features;
  return refine_basis(features, one_hot(rows.labels, rows.class_count), BasisSet{model.att}, cfg, ortho_ceiling).basis;
}

// Stage 1, then cfg.rounds rounds following the keep-fraction schedule.
inline SelfTrainingRun run_self_training(const DomainSplits& data, const RoundConfig& cfg, SeededRng& rng) {
  cfg.validate();
  SelfTrainingRun run;
  SeededRng stage1_rng = rng.split(0);
  run.stage1 = train_stage1(data.labeled, cfg, stage1_rng);
  run.model = run.stage1.model;
  if (data.test.size() > 0) run.stage1_target_accuracy = evaluate(run.model, data.test).mean_class_accuracy;

  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    const BasisSet basis = r == 0 ? run.stage1.basis : reextract_basis(run.model, data.labeled, cfg, run.stage1.ortho_ceiling);
    SeededRng round_rng = rng.split(100 + r);
    run.rounds.push_back(run_round(run.model, basis, data, cfg, r, round_rng));
    run.model = run.rounds.back().model;
  }
  return run;
}

// JSON lines, one object per unlabeled sample in kept-then-discarded order.
inline void write_selection(const std::string& path, const SelectionResult& sel) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  auto emit = [&](const SelectionEntry& e, bool kept) {
    nlohmann::json j{{"index", e.index}, {"class", e.group},           {"score", e.score},
                     {"uncertainty", e.uncertainty}, {"kept", kept}};
    if (kept) {
      j["hard_label"] = e.hard_label;
      j["weight"] = e.weight;
    }
    out << j.dump() << '\n';
  };
  for (const auto& e : sel.kept) emit(e, true);
  for (const auto& e : sel.discarded) emit(e, false);
  if (!out) throw IoError("short write to " + path);
}

}  // namespace uast
