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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "uast/data_io.hpp"
#include "uast/selftrain.hpp"

namespace uast {
namespace {

SoftPseudoLabel label(std::size_t index, std::vector<double> mean, double unc) {
  SoftPseudoLabel p;
  p.sample_index = index;
  p.mean = std::move(mean);
  p.var.assign(p.mean.size(), unc / static_cast<double>(p.mean.size()));
  p.uncertainty = unc;
  return p;
}

std::vector<SoftPseudoLabel> ten_labels() {
  const std::vector<double> unc{0.5, 0.1, 0.3, 0.9, 0.2, 0.05, 0.7, 0.3, 0.6, 0.15};
  std::vector<SoftPseudoLabel> out;
  for (std::size_t i = 0; i < unc.size(); ++i) {
    const bool first = i % 3 != 0;  // six rows lean to class 0, four to class 1
    out.push_back(label(i, first ? std::vector<double>{0.7, 0.3} : std::vector<double>{0.2, 0.8}, unc[i]));
  }
  return out;
}

TEST(SelectSamples, FullFractionKeepsEverything) {
  const auto labels = ten_labels();
  SeededRng rng(0);
  const auto sel = select_samples(labels, 1.0, rng);
  EXPECT_EQ(sel.kept.size(), labels.size());
  EXPECT_TRUE(sel.discarded.empty());
  EXPECT_TRUE(rank_consistent(sel));
}

TEST(SelectSamples, KeepsLowerUncertaintyOfAPair) {
  const std::vector<SoftPseudoLabel> labels{label(0, {0.9, 0.1}, 0.1), label(1, {0.9, 0.1}, 0.9)};
  SeededRng rng(0);
  const auto sel = select_samples(labels, 0.5, rng);
  ASSERT_EQ(sel.kept.size(), 1u);
  EXPECT_EQ(sel.kept[0].index, 0u);
  ASSERT_EQ(sel.discarded.size(), 1u);
  EXPECT_EQ(sel.discarded[0].index, 1u);
}

TEST(SelectSamples, MatchesExhaustiveRankingOracle) {
  const auto labels = ten_labels();
  SeededRng rng(1);
  const auto sel = select_samples(labels, 0.4, rng);

  // Oracle: for each class, sort (uncertainty, index) pairs and keep ceil(0.4 n).
  std::set<std::size_t> expected;
  for (std::size_t c = 0; c < 2; ++c) {
    std::vector<std::pair<double, std::size_t>> members;
    for (const auto& p : labels)
      if (p.predicted_class() == c) members.emplace_back(p.uncertainty, p.sample_index);
    std::sort(members.begin(), members.end());
    const auto keep = static_cast<std::size_t>(std::ceil(0.4 * static_cast<double>(members.size()) - 1e-9));
    for (std::size_t i = 0; i < keep; ++i) expected.insert(members[i].second);
  }
  std::set<std::size_t> kept;
  for (const auto& e : sel.kept) kept.insert(e.index);
  EXPECT_EQ(kept, expected);
  EXPECT_TRUE(rank_consistent(sel));
}

TEST(SelectSamples, PartitionsAndHonorsFractionPerClass) {
  SeededRng gen(3);
  std::vector<SoftPseudoLabel> labels;
  for (std::size_t i = 0; i < 97; ++i) {
    const double a = gen.uniform();
    labels.push_back(label(i, {a, (1 - a) * 0.5, (1 - a) * 0.5}, gen.uniform()));
  }
  for (double f : {0.1, 0.2, 0.37, 0.6, 0.99}) {
    SeededRng rng(4);
    const auto sel = select_samples(labels, f, rng);
    std::set<std::size_t> all;
    for (const auto& e : sel.kept) all.insert(e.index);
    for (const auto& e : sel.discarded) EXPECT_TRUE(all.insert(e.index).second) << "overlap at " << e.index;
    EXPECT_EQ(all.size(), labels.size());
    const auto per = sel.kept_per_class();
    for (std::size_t c = 0; c < per.size(); ++c) {
      EXPECT_LE(std::abs(static_cast<double>(per[c]) - f * static_cast<double>(sel.group_sizes[c])), 1.0);
    }
    EXPECT_TRUE(rank_consistent(sel));
  }
}

TEST(SelectSamples, VarianceWeightsAreInverseUncertaintyWithFloor) {
  const std::vector<SoftPseudoLabel> labels{label(0, {0.9, 0.1}, 0.1), label(1, {0.8, 0.2}, 0.4),
                                            label(2, {0.7, 0.3}, 0.0)};
  SeededRng rng(2);
  const auto sel = select_samples(labels, 1.0, rng);
  std::vector<double> w(3);
  for (const auto& e : sel.kept) w[e.index] = e.weight;
  EXPECT_NEAR(w[0] / w[1], 4.0, 1e-12);
  EXPECT_DOUBLE_EQ(w[2], 1e6);
  for (double v : w) EXPECT_TRUE(std::isfinite(v) && v > 0.0);
}

TEST(SelectSamples, ConfidencePolicyRanksByMaxMeanWithUnitWeights) {
  const std::vector<SoftPseudoLabel> labels{label(0, {0.6, 0.4}, 0.01), label(1, {0.95, 0.05}, 0.5),
                                            label(2, {0.8, 0.2}, 0.2)};
  SeededRng rng(2);
  SelectionOptions opts;
  opts.policy = SelectionPolicy::confidence;
  const auto sel = select_samples(labels, 0.5, rng, opts);
  ASSERT_EQ(sel.kept.size(), 2u);
  EXPECT_EQ(sel.kept[0].index, 1u);
  EXPECT_EQ(sel.kept[1].index, 2u);
  for (const auto& e : sel.kept) EXPECT_EQ(e.weight, 1.0);
  EXPECT_NEAR(sel.kept[0].score, 0.05, 1e-15);
}

TEST(SelectSamples, HardLabelsFollowMeanOrArgmax) {
  std::vector<SoftPseudoLabel> labels;
  for (std::size_t i = 0; i < 4000; ++i) labels.push_back(label(i, {0.3, 0.7}, 0.1));
  SeededRng rng(6);
  const auto sampled = select_samples(labels, 1.0, rng);
  double ones = 0.0;
  for (const auto& e : sampled.kept) ones += e.hard_label == 1;
  EXPECT_NEAR(ones / 4000.0, 0.7, 0.03);

  SelectionOptions opts;
  opts.hard_labels = HardLabelMode::argmax;
  SeededRng rng2(6);
  for (const auto& e : select_samples(labels, 1.0, rng2, opts).kept) EXPECT_EQ(e.hard_label, 1);
}

TEST(SelectSamples, EmptyGroupIsSkippedAndBadInputsRejected) {
  const std::vector<SoftPseudoLabel> labels{label(0, {0.1, 0.1, 0.8}, 0.2), label(1, {0.1, 0.1, 0.8}, 0.3)};
  SeededRng rng(0);
  const auto sel = select_samples(labels, 0.5, rng);
  EXPECT_EQ(sel.group_sizes, (std::vector<std::size_t>{0, 0, 2}));
  EXPECT_EQ(sel.kept.size(), 1u);
  EXPECT_THROW(select_samples(std::vector<SoftPseudoLabel>{}, 0.5, rng), ContractError);
  EXPECT_THROW(select_samples(labels, 0.0, rng), ParameterError);
  EXPECT_THROW(select_samples(labels, 1.5, rng), ParameterError);
}

TEST(KeepCount, CeilingWithSlack) {
  EXPECT_EQ(keep_count(0.6, 5), 3u);
  EXPECT_EQ(keep_count(0.2, 7), 2u);
  EXPECT_EQ(keep_count(1.0, 9), 9u);
  EXPECT_EQ(keep_count(0.01, 3), 1u);
}

TEST(NormalizedWeights, EqualVarianceGivesUnitWeights) {
  SelectionResult sel;
  for (std::size_t i = 0; i < 5; ++i) sel.kept.push_back({i, 0, 0.2, 0.2, 0, 5.0});
  for (double w : normalized_weights(sel)) EXPECT_DOUBLE_EQ(w, 1.0);
}

TEST(NormalizedWeights, MeanOneAndRatiosPreserved) {
  SelectionResult sel;
  sel.kept.push_back({0, 0, 0.1, 0.1, 0, 10.0});
  sel.kept.push_back({1, 0, 0.4, 0.4, 0, 2.5});
  const auto w = normalized_weights(sel);
  EXPECT_NEAR((w[0] + w[1]) / 2.0, 1.0, 1e-15);
  EXPECT_NEAR(w[0] / w[1], 4.0, 1e-12);
}

DomainSplits toy_splits(std::uint64_t seed, std::size_t n = 40) {
  SyntheticSpec spec;
  spec.n_source = n;
  spec.n_target = n;
  spec.rotation_deg = 30.0;
  return gen_synthetic(spec, seed);
}

RoundConfig quick_config() {
  RoundConfig cfg;
  cfg.hidden = {8};
  cfg.stage1_epochs = 5;
  cfg.stage1_refine_steps = 20;
  cfg.em_iterations = 2;
  cfg.mc_samples = 8;
  cfg.retrain_epochs = 1;
  cfg.rounds = 1;
  return cfg;
}

TEST(Retrain, EmptySelectionIsLabeledFineTuning) {
  const DomainSplits data = toy_splits(1, 24);
  RoundConfig cfg = quick_config();
  cfg.retrain_epochs = 2;
  SeededRng init(3);
  const MlpModel model = make_mlp(2, cfg.hidden, 2, 4, init);

  SelectionResult none;
  SeededRng a(7);
  const RetrainResult got = retrain(model, data.labeled, none, data.unlabeled, cfg, a);

  MlpModel expected = model;
  Sgd opt({cfg.retrain_lr, cfg.momentum, cfg.weight_decay});
  SeededRng b(7);
  const std::vector<double> ones(data.labeled.size(), 1.0);
  for (std::size_t e = 0; e < cfg.retrain_epochs; ++e)
    run_epoch(expected, opt, data.labeled.features, data.labeled.labels, ones, 0.0, cfg.batch_size, b);
  for (std::size_t l = 0; l < model.layers.size(); ++l) EXPECT_EQ(got.model.layers[l].weight, expected.layers[l].weight);
}

TEST(Retrain, PerBatchAndGlobalNormalizationAgreeForEqualWeights) {
  const DomainSplits data = toy_splits(2, 24);
  RoundConfig cfg = quick_config();
  SeededRng init(3);
  const MlpModel model = make_mlp(2, cfg.hidden, 2, 4, init);
  SelectionResult sel;
  for (std::size_t i = 0; i < 10; ++i) sel.kept.push_back({i, 0, 0.3, 0.3, static_cast<int>(i % 2), 1.0 / 0.3});
  SeededRng a(1), b(1);
  const auto batch = retrain(model, data.labeled, sel, data.unlabeled, cfg, a);
  cfg.weight_normalization = WeightNormalization::global;
  const auto global = retrain(model, data.labeled, sel, data.unlabeled, cfg, b);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const Matrix diff = batch.model.layers[l].weight - global.model.layers[l].weight;
    EXPECT_LT(frobenius_norm(diff), 1e-12);
  }
}

TEST(Retrain, RejectsOutOfRangeSelection) {
  const DomainSplits data = toy_splits(2, 12);
  RoundConfig cfg = quick_config();
  SeededRng init(3);
  const MlpModel model = make_mlp(2, cfg.hidden, 2, 4, init);
  SelectionResult sel;
  sel.kept.push_back({999, 0, 0.1, 0.1, 0, 1.0});
  SeededRng rng(0);
  EXPECT_THROW(retrain(model, data.labeled, sel, data.unlabeled, cfg, rng), ContractError);
}

TEST(RunRound, SmokeOnEightSamplesEmitsAllMetrics) {
  const DomainSplits data = toy_splits(4, 8);
  RoundConfig cfg = quick_config();
  cfg.em_iterations = 1;
  SeededRng rng(0);
  SeededRng s1 = rng.split(0);
  const auto st = train_stage1(data.labeled, cfg, s1);
  SeededRng rr = rng.split(100);
  const RoundResult res = run_round(st.model, st.basis, data, cfg, 0, rr);
  const nlohmann::json j = res.metrics;
  for (const char* key : {"round", "target_accuracy", "source_accuracy", "kept_count_per_class",
                          "mean_uncertainty_kept", "mean_uncertainty_discarded", "loss_curve"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(res.pseudo_labels.size(), 8u);
  EXPECT_EQ(res.metrics.kept_count + res.metrics.discarded_count, 8u);
  EXPECT_EQ(res.metrics.loss_curve.size(), 1u);
}

TEST(RunRound, DeterministicMetrics) {
  const DomainSplits data = toy_splits(5, 30);
  const RoundConfig cfg = quick_config();
  auto once = [&] {
    SeededRng rng(11);
    return nlohmann::json(run_self_training(data, cfg, rng).rounds.back().metrics).dump();
  };
  EXPECT_EQ(once(), once());
}

TEST(RunRound, NonePolicySkipsPseudoLabels) {
  const DomainSplits data = toy_splits(6, 30);
  RoundConfig cfg = quick_config();
  cfg.selection = SelectionPolicy::none;
  SeededRng rng(1);
  const auto run = run_self_training(data, cfg, rng);
  EXPECT_TRUE(run.rounds[0].pseudo_labels.empty());
  EXPECT_EQ(run.rounds[0].metrics.kept_count, 0u);
  EXPECT_FALSE(run.rounds[0].metrics.mean_uncertainty_kept.has_value());
}

TEST(RunSelfTraining, SingleRoundEqualsStageOnePlusOneRound) {
  const DomainSplits data = toy_splits(7, 30);
  const RoundConfig cfg = quick_config();
  SeededRng rng(21);
  const auto run = run_self_training(data, cfg, rng);

  SeededRng again(21);
  SeededRng s1 = again.split(0);
  const auto st = train_stage1(data.labeled, cfg, s1);
  SeededRng rr = again.split(100);
  const RoundResult one = run_round(st.model, st.basis, data, cfg, 0, rr);
  for (std::size_t l = 0; l < one.model.layers.size(); ++l)
    EXPECT_EQ(run.model.layers[l].weight, one.model.layers[l].weight);
}

TEST(RunSelfTraining, DefaultScheduleAppliedInOrder) {
  const DomainSplits data = toy_splits(8, 30);
  RoundConfig cfg = quick_config();
  cfg.rounds = 4;
  SeededRng rng(2);
  const auto run = run_self_training(data, cfg, rng);
  ASSERT_EQ(run.rounds.size(), 4u);
  const std::vector<double> expected{0.2, 0.4, 0.6, 0.6};
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_EQ(run.rounds[r].metrics.keep_fraction, expected[r]);
    EXPECT_EQ(run.rounds[r].metrics.round, r + 1);
    EXPECT_TRUE(rank_consistent(run.rounds[r].selection));
  }
}

TEST(RunSelfTraining, KeptSetIsLessUncertainOnRotatedMoons) {
  const DomainSplits data = toy_splits(9, 200);
  RoundConfig cfg;
  cfg.rounds = 1;
  cfg.stage1_refine_steps = 100;
  SeededRng rng(0);
  const auto run = run_self_training(data, cfg, rng);
  const auto& m = run.rounds[0].metrics;
  ASSERT_TRUE(m.mean_uncertainty_kept && m.mean_uncertainty_discarded);
  EXPECT_LT(*m.mean_uncertainty_kept, *m.mean_uncertainty_discarded);
}

}  // namespace
}  // namespace uast
