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

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "uast/error.hpp"

namespace uast {

enum class SelectionPolicy { variance, confidence, none };
enum class HardLabelMode { sample, argmax };
enum class LatentMode { mixture, blended };
enum class WeightNormalization { batch, global };

inline const char* to_string(SelectionPolicy p) {
  switch (p) {
    case SelectionPolicy::variance: return "variance";
    case SelectionPolicy::confidence: return "confidence";
    case SelectionPolicy::none: return "none";
  }
  return "?";
}

inline SelectionPolicy parse_selection_policy(const std::string& s) {
  if (s == "variance") return SelectionPolicy::variance;
  if (s == "confidence") return SelectionPolicy::confidence;
  if (s == "none") return SelectionPolicy::none;
  throw UsageError("unknown selection policy '" + s + "' (variance|confidence|none)");
}

// Every knob of the stage-1 fit and of one self-training round.
struct RoundConfig {
  // Basis count K; 0 resolves to 2 * class_count.
  std::size_t basis_count = 0;
  double recon_weight = 1.0;
  double gram_weight = 1.0;
  double ortho_weight = 1.0;

  std::vector<std::size_t> hidden = {32, 32};
  std::size_t stage1_epochs = 30;
  double stage1_lr = 0.05;
  std::size_t stage1_refine_steps = 500;
  double refine_lr = 1e-2;
  double refine_tol = 1e-6;

  double temp = 1.0;               // e-step softmax temperature
  std::size_t em_iterations = 10;  // T
  std::size_t mc_samples = 64;     // m
  double em_head_lr = 0.1;         // 0 freezes the pseudo-label head
  LatentMode latent_mode = LatentMode::mixture;

  std::vector<double> keep_fractions = {0.2, 0.4, 0.6};
  std::size_t rounds = 3;
  std::size_t retrain_epochs = 4;
  double retrain_lr = 5e-4;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  std::size_t batch_size = 32;
  double var_floor = 1e-6;
  WeightNormalization weight_normalization = WeightNormalization::batch;
  SelectionPolicy selection = SelectionPolicy::variance;
  HardLabelMode hard_labels = HardLabelMode::sample;
  std::uint64_t seed = 0;

  std::size_t resolved_basis_count(int class_count) const {
    return basis_count != 0 ? basis_count : 2 * static_cast<std::size_t>(class_count);
  }

  // Rounds past the end of the schedule reuse its last entry.
  double keep_fraction_for_round(std::size_t round) const {
    return keep_fractions[std::min(round, keep_fractions.size() - 1)];
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (rounds < 1) fail("rounds must be >= 1");
    if (retrain_epochs < 1) fail("retrain_epochs must be >= 1");
    if (keep_fractions.empty()) fail("keep_fractions must not be empty");
    for (double f : keep_fractions)
      if (!(f > 0.0 && f <= 1.0)) fail("keep_fractions entries must lie in (0, 1]");
    if (!(var_floor > 0.0)) fail("var_floor must be > 0");
    if (!(temp > 0.0)) fail("temp must be > 0");
    if (em_iterations < 1) fail("em_iterations must be >= 1");
    if (mc_samples < 2) fail("mc_samples must be >= 2");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (!(retrain_lr > 0.0) || !(stage1_lr > 0.0) || !(refine_lr > 0.0)) fail("learning rates must be > 0");
    if (em_head_lr < 0.0) fail("em_head_lr must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) fail("momentum must lie in [0, 1)");
    if (weight_decay < 0.0) fail("weight_decay must be >= 0");
    if (hidden.empty()) fail("hidden must list at least one layer width");
    for (std::size_t w : hidden)
      if (w == 0) fail("hidden widths must be positive");
  }
};

inline void to_json(nlohmann::json& j, const RoundConfig& c) {
  j = nlohmann::json{
      {"basis_count", c.basis_count},
      {"recon_weight", c.recon_weight},
      {"gram_weight", c.gram_weight},
      {"ortho_weight", c.ortho_weight},
      {"hidden", c.hidden},
      {"stage1_epochs", c.stage1_epochs},
      {"stage1_lr", c.stage1_lr},
      {"stage1_refine_steps", c.stage1_refine_steps},
      {"refine_lr", c.refine_lr},
      {"refine_tol", c.refine_tol},
      {"temp", c.temp},
      {"em_iterations", c.em_iterations},
      {"mc_samples", c.mc_samples},
      {"em_head_lr", c.em_head_lr},
      {"latent_mode", c.latent_mode == LatentMode::mixture ? "mixture" : "blended"},
      {"keep_fractions", c.keep_fractions},
      {"rounds", c.rounds},
      {"retrain_epochs", c.retrain_epochs},
      {"retrain_lr", c.retrain_lr},
      {"momentum", c.momentum},
      {"weight_decay", c.weight_decay},
      {"batch_size", c.batch_size},
      {"var_floor", c.var_floor},
      {"weight_normalization", c.weight_normalization == WeightNormalization::batch ? "batch" : "global"},
      {"selection", to_string(c.selection)},
      {"hard_labels", c.hard_labels == HardLabelMode::sample ? "sample" : "argmax"},
      {"seed", c.seed},
  };
}

// Missing keys keep their defaults; unknown keys are rejected so typos do
// not silently fall back to defaults.
inline void from_json(const nlohmann::json& j, RoundConfig& c) {
  if (!j.is_object()) throw ConfigError("round config must be a JSON object");
  static const std::set<std::string> known = {
      "basis_count", "recon_weight", "gram_weight", "ortho_weight", "hidden", "stage1_epochs",
      "stage1_lr", "stage1_refine_steps", "refine_lr", "refine_tol", "temp", "em_iterations",
      "mc_samples", "em_head_lr", "latent_mode", "keep_fractions", "rounds", "retrain_epochs",
      "retrain_lr", "momentum", "weight_decay", "batch_size", "var_floor", "weight_normalization", "selection",
      "hard_labels", "seed"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown round config key '" + key + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("basis_count", c.basis_count);
    get("recon_weight", c.recon_weight);
    get("gram_weight", c.gram_weight);
    get("ortho_weight", c.ortho_weight);
    get("hidden", c.hidden);
    get("stage1_epochs", c.stage1_epochs);
    get("stage1_lr", c.stage1_lr);
    get("stage1_refine_steps", c.stage1_refine_steps);
    get("refine_lr", c.refine_lr);
    get("refine_tol", c.refine_tol);
    get("temp", c.temp);
    get("em_iterations", c.em_iterations);
    get("mc_samples", c.mc_samples);
    get("em_head_lr", c.em_head_lr);
    if (j.contains("latent_mode")) {
      const auto s = j.at("latent_mode").get<std::string>();
      if (s == "mixture") c.latent_mode = LatentMode::mixture;
      else if (s == "blended") c.latent_mode = LatentMode::blended;
      else throw ConfigError("latent_mode must be mixture|blended");
    }
    get("keep_fractions", c.keep_fractions);
    get("rounds", c.rounds);
    get("retrain_epochs", c.retrain_epochs);
    get("retrain_lr", c.retrain_lr);
    get("momentum", c.momentum);
    get("weight_decay", c.weight_decay);
    get("batch_size", c.batch_size);
    get("var_floor", c.var_floor);
    if (j.contains("weight_normalization")) {
      const auto s = j.at("weight_normalization").get<std::string>();
      if (s == "batch") c.weight_normalization = WeightNormalization::batch;
      else if (s == "global") c.weight_normalization = WeightNormalization::global;
      else throw ConfigError("weight_normalization must be batch|global");
    }
    if (j.contains("selection")) c.selection = parse_selection_policy(j.at("selection").get<std::string>());
    if (j.contains("hard_labels")) {
      const auto s = j.at("hard_labels").get<std::string>();
      if (s == "sample") c.hard_labels = HardLabelMode::sample;
      else if (s == "argmax") c.hard_labels = HardLabelMode::argmax;
      else throw ConfigError("hard_labels must be sample|argmax");
    }
    get("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("round config: ") + e.what());
  }
}

}  // namespace uast
