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

#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "uast/checkpoint.hpp"
#include "uast/config.hpp"
#include "uast/data_io.hpp"
#include "uast/error.hpp"
#include "uast/log.hpp"
#include "uast/selftrain.hpp"

namespace uast::cli {

namespace fs = std::filesystem;
using nlohmann::json;

struct CsvSpec {
  std::string labeled;
  std::string unlabeled;
  std::string test;
  std::optional<int> classes;
};

struct ExperimentConfig {
  std::optional<SyntheticSpec> synthetic;
  std::optional<std::uint64_t> dataset_seed;  // synthetic only; defaults to the run seed
  std::optional<CsvSpec> csv;
  RoundConfig round;
  std::string output_dir = "runs";
  std::vector<std::uint64_t> seeds = {0};

  void validate() const {
    if (synthetic.has_value() == csv.has_value()) {
      throw ConfigError("dataset must specify exactly one of 'synthetic' or 'csv'");
    }
    if (seeds.empty()) throw ConfigError("seed list must not be empty");
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
    round.validate();
  }
};

inline SyntheticSpec parse_synthetic(const json& j) {
  SyntheticSpec s;
  if (j.contains("kind")) s.kind = parse_synthetic_kind(j.at("kind").get<std::string>());
  if (j.contains("n_source")) j.at("n_source").get_to(s.n_source);
  if (j.contains("n_target")) j.at("n_target").get_to(s.n_target);
  if (j.contains("rotation")) j.at("rotation").get_to(s.rotation_deg);
  if (j.contains("translation")) j.at("translation").get_to(s.translation);
  if (j.contains("noise")) j.at("noise").get_to(s.noise);
  if (j.contains("dim")) j.at("dim").get_to(s.dim);
  if (j.contains("classes")) j.at("classes").get_to(s.classes);
  if (j.contains("center_box")) j.at("center_box").get_to(s.center_box);
  return s;
}

inline json synthetic_to_json(const SyntheticSpec& s) {
  return json{{"kind", to_string(s.kind)}, {"n_source", s.n_source}, {"n_target", s.n_target},
              {"rotation", s.rotation_deg}, {"translation", s.translation}, {"noise", s.noise},
              {"dim", s.dim}, {"classes", s.classes}, {"center_box", s.center_box}};
}

// {"dataset": {"synthetic": {...}, "seed": n} | {"csv": {...}},
//  "round": {...}, "output_dir": "...", "seeds": [...]}
inline ExperimentConfig parse_experiment_config(const json& j) {
  ExperimentConfig cfg;
  try {
    const json& ds = j.at("dataset");
    if (ds.contains("synthetic")) cfg.synthetic = parse_synthetic(ds.at("synthetic"));
    if (ds.contains("seed")) cfg.dataset_seed = ds.at("seed").get<std::uint64_t>();
    if (ds.contains("csv")) {
      const json& c = ds.at("csv");
      CsvSpec spec;
      c.at("labeled").get_to(spec.labeled);
      if (c.contains("unlabeled")) c.at("unlabeled").get_to(spec.unlabeled);
      if (c.contains("test")) c.at("test").get_to(spec.test);
      if (c.contains("classes")) spec.classes = c.at("classes").get<int>();
      cfg.csv = spec;
    }
    if (j.contains("round")) cfg.round = j.at("round").get<RoundConfig>();
    if (j.contains("output_dir")) j.at("output_dir").get_to(cfg.output_dir);
    if (j.contains("seeds")) j.at("seeds").get_to(cfg.seeds);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return parse_experiment_config(j);
}

// Splits for one seed. CSV class count: declared, else 1 + the largest label
// across all provided files.
inline DomainSplits materialize(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.synthetic) return gen_synthetic(*cfg.synthetic, cfg.dataset_seed.value_or(seed));
  const CsvSpec& c = *cfg.csv;
  DomainSplits s;
  s.labeled = load_csv(c.labeled, c.classes);
  if (!c.unlabeled.empty()) s.unlabeled = load_csv(c.unlabeled, c.classes);
  if (!c.test.empty()) s.test = load_csv(c.test, c.classes);
  int classes = std::max({s.labeled.class_count, s.unlabeled.class_count, s.test.class_count});
  if (c.classes) classes = *c.classes;
  for (Dataset* d : {&s.labeled, &s.unlabeled, &s.test}) {
    d->class_count = classes;
    if (d->size() == 0) d->features = Matrix(0, s.labeled.dim());
    if (d->dim() != s.labeled.dim()) throw ConsistencyError("csv splits disagree on feature count");
  }
  std::fill(s.unlabeled.labels.begin(), s.unlabeled.labels.end(), kUnlabeled);
  s.labeled.validate();
  s.test.validate();
  return s;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

inline json run_metrics_json(const SelfTrainingRun& run, std::uint64_t seed, const RoundConfig& cfg) {
  json rounds = json::array();
  for (const auto& r : run.rounds) rounds.push_back(r.metrics);
  return json{{"seed", seed},
              {"policy", to_string(cfg.selection)},
              {"stage1",
               {{"target_accuracy", run.stage1_target_accuracy},
                {"ortho_at_init", run.stage1.ortho_at_init},
                {"ortho_after_fit", run.stage1.ortho_after_fit},
                {"ortho_refined", run.stage1.refine.final.ortho},
                {"refine_steps", run.stage1.refine.steps},
                {"loss_curve", run.stage1.loss_curve}}},
              {"rounds", rounds},
              {"final_target_accuracy", run.rounds.empty() ? run.stage1_target_accuracy
                                                           : run.rounds.back().metrics.target_accuracy}};
}

// Runs one seed and writes its artifacts under <output_dir>/seed_<seed>/.
// Returns the final target accuracy.
inline double train_one_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  RoundConfig rc = cfg.round;
  rc.seed = seed;
  const DomainSplits data = materialize(cfg, seed);
  SeededRng rng(seed);
  const SelfTrainingRun run = run_self_training(data, rc, rng);

  const fs::path dir = fs::path(cfg.output_dir) / ("seed_" + std::to_string(seed));
  fs::create_directories(dir);
  write_text(dir / "metrics.json", run_metrics_json(run, seed, rc).dump(2) + "\n");
  write_text(dir / "config.json", json(rc).dump(2) + "\n");
  write_text(dir / "basis_stage1.json", json(run.stage1.basis).dump() + "\n");
  for (const auto& r : run.rounds) {
    const std::string tag = "round" + std::to_string(r.metrics.round);
    write_pseudo_labels((dir / ("pseudo_labels_" + tag + ".jsonl")).string(), r.pseudo_labels);
    write_selection((dir / ("selection_" + tag + ".jsonl")).string(), r.selection);
    write_text(dir / ("basis_" + tag + ".json"), json(r.basis).dump() + "\n");
  }
  save_checkpoint(run.model, (dir / "checkpoint.uast").string());
  return run.rounds.empty() ? run.stage1_target_accuracy : run.rounds.back().metrics.target_accuracy;
}

struct TrainOverrides {
  std::optional<std::string> selection;
  std::optional<std::uint64_t> seed;
  std::optional<long long> rounds;
  bool parallel_seeds = false;
};

inline void report_error(std::ostream& err, const std::string& kind, const std::string& message) {
  err << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

inline int cmd_train(const std::string& config_path, const TrainOverrides& ov, std::ostream& out,
                     std::ostream& err) {
  try {
    ExperimentConfig cfg = load_experiment_config(config_path);
    if (ov.selection) cfg.round.selection = parse_selection_policy(*ov.selection);
    if (ov.seed) cfg.seeds = {*ov.seed};
    if (ov.rounds) {
      if (*ov.rounds < 1) throw UsageError("--rounds must be >= 1");
      cfg.round.rounds = static_cast<std::size_t>(*ov.rounds);
    }
    cfg.validate();
    fs::create_directories(cfg.output_dir);

    std::vector<double> finals(cfg.seeds.size());
    if (ov.parallel_seeds && cfg.seeds.size() > 1) {
      std::vector<std::thread> workers;
      std::vector<std::string> failures(cfg.seeds.size());
      for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
        workers.emplace_back([&, i] {
          try {
            finals[i] = train_one_seed(cfg, cfg.seeds[i]);
          } catch (const std::exception& e) {
            failures[i] = e.what();
          }
        });
      }
      for (auto& w : workers) w.join();
      for (std::size_t i = 0; i < failures.size(); ++i) {
        if (!failures[i].empty()) throw Error("seed " + std::to_string(cfg.seeds[i]) + ": " + failures[i]);
      }
    } else {
      for (std::size_t i = 0; i < cfg.seeds.size(); ++i) finals[i] = train_one_seed(cfg, cfg.seeds[i]);
    }

    double mean = 0.0;
    for (double f : finals) mean += f;
    mean /= static_cast<double>(finals.size());
    const json summary{{"policy", to_string(cfg.round.selection)},
                       {"seeds", cfg.seeds},
                       {"final_target_accuracy", finals},
                       {"mean_final_target_accuracy", mean}};
    write_text(fs::path(cfg.output_dir) / "summary.json", summary.dump(2) + "\n");
    out << summary.dump() << '\n';
    return 0;
  } catch (const UsageError& e) {
    report_error(err, e.kind(), e.what());
    return 2;
  } catch (const Error& e) {
    report_error(err, e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    report_error(err, "internal", e.what());
    return 1;
  }
}

inline json accuracy_json(const AccuracyReport& rep) {
  return json{{"per_class_accuracy", rep.per_class},
              {"support", rep.support},
              {"mean_class_accuracy", rep.mean_class_accuracy},
              {"accuracy", rep.accuracy}};
}

inline AccuracyReport eval_checkpoint(const MlpModel& model, const Dataset& data) {
  if (data.dim() != model.input_dim()) {
    throw ConsistencyError("data has " + std::to_string(data.dim()) + " features, checkpoint expects " +
                           std::to_string(model.input_dim()));
  }
  return evaluate(model, data);
}

inline int cmd_eval(const std::string& checkpoint_path, const std::string& data_path, std::ostream& out,
                    std::ostream& err) {
  try {
    const MlpModel model = load_checkpoint(checkpoint_path);
    const Dataset data = load_csv(data_path, static_cast<int>(model.class_count()));
    out << accuracy_json(eval_checkpoint(model, data)).dump() << '\n';
    return 0;
  } catch (const Error& e) {
    report_error(err, e.kind(), e.what());
    return 1;
  }
}

inline int cmd_gen(const SyntheticSpec& spec, std::uint64_t seed, const std::string& out_dir, std::ostream& out,
                   std::ostream& err) {
  try {
    const DomainSplits s = gen_synthetic(spec, seed);
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    write_csv((dir / "labeled.csv").string(), s.labeled, true);
    write_csv((dir / "unlabeled.csv").string(), s.unlabeled, false);
    write_csv((dir / "test.csv").string(), s.test, true);
    out << json{{"labeled", s.labeled.size()}, {"unlabeled", s.unlabeled.size()}, {"test", s.test.size()},
                {"dim", s.labeled.dim()}, {"classes", s.labeled.class_count}}
               .dump()
        << '\n';
    return 0;
  } catch (const UsageError& e) {
    report_error(err, e.kind(), e.what());
    return 2;
  } catch (const Error& e) {
    report_error(err, e.kind(), e.what());
    return 1;
  }
}

}  // namespace uast::cli
