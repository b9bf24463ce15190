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

// uast: uncertainty-aware self-training driver.
//
//   uast gen   --kind two_moons --rotation 30 --out data/
//   uast train --config configs/two_moons.json [--selection variance|confidence|none]
//              [--seed N] [--rounds R] [--parallel-seeds]
//   uast eval  --checkpoint runs/seed_0/checkpoint.uast --data data/test.csv

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "uast/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-aware self-training"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "Generate a synthetic source/target dataset as CSV");
  std::string kind = "two_moons";
  std::string out_dir;
  uast::SyntheticSpec spec;
  std::uint64_t gen_seed = 0;
  gen->add_option("--kind", kind, "two_moons | blobs")->capture_default_str();
  gen->add_option("--rotation", spec.rotation_deg, "Target rotation in degrees")->capture_default_str();
  gen->add_option("--translation", spec.translation, "Target translation vector");
  gen->add_option("--noise", spec.noise, "Gaussian noise std")->capture_default_str();
  gen->add_option("--n-source", spec.n_source)->capture_default_str();
  gen->add_option("--n-target", spec.n_target)->capture_default_str();
  gen->add_option("--dim", spec.dim, "Blob dimension")->capture_default_str();
  gen->add_option("--classes", spec.classes, "Blob class count")->capture_default_str();
  gen->add_option("--seed", gen_seed)->capture_default_str();
  gen->add_option("--out", out_dir, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Run self-training for every configured seed");
  std::string config_path;
  uast::cli::TrainOverrides ov;
  std::string selection;
  std::uint64_t seed = 0;
  long long rounds = 0;
  train->add_option("--config", config_path, "Experiment config (JSON)")->required();
  auto* sel_opt = train->add_option("--selection", selection, "variance | confidence | none");
  auto* seed_opt = train->add_option("--seed", seed, "Run a single seed");
  auto* rounds_opt = train->add_option("--rounds", rounds, "Override the round count (>= 1)");
  train->add_flag("--parallel-seeds", ov.parallel_seeds, "Run seeds concurrently");

  auto* eval = app.add_subcommand("eval", "Per-class accuracy of a checkpoint on a labeled CSV");
  std::string checkpoint;
  std::string data_path;
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--data", data_path)->required();

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    try {
      spec.kind = uast::parse_synthetic_kind(kind);
    } catch (const uast::Error& e) {
      uast::cli::report_error(std::cerr, e.kind(), e.what());
      return 2;
    }
    return uast::cli::cmd_gen(spec, gen_seed, out_dir, std::cout, std::cerr);
  }
  if (train->parsed()) {
    if (*sel_opt) ov.selection = selection;
    if (*seed_opt) ov.seed = seed;
    if (*rounds_opt) ov.rounds = rounds;
    return uast::cli::cmd_train(config_path, ov, std::cout, std::cerr);
  }
  return uast::cli::cmd_eval(checkpoint, data_path, std::cout, std::cerr);
}
