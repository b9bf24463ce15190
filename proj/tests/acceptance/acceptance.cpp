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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.
//
//   uast_acceptance --cli <path to uast> --workdir <scratch dir>
//                   [--config <toy experiment config>]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "uast/cli.hpp"
#include "uast/uast.hpp"

#ifndef UAST_SOURCE_DIR
#define UAST_SOURCE_DIR "."
#endif

namespace {

namespace fs = std::filesystem;
using uast::Matrix;
using uast::SeededRng;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

int g_failures = 0;

void report(const char* name, const Outcome& o, double seconds, double budget) {
  const bool in_time = seconds < budget;
  const bool ok = o.pass && in_time;
  if (!ok) ++g_failures;
  std::printf("[%s] %-22s %s (%.1fs, budget %.0fs%s)\n", ok ? "PASS" : "FAIL", name, o.detail.c_str(), seconds,
              budget, in_time ? "" : ", over budget");
  std::fflush(stdout);
}

template <typename F>
void run(const char* name, double budget, F&& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  report(name, o, std::chrono::duration<double>(Clock::now() - t0).count(), budget);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// ---------------------------------------------------------------- gradients

// Entries below 1e-8 in absolute difference sit at the round-off level of a
// central difference with h = 1e-5; every other entry must meet 1e-4 relative.
uast::GradientComparison compare(const Matrix& analytic, const Matrix& numeric) {
  return uast::compare_gradients(analytic, numeric, 1e-4, 1e-8);
}

Outcome gradient_suite() {
  double worst = 0.0, worst_abs = 0.0;
  int failed = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SeededRng rng(SeededRng::split_seed(seed, 900));
    const std::size_t n = 2 + rng.below(31), d = 2 + rng.below(7), k = 1 + rng.below(4), c = 2 + rng.below(3);
    const Matrix x = oracle::random_matrix(n, d, rng);
    std::vector<int> labels(n);
    for (int& l : labels) l = static_cast<int>(rng.below(c));
    const Matrix y = uast::one_hot(labels, static_cast<int>(c));

    std::vector<uast::GradientComparison> checks;
    // Basis objective.
    const uast::BasisSet basis{oracle::random_matrix(k, d, rng)};
    checks.push_back(compare(
        uast::basis_objective_grad(x, y, basis),
        uast::finite_diff_grad([&](const Matrix& mu) { return uast::basis_objective(x, y, {mu}).total; }, basis.mu)));

    // Classifier: every parameter block of a one-hidden-layer model.
    const std::vector<std::size_t> hidden{1 + rng.below(6)};
    const uast::MlpModel model = uast::make_mlp(d, hidden, c, k, rng);
    std::vector<double> w(n);
    for (double& v : w) v = rng.uniform(0.1, 3.0);
    const uast::LossSpec spec{labels, w, 1.0};
    const uast::Gradients g = uast::backward(model, x, spec);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      checks.push_back(compare(g.weight[l], uast::finite_diff_grad(
                                                                [&](const Matrix& p) {
                                                                  uast::MlpModel m = model;
                                                                  m.layers[l].weight = p;
                                                                  return uast::weighted_loss(m, x, spec);
                                                                },
                                                                model.layers[l].weight)));
      checks.push_back(compare(
          Matrix(1, g.bias[l].size(), g.bias[l]),
          uast::finite_diff_grad(
              [&](const Matrix& p) {
                uast::MlpModel m = model;
                m.layers[l].bias.assign(p.data().begin(), p.data().end());
                return uast::weighted_loss(m, x, spec);
              },
              Matrix(1, model.layers[l].bias.size(), model.layers[l].bias))));
    }
    checks.push_back(compare(g.att, uast::finite_diff_grad(
                                                        [&](const Matrix& p) {
                                                          uast::MlpModel m = model;
                                                          m.att = p;
                                                          return uast::weighted_loss(m, x, spec);
                                                        },
                                                        model.att)));

    // Pseudo-label head under the combined loss, latent draws frozen.
    std::vector<Matrix> latents;
    std::vector<int> truth(n);
    for (std::size_t i = 0; i < n; ++i) {
      latents.push_back(oracle::random_matrix(6, d, rng, -2.0, 2.0));
      truth[i] = rng.uniform() < 0.5 ? labels[i] : uast::kUnlabeled;
    }
    uast::LinearHead head = uast::make_layer(d, c, uast::Activation::identity, rng);
    const auto hg = uast::combined_loss_head_grad(latents, truth, head);
    checks.push_back(compare(hg.weight, uast::finite_diff_grad(
                                                            [&](const Matrix& p) {
                                                              uast::LinearHead h = head;
                                                              h.weight = p;
                                                              return uast::combined_loss_head_grad(latents, truth, h).loss;
                                                            },
                                                            head.weight)));

    bool ok = true;
    for (const auto& cmp : checks) {
      worst = std::max(worst, cmp.worst_relative);
      worst_abs = std::max(worst_abs, cmp.worst_absolute);
      ok = ok && cmp.ok;
    }
    failed += !ok;
  }
  return {failed == 0, fmt("20 instances, %.0f failing, worst abs err %.1e, worst rel err above 1e-8 abs %.1e (tol 1e-4)",
                           failed, worst_abs, worst)};
}

// ---------------------------------------------------------------- EM algebra

Outcome em_algebra_suite() {
  double worst_row = 0.0;
  int mstep_mismatch = 0, argmax_mismatch = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SeededRng rng(SeededRng::split_seed(seed, 901));
    const std::size_t n = 3 + rng.below(30), d = 2 + rng.below(7), k = 2 + rng.below(4);
    const Matrix x = oracle::random_matrix(n, d, rng, -3.0, 3.0);
    const uast::BasisSet basis{oracle::random_matrix(k, d, rng, -2.0, 2.0)};

    const uast::Assignment a = uast::e_step(x, basis, rng.uniform(0.1, 5.0));
    for (std::size_t r = 0; r < n; ++r) {
      double s = 0.0;
      for (double v : a.z.row(r)) s += v;
      worst_row = std::max(worst_row, std::abs(s - 1.0));
    }

    const uast::BasisSet mu = uast::m_step(x, a);
    for (std::size_t c = 0; c < k; ++c) {
      double mass = 0.0;
      for (std::size_t i = 0; i < n; ++i) mass += a.z(i, c);
      for (std::size_t j = 0; j < d; ++j) {
        double num = 0.0;
        for (std::size_t i = 0; i < n; ++i) num += a.z(i, c) * x(i, j);
        if (mu.mu(c, j) != num / mass) ++mstep_mismatch;
      }
    }

    // Large temperature: argmax of z equals the basis with the largest dot
    // product, for rows whose best and runner-up differ clearly.
    const uast::Assignment hot = uast::e_step(x, basis, 1e4);
    for (std::size_t r = 0; r < n; ++r) {
      std::vector<double> dots(k);
      for (std::size_t c = 0; c < k; ++c)
        for (std::size_t j = 0; j < d; ++j) dots[c] += x(r, j) * basis.mu(c, j);
      auto sorted = dots;
      std::sort(sorted.rbegin(), sorted.rend());
      if (sorted[0] - sorted[1] < 1e-6) continue;
      const auto nearest = std::max_element(dots.begin(), dots.end()) - dots.begin();
      const auto row = hot.z.row(r);
      const auto picked = std::max_element(row.begin(), row.end()) - row.begin();
      argmax_mismatch += nearest != picked;
    }
  }
  const bool ok = worst_row <= 1e-9 && mstep_mismatch == 0 && argmax_mismatch == 0;
  return {ok, fmt("100 instances, max |row sum - 1| %.1e, m-step mismatches %.0f, argmax mismatches %.0f", worst_row,
                  mstep_mismatch, argmax_mismatch)};
}

// ---------------------------------------------------------------- Monte Carlo

Outcome monte_carlo_suite() {
  // Pushforward variance of a linear head under a one-hot z: Var(h(x)_c) =
  // ||W[:, c]||^2 for x ~ N(mu_k, I).
  double worst_rel = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SeededRng rng(SeededRng::split_seed(seed, 902));
    const std::size_t d = 2 + rng.below(6), k = 2 + rng.below(3), c = 2 + rng.below(3);
    const uast::BasisSet basis{oracle::random_matrix(k, d, rng, -3.0, 3.0)};
    const uast::LinearHead head = uast::make_layer(d, c, uast::Activation::identity, rng);
    std::vector<double> z(k, 0.0);
    z[rng.below(k)] = 1.0;
    const Matrix lat = uast::sample_latent(z, basis, rng, 10000);
    const auto mom = uast::linear_pushforward_moments(lat, head);
    for (std::size_t j = 0; j < c; ++j) {
      double exact = 0.0;
      for (std::size_t i = 0; i < d; ++i) exact += head.weight(i, j) * head.weight(i, j);
      worst_rel = std::max(worst_rel, std::abs(mom.var[j] - exact) / exact);
    }
  }

  // Spreading z over two bases that the head sends to different classes never
  // lowers the uncertainty, with the noise draws shared across the pair.
  int violations = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SeededRng rng(SeededRng::split_seed(seed, 903));
    const std::size_t c = 2 + rng.below(2), d = c + rng.below(3);
    // Class directions: the head scores class j by <x, e_j> scaled up.
    uast::LinearHead head;
    head.weight = Matrix(d, c);
    head.bias.assign(c, 0.0);
    const double scale = rng.uniform(1.0, 4.0);
    for (std::size_t j = 0; j < c; ++j) head.weight(j, j) = scale;
    const std::size_t a = rng.below(c);
    const std::size_t b = (a + 1 + rng.below(c - 1)) % c;
    uast::BasisSet basis{Matrix(2, d)};
    const double depth = rng.uniform(2.0, 6.0);
    basis.mu(0, a) = depth;
    basis.mu(1, b) = depth;
    const uast::LatentDraws draws = uast::draw_latent_noise(rng, 2000, d);
    const double u0 = uast::pseudo_label_from_latents(uast::compose_latents(std::vector<double>{1, 0}, basis, draws), head).uncertainty;
    const double w = rng.uniform(0.2, 0.8);
    const double uw = uast::pseudo_label_from_latents(uast::compose_latents(std::vector<double>{1 - w, w}, basis, draws), head).uncertainty;
    violations += uw < u0;
  }
  const bool ok = worst_rel <= 0.10 && violations == 0;
  return {ok, fmt("pushforward var worst rel err %.3f (tol 0.10) at m=1e4; monotonicity violations %.0f/50", worst_rel,
                  violations)};
}

// ---------------------------------------------------------------- orthogonality

Outcome orthogonality_suite() {
  int failed = 0;
  double worst_ratio = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    uast::SyntheticSpec spec;
    spec.kind = uast::SyntheticKind::blobs;
    spec.classes = 2;
    spec.dim = 8;
    spec.noise = 0.5;
    spec.n_source = 200;
    spec.n_target = 4;
    const uast::DomainSplits data = uast::gen_synthetic(spec, seed);
    uast::RoundConfig cfg;
    cfg.basis_count = 4;
    SeededRng rng(seed);
    const auto st = uast::train_stage1(data.labeled, cfg, rng);
    const double ratio = uast::orthogonality_residual(st.basis.mu) / st.ortho_at_init;
    worst_ratio = std::max(worst_ratio, ratio);
    failed += ratio > 0.5;
  }
  return {failed == 0, fmt("10 seeds, worst residual/init %.3f (limit 0.5), %.0f failing", worst_ratio, failed)};
}

// ---------------------------------------------------------------- toy runs

struct ToyRuns {
  std::vector<double> none, variance, confidence;
  int rank_violations = 0;
  int fraction_violations = 0;
  int rounds_checked = 0;
  double seconds = 0.0;
};

void check_selection(const uast::RoundResult& r, ToyRuns& out) {
  ++out.rounds_checked;
  if (!uast::rank_consistent(r.selection)) ++out.rank_violations;
  const auto per = r.selection.kept_per_class();
  for (std::size_t c = 0; c < per.size(); ++c) {
    const double target = r.metrics.keep_fraction * static_cast<double>(r.selection.group_sizes[c]);
    if (std::abs(static_cast<double>(per[c]) - target) > 1.0) ++out.fraction_violations;
  }
}

ToyRuns run_toy(const uast::cli::ExperimentConfig& exp) {
  ToyRuns out;
  const auto t0 = Clock::now();
  for (std::uint64_t seed : exp.seeds) {
    const uast::DomainSplits data = uast::cli::materialize(exp, seed);
    for (auto policy : {uast::SelectionPolicy::none, uast::SelectionPolicy::variance, uast::SelectionPolicy::confidence}) {
      uast::RoundConfig cfg = exp.round;
      cfg.selection = policy;
      cfg.seed = seed;
      SeededRng rng(seed);
      const auto run = uast::run_self_training(data, cfg, rng);
      const double acc = run.rounds.back().metrics.target_accuracy;
      if (policy == uast::SelectionPolicy::none) {
        out.none.push_back(acc);
        continue;
      }
      (policy == uast::SelectionPolicy::variance ? out.variance : out.confidence).push_back(acc);
      for (const auto& r : run.rounds) check_selection(r, out);
    }
    std::printf("  seed %llu: none %.3f variance %.3f confidence %.3f\n", static_cast<unsigned long long>(seed),
                out.none.back(), out.variance.back(), out.confidence.back());
    std::fflush(stdout);
  }
  out.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return out;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// ---------------------------------------------------------------- determinism

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism_suite(const std::string& cli, const fs::path& work, const nlohmann::json& base_config) {
  std::vector<fs::path> outputs;
  for (const char* tag : {"first", "second"}) {
    nlohmann::json cfg = base_config;
    const fs::path out = work / "determinism" / tag;
    fs::remove_all(out);
    fs::create_directories(out);
    cfg["output_dir"] = (out / "runs").string();
    const fs::path cfg_path = out / "config.json";
    std::ofstream(cfg_path) << cfg.dump(2);
    const std::string cmd = "\"" + cli + "\" train --config \"" + cfg_path.string() + "\" --seed 0 > \"" +
                            (out / "stdout.txt").string() + "\"";
    if (std::system(cmd.c_str()) != 0) return {false, std::string("command failed: ") + cmd};
    outputs.push_back(out / "runs");
  }
  std::size_t files = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(outputs[0])) {
    if (!entry.is_regular_file()) continue;
    const fs::path other = outputs[1] / fs::relative(entry.path(), outputs[0]);
    ++files;
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) ++differing;
  }
  std::size_t second_files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(outputs[1])) second_files += entry.is_regular_file();
  const bool ok = files > 0 && differing == 0 && files == second_files;
  return {ok, fmt("%.0f artifact files compared, %.0f differ", static_cast<double>(files), static_cast<double>(differing))};
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  fs::path work = fs::temp_directory_path() / "uast_acceptance";
  fs::path config = fs::path(UAST_SOURCE_DIR) / "configs" / "two_moons.json";
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string key = argv[i];
    if (key == "--cli") cli = argv[i + 1];
    else if (key == "--workdir") work = argv[i + 1];
    else if (key == "--config") config = argv[i + 1];
    else {
      std::fprintf(stderr, "unknown option %s\n", key.c_str());
      return 2;
    }
  }
  fs::create_directories(work);

  run("gradients", 60, gradient_suite);
  run("em-algebra", 30, em_algebra_suite);
  run("monte-carlo", 120, monte_carlo_suite);
  run("orthogonality", 120, orthogonality_suite);

  nlohmann::json config_json;
  std::ifstream(config) >> config_json;
  const uast::cli::ExperimentConfig experiment = uast::cli::parse_experiment_config(config_json);

  ToyRuns toy;
  bool toy_ok = true;
  std::string toy_error;
  try {
    toy = run_toy(experiment);
  } catch (const std::exception& e) {
    toy_ok = false;
    toy_error = e.what();
  }

  const double none = mean(toy.none), variance = mean(toy.variance), confidence = mean(toy.confidence);
  if (!toy_ok) {
    report("toy-directional", {false, "exception: " + toy_error}, toy.seconds, 300);
  } else {
    const bool gain = variance - none >= 0.05;
    const bool beats_confidence = variance >= confidence;
    report("toy-directional",
           {gain && beats_confidence,
            fmt("%.0f seeds: ", static_cast<double>(experiment.seeds.size())) +
                fmt("source-only %.4f, variance %.4f, confidence %.4f", none, variance, confidence) +
                fmt("; gain %.1fpp (need >= 5), variance - confidence %+.4f (need >= 0)", 100.0 * (variance - none),
                    variance - confidence)},
           toy.seconds, 300);
  }
  report("selection",
         {toy_ok && toy.rank_violations == 0 && toy.fraction_violations == 0 && toy.rounds_checked > 0,
          fmt("%.0f rounds checked, rank violations %.0f, keep-fraction violations %.0f", toy.rounds_checked,
              toy.rank_violations, toy.fraction_violations)},
         0.0, 1.0);

  if (cli.empty()) {
    report("determinism", {false, "no --cli binary given"}, 0.0, 1.0);
  } else {
    run("determinism", 120, [&] { return determinism_suite(cli, work, config_json); });
  }

  std::printf("%s: %d criteria failed\n", g_failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED", g_failures);
  return g_failures == 0 ? 0 : 1;
}
