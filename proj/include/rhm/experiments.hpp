#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rhm/problems.hpp"
#include "rhm/solvers.hpp"

namespace rhm {

/// One solver entry in an experiment: the method tag plus its settings.
/// Tags: rhm_sd_f (fixed step), rhm_sd (Armijo), rhm_con, rhm_cg, rhm_tr,
/// rhm_sgd, rhm_scon, rgda, rceg.
struct SolverSpec {
  std::string tag;
  SolverConfig config;

  friend bool operator==(const SolverSpec&, const SolverSpec&) = default;
};

struct ExperimentConfig {
  std::string experiment = "quad_bilinear";
  // Problem parameters. Only the subset belonging to the chosen experiment
  // may be set in a config file; the rest keep their defaults and are
  // ignored by the run.
  int d = 30;
  double c_q = 1.0;
  double c_l = 1.0;
  int n = 8;             // dataset size (rgpca: matrices, srwd: source points,
                         // stochastic_qb: samples)
  double alpha = 0.1;    // rgpca regularization weight
  double mu0 = 0.2;      // rgpca eigenvalue window
  double mu1 = 4.5;
  int r = 3;             // srwd projector rank
  int k = 2;             // srwd fragmented coordinates
  double eps = 0.2;      // srwd entropy weight
  double spread = 0.3;   // stochastic_qb coefficient spread
  std::uint64_t seed = 0;
  std::string out_dir;   // empty: resolved by the CLI (flag / RHM_OUT / "out")
  bool stable_time = false;  // write time columns as 0 for byte-stable output
  std::vector<SolverSpec> solvers;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Parse a flat key = value config file ('#' starts a comment).  Unknown keys,
/// keys that do not apply to the chosen experiment, and values violating a
/// problem or solver precondition raise ConfigError naming the key.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

/// Inverse of parse_config_text up to structural equality.
std::string serialize_config(const ExperimentConfig& config);

std::vector<std::string> known_experiments();
std::vector<std::string> known_solver_tags();

/// The problem instance and shared initial point an experiment runs on.
/// Datasets are generated from mix_seed(seed, 1), the initial point from
/// mix_seed(seed, 2), so traces are a pure function of the config.
struct BuiltExperiment {
  std::unique_ptr<MinMaxProblem> problem;
  Point p0;
};

BuiltExperiment build_experiment(const ExperimentConfig& config);

/// Run one solver spec against a built problem. Dispatches on spec.tag.
SolverTrace run_solver(const MinMaxProblem& problem, const Point& p0,
                       const SolverSpec& spec);

struct SolverSummary {
  std::string tag;
  SolveStatus status = SolveStatus::MaxIters;
  std::string error_message;
  int iterations = 0;
  double final_grad_norm = 0.0;
  double final_opt_gap = 0.0;  // NaN when the problem defines no gap
  double wall_time_s = 0.0;
};

struct RunSummary {
  std::vector<SolverSummary> solvers;
  /// True when every solver ended Converged or MaxIters.
  bool all_ok() const;
};

/// Run all solvers in the config, write <out_dir>/<tag>.csv per solver plus
/// summary.json (and the dataset for data-driven experiments). out_dir must
/// be non-empty here. parallel runs solvers in one thread each; outputs are
/// identical either way.
RunSummary run_experiment(const ExperimentConfig& config, bool parallel = false);

struct GoldenReport {
  bool pass = false;
  std::string message;  // first divergence, or a per-solver ok summary
};

/// Re-run the experiment in memory and compare against golden CSVs in
/// golden_dir. iter must match exactly, time_s is ignored, every other
/// column to 1e-9 relative. Throws MissingGolden if a trace file is absent.
GoldenReport verify_golden(const ExperimentConfig& config,
                           const std::string& golden_dir);

}  // namespace rhm
