#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "rhm/hamiltonian.hpp"

namespace rhm {

enum class StepRule { Fixed, Decaying, Armijo, StrongWolfe };
enum class SolveStatus { Converged, MaxIters, LineSearchFailed, Error };

std::string to_string(SolveStatus s);

struct SolverConfig {
  int max_iters = 1000;
  double grad_tol = 1e-10;  // stop when ||grad f|| = sqrt(2 H) falls below
  StepRule step_rule = StepRule::Fixed;
  double eta = 0.1;         // fixed step; initial step for armijo/wolfe
  double r1 = 1e-4;         // sufficient-decrease parameter
  double r2 = 0.1;          // Wolfe curvature parameter, < 1/2 for CG
  double rho = 0.5;         // backtracking shrink factor
  double decay_delta = 1.0; // delta in eta_t = (2t+1) / (2 delta (t+1)^2)
  double gamma = 0.5;       // consensus weight
  int batch_s = 1;
  int batch_s_prime = 1;
  std::uint64_t seed = 0;
  bool use_retraction = false;
  double tr_delta0 = 1.0;
  double tr_delta_max = 100.0;
  double tr_rho_accept = 0.1;
  int max_linesearch = 60;

  friend bool operator==(const SolverConfig&, const SolverConfig&) = default;
};

struct TraceRecord {
  int iter = 0;
  double time_s = 0.0;
  double step = 0.0;       // step size taken at this iterate (0 on the final record)
  double grad_norm = 0.0;  // ||grad f|| = sqrt(2 H)
  double hamiltonian = 0.0;
  double opt_gap = std::numeric_limits<double>::quiet_NaN();  // NaN when undefined
  int inner_iters = 0;     // tCG / line-search evaluations
};

/// Model-decrease diagnostics for accepted trust-region steps.
struct TrStepInfo {
  int iter = 0;
  double grad_norm = 0.0;   // ||grad H|| at the accepted iterate
  double pred_decrease = 0.0;
  double hnorm_est = 0.0;   // max Rayleigh quotient seen by tCG
  double delta = 0.0;       // radius the step was computed with
  bool boundary = false;
};

struct SolverTrace {
  std::vector<TraceRecord> records;
  SolveStatus status = SolveStatus::MaxIters;
  std::string error_message;
  std::vector<TrStepInfo> tr_steps;  // rhm_tr only
};

/// Called after each record is appended; p is the iterate the record describes.
using IterObserver = std::function<void(CSpan p, const TraceRecord& rec)>;

/// Largest eta in {eta_bar, rho eta_bar, rho^2 eta_bar, ...} satisfying
/// H(p) - H(step(p, eta dir)) >= r1 eta <-grad H(p), dir>_p.
/// Throws NotDescentDirection unless <-grad H, dir> > 0, LineSearchFailed
/// after max_reductions shrinks.
double backtracking_linesearch(const HamiltonianOracle& oracle, CSpan p, CSpan direction,
                               double eta_bar, double r1, double rho,
                               int max_reductions = 60, bool use_retraction = false);

SolverTrace rhm_sd(const HamiltonianOracle& oracle, CSpan p0, const SolverConfig& config,
                   const IterObserver& observer = {});
SolverTrace rhm_con(const HamiltonianOracle& oracle, CSpan p0, const SolverConfig& config,
                    const IterObserver& observer = {});
SolverTrace rhm_cg(const HamiltonianOracle& oracle, CSpan p0, const SolverConfig& config,
                   const IterObserver& observer = {});
SolverTrace rhm_tr(const HamiltonianOracle& oracle, CSpan p0, const SolverConfig& config,
                   const IterObserver& observer = {});
SolverTrace rhm_sgd(const HamiltonianOracle& oracle, CSpan p0, const SolverConfig& config,
                    const IterObserver& observer = {});
SolverTrace rhm_scon(const HamiltonianOracle& oracle, CSpan p0, const SolverConfig& config,
                     const IterObserver& observer = {});
SolverTrace rgda(const MinMaxProblem& problem, CSpan p0, const SolverConfig& config,
                 const IterObserver& observer = {});
SolverTrace rceg(const MinMaxProblem& problem, CSpan p0, const SolverConfig& config,
                 const IterObserver& observer = {});

}  // namespace rhm
