#include "rhm/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <initializer_list>
#include <limits>
#include <utility>

#include "rhm/errors.hpp"

namespace rhm {

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "Converged";
    case SolveStatus::MaxIters: return "MaxIters";
    case SolveStatus::LineSearchFailed: return "LineSearchFailed";
    case SolveStatus::Error: return "Error";
  }
  return "Unknown";
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void check_positive(double v, const char* key) {
  if (!(v > 0.0)) throw ConfigError(std::string(key) + " must be positive");
}

void check_common(const SolverConfig& cfg) {
  if (cfg.max_iters < 0) throw ConfigError("max_iters must be nonnegative");
  if (!(cfg.grad_tol >= 0.0)) throw ConfigError("grad_tol must be nonnegative");
  if (!(cfg.gamma >= 0.0)) throw ConfigError("gamma must be nonnegative");
  if (cfg.max_linesearch < 1) throw ConfigError("max_linesearch must be at least 1");
}

void check_step_rule(const SolverConfig& cfg, std::initializer_list<StepRule> allowed,
                     const char* solver) {
  for (StepRule r : allowed)
    if (cfg.step_rule == r) {
      switch (cfg.step_rule) {
        case StepRule::Fixed:
          check_positive(cfg.eta, "eta");
          break;
        case StepRule::Decaying:
          check_positive(cfg.decay_delta, "decay_delta");
          break;
        case StepRule::Armijo:
          check_positive(cfg.eta, "eta");
          if (!(cfg.r1 > 0.0 && cfg.r1 < 1.0)) throw ConfigError("r1 must lie in (0,1)");
          if (!(cfg.rho > 0.0 && cfg.rho < 1.0)) throw ConfigError("rho must lie in (0,1)");
          break;
        case StepRule::StrongWolfe:
          check_positive(cfg.eta, "eta");
          if (!(cfg.r1 > 0.0 && cfg.r1 < 1.0)) throw ConfigError("r1 must lie in (0,1)");
          if (!(cfg.r2 > cfg.r1 && cfg.r2 < 0.5))
            throw ConfigError("r2 must lie in (r1, 1/2)");
          break;
      }
      return;
    }
  throw ConfigError(std::string(solver) + ": unsupported step rule");
}

double opt_gap_or_nan(const MinMaxProblem& prob, CSpan p) {
  if (!prob.has_opt_gap()) return std::numeric_limits<double>::quiet_NaN();
  return prob.opt_gap(p);
}

// Copies g and flips the sign of the maximizing block: v = (g_x, -g_y).
Tangent to_minmax(CSpan g, int x_components) {
  Tangent v(g.begin(), g.end());
  for (int i = x_components; i < static_cast<int>(v.size()); ++i)
    v[static_cast<std::size_t>(i)] *= -1.0;
  return v;
}

// k distinct indices from {0..n-1}, drawn by partial Fisher-Yates so the
// result is a deterministic function of the rng state.
std::vector<int> sample_without_replacement(int n, int k, Rng& rng) {
  std::vector<int> pool(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    out.push_back(pool[static_cast<std::size_t>(i)]);
  }
  return out;
}

// Mean of sample gradients over a batch, then sign-flipped to the min-max
// field.
Tangent batch_minmax(const MinMaxProblem& prob, CSpan p, const std::vector<int>& batch) {
  Tangent acc = prob.sample_rgrad(batch[0], p);
  for (std::size_t i = 1; i < batch.size(); ++i)
    ambient_axpy(1.0, prob.sample_rgrad(batch[i], p), acc);
  Tangent mean = ambient_scale(acc, 1.0 / static_cast<double>(batch.size()));
  return to_minmax(mean, prob.x_components());
}

struct TraceBuilder {
  SolverTrace trace;
  Clock::time_point start = Clock::now();
  const MinMaxProblem* prob;
  const IterObserver* obs;

  TraceBuilder(const MinMaxProblem& problem, const IterObserver& observer)
      : prob(&problem), obs(&observer) {}

  void add(int iter, double step, double grad_norm, double hamiltonian, CSpan p,
           int inner_iters = 0) {
    TraceRecord rec;
    rec.iter = iter;
    rec.time_s = seconds_since(start);
    rec.step = step;
    rec.grad_norm = grad_norm;
    rec.hamiltonian = hamiltonian;
    rec.opt_gap = opt_gap_or_nan(*prob, p);
    rec.inner_iters = inner_iters;
    trace.records.push_back(rec);
    if (*obs) (*obs)(p, trace.records.back());
  }
};

double armijo_core(const HamiltonianOracle& oracle, CSpan p, CSpan direction, double eta_bar,
                   double r1, double rho, int max_reductions, bool use_retraction,
                   double h_at_p, double slope, Point* accepted = nullptr) {
  if (!(slope > 0.0)) throw NotDescentDirection("line search requires a descent direction");
  const Manifold& man = oracle.problem->domain();
  double eta = eta_bar;
  for (int i = 0; i <= max_reductions; ++i) {
    // A trial far outside the feasible region can fail to evaluate (overflow
    // in exp, Sinkhorn breakdown); treat that like insufficient decrease.
    try {
      Point q = man.step(p, ambient_scale(direction, eta), use_retraction);
      double h_q = hamiltonian_value(oracle, q);
      if (std::isfinite(h_q) && h_at_p - h_q >= r1 * eta * slope) {
        // Hand the accepted point back so the caller does not pay for the
        // same retraction twice (it is the dominant cost on couplings).
        if (accepted) *accepted = std::move(q);
        return eta;
      }
    } catch (const Error&) {
    }
    eta *= rho;
  }
  throw LineSearchFailed("no Armijo step after " + std::to_string(max_reductions) +
                         " reductions");
}

}  // namespace

double backtracking_linesearch(const HamiltonianOracle& oracle, CSpan p, CSpan direction,
                               double eta_bar, double r1, double rho, int max_reductions,
                               bool use_retraction) {
  const MinMaxProblem& prob = *oracle.problem;
  Tangent g = prob.rgrad(p);
  double h = hamiltonian_value_from(oracle, p, g);
  Tangent grad_h = hamiltonian_grad_from(oracle, p, g);
  double slope = -prob.domain().inner(p, grad_h, direction);
  return armijo_core(oracle, p, direction, eta_bar, r1, rho, max_reductions, use_retraction,
                     h, slope);
}

namespace {

// Shared loop behind rhm_sd / rhm_con / rhm_sgd / rhm_scon. The consensus
// term is skipped entirely at gamma = 0 and the stochastic estimator is
// skipped when the batches cover every sample, so those reductions reproduce
// the simpler solver's trace bit for bit.
SolverTrace run_descent(const HamiltonianOracle& oracle, CSpan p0, const SolverConfig& cfg,
                        double gamma, bool stochastic, const IterObserver& observer) {
  const MinMaxProblem& prob = *oracle.problem;
  const Manifold& man = prob.domain();
  int n_samples = prob.num_samples();
  if (stochastic) {
    if (n_samples == 0) throw NoSampleOracle(prob.name() + ": stochastic solver needs samples");
    if (cfg.batch_s < 1 || cfg.batch_s_prime < 1)
      throw ConfigError("batch sizes must be at least 1");
    if (cfg.batch_s > n_samples || cfg.batch_s_prime > n_samples)
      throw ConfigError("batch size exceeds the sample count");
    if (cfg.batch_s == n_samples && cfg.batch_s_prime == n_samples) stochastic = false;
  }

  Point p(p0.begin(), p0.end());
  TraceBuilder tb(prob, observer);
  try {
    for (int t = 0; t < cfg.max_iters; ++t) {
      Tangent g = prob.rgrad(p);
      double h = hamiltonian_value_from(oracle, p, g);
      double gn = std::sqrt(2.0 * h);
      if (gn <= cfg.grad_tol) {
        tb.add(t, 0.0, gn, h, p);
        tb.trace.status = SolveStatus::Converged;
        return std::move(tb.trace);
      }

      Tangent zeta;
      if (!stochastic) {
        zeta = hamiltonian_grad_from(oracle, p, g);
        if (gamma != 0.0) {
          Tangent v = to_minmax(g, prob.x_components());
          ambient_axpy(gamma, v, zeta);
        }
      } else {
        Rng rng_s(mix_seed(cfg.seed, 2 * static_cast<std::uint64_t>(t)));
        Rng rng_s2(mix_seed(cfg.seed, 2 * static_cast<std::uint64_t>(t) + 1));
        std::vector<int> s = sample_without_replacement(n_samples, cfg.batch_s, rng_s);
        std::vector<int> s2 = sample_without_replacement(n_samples, cfg.batch_s_prime, rng_s2);
        zeta = stochastic_hamiltonian_grad(oracle, p, s, s2);
        if (gamma != 0.0) {
          Tangent vs = batch_minmax(prob, p, s);
          Tangent vs2 = batch_minmax(prob, p, s2);
          ambient_axpy(0.5 * gamma, vs, zeta);
          ambient_axpy(0.5 * gamma, vs2, zeta);
        }
      }

      double eta = 0.0;
      Point accepted;
      switch (cfg.step_rule) {
        case StepRule::Fixed:
          eta = cfg.eta;
          break;
        case StepRule::Decaying: {
          double tt = static_cast<double>(t);
          eta = (2.0 * tt + 1.0) / (2.0 * cfg.decay_delta * (tt + 1.0) * (tt + 1.0));
          break;
        }
        case StepRule::Armijo: {
          // Only reachable from rhm_sd, where zeta = grad H and the Armijo
          // slope is exactly ||grad H||^2.
          double slope = man.inner(p, zeta, zeta);
          eta = armijo_core(oracle, p, ambient_scale(zeta, -1.0), cfg.eta, cfg.r1, cfg.rho,
                            cfg.max_linesearch, cfg.use_retraction, h, slope, &accepted);
          break;
        }
        case StepRule::StrongWolfe:
          throw ConfigError("strong Wolfe is a conjugate-gradient step rule");
      }

      tb.add(t, eta, gn, h, p);
      p = accepted.empty() ? man.step(p, ambient_scale(zeta, -eta), cfg.use_retraction)
                           : std::move(accepted);
    }
    Tangent g = prob.rgrad(p);
    double h = hamiltonian_value_from(oracle, p, g);
    double gn = std::sqrt(2.0 * h);
    tb.add(cfg.max_iters, 0.0, gn, h, p);
    tb.trace.status = gn <= cfg.grad_tol ? SolveStatus::Converged : SolveStatus::MaxIters;
  } catch (const LineSearchFailed& e) {
    tb.trace.status = SolveStatus::LineSearchFailed;
    tb.trace.error_message = e.what();
  } catch (const Error& e) {
    tb.trace.status = SolveStatus::Error;
    tb.trace.error_message = e.what();
  }
  return std::move(tb.trace);
}

}  // namespace

SolverTrace rhm_sd(const HamiltonianOracle& oracle, CSpan p0, const SolverConfig& config,
                   const IterObserver& observer) {
  check_common(config);
  check_step_rule(config, {StepRule::Fixed, StepRule::Armijo}, "rhm_sd");
  return run_descent(oracle, p0, config, 0.0, false, observer);
}

SolverTrace rhm_con(const HamiltonianOracle& oracle, CSpan p0, const SolverConfig& config,
                    const IterObserver& observer) {
  check_common(config);
  check_step_rule(config, {StepRule::Fixed}, "rhm_con");
  return run_descent(oracle, p0, config, config.gamma, false, observer);
}

SolverTrace rhm_sgd(const HamiltonianOracle& oracle, CSpan p0, const SolverConfig& config,
                    const IterObserver& observer) {
  check_common(config);
  check_step_rule(config, {StepRule::Fixed, StepRule::Decaying}, "rhm_sgd");
  return run_descent(oracle, p0, config, 0.0, true, observer);
}

SolverTrace rhm_scon(const HamiltonianOracle& oracle, CSpan p0, const SolverConfig& config,
                     const IterObserver& observer) {
  check_common(config);
  check_step_rule(config, {StepRule::Fixed, StepRule::Decaying}, "rhm_scon");
  return run_descent(oracle, p0, config, config.gamma, true, observer);
}

namespace {

struct CurveEval {
  double phi = 0.0;   // H at the curve point
  double dphi = 0.0;  // directional derivative along the curve
  Point q;
  Tangent grad_h;
};

// phi(a) = H(step(p, a xi)); phi'(a) pairs grad H at the curve point with
// the exact curve velocity from step_velocity(). A transported-direction
// surrogate is not good enough here: on the Fisher geometry it can keep the
// wrong sign far along the curve, and then no step satisfies the curvature
// condition.
class WolfeCurve {
 public:
  WolfeCurve(const HamiltonianOracle& oracle, CSpan p, CSpan xi, bool use_retraction)
      : oracle_(oracle), man_(oracle.problem->domain()), p_(p), xi_(xi),
        retr_(use_retraction) {}

  int evals = 0;

  Point at(double a) const { return man_.step(p_, ambient_scale(xi_, a), retr_); }

  CurveEval eval(double a) {
    ++evals;
    CurveEval e;
    // A probe far outside the feasible region can fail to evaluate (overflow
    // in exp, Sinkhorn breakdown). Report it as phi = +inf so the search
    // treats it like any other over-long trial and shrinks.
    try {
      e.q = at(a);
      Tangent gf = oracle_.problem->rgrad(e.q);
      e.phi = hamiltonian_value_from(oracle_, e.q, gf);
      e.grad_h = hamiltonian_grad_from(oracle_, e.q, gf);
      Tangent vel = man_.step_velocity(p_, xi_, a, e.q, retr_);
      e.dphi = man_.inner(e.q, e.grad_h, vel);
      if (std::isfinite(e.phi) && std::isfinite(e.dphi)) return e;
    } catch (const Error&) {
    }
    e.phi = std::numeric_limits<double>::infinity();
    e.dphi = std::numeric_limits<double>::infinity();
    return e;
  }

 private:
  const HamiltonianOracle& oracle_;
  const Manifold& man_;
  CSpan p_;
  CSpan xi_;
  bool retr_;
};

struct WolfeResult {
  double alpha = 0.0;
  CurveEval eval;
  int evals = 0;
};

// Bracketing strong-Wolfe search with bisection zoom. phi0/dphi0 are the
// values at a = 0; dphi0 must be negative. When the budget runs out while an
// Armijo-satisfying point is in hand, that point is returned instead of
// aborting the solve; the curvature condition is a quality target, not a
// correctness requirement.
WolfeResult strong_wolfe_search(WolfeCurve& curve, double phi0, double dphi0, double a_init,
                                double r1, double r2, int max_evals) {
  if (!(dphi0 < 0.0)) throw NotDescentDirection("Wolfe search requires a descent direction");

  auto armijo_ok = [&](double a, double phi) { return phi <= phi0 + r1 * a * dphi0; };
  auto curvature_ok = [&](double dphi) { return std::fabs(dphi) <= -r2 * dphi0; };

  // Trial point inside an unordered bracket: the Hermite cubic minimizer when
  // both ends carry finite data and it lands comfortably inside, bisection
  // otherwise. The curvature window around the line minimum can be orders of
  // magnitude narrower than the bracket, so pure bisection regularly runs the
  // budget out.
  auto interp = [](double a, double pa, double da, double b, double pb, double db) {
    double mid = 0.5 * (a + b);
    double d1 = da + db - 3.0 * (pa - pb) / (a - b);
    double disc = d1 * d1 - da * db;
    if (!(disc >= 0.0)) return mid;
    double d2 = (b > a ? 1.0 : -1.0) * std::sqrt(disc);
    double den = db - da + 2.0 * d2;
    if (!std::isfinite(den) || den == 0.0) return mid;
    double t = b - (b - a) * ((db + d2 - d1) / den);
    double w = std::fabs(b - a);
    if (!(t > std::min(a, b) + 0.1 * w && t < std::max(a, b) - 0.1 * w)) return mid;
    return t;
  };

  struct End {
    double a;
    double phi;
    double dphi;
  };

  // elo is the evaluation at lo.a; have_lo is false only while lo is a = 0,
  // where elo carries phi0/dphi0 and an empty point.
  auto zoom = [&](End lo, End hi, CurveEval elo, bool have_lo) -> WolfeResult {
    while (curve.evals < max_evals) {
      double a = interp(lo.a, lo.phi, lo.dphi, hi.a, hi.phi, hi.dphi);
      CurveEval e = curve.eval(a);
      if (!armijo_ok(a, e.phi) || e.phi >= lo.phi) {
        hi = {a, e.phi, e.dphi};
        continue;
      }
      if (curvature_ok(e.dphi)) return {a, std::move(e), curve.evals};
      if (e.dphi * (hi.a - lo.a) >= 0.0) hi = lo;
      lo = {a, e.phi, e.dphi};
      elo = std::move(e);
      have_lo = true;
    }
    if (have_lo && armijo_ok(lo.a, elo.phi)) return {lo.a, std::move(elo), curve.evals};
    throw LineSearchFailed("strong Wolfe zoom exhausted its evaluation budget");
  };

  End prev{0.0, phi0, dphi0};
  CurveEval e_prev;
  e_prev.phi = phi0;
  e_prev.dphi = dphi0;
  double a = a_init;
  bool first = true;
  while (curve.evals < max_evals) {
    CurveEval e = curve.eval(a);
    if (!armijo_ok(a, e.phi) || (!first && e.phi >= prev.phi))
      return zoom(prev, {a, e.phi, e.dphi}, std::move(e_prev), !first);
    if (curvature_ok(e.dphi)) return {a, std::move(e), curve.evals};
    if (e.dphi >= 0.0) return zoom({a, e.phi, e.dphi}, prev, std::move(e), true);
    prev = {a, e.phi, e.dphi};
    e_prev = std::move(e);
    a *= 2.0;
    first = false;
  }
  if (!first) return {prev.a, std::move(e_prev), curve.evals};
  throw LineSearchFailed("strong Wolfe bracketing exhausted its evaluation budget");
}

}  // namespace

SolverTrace rhm_cg(const HamiltonianOracle& oracle, CSpan p0, const SolverConfig& config,
                   const IterObserver& observer) {
  check_common(config);
  check_step_rule(config, {StepRule::StrongWolfe}, "rhm_cg");
  const MinMaxProblem& prob = *oracle.problem;
  const Manifold& man = prob.domain();

  Point p(p0.begin(), p0.end());
  TraceBuilder tb(prob, observer);
  try {
    Tangent g = prob.rgrad(p);
    double h = hamiltonian_value_from(oracle, p, g);
    Tangent grad_h = hamiltonian_grad_from(oracle, p, g);
    double ghh = man.inner(p, grad_h, grad_h);
    Tangent xi = ambient_scale(grad_h, -1.0);

    for (int t = 0; t < config.max_iters; ++t) {
      double gn = std::sqrt(2.0 * h);
      if (gn <= config.grad_tol) {
        tb.add(t, 0.0, gn, h, p);
        tb.trace.status = SolveStatus::Converged;
        return std::move(tb.trace);
      }

      WolfeCurve curve(oracle, p, xi, config.use_retraction);
      double dphi0 = man.inner(p, grad_h, xi);
      WolfeResult res =
          strong_wolfe_search(curve, h, dphi0, config.eta, config.r1, config.r2,
                              config.max_linesearch);
      tb.add(t, res.alpha, gn, h, p, res.evals);

      // Fletcher-Reeves momentum on the transported previous direction, with
      // a steepest-descent restart whenever conjugacy stops giving descent.
      double ghh_next = man.inner(res.eval.q, res.eval.grad_h, res.eval.grad_h);
      double beta = ghh_next / ghh;
      Tangent xi_next = man.transport(p, res.eval.q, xi);
      xi_next = ambient_scale(xi_next, beta);
      ambient_axpy(-1.0, res.eval.grad_h, xi_next);
      double descent = -man.inner(res.eval.q, xi_next, res.eval.grad_h);
      if (!(descent >= 1e-12 * ghh_next))
        xi_next = ambient_scale(res.eval.grad_h, -1.0);

      p = std::move(res.eval.q);
      grad_h = std::move(res.eval.grad_h);
      h = res.eval.phi;
      ghh = ghh_next;
      xi = std::move(xi_next);
    }
    double gn = std::sqrt(2.0 * h);
    tb.add(config.max_iters, 0.0, gn, h, p);
    tb.trace.status = gn <= config.grad_tol ? SolveStatus::Converged : SolveStatus::MaxIters;
  } catch (const LineSearchFailed& e) {
    tb.trace.status = SolveStatus::LineSearchFailed;
    tb.trace.error_message = e.what();
  } catch (const Error& e) {
    tb.trace.status = SolveStatus::Error;
    tb.trace.error_message = e.what();
  }
  return std::move(tb.trace);
}

SolverTrace rhm_tr(const HamiltonianOracle& oracle, CSpan p0, const SolverConfig& config,
                   const IterObserver& observer) {
  check_common(config);
  if (!(config.tr_delta0 > 0.0)) throw ConfigError("tr_delta0 must be positive");
  if (!(config.tr_delta_max >= config.tr_delta0))
    throw ConfigError("tr_delta_max must be at least tr_delta0");
  if (!(config.tr_rho_accept > 0.0 && config.tr_rho_accept < 0.75))
    throw ConfigError("tr_rho_accept must lie in (0, 0.75)");
  const MinMaxProblem& prob = *oracle.problem;
  const Manifold& man = prob.domain();

  Point p(p0.begin(), p0.end());
  double delta = config.tr_delta0;
  TraceBuilder tb(prob, observer);
  try {
    for (int t = 0; t < config.max_iters; ++t) {
      Tangent g = prob.rgrad(p);
      double h = hamiltonian_value_from(oracle, p, g);
      double gn = std::sqrt(2.0 * h);
      if (gn <= config.grad_tol) {
        tb.add(t, 0.0, gn, h, p);
        tb.trace.status = SolveStatus::Converged;
        return std::move(tb.trace);
      }
      Tangent grad_h = hamiltonian_grad_from(oracle, p, g);

      // Hessian-of-H action by a second-level finite difference of grad H.
      auto h_op = [&](CSpan w) {
        return fd_covariant_diff(
            man, [&](CSpan q) { return hamiltonian_grad(oracle, q); }, p, w, oracle.fd_h0);
      };

      // Steihaug truncated CG on T_pM.
      Tangent s;
      for (const Matrix& m : p) s.emplace_back(m.rows(), m.cols());
      Tangent r(grad_h.begin(), grad_h.end());
      Tangent d = ambient_scale(grad_h, -1.0);
      double rr = man.inner(p, r, r);
      double ghn = std::sqrt(rr);
      double stop = std::min(0.1, std::sqrt(ghn)) * ghn;
      double hnorm_est = 0.0;
      bool boundary = false;
      int inner = 0;
      int max_inner = std::max(1, man.dim());
      for (int j = 0; j < max_inner; ++j) {
        if (std::sqrt(rr) <= stop) break;
        Tangent hd = h_op(d);
        ++inner;
        if (!components_finite(hd))
          throw SubproblemBreakdown("trust-region model product is not finite");
        double dhd = man.inner(p, d, hd);
        double dd = man.inner(p, d, d);
        hnorm_est = std::max(hnorm_est, std::fabs(dhd) / dd);
        double ss = man.inner(p, s, s);
        double sd = man.inner(p, s, d);
        if (dhd <= 0.0) {
          double tau =
              (-sd + std::sqrt(sd * sd + dd * (delta * delta - ss))) / dd;
          ambient_axpy(tau, d, s);
          ambient_axpy(tau, hd, r);
          boundary = true;
          break;
        }
        double alpha = rr / dhd;
        double ss_try = ss + 2.0 * alpha * sd + alpha * alpha * dd;
        if (ss_try >= delta * delta) {
          double tau =
              (-sd + std::sqrt(sd * sd + dd * (delta * delta - ss))) / dd;
          ambient_axpy(tau, d, s);
          ambient_axpy(tau, hd, r);
          boundary = true;
          break;
        }
        ambient_axpy(alpha, d, s);
        ambient_axpy(alpha, hd, r);
        double rr_next = man.inner(p, r, r);
        double beta = rr_next / rr;
        rr = rr_next;
        Tangent d_next = ambient_scale(d, beta);
        ambient_axpy(-1.0, r, d_next);
        d = std::move(d_next);
        if (!components_finite(s) || !components_finite(r))
          throw SubproblemBreakdown("trust-region inner iterate is not finite");
      }

      // Model decrease m(0) - m(s) = -<g,s> - 1/2 <s,Hs> = -1/2 <s, r + g>
      // using r = grad H + H s maintained by the recursion.
      Tangent r_plus_g = ambient_add(r, grad_h);
      double pred = -0.5 * man.inner(p, s, r_plus_g);
      if (!std::isfinite(pred) || !(pred > 0.0))
        throw SubproblemBreakdown("trust-region model predicts no decrease");

      // A trial outside the feasible region can fail to evaluate; reject it
      // like any other bad ratio and let the radius shrink.
      Point trial;
      double ratio = -std::numeric_limits<double>::infinity();
      try {
        trial = man.step(p, s, config.use_retraction);
        double h_trial = hamiltonian_value(oracle, trial);
        if (std::isfinite(h_trial)) ratio = (h - h_trial) / pred;
      } catch (const Error&) {
      }
      double snorm = man.norm(p, s);

      bool accept = ratio > config.tr_rho_accept;
      tb.add(t, accept ? snorm : 0.0, gn, h, p, inner);
      if (accept) {
        tb.trace.tr_steps.push_back({t, ghn, pred, hnorm_est, delta, boundary});
        p = std::move(trial);
      }
      if (ratio < 0.25)
        delta *= 0.25;
      else if (ratio > 0.75 && boundary)
        delta = std::min(2.0 * delta, config.tr_delta_max);
    }
    Tangent g = prob.rgrad(p);
    double h = hamiltonian_value_from(oracle, p, g);
    double gn = std::sqrt(2.0 * h);
    tb.add(config.max_iters, 0.0, gn, h, p);
    tb.trace.status = gn <= config.grad_tol ? SolveStatus::Converged : SolveStatus::MaxIters;
  } catch (const LineSearchFailed& e) {
    tb.trace.status = SolveStatus::LineSearchFailed;
    tb.trace.error_message = e.what();
  } catch (const Error& e) {
    tb.trace.status = SolveStatus::Error;
    tb.trace.error_message = e.what();
  }
  return std::move(tb.trace);
}

namespace {

// Shared loop for the two baselines; H and grad f come straight from the
// problem (no Hessian products anywhere).
SolverTrace baseline_loop(const MinMaxProblem& prob, CSpan p0, const SolverConfig& cfg,
                          bool extragradient, const IterObserver& observer) {
  const Manifold& man = prob.domain();
  Point p(p0.begin(), p0.end());
  TraceBuilder tb(prob, observer);
  try {
    for (int t = 0; t < cfg.max_iters; ++t) {
      Tangent g = prob.rgrad(p);
      double h = 0.5 * man.inner(p, g, g);
      double gn = std::sqrt(2.0 * h);
      if (gn <= cfg.grad_tol) {
        tb.add(t, 0.0, gn, h, p);
        tb.trace.status = SolveStatus::Converged;
        return std::move(tb.trace);
      }
      tb.add(t, cfg.eta, gn, h, p);
      Tangent v = to_minmax(g, prob.x_components());
      if (!extragradient) {
        p = man.step(p, ambient_scale(v, -cfg.eta), cfg.use_retraction);
      } else {
        Point w = man.exp(p, ambient_scale(v, -cfg.eta));
        Tangent vw = to_minmax(prob.rgrad(w), prob.x_components());
        Tangent back = man.log(w, p);
        Tangent update = ambient_scale(vw, -cfg.eta);
        ambient_axpy(1.0, back, update);
        p = man.exp(w, update);
      }
    }
    Tangent g = prob.rgrad(p);
    double h = 0.5 * man.inner(p, g, g);
    double gn = std::sqrt(2.0 * h);
    tb.add(cfg.max_iters, 0.0, gn, h, p);
    tb.trace.status = gn <= cfg.grad_tol ? SolveStatus::Converged : SolveStatus::MaxIters;
  } catch (const Error& e) {
    tb.trace.status = SolveStatus::Error;
    tb.trace.error_message = e.what();
  }
  return std::move(tb.trace);
}

}  // namespace

SolverTrace rgda(const MinMaxProblem& problem, CSpan p0, const SolverConfig& config,
                 const IterObserver& observer) {
  check_common(config);
  check_step_rule(config, {StepRule::Fixed}, "rgda");
  return baseline_loop(problem, p0, config, false, observer);
}

SolverTrace rceg(const MinMaxProblem& problem, CSpan p0, const SolverConfig& config,
                 const IterObserver& observer) {
  check_common(config);
  check_step_rule(config, {StepRule::Fixed}, "rceg");
  if (!problem.domain().has_exp_log())
    throw LogUnavailable(problem.name() +
                         ": the extra-gradient correction needs a logarithm map on every factor");
  return baseline_loop(problem, p0, config, true, observer);
}

}  // namespace rhm
