#pragma once

#include <functional>
#include <span>

#include "rhm/problems.hpp"

namespace rhm {

enum class HvpMode { Analytic, FiniteDiff };

/// Evaluation bundle for the Hamiltonian H(p) = 1/2 ||grad f(p)||^2 and its
/// gradient grad H(p) = Hess f(p)[grad f(p)]. Holds no state beyond the
/// problem reference and the Hessian-product policy; all evaluations are
/// pure.
struct HamiltonianOracle {
  const MinMaxProblem* problem;
  HvpMode hvp_mode;
  double fd_h0 = 1e-5;

  /// Picks the analytic Hessian product when the problem has one.
  explicit HamiltonianOracle(const MinMaxProblem& prob)
      : problem(&prob),
        hvp_mode(prob.has_analytic_hvp() ? HvpMode::Analytic : HvpMode::FiniteDiff) {}
  HamiltonianOracle(const MinMaxProblem& prob, HvpMode mode, double h0 = 1e-5);
};

/// H(p) = 1/2 (||grad_x f||^2_x + ||grad_y f||^2_y).
double hamiltonian_value(const HamiltonianOracle& oracle, CSpan p);
/// Same, reusing a precomputed grad f(p).
double hamiltonian_value_from(const HamiltonianOracle& oracle, CSpan p, CSpan grad_f);

/// Central-difference covariant derivative of a tangent field along u:
/// transport field(q+-) back to p from q+- = step(p, +-h u/||u||), difference,
/// scale by ||u||/(2h) with h = h0 (1 + ||p||), project onto T_p M.
/// ||u|| < 1e-14 returns the zero tangent.
Tangent fd_covariant_diff(const Manifold& manifold,
                          const std::function<Tangent(CSpan)>& field, CSpan p, CSpan u,
                          double h0);

/// Finite-difference Hess f(p)[u] via fd_covariant_diff of grad f.
Tangent fd_hvp(const HamiltonianOracle& oracle, CSpan p, CSpan u);

/// Hess f(p)[u] through the oracle's policy (analytic or finite difference).
Tangent hvp(const HamiltonianOracle& oracle, CSpan p, CSpan u);

/// grad H(p) = Hess f(p)[grad f(p)].
Tangent hamiltonian_grad(const HamiltonianOracle& oracle, CSpan p);
/// Same, reusing a precomputed grad f(p).
Tangent hamiltonian_grad_from(const HamiltonianOracle& oracle, CSpan p, CSpan grad_f);

/// Min-max vector field v(p) = (grad_x f, -grad_y f).
Tangent minmax_gradient(const MinMaxProblem& problem, CSpan p);

/// Stochastic Hamiltonian gradient over sample index sets S, S':
///   (1/|S||S'|) sum_{w in S, phi in S'} 1/2 (Hess f(p;w)[grad f(p;phi)]
///                                           + Hess f(p;phi)[grad f(p;w)]).
/// Per-sample gradients are computed once per distinct index; the double sum
/// is accumulated in loop order, so results are bit-stable.
Tangent stochastic_hamiltonian_grad(const HamiltonianOracle& oracle, CSpan p,
                                    std::span<const int> s, std::span<const int> s_prime);

}  // namespace rhm
