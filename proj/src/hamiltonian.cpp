#include "rhm/hamiltonian.hpp"

#include <cmath>
#include <vector>

#include "rhm/errors.hpp"

namespace rhm {

HamiltonianOracle::HamiltonianOracle(const MinMaxProblem& prob, HvpMode mode, double h0)
    : problem(&prob), hvp_mode(mode), fd_h0(h0) {
  if (hvp_mode == HvpMode::Analytic && !prob.has_analytic_hvp())
    throw Error(prob.name() + ": analytic Hessian products requested but not available");
}

double hamiltonian_value(const HamiltonianOracle& oracle, CSpan p) {
  Tangent g = oracle.problem->rgrad(p);
  return hamiltonian_value_from(oracle, p, g);
}

double hamiltonian_value_from(const HamiltonianOracle& oracle, CSpan p, CSpan grad_f) {
  return 0.5 * oracle.problem->domain().inner(p, grad_f, grad_f);
}

Tangent fd_covariant_diff(const Manifold& manifold,
                          const std::function<Tangent(CSpan)>& field, CSpan p, CSpan u,
                          double h0) {
  double unorm = manifold.norm(p, u);
  if (unorm < 1e-14) return ambient_scale(u, 0.0);
  double h = h0 * (1.0 + ambient_norm(p));
  Tangent uplus = ambient_scale(u, h / unorm);
  Tangent uminus = ambient_scale(u, -h / unorm);
  Point qplus = manifold.step(p, uplus, false);
  Point qminus = manifold.step(p, uminus, false);
  Tangent gplus = manifold.transport(qplus, p, field(qplus));
  Tangent gminus = manifold.transport(qminus, p, field(qminus));
  Tangent diff = ambient_sub(gplus, gminus);
  return manifold.project_tangent(p, ambient_scale(diff, unorm / (2.0 * h)));
}

Tangent fd_hvp(const HamiltonianOracle& oracle, CSpan p, CSpan u) {
  const MinMaxProblem& prob = *oracle.problem;
  return fd_covariant_diff(
      prob.domain(), [&prob](CSpan q) { return prob.rgrad(q); }, p, u, oracle.fd_h0);
}

Tangent hvp(const HamiltonianOracle& oracle, CSpan p, CSpan u) {
  if (oracle.hvp_mode == HvpMode::Analytic) return oracle.problem->analytic_hvp(p, u);
  return fd_hvp(oracle, p, u);
}

Tangent hamiltonian_grad(const HamiltonianOracle& oracle, CSpan p) {
  Tangent g = oracle.problem->rgrad(p);
  return hamiltonian_grad_from(oracle, p, g);
}

Tangent hamiltonian_grad_from(const HamiltonianOracle& oracle, CSpan p, CSpan grad_f) {
  return hvp(oracle, p, grad_f);
}

Tangent minmax_gradient(const MinMaxProblem& problem, CSpan p) {
  Tangent g = problem.rgrad(p);
  for (int i = problem.x_components(); i < static_cast<int>(g.size()); ++i)
    g[static_cast<std::size_t>(i)] *= -1.0;
  return g;
}

namespace {

Tangent sample_hvp(const HamiltonianOracle& oracle, int i, CSpan p, CSpan u) {
  const MinMaxProblem& prob = *oracle.problem;
  if (oracle.hvp_mode == HvpMode::Analytic) return prob.sample_analytic_hvp(i, p, u);
  return fd_covariant_diff(
      prob.domain(), [&prob, i](CSpan q) { return prob.sample_rgrad(i, q); }, p, u,
      oracle.fd_h0);
}

}  // namespace

Tangent stochastic_hamiltonian_grad(const HamiltonianOracle& oracle, CSpan p,
                                    std::span<const int> s, std::span<const int> s_prime) {
  const MinMaxProblem& prob = *oracle.problem;
  int n = prob.num_samples();
  if (n == 0) throw NoSampleOracle(prob.name() + ": no per-sample oracle");
  if (s.empty() || s_prime.empty()) throw Error("stochastic gradient: empty sample set");
  std::vector<Tangent> grads(static_cast<std::size_t>(n));
  auto grad_of = [&](int i) -> const Tangent& {
    if (i < 0 || i >= n) throw Error("stochastic gradient: sample index out of range");
    Tangent& g = grads[static_cast<std::size_t>(i)];
    if (g.empty()) g = prob.sample_rgrad(i, p);
    return g;
  };
  for (int i : s) grad_of(i);
  for (int i : s_prime) grad_of(i);

  Tangent acc;
  for (const Matrix& m : p) acc.emplace_back(m.rows(), m.cols());
  for (int w : s) {
    for (int phi : s_prime) {
      Tangent a = sample_hvp(oracle, w, p, grad_of(phi));
      Tangent b = sample_hvp(oracle, phi, p, grad_of(w));
      ambient_axpy(0.5, a, acc);
      ambient_axpy(0.5, b, acc);
    }
  }
  double scale = 1.0 / (static_cast<double>(s.size()) * static_cast<double>(s_prime.size()));
  return ambient_scale(acc, scale);
}

}  // namespace rhm
