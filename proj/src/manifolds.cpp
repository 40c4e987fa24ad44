#include "rhm/manifolds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rhm/linalg.hpp"

namespace rhm {

double ambient_dot(CSpan a, CSpan b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += fdot(a[i], b[i]);
  return acc;
}

double ambient_norm(CSpan a) {
  double acc = 0.0;
  for (const Matrix& m : a) acc += fnorm_sq(m);
  return std::sqrt(acc);
}

Tangent ambient_add(CSpan a, CSpan b) {
  Tangent out(a.begin(), a.end());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += b[i];
  return out;
}

Tangent ambient_sub(CSpan a, CSpan b) {
  Tangent out(a.begin(), a.end());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] -= b[i];
  return out;
}

Tangent ambient_scale(CSpan a, double s) {
  Tangent out(a.begin(), a.end());
  for (Matrix& m : out) m *= s;
  return out;
}

void ambient_axpy(double alpha, CSpan x, Tangent& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i].axpy(alpha, x[i]);
}

bool components_finite(CSpan a) {
  for (const Matrix& m : a)
    if (!all_finite(m)) return false;
  return true;
}

double Manifold::norm(CSpan p, CSpan u) const {
  return std::sqrt(std::max(0.0, inner(p, u, u)));
}

Point Manifold::exp(CSpan, CSpan) const {
  throw LogUnavailable(name() + ": exponential map is not available");
}

Tangent Manifold::log(CSpan, CSpan) const {
  throw LogUnavailable(name() + ": logarithm map is not available");
}

Point Manifold::step(CSpan p, CSpan u, bool use_retraction) const {
  // A zero displacement returns the point bitwise, so stationary iterations
  // (saddle starts, zero steps) are exact.
  bool zero = true;
  for (const Matrix& m : u)
    if (max_abs(m) != 0.0) {
      zero = false;
      break;
    }
  if (zero) return Point(p.begin(), p.end());
  if (use_retraction || !has_exp_log()) return retract(p, u);
  return exp(p, u);
}

Tangent Manifold::step_velocity(CSpan p, CSpan u, double, CSpan q, bool) const {
  // Geodesic geometries (retract == exp here, and transport is parallel along
  // the connecting geodesic) carry the velocity exactly. Retractions with a
  // different differential override this.
  return transport(p, q, u);
}

// ---------------------------------------------------------------------------
// Sphere
// ---------------------------------------------------------------------------

Sphere::Sphere(int n, GeometryChecks checks) : n_(n), checks_(checks) {
  if (n < 2) throw Error("Sphere: dimension must be at least 2");
}

std::string Sphere::name() const { return "sphere(" + std::to_string(n_) + ")"; }

double Sphere::constraint_violation(CSpan p) const {
  return std::fabs(fnorm(p[0]) - 1.0);
}

void Sphere::check_point(CSpan p) const {
  if (!components_finite(p)) throw NonFinite("sphere: point has NaN or Inf entries");
  if (constraint_violation(p) > checks_.on_manifold)
    throw NotOnManifold("sphere: point is not unit-norm");
}

double Sphere::inner(CSpan, CSpan u, CSpan v) const { return fdot(u[0], v[0]); }

Tangent Sphere::project_tangent(CSpan p, CSpan z) const {
  Tangent out{z[0]};
  out[0].axpy(-fdot(p[0], z[0]), p[0]);
  return out;
}

Tangent Sphere::egrad_to_rgrad(CSpan p, CSpan g) const { return project_tangent(p, g); }

Point Sphere::exp(CSpan p, CSpan u) const {
  check_point(p);
  double radial = fdot(p[0], u[0]);
  if (std::fabs(radial) > checks_.tangency * (1.0 + fnorm(u[0])))
    throw NotOnManifold("sphere: direction is not tangent at the base point");
  double theta = fnorm(u[0]);
  if (theta < 1e-12) return Point{p[0]};
  Matrix out = p[0] * std::cos(theta);
  out.axpy(std::sin(theta) / theta, u[0]);
  out *= 1.0 / fnorm(out);
  return Point{std::move(out)};
}

Point Sphere::retract(CSpan p, CSpan u) const { return exp(p, u); }

Tangent Sphere::log(CSpan p, CSpan q) const {
  check_point(p);
  check_point(q);
  double c = std::clamp(fdot(p[0], q[0]), -1.0, 1.0);
  if (c <= -1.0 + 1e-10)
    throw AntipodalPoints("sphere: logarithm is undefined for antipodal points");
  Matrix w = q[0];
  w.axpy(-c, p[0]);  // Proj_p(q - p)
  double wn = fnorm(w);
  if (wn < 1e-14) return Tangent{Matrix(n_, 1)};
  w *= std::acos(c) / wn;
  return Tangent{std::move(w)};
}

Tangent Sphere::transport(CSpan p, CSpan q, CSpan u) const {
  Tangent xi = log(p, q);
  double theta = fnorm(xi[0]);
  if (theta < 1e-12) return Tangent{u[0]};
  Matrix e = xi[0] * (1.0 / theta);
  double a = fdot(e, u[0]);
  // The component along e rotates in the (p, e) plane; the rest is unchanged.
  Matrix out = u[0];
  out.axpy(a * (std::cos(theta) - 1.0), e);
  out.axpy(-a * std::sin(theta), p[0]);
  return project_tangent(q, Tangent{std::move(out)});
}

Point Sphere::random_point(Rng& rng) const {
  Matrix g(n_, 1);
  for (int i = 0; i < n_; ++i) g(i, 0) = rng.normal();
  g *= 1.0 / fnorm(g);
  return Point{std::move(g)};
}

Tangent Sphere::random_tangent(CSpan p, Rng& rng) const {
  Matrix g(n_, 1);
  for (int i = 0; i < n_; ++i) g(i, 0) = rng.normal();
  return project_tangent(p, Tangent{std::move(g)});
}

// ---------------------------------------------------------------------------
// SPD with the affine-invariant metric
// ---------------------------------------------------------------------------

Spd::Spd(int n, double rand_mu0, double rand_mu1, GeometryChecks checks)
    : n_(n), mu0_(rand_mu0), mu1_(rand_mu1), checks_(checks) {
  if (n < 1) throw Error("Spd: dimension must be positive");
  if (!(rand_mu0 > 0.0) || !(rand_mu1 >= rand_mu0))
    throw Error("Spd: random-point eigenvalue range must satisfy 0 < mu0 <= mu1");
}

std::string Spd::name() const { return "spd(" + std::to_string(n_) + ")"; }

double Spd::constraint_violation(CSpan p) const {
  const Matrix& x = p[0];
  double asym = 0.0;
  for (int i = 0; i < n_; ++i)
    for (int j = i + 1; j < n_; ++j) asym += (x(i, j) - x(j, i)) * (x(i, j) - x(j, i));
  double violation = std::sqrt(2.0 * asym) / (1.0 + fnorm(x));
  try {
    cholesky(SymMatrix(x));
  } catch (const Error&) {
    violation += 1.0;
  }
  return violation;
}

void Spd::check_pair(CSpan p, CSpan u) const {
  if (!components_finite(p)) throw NonFinite("spd: point has NaN or Inf entries");
  if (constraint_violation(p) > checks_.on_manifold)
    throw NotOnManifold("spd: point is not symmetric positive definite");
  if (!u.empty()) {
    const Matrix& t = u[0];
    double asym = 0.0;
    for (int i = 0; i < n_; ++i)
      for (int j = i + 1; j < n_; ++j) asym += (t(i, j) - t(j, i)) * (t(i, j) - t(j, i));
    if (std::sqrt(2.0 * asym) > checks_.tangency * (1.0 + fnorm(t)))
      throw NotOnManifold("spd: tangent is not symmetric");
  }
}

double Spd::inner(CSpan p, CSpan u, CSpan v) const {
  Cholesky c = cholesky(SymMatrix(p[0]));
  // W = L^-1 U L^-T, computed as L^-1 (L^-1 U)^T for symmetric U.
  Matrix wu = tri_solve_lower(c.l, transpose(tri_solve_lower(c.l, u[0])));
  if (&u[0] == &v[0]) return fnorm_sq(wu);
  Matrix wv = tri_solve_lower(c.l, transpose(tri_solve_lower(c.l, v[0])));
  return fdot(wu, wv);
}

Tangent Spd::project_tangent(CSpan, CSpan z) const { return Tangent{symmetrize(z[0])}; }

Tangent Spd::egrad_to_rgrad(CSpan p, CSpan g) const {
  return Tangent{symmetrize(p[0] * symmetrize(g[0]) * p[0])};
}

Point Spd::exp(CSpan p, CSpan u) const {
  check_pair(p, u);
  if (max_abs(u[0]) == 0.0) return Point{p[0]};
  EigenFactorization f = sym_eig(SymMatrix(p[0]));
  if (f.values.back() <= 0.0) throw NotPositiveDefinite("spd: point is not positive definite");
  const int n = n_;
  Matrix half(n, n), invhalf(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = std::sqrt(f.values[static_cast<std::size_t>(j)]);
      half(i, j) = f.vectors(i, j) * s;
      invhalf(i, j) = f.vectors(i, j) / s;
    }
  // X^{1/2} = half * V^T, X^{-1/2} = invhalf * V^T
  Matrix xh = matmul_nt(half, f.vectors);
  Matrix xih = matmul_nt(invhalf, f.vectors);
  Matrix m = symmetrize(xih * symmetrize(u[0]) * xih);
  Matrix e = spd_exp(SymMatrix(std::move(m)));
  return Point{symmetrize(xh * e * xh)};
}

Point Spd::retract(CSpan p, CSpan u) const { return exp(p, u); }

Tangent Spd::log(CSpan p, CSpan q) const {
  check_pair(p, {});
  check_pair(q, {});
  bool same = true;
  for (std::size_t i = 0; i < p[0].size() && same; ++i)
    same = p[0].data()[i] == q[0].data()[i];
  if (same) return Tangent{Matrix(n_, n_)};
  SymMatrix x(p[0]);
  Matrix xh = spd_sqrt(x);
  Matrix xih = spd_invsqrt(x);
  Matrix m = symmetrize(xih * q[0] * xih);
  Matrix lg = spd_log(SymMatrix(std::move(m)));
  return Tangent{symmetrize(xh * lg * xh)};
}

Tangent Spd::transport(CSpan p, CSpan q, CSpan u) const {
  // E = X^{1/2} (X^{-1/2} Y X^{-1/2})^{1/2} X^{-1/2} satisfies E E = Y X^-1,
  // and U |-> E U E^T is the affine-invariant parallel transport p -> q.
  SymMatrix x(p[0]);
  Matrix xh = spd_sqrt(x);
  Matrix xih = spd_invsqrt(x);
  Matrix inner_half = spd_sqrt(SymMatrix(symmetrize(xih * q[0] * xih)));
  Matrix e = xh * inner_half * xih;
  return Tangent{symmetrize(e * symmetrize(u[0]) * transpose(e))};
}

Point Spd::random_point(Rng& rng) const {
  Matrix g(n_, n_);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j) g(i, j) = rng.normal();
  Matrix q = thin_qr(g).q;
  Matrix scaled(n_, n_);
  for (int j = 0; j < n_; ++j) {
    double ev = rng.uniform(mu0_, mu1_);
    for (int i = 0; i < n_; ++i) scaled(i, j) = q(i, j) * ev;
  }
  return Point{symmetrize(matmul_nt(scaled, q))};
}

Tangent Spd::random_tangent(CSpan p, Rng& rng) const {
  Matrix g(n_, n_);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j) g(i, j) = rng.normal();
  Matrix s = symmetrize(g);
  Matrix xh = spd_sqrt(SymMatrix(p[0]));
  return Tangent{symmetrize(xh * s * xh)};
}

// ---------------------------------------------------------------------------
// Stiefel
// ---------------------------------------------------------------------------

Stiefel::Stiefel(int n, int r, GeometryChecks checks) : n_(n), r_(r), checks_(checks) {
  if (n < r || r < 1) throw Error("Stiefel: need n >= r >= 1");
}

std::string Stiefel::name() const {
  return "stiefel(" + std::to_string(n_) + "," + std::to_string(r_) + ")";
}

double Stiefel::constraint_violation(CSpan p) const {
  Matrix gram = matmul_tn(p[0], p[0]);
  for (int i = 0; i < r_; ++i) gram(i, i) -= 1.0;
  return fnorm(gram);
}

void Stiefel::check_point(CSpan p) const {
  if (!components_finite(p)) throw NonFinite("stiefel: point has NaN or Inf entries");
  if (constraint_violation(p) > checks_.on_manifold)
    throw NotOnManifold("stiefel: point does not have orthonormal columns");
}

double Stiefel::inner(CSpan, CSpan u, CSpan v) const { return fdot(u[0], v[0]); }

Tangent Stiefel::project_tangent(CSpan p, CSpan z) const {
  Matrix s = symmetrize(matmul_tn(p[0], z[0]));
  Matrix out = z[0];
  out -= p[0] * s;
  return Tangent{std::move(out)};
}

Tangent Stiefel::egrad_to_rgrad(CSpan p, CSpan g) const { return project_tangent(p, g); }

Point Stiefel::retract(CSpan p, CSpan u) const {
  check_point(p);
  Matrix s = symmetrize(matmul_tn(p[0], u[0]));
  if (fnorm(s) > checks_.tangency * (1.0 + fnorm(u[0])))
    throw NotOnManifold("stiefel: direction is not tangent at the base point");
  return Point{thin_qr(p[0] + u[0]).q};
}

Tangent Stiefel::transport(CSpan, CSpan q, CSpan u) const {
  return project_tangent(q, u);
}

Tangent Stiefel::step_velocity(CSpan p, CSpan u, double a, CSpan q, bool) const {
  // Differential of the QR retraction along a -> qr(p + a u). Writing
  // M = p + a u = Q R and B = Q^T u R^{-1}, the orthonormal factor moves as
  //   dQ/da = Q rho(B) + (I - Q Q^T) u R^{-1},
  // where rho copies B's strict lower triangle antisymmetrically and zeroes
  // the diagonal. R is recovered from the already-computed q as Q^T M.
  Matrix m = p[0];
  m.axpy(a, u[0]);
  Matrix r = matmul_tn(q[0], m);
  // Right-solve y r = u against the upper triangle, forward over columns.
  Matrix y = u[0];
  for (int j = 0; j < r_; ++j) {
    double d = r(j, j);
    if (std::fabs(d) < 1e-300)
      throw SingularSystem("stiefel: retraction curve has a rank-deficient factor");
    for (int i = 0; i < n_; ++i) {
      double s = y(i, j);
      for (int l = 0; l < j; ++l) s -= y(i, l) * r(l, j);
      y(i, j) = s / d;
    }
  }
  Matrix b = matmul_tn(q[0], y);
  Matrix rho(r_, r_);
  for (int i = 0; i < r_; ++i)
    for (int j = 0; j < r_; ++j) rho(i, j) = i > j ? b(i, j) : (i < j ? -b(j, i) : 0.0);
  Matrix out = q[0] * rho;
  out += y;
  out -= q[0] * b;
  return Tangent{std::move(out)};
}

Point Stiefel::random_point(Rng& rng) const {
  Matrix g(n_, r_);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < r_; ++j) g(i, j) = rng.normal();
  return Point{thin_qr(g).q};
}

Tangent Stiefel::random_tangent(CSpan p, Rng& rng) const {
  Matrix g(n_, r_);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < r_; ++j) g(i, j) = rng.normal();
  return project_tangent(p, Tangent{std::move(g)});
}

// ---------------------------------------------------------------------------
// Doubly stochastic (coupling polytope, Fisher metric)
// ---------------------------------------------------------------------------

namespace {

// Balances exp(log_arg) to the marginals (a, b), i.e. computes the
// Sinkhorn-Knopp limit diag(u) exp(log_arg) diag(v), parameterized by
// additive potentials u = exp(f), v = exp(g).
//
// Log domain: retractions near the boundary of the coupling polytope hand us
// arguments whose entries span hundreds of orders of magnitude; in linear
// arithmetic those underflow to zero, the support graph effectively loses
// edges and the balancing problem turns infeasible, so the marginal error
// plateaus above tolerance. With potentials every entry stays finite and the
// scaling limit exists.
//
// Acceleration: alternating scaling contracts like the coupling's mixing
// factor, which reaches 0.9995+ on entropic couplings at small eps, i.e.
// tens of thousands of sweeps to 1e-10. The potentials are instead the
// minimizer of the strictly convex dual Psi(f, g) = sum exp(log_arg + f + g)
// - <a, f> - <b, g>, whose gradient is the marginal residual and whose
// Hessian is the bordered system [diag(row); coupling | coupling^T;
// diag(col)] (one potential pinned to remove the constant shift). Damped
// Newton on Psi converges in a handful of steps regardless of stiffness;
// each step costs about two plain sweeps. Classic alternating half-sweeps
// start the potentials (they absorb arbitrarily large entry offsets) and
// serve as the fallback whenever the Newton system cannot be factored.
SinkhornResult sinkhorn_log(const Matrix& log_arg, const std::vector<double>& a,
                            const std::vector<double>& b, double tol, int max_iters) {
  const int m = log_arg.rows();
  const int n = log_arg.cols();
  const std::size_t um = static_cast<std::size_t>(m);
  const std::size_t un = static_cast<std::size_t>(n);
  std::vector<double> f(um, 0.0), g(un, 0.0);
  std::vector<double> log_a(um), log_b(un);
  for (std::size_t i = 0; i < um; ++i) log_a[i] = std::log(a[i]);
  for (std::size_t j = 0; j < un; ++j) log_b[j] = std::log(b[j]);

  auto half_sweep_rows = [&]() {
    for (int i = 0; i < m; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < n; ++j)
        mx = std::max(mx, log_arg(i, j) + g[static_cast<std::size_t>(j)]);
      double s = 0.0;
      for (int j = 0; j < n; ++j)
        s += std::exp(log_arg(i, j) + g[static_cast<std::size_t>(j)] - mx);
      f[static_cast<std::size_t>(i)] = log_a[static_cast<std::size_t>(i)] - mx - std::log(s);
    }
  };
  auto half_sweep_cols = [&]() {
    for (int j = 0; j < n; ++j) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i)
        mx = std::max(mx, log_arg(i, j) + f[static_cast<std::size_t>(i)]);
      double s = 0.0;
      for (int i = 0; i < m; ++i)
        s += std::exp(log_arg(i, j) + f[static_cast<std::size_t>(i)] - mx);
      g[static_cast<std::size_t>(j)] = log_b[static_cast<std::size_t>(j)] - mx - std::log(s);
    }
  };

  Matrix gamma(m, n);
  std::vector<double> row_sum(um), col_sum(un);
  auto materialize = [&]() {
    for (std::size_t j = 0; j < un; ++j) col_sum[j] = 0.0;
    for (int i = 0; i < m; ++i) {
      double rs = 0.0;
      for (int j = 0; j < n; ++j) {
        double e = std::exp(log_arg(i, j) + f[static_cast<std::size_t>(i)] +
                            g[static_cast<std::size_t>(j)]);
        gamma(i, j) = e;
        rs += e;
        col_sum[static_cast<std::size_t>(j)] += e;
      }
      row_sum[static_cast<std::size_t>(i)] = rs;
    }
    double row_err = 0.0, col_err = 0.0;
    for (std::size_t i = 0; i < um; ++i) row_err += std::fabs(row_sum[i] - a[i]);
    for (std::size_t j = 0; j < un; ++j) col_err += std::fabs(col_sum[j] - b[j]);
    return std::max(row_err, col_err);
  };
  auto psi = [&](const std::vector<double>& ff, const std::vector<double>& gg) {
    double s = 0.0;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        s += std::exp(log_arg(i, j) + ff[static_cast<std::size_t>(i)] +
                      gg[static_cast<std::size_t>(j)]);
    for (std::size_t i = 0; i < um; ++i) s -= a[i] * ff[i];
    for (std::size_t j = 0; j < un; ++j) s -= b[j] * gg[j];
    return s;
  };

  std::vector<double> fh(um), gh(un);
  // One over-relaxed sweep; returns the exact l1 row error of the pre-update
  // iterate (row sum_i = a_i exp(f_i - fh_i)), which costs nothing extra.
  auto relaxed_sweep = [&](double omega) {
    double row_err = 0.0;
    for (int i = 0; i < m; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < n; ++j)
        mx = std::max(mx, log_arg(i, j) + g[static_cast<std::size_t>(j)]);
      double s = 0.0;
      for (int j = 0; j < n; ++j)
        s += std::exp(log_arg(i, j) + g[static_cast<std::size_t>(j)] - mx);
      std::size_t si = static_cast<std::size_t>(i);
      fh[si] = log_a[si] - mx - std::log(s);
      row_err += a[si] * std::fabs(std::expm1(f[si] - fh[si]));
    }
    for (std::size_t i = 0; i < um; ++i) f[i] += omega * (fh[i] - f[i]);
    for (int j = 0; j < n; ++j) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i)
        mx = std::max(mx, log_arg(i, j) + f[static_cast<std::size_t>(i)]);
      double s = 0.0;
      for (int i = 0; i < m; ++i)
        s += std::exp(log_arg(i, j) + f[static_cast<std::size_t>(i)] - mx);
      std::size_t sj = static_cast<std::size_t>(j);
      gh[sj] = log_b[sj] - mx - std::log(s);
    }
    for (std::size_t j = 0; j < un; ++j) g[j] += omega * (gh[j] - g[j]);
    return row_err;
  };

  // Phase one: two plain half-sweeps absorb arbitrarily large entry offsets,
  // then over-relaxed sweeps (w past the SOR optimum contracts the error
  // envelope like w - 1 independent of the mixing factor) bring the residual
  // down to where Newton sits in its quadratic basin.
  half_sweep_rows();
  half_sweep_cols();
  int it = 1;
  for (; it < max_iters; ++it) {
    double est = relaxed_sweep(1.95);
    if (est != est)
      throw SinkhornNotConverged("sinkhorn: scaling produced non-finite marginals");
    if (est <= 1e-3) {
      ++it;
      break;
    }
  }

  // Phase two: damped Newton on Psi. Extra Levenberg-style damping is raised
  // when a step is rejected and decayed on success; after repeated rejections
  // a burst of classic sweeps re-centers the potentials.
  const int dim = m + n - 1;
  std::vector<double> ft(um), gt(un);
  double lambda = 0.0;
  int rejected = 0;
  double err = std::numeric_limits<double>::infinity();
  for (; it < max_iters; ++it) {
    err = materialize();
    if (err != err)
      throw SinkhornNotConverged("sinkhorn: scaling produced non-finite marginals");
    if (err <= tol) return {std::move(gamma), it, err};

    double scale = 0.0;
    for (std::size_t i = 0; i < um; ++i) scale = std::max(scale, row_sum[i]);
    for (std::size_t j = 0; j < un; ++j) scale = std::max(scale, col_sum[j]);
    if (!std::isfinite(scale) || scale <= 0.0)
      throw SinkhornNotConverged("sinkhorn: scaling produced non-finite marginals");

    bool stepped = false;
    try {
      Matrix sys(dim, dim);
      Matrix rhs(dim, 1);
      double damp = scale * 1e-13 + lambda;
      for (int i = 0; i < m; ++i) {
        sys(i, i) = row_sum[static_cast<std::size_t>(i)] + damp;
        rhs(i, 0) = a[static_cast<std::size_t>(i)] - row_sum[static_cast<std::size_t>(i)];
        for (int j = 0; j < n - 1; ++j) {
          sys(i, m + j) = gamma(i, j);
          sys(m + j, i) = gamma(i, j);
        }
      }
      for (int j = 0; j < n - 1; ++j) {
        sys(m + j, m + j) = col_sum[static_cast<std::size_t>(j)] + damp;
        rhs(m + j, 0) = b[static_cast<std::size_t>(j)] - col_sum[static_cast<std::size_t>(j)];
      }
      Matrix delta = chol_solve(cholesky(SymMatrix(std::move(sys))), rhs);

      // Armijo on Psi; a Newton step of an SPD system is always descent.
      double slope = 0.0;
      for (int i = 0; i < m; ++i) slope -= rhs(i, 0) * delta(i, 0);
      for (int j = 0; j < n - 1; ++j) slope -= rhs(m + j, 0) * delta(m + j, 0);
      double psi0 = psi(f, g);
      double t = 1.0;
      for (int ls = 0; ls < 20; ++ls) {
        for (std::size_t i = 0; i < um; ++i) ft[i] = f[i] + t * delta(static_cast<int>(i), 0);
        for (std::size_t j = 0; j + 1 < un; ++j)
          gt[j] = g[j] + t * delta(m + static_cast<int>(j), 0);
        gt[un - 1] = g[un - 1];
        double trial = psi(ft, gt);
        if (std::isfinite(trial) && trial <= psi0 + 1e-4 * t * slope) {
          f.swap(ft);
          g.swap(gt);
          stepped = true;
          break;
        }
        t *= 0.5;
      }
    } catch (const NotPositiveDefinite&) {
    }
    if (stepped) {
      lambda *= 0.2;
      rejected = 0;
    } else {
      lambda = std::max(lambda * 100.0, scale * 1e-8);
      if (++rejected >= 2) {
        rejected = 0;
        for (int burst = 0; burst < 50 && it + 1 < max_iters; ++burst, ++it)
          relaxed_sweep(1.95);
      }
    }
  }
  err = materialize();
  if (err <= tol) return {std::move(gamma), max_iters, err};
  throw SinkhornNotConverged("sinkhorn: marginal error " + std::to_string(err) +
                             " after max iterations");
}

}  // namespace

SinkhornResult sinkhorn(const Matrix& positive, const std::vector<double>& a,
                        const std::vector<double>& b, double tol, int max_iters) {
  const int m = positive.rows();
  const int n = positive.cols();
  if (static_cast<int>(a.size()) != m || static_cast<int>(b.size()) != n)
    throw Error("sinkhorn: marginal sizes do not match the matrix");
  for (std::size_t i = 0; i < positive.size(); ++i) {
    double e = positive.data()[i];
    if (!(e > 0.0) || !std::isfinite(e))
      throw NotPositiveEntries("sinkhorn: input must be entrywise positive and finite");
  }
  Matrix log_arg(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) log_arg(i, j) = std::log(positive(i, j));
  return sinkhorn_log(log_arg, a, b, tol, max_iters);
}

Matrix ds_tangent_project(const Matrix& gamma, const Matrix& z, const std::vector<double>&,
                          const std::vector<double>&) {
  const int m = gamma.rows();
  const int n = gamma.cols();
  // Normal equations in (alpha, beta) for the Fisher-orthogonal correction
  // (alpha 1^T + 1 beta^T) .* gamma; the system has a one-dimensional null
  // space (alpha, beta) = (c, -c), removed by pinning beta_n = 0.
  std::vector<double> row_sum(static_cast<std::size_t>(m), 0.0);
  std::vector<double> col_sum(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < m; ++i)
    row_sum[static_cast<std::size_t>(i)] =
        kern::active().sum(gamma.row(i), static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += gamma(i, j);
    col_sum[static_cast<std::size_t>(j)] = s;
  }

  // The ridge keeps the factorization alive when the coupling's support is
  // effectively disconnected in doubles (entries underflowed to the floor);
  // the free dual shifts it pins down multiply those same negligible
  // entries, so the projected vector is unaffected at working precision.
  const int dim = m + n - 1;
  double ridge = 0.0;
  for (std::size_t i = 0; i < row_sum.size(); ++i) ridge = std::max(ridge, row_sum[i]);
  for (std::size_t j = 0; j < col_sum.size(); ++j) ridge = std::max(ridge, col_sum[j]);
  ridge *= 1e-13;
  Matrix sys(dim, dim);
  Matrix rhs(dim, 1);
  for (int i = 0; i < m; ++i) {
    sys(i, i) = row_sum[static_cast<std::size_t>(i)] + ridge;
    double r = kern::active().sum(z.row(i), static_cast<std::size_t>(n));
    rhs(i, 0) = r;
    for (int j = 0; j < n - 1; ++j) {
      sys(i, m + j) = gamma(i, j);
      sys(m + j, i) = gamma(i, j);
    }
  }
  for (int j = 0; j < n - 1; ++j) {
    sys(m + j, m + j) = col_sum[static_cast<std::size_t>(j)] + ridge;
    double c = 0.0;
    for (int i = 0; i < m; ++i) c += z(i, j);
    rhs(m + j, 0) = c;
  }

  Matrix mult;
  try {
    mult = chol_solve(cholesky(SymMatrix(std::move(sys))), rhs);
  } catch (const NotPositiveDefinite&) {
    throw SingularSystem("ds_tangent_project: normal equations are singular");
  }

  Matrix out = z;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double beta = (j < n - 1) ? mult(m + j, 0) : 0.0;
      out(i, j) -= (mult(i, 0) + beta) * gamma(i, j);
    }
  return out;
}

DoublyStochastic::DoublyStochastic(std::vector<double> a, std::vector<double> b,
                                   GeometryChecks checks)
    : m_(static_cast<int>(a.size())),
      n_(static_cast<int>(b.size())),
      a_(std::move(a)),
      b_(std::move(b)),
      checks_(checks) {
  if (m_ < 2 || n_ < 2) throw Error("DoublyStochastic: need at least 2x2 couplings");
  double sa = 0.0, sb = 0.0;
  for (double x : a_) {
    if (!(x > 0.0)) throw NotPositiveEntries("DoublyStochastic: row marginals must be positive");
    sa += x;
  }
  for (double x : b_) {
    if (!(x > 0.0)) throw NotPositiveEntries("DoublyStochastic: column marginals must be positive");
    sb += x;
  }
  if (std::fabs(sa - sb) > 1e-12 * std::max(sa, sb))
    throw Error("DoublyStochastic: marginals must have equal total mass");
}

DoublyStochastic DoublyStochastic::uniform(int m, int n, GeometryChecks checks) {
  // Total mass 1 on both sides.
  return DoublyStochastic(std::vector<double>(static_cast<std::size_t>(m), 1.0 / m),
                          std::vector<double>(static_cast<std::size_t>(n), 1.0 / n), checks);
}

std::string DoublyStochastic::name() const {
  return "coupling(" + std::to_string(m_) + "," + std::to_string(n_) + ")";
}

double DoublyStochastic::constraint_violation(CSpan p) const {
  const Matrix& g = p[0];
  double row_err = 0.0, col_err = 0.0, neg = 0.0;
  for (int i = 0; i < m_; ++i) {
    double s = 0.0;
    for (int j = 0; j < n_; ++j) {
      s += g(i, j);
      if (!(g(i, j) > 0.0)) neg = 1.0;
    }
    row_err += std::fabs(s - a_[static_cast<std::size_t>(i)]);
  }
  for (int j = 0; j < n_; ++j) {
    double s = 0.0;
    for (int i = 0; i < m_; ++i) s += g(i, j);
    col_err += std::fabs(s - b_[static_cast<std::size_t>(j)]);
  }
  return std::max(row_err, col_err) + neg;
}

void DoublyStochastic::check_point(CSpan p) const {
  if (!components_finite(p)) throw NonFinite("coupling: point has NaN or Inf entries");
  if (constraint_violation(p) > checks_.on_manifold)
    throw NotOnManifold("coupling: point is not a positive coupling of (a, b)");
}

double DoublyStochastic::inner(CSpan p, CSpan u, CSpan v) const {
  return fdot(u[0], hadamard_div(v[0], p[0]));
}

Tangent DoublyStochastic::project_tangent(CSpan p, CSpan z) const {
  return Tangent{ds_tangent_project(p[0], z[0], a_, b_)};
}

Tangent DoublyStochastic::egrad_to_rgrad(CSpan p, CSpan g) const {
  return project_tangent(p, Tangent{hadamard(g[0], p[0])});
}

Point DoublyStochastic::retract(CSpan p, CSpan u) const {
  check_point(p);
  // R_G(U) = Sinkhorn(G .* exp(U ./ G)), assembled directly in the log
  // domain as log G + U ./ G so the exponential never materializes; G is
  // floored before the division. Entries that balance below the double
  // underflow threshold are floored afterwards to keep the point strictly
  // positive (marginal cost ~ mn * 1e-300, far below tolerance).
  Matrix log_arg(m_, n_);
  for (int i = 0; i < m_; ++i)
    for (int j = 0; j < n_; ++j) {
      double g = std::max(p[0](i, j), 1e-300);
      log_arg(i, j) = std::log(g) + u[0](i, j) / g;
    }
  Matrix gamma = sinkhorn_log(log_arg, a_, b_, 1e-10, 10000).gamma;
  for (int i = 0; i < m_; ++i)
    for (int j = 0; j < n_; ++j) gamma(i, j) = std::max(gamma(i, j), 1e-300);
  return Point{std::move(gamma)};
}

Tangent DoublyStochastic::transport(CSpan p, CSpan q, CSpan u) const {
  // Differentiated Sinkhorn retraction. In the log domain the retraction is
  // linear in the displacement, log c = log G + w ./ G + duals, so its
  // differential sends u to P_q(q .* (u ./ G)) regardless of which
  // displacement connected p to q; the dual-rate term it drops is normal in
  // the Fisher metric. The coupling ratio keeps tangent components scaled
  // with the entries they sit on. Bare reprojection would keep raw
  // components on collapsing entries, and their Fisher weight 1/Gamma then
  // explodes; this is also why the same map serves as the exact curve
  // velocity for line searches (the base step_velocity forwards here).
  Matrix v(m_, n_);
  for (int i = 0; i < m_; ++i)
    for (int j = 0; j < n_; ++j)
      v(i, j) = u[0](i, j) * (q[0](i, j) / std::max(p[0](i, j), 1e-300));
  return project_tangent(q, Tangent{std::move(v)});
}

Point DoublyStochastic::random_point(Rng& rng) const {
  Matrix g(m_, n_);
  for (int i = 0; i < m_; ++i)
    for (int j = 0; j < n_; ++j) g(i, j) = std::exp(rng.normal());
  return Point{sinkhorn(g, a_, b_).gamma};
}

Tangent DoublyStochastic::random_tangent(CSpan p, Rng& rng) const {
  // Scale the Gaussian by the point so retractions of unit multiples stay in
  // a numerically comfortable range.
  Matrix g(m_, n_);
  for (int i = 0; i < m_; ++i)
    for (int j = 0; j < n_; ++j) g(i, j) = rng.normal() * p[0](i, j);
  return project_tangent(p, Tangent{std::move(g)});
}

// ---------------------------------------------------------------------------
// Product
// ---------------------------------------------------------------------------

Product::Product(std::vector<const Manifold*> factors) : factors_(std::move(factors)) {
  if (factors_.empty()) throw Error("Product: needs at least one factor");
  offsets_.resize(factors_.size());
  int off = 0;
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    offsets_[i] = off;
    off += factors_[i]->components();
  }
  total_components_ = off;
}

std::string Product::name() const {
  std::string s = "product(";
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    if (i) s += " x ";
    s += factors_[i]->name();
  }
  return s + ")";
}

int Product::dim() const {
  int d = 0;
  for (const Manifold* f : factors_) d += f->dim();
  return d;
}

bool Product::has_exp_log() const {
  for (const Manifold* f : factors_)
    if (!f->has_exp_log()) return false;
  return true;
}

namespace {
CSpan slice(CSpan all, int offset, int count) {
  return all.subspan(static_cast<std::size_t>(offset), static_cast<std::size_t>(count));
}
}  // namespace

double Product::inner(CSpan p, CSpan u, CSpan v) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    int off = offsets_[i];
    int c = factors_[i]->components();
    acc += factors_[i]->inner(slice(p, off, c), slice(u, off, c), slice(v, off, c));
  }
  return acc;
}

#define RHM_PRODUCT_MAP2(method, a, b)                                              \
  Point out;                                                                        \
  out.reserve(static_cast<std::size_t>(total_components_));                         \
  for (std::size_t i = 0; i < factors_.size(); ++i) {                               \
    int off = offsets_[i];                                                          \
    int c = factors_[i]->components();                                              \
    Point part = factors_[i]->method(slice(a, off, c), slice(b, off, c));            \
    for (Matrix& m : part) out.push_back(std::move(m));                             \
  }                                                                                 \
  return out

Point Product::exp(CSpan p, CSpan u) const { RHM_PRODUCT_MAP2(exp, p, u); }
Point Product::retract(CSpan p, CSpan u) const { RHM_PRODUCT_MAP2(retract, p, u); }
Tangent Product::log(CSpan p, CSpan q) const { RHM_PRODUCT_MAP2(log, p, q); }
Tangent Product::project_tangent(CSpan p, CSpan z) const { RHM_PRODUCT_MAP2(project_tangent, p, z); }
Tangent Product::egrad_to_rgrad(CSpan p, CSpan g) const { RHM_PRODUCT_MAP2(egrad_to_rgrad, p, g); }

#undef RHM_PRODUCT_MAP2

Tangent Product::transport(CSpan p, CSpan q, CSpan u) const {
  Tangent out;
  out.reserve(static_cast<std::size_t>(total_components_));
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    int off = offsets_[i];
    int c = factors_[i]->components();
    Tangent part =
        factors_[i]->transport(slice(p, off, c), slice(q, off, c), slice(u, off, c));
    for (Matrix& m : part) out.push_back(std::move(m));
  }
  return out;
}

Tangent Product::step_velocity(CSpan p, CSpan u, double a, CSpan q,
                               bool use_retraction) const {
  // step() picks exp or retract once for the whole product, so every factor
  // has to see the same choice here.
  bool retr = use_retraction || !has_exp_log();
  Tangent out;
  out.reserve(static_cast<std::size_t>(total_components_));
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    int off = offsets_[i];
    int c = factors_[i]->components();
    Tangent part = factors_[i]->step_velocity(slice(p, off, c), slice(u, off, c), a,
                                              slice(q, off, c), retr);
    for (Matrix& m : part) out.push_back(std::move(m));
  }
  return out;
}

Point Product::random_point(Rng& rng) const {
  Point out;
  out.reserve(static_cast<std::size_t>(total_components_));
  for (const Manifold* f : factors_) {
    Point part = f->random_point(rng);
    for (Matrix& m : part) out.push_back(std::move(m));
  }
  return out;
}

Tangent Product::random_tangent(CSpan p, Rng& rng) const {
  Tangent out;
  out.reserve(static_cast<std::size_t>(total_components_));
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    int off = offsets_[i];
    int c = factors_[i]->components();
    Tangent part = factors_[i]->random_tangent(slice(p, off, c), rng);
    for (Matrix& m : part) out.push_back(std::move(m));
  }
  return out;
}

double Product::constraint_violation(CSpan p) const {
  double worst = 0.0;
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    int off = offsets_[i];
    int c = factors_[i]->components();
    worst = std::max(worst, factors_[i]->constraint_violation(slice(p, off, c)));
  }
  return worst;
}

}  // namespace rhm
