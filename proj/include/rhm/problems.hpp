#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "rhm/manifolds.hpp"

namespace rhm {

/// Min-max objective f on a product geometry M_x x M_y: the solvers minimize
/// over the x block and maximize over the y block. Components of a Point are
/// the x-geometry's components followed by the y-geometry's.
class MinMaxProblem {
 public:
  MinMaxProblem() = default;
  MinMaxProblem(const MinMaxProblem&) = delete;
  MinMaxProblem& operator=(const MinMaxProblem&) = delete;
  virtual ~MinMaxProblem() = default;

  virtual std::string name() const = 0;
  virtual const Manifold& domain() const = 0;
  virtual const Manifold& geometry_x() const = 0;
  virtual const Manifold& geometry_y() const = 0;
  int x_components() const { return geometry_x().components(); }

  virtual double value(CSpan p) const = 0;
  /// Riemannian gradient of f (both blocks ascent-signed).
  virtual Tangent rgrad(CSpan p) const = 0;

  virtual bool has_analytic_hvp() const { return false; }
  /// Riemannian Hessian action Hess f(p)[xi].
  virtual Tangent analytic_hvp(CSpan p, CSpan xi) const;

  /// Problem-specific optimality gap (only some problems define one).
  virtual bool has_opt_gap() const { return false; }
  virtual double opt_gap(CSpan p) const;

  /// Finite-sum structure; 0 means no per-sample oracle.
  virtual int num_samples() const { return 0; }
  virtual double sample_value(int i, CSpan p) const;
  virtual Tangent sample_rgrad(int i, CSpan p) const;
  virtual Tangent sample_analytic_hvp(int i, CSpan p, CSpan xi) const;
};

/// f(X, Y) = c_q (logdet X)^2 + c_l logdet X logdet Y - c_q (logdet Y)^2 on
/// SPD(d) x SPD(d). Saddle point set: det X = det Y = 1.
class QuadBilinear : public MinMaxProblem {
 public:
  QuadBilinear(int d, double c_q, double c_l);
  std::string name() const override { return "quad_bilinear"; }
  const Manifold& domain() const override { return domain_; }
  const Manifold& geometry_x() const override { return spd_; }
  const Manifold& geometry_y() const override { return spd_; }
  double value(CSpan p) const override;
  Tangent rgrad(CSpan p) const override;
  bool has_analytic_hvp() const override { return true; }
  Tangent analytic_hvp(CSpan p, CSpan xi) const override;
  bool has_opt_gap() const override { return true; }
  /// |det X - 1| + |det Y - 1|, evaluated overflow-safely via logdet.
  double opt_gap(CSpan p) const override;

  int dimension() const { return d_; }
  double cq() const { return cq_; }
  double cl() const { return cl_; }

 private:
  int d_;
  double cq_, cl_;
  Spd spd_;
  Product domain_;
};

/// PL constant of the quad-bilinear Hamiltonian: (4 c_q^2 + c_l^2) d^2.
double qb_pl_constant(int d, double c_q, double c_l);

/// Closed forms H(p) = (4c_q^2+c_l^2) (d/2) (u^2+v^2) and
/// grad H(p) = (4c_q^2+c_l^2) d (u X, v Y), with u = logdet X, v = logdet Y.
double qb_hamiltonian_closed_form(const QuadBilinear& problem, CSpan p);
Tangent qb_hamiltonian_grad_closed_form(const QuadBilinear& problem, CSpan p);

/// Finite-sum variant: per-sample weights c_{q,i} = c_q (1 + s_i) and
/// c_{l,i} = c_l (1 + t_i) with s, t ~ U[-spread, spread] re-centered to mean
/// zero, so the sample average objective equals the deterministic one. The
/// full value/gradient/HVP are computed as literal index-ordered sample
/// averages.
class QbFiniteSum : public MinMaxProblem {
 public:
  QbFiniteSum(int d, double c_q, double c_l, int n_samples, double spread, std::uint64_t seed);
  std::string name() const override { return "qb_finite_sum"; }
  const Manifold& domain() const override { return domain_; }
  const Manifold& geometry_x() const override { return spd_; }
  const Manifold& geometry_y() const override { return spd_; }
  double value(CSpan p) const override;
  Tangent rgrad(CSpan p) const override;
  bool has_analytic_hvp() const override { return true; }
  Tangent analytic_hvp(CSpan p, CSpan xi) const override;
  bool has_opt_gap() const override { return true; }
  double opt_gap(CSpan p) const override;
  int num_samples() const override { return static_cast<int>(cq_i_.size()); }
  double sample_value(int i, CSpan p) const override;
  Tangent sample_rgrad(int i, CSpan p) const override;
  Tangent sample_analytic_hvp(int i, CSpan p, CSpan xi) const override;

  double sample_cq(int i) const { return cq_i_[static_cast<std::size_t>(i)]; }
  double sample_cl(int i) const { return cl_i_[static_cast<std::size_t>(i)]; }

 private:
  int d_;
  std::vector<double> cq_i_, cl_i_;
  Spd spd_;
  Product domain_;
};

QbFiniteSum qb_finite_sum(int d, double c_q, double c_l, int n_samples, double spread,
                          std::uint64_t seed);

/// Trace-log bilinear objective f(X, Y) = tr(Log_X(X0) Log_Y(Y0)) on
/// SPD(d) x SPD(d). Gradients are assembled by central finite differences
/// over an affine-invariant orthonormal tangent basis; there is no analytic
/// Hessian oracle.
class TraceLog : public MinMaxProblem {
 public:
  TraceLog(int d, Matrix x0, Matrix y0, double fd_step = 1e-6);
  /// X0 = Y0 = I.
  explicit TraceLog(int d, double fd_step = 1e-6);
  std::string name() const override { return "tracelog"; }
  const Manifold& domain() const override { return domain_; }
  const Manifold& geometry_x() const override { return spd_; }
  const Manifold& geometry_y() const override { return spd_; }
  double value(CSpan p) const override;
  Tangent rgrad(CSpan p) const override;
  double fd_step() const { return h_; }

 private:
  int d_;
  Matrix x0_, y0_;
  double h_;
  Spd spd_;
  Product domain_;
};

/// Free-function form of the trace-log oracle.
double tracelog_value(const TraceLog& problem, CSpan p);
Tangent tracelog_grad(const TraceLog& problem, CSpan p);

struct RgpcaData {
  int d = 0;
  std::vector<Matrix> ms;
  void to_csv(std::ostream& os) const;
  static RgpcaData from_csv(std::istream& is);
};

/// n random SPD matrices Q diag(u) Q^T, u_i ~ U[mu0, mu1], Q from the QR of
/// a Gaussian square matrix.
RgpcaData random_spd_dataset(int n, int d, double mu0, double mu1, std::uint64_t seed);

/// Robust geometry-aware PCA surrogate:
///   f(M, x) = x^T M x + (alpha/n) sum_i dist^2(M, M_i)
/// minimized over SPD(d) in M, maximized over the sphere in x.
class Rgpca : public MinMaxProblem {
 public:
  Rgpca(RgpcaData data, double alpha, double mu0 = 0.2, double mu1 = 4.5);
  std::string name() const override { return "rgpca"; }
  const Manifold& domain() const override { return domain_; }
  const Manifold& geometry_x() const override { return spd_; }
  const Manifold& geometry_y() const override { return sphere_; }
  double value(CSpan p) const override;
  Tangent rgrad(CSpan p) const override;
  const RgpcaData& data() const { return data_; }
  double alpha() const { return alpha_; }

 private:
  RgpcaData data_;
  double alpha_;
  Spd spd_;
  Sphere sphere_;
  Product domain_;
};

struct SrwdData {
  Matrix xs;  // d x n, source points as columns
  Matrix ys;  // d x m, target points as columns
  void to_csv(std::ostream& os) const;
  static SrwdData from_csv(std::istream& is);
};

/// Fragmented-hypercube pairs: n sources uniform on [-1,1]^d and n targets
/// T(x') = x' + 2 sign(x') .* sum_{i<=k} e_i from an independent draw.
SrwdData fragmented_hypercube(int n, int d, int k, std::uint64_t seed);

/// Subspace-robust Wasserstein distance with entropic smoothing:
///   f(G, U) = sum_ij G_ij ||U^T (x_i - y_j)||^2 + eps sum_ij G_ij (log G_ij - 1)
/// minimized over the coupling polytope in G, maximized over Stiefel(d, r)
/// in U.
class Srwd : public MinMaxProblem {
 public:
  Srwd(SrwdData data, int r, double eps);
  std::string name() const override { return "srwd"; }
  const Manifold& domain() const override { return domain_; }
  const Manifold& geometry_x() const override { return coupling_; }
  const Manifold& geometry_y() const override { return stiefel_; }
  double value(CSpan p) const override;
  Tangent rgrad(CSpan p) const override;
  bool has_analytic_hvp() const override { return true; }
  Tangent analytic_hvp(CSpan p, CSpan xi) const override;
  const SrwdData& data() const { return data_; }
  double eps() const { return eps_; }

 private:
  SrwdData data_;
  int r_;
  double eps_;
  DoublyStochastic coupling_;
  Stiefel stiefel_;
  Product domain_;
};

}  // namespace rhm
