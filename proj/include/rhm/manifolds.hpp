#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rhm/errors.hpp"
#include "rhm/matrix.hpp"
#include "rhm/rng.hpp"

namespace rhm {

/// A manifold element or tangent element: one matrix per component. Simple
/// geometries have one component; products concatenate their factors'.
using Point = std::vector<Matrix>;
using Tangent = std::vector<Matrix>;

using CSpan = std::span<const Matrix>;

// Ambient (Frobenius) helpers on component lists. These deliberately ignore
// the Riemannian metric; use Manifold::inner for metric quantities.
double ambient_dot(CSpan a, CSpan b);
double ambient_norm(CSpan a);
Tangent ambient_add(CSpan a, CSpan b);
Tangent ambient_sub(CSpan a, CSpan b);
Tangent ambient_scale(CSpan a, double s);
/// y += alpha * x, componentwise.
void ambient_axpy(double alpha, CSpan x, Tangent& y);
bool components_finite(CSpan a);

/// Feasibility and tangency check tolerances. FD probes inject O(h) noise,
/// so these are constructor-configurable rather than hard-coded.
struct GeometryChecks {
  double on_manifold = 1e-8;
  double tangency = 1e-8;
};

/// Riemannian geometry contract shared by all five concrete geometries.
/// Points and tangents are carried as dense matrices in the ambient space.
class Manifold {
 public:
  virtual ~Manifold() = default;

  virtual std::string name() const = 0;
  /// Number of matrices in a Point/Tangent of this geometry.
  virtual int components() const { return 1; }
  /// Intrinsic dimension.
  virtual int dim() const = 0;
  /// True when the exponential map and logarithm are implemented.
  virtual bool has_exp_log() const = 0;

  virtual double inner(CSpan p, CSpan u, CSpan v) const = 0;
  double norm(CSpan p, CSpan u) const;

  /// Exponential map; throws LogUnavailable when has_exp_log() is false.
  virtual Point exp(CSpan p, CSpan u) const;
  /// Retraction: equals exp on geometries that have one, otherwise a
  /// first-order surrogate (QR on Stiefel, Sinkhorn on couplings).
  virtual Point retract(CSpan p, CSpan u) const = 0;
  /// Logarithm; throws LogUnavailable when has_exp_log() is false.
  virtual Tangent log(CSpan p, CSpan q) const;
  /// Parallel transport where available (sphere, SPD), otherwise tangent
  /// projection at q of the ambient representative.
  virtual Tangent transport(CSpan p, CSpan q, CSpan u) const = 0;
  /// Velocity d/da of the curve a -> step(p, a u, use_retraction) at the
  /// already-computed point q on it. Geodesic geometries carry the velocity
  /// by parallel transport (the default); the QR and Sinkhorn retractions
  /// have closed-form differentials. Line searches rely on this being the
  /// exact curve slope, not a first-order surrogate.
  virtual Tangent step_velocity(CSpan p, CSpan u, double a, CSpan q,
                                bool use_retraction) const;
  virtual Tangent project_tangent(CSpan p, CSpan z) const = 0;
  /// Euclidean gradient of an ambient extension -> Riemannian gradient.
  virtual Tangent egrad_to_rgrad(CSpan p, CSpan g) const = 0;

  virtual Point random_point(Rng& rng) const = 0;
  virtual Tangent random_tangent(CSpan p, Rng& rng) const = 0;

  /// Scale-free measure of constraint violation (0 on the manifold).
  virtual double constraint_violation(CSpan p) const = 0;

  /// exp when available and not overridden, else retract.
  Point step(CSpan p, CSpan u, bool use_retraction) const;
};

class Sphere final : public Manifold {
 public:
  explicit Sphere(int n, GeometryChecks checks = {});
  std::string name() const override;
  int dim() const override { return n_ - 1; }
  bool has_exp_log() const override { return true; }
  double inner(CSpan p, CSpan u, CSpan v) const override;
  Point exp(CSpan p, CSpan u) const override;
  Point retract(CSpan p, CSpan u) const override;
  Tangent log(CSpan p, CSpan q) const override;
  Tangent transport(CSpan p, CSpan q, CSpan u) const override;
  Tangent project_tangent(CSpan p, CSpan z) const override;
  Tangent egrad_to_rgrad(CSpan p, CSpan g) const override;
  Point random_point(Rng& rng) const override;
  Tangent random_tangent(CSpan p, Rng& rng) const override;
  double constraint_violation(CSpan p) const override;

 private:
  void check_point(CSpan p) const;
  int n_;
  GeometryChecks checks_;
};

/// Symmetric positive definite matrices with the affine-invariant metric
/// <U, V>_X = tr(X^-1 U X^-1 V).
class Spd final : public Manifold {
 public:
  explicit Spd(int n, double rand_mu0 = 0.5, double rand_mu1 = 2.0, GeometryChecks checks = {});
  std::string name() const override;
  int dim() const override { return n_ * (n_ + 1) / 2; }
  bool has_exp_log() const override { return true; }
  double inner(CSpan p, CSpan u, CSpan v) const override;
  Point exp(CSpan p, CSpan u) const override;
  Point retract(CSpan p, CSpan u) const override;
  Tangent log(CSpan p, CSpan q) const override;
  Tangent transport(CSpan p, CSpan q, CSpan u) const override;
  Tangent project_tangent(CSpan p, CSpan z) const override;
  Tangent egrad_to_rgrad(CSpan p, CSpan g) const override;
  Point random_point(Rng& rng) const override;
  Tangent random_tangent(CSpan p, Rng& rng) const override;
  double constraint_violation(CSpan p) const override;

 private:
  void check_pair(CSpan p, CSpan u) const;
  int n_;
  double mu0_, mu1_;
  GeometryChecks checks_;
};

/// Orthonormal n-by-r frames with the embedded Euclidean metric and the
/// sign-fixed QR retraction. No closed-form exp/log here.
class Stiefel final : public Manifold {
 public:
  Stiefel(int n, int r, GeometryChecks checks = {});
  std::string name() const override;
  int dim() const override { return n_ * r_ - r_ * (r_ + 1) / 2; }
  bool has_exp_log() const override { return false; }
  double inner(CSpan p, CSpan u, CSpan v) const override;
  Point retract(CSpan p, CSpan u) const override;
  Tangent transport(CSpan p, CSpan q, CSpan u) const override;
  Tangent step_velocity(CSpan p, CSpan u, double a, CSpan q,
                        bool use_retraction) const override;
  Tangent project_tangent(CSpan p, CSpan z) const override;
  Tangent egrad_to_rgrad(CSpan p, CSpan g) const override;
  Point random_point(Rng& rng) const override;
  Tangent random_tangent(CSpan p, Rng& rng) const override;
  double constraint_violation(CSpan p) const override;

 private:
  void check_point(CSpan p) const;
  int n_, r_;
  GeometryChecks checks_;
};

struct SinkhornResult {
  Matrix gamma;
  int iterations;
  double marginal_error;
};

/// Alternating diagonal scaling of an entrywise-positive matrix to the
/// marginals (a, b). Stops when max(||rowsum - a||_1, ||colsum - b||_1)
/// <= tol; throws SinkhornNotConverged after max_iters.
SinkhornResult sinkhorn(const Matrix& positive, const std::vector<double>& a,
                        const std::vector<double>& b, double tol = 1e-10,
                        int max_iters = 10000);

/// Fisher-metric tangent projection on the coupling polytope: subtracts
/// (alpha 1^T + 1 beta^T) .* gamma with multipliers from the (m+n)-variable
/// normal equations, one redundant constraint pinned (beta_n = 0).
Matrix ds_tangent_project(const Matrix& gamma, const Matrix& z, const std::vector<double>& a,
                          const std::vector<double>& b);

/// Strictly positive m-by-n matrices with prescribed row sums a and column
/// sums b, carrying the Fisher information metric <U, V>_G = sum U.*V./G.
class DoublyStochastic final : public Manifold {
 public:
  DoublyStochastic(std::vector<double> a, std::vector<double> b, GeometryChecks checks = {});
  /// Uniform marginals a_i = 1/m, b_j = 1/n.
  static DoublyStochastic uniform(int m, int n, GeometryChecks checks = {});
  std::string name() const override;
  int dim() const override { return (m_ - 1) * (n_ - 1); }
  bool has_exp_log() const override { return false; }
  double inner(CSpan p, CSpan u, CSpan v) const override;
  Point retract(CSpan p, CSpan u) const override;
  Tangent transport(CSpan p, CSpan q, CSpan u) const override;
  Tangent project_tangent(CSpan p, CSpan z) const override;
  Tangent egrad_to_rgrad(CSpan p, CSpan g) const override;
  Point random_point(Rng& rng) const override;
  Tangent random_tangent(CSpan p, Rng& rng) const override;
  double constraint_violation(CSpan p) const override;
  const std::vector<double>& row_marginals() const { return a_; }
  const std::vector<double>& col_marginals() const { return b_; }

 private:
  void check_point(CSpan p) const;
  int m_, n_;
  std::vector<double> a_, b_;
  GeometryChecks checks_;
};

/// Cartesian product; components of the factors are concatenated in order.
/// Factors are referenced, not owned.
class Product final : public Manifold {
 public:
  explicit Product(std::vector<const Manifold*> factors);
  std::string name() const override;
  int components() const override { return total_components_; }
  int dim() const override;
  bool has_exp_log() const override;
  double inner(CSpan p, CSpan u, CSpan v) const override;
  Point exp(CSpan p, CSpan u) const override;
  Point retract(CSpan p, CSpan u) const override;
  Tangent log(CSpan p, CSpan q) const override;
  Tangent transport(CSpan p, CSpan q, CSpan u) const override;
  Tangent step_velocity(CSpan p, CSpan u, double a, CSpan q,
                        bool use_retraction) const override;
  Tangent project_tangent(CSpan p, CSpan z) const override;
  Tangent egrad_to_rgrad(CSpan p, CSpan g) const override;
  Point random_point(Rng& rng) const override;
  Tangent random_tangent(CSpan p, Rng& rng) const override;
  double constraint_violation(CSpan p) const override;

  int factor_count() const { return static_cast<int>(factors_.size()); }
  const Manifold& factor(int i) const { return *factors_[static_cast<std::size_t>(i)]; }
  /// Component range [offset, offset + count) of factor i.
  int factor_offset(int i) const { return offsets_[static_cast<std::size_t>(i)]; }

 private:
  std::vector<const Manifold*> factors_;
  std::vector<int> offsets_;
  int total_components_;
};

inline Product product_geometry(std::vector<const Manifold*> factors) {
  return Product(std::move(factors));
}

}  // namespace rhm
