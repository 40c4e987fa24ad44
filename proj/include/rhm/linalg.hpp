#pragma once

#include <vector>

#include "rhm/errors.hpp"
#include "rhm/matrix.hpp"

namespace rhm {

/// Square matrix with the symmetry invariant enforced on construction
/// (input is symmetrized as 0.5*(A + A^T) and checked for finiteness).
class SymMatrix {
 public:
  explicit SymMatrix(Matrix m);
  const Matrix& mat() const { return m_; }
  operator const Matrix&() const { return m_; }
  int dim() const { return m_.rows(); }

 private:
  Matrix m_;
};

/// Eigendecomposition A = V diag(values) V^T with eigenvalues sorted in
/// descending order; `vectors` holds eigenvectors as columns.
struct EigenFactorization {
  Matrix vectors;
  std::vector<double> values;
};

/// Cyclic Jacobi eigensolver. Sweeps until the off-diagonal Frobenius norm
/// drops below 1e-13 * ||A||_F, at most 100 sweeps.
EigenFactorization sym_eig(const SymMatrix& a);

struct MatFn {
  enum Kind { Exp, Log, Sqrt, InvSqrt, Power } kind;
  double t = 0.0;  // exponent, Power only
};

/// Symmetric matrix function via eigendecomposition. Log/Sqrt/InvSqrt/Power
/// require eigenvalues > 1e-14 * max|lambda| (throws NotPositiveDefinite).
SymMatrix spd_matfn(const SymMatrix& a, MatFn fn);

inline SymMatrix spd_exp(const SymMatrix& a) { return spd_matfn(a, {MatFn::Exp}); }
inline SymMatrix spd_log(const SymMatrix& a) { return spd_matfn(a, {MatFn::Log}); }
inline SymMatrix spd_sqrt(const SymMatrix& a) { return spd_matfn(a, {MatFn::Sqrt}); }
inline SymMatrix spd_invsqrt(const SymMatrix& a) { return spd_matfn(a, {MatFn::InvSqrt}); }
inline SymMatrix spd_power(const SymMatrix& a, double t) {
  return spd_matfn(a, {MatFn::Power, t});
}

struct ThinQr {
  Matrix q;  // rows x cols, orthonormal columns
  Matrix r;  // cols x cols, upper triangular, positive diagonal
};

/// Householder thin QR of a tall matrix (rows >= cols). The factorization is
/// made unique by flipping signs so diag(R) > 0. Throws RankDeficient when
/// |R_ii| <= 1e-12 * ||A||_F.
ThinQr thin_qr(const Matrix& a);

/// Lower-triangular Cholesky factor of an SPD matrix.
struct Cholesky {
  Matrix l;
};

Cholesky cholesky(const SymMatrix& a);

/// log det A from the Cholesky factor.
double chol_logdet(const Cholesky& c);

/// Solves A X = B given A = L L^T.
Matrix chol_solve(const Cholesky& c, const Matrix& b);

/// L X = B (forward substitution), columns of B independently.
Matrix tri_solve_lower(const Matrix& l, const Matrix& b);

/// L^T X = B (back substitution).
Matrix tri_solve_lower_t(const Matrix& l, const Matrix& b);

}  // namespace rhm
