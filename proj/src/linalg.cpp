#include "rhm/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rhm {

SymMatrix::SymMatrix(Matrix m) {
  if (m.rows() != m.cols()) throw Error("SymMatrix: input must be square");
  if (!all_finite(m)) throw NonFinite("SymMatrix: input has NaN or Inf entries");
  m_ = symmetrize(m);
}

namespace {

double offdiag_norm(const Matrix& a) {
  double acc = 0.0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = i + 1; j < a.cols(); ++j) acc += 2.0 * a(i, j) * a(i, j);
  return std::sqrt(acc);
}

}  // namespace

EigenFactorization sym_eig(const SymMatrix& sym) {
  const Matrix& input = sym.mat();
  const int n = input.rows();
  Matrix a = input;
  // Accumulate rotations into Q stored transposed (rows are eigenvector
  // candidates) so updates touch contiguous rows.
  Matrix qt = Matrix::identity(n);
  const double threshold = 1e-13 * fnorm(input);

  for (int sweep = 0; sweep < 100; ++sweep) {
    if (offdiag_norm(a) <= threshold) break;
    for (int i = 0; i < n - 1; ++i) {
      for (int j = i + 1; j < n; ++j) {
        double apq = a(i, j);
        if (apq == 0.0) continue;
        double aii = a(i, i);
        double ajj = a(j, j);
        double tau = (ajj - aii) / (2.0 * apq);
        double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double s = t * c;
        // A <- J^T A J with J the (i,j) rotation: rotate rows, mirror into
        // columns, then fix the 2x2 block analytically.
        kern::active().rot(a.row(i), a.row(j), c, -s, static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) {
          a(k, i) = a(i, k);
          a(k, j) = a(j, k);
        }
        a(i, i) = c * c * aii - 2.0 * s * c * apq + s * s * ajj;
        a(j, j) = s * s * aii + 2.0 * s * c * apq + c * c * ajj;
        a(i, j) = 0.0;
        a(j, i) = 0.0;
        kern::active().rot(qt.row(i), qt.row(j), c, -s, static_cast<std::size_t>(n));
      }
    }
  }

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int x, int y) { return a(x, x) > a(y, y); });

  EigenFactorization f;
  f.values.resize(static_cast<std::size_t>(n));
  f.vectors = Matrix(n, n);
  for (int k = 0; k < n; ++k) {
    f.values[static_cast<std::size_t>(k)] = a(order[static_cast<std::size_t>(k)],
                                              order[static_cast<std::size_t>(k)]);
    for (int r = 0; r < n; ++r)
      f.vectors(r, k) = qt(order[static_cast<std::size_t>(k)], r);
  }
  return f;
}

SymMatrix spd_matfn(const SymMatrix& a, MatFn fn) {
  EigenFactorization f = sym_eig(a);
  const int n = a.dim();
  double max_abs_ev = 0.0;
  for (double v : f.values) max_abs_ev = std::max(max_abs_ev, std::fabs(v));

  if (fn.kind != MatFn::Exp) {
    double min_ev = f.values.empty() ? 0.0 : f.values.back();
    if (min_ev <= 1e-14 * max_abs_ev || min_ev <= 0.0)
      throw NotPositiveDefinite("spd_matfn: matrix is not positive definite");
  }

  std::vector<double> mapped(f.values.size());
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    double v = f.values[i];
    switch (fn.kind) {
      case MatFn::Exp: mapped[i] = std::exp(v); break;
      case MatFn::Log: mapped[i] = std::log(v); break;
      case MatFn::Sqrt: mapped[i] = std::sqrt(v); break;
      case MatFn::InvSqrt: mapped[i] = 1.0 / std::sqrt(v); break;
      case MatFn::Power: mapped[i] = std::pow(v, fn.t); break;
    }
  }

  // V diag(mapped) V^T
  Matrix scaled(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) scaled(i, j) = f.vectors(i, j) * mapped[static_cast<std::size_t>(j)];
  return SymMatrix(matmul_nt(scaled, f.vectors));
}

ThinQr thin_qr(const Matrix& a) {
  const int m = a.rows();
  const int n = a.cols();
  if (m < n) throw Error("thin_qr: matrix must have rows >= cols");
  if (!all_finite(a)) throw NonFinite("thin_qr: input has NaN or Inf entries");

  const double scale = fnorm(a);
  Matrix r = a;
  std::vector<Matrix> reflectors;
  reflectors.reserve(static_cast<std::size_t>(n));

  for (int k = 0; k < n; ++k) {
    // Householder vector for column k below the diagonal.
    double norm_x = 0.0;
    for (int i = k; i < m; ++i) norm_x += r(i, k) * r(i, k);
    norm_x = std::sqrt(norm_x);
    Matrix v(m, 1);
    double alpha = r(k, k) >= 0.0 ? -norm_x : norm_x;
    if (norm_x == 0.0) {
      reflectors.push_back(Matrix(m, 1));  // zero reflector, identity step
      continue;
    }
    for (int i = k; i < m; ++i) v(i, 0) = r(i, k);
    v(k, 0) -= alpha;
    double vnorm = fnorm(v);
    if (vnorm > 0.0) v *= 1.0 / vnorm;
    // R <- (I - 2 v v^T) R, applied to columns k..n-1
    for (int j = k; j < n; ++j) {
      double proj = 0.0;
      for (int i = k; i < m; ++i) proj += v(i, 0) * r(i, j);
      for (int i = k; i < m; ++i) r(i, j) -= 2.0 * proj * v(i, 0);
    }
    reflectors.push_back(std::move(v));
  }

  // Thin Q: apply reflectors in reverse to the first n columns of I.
  Matrix q(m, n);
  for (int j = 0; j < n; ++j) q(j, j) = 1.0;
  for (int k = n - 1; k >= 0; --k) {
    const Matrix& v = reflectors[static_cast<std::size_t>(k)];
    if (fnorm_sq(v) == 0.0) continue;
    for (int j = 0; j < n; ++j) {
      double proj = 0.0;
      for (int i = k; i < m; ++i) proj += v(i, 0) * q(i, j);
      for (int i = k; i < m; ++i) q(i, j) -= 2.0 * proj * v(i, 0);
    }
  }

  ThinQr out;
  out.q = std::move(q);
  out.r = Matrix(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) out.r(i, j) = r(i, j);

  for (int i = 0; i < n; ++i) {
    if (std::fabs(out.r(i, i)) <= 1e-12 * scale)
      throw RankDeficient("thin_qr: numerically rank-deficient input");
    if (out.r(i, i) < 0.0) {
      for (int j = i; j < n; ++j) out.r(i, j) = -out.r(i, j);
      for (int k = 0; k < m; ++k) out.q(k, i) = -out.q(k, i);
    }
  }
  return out;
}

Cholesky cholesky(const SymMatrix& sym) {
  const Matrix& a = sym.mat();
  const int n = a.rows();
  Matrix l(n, n);
  for (int j = 0; j < n; ++j) {
    double d = a(j, j);
    for (int k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (d <= 0.0 || !std::isfinite(d))
      throw NotPositiveDefinite("cholesky: matrix is not positive definite");
    double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (int i = j + 1; i < n; ++i) {
      double s = a(i, j);
      s -= kern::active().dot(l.row(i), l.row(j), static_cast<std::size_t>(j));
      l(i, j) = s / ljj;
    }
  }
  return {std::move(l)};
}

double chol_logdet(const Cholesky& c) {
  double acc = 0.0;
  for (int i = 0; i < c.l.rows(); ++i) acc += std::log(c.l(i, i));
  return 2.0 * acc;
}

Matrix tri_solve_lower(const Matrix& l, const Matrix& b) {
  const int n = l.rows();
  Matrix x = b;
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < i; ++k)
      kern::active().axpy(-l(i, k), x.row(k), x.row(i), static_cast<std::size_t>(x.cols()));
    kern::active().scal(1.0 / l(i, i), x.row(i), static_cast<std::size_t>(x.cols()));
  }
  return x;
}

Matrix tri_solve_lower_t(const Matrix& l, const Matrix& b) {
  const int n = l.rows();
  Matrix x = b;
  for (int i = n - 1; i >= 0; --i) {
    for (int k = i + 1; k < n; ++k)
      kern::active().axpy(-l(k, i), x.row(k), x.row(i), static_cast<std::size_t>(x.cols()));
    kern::active().scal(1.0 / l(i, i), x.row(i), static_cast<std::size_t>(x.cols()));
  }
  return x;
}

Matrix chol_solve(const Cholesky& c, const Matrix& b) {
  return tri_solve_lower_t(c.l, tri_solve_lower(c.l, b));
}

}  // namespace rhm
