#include "rhm/problems.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rhm/errors.hpp"
#include "rhm/format.hpp"
#include "rhm/linalg.hpp"

namespace rhm {

Tangent MinMaxProblem::analytic_hvp(CSpan, CSpan) const {
  throw Error(name() + ": no analytic Hessian oracle");
}

double MinMaxProblem::opt_gap(CSpan) const {
  throw Error(name() + ": no optimality gap defined");
}

double MinMaxProblem::sample_value(int, CSpan) const {
  throw NoSampleOracle(name() + ": no per-sample oracle");
}

Tangent MinMaxProblem::sample_rgrad(int, CSpan) const {
  throw NoSampleOracle(name() + ": no per-sample oracle");
}

Tangent MinMaxProblem::sample_analytic_hvp(int, CSpan, CSpan) const {
  throw NoSampleOracle(name() + ": no per-sample oracle");
}

namespace {

double logdet_spd(const Matrix& x) { return chol_logdet(cholesky(SymMatrix(x))); }

// tr(X^{-1} U) via one triangular solve pair on the Cholesky factor.
double trace_inv_times(const Cholesky& chol_x, const Matrix& u) {
  Matrix w = tri_solve_lower(chol_x.l, u);
  Matrix s = tri_solve_lower_t(chol_x.l, w);
  return trace(s);
}

struct SqrtPair {
  Matrix sqrt;
  Matrix invsqrt;
};

SqrtPair spd_sqrt_pair(const Matrix& x) {
  EigenFactorization f = sym_eig(SymMatrix(x));
  int n = x.rows();
  double lmax = 0.0;
  for (double v : f.values) lmax = std::max(lmax, std::fabs(v));
  Matrix vs(n, n), vi(n, n);
  for (int j = 0; j < n; ++j) {
    double lam = f.values[static_cast<std::size_t>(j)];
    if (!(lam > 0.0) || lam <= 1e-14 * lmax)
      throw NotPositiveDefinite("matrix square root of a non-positive matrix");
    double s = std::sqrt(lam);
    for (int i = 0; i < n; ++i) {
      vs(i, j) = f.vectors(i, j) * s;
      vi(i, j) = f.vectors(i, j) / s;
    }
  }
  return {symmetrize(matmul_nt(vs, f.vectors)), symmetrize(matmul_nt(vi, f.vectors))};
}

// logm of an SPD matrix given directly (not via the SymMatrix wrappers so the
// caller controls symmetrization of the conjugated input).
Matrix spd_logm(const Matrix& w) { return spd_log(SymMatrix(w)).mat(); }

}  // namespace

QuadBilinear::QuadBilinear(int d, double c_q, double c_l)
    : d_(d), cq_(c_q), cl_(c_l), spd_(d), domain_({&spd_, &spd_}) {}

double QuadBilinear::value(CSpan p) const {
  double u = logdet_spd(p[0]);
  double v = logdet_spd(p[1]);
  return cq_ * u * u + cl_ * u * v - cq_ * v * v;
}

Tangent QuadBilinear::rgrad(CSpan p) const {
  double u = logdet_spd(p[0]);
  double v = logdet_spd(p[1]);
  Tangent g;
  g.push_back((2.0 * cq_ * u + cl_ * v) * p[0]);
  g.push_back((cl_ * u - 2.0 * cq_ * v) * p[1]);
  return g;
}

Tangent QuadBilinear::analytic_hvp(CSpan p, CSpan xi) const {
  Cholesky cx = cholesky(SymMatrix(p[0]));
  Cholesky cy = cholesky(SymMatrix(p[1]));
  double tu = trace_inv_times(cx, xi[0]);
  double tv = trace_inv_times(cy, xi[1]);
  Tangent h;
  h.push_back((2.0 * cq_ * tu + cl_ * tv) * p[0]);
  h.push_back((cl_ * tu - 2.0 * cq_ * tv) * p[1]);
  return h;
}

double QuadBilinear::opt_gap(CSpan p) const {
  return std::fabs(std::expm1(logdet_spd(p[0]))) + std::fabs(std::expm1(logdet_spd(p[1])));
}

double qb_pl_constant(int d, double c_q, double c_l) {
  double c = 4.0 * c_q * c_q + c_l * c_l;
  return c * static_cast<double>(d) * static_cast<double>(d);
}

double qb_hamiltonian_closed_form(const QuadBilinear& problem, CSpan p) {
  double u = logdet_spd(p[0]);
  double v = logdet_spd(p[1]);
  double c = 4.0 * problem.cq() * problem.cq() + problem.cl() * problem.cl();
  return 0.5 * c * problem.dimension() * (u * u + v * v);
}

Tangent qb_hamiltonian_grad_closed_form(const QuadBilinear& problem, CSpan p) {
  double u = logdet_spd(p[0]);
  double v = logdet_spd(p[1]);
  double c = (4.0 * problem.cq() * problem.cq() + problem.cl() * problem.cl()) *
             problem.dimension();
  Tangent g;
  g.push_back(c * u * p[0]);
  g.push_back(c * v * p[1]);
  return g;
}

QbFiniteSum::QbFiniteSum(int d, double c_q, double c_l, int n_samples, double spread,
                         std::uint64_t seed)
    : d_(d), spd_(d), domain_({&spd_, &spd_}) {
  Rng rng(seed);
  std::vector<double> s(static_cast<std::size_t>(n_samples)),
      t(static_cast<std::size_t>(n_samples));
  for (auto& v : s) v = rng.uniform(-spread, spread);
  for (auto& v : t) v = rng.uniform(-spread, spread);
  double ms = 0.0, mt = 0.0;
  for (double v : s) ms += v;
  for (double v : t) mt += v;
  ms /= n_samples;
  mt /= n_samples;
  cq_i_.resize(static_cast<std::size_t>(n_samples));
  cl_i_.resize(static_cast<std::size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) {
    cq_i_[static_cast<std::size_t>(i)] = c_q * (1.0 + s[static_cast<std::size_t>(i)] - ms);
    cl_i_[static_cast<std::size_t>(i)] = c_l * (1.0 + t[static_cast<std::size_t>(i)] - mt);
  }
}

double QbFiniteSum::value(CSpan p) const {
  double acc = 0.0;
  for (int i = 0; i < num_samples(); ++i) acc += sample_value(i, p);
  return acc / num_samples();
}

Tangent QbFiniteSum::rgrad(CSpan p) const {
  Tangent acc = sample_rgrad(0, p);
  for (int i = 1; i < num_samples(); ++i) ambient_axpy(1.0, sample_rgrad(i, p), acc);
  return ambient_scale(acc, 1.0 / num_samples());
}

Tangent QbFiniteSum::analytic_hvp(CSpan p, CSpan xi) const {
  Tangent acc = sample_analytic_hvp(0, p, xi);
  for (int i = 1; i < num_samples(); ++i) ambient_axpy(1.0, sample_analytic_hvp(i, p, xi), acc);
  return ambient_scale(acc, 1.0 / num_samples());
}

double QbFiniteSum::opt_gap(CSpan p) const {
  return std::fabs(std::expm1(logdet_spd(p[0]))) + std::fabs(std::expm1(logdet_spd(p[1])));
}

double QbFiniteSum::sample_value(int i, CSpan p) const {
  double u = logdet_spd(p[0]);
  double v = logdet_spd(p[1]);
  return sample_cq(i) * u * u + sample_cl(i) * u * v - sample_cq(i) * v * v;
}

Tangent QbFiniteSum::sample_rgrad(int i, CSpan p) const {
  double u = logdet_spd(p[0]);
  double v = logdet_spd(p[1]);
  Tangent g;
  g.push_back((2.0 * sample_cq(i) * u + sample_cl(i) * v) * p[0]);
  g.push_back((sample_cl(i) * u - 2.0 * sample_cq(i) * v) * p[1]);
  return g;
}

Tangent QbFiniteSum::sample_analytic_hvp(int i, CSpan p, CSpan xi) const {
  Cholesky cx = cholesky(SymMatrix(p[0]));
  Cholesky cy = cholesky(SymMatrix(p[1]));
  double tu = trace_inv_times(cx, xi[0]);
  double tv = trace_inv_times(cy, xi[1]);
  Tangent h;
  h.push_back((2.0 * sample_cq(i) * tu + sample_cl(i) * tv) * p[0]);
  h.push_back((sample_cl(i) * tu - 2.0 * sample_cq(i) * tv) * p[1]);
  return h;
}

QbFiniteSum qb_finite_sum(int d, double c_q, double c_l, int n_samples, double spread,
                          std::uint64_t seed) {
  return QbFiniteSum(d, c_q, c_l, n_samples, spread, seed);
}

TraceLog::TraceLog(int d, Matrix x0, Matrix y0, double fd_step)
    : d_(d), x0_(std::move(x0)), y0_(std::move(y0)), h_(fd_step), spd_(d),
      domain_({&spd_, &spd_}) {}

TraceLog::TraceLog(int d, double fd_step)
    : TraceLog(d, Matrix::identity(d), Matrix::identity(d), fd_step) {}

namespace {

// Orthonormal basis of sym(d) under the Frobenius inner product, conjugated
// by X^{1/2}: the resulting fields are orthonormal for the affine-invariant
// metric at X.
std::vector<Matrix> spd_tangent_basis(const Matrix& sqrt_x) {
  int d = sqrt_x.rows();
  std::vector<Matrix> basis;
  basis.reserve(static_cast<std::size_t>(d * (d + 1) / 2));
  double inv_rt2 = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      Matrix s(d, d);
      if (i == j) {
        s(i, i) = 1.0;
      } else {
        s(i, j) = inv_rt2;
        s(j, i) = inv_rt2;
      }
      basis.push_back(sqrt_x * s * sqrt_x);
    }
  }
  return basis;
}

}  // namespace

double TraceLog::value(CSpan p) const {
  // Log_X(X0) and Log_Y(Y0) are symmetric, so tr(A B) = <A, B>_F.
  CSpan x(&p[0], 1), y(&p[1], 1);
  CSpan x0(&x0_, 1), y0(&y0_, 1);
  return fdot(spd_.log(x, x0)[0], spd_.log(y, y0)[0]);
}

Tangent TraceLog::rgrad(CSpan p) const {
  CSpan x(&p[0], 1), y(&p[1], 1);
  CSpan x0(&x0_, 1), y0(&y0_, 1);
  Matrix lx = spd_.log(x, x0)[0];
  Matrix ly = spd_.log(y, y0)[0];
  Tangent g;
  for (int block = 0; block < 2; ++block) {
    const Matrix& base = p[static_cast<std::size_t>(block)];
    const Matrix& fixed = block == 0 ? ly : lx;
    CSpan target = block == 0 ? x0 : y0;
    Matrix sqrt_base = spd_sqrt(SymMatrix(base)).mat();
    std::vector<Matrix> basis = spd_tangent_basis(sqrt_base);
    Matrix grad(base.rows(), base.cols());
    CSpan bspan(&base, 1);
    for (const Matrix& e : basis) {
      Matrix he = h_ * e;
      Matrix hm = -h_ * e;
      Point qp = spd_.exp(bspan, CSpan(&he, 1));
      Point qm = spd_.exp(bspan, CSpan(&hm, 1));
      double fp = fdot(spd_.log(CSpan(qp.data(), 1), target)[0], fixed);
      double fm = fdot(spd_.log(CSpan(qm.data(), 1), target)[0], fixed);
      grad.axpy((fp - fm) / (2.0 * h_), e);
    }
    g.push_back(std::move(grad));
  }
  return g;
}

double tracelog_value(const TraceLog& problem, CSpan p) { return problem.value(p); }

Tangent tracelog_grad(const TraceLog& problem, CSpan p) { return problem.rgrad(p); }

void RgpcaData::to_csv(std::ostream& os) const {
  os << "rgpca," << d << "," << ms.size() << "\n";
  for (const Matrix& m : ms) {
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        if (j) os << ",";
        os << format_double(m(i, j));
      }
      os << "\n";
    }
  }
}

RgpcaData RgpcaData::from_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error("rgpca data: empty stream");
  std::vector<std::string> head = split_csv_line(line);
  if (head.size() != 3 || head[0] != "rgpca") throw Error("rgpca data: bad header");
  RgpcaData data;
  data.d = static_cast<int>(parse_int(head[1]));
  int n = static_cast<int>(parse_int(head[2]));
  for (int k = 0; k < n; ++k) {
    Matrix m(data.d, data.d);
    for (int i = 0; i < data.d; ++i) {
      if (!std::getline(is, line)) throw Error("rgpca data: truncated");
      std::vector<std::string> cells = split_csv_line(line);
      if (static_cast<int>(cells.size()) != data.d) throw Error("rgpca data: bad row width");
      for (int j = 0; j < data.d; ++j) m(i, j) = parse_double(cells[static_cast<std::size_t>(j)]);
    }
    data.ms.push_back(std::move(m));
  }
  return data;
}

RgpcaData random_spd_dataset(int n, int d, double mu0, double mu1, std::uint64_t seed) {
  Rng rng(seed);
  Spd spd(d, mu0, mu1);
  RgpcaData data;
  data.d = d;
  for (int i = 0; i < n; ++i) data.ms.push_back(spd.random_point(rng)[0]);
  return data;
}

Rgpca::Rgpca(RgpcaData data, double alpha, double mu0, double mu1)
    : data_(std::move(data)), alpha_(alpha), spd_(data_.d, mu0, mu1), sphere_(data_.d),
      domain_({&spd_, &sphere_}) {}

double Rgpca::value(CSpan p) const {
  const Matrix& m = p[0];
  const Matrix& x = p[1];
  double quad = fdot(x, m * x);
  SqrtPair sp = spd_sqrt_pair(m);
  double dist_acc = 0.0;
  for (const Matrix& mi : data_.ms) {
    Matrix w = symmetrize(sp.invsqrt * mi * sp.invsqrt);
    EigenFactorization f = sym_eig(SymMatrix(w));
    for (double lam : f.values) {
      if (!(lam > 0.0)) throw NotPositiveDefinite("rgpca: non-positive data eigenvalue");
      double l = std::log(lam);
      dist_acc += l * l;
    }
  }
  return quad + alpha_ / static_cast<double>(data_.ms.size()) * dist_acc;
}

Tangent Rgpca::rgrad(CSpan p) const {
  const Matrix& m = p[0];
  const Matrix& x = p[1];
  SqrtPair sp = spd_sqrt_pair(m);
  Matrix log_sum(m.rows(), m.cols());
  for (const Matrix& mi : data_.ms) {
    Matrix w = symmetrize(sp.invsqrt * mi * sp.invsqrt);
    log_sum += spd_logm(w);
  }
  // Log_M(M_i) summed: M^{1/2} (sum_i logm(W_i)) M^{1/2}.
  Matrix log_mean = sp.sqrt * log_sum * sp.sqrt;
  // grad_M: M sym(x x^T) M for the quadratic term, minus the barycenter pull.
  Matrix mx = m * x;                      // d x 1
  Matrix quad_part = matmul_nt(mx, mx);   // M x x^T M
  Tangent g;
  g.push_back(symmetrize(quad_part) - (2.0 * alpha_ / static_cast<double>(data_.ms.size())) *
                                          symmetrize(log_mean));
  // grad_x on the sphere: project the Euclidean gradient 2 M x.
  Matrix ex = 2.0 * mx;
  CSpan xs(&x, 1);
  CSpan exs(&ex, 1);
  Tangent gx = sphere_.egrad_to_rgrad(xs, exs);
  g.push_back(std::move(gx[0]));
  return g;
}

void SrwdData::to_csv(std::ostream& os) const {
  os << "srwd," << xs.rows() << "," << xs.cols() << "," << ys.cols() << "\n";
  auto dump_cols = [&os](const Matrix& m) {
    for (int j = 0; j < m.cols(); ++j) {
      for (int i = 0; i < m.rows(); ++i) {
        if (i) os << ",";
        os << format_double(m(i, j));
      }
      os << "\n";
    }
  };
  dump_cols(xs);
  dump_cols(ys);
}

SrwdData SrwdData::from_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error("srwd data: empty stream");
  std::vector<std::string> head = split_csv_line(line);
  if (head.size() != 4 || head[0] != "srwd") throw Error("srwd data: bad header");
  int d = static_cast<int>(parse_int(head[1]));
  int n = static_cast<int>(parse_int(head[2]));
  int m = static_cast<int>(parse_int(head[3]));
  auto read_cols = [&](int count) {
    Matrix out(d, count);
    for (int j = 0; j < count; ++j) {
      if (!std::getline(is, line)) throw Error("srwd data: truncated");
      std::vector<std::string> cells = split_csv_line(line);
      if (static_cast<int>(cells.size()) != d) throw Error("srwd data: bad row width");
      for (int i = 0; i < d; ++i) out(i, j) = parse_double(cells[static_cast<std::size_t>(i)]);
    }
    return out;
  };
  SrwdData data;
  data.xs = read_cols(n);
  data.ys = read_cols(m);
  return data;
}

SrwdData fragmented_hypercube(int n, int d, int k, std::uint64_t seed) {
  Rng rng(seed);
  SrwdData data;
  data.xs = Matrix(d, n);
  data.ys = Matrix(d, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < d; ++i) data.xs(i, j) = rng.uniform(-1.0, 1.0);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < d; ++i) {
      double v = rng.uniform(-1.0, 1.0);
      if (i < k) v += 2.0 * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
      data.ys(i, j) = v;
    }
  }
  return data;
}

namespace {

std::vector<double> uniform_marginal(int n) {
  return std::vector<double>(static_cast<std::size_t>(n), 1.0 / static_cast<double>(n));
}

}  // namespace

Srwd::Srwd(SrwdData data, int r, double eps)
    : data_(std::move(data)), r_(r), eps_(eps),
      coupling_(uniform_marginal(data_.xs.cols()), uniform_marginal(data_.ys.cols())),
      stiefel_(data_.xs.rows(), r), domain_({&coupling_, &stiefel_}) {}

namespace {

// C_ij(U) = ||U^T (x_i - y_j)||^2 assembled from the projected coordinates.
Matrix srwd_cost(const Matrix& xs, const Matrix& ys, const Matrix& u) {
  Matrix a = matmul_tn(u, xs);  // r x n
  Matrix b = matmul_tn(u, ys);  // r x m
  int n = a.cols(), m = b.cols(), r = a.rows();
  std::vector<double> an(static_cast<std::size_t>(n), 0.0), bn(static_cast<std::size_t>(m), 0.0);
  for (int k = 0; k < r; ++k) {
    for (int j = 0; j < n; ++j) an[static_cast<std::size_t>(j)] += a(k, j) * a(k, j);
    for (int j = 0; j < m; ++j) bn[static_cast<std::size_t>(j)] += b(k, j) * b(k, j);
  }
  Matrix cross = matmul_tn(a, b);  // n x m
  Matrix c(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      c(i, j) = an[static_cast<std::size_t>(i)] + bn[static_cast<std::size_t>(j)] -
                2.0 * cross(i, j);
  return c;
}

// V(Gamma) = sum_i r_i x_i x_i^T + sum_j c_j y_j y_j^T - X Gamma Y^T - (X Gamma Y^T)^T
// with r, c the marginals of Gamma. Linear in Gamma, so it doubles as the
// derivative along coupling tangents, whose marginal terms vanish.
Matrix srwd_vmat(const Matrix& xs, const Matrix& ys, const Matrix& gamma) {
  int n = gamma.rows(), m = gamma.cols();
  std::vector<double> rsum(static_cast<std::size_t>(n), 0.0),
      csum(static_cast<std::size_t>(m), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      rsum[static_cast<std::size_t>(i)] += gamma(i, j);
      csum[static_cast<std::size_t>(j)] += gamma(i, j);
    }
  int d = xs.rows();
  Matrix xr(d, n), yc(d, m);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < d; ++i) xr(i, j) = xs(i, j) * rsum[static_cast<std::size_t>(j)];
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < d; ++i) yc(i, j) = ys(i, j) * csum[static_cast<std::size_t>(j)];
  Matrix second = matmul_nt(xr, xs) + matmul_nt(yc, ys);
  Matrix cross = matmul_nt(xs * gamma, ys);  // X Gamma Y^T
  return second - cross - transpose(cross);
}

}  // namespace

double Srwd::value(CSpan p) const {
  const Matrix& gamma = p[0];
  const Matrix& u = p[1];
  Matrix c = srwd_cost(data_.xs, data_.ys, u);
  double transport_cost = fdot(gamma, c);
  double entropy = 0.0;
  for (int i = 0; i < gamma.rows(); ++i) {
    for (int j = 0; j < gamma.cols(); ++j) {
      double g = gamma(i, j);
      if (!(g >= 0.0)) throw NotPositiveEntries("srwd: coupling has a negative entry");
      // Sinkhorn keeps entries positive but they can underflow at large
      // cost scales; floor them inside the log.
      entropy += g * (std::log(std::max(g, 1e-300)) - 1.0);
    }
  }
  return transport_cost + eps_ * entropy;
}

Tangent Srwd::rgrad(CSpan p) const {
  const Matrix& gamma = p[0];
  const Matrix& u = p[1];
  Matrix c = srwd_cost(data_.xs, data_.ys, u);
  Matrix egrad_gamma(gamma.rows(), gamma.cols());
  for (int i = 0; i < gamma.rows(); ++i) {
    for (int j = 0; j < gamma.cols(); ++j) {
      double g = gamma(i, j);
      if (!(g >= 0.0)) throw NotPositiveEntries("srwd: coupling has a negative entry");
      egrad_gamma(i, j) = c(i, j) + eps_ * std::log(std::max(g, 1e-300));
    }
  }
  CSpan gs(&gamma, 1);
  CSpan egs(&egrad_gamma, 1);
  Tangent ggamma = coupling_.egrad_to_rgrad(gs, egs);

  Matrix v = srwd_vmat(data_.xs, data_.ys, gamma);
  Matrix egrad_u = 2.0 * (v * u);
  CSpan us(&u, 1);
  CSpan eus(&egrad_u, 1);
  Tangent gu = stiefel_.egrad_to_rgrad(us, eus);

  Tangent g;
  g.push_back(std::move(ggamma[0]));
  g.push_back(std::move(gu[0]));
  return g;
}

Tangent Srwd::analytic_hvp(CSpan p, CSpan xi) const {
  const Matrix& gamma = p[0];
  const Matrix& u = p[1];
  const Matrix& w = xi[0];
  const Matrix& z = xi[1];
  int n = gamma.rows(), m = gamma.cols();

  Matrix c = srwd_cost(data_.xs, data_.ys, u);
  Matrix egrad_gamma(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      double g = gamma(i, j);
      if (!(g >= 0.0)) throw NotPositiveEntries("srwd: coupling has a negative entry");
      egrad_gamma(i, j) = c(i, j) + eps_ * std::log(std::max(g, 1e-300));
    }
  }
  CSpan gs(&gamma, 1);
  CSpan egs(&egrad_gamma, 1);
  Tangent ggamma = coupling_.egrad_to_rgrad(gs, egs);

  // DC[z]_ij = 2 <U^T v_ij, z^T v_ij> with v_ij = x_i - y_j, assembled from
  // projected coordinates like the cost itself.
  Matrix pa = matmul_tn(u, data_.xs);  // r x n
  Matrix qa = matmul_tn(u, data_.ys);  // r x m
  Matrix pz = matmul_tn(z, data_.xs);
  Matrix qz = matmul_tn(z, data_.ys);
  int r = pa.rows();
  std::vector<double> pn(static_cast<std::size_t>(n), 0.0), qn(static_cast<std::size_t>(m), 0.0);
  for (int k = 0; k < r; ++k) {
    for (int j = 0; j < n; ++j) pn[static_cast<std::size_t>(j)] += pa(k, j) * pz(k, j);
    for (int j = 0; j < m; ++j) qn[static_cast<std::size_t>(j)] += qa(k, j) * qz(k, j);
  }
  Matrix crossa = matmul_tn(pa, qz);
  Matrix crossb = matmul_tn(pz, qa);

  // Coupling block. The Fisher metric's ambient connection is
  // nabla_w V = DV[w] - (w .* V) ./ (2 Gamma); differentiating the projected
  // gradient G = Gamma .* (E - alpha 1^T - 1 beta^T) along w, the dual
  // derivatives land in the normal space (the projection kills them) and the
  // dual values satisfy alpha_i + beta_j = E_ij - G_ij / Gamma_ij, which
  // cancels the w .* E term and folds into the Christoffel correction:
  //   Hess_Gamma[w, z] = P(Gamma .* DC[z] + eps w + (w .* G ./ Gamma) / 2).
  Matrix hin(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      double dc = 2.0 * (pn[static_cast<std::size_t>(i)] + qn[static_cast<std::size_t>(j)] -
                         crossa(i, j) - crossb(i, j));
      double ratio = ggamma[0](i, j) / std::max(gamma(i, j), 1e-300);
      hin(i, j) = gamma(i, j) * dc + eps_ * w(i, j) + 0.5 * w(i, j) * ratio;
    }
  }
  CSpan hins(&hin, 1);
  Tangent hgamma = coupling_.project_tangent(gs, hins);

  // Frame block: P(ehess - z sym(U^T egrad)) with ehess = 2 V z + 2 DV[w] U
  // and egrad = 2 V U.
  Matrix v = srwd_vmat(data_.xs, data_.ys, gamma);
  Matrix dv = srwd_vmat(data_.xs, data_.ys, w);
  Matrix egrad_u = 2.0 * (v * u);
  Matrix ehess_u = 2.0 * (v * z) + 2.0 * (dv * u) - z * symmetrize(matmul_tn(u, egrad_u));
  CSpan us(&u, 1);
  CSpan ehs(&ehess_u, 1);
  Tangent hu = stiefel_.project_tangent(us, ehs);

  Tangent h;
  h.push_back(std::move(hgamma[0]));
  h.push_back(std::move(hu[0]));
  return h;
}

}  // namespace rhm
