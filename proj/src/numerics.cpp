#include "lrnr/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lrnr/errors.hpp"

namespace lrnr {

// ---------------------------------------------------------------- Matrix

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw InvalidInput("Matrix::from_rows: ragged rows");
    std::copy(row.begin(), row.end(), m.row(i++).begin());
  }
  return m;
}

Matrix Matrix::column(std::span<const double> v) {
  Matrix m(v.size(), 1);
  std::copy(v.begin(), v.end(), m.data());
  return m;
}

Vector Matrix::col(std::size_t j) const {
  Vector v(rows_);
  for (std::size_t i = 0; i < rows_; ++i) v[i] = (*this)(i, j);
  return v;
}

void Matrix::set_col(std::size_t j, std::span<const double> v) {
  for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = v[i];
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix Matrix::left_cols(std::size_t k) const {
  Matrix out(rows_, k);
  for (std::size_t i = 0; i < rows_; ++i)
    std::copy_n(data_.data() + i * cols_, k, out.data() + i * k);
  return out;
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Matrix::all_finite() const { return lrnr::all_finite(data_); }

Matrix& Matrix::operator+=(const Matrix& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_)
    throw InvalidInput("Matrix +=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_)
    throw InvalidInput("Matrix -=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double scale) {
  for (auto& v : data_) v *= scale;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

// ---------------------------------------------------------------- kernels

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw InvalidInput("matmul: inner dimension mismatch");
  Matrix c(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ci = c.data() + i * n;
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const double* bk = b.data() + k * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw InvalidInput("matmul_tn: inner dimension mismatch");
  Matrix c(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* bk = b.data() + k * n;
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      double* ci = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw InvalidInput("matmul_nt: inner dimension mismatch");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = dot(a.row(i), b.row(j));
  return c;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw InvalidInput("matvec: dimension mismatch");
  Vector y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

Vector matvec_t(const Matrix& a, std::span<const double> x) {
  if (a.rows() != x.size()) throw InvalidInput("matvec_t: dimension mismatch");
  Vector y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double xi = x[i];
    const double* ai = a.data() + i * a.cols();
    for (std::size_t j = 0; j < a.cols(); ++j) y[j] += ai[j] * xi;
  }
  return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
  // Four fixed accumulators: independent chains, deterministic order.
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

double norm2(std::span<const double> v) {
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  if (scale == 0.0 || !std::isfinite(scale)) return scale;
  double s = 0.0;
  for (double x : v) s += (x / scale) * (x / scale);
  return scale * std::sqrt(s);
}

double frobenius_norm(const Matrix& a) { return norm2(a.values()); }

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Matrix scaled_outer_sum(const Matrix& a, std::span<const double> d, const Matrix& b) {
  if (a.cols() != d.size() || b.cols() != d.size())
    throw InvalidInput("scaled_outer_sum: rank mismatch");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d.size(); ++k) s += a(i, k) * d[k] * b(j, k);
      out(i, j) = s;
    }
  return out;
}

// ---------------------------------------------------------------- SVD

namespace {

// Columns stored contiguously for the rotation sweeps.
SvdResult jacobi_svd_tall(const Matrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  std::vector<Vector> w(n, Vector(m));
  std::vector<Vector> v(n, Vector(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) w[j][i] = a(i, j);
    v[j][j] = 1.0;
  }

  constexpr double kTol = 1e-15;
  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = dot(w[p], w[p]);
        const double beta = dot(w[q], w[q]);
        const double gamma = dot(w[p], w[q]);
        if (gamma == 0.0 || std::abs(gamma) <= kTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = w[p][i];
          const double y = w[q][i];
          w[p][i] = c * x - s * y;
          w[q][i] = s * x + c * y;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double x = v[p][i];
          const double y = v[q][i];
          v[p][i] = c * x - s * y;
          v[q][i] = s * x + c * y;
        }
      }
    }
    if (!rotated) break;
  }

  Vector sigma(n);
  for (std::size_t j = 0; j < n; ++j) sigma[j] = norm2(w[j]);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  SvdResult r{Matrix(m, n), Vector(n), Matrix(n, n)};
  const double smax = n > 0 ? sigma[order[0]] : 0.0;
  std::vector<bool> needs_completion(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    r.singular_values[k] = sigma[j];
    r.right.set_col(k, v[j]);
    if (sigma[j] == 0.0 || sigma[j] < smax * 1e-200) {
      needs_completion[k] = true;
      continue;
    }
    for (std::size_t i = 0; i < m; ++i) r.left(i, k) = w[j][i] / sigma[j];
  }

  // Null directions of the left factor: Gram-Schmidt on unit vectors.
  for (std::size_t k = 0; k < n; ++k) {
    if (!needs_completion[k]) continue;
    Vector best;
    double best_norm = -1.0;
    for (std::size_t e = 0; e < m; ++e) {
      Vector cand(m, 0.0);
      cand[e] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t c = 0; c < n; ++c) {
          if (c == k || (needs_completion[c] && c > k)) continue;
          double proj = 0.0;
          for (std::size_t i = 0; i < m; ++i) proj += r.left(i, c) * cand[i];
          for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * r.left(i, c);
        }
      }
      const double nn = norm2(cand);
      if (nn > best_norm) {
        best_norm = nn;
        best = std::move(cand);
      }
      if (best_norm > 0.7) break;
    }
    for (std::size_t i = 0; i < m; ++i) r.left(i, k) = best[i] / best_norm;
  }
  return r;
}

}  // namespace

SvdResult thin_svd(const Matrix& a) {
  if (!a.all_finite()) throw InvalidInput("thin_svd: non-finite input");
  if (a.rows() == 0 || a.cols() == 0) throw InvalidInput("thin_svd: empty matrix");
  if (a.rows() >= a.cols()) return jacobi_svd_tall(a);
  SvdResult t = jacobi_svd_tall(a.transpose());
  return {std::move(t.right), std::move(t.singular_values), std::move(t.left)};
}

// ---------------------------------------------------------------- LU

namespace {

struct Lu {
  Matrix lu;
  std::vector<std::size_t> perm;
  bool singular = false;
};

Lu lu_factor(const Matrix& a) {
  const std::size_t n = a.rows();
  Lu f{a, std::vector<std::size_t>(n), false};
  std::iota(f.perm.begin(), f.perm.end(), 0);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    double best = std::abs(f.lu(k, k));
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(f.lu(i, k)) > best) {
        best = std::abs(f.lu(i, k));
        piv = i;
      }
    if (best == 0.0) {
      f.singular = true;
      return f;
    }
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(f.lu(k, j), f.lu(piv, j));
      std::swap(f.perm[k], f.perm[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double l = f.lu(i, k) / f.lu(k, k);
      f.lu(i, k) = l;
      for (std::size_t j = k + 1; j < n; ++j) f.lu(i, j) -= l * f.lu(k, j);
    }
  }
  return f;
}

Vector lu_solve(const Lu& f, std::span<const double> b) {
  const std::size_t n = f.lu.rows();
  Vector x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = b[f.perm[i]];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) x[i] -= f.lu(i, j) * x[j];
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = i + 1; j < n; ++j) x[i] -= f.lu(i, j) * x[j];
    x[i] /= f.lu(i, i);
  }
  return x;
}

double norm_1(const Matrix& a) {
  double best = 0.0;
  for (std::size_t j = 0; j < a.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) s += std::abs(a(i, j));
    best = std::max(best, s);
  }
  return best;
}

double condition_from_lu(const Matrix& a, const Lu& f) {
  if (f.singular) return std::numeric_limits<double>::infinity();
  const std::size_t n = a.rows();
  Matrix inv(n, n);
  Vector e(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    e.assign(n, 0.0);
    e[j] = 1.0;
    inv.set_col(j, lu_solve(f, e));
  }
  const double c = norm_1(a) * norm_1(inv);
  return std::isfinite(c) ? c : std::numeric_limits<double>::infinity();
}

}  // namespace

double condition_number_1(const Matrix& a) {
  if (a.rows() != a.cols()) throw InvalidInput("condition_number_1: matrix not square");
  return condition_from_lu(a, lu_factor(a));
}

Matrix solve_square(const Matrix& a, const Matrix& b, double max_condition) {
  if (a.rows() != a.cols()) throw InvalidInput("solve_square: matrix not square");
  if (b.rows() != a.rows()) throw InvalidInput("solve_square: right-hand side row mismatch");
  if (!a.all_finite() || !b.all_finite()) throw InvalidInput("solve_square: non-finite input");
  const Lu f = lu_factor(a);
  const double cond = condition_from_lu(a, f);
  if (f.singular || !(cond <= max_condition)) {
    std::ostringstream msg;
    msg << "solve_square: singular or ill-conditioned system (cond_1 ~ " << cond << ")";
    throw SingularSystem(msg.str(), cond);
  }
  const std::size_t n = a.rows();
  Matrix x(n, b.cols());
  for (std::size_t c = 0; c < b.cols(); ++c) {
    const Vector rhs = b.col(c);
    Vector xc = lu_solve(f, rhs);
    // One refinement step with the residual accumulated in long double.
    Vector r(n);
    for (std::size_t i = 0; i < n; ++i) {
      long double s = rhs[i];
      for (std::size_t j = 0; j < n; ++j) s -= static_cast<long double>(a(i, j)) * xc[j];
      r[i] = static_cast<double>(s);
    }
    const Vector dx = lu_solve(f, r);
    for (std::size_t i = 0; i < n; ++i) xc[i] += dx[i];
    x.set_col(c, xc);
  }
  return x;
}

// ---------------------------------------------------------------- least squares

Vector least_squares(const Matrix& a, std::span<const double> b) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  if (b.size() != m) throw InvalidInput("least_squares: right-hand side length mismatch");
  if (m < n) throw InvalidInput("least_squares: underdetermined system");
  Matrix r = a;
  Vector y(b.begin(), b.end());
  Vector diag(n);
  for (std::size_t k = 0; k < n; ++k) {
    double nrm = 0.0;
    for (std::size_t i = k; i < m; ++i) nrm = std::hypot(nrm, r(i, k));
    if (nrm == 0.0) throw InvalidInput("least_squares: rank-deficient design matrix");
    const double alpha = r(k, k) > 0.0 ? -nrm : nrm;
    Vector v(m - k);
    for (std::size_t i = k; i < m; ++i) v[i - k] = r(i, k);
    v[0] -= alpha;
    const double vnorm2 = dot(v, v);
    if (vnorm2 > 0.0) {
      for (std::size_t j = k; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = k; i < m; ++i) s += v[i - k] * r(i, j);
        s = 2.0 * s / vnorm2;
        for (std::size_t i = k; i < m; ++i) r(i, j) -= s * v[i - k];
      }
      double s = 0.0;
      for (std::size_t i = k; i < m; ++i) s += v[i - k] * y[i];
      s = 2.0 * s / vnorm2;
      for (std::size_t i = k; i < m; ++i) y[i] -= s * v[i - k];
    }
    diag[k] = r(k, k);
  }
  const double dmax = max_abs(diag);
  for (double d : diag)
    if (std::abs(d) <= dmax * 1e-14) throw InvalidInput("least_squares: rank-deficient design matrix");
  Vector x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = y[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= r(i, j) * x[j];
    x[i] = s / r(i, i);
  }
  return x;
}

// ---------------------------------------------------------------- convolution

namespace {

// Antiderivative of the piecewise-linear interpolant in grid units: position p
// is measured in cells from sample 0; the result is in (value * cells).
class InterpolantIntegral {
 public:
  InterpolantIntegral(std::span<const double> u, BoundaryRule rule) : u_(u), rule_(rule) {
    const std::size_t n = u.size();
    const std::size_t cells = rule == BoundaryRule::Periodic ? n : n - 1;
    cumulative_.assign(cells + 1, 0.0);
    for (std::size_t j = 0; j < cells; ++j)
      cumulative_[j + 1] = cumulative_[j] + 0.5 * (u[j] + next(j));
  }

  double operator()(double p) const {
    const double n = static_cast<double>(u_.size());
    if (rule_ == BoundaryRule::Periodic) {
      const double k = std::floor(p / n);
      const double local = p - k * n;
      return k * cumulative_.back() + within(local);
    }
    if (p <= 0.0) return p * u_.front();
    const double last = n - 1.0;
    if (p >= last) return cumulative_.back() + (p - last) * u_.back();
    return within(p);
  }

 private:
  double next(std::size_t j) const {
    return j + 1 < u_.size() ? u_[j + 1] : u_[0];
  }

  double within(double p) const {
    const std::size_t cells = cumulative_.size() - 1;
    std::size_t j = static_cast<std::size_t>(std::floor(p));
    if (j >= cells) j = cells - 1;
    const double theta = p - static_cast<double>(j);
    const double a = u_[j];
    const double b = next(j);
    return cumulative_[j] + theta * a + 0.5 * theta * theta * (b - a);
  }

  std::span<const double> u_;
  BoundaryRule rule_;
  Vector cumulative_;
};

}  // namespace

Vector box_convolve(std::span<const double> values, double h, double w, BoundaryRule rule) {
  if (!(w >= 0.0)) throw InvalidInput("box_convolve: radius must be nonnegative");
  if (!(h > 0.0)) throw InvalidInput("box_convolve: grid spacing must be positive");
  if (values.empty()) throw InvalidInput("box_convolve: empty field");
  if (!all_finite(values)) throw InvalidInput("box_convolve: non-finite field values");
  Vector out(values.begin(), values.end());
  if (w == 0.0) return out;
  if (values.size() == 1) return out;
  const InterpolantIntegral integral(values, rule);
  const double rho = w / h;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double p = static_cast<double>(i);
    out[i] = (integral(p + rho) - integral(p - rho)) / (2.0 * rho);
  }
  return out;
}

Matrix box_convolve_2d(const Matrix& values, double hx, double hy, double w, BoundaryRule rule) {
  if (!(w >= 0.0)) throw InvalidInput("box_convolve_2d: radius must be nonnegative");
  Matrix out = values;
  if (w == 0.0) return out;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const Vector row = box_convolve(out.row(i), hx, w, rule);
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  for (std::size_t j = 0; j < out.cols(); ++j) out.set_col(j, box_convolve(out.col(j), hy, w, rule));
  return out;
}

// ---------------------------------------------------------------- Chebyshev

double chebyshev_eval(std::span<const double> coeffs, double t) {
  double b1 = 0.0, b2 = 0.0;
  for (std::size_t k = coeffs.size(); k-- > 1;) {
    const double b0 = coeffs[k] + 2.0 * t * b1 - b2;
    b2 = b1;
    b1 = b0;
  }
  return (coeffs.empty() ? 0.0 : coeffs[0]) + t * b1 - b2;
}

double ChebyshevFit::operator()(double t) const { return chebyshev_eval(coeffs, t); }

ChebyshevFit poly_fit(std::span<const double> t, std::span<const double> y, std::size_t degree) {
  if (t.size() != y.size()) throw InvalidInput("poly_fit: abscissa/ordinate length mismatch");
  if (!all_finite(t) || !all_finite(y)) throw InvalidInput("poly_fit: non-finite samples");
  for (double ti : t)
    if (std::abs(ti) > 1.0 + 1e-12) throw InvalidInput("poly_fit: abscissae must lie in [-1, 1]");
  Vector sorted(t.begin(), t.end());
  std::sort(sorted.begin(), sorted.end());
  std::size_t distinct = sorted.empty() ? 0 : 1;
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i] - sorted[i - 1] > 1e-14) ++distinct;
  if (distinct < degree + 1) throw InvalidInput("poly_fit: fewer distinct abscissae than degree + 1");

  Matrix a(t.size(), degree + 1);
  for (std::size_t i = 0; i < t.size(); ++i) {
    a(i, 0) = 1.0;
    if (degree >= 1) a(i, 1) = t[i];
    for (std::size_t k = 2; k <= degree; ++k) a(i, k) = 2.0 * t[i] * a(i, k - 1) - a(i, k - 2);
  }
  ChebyshevFit fit;
  fit.coeffs = least_squares(a, y);
  const Vector pred = matvec(a, fit.coeffs);
  for (std::size_t i = 0; i < y.size(); ++i)
    fit.max_residual = std::max(fit.max_residual, std::abs(pred[i] - y[i]));
  return fit;
}

double fit_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidInput("fit_slope: need >= 2 paired samples");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw InvalidInput("fit_slope: degenerate abscissae");
  return sxy / sxx;
}

}  // namespace lrnr
