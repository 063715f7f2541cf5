#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace lrnr {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
///
/// Zero-sized dimensions are permitted so that empty coefficient blocks
/// (for example a bias basis of rank 0) have a natural representation.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  /// Builds an n x 1 matrix from a vector.
  static Matrix column(std::span<const double> v);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }
  Vector col(std::size_t j) const;
  void set_col(std::size_t j, std::span<const double> v);

  Matrix transpose() const;
  /// Leading columns [0, k).
  Matrix left_cols(std::size_t k) const;

  void fill(double value);
  bool all_finite() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double scale);

  friend bool operator==(const Matrix& a, const Matrix& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

// Dense kernels. Inner loops run over contiguous memory and the reduction
// order is fixed, so results are reproducible bit for bit.
Matrix matmul(const Matrix& a, const Matrix& b);     // a * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a^T * b
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a * b^T
Vector matvec(const Matrix& a, std::span<const double> x);
Vector matvec_t(const Matrix& a, std::span<const double> x);  // a^T * x

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
double frobenius_norm(const Matrix& a);
double max_abs(std::span<const double> v);
bool all_finite(std::span<const double> v);

/// Product a * diag(d) * b^T built column by column (the factored layer form).
Matrix scaled_outer_sum(const Matrix& a, std::span<const double> d, const Matrix& b);

struct SvdResult {
  Matrix left;             // m x k, orthonormal columns
  Vector singular_values;  // k, nonincreasing
  Matrix right;            // n x k, orthonormal columns
};

/// Thin SVD by one-sided (Hestenes) Jacobi rotations; k = min(m, n).
SvdResult thin_svd(const Matrix& a);

/// Solves a * x = b for square a via LU with partial pivoting and one step of
/// extended-precision iterative refinement. Throws SingularSystem when the
/// 1-norm condition estimate exceeds max_condition.
Matrix solve_square(const Matrix& a, const Matrix& b, double max_condition = 1e12);

/// 1-norm condition number, computed from an explicit inverse.
double condition_number_1(const Matrix& a);

/// Least squares min ||a x - b|| via Householder QR; a must have full column rank.
Vector least_squares(const Matrix& a, std::span<const double> b);

enum class BoundaryRule { Periodic, ConstantExtension };

/// Exact convolution of the piecewise-linear interpolant of uniformly spaced
/// samples with the normalized box of half-width w, sampled back on the grid.
/// Under the periodic rule the period is n * h.
Vector box_convolve(std::span<const double> values, double h, double w,
                    BoundaryRule rule = BoundaryRule::Periodic);

/// Tensor-product version on an ny x nx grid (rows follow y).
Matrix box_convolve_2d(const Matrix& values, double hx, double hy, double w,
                       BoundaryRule rule = BoundaryRule::Periodic);

struct ChebyshevFit {
  Vector coeffs;  // c_0 .. c_degree
  double max_residual = 0.0;

  double operator()(double t) const;
};

/// Evaluates sum_k coeffs[k] T_k(t) by Clenshaw recurrence.
double chebyshev_eval(std::span<const double> coeffs, double t);

/// Least-squares Chebyshev fit on abscissae already mapped into [-1, 1].
ChebyshevFit poly_fit(std::span<const double> t, std::span<const double> y, std::size_t degree);

/// Least-squares slope of y against x.
double fit_slope(std::span<const double> x, std::span<const double> y);

}  // namespace lrnr
