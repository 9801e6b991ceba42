#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "blo/error.hpp"

namespace blo {

// Dense real vector. Entries are finite whenever the vector is built from
// caller-supplied data; arithmetic results are not re-checked.
class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t n, double fill = 0.0);
  Vector(std::initializer_list<double> values);
  explicit Vector(std::vector<double> values);

  static Vector zeros(std::size_t n) { return Vector(n); }
  static Vector unit(std::size_t n, std::size_t i);

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> span() noexcept { return data_; }
  std::span<const double> span() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  Vector& operator+=(const Vector& other);
  Vector& operator-=(const Vector& other);
  Vector& operator*=(double s);
  // this += s * x
  Vector& axpy(double s, const Vector& x);

  double dot(const Vector& other) const;
  double norm() const;
  double squared_norm() const;
  double max_abs() const;
  bool all_finite() const;

  Vector segment(std::size_t offset, std::size_t count) const;

 private:
  std::vector<double> data_;
};

Vector operator+(Vector a, const Vector& b);
Vector operator-(Vector a, const Vector& b);
Vector operator-(Vector a);
Vector operator*(double s, Vector a);
Vector operator*(Vector a, double s);

// Row-major dense real matrix.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> row_major);
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static DenseMatrix zeros(std::size_t rows, std::size_t cols) { return {rows, cols}; }
  static DenseMatrix identity(std::size_t n);
  static DenseMatrix diagonal(const Vector& diag);
  static DenseMatrix column(const Vector& v);
  static DenseMatrix row(const Vector& v);
  static DenseMatrix from_columns(std::span<const Vector> columns, std::size_t rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool is_square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> row_span(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row_span(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  const std::vector<double>& values() const noexcept { return data_; }

  Vector row_vector(std::size_t r) const;
  Vector col_vector(std::size_t c) const;
  void set_column(std::size_t c, const Vector& v);

  DenseMatrix transpose() const;
  DenseMatrix operator*(const DenseMatrix& rhs) const;
  Vector operator*(const Vector& v) const;
  // this^T * v without materializing the transpose.
  Vector transpose_times(const Vector& v) const;

  DenseMatrix& operator+=(const DenseMatrix& other);
  DenseMatrix& operator-=(const DenseMatrix& other);
  DenseMatrix& operator*=(double s);

  double max_abs() const;
  double frobenius_norm() const;
  bool all_finite() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b);
DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b);
DenseMatrix operator*(double s, DenseMatrix a);

// Largest |a_ij - a_ji|.
double asymmetry(const DenseMatrix& m);

struct EigenDecomposition {
  Vector eigenvalues;        // descending
  DenseMatrix eigenvectors;  // column i pairs with eigenvalues[i]

  // U * diag(g(lambda)) * U^T for a scalar map g applied to each eigenvalue.
  template <typename Fn>
  DenseMatrix reconstruct(Fn&& g) const {
    const std::size_t n = eigenvalues.size();
    DenseMatrix scaled(eigenvectors.rows(), n);
    for (std::size_t j = 0; j < n; ++j) {
      const double s = g(eigenvalues[j]);
      for (std::size_t i = 0; i < eigenvectors.rows(); ++i) scaled(i, j) = eigenvectors(i, j) * s;
    }
    return scaled * eigenvectors.transpose();
  }

  // U * diag(g(lambda)) * U^T * v, O(n^2).
  template <typename Fn>
  Vector apply(Fn&& g, const Vector& v) const {
    Vector coeffs = eigenvectors.transpose_times(v);
    for (std::size_t j = 0; j < coeffs.size(); ++j) coeffs[j] *= g(eigenvalues[j]);
    return eigenvectors * coeffs;
  }

  double max_eigenvalue() const { return eigenvalues.empty() ? 0.0 : eigenvalues[0]; }
};

inline constexpr double kDefaultSymmetryTol = 1e-10;
inline constexpr double kDefaultRankTol = 1e-10;

// Cyclic Jacobi. Throws NonSquare, AsymmetricBeyondTol, NoConvergence.
EigenDecomposition sym_eig(const DenseMatrix& m, double tol = kDefaultSymmetryTol);

// Moore-Penrose pseudoinverse. Symmetric inputs go through sym_eig with
// eigenvalues below rank_tol * lambda_max zeroed; general inputs reuse that path
// through the Gram matrix of the smaller side.
DenseMatrix pinv(const DenseMatrix& m, double rank_tol = kDefaultRankTol);

// Pseudoinverse of a symmetric PSD matrix from an existing decomposition.
DenseMatrix pinv_from_eig(const EigenDecomposition& eig, double rank_tol = kDefaultRankTol);

struct CgResult {
  Vector x;
  std::size_t iterations = 0;
  bool breakdown = false;  // hit a direction with non-positive curvature
};

// k-th conjugate gradient iterate for h x = b from x0 = 0.
CgResult truncated_cg(const DenseMatrix& h, const Vector& b, std::size_t k);

// (h + eps I)^{-1} b through the eigen map lambda -> 1 / (lambda + eps).
Vector solve_damped(const DenseMatrix& h, double eps, const Vector& b);

void require_same_size(const Vector& a, const Vector& b, const char* context);

}  // namespace blo
