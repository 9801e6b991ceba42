#include "blo/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace blo {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonSquare: return "NonSquare";
    case ErrorKind::AsymmetricBeyondTol: return "AsymmetricBeyondTol";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::NonPositiveDamping: return "NonPositiveDamping";
    case ErrorKind::UnboundedInner: return "UnboundedInner";
    case ErrorKind::SeriesDivergence: return "SeriesDivergence";
    case ErrorKind::NotStationary: return "NotStationary";
    case ErrorKind::DivergenceDetected: return "DivergenceDetected";
    case ErrorKind::StepCapReached: return "StepCapReached";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::ZeroDirection: return "ZeroDirection";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::OuterDimTooLarge: return "OuterDimTooLarge";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::UnsupportedElementType: return "UnsupportedElementType";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::ParseError: return "ParseError";
  }
  return "Unknown";
}

namespace {

void check_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, std::string(what) + " has a non-finite entry");
  }
}

}  // namespace

void require_same_size(const Vector& a, const Vector& b, const char* context) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::DimensionMismatch, std::string(context) + ": " + std::to_string(a.size()) +
                                                  " vs " + std::to_string(b.size()));
  }
}

// ---------------------------------------------------------------- Vector

Vector::Vector(std::size_t n, double fill) : data_(n, fill) { check_finite({&fill, 1}, "Vector fill"); }

Vector::Vector(std::initializer_list<double> values) : data_(values) { check_finite(data_, "Vector"); }

Vector::Vector(std::vector<double> values) : data_(std::move(values)) { check_finite(data_, "Vector"); }

Vector Vector::unit(std::size_t n, std::size_t i) {
  Vector v(n);
  v[i] = 1.0;
  return v;
}

Vector& Vector::operator+=(const Vector& other) {
  require_same_size(*this, other, "Vector +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Vector& Vector::operator-=(const Vector& other) {
  require_same_size(*this, other, "Vector -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Vector& Vector::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Vector& Vector::axpy(double s, const Vector& x) {
  require_same_size(*this, x, "Vector axpy");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * x.data_[i];
  return *this;
}

double Vector::dot(const Vector& other) const {
  require_same_size(*this, other, "Vector dot");
  double s = 0.0;
  for (std::size_t i = 0; i < data_.size(); ++i) s += data_[i] * other.data_[i];
  return s;
}

double Vector::squared_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return s;
}

double Vector::norm() const { return std::sqrt(squared_norm()); }

double Vector::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

bool Vector::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Vector Vector::segment(std::size_t offset, std::size_t count) const {
  if (offset + count > data_.size()) throw Error(ErrorKind::DimensionMismatch, "Vector segment out of range");
  Vector out(count);
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(offset), count, out.begin());
  return out;
}

Vector operator+(Vector a, const Vector& b) { return a += b; }
Vector operator-(Vector a, const Vector& b) { return a -= b; }
Vector operator-(Vector a) { return a *= -1.0; }
Vector operator*(double s, Vector a) { return a *= s; }
Vector operator*(Vector a, double s) { return a *= s; }

// ----------------------------------------------------------- DenseMatrix

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  check_finite({&fill, 1}, "DenseMatrix fill");
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> row_major)
    : rows_(rows), cols_(cols), data_(std::move(row_major)) {
  if (data_.size() != rows * cols) {
    throw Error(ErrorKind::DimensionMismatch, "DenseMatrix data length " + std::to_string(data_.size()) +
                                                  " != " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  check_finite(data_, "DenseMatrix");
}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw Error(ErrorKind::DimensionMismatch, "ragged DenseMatrix initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  check_finite(data_, "DenseMatrix");
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::diagonal(const Vector& diag) {
  DenseMatrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

DenseMatrix DenseMatrix::column(const Vector& v) { return {v.size(), 1, v.values()}; }

DenseMatrix DenseMatrix::row(const Vector& v) { return {1, v.size(), v.values()}; }

DenseMatrix DenseMatrix::from_columns(std::span<const Vector> columns, std::size_t rows) {
  DenseMatrix m(rows, columns.size());
  for (std::size_t c = 0; c < columns.size(); ++c) m.set_column(c, columns[c]);
  return m;
}

Vector DenseMatrix::row_vector(std::size_t r) const {
  Vector v(cols_);
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(r * cols_), cols_, v.begin());
  return v;
}

Vector DenseMatrix::col_vector(std::size_t c) const {
  Vector v(rows_);
  for (std::size_t r = 0; r < rows_; ++r) v[r] = (*this)(r, c);
  return v;
}

void DenseMatrix::set_column(std::size_t c, const Vector& v) {
  if (v.size() != rows_) throw Error(ErrorKind::DimensionMismatch, "set_column length");
  for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = v[r];
}

DenseMatrix DenseMatrix::transpose() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

DenseMatrix DenseMatrix::operator*(const DenseMatrix& rhs) const {
  if (cols_ != rhs.rows_) {
    throw Error(ErrorKind::DimensionMismatch, "matmul " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                                                  " * " + std::to_string(rhs.rows_) + "x" + std::to_string(rhs.cols_));
  }
  DenseMatrix out(rows_, rhs.cols_);
  for (std::size_t i = 0; i < rows_; ++i) {
    double* out_row = out.data_.data() + i * rhs.cols_;
    for (std::size_t k = 0; k < cols_; ++k) {
      const double a = data_[i * cols_ + k];
      if (a == 0.0) continue;
      const double* rhs_row = rhs.data_.data() + k * rhs.cols_;
      for (std::size_t j = 0; j < rhs.cols_; ++j) out_row[j] += a * rhs_row[j];
    }
  }
  return out;
}

Vector DenseMatrix::operator*(const Vector& v) const {
  if (v.size() != cols_) throw Error(ErrorKind::DimensionMismatch, "matvec");
  Vector out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    const double* row = data_.data() + r * cols_;
    double s = 0.0;
    for (std::size_t c = 0; c < cols_; ++c) s += row[c] * v[c];
    out[r] = s;
  }
  return out;
}

Vector DenseMatrix::transpose_times(const Vector& v) const {
  if (v.size() != rows_) throw Error(ErrorKind::DimensionMismatch, "transpose matvec");
  Vector out(cols_);
  for (std::size_t r = 0; r < rows_; ++r) {
    const double* row = data_.data() + r * cols_;
    const double s = v[r];
    for (std::size_t c = 0; c < cols_; ++c) out[c] += row[c] * s;
  }
  return out;
}

DenseMatrix& DenseMatrix::operator+=(const DenseMatrix& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_) throw Error(ErrorKind::DimensionMismatch, "matrix +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

DenseMatrix& DenseMatrix::operator-=(const DenseMatrix& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_) throw Error(ErrorKind::DimensionMismatch, "matrix -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

DenseMatrix& DenseMatrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

double DenseMatrix::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

double DenseMatrix::frobenius_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

bool DenseMatrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b) { return a -= b; }
DenseMatrix operator*(double s, DenseMatrix a) { return a *= s; }

double asymmetry(const DenseMatrix& m) {
  double worst = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j) worst = std::max(worst, std::abs(m(i, j) - m(j, i)));
  return worst;
}

// ------------------------------------------------------------- sym_eig

namespace {

constexpr int kMaxJacobiSweeps = 100;
constexpr double kJacobiRelTol = 1e-12;

double off_diagonal_norm(const DenseMatrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

}  // namespace

EigenDecomposition sym_eig(const DenseMatrix& m, double tol) {
  if (!m.is_square()) {
    throw Error(ErrorKind::NonSquare,
                "sym_eig needs a square matrix, got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  const std::size_t n = m.rows();
  const double scale = m.max_abs();
  if (asymmetry(m) > tol * scale) throw Error(ErrorKind::AsymmetricBeyondTol, "sym_eig input is not symmetric");

  // Work on the symmetrized copy so rounding-level asymmetry does not leak in.
  DenseMatrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (m(i, j) + m(j, i));
  DenseMatrix v = DenseMatrix::identity(n);

  auto sweep_once = [&]() {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Rutishauser's stable rotation angle.
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  };

  const double stop = kJacobiRelTol * a.frobenius_norm();
  int sweep = 0;
  while (off_diagonal_norm(a) > stop) {
    if (++sweep > kMaxJacobiSweeps) throw Error(ErrorKind::NoConvergence, "Jacobi sweep limit exceeded");
    sweep_once();
  }
  // The stop rule leaves ~1e-12 relative error in the eigenvectors; convergence
  // is quadratic, so one more sweep brings them to rounding level.
  if (sweep > 0) sweep_once();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  EigenDecomposition out{Vector(n), DenseMatrix(n, n)};
  for (std::size_t j = 0; j < n; ++j) {
    out.eigenvalues[j] = a(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, j) = v(i, order[j]);
  }
  return out;
}

// ---------------------------------------------------------------- pinv

DenseMatrix pinv_from_eig(const EigenDecomposition& eig, double rank_tol) {
  const double cutoff = rank_tol * std::max(eig.max_eigenvalue(), 0.0);
  return eig.reconstruct([cutoff](double lambda) { return lambda > cutoff && lambda > 0.0 ? 1.0 / lambda : 0.0; });
}

namespace {

bool is_symmetric(const DenseMatrix& m) {
  return m.is_square() && asymmetry(m) <= kDefaultSymmetryTol * std::max(m.max_abs(), 1e-300);
}

// Symmetric (possibly indefinite) pseudoinverse: invert eigenvalues whose
// magnitude clears the relative cutoff.
DenseMatrix symmetric_pinv(const DenseMatrix& m, double rank_tol) {
  const EigenDecomposition eig = sym_eig(m);
  double largest = 0.0;
  for (double l : eig.eigenvalues) largest = std::max(largest, std::abs(l));
  const double cutoff = rank_tol * largest;
  return eig.reconstruct([cutoff](double lambda) { return std::abs(lambda) > cutoff ? 1.0 / lambda : 0.0; });
}

}  // namespace

DenseMatrix pinv(const DenseMatrix& m, double rank_tol) {
  if (m.rows() == 0 || m.cols() == 0) return DenseMatrix(m.cols(), m.rows());
  if (m.max_abs() == 0.0) return DenseMatrix(m.cols(), m.rows());
  if (is_symmetric(m)) return symmetric_pinv(m, rank_tol);
  const DenseMatrix mt = m.transpose();
  // The Gram spectrum is the squared singular spectrum; its rounding floor sits
  // near machine epsilon, so the cutoff stays relative to the Gram eigenvalues.
  DenseMatrix x = m.rows() >= m.cols() ? symmetric_pinv(mt * m, rank_tol) * mt : mt * symmetric_pinv(m * mt, rank_tol);
  // Newton-Schulz polish, X <- 2X - X M X, recovers the accuracy lost to the
  // squared condition number of the Gram route.
  for (int it = 0; it < 2; ++it) x = 2.0 * x - x * (m * x);
  return x;
}

// ------------------------------------------------------------------ CG

CgResult truncated_cg(const DenseMatrix& h, const Vector& b, std::size_t k) {
  if (!h.is_square() || h.rows() != b.size()) throw Error(ErrorKind::DimensionMismatch, "truncated_cg shapes");
  CgResult out{Vector(b.size()), 0, false};
  if (k == 0) return out;
  Vector r = b;
  Vector p = r;
  double rr = r.squared_norm();
  const double stop = 1e-30 * std::max(1.0, b.squared_norm());
  for (std::size_t it = 0; it < k; ++it) {
    if (rr <= stop) break;
    const Vector hp = h * p;
    const double curvature = p.dot(hp);
    if (curvature <= 1e-14 * h.max_abs() * p.squared_norm()) {
      out.breakdown = true;
      break;
    }
    const double step = rr / curvature;
    out.x.axpy(step, p);
    r.axpy(-step, hp);
    const double rr_next = r.squared_norm();
    p = r + (rr_next / rr) * p;
    rr = rr_next;
    out.iterations = it + 1;
  }
  return out;
}

Vector solve_damped(const DenseMatrix& h, double eps, const Vector& b) {
  if (!(eps > 0.0)) throw Error(ErrorKind::NonPositiveDamping, "damping must be positive, got " + std::to_string(eps));
  if (h.rows() != b.size()) throw Error(ErrorKind::DimensionMismatch, "solve_damped shapes");
  const EigenDecomposition eig = sym_eig(h);
  return eig.apply([eps](double lambda) { return 1.0 / (lambda + eps); }, b);
}

}  // namespace blo
