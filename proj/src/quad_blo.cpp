#include "blo/quad_blo.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace blo {

namespace {

constexpr double kPsdRelTol = 1e-9;
constexpr double kRangeTol = 1e-8;
constexpr std::uint64_t kProbeSeed = 0x5eedb10ULL;
constexpr int kProbeCount = 8;

void require_shape(const DenseMatrix& m, std::size_t rows, std::size_t cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw Error(ErrorKind::DimensionMismatch, std::string(name) + " must be " + std::to_string(rows) + "x" +
                                                  std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                                                  std::to_string(m.cols()));
  }
}

void require_length(const Vector& v, std::size_t n, const char* name) {
  if (v.size() != n) {
    throw Error(ErrorKind::DimensionMismatch,
                std::string(name) + " must have length " + std::to_string(n) + ", got " + std::to_string(v.size()));
  }
}

void require_psd(const EigenDecomposition& eig, const char* name) {
  if (eig.eigenvalues.empty()) return;
  const double lmax = std::max(eig.max_eigenvalue(), 0.0);
  const double lmin = eig.eigenvalues[eig.eigenvalues.size() - 1];
  if (lmin < -kPsdRelTol * std::max(lmax, 1e-300)) {
    throw Error(ErrorKind::InvalidConfig, std::string(name) + " is not positive semi-definite (min eigenvalue " +
                                              std::to_string(lmin) + ")");
  }
}

}  // namespace

QuadraticBilevel::QuadraticBilevel(Terms terms) : t_(std::move(terms)) {
  const std::size_t nw = t_.a.rows();
  const std::size_t nu = t_.b.cols();
  require_shape(t_.a, nw, nw, "A");
  require_shape(t_.b, nw, nu, "B");
  require_shape(t_.c, nu, nu, "C");
  require_shape(t_.p, nw, nw, "P");
  require_length(t_.d, nw, "d");
  require_length(t_.e, nu, "e");
  require_length(t_.f, nw, "f");

  a_eig_ = sym_eig(t_.a);
  require_psd(a_eig_, "A");
  const EigenDecomposition p_eig = sym_eig(t_.p);
  require_psd(p_eig, "P");
  a_pinv_ = pinv_from_eig(a_eig_);

  const Vector f_residual = t_.f - t_.p * (pinv_from_eig(p_eig) * t_.f);
  if (f_residual.norm() > kRangeTol * (1.0 + t_.f.norm())) {
    throw Error(ErrorKind::InvalidConfig, "f leaves range(P); outer objective unbounded below");
  }

  certify_lower_bounded(Vector(nu));
  std::mt19937_64 rng(kProbeSeed);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int k = 0; k < kProbeCount; ++k) {
    Vector u(nu);
    for (auto& x : u) x = nd(rng);
    certify_lower_bounded(u);
  }
}

Vector QuadraticBilevel::inner_linear(const Vector& u) const {
  require_length(u, outer_dim(), "u");
  return t_.b * u + t_.d;
}

double QuadraticBilevel::range_residual(const Vector& u) const {
  const Vector lin = inner_linear(u);
  return (lin - t_.a * (a_pinv_ * lin)).norm();
}

void QuadraticBilevel::certify_lower_bounded(const Vector& u) const {
  const Vector lin = inner_linear(u);
  const double residual = (lin - t_.a * (a_pinv_ * lin)).norm();
  if (residual > kRangeTol * (1.0 + lin.norm())) {
    throw Error(ErrorKind::UnboundedInner,
                "B u + d leaves range(A) (residual " + std::to_string(residual) + "); inner problem unbounded below");
  }
}

double QuadraticBilevel::inner_loss(const Vector& u, const Vector& w) const {
  require_length(w, inner_dim(), "w");
  require_length(u, outer_dim(), "u");
  return 0.5 * w.dot(t_.a * w) + w.dot(t_.b * u) + 0.5 * u.dot(t_.c * u) + t_.d.dot(w) + t_.e.dot(u) + t_.c_scalar;
}

double QuadraticBilevel::outer_loss(const Vector& w) const {
  require_length(w, inner_dim(), "w");
  return 0.5 * w.dot(t_.p * w) + t_.f.dot(w) + t_.h_scalar;
}

Vector QuadraticBilevel::outer_grad_w(const Vector& w) const {
  require_length(w, inner_dim(), "w");
  return t_.p * w + t_.f;
}

double ReducedOuterQuadratic::value(const Vector& u) const { return 0.5 * u.dot(z * u) + linear.dot(u) + constant; }

Vector ReducedOuterQuadratic::gradient(const Vector& u) const { return z * u + linear; }

Vector inner_grad(const QuadraticBilevel& p, const Vector& u, const Vector& w) {
  require_length(w, p.inner_dim(), "w");
  return p.a() * w + p.inner_linear(u);
}

Vector inner_min_displacement(const QuadraticBilevel& p, const Vector& u, const Vector& w0) {
  require_length(w0, p.inner_dim(), "w0");
  p.certify_lower_bounded(u);
  const Vector lin = p.inner_linear(u);
  // -A^+ lin + w0 - A^+ A w0
  Vector w = w0 - p.a_pinv() * (lin + p.a() * w0);
  return w;
}

SolutionSet solution_set(const QuadraticBilevel& p, const Vector& u, double tol) {
  p.certify_lower_bounded(u);
  const EigenDecomposition& eig = p.a_eig();
  const double cutoff = tol * std::max(eig.max_eigenvalue(), 0.0);
  std::vector<Vector> basis;
  for (std::size_t j = 0; j < eig.eigenvalues.size(); ++j) {
    if (eig.eigenvalues[j] <= cutoff) basis.push_back(eig.eigenvectors.col_vector(j));
  }
  return {-(p.a_pinv() * p.inner_linear(u)), DenseMatrix::from_columns(basis, p.inner_dim())};
}

ReducedOuterQuadratic reduce_outer(const QuadraticBilevel& p) {
  p.certify_lower_bounded(Vector(p.outer_dim()));
  const DenseMatrix ab = p.a_pinv() * p.b();  // A^+ B
  const Vector ad = p.a_pinv() * p.d();       // A^+ d
  const DenseMatrix abt = ab.transpose();
  ReducedOuterQuadratic r;
  DenseMatrix z = abt * (p.p() * ab);
  // Symmetrize away rounding so downstream eigen solves accept it.
  r.z = 0.5 * (z + z.transpose());
  r.linear = abt * (p.p() * ad) - abt * p.f();
  r.constant = 0.5 * ad.dot(p.p() * ad) - p.f().dot(ad) + p.terms().h_scalar;
  return r;
}

Vector cold_start_outer_oracle(const QuadraticBilevel& p, const Vector& u0) {
  require_length(u0, p.outer_dim(), "u0");
  const ReducedOuterQuadratic r = reduce_outer(p);
  const DenseMatrix zp = pinv(r.z);
  return u0 - zp * (r.linear + r.z * u0);
}

// ---------------------------------------------------------------- fixtures

namespace {

// Modified Gram-Schmidt on the columns of a square Gaussian matrix.
DenseMatrix orthonormal_columns(DenseMatrix m) {
  const std::size_t n = m.rows();
  for (std::size_t c = 0; c < m.cols(); ++c) {
    for (std::size_t k = 0; k < c; ++k) {
      double dot = 0.0;
      for (std::size_t r = 0; r < n; ++r) dot += m(r, k) * m(r, c);
      for (std::size_t r = 0; r < n; ++r) m(r, c) -= dot * m(r, k);
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < n; ++r) norm += m(r, c) * m(r, c);
    norm = std::sqrt(norm);
    for (std::size_t r = 0; r < n; ++r) m(r, c) /= norm;
  }
  return m;
}

}  // namespace

QuadraticBilevel random_instance(const InstanceShape& shape, std::mt19937_64& rng) {
  const std::size_t nw = shape.inner_dim;
  const std::size_t nu = shape.outer_dim;
  std::normal_distribution<double> nd(0.0, 1.0);
  auto gaussian = [&](std::size_t r, std::size_t c) {
    DenseMatrix m(r, c);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) m(i, j) = nd(rng);
    return m;
  };
  auto gaussian_vec = [&](std::size_t n) {
    Vector v(n);
    for (auto& x : v) x = nd(rng);
    return v;
  };

  // G = diag(sqrt(s)) Q_r^T with orthonormal rows and s in [1, 3]; Gaussian G
  // gives Z condition numbers that make GD oracles impractically slow.
  std::uniform_real_distribution<double> spread(1.0, 3.0);
  auto psd_factor = [&](std::size_t rank) {
    const DenseMatrix q = orthonormal_columns(gaussian(nw, nw));
    DenseMatrix g(rank, nw);
    for (std::size_t i = 0; i < rank; ++i) {
      const double s = std::sqrt(spread(rng));
      for (std::size_t j = 0; j < nw; ++j) g(i, j) = s * q(j, i);
    }
    return g;
  };
  auto gram = [](const DenseMatrix& g) {
    const DenseMatrix m = g.transpose() * g;
    return DenseMatrix(0.5 * (m + m.transpose()));
  };

  const DenseMatrix g = psd_factor(std::min(shape.inner_rank, nw));
  DenseMatrix a = gram(g);
  if (shape.strong_convexity > 0.0) a += shape.strong_convexity * DenseMatrix::identity(nw);

  // B = G^T X and d = G^T y lie in range(G^T) = range(A).
  const DenseMatrix b = g.transpose() * gaussian(g.rows(), nu);
  const Vector d = g.transpose() * gaussian_vec(g.rows());

  const DenseMatrix h = psd_factor(std::min(shape.outer_rank, nw));
  const DenseMatrix pm = gram(h);
  // f in range(P) keeps the outer objective bounded below.
  const Vector f = h.transpose() * gaussian_vec(h.rows());

  QuadraticBilevel::Terms t{a, b, DenseMatrix::identity(nu), d, gaussian_vec(nu), 0.0, pm, f, 0.0};
  return QuadraticBilevel(std::move(t));
}

// ------------------------------------------------------------ serialization

namespace {

constexpr const char* kFormatTag = "blo.quadratic_bilevel/1";

nlohmann::json matrix_json(const DenseMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(m.row_vector(r).values());
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

DenseMatrix matrix_from_json(const nlohmann::json& j, const char* name) {
  try {
    const std::size_t rows = j.at("rows").get<std::size_t>();
    const std::size_t cols = j.at("cols").get<std::size_t>();
    std::vector<double> data;
    data.reserve(rows * cols);
    const auto& rj = j.at("data");
    if (rj.size() != rows) throw Error(ErrorKind::ParseError, std::string(name) + ": row count mismatch");
    for (const auto& row : rj) {
      if (row.size() != cols) throw Error(ErrorKind::ParseError, std::string(name) + ": ragged row");
      for (const auto& x : row) data.push_back(x.get<double>());
    }
    return {rows, cols, std::move(data)};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string(name) + ": " + e.what());
  }
}

Vector vector_from_json(const nlohmann::json& j, const char* name) {
  try {
    return Vector(j.get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string(name) + ": " + e.what());
  }
}

}  // namespace

nlohmann::json to_json(const QuadraticBilevel& p) {
  const auto& t = p.terms();
  return {{"format", kFormatTag},
          {"inner", {{"A", matrix_json(t.a)}, {"B", matrix_json(t.b)}, {"C", matrix_json(t.c)},
                     {"d", t.d.values()}, {"e", t.e.values()}, {"c", t.c_scalar}}},
          {"outer", {{"P", matrix_json(t.p)}, {"f", t.f.values()}, {"h", t.h_scalar}}}};
}

QuadraticBilevel quadratic_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || doc.value("format", std::string{}) != kFormatTag) {
    throw Error(ErrorKind::ParseError, std::string("expected format tag ") + kFormatTag);
  }
  try {
    const auto& in = doc.at("inner");
    const auto& out = doc.at("outer");
    QuadraticBilevel::Terms t{matrix_from_json(in.at("A"), "inner.A"),
                              matrix_from_json(in.at("B"), "inner.B"),
                              matrix_from_json(in.at("C"), "inner.C"),
                              vector_from_json(in.at("d"), "inner.d"),
                              vector_from_json(in.at("e"), "inner.e"),
                              in.at("c").get<double>(),
                              matrix_from_json(out.at("P"), "outer.P"),
                              vector_from_json(out.at("f"), "outer.f"),
                              out.at("h").get<double>()};
    return QuadraticBilevel(std::move(t));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, e.what());
  }
}

std::string to_document(const QuadraticBilevel& p) { return to_json(p).dump(2); }

QuadraticBilevel quadratic_from_document(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, e.what());
  }
  return quadratic_from_json(doc);
}

}  // namespace blo
