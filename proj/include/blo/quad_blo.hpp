#pragma once

#include <cstdint>
#include <random>
#include <string>

#include <json.hpp>

#include "blo/linalg.hpp"

namespace blo {

// Convex quadratic bilevel problem
//
//   inner  f(u, w) = 1/2 [w; u]^T [[A, B], [B^T, C]] [w; u] + d^T w + e^T u + c
//   outer  F(u, w) = 1/2 w^T P w + f^T w + h
//
// with A, P symmetric PSD. The outer objective depends on u only through w.
// Instances are immutable; A^+ is computed once at construction.
class QuadraticBilevel {
 public:
  struct Terms {
    DenseMatrix a;      // |W| x |W|
    DenseMatrix b;      // |W| x |U|
    DenseMatrix c;      // |U| x |U|
    Vector d;           // |W|
    Vector e;           // |U|
    double c_scalar = 0.0;
    DenseMatrix p;      // |W| x |W|
    Vector f;           // |W|
    double h_scalar = 0.0;
  };

  // Validates shapes, symmetry, PSD-ness of A and P, and lower-boundedness of
  // the inner problem on u = 0 plus eight seeded random probes.
  explicit QuadraticBilevel(Terms terms);

  const Terms& terms() const noexcept { return t_; }
  const DenseMatrix& a() const noexcept { return t_.a; }
  const DenseMatrix& b() const noexcept { return t_.b; }
  const DenseMatrix& p() const noexcept { return t_.p; }
  const Vector& d() const noexcept { return t_.d; }
  const Vector& f() const noexcept { return t_.f; }
  const DenseMatrix& a_pinv() const noexcept { return a_pinv_; }
  const EigenDecomposition& a_eig() const noexcept { return a_eig_; }

  std::size_t inner_dim() const noexcept { return t_.a.rows(); }
  std::size_t outer_dim() const noexcept { return t_.b.cols(); }

  double inner_loss(const Vector& u, const Vector& w) const;
  double outer_loss(const Vector& w) const;
  Vector outer_grad_w(const Vector& w) const;

  // B u + d, the inner linear term at u.
  Vector inner_linear(const Vector& u) const;

  // ||(I - A A^+)(B u + d)||; zero exactly when the inner problem at u is bounded below.
  double range_residual(const Vector& u) const;
  // Throws UnboundedInner when range_residual(u) exceeds 1e-8 * scale.
  void certify_lower_bounded(const Vector& u) const;

 private:
  Terms t_;
  EigenDecomposition a_eig_;
  DenseMatrix a_pinv_;
};

struct ReducedOuterQuadratic {
  DenseMatrix z;  // B^T A^+ P A^+ B
  Vector linear;  // B^T A^+ P A^+ d - B^T A^+ f
  double constant = 0.0;

  double value(const Vector& u) const;
  Vector gradient(const Vector& u) const;
};

struct SolutionSet {
  Vector particular;          // -A^+ (B u + d)
  DenseMatrix nullspace_basis;  // orthonormal columns spanning N(A)
};

// grad_w f = A w + B u + d
Vector inner_grad(const QuadraticBilevel& p, const Vector& u, const Vector& w);

// Inner minimizer closest to w0: -A^+ (B u + d) + (I - A^+ A) w0.
Vector inner_min_displacement(const QuadraticBilevel& p, const Vector& u, const Vector& w0);

SolutionSet solution_set(const QuadraticBilevel& p, const Vector& u, double tol = kDefaultRankTol);

// F*(u) = F(u, w*(u)) with w*(u) the min-displacement inner solution from w0 = 0.
ReducedOuterQuadratic reduce_outer(const QuadraticBilevel& p);

// Outer minimizer of F* closest to u0: -Z^+ z + (I - Z^+ Z) u0.
Vector cold_start_outer_oracle(const QuadraticBilevel& p, const Vector& u0);

// ---------------------------------------------------------------- fixtures

struct InstanceShape {
  std::size_t inner_dim = 6;
  std::size_t outer_dim = 4;
  std::size_t inner_rank = 3;   // rank of A; inner_dim means strongly convex
  std::size_t outer_rank = 3;   // rank of P's factor
  double strong_convexity = 0.0;  // added to A's diagonal (makes A positive definite when > 0)
};

// A = G^T G (+ mu I) with G of the requested rank; B's columns and d are
// projected into range(A), so every u keeps the inner problem bounded below.
QuadraticBilevel random_instance(const InstanceShape& shape, std::mt19937_64& rng);

nlohmann::json to_json(const QuadraticBilevel& p);
QuadraticBilevel quadratic_from_json(const nlohmann::json& doc);

std::string to_document(const QuadraticBilevel& p);
QuadraticBilevel quadratic_from_document(const std::string& text);

}  // namespace blo
