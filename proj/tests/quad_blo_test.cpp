#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "blo/quad_blo.hpp"
#include "oracles.hpp"

namespace blo {
namespace {

using testing::max_abs_diff;

QuadraticBilevel simple(DenseMatrix a, DenseMatrix b, Vector d, DenseMatrix p, Vector f) {
  const std::size_t nu = b.cols();
  return QuadraticBilevel({std::move(a), std::move(b), DenseMatrix(nu, nu), std::move(d), Vector(nu), 0.0,
                           std::move(p), std::move(f), 0.0});
}

TEST(QuadraticBilevel, RejectsBadInputs) {
  // A not PSD
  EXPECT_THROW(simple(DenseMatrix{{-1, 0}, {0, 1}}, DenseMatrix(2, 1), Vector(2), DenseMatrix::identity(2), Vector(2)),
               Error);
  // shape mismatch
  EXPECT_THROW(simple(DenseMatrix::identity(2), DenseMatrix(3, 1), Vector(2), DenseMatrix::identity(2), Vector(2)),
               Error);
  // B u leaves range(A): unbounded below for some u
  try {
    simple(DenseMatrix{{1, 0}, {0, 0}}, DenseMatrix{{0}, {1}}, Vector(2), DenseMatrix::identity(2), Vector(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnboundedInner);
  }
}

TEST(InnerGrad, Examples) {
  const auto p = simple(DenseMatrix::identity(2), DenseMatrix(2, 1), Vector(2), DenseMatrix::identity(2), Vector(2));
  EXPECT_LE(max_abs_diff(inner_grad(p, Vector{0.0}, Vector{1, 2}), Vector{1, 2}), 0.0);
  EXPECT_THROW(inner_grad(p, Vector{0.0}, Vector{1, 2, 3}), Error);
}

TEST(InnerGrad, VanishesAtStationaryPointAndMatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_instance({}, rng);
    const Vector u = testing::random_vector(rng, p.outer_dim());
    const Vector w = testing::random_vector(rng, p.inner_dim());
    const Vector fd = testing::fd_gradient([&](const Vector& x) { return p.inner_loss(u, x); }, w, 1e-5);
    EXPECT_LE(max_abs_diff(inner_grad(p, u, w), fd), 1e-6 * std::max(1.0, fd.max_abs()));

    const Vector ws = inner_min_displacement(p, u, w);
    const double scale = 1.0 + p.a().max_abs() * ws.max_abs() + p.inner_linear(u).max_abs();
    EXPECT_LE(inner_grad(p, u, ws).norm(), 1e-8 * scale);
  }
}

TEST(InnerMinDisplacement, Examples) {
  const DenseMatrix b{{1, 0}, {0, 1}};
  const auto full = simple(DenseMatrix::identity(2), b, Vector{0.5, -1}, DenseMatrix::identity(2), Vector(2));
  const Vector u{1, 2};
  EXPECT_LE(max_abs_diff(inner_min_displacement(full, u, Vector{9, -9}), Vector{-1.5, -1.0}), 1e-15);

  const auto deficient =
      simple(DenseMatrix{{1, 0}, {0, 0}}, DenseMatrix{{1}, {0}}, Vector(2), DenseMatrix::identity(2), Vector(2));
  EXPECT_LE(max_abs_diff(inner_min_displacement(deficient, Vector{1.0}, Vector{0, 5}), Vector{-1, 5}), 1e-15);
}

TEST(InnerMinDisplacement, MatchesGradientDescent) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<std::size_t> dim(2, 12);
    InstanceShape s;
    s.inner_dim = dim(rng);
    s.outer_dim = dim(rng);
    s.inner_rank = std::uniform_int_distribution<std::size_t>(1, s.inner_dim - 1)(rng);
    const auto p = random_instance(s, rng);
    const Vector u = testing::random_vector(rng, p.outer_dim());
    const Vector w0 = testing::random_vector(rng, p.inner_dim());
    const double lmax = testing::power_lambda_max(p.a());
    const Vector gd = testing::gd_quadratic(p.a(), p.inner_linear(u), w0, 1.0 / lmax, 1e-10, 2000000);
    EXPECT_LE((gd - inner_min_displacement(p, u, w0)).norm(), 1e-6 * (1.0 + w0.norm())) << "trial " << trial;
  }
}

TEST(SolutionSet, Examples) {
  const auto full = simple(DenseMatrix::identity(2), DenseMatrix(2, 1), Vector(2), DenseMatrix::identity(2), Vector(2));
  EXPECT_EQ(solution_set(full, Vector{0.0}).nullspace_basis.cols(), 0u);

  const auto zero = simple(DenseMatrix(3, 3), DenseMatrix(3, 1), Vector(3), DenseMatrix::identity(3), Vector(3));
  const auto zs = solution_set(zero, Vector{1.0});
  EXPECT_EQ(zs.particular.max_abs(), 0.0);
  EXPECT_EQ(zs.nullspace_basis.cols(), 3u);

  const auto diag = simple(DenseMatrix{{1, 0}, {0, 0}}, DenseMatrix(2, 1), Vector(2), DenseMatrix::identity(2),
                           Vector(2));
  const auto ds = solution_set(diag, Vector{0.0});
  ASSERT_EQ(ds.nullspace_basis.cols(), 1u);
  EXPECT_NEAR(std::abs(ds.nullspace_basis(1, 0)), 1.0, 1e-15);
  EXPECT_NEAR(ds.nullspace_basis(0, 0), 0.0, 1e-15);
}

TEST(SolutionSet, FlatMinimumManifold) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_instance({8, 3, 4, 3, 0.0}, rng);
    const Vector u = testing::random_vector(rng, 3);
    const auto s = solution_set(p, u);
    ASSERT_EQ(s.nullspace_basis.cols(), 4u);
    const DenseMatrix& n = s.nullspace_basis;
    EXPECT_LE(max_abs_diff(n.transpose() * n, DenseMatrix::identity(4)), 1e-9);
    EXPECT_LE((p.a() * n).max_abs(), 1e-8 * std::max(1.0, p.a().max_abs()));
    EXPECT_LE((p.a() * s.particular + p.inner_linear(u)).max_abs(), 1e-8 * std::max(1.0, p.a().max_abs()));

    const double f0 = p.inner_loss(u, s.particular);
    for (int k = 0; k < 5; ++k) {
      const Vector w = s.particular + n * testing::random_vector(rng, 4, 3.0);
      EXPECT_NEAR(p.inner_loss(u, w), f0, 1e-9 * std::max(1.0, std::abs(f0)));
    }
  }
}

TEST(ReduceOuter, Examples) {
  const auto b0 = simple(DenseMatrix::identity(2), DenseMatrix(2, 3), Vector{1, 2}, DenseMatrix::identity(2),
                         Vector{1, 1});
  const auto r0 = reduce_outer(b0);
  EXPECT_EQ(r0.z.max_abs(), 0.0);
  EXPECT_EQ(r0.linear.max_abs(), 0.0);

  const DenseMatrix b{{1, 2}, {3, 4}, {5, 6}};
  const auto pid = simple(DenseMatrix::identity(3), b, Vector(3), DenseMatrix::identity(3), Vector(3));
  EXPECT_LE(max_abs_diff(reduce_outer(pid).z, b.transpose() * b), 1e-12);
}

TEST(ReduceOuter, AgreesWithDirectEvaluationAndIsPsd) {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 30; ++trial) {
    const auto p = random_instance({7, 5, 4, 3, 0.0}, rng);
    const auto r = reduce_outer(p);
    const auto eig = sym_eig(r.z);
    EXPECT_GE(eig.eigenvalues[eig.eigenvalues.size() - 1], -1e-9 * std::max(eig.max_eigenvalue(), 1e-300));
    for (int k = 0; k < 20; ++k) {
      const Vector u = testing::random_vector(rng, 5);
      const double direct = p.outer_loss(inner_min_displacement(p, u, Vector(7)));
      EXPECT_NEAR(r.value(u), direct, 1e-9 * std::max(1.0, std::abs(direct)));
    }
  }
}

TEST(ColdStartOuterOracle, Examples) {
  // Z full rank: result independent of u0.
  const auto full = simple(DenseMatrix::identity(2), DenseMatrix::identity(2), Vector(2), DenseMatrix::identity(2),
                           Vector{1, -1});
  EXPECT_LE(max_abs_diff(cold_start_outer_oracle(full, Vector{0, 0}), cold_start_outer_oracle(full, Vector{5, 7})),
            1e-12);
  // Z = 0 and no linear term: u0 returned.
  const auto flat = simple(DenseMatrix::identity(2), DenseMatrix(2, 2), Vector(2), DenseMatrix::identity(2), Vector(2));
  EXPECT_LE(max_abs_diff(cold_start_outer_oracle(flat, Vector{3, 4}), Vector{3, 4}), 0.0);
}

TEST(ColdStartOuterOracle, MatchesOuterGradientDescent) {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 20; ++trial) {
    // |U| > rank(P) makes Z rank deficient.
    const auto p = random_instance({6, 8, 4, 2, 0.0}, rng);
    const auto r = reduce_outer(p);
    const Vector u0 = testing::random_vector(rng, 8);
    const double lmax = testing::power_lambda_max(r.z);
    const Vector gd = testing::gd_quadratic(r.z, r.linear, u0, 1.0 / lmax, 1e-12, 100000);
    EXPECT_LE((gd - cold_start_outer_oracle(p, u0)).norm(), 1e-5 * (1.0 + u0.norm())) << "trial " << trial;
  }
}

TEST(Serialization, RoundTripIsExact) {
  std::mt19937_64 rng(26);
  const auto p = random_instance({}, rng);
  const auto q = quadratic_from_document(to_document(p));
  EXPECT_EQ(max_abs_diff(p.a(), q.a()), 0.0);
  EXPECT_EQ(max_abs_diff(p.b(), q.b()), 0.0);
  EXPECT_EQ(max_abs_diff(p.p(), q.p()), 0.0);
  EXPECT_EQ(max_abs_diff(p.d(), q.d()), 0.0);
  EXPECT_EQ(max_abs_diff(p.f(), q.f()), 0.0);
  EXPECT_EQ(max_abs_diff(p.terms().e, q.terms().e), 0.0);
}

TEST(Serialization, RejectsMalformedDocuments) {
  EXPECT_THROW(quadratic_from_document("{"), Error);
  EXPECT_THROW(quadratic_from_document(R"({"format": "other"})"), Error);
  try {
    quadratic_from_document(R"({"format": "blo.quadratic_bilevel/1", "inner": {}})");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
  }
}

}  // namespace
}  // namespace blo
