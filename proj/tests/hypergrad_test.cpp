#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <random>

#include "blo/hypergrad.hpp"
#include "oracles.hpp"

namespace blo {
namespace {

using testing::max_abs_diff;

std::shared_ptr<const QuadraticBilevel> make(DenseMatrix a, DenseMatrix b, DenseMatrix p, Vector f) {
  const std::size_t nw = a.rows(), nu = b.cols();
  return std::make_shared<const QuadraticBilevel>(QuadraticBilevel::Terms{
      std::move(a), std::move(b), DenseMatrix(nu, nu), Vector(nw), Vector(nu), 0.0, std::move(p), std::move(f), 0.0});
}

std::shared_ptr<const QuadraticBilevel> random_shared(std::mt19937_64& rng, InstanceShape s = {}) {
  return std::make_shared<const QuadraticBilevel>(random_instance(s, rng));
}

// Explicit partial sum alpha * sum_j (1 - alpha l)^j, term by term.
double neumann_by_summation(double l, double alpha, std::size_t k) {
  double term = 1.0, sum = 0.0;
  for (std::size_t j = 0; j <= k; ++j) {
    sum += term;
    term *= 1.0 - alpha * l;
  }
  return alpha * sum;
}

TEST(MethodParsing, RoundTripsAndRejectsGarbage) {
  for (const char* s : {"exact", "identity", "neumann:10:0.5", "unroll:3:1e-07", "damped:0.001", "cg:4"}) {
    EXPECT_EQ(to_string(parse_method(s)), s);
  }
  EXPECT_THROW(parse_method("neumann:10"), Error);
  EXPECT_THROW(parse_method("neumann:x:1"), Error);
  EXPECT_THROW(parse_method("newton"), Error);
  EXPECT_THROW(parse_method("neumann:3:-1"), Error);
  try {
    parse_method("damped:0");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonPositiveDamping);
  }
}

TEST(NeumannEigenMap, ClosedFormMatchesSummation) {
  for (double alpha : {0.1, 0.5, 1.0}) {
    for (double l : {0.0, 1e-9, 0.3, 1.0, 1.9, 3.0}) {
      if (alpha * l >= 2.0) continue;
      for (std::size_t k : {0u, 1u, 5u, 40u}) {
        const double expected = neumann_by_summation(l, alpha, k);
        EXPECT_NEAR(neumann_eigen_map(l, alpha, k), expected, 1e-12 * std::max(1.0, std::abs(expected)))
            << "alpha " << alpha << " lambda " << l << " K " << k;
      }
    }
  }
  EXPECT_DOUBLE_EQ(neumann_eigen_map(0.0, 0.25, 9), 2.5);
  EXPECT_DOUBLE_EQ(neumann_eigen_map(2.0, 0.25, 1), 0.375);
}

TEST(NeumannEigenMap, SpectralSandwichAndDampedLimit) {
  for (double alpha : {1e-3, 0.1, 1.0}) {
    for (double l : {1e-3, 0.1, 0.5, 1.0, 1.5}) {
      if (alpha * l >= 1.0) continue;
      for (std::size_t k : {1u, 10u, 100u, 1000u}) {
        const double m = neumann_eigen_map(l, alpha, k);
        EXPECT_GE(m, 0.0);
        EXPECT_LE(m, std::min(1.0 / l, alpha * static_cast<double>(k + 1)) * (1.0 + 1e-12));
      }
    }
  }
  // Fixed lambda: both maps tend to 1/lambda; relative gap ~ 1/(alpha lambda K) once that is large.
  for (double l : {0.05, 0.5, 2.0}) {
    double previous = INFINITY;
    for (std::size_t k : {1000u, 10000u, 100000u}) {
      const double alpha = 0.4, s = alpha * l * static_cast<double>(k);
      const double gap = std::abs(neumann_eigen_map(l, alpha, k) - 1.0 / (l + 1.0 / (alpha * static_cast<double>(k))));
      EXPECT_LE(gap, previous);
      EXPECT_LE(gap * l, 2.0 / s);
      previous = gap;
    }
  }
  // Fixed s = alpha*lambda*K: in units of alpha*K the maps tend to (1 - e^-s)/s and 1/(1 + s).
  for (double s : {0.1, 1.0, 10.0}) {
    const std::size_t k = 100000;
    const double alpha = 1e-3, l = s / (alpha * static_cast<double>(k));
    const double ak = alpha * static_cast<double>(k);
    EXPECT_NEAR(neumann_eigen_map(l, alpha, k) / ak, -std::expm1(-s) / s, 1e-4);
  }
}

TEST(NeumannMatrix, Examples) {
  for (std::size_t k : {0u, 3u, 50u}) {
    EXPECT_LE(max_abs_diff(neumann_matrix(DenseMatrix::identity(3), 1.0, k), DenseMatrix::identity(3)), 1e-15);
  }
  EXPECT_NEAR(neumann_matrix(DenseMatrix{{2.0}}, 0.25, 200)(0, 0), 0.5, 1e-10);
  try {
    neumann_matrix(DenseMatrix{{4.0}}, 0.5, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SeriesDivergence);
  }
}

TEST(NeumannMatrix, MatchesMatrixPowerSum) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const DenseMatrix h = testing::random_psd(rng, 6, 4);
    const double alpha = 1.0 / testing::power_lambda_max(h);
    for (std::size_t k : {0u, 2u, 9u}) {
      DenseMatrix term = DenseMatrix::identity(6), sum(6, 6);
      const DenseMatrix step = DenseMatrix::identity(6) - alpha * h;
      for (std::size_t j = 0; j <= k; ++j) {
        sum += term;
        term = term * step;
      }
      EXPECT_LE(max_abs_diff(neumann_matrix(h, alpha, k), alpha * sum), 1e-9 * alpha * (k + 1));
    }
  }
}

TEST(ResponseVjp, NeumannZeroTermsIsScaledGradient) {
  std::mt19937_64 rng(32);
  const auto p = random_shared(rng);
  const auto o = quadratic_oracles(p);
  const Vector u = testing::random_vector(rng, p->outer_dim());
  const Vector w = inner_min_displacement(*p, u, Vector(p->inner_dim()));
  const double alpha = 0.05;
  const Vector expected = -alpha * p->b().transpose_times(p->outer_grad_w(w));
  EXPECT_LE(max_abs_diff(response_vjp(o, u, w, method::Neumann{0, alpha}).grad, expected), 1e-14);
  // Identity keeps factor 1.
  EXPECT_LE(max_abs_diff(response_vjp(o, u, w, method::Identity{}).grad, (1.0 / alpha) * expected), 1e-12);
}

TEST(ResponseVjp, ScalarNeumannFactor) {
  // H = 2, M = 1, dF/dw = 1 -> g = -0.375.
  const auto p = make(DenseMatrix{{2.0}}, DenseMatrix{{1.0}}, DenseMatrix{{1.0}}, Vector{0.0});
  const auto o = quadratic_oracles(p);
  const Vector u{-2.0}, w{1.0};  // stationary: 2*1 + (-2) = 0; dF/dw = 1
  EXPECT_NEAR(response_vjp(o, u, w, method::Neumann{1, 0.25}).grad[0], -0.375, 1e-15);
}

TEST(ResponseVjp, AntiDistillToyExactHypergradient) {
  // Synthetic x = 0, 2 with features [1, x]; original point (1, 1).
  const DenseMatrix phi{{1, 0}, {1, 2}};
  const Vector phi_o{1, 1};
  const DenseMatrix p_mat = DenseMatrix::column(phi_o) * DenseMatrix::row(phi_o);
  const auto p = make(phi.transpose() * phi, -1.0 * phi.transpose(), p_mat, -1.0 * phi_o);
  const auto o = quadratic_oracles(p);
  const Vector u{0, 0};
  const Vector w = inner_min_displacement(*p, u, Vector(2));
  const auto r = response_vjp(o, u, w, method::Exact{});
  EXPECT_TRUE(r.stationary);
  EXPECT_LE(max_abs_diff(r.grad, Vector{-0.5, -0.5}), 1e-12);
}

TEST(ResponseVjp, ExactMatchesAssembledPseudoinverse) {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_shared(rng, {8, 5, 4, 3, 0.0});
    const auto o = quadratic_oracles(p);
    const Vector u = testing::random_vector(rng, 5);
    const Vector w = inner_min_displacement(*p, u, testing::random_vector(rng, 8));
    const DenseMatrix jac = -1.0 * (pinv(p->a()) * p->b());
    const Vector expected = jac.transpose_times(p->outer_grad_w(w));
    EXPECT_LE(max_abs_diff(response_vjp(o, u, w, method::Exact{}).grad, expected), 1e-10);
  }
}

TEST(ResponseVjp, ExactMatchesFiniteDifferenceOfReducedObjective) {
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = random_shared(rng, {7, 4, 3, 3, 0.0});
    const auto o = quadratic_oracles(p);
    const Vector u = testing::random_vector(rng, 4);
    const Vector w = inner_min_displacement(*p, u, Vector(7));
    const Vector fd = testing::fd_gradient(
        [&](const Vector& x) { return p->outer_loss(inner_min_displacement(*p, x, Vector(7))); }, u, 1e-5);
    EXPECT_LE(max_abs_diff(response_vjp(o, u, w, method::Exact{}).grad, fd), 1e-6 * std::max(1.0, fd.max_abs()));
  }
}

TEST(ResponseVjp, FullCgMatchesExactOnFullRank) {
  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_shared(rng, {6, 4, 6, 3, 0.0});
    const auto o = quadratic_oracles(p);
    const Vector u = testing::random_vector(rng, 4);
    const Vector w = inner_min_displacement(*p, u, Vector(6));
    const auto cg = response_vjp(o, u, w, method::TruncatedCG{6});
    EXPECT_LE(max_abs_diff(cg.grad, response_vjp(o, u, w, method::Exact{}).grad), 1e-7);
  }
}

TEST(ResponseVjp, FlagsNonStationaryPointWithoutThrowing) {
  std::mt19937_64 rng(36);
  const auto p = random_shared(rng);
  const auto o = quadratic_oracles(p);
  const Vector u = testing::random_vector(rng, p->outer_dim());
  const Vector w = inner_min_displacement(*p, u, Vector(p->inner_dim())) + p->a() * Vector(p->inner_dim(), 1.0);
  const auto r = response_vjp(o, u, w, method::Exact{});
  EXPECT_FALSE(r.stationary);
  EXPECT_GT(r.stationarity, 1e-3);
}

TEST(ResponseVjp, SeriesDivergenceIsReported) {
  std::mt19937_64 rng(37);
  const auto p = random_shared(rng);
  const auto o = quadratic_oracles(p);
  const Vector u(p->outer_dim()), w = inner_min_displacement(*p, u, Vector(p->inner_dim()));
  const double alpha = 2.5 / p->a_eig().max_eigenvalue();
  EXPECT_THROW(response_vjp(o, u, w, method::Neumann{3, alpha}), Error);
  EXPECT_THROW(response_vjp(o, u, w, method::Unroll{3, alpha}), Error);
}

TEST(ProximalJacobian, Examples) {
  const DenseMatrix m{{1, 2}, {3, 4}};
  ProblemOracles o;
  o.inner_hess = [](const Vector&, const Vector&) { return DenseMatrix(2, 2); };
  o.mixed = [&](const Vector&, const Vector&) { return m; };
  EXPECT_LE(max_abs_diff(proximal_response_jacobian(o, Vector(2), Vector(2), 0.5), -2.0 * m), 1e-15);
  EXPECT_THROW(proximal_response_jacobian(o, Vector(2), Vector(2), 0.0), Error);
}

TEST(ProximalJacobian, EqualsDampedResponsePath) {
  std::mt19937_64 rng(38);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_shared(rng, {9, 5, 5, 4, 0.0});
    const auto o = quadratic_oracles(p);
    const Vector u = testing::random_vector(rng, 5);
    const Vector w = inner_min_displacement(*p, u, Vector(9));
    for (double eps : {1e-3, 0.1, 10.0}) {
      const DenseMatrix jac = proximal_response_jacobian(o, u, w, eps);
      const Vector via_jac = jac.transpose_times(p->outer_grad_w(w));
      const Vector damped = response_vjp(o, u, w, method::Damped{eps}).grad;
      EXPECT_LE(max_abs_diff(via_jac, damped), 1e-12 * std::max(1.0, damped.max_abs()));
    }
  }
}

TEST(ProximalJacobian, SmallDampingApproachesInverse) {
  std::mt19937_64 rng(39);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = random_shared(rng, {5, 3, 5, 3, 0.0});
    const auto o = quadratic_oracles(p);
    const DenseMatrix expected = -1.0 * testing::gauss_solve_matrix(p->a(), p->b());
    const DenseMatrix jac = proximal_response_jacobian(o, Vector(3), Vector(5), 1e-8);
    EXPECT_LE(max_abs_diff(jac, expected), 1e-6 * std::max(1.0, expected.max_abs()));
  }
}

TEST(UnrolledQuadratic, ZeroStepsAndGate) {
  std::mt19937_64 rng(40);
  const auto p = random_shared(rng);
  const Vector u = testing::random_vector(rng, p->outer_dim());
  const Vector w = inner_min_displacement(*p, u, Vector(p->inner_dim()));
  const double alpha = 0.1;
  EXPECT_LE(max_abs_diff(unrolled_hypergrad_quadratic(*p, u, w, alpha, 0),
                         -alpha * p->b().transpose_times(p->outer_grad_w(w))),
            1e-15);
  try {
    unrolled_hypergrad_quadratic(*p, u, w + Vector(w.size(), 1.0), alpha, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotStationary);
  }
}

TEST(UnrolledQuadratic, EqualsNeumannAcrossGrid) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_shared(rng, {10, 6, 6, 4, 0.0});
    const auto o = quadratic_oracles(p);
    const Vector u = testing::random_vector(rng, 6);
    const Vector w = inner_min_displacement(*p, u, testing::random_vector(rng, 10));
    const double lmax = p->a_eig().max_eigenvalue();
    for (double alpha : {0.3 / lmax, 1.0 / lmax}) {
      for (std::size_t k : {0u, 1u, 3u, 7u, 20u}) {
        const Vector neumann = response_vjp(o, u, w, method::Neumann{k, alpha}).grad;
        EXPECT_LE(max_abs_diff(unrolled_hypergrad_quadratic(*p, u, w, alpha, k), neumann), 1e-12);
        EXPECT_LE(max_abs_diff(response_vjp(o, u, w, method::Unroll{k, alpha}).grad, neumann), 1e-12);
      }
    }
  }
}

TEST(UnrolledGeneric, MatchesFiniteDifferenceOfUnrolledMap) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = random_shared(rng, {6, 4, 4, 3, 0.0});
    const auto o = quadratic_oracles(p);
    const Vector u = testing::random_vector(rng, 4);
    const Vector w0 = testing::random_vector(rng, 6);  // not stationary
    const double alpha = 0.5 / p->a_eig().max_eigenvalue();
    const std::size_t k = 6;
    auto unrolled_loss = [&](const Vector& x) {
      Vector w = w0;
      for (std::size_t i = 0; i <= k; ++i) w.axpy(-alpha, p->a() * w + p->inner_linear(x));
      return p->outer_loss(w);
    };
    const Vector fd = testing::fd_gradient(unrolled_loss, u, 1e-5);
    EXPECT_LE(max_abs_diff(unrolled_hypergrad(o, u, w0, alpha, k), fd), 1e-6 * std::max(1.0, fd.max_abs()));
  }
}

}  // namespace
}  // namespace blo
