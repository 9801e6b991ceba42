#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <variant>

#include "blo/linalg.hpp"
#include "blo/quad_blo.hpp"

namespace blo {

// Derivative oracles of a bilevel problem. All maps take (u, w).
// mixed is d^2 f / dw du with shape |W| x |U|.
struct ProblemOracles {
  std::function<Vector(const Vector&, const Vector&)> inner_grad;
  std::function<DenseMatrix(const Vector&, const Vector&)> inner_hess;
  std::function<DenseMatrix(const Vector&, const Vector&)> mixed;
  std::function<Vector(const Vector&, const Vector&)> outer_grad_w;
  std::function<Vector(const Vector&, const Vector&)> outer_grad_u;
  std::function<double(const Vector&, const Vector&)> inner_loss;
  std::function<double(const Vector&, const Vector&)> outer_loss;
};

ProblemOracles quadratic_oracles(std::shared_ptr<const QuadraticBilevel> p);

namespace method {
struct Exact {};
struct Neumann {
  std::size_t k = 0;
  double alpha = 0.0;
};
struct Damped {
  double eps = 0.0;
};
// K + 1 gradient steps, matching the K-term Neumann sum.
struct Unroll {
  std::size_t k = 0;
  double alpha = 0.0;
};
struct TruncatedCG {
  std::size_t k = 0;
};
// Inverse Hessian replaced by I (factor 1, no alpha).
struct Identity {};
}  // namespace method

using HypergradMethod =
    std::variant<method::Exact, method::Neumann, method::Damped, method::Unroll, method::TruncatedCG, method::Identity>;

// exact | neumann:K:alpha | damped:eps | unroll:K:alpha | cg:K | identity
HypergradMethod parse_method(std::string_view text);
std::string to_string(const HypergradMethod& m);

inline constexpr double kDefaultStationarityTol = 1e-6;

struct HypergradResult {
  Vector grad;
  bool stationary = true;     // ||grad_w f|| <= tol * (1 + ||w||) at the evaluation point
  double stationarity = 0.0;  // ||grad_w f||
  bool cg_breakdown = false;
};

// g = dF/du - M^T N dF/dw with N the method's inverse-Hessian approximation.
// Non-stationary w only sets the flag; warm-start callers rely on that.
HypergradResult response_vjp(const ProblemOracles& o, const Vector& u, const Vector& w, const HypergradMethod& m,
                             double stationarity_tol = kDefaultStationarityTol);

// alpha * sum_{j<=K} (1 - alpha lambda)^j, written in closed form.
double neumann_eigen_map(double lambda, double alpha, std::size_t k);

// alpha * sum_{j<=K} (I - alpha H)^j via the eigendecomposition of H.
// Throws SeriesDivergence when alpha * lambda_max >= 2.
DenseMatrix neumann_matrix(const DenseMatrix& h, double alpha, std::size_t k);

// -(H + eps I)^{-1} M, the response of the proximally regularized inner problem.
DenseMatrix proximal_response_jacobian(const ProblemOracles& o, const Vector& u, const Vector& w, double eps);

// Unrolls K + 1 GD steps from w and back-propagates dF/dw through them.
// Works for any oracle set; on a quadratic at a stationary w it reproduces
// the K-term Neumann hypergradient.
Vector unrolled_hypergrad(const ProblemOracles& o, const Vector& u, const Vector& w, double alpha, std::size_t k);

// Quadratic specialization; throws NotStationary unless
// ||grad_w f|| <= 1e-8 * scale at w_star.
Vector unrolled_hypergrad_quadratic(const QuadraticBilevel& p, const Vector& u, const Vector& w_star, double alpha,
                                    std::size_t k);

}  // namespace blo
