#include "blo/hypergrad.hpp"

#include <charconv>
#include <cmath>
#include <string>
#include <vector>

namespace blo {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_real(std::string_view s, std::string_view whole) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw Error(ErrorKind::ParseError, "bad number '" + std::string(s) + "' in method '" + std::string(whole) + "'");
  }
  return v;
}

std::size_t parse_count(std::string_view s, std::string_view whole) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorKind::ParseError, "bad count '" + std::string(s) + "' in method '" + std::string(whole) + "'");
  }
  return v;
}

std::string shortest(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

void require_positive(double x, const char* what) {
  if (!(x > 0.0)) throw Error(ErrorKind::InvalidConfig, std::string(what) + " must be positive");
}

void require_series_convergent(const EigenDecomposition& eig, double alpha) {
  const double lmax = eig.max_eigenvalue();
  if (alpha * lmax >= 2.0) {
    throw Error(ErrorKind::SeriesDivergence, "alpha * lambda_max = " + std::to_string(alpha * lmax) + " >= 2");
  }
}

Vector outer_grad_u_or_zero(const ProblemOracles& o, const Vector& u, const Vector& w) {
  if (o.outer_grad_u) return o.outer_grad_u(u, w);
  return Vector(u.size());
}

}  // namespace

ProblemOracles quadratic_oracles(std::shared_ptr<const QuadraticBilevel> p) {
  ProblemOracles o;
  o.inner_grad = [p](const Vector& u, const Vector& w) { return inner_grad(*p, u, w); };
  o.inner_hess = [p](const Vector&, const Vector&) { return p->a(); };
  o.mixed = [p](const Vector&, const Vector&) { return p->b(); };
  o.outer_grad_w = [p](const Vector&, const Vector& w) { return p->outer_grad_w(w); };
  o.outer_grad_u = [p](const Vector& u, const Vector&) { return Vector(u.size()); };
  o.inner_loss = [p](const Vector& u, const Vector& w) { return p->inner_loss(u, w); };
  o.outer_loss = [p](const Vector&, const Vector& w) { return p->outer_loss(w); };
  return o;
}

HypergradMethod parse_method(std::string_view text) {
  const auto parts = split(text, ':');
  const std::string_view name = parts[0];
  auto expect = [&](std::size_t n) {
    if (parts.size() != n) {
      throw Error(ErrorKind::ParseError, "method '" + std::string(text) + "' expects " + std::to_string(n - 1) +
                                             " argument(s)");
    }
  };
  if (name == "exact") {
    expect(1);
    return method::Exact{};
  }
  if (name == "identity") {
    expect(1);
    return method::Identity{};
  }
  if (name == "neumann" || name == "unroll") {
    expect(3);
    const std::size_t k = parse_count(parts[1], text);
    const double alpha = parse_real(parts[2], text);
    require_positive(alpha, "alpha");
    if (name == "neumann") return method::Neumann{k, alpha};
    return method::Unroll{k, alpha};
  }
  if (name == "damped") {
    expect(2);
    const double eps = parse_real(parts[1], text);
    if (!(eps > 0.0)) throw Error(ErrorKind::NonPositiveDamping, "damping must be positive");
    return method::Damped{eps};
  }
  if (name == "cg") {
    expect(2);
    return method::TruncatedCG{parse_count(parts[1], text)};
  }
  throw Error(ErrorKind::ParseError, "unknown method '" + std::string(text) + "'");
}

std::string to_string(const HypergradMethod& m) {
  return std::visit(overloaded{
                        [](const method::Exact&) { return std::string("exact"); },
                        [](const method::Identity&) { return std::string("identity"); },
                        [](const method::Neumann& n) { return "neumann:" + std::to_string(n.k) + ":" + shortest(n.alpha); },
                        [](const method::Unroll& n) { return "unroll:" + std::to_string(n.k) + ":" + shortest(n.alpha); },
                        [](const method::Damped& d) { return "damped:" + shortest(d.eps); },
                        [](const method::TruncatedCG& c) { return "cg:" + std::to_string(c.k); },
                    },
                    m);
}

double neumann_eigen_map(double lambda, double alpha, std::size_t k) {
  const double x = alpha * lambda;
  const double terms = static_cast<double>(k) + 1.0;
  if (x == 0.0) return alpha * terms;
  if (x < 1.0) {
    // 1 - (1 - x)^{K+1} without cancellation for small x.
    return -alpha * std::expm1(terms * std::log1p(-x)) / x;
  }
  return alpha * (1.0 - std::pow(1.0 - x, terms)) / x;
}

DenseMatrix neumann_matrix(const DenseMatrix& h, double alpha, std::size_t k) {
  require_positive(alpha, "alpha");
  const EigenDecomposition eig = sym_eig(h);
  require_series_convergent(eig, alpha);
  return eig.reconstruct([&](double l) { return neumann_eigen_map(l, alpha, k); });
}

HypergradResult response_vjp(const ProblemOracles& o, const Vector& u, const Vector& w, const HypergradMethod& m,
                             double stationarity_tol) {
  HypergradResult res;
  res.stationarity = o.inner_grad(u, w).norm();
  res.stationary = res.stationarity <= stationarity_tol * (1.0 + w.norm());

  if (const auto* un = std::get_if<method::Unroll>(&m)) {
    require_positive(un->alpha, "alpha");
    require_series_convergent(sym_eig(o.inner_hess(u, w)), un->alpha);
    res.grad = unrolled_hypergrad(o, u, w, un->alpha, un->k);
    return res;
  }

  const Vector gw = o.outer_grad_w(u, w);
  Vector v = std::visit(
      overloaded{
          [&](const method::Exact&) { return pinv(o.inner_hess(u, w)) * gw; },
          [&](const method::Identity&) { return gw; },
          [&](const method::Neumann& n) {
            require_positive(n.alpha, "alpha");
            const EigenDecomposition eig = sym_eig(o.inner_hess(u, w));
            require_series_convergent(eig, n.alpha);
            return eig.apply([&](double l) { return neumann_eigen_map(l, n.alpha, n.k); }, gw);
          },
          [&](const method::Damped& d) { return solve_damped(o.inner_hess(u, w), d.eps, gw); },
          [&](const method::TruncatedCG& c) {
            CgResult r = truncated_cg(o.inner_hess(u, w), gw, c.k);
            res.cg_breakdown = r.breakdown;
            return r.x;
          },
          [&](const method::Unroll&) -> Vector { return {}; },  // handled above
      },
      m);

  const DenseMatrix mixed = o.mixed(u, w);
  if (mixed.rows() != w.size() || mixed.cols() != u.size()) {
    throw Error(ErrorKind::DimensionMismatch, "mixed partial must be |W| x |U|");
  }
  res.grad = outer_grad_u_or_zero(o, u, w) - mixed.transpose_times(v);
  return res;
}

DenseMatrix proximal_response_jacobian(const ProblemOracles& o, const Vector& u, const Vector& w, double eps) {
  const DenseMatrix h = o.inner_hess(u, w);
  const DenseMatrix mixed = o.mixed(u, w);
  DenseMatrix jac(mixed.rows(), mixed.cols());
  for (std::size_t c = 0; c < mixed.cols(); ++c) jac.set_column(c, -solve_damped(h, eps, mixed.col_vector(c)));
  return jac;
}

Vector unrolled_hypergrad(const ProblemOracles& o, const Vector& u, const Vector& w, double alpha, std::size_t k) {
  require_positive(alpha, "alpha");
  std::vector<Vector> iterates;
  iterates.reserve(k + 2);
  iterates.push_back(w);
  for (std::size_t i = 0; i <= k; ++i) {
    Vector next = iterates.back();
    next.axpy(-alpha, o.inner_grad(u, iterates.back()));
    iterates.push_back(std::move(next));
  }
  const Vector& last = iterates.back();
  Vector v = o.outer_grad_w(u, last);
  Vector g = outer_grad_u_or_zero(o, u, last);
  for (std::size_t i = k + 1; i-- > 0;) {
    g.axpy(-alpha, o.mixed(u, iterates[i]).transpose_times(v));
    if (i > 0) v.axpy(-alpha, o.inner_hess(u, iterates[i]) * v);
  }
  return g;
}

Vector unrolled_hypergrad_quadratic(const QuadraticBilevel& p, const Vector& u, const Vector& w_star, double alpha,
                                    std::size_t k) {
  require_positive(alpha, "alpha");
  const Vector lin = p.inner_linear(u);
  const double residual = (p.a() * w_star + lin).norm();
  const double scale = 1.0 + p.a().max_abs() * w_star.norm() + lin.norm();
  if (residual > 1e-8 * scale) {
    throw Error(ErrorKind::NotStationary,
                "unrolling identity needs a stationary inner point (residual " + std::to_string(residual) + ")");
  }
  // At a stationary point every unrolled iterate equals w_star, so H and M are fixed.
  Vector v = p.outer_grad_w(w_star);
  Vector g(p.outer_dim());
  for (std::size_t i = k + 1; i-- > 0;) {
    g.axpy(-alpha, p.b().transpose_times(v));
    if (i > 0) v.axpy(-alpha, p.a() * v);
  }
  return g;
}

}  // namespace blo
