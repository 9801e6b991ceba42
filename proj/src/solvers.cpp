#include "blo/solvers.hpp"

#include <charconv>
#include <cmath>
#include <string>

namespace blo {

namespace {

constexpr double kDivergenceFactor = 1e6;
constexpr std::size_t kDivergenceCheckEvery = 64;
constexpr std::size_t kDenseRecordLimit = 100000;
constexpr std::size_t kThinStride = 10;

void require_positive(double x, const char* what) {
  if (!(x > 0.0)) throw Error(ErrorKind::InvalidConfig, std::string(what) + " must be positive");
}

struct DivergenceGuard {
  const ProblemOracles& o;
  const Vector& u;
  double limit = INFINITY;

  DivergenceGuard(const ProblemOracles& oracles, const Vector& uu, const Vector& w_init) : o(oracles), u(uu) {
    if (o.inner_loss) limit = kDivergenceFactor * std::max(1.0, std::abs(o.inner_loss(u, w_init)));
  }

  void check(const Vector& w, std::size_t step) const {
    if (!w.all_finite()) throw Error(ErrorKind::DivergenceDetected, "inner iterate non-finite at step " + std::to_string(step));
    if (!o.inner_loss) return;
    const double f = o.inner_loss(u, w);
    if (!std::isfinite(f) || std::abs(f) > limit) {
      throw Error(ErrorKind::DivergenceDetected,
                  "inner loss " + std::to_string(f) + " at step " + std::to_string(step) + "; learning rate too large?");
    }
  }
};

}  // namespace

SolverMode parse_mode(std::string_view text) {
  if (text == "cold") return mode::ColdStart{};
  if (text == "warm-full") return mode::WarmStartFull{};
  constexpr std::string_view prefix = "warm-partial:";
  if (text.substr(0, prefix.size()) == prefix) {
    const std::string_view num = text.substr(prefix.size());
    std::size_t t = 0;
    const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), t);
    if (ec == std::errc() && ptr == num.data() + num.size() && t >= 1) return mode::WarmStartPartial{t};
  }
  throw Error(ErrorKind::ParseError, "mode must be cold | warm-full | warm-partial:T (T >= 1), got '" +
                                         std::string(text) + "'");
}

std::string to_string(const SolverMode& m) {
  if (std::holds_alternative<mode::ColdStart>(m)) return "cold";
  if (std::holds_alternative<mode::WarmStartFull>(m)) return "warm-full";
  return "warm-partial:" + std::to_string(std::get<mode::WarmStartPartial>(m).t_inner);
}

BilevelConfig default_quadratic_config(const QuadraticBilevel& p) {
  BilevelConfig c;
  c.inner_lr = 1.0 / p.a_eig().max_eigenvalue();
  const double zmax = sym_eig(reduce_outer(p).z).max_eigenvalue();
  c.outer_lr = zmax > 0.0 ? 1.0 / zmax : 1.0;
  c.w0 = Vector(p.inner_dim());
  c.u0 = Vector(p.outer_dim());
  return c;
}

Vector optimize_inner(const ProblemOracles& o, const Vector& u, const Vector& w_init, std::size_t steps, double gamma) {
  require_positive(gamma, "inner learning rate");
  Vector w = w_init;
  if (steps == 0) return w;
  const DivergenceGuard guard(o, u, w_init);
  for (std::size_t s = 1; s <= steps; ++s) {
    w.axpy(-gamma, o.inner_grad(u, w));
    if (s % kDivergenceCheckEvery == 0 || s == steps) guard.check(w, s);
  }
  return w;
}

Vector optimize_inner_to_tol(const ProblemOracles& o, const Vector& u, const Vector& w_init, double tol, double gamma,
                             std::size_t step_cap) {
  require_positive(gamma, "inner learning rate");
  const DivergenceGuard guard(o, u, w_init);
  Vector w = w_init;
  Vector best = w;
  double best_norm = INFINITY;
  for (std::size_t s = 0;; ++s) {
    const Vector g = o.inner_grad(u, w);
    const double gn = g.norm();
    if (gn < best_norm) {
      best_norm = gn;
      best = w;
    }
    if (gn <= tol * (1.0 + w.norm())) return w;
    if (s == step_cap) {
      throw InnerStepCapReached("inner gradient norm " + std::to_string(best_norm) + " after " +
                                    std::to_string(step_cap) + " steps",
                                std::move(best), best_norm);
    }
    w.axpy(-gamma, g);
    if ((s + 1) % kDivergenceCheckEvery == 0) guard.check(w, s + 1);
  }
}

SolveTrace run_bilevel(const ProblemOracles& o, const BilevelConfig& c) {
  require_positive(c.inner_lr, "inner_lr");
  require_positive(c.outer_lr, "outer_lr");
  if (c.u0.empty() || c.w0.empty()) throw Error(ErrorKind::InvalidConfig, "u0 and w0 must be set");

  auto full_solve = [&](const Vector& u, const Vector& from) {
    if (c.full_inner_solver) return c.full_inner_solver(u, from);
    return optimize_inner_to_tol(o, u, from, c.inner_convergence_tol, c.inner_lr, c.inner_step_cap);
  };
  auto inner_step = [&](const Vector& u, const Vector& w_prev) -> Vector {
    if (std::holds_alternative<mode::ColdStart>(c.mode)) return full_solve(u, c.w0);
    if (std::holds_alternative<mode::WarmStartFull>(c.mode)) return full_solve(u, w_prev);
    return optimize_inner(o, u, w_prev, std::get<mode::WarmStartPartial>(c.mode).t_inner, c.inner_lr);
  };

  SolveTrace trace;
  Vector u = c.u0;
  Vector w = inner_step(u, c.w0);

  auto evaluate = [&](std::size_t iter, Vector& g_out) {
    const HypergradResult h = response_vjp(o, u, w, c.method);
    g_out = h.grad;
    TraceRecord r;
    r.iter = iter;
    r.u = u;
    if (c.record_w) r.w = w;
    r.outer_loss = o.outer_loss ? o.outer_loss(u, w) : NAN;
    r.inner_loss = o.inner_loss ? o.inner_loss(u, w) : NAN;
    r.hypergrad_norm = g_out.norm();
    r.stationarity = h.stationarity;
    if (!std::isfinite(r.outer_loss) && o.outer_loss) {
      trace.records.push_back(r);
      throw SolveAborted("outer loss non-finite at iteration " + std::to_string(iter), trace);
    }
    if (!std::isfinite(r.hypergrad_norm)) {
      trace.records.push_back(r);
      throw SolveAborted("hypergradient non-finite at iteration " + std::to_string(iter), trace);
    }
    return r;
  };
  auto keep = [&](std::size_t iter) {
    return trace.records.size() < kDenseRecordLimit || iter % kThinStride == 0;
  };

  Vector g;
  TraceRecord last = evaluate(0, g);
  trace.records.push_back(last);
  bool last_kept = true;
  std::size_t t = 0;
  for (; t < c.max_outer_iters; ++t) {
    if (g.norm() <= c.outer_stop_tol) {
      trace.status = SolveStatus::Converged;
      break;
    }
    u.axpy(-c.outer_lr, g);
    w = inner_step(u, w);
    last = evaluate(t + 1, g);
    last_kept = keep(t + 1);
    if (last_kept) trace.records.push_back(last);
  }
  if (!last_kept) trace.records.push_back(last);
  trace.iterations = t;
  trace.final_u = u;
  trace.final_w = w;
  return trace;
}

EquilibriumReport check_cold_equilibrium(const QuadraticBilevel& p, const Vector& u, const Vector& w, const Vector& w0,
                                         double tol) {
  EquilibriumReport r;
  r.inner_residual = (w - inner_min_displacement(p, u, w0)).norm();
  r.hypergrad_norm = (p.b().transpose_times(p.a_pinv() * p.outer_grad_w(w))).norm();
  r.passed = r.inner_residual <= tol && r.hypergrad_norm <= tol;
  return r;
}

EquilibriumReport check_warm_equilibrium(const ProblemOracles& o, const Vector& u, const Vector& w,
                                         std::size_t t_inner, double alpha, double tol) {
  EquilibriumReport r;
  r.inner_residual = (optimize_inner(o, u, w, t_inner, alpha) - w).norm();
  r.hypergrad_norm = response_vjp(o, u, w, method::Exact{}).grad.norm();
  r.passed = r.inner_residual <= tol && r.hypergrad_norm <= tol;
  return r;
}

Vector kaczmarz_project(const Vector& w0, const Hyperplane& plane) {
  require_same_size(w0, plane.x, "kaczmarz_project");
  const double xx = plane.x.squared_norm();
  if (!(xx > 0.0)) throw Error(ErrorKind::ZeroDirection, "hyperplane normal is zero");
  Vector w = w0;
  w.axpy(-(plane.x.dot(w0) - plane.y) / xx, plane.x);
  return w;
}

std::vector<Vector> kaczmarz_cycle(const Vector& w0, const std::vector<Hyperplane>& planes, std::size_t sweeps) {
  if (sweeps == 0) throw Error(ErrorKind::InvalidConfig, "sweeps must be >= 1");
  if (planes.empty()) throw Error(ErrorKind::InvalidConfig, "need at least one hyperplane");
  std::vector<Vector> traj;
  traj.reserve(planes.size() * sweeps + 1);
  traj.push_back(w0);
  for (std::size_t s = 0; s < sweeps; ++s)
    for (const auto& plane : planes) traj.push_back(kaczmarz_project(traj.back(), plane));
  return traj;
}

CsvTable trace_table(const SolveTrace& trace, bool include_u) {
  CsvTable t;
  t.header = {"iter", "outer_loss", "inner_loss", "hypergrad_norm", "stationarity"};
  const std::size_t nu = include_u && !trace.records.empty() ? trace.records.front().u.size() : 0;
  for (std::size_t i = 0; i < nu; ++i) t.header.push_back("u_" + std::to_string(i));
  for (const auto& r : trace.records) {
    std::vector<double> row{static_cast<double>(r.iter), r.outer_loss, r.inner_loss, r.hypergrad_norm, r.stationarity};
    for (std::size_t i = 0; i < nu; ++i) row.push_back(r.u[i]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace blo
