#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "blo/csv.hpp"
#include "blo/hypergrad.hpp"

namespace blo {

namespace mode {
struct ColdStart {};
struct WarmStartFull {};
struct WarmStartPartial {
  std::size_t t_inner = 1;
};
}  // namespace mode

using SolverMode = std::variant<mode::ColdStart, mode::WarmStartFull, mode::WarmStartPartial>;

// cold | warm-full | warm-partial:T
SolverMode parse_mode(std::string_view text);
std::string to_string(const SolverMode& m);

// Replacement for "optimize to tolerance": (u, w_init) -> inner solution.
using InnerSolver = std::function<Vector(const Vector&, const Vector&)>;

struct BilevelConfig {
  SolverMode mode = mode::ColdStart{};
  double inner_lr = 0.0;  // alpha
  double outer_lr = 0.0;  // beta
  std::size_t max_outer_iters = 1000;
  double inner_convergence_tol = 1e-8;
  HypergradMethod method = method::Exact{};
  double outer_stop_tol = 1e-8;
  Vector w0;
  Vector u0;
  std::size_t inner_step_cap = 1000000;
  // Used instead of GD-to-tolerance for ColdStart / WarmStartFull when set.
  InnerSolver full_inner_solver;
  bool record_w = true;
};

// alpha = 1/lambda_max(A), beta = 1/lambda_max(Z), zero initializations.
BilevelConfig default_quadratic_config(const QuadraticBilevel& p);

struct TraceRecord {
  std::size_t iter = 0;
  Vector u;
  Vector w;  // empty when record_w is off
  double outer_loss = 0.0;
  double inner_loss = 0.0;
  double hypergrad_norm = 0.0;
  double stationarity = 0.0;
};

enum class SolveStatus { Converged, MaxIters };

struct SolveTrace {
  std::vector<TraceRecord> records;
  SolveStatus status = SolveStatus::MaxIters;
  Vector final_u;
  Vector final_w;
  std::size_t iterations = 0;  // outer updates performed
};

// NonFiniteLoss abort; carries everything recorded so far.
class SolveAborted : public Error {
 public:
  SolveAborted(std::string what, SolveTrace trace)
      : Error(ErrorKind::NonFiniteLoss, std::move(what)), trace_(std::move(trace)) {}
  const SolveTrace& trace() const noexcept { return trace_; }

 private:
  SolveTrace trace_;
};

// StepCapReached; carries the iterate with the smallest gradient norm.
class InnerStepCapReached : public Error {
 public:
  InnerStepCapReached(std::string what, Vector best, double best_grad_norm)
      : Error(ErrorKind::StepCapReached, std::move(what)), best_(std::move(best)), best_norm_(best_grad_norm) {}
  const Vector& best() const noexcept { return best_; }
  double best_grad_norm() const noexcept { return best_norm_; }

 private:
  Vector best_;
  double best_norm_;
};

// steps GD updates w <- w - gamma grad_w f(u, w). Throws DivergenceDetected
// when |f| exceeds 1e6 * max(1, |f(w_init)|) or turns non-finite.
Vector optimize_inner(const ProblemOracles& o, const Vector& u, const Vector& w_init, std::size_t steps, double gamma);

// GD until ||grad_w f|| <= tol * (1 + ||w||).
Vector optimize_inner_to_tol(const ProblemOracles& o, const Vector& u, const Vector& w_init, double tol, double gamma,
                             std::size_t step_cap);

SolveTrace run_bilevel(const ProblemOracles& o, const BilevelConfig& config);

struct EquilibriumReport {
  double inner_residual = 0.0;  // cold: distance to the min-displacement solution; warm: ||Xi^T(u,w) - w||
  double hypergrad_norm = 0.0;  // exact hypergradient at (u, w)
  bool passed = false;
};

EquilibriumReport check_cold_equilibrium(const QuadraticBilevel& p, const Vector& u, const Vector& w, const Vector& w0,
                                         double tol);

EquilibriumReport check_warm_equilibrium(const ProblemOracles& o, const Vector& u, const Vector& w,
                                         std::size_t t_inner, double alpha, double tol);

struct Hyperplane {
  Vector x;
  double y = 0.0;
};

// w0 - (x.w0 - y)/(x.x) x; throws ZeroDirection for x = 0.
Vector kaczmarz_project(const Vector& w0, const Hyperplane& plane);

// Cyclic projections; trajectory starts with w0 and has planes.size()*sweeps + 1 entries.
std::vector<Vector> kaczmarz_cycle(const Vector& w0, const std::vector<Hyperplane>& planes, std::size_t sweeps);

// iter,outer_loss,inner_loss,hypergrad_norm,stationarity[,u_0..u_{n-1}]
CsvTable trace_table(const SolveTrace& trace, bool include_u);

}  // namespace blo
