#include "acceptance_checks.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>

#include "blo/error.hpp"
#include "blo/experiments.hpp"
#include "blo/hypergrad.hpp"
#include "blo/quad_blo.hpp"
#include "blo/solvers.hpp"
#include "mlp_oracle_suite.hpp"
#include "oracles.hpp"

namespace blo::acceptance {

namespace {

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::shared_ptr<const QuadraticBilevel> random_shared(std::mt19937_64& rng, InstanceShape s) {
  return std::make_shared<const QuadraticBilevel>(random_instance(s, rng));
}

struct Result {
  bool passed = false;
  std::string detail;
  bool skipped = false;
};

// 1. Inner GD to tolerance vs the closed-form min-displacement solution.
Result lemma_min_displacement() {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<std::size_t> dim(2, 20);
    InstanceShape s;
    s.inner_dim = dim(rng);
    s.outer_dim = dim(rng);
    s.inner_rank = std::uniform_int_distribution<std::size_t>(1, s.inner_dim - 1)(rng);
    s.outer_rank = std::min(s.outer_rank, s.inner_dim);
    const auto p = random_instance(s, rng);
    const Vector u = testing::random_vector(rng, p.outer_dim());
    const Vector w0 = testing::random_vector(rng, p.inner_dim());
    const double lmax = testing::power_lambda_max(p.a());
    const Vector gd = testing::gd_quadratic(p.a(), p.inner_linear(u), w0, 1.0 / lmax, 1e-11, 5000000);
    worst = std::max(worst, (gd - inner_min_displacement(p, u, w0)).norm() / (1.0 + w0.norm()));
  }
  return {worst <= 1e-5, "max |gd - closed form| / (1+|w0|) = " + fmt("%.3g", worst) + " (limit 1e-5)"};
}

// 2. Cold start + exact hypergradient lands on the min-displacement outer solution.
Result theorem_min_norm_outer() {
  std::mt19937_64 rng(102);
  double worst = 0.0;
  int unconverged = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_shared(rng, {6, 8, 4, 3, 0.0});
    BilevelConfig c = default_quadratic_config(*p);
    c.u0 = testing::random_vector(rng, 8);
    c.max_outer_iters = 20000;
    c.outer_stop_tol = 1e-10;
    c.record_w = false;
    const auto trace = run_bilevel(quadratic_oracles(p), c);
    if (trace.status != SolveStatus::Converged) ++unconverged;
    worst = std::max(worst, (trace.final_u - cold_start_outer_oracle(*p, c.u0)).norm() / (1.0 + c.u0.norm()));
  }
  return {worst <= 1e-4 && unconverged == 0, "max |u - oracle| / (1+|u0|) = " + fmt("%.3g", worst) +
                                                  " (limit 1e-4), unconverged runs " + std::to_string(unconverged)};
}

// 3. Unrolling from a stationary point equals the truncated Neumann series.
Result unroll_equals_neumann() {
  std::mt19937_64 rng(103);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_shared(rng, {10, 6, 6, 4, 0.0});
    const auto o = quadratic_oracles(p);
    const Vector u = testing::random_vector(rng, 6);
    const Vector w = inner_min_displacement(*p, u, testing::random_vector(rng, 10));
    const double lmax = p->a_eig().max_eigenvalue();
    for (double alpha : {0.3 / lmax, 1.0 / lmax})
      for (std::size_t k : {0u, 1u, 3u, 7u, 20u}) {
        const Vector neumann = response_vjp(o, u, w, method::Neumann{k, alpha}).grad;
        worst = std::max(worst, testing::max_abs_diff(unrolled_hypergrad_quadratic(*p, u, w, alpha, k), neumann));
      }
  }
  return {worst <= 1e-12, "max component gap = " + fmt("%.3g", worst) + " (limit 1e-12)"};
}

// 4. Neumann spectral map vs the damped map 1/(lambda + 1/(alpha K)).
Result spectral_band() {
  double worst = 0.0, at_s = 0.0;
  std::size_t at_k = 0;
  for (std::size_t k : {10u, 100u, 1000u})
    for (int i = 0; i <= 40; ++i) {
      const double s = 0.1 * std::pow(100.0, i / 40.0);  // alpha * lambda * K in [0.1, 10]
      const double alpha = 1.0, lambda = s / (alpha * static_cast<double>(k));
      const double damped = 1.0 / (lambda + 1.0 / (alpha * static_cast<double>(k)));
      const double rel = std::abs(neumann_eigen_map(lambda, alpha, k) - damped) / damped;
      if (rel > worst) worst = rel, at_s = s, at_k = k;
    }
  return {worst <= 0.15, "max relative gap = " + fmt("%.3f", worst) + " at alpha*lambda*K = " + fmt("%.3g", at_s) +
                             ", K = " + std::to_string(at_k) + " (band 0.15)"};
}

// 5. Cold and full warm start give the same outer trajectory when the inner problem is strongly convex.
Result cold_equals_full_warm() {
  std::mt19937_64 rng(105);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_shared(rng, {6, 4, 6, 3, 0.2});
    const auto o = quadratic_oracles(p);
    BilevelConfig c = default_quadratic_config(*p);
    c.u0 = testing::random_vector(rng, 4);
    c.w0 = testing::random_vector(rng, 6);
    c.max_outer_iters = 40;
    c.inner_convergence_tol = 1e-14;
    const auto cold = run_bilevel(o, c);
    c.mode = mode::WarmStartFull{};
    const auto warm = run_bilevel(o, c);
    if (cold.records.size() != warm.records.size()) return {false, "trajectory lengths differ"};
    for (std::size_t i = 0; i < cold.records.size(); ++i)
      worst = std::max(worst, testing::max_abs_diff(cold.records[i].u, warm.records[i].u));
  }
  return {worst <= 1e-8, "max per-iterate |u_cold - u_warm| = " + fmt("%.3g", worst) + " (limit 1e-8)"};
}

// 6. Converged cold runs are cold equilibria; T=1 warm equilibria pass the T=50 check.
Result equilibria() {
  std::mt19937_64 rng(106);
  int cold_fail = 0, warm_fail = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = random_shared(rng, {6, 8, 4, 3, 0.0});
    BilevelConfig c = default_quadratic_config(*p);
    c.u0 = testing::random_vector(rng, 8);
    c.max_outer_iters = 20000;
    c.outer_stop_tol = 1e-10;
    c.record_w = false;
    const auto trace = run_bilevel(quadratic_oracles(p), c);
    if (trace.status != SolveStatus::Converged ||
        !check_cold_equilibrium(*p, trace.final_u, trace.final_w, c.w0, 1e-4).passed)
      ++cold_fail;
  }
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = random_shared(rng, {6, 5, 4, 3, 0.0});
    const auto o = quadratic_oracles(p);
    BilevelConfig c = default_quadratic_config(*p);
    c.mode = mode::WarmStartPartial{1};
    c.outer_lr *= 0.5;
    c.max_outer_iters = 200000;
    c.outer_stop_tol = 1e-10;
    c.record_w = false;
    const auto trace = run_bilevel(o, c);
    // Construct the T=1 fixpoint at the final u, then ask the longer inner run.
    const Vector w = optimize_inner_to_tol(o, trace.final_u, trace.final_w, 1e-12, c.inner_lr, 1000000);
    if (trace.status != SolveStatus::Converged ||
        !check_warm_equilibrium(o, trace.final_u, w, 1, c.inner_lr, 1e-6).passed ||
        !check_warm_equilibrium(o, trace.final_u, w, 50, c.inner_lr, 1e-6).passed)
      ++warm_fail;
  }
  return {cold_fail == 0 && warm_fail == 0, "cold failures " + std::to_string(cold_fail) + "/10, warm failures " +
                                                std::to_string(warm_fail) + "/5"};
}

// 7. Anti-distillation: better hypergradients give smaller synthetic labels.
Result antidistill_direction() {
  Config cfg;
  cfg.set("toy", "0");
  const auto r = run_antidistill(cfg, 0, {});
  std::vector<double> neumann, damped;
  double exact = NAN;
  std::string detail;
  for (const auto& m : r.runs) {
    if (m.method.rfind("neumann", 0) == 0) neumann.push_back(m.norm_sq);
    if (m.method.rfind("damped", 0) == 0) damped.push_back(m.norm_sq);
    if (m.method == "exact") exact = m.norm_sq;
    detail += m.method + "=" + fmt("%.4g", m.norm_sq) + " ";
  }
  bool ok = neumann.size() == 4 && damped.size() == 4 && std::isfinite(exact);
  for (std::size_t i = 1; ok && i < 4; ++i) ok = neumann[i] < neumann[i - 1] && damped[i] < damped[i - 1];
  ok = ok && exact < neumann.back() && exact < damped.back();
  for (const auto& m : r.runs) ok = ok && m.converged;
  ok = ok && std::abs(exact - r.oracle_u.squared_norm()) <= 1e-6 * (1.0 + exact);
  return {ok, detail + "(min-norm oracle " + fmt("%.4g", r.oracle_u.squared_norm()) + ")"};
}

// 8. Cyclic projections: two lines converge to their intersection; four lines contract toward the limit cycle.
Result kaczmarz() {
  Config two;
  const double r = 1.0 / std::sqrt(2.0);
  two.set("normals", "1, 0, " + format_double(r) + ", " + format_double(r));
  two.set("offsets", "1, 0.5");
  two.set("sweeps", "200");
  const auto a = run_kaczmarz_demo(two, 0, {});
  const DenseMatrix m{{1.0, 0.0}, {r, r}};
  const Vector x = testing::gauss_solve(m, Vector{1.0, 0.5});
  const double gap = (a.full_warm.back() - x).norm();

  Config four;
  four.set("sweeps", "400");
  const auto b = run_kaczmarz_demo(four, 0, {});
  const std::size_t n = b.planes.size();
  const Vector limit = b.full_warm.back();
  double worst_rise = 0.0;
  for (std::size_t s = 1; s + 1 < 60; ++s) {
    const double d0 = (b.full_warm[(s - 1) * n] - limit).norm();
    const double d1 = (b.full_warm[s * n] - limit).norm();
    worst_rise = std::max(worst_rise, d1 - d0);
  }
  // Cold projections land on their own planes.
  double off_plane = 0.0;
  for (std::size_t i = 1; i < b.cold.size(); ++i) {
    const auto& p = b.planes[(i - 1) % n];
    off_plane = std::max(off_plane, std::abs(p.x.dot(b.cold[i]) - p.y));
  }
  return {gap <= 1e-6 && worst_rise <= 1e-12 && off_plane <= 1e-12,
          "two-line gap " + fmt("%.3g", gap) + " (limit 1e-6), max per-sweep distance increase " +
              fmt("%.3g", worst_rise) + ", cold off-plane " + fmt("%.3g", off_plane)};
}

// 9. Rings: warm start fits the data; retraining on the final points does not.
Result rings(const Options& opt) {
  if (opt.skip_long) return {true, "skipped (--quick)", true};
  Config cfg;
  cfg.set("boundary_grid", "0");
  const auto r = run_rings_distill(cfg, 0, {});
  return {r.warm_accuracy >= 0.9 && r.retrain_accuracy <= 0.7,
          "warm accuracy " + fmt("%.4f", r.warm_accuracy) + " (need >= 0.9), retrained " +
              fmt("%.4f", r.retrain_accuracy) + " (need <= 0.7)"};
}

std::string mnist_dir(const Options& opt) {
  if (!opt.mnist_dir.empty()) return opt.mnist_dir;
  if (const char* env = std::getenv("BLO_LAB_MNIST_DIR"); env && *env) return env;
#ifdef BLO_BUNDLED_MNIST_DIR
  return BLO_BUNDLED_MNIST_DIR;
#else
  return {};
#endif
}

// 10. MNIST, one learned sample: warm start beats cold start by 20 points; retraining collapses.
Result mnist(const Options& opt) {
  if (opt.skip_long) return {true, "skipped (--quick)", true};
  Config cfg;
  cfg.set("mnist_dir", mnist_dir(opt));
  cfg.set("subset", "2000");
  const auto r = run_mnist_distill(cfg, 0, {});
  const double gap = r.warm_accuracy - r.cold_accuracy;
  return {gap >= 0.20 && r.retrain_accuracy <= 0.25 && r.max_label_sum_error <= 1e-12,
          "2000-example subset: warm " + fmt("%.4f", r.warm_accuracy) + ", cold " + fmt("%.4f", r.cold_accuracy) +
              " (gap " + fmt("%.4f", gap) + ", need >= 0.20), warm+retrain " + fmt("%.4f", r.retrain_accuracy) +
              " (need <= 0.25); all " + std::to_string(r.full) + " examples: warm " +
              fmt("%.4f", r.warm_accuracy_full) + ", cold " + fmt("%.4f", r.cold_accuracy_full) + ", retrain " +
              fmt("%.4f", r.retrain_accuracy_full)};
}

// 11. MLP gradients vs finite differences.
Result mlp_oracles() {
  const auto e = testing::mlp_oracle_suite(50);
  const bool ok = e.inner <= testing::kInnerGradTol && e.outer <= testing::kOuterGradTol &&
                  e.mixed <= testing::kMixedTol && e.unrolled <= testing::kUnrolledTol;
  return {ok, "worst relative errors over 50 seeds: inner " + fmt("%.2g", e.inner) + ", outer " +
                  fmt("%.2g", e.outer) + ", mixed " + fmt("%.2g", e.mixed) + ", unrolled " + fmt("%.2g", e.unrolled)};
}

// 12. Proximal response Jacobian reproduces the damped hypergradient.
Result proximal_equals_damped() {
  std::mt19937_64 rng(112);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_shared(rng, {9, 5, 5, 4, 0.0});
    const auto o = quadratic_oracles(p);
    const Vector u = testing::random_vector(rng, 5);
    const Vector w = inner_min_displacement(*p, u, Vector(9));
    for (double eps : {1e-3, 0.1, 10.0}) {
      const Vector via_jac = proximal_response_jacobian(o, u, w, eps).transpose_times(p->outer_grad_w(w));
      const Vector damped = response_vjp(o, u, w, method::Damped{eps}).grad;
      worst = std::max(worst, testing::max_abs_diff(via_jac, damped) / std::max(1.0, damped.max_abs()));
    }
  }
  return {worst <= 1e-12, "max gap / max(1, |g|) = " + fmt("%.3g", worst) + " (limit 1e-12)"};
}

struct Entry {
  int id;
  const char* name;
  std::function<Result(const Options&)> fn;
};

const std::vector<Entry>& entries() {
  static const std::vector<Entry> e = {
      {1, "inner GD reaches the min-displacement solution", [](const Options&) { return lemma_min_displacement(); }},
      {2, "cold start + exact hypergradient reaches the min-norm outer solution",
       [](const Options&) { return theorem_min_norm_outer(); }},
      {3, "unroll from stationary point equals truncated Neumann", [](const Options&) { return unroll_equals_neumann(); }},
      {4, "Neumann spectral map within 15% of 1/(lambda + 1/(alpha K))", [](const Options&) { return spectral_band(); }},
      {5, "cold and full warm start trajectories coincide", [](const Options&) { return cold_equals_full_warm(); }},
      {6, "cold / warm equilibrium checks", [](const Options&) { return equilibria(); }},
      {7, "anti-distillation norm ordering", [](const Options&) { return antidistill_direction(); }},
      {8, "Kaczmarz cyclic projection", [](const Options&) { return kaczmarz(); }},
      {9, "rings distillation warm vs retrain", rings},
      {10, "MNIST one-sample distillation warm vs cold", mnist},
      {11, "MLP gradient oracle suite", [](const Options&) { return mlp_oracles(); }},
      {12, "proximal Jacobian equals damped hypergradient", [](const Options&) { return proximal_equals_damped(); }},
  };
  return e;
}

}  // namespace

std::vector<int> criterion_ids() {
  std::vector<int> ids;
  for (const auto& e : entries()) ids.push_back(e.id);
  return ids;
}

Outcome run_criterion(int id, const Options& opt) {
  for (const auto& e : entries()) {
    if (e.id != id) continue;
    Outcome o;
    o.id = id;
    o.name = e.name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const Result r = e.fn(opt);
      o.passed = r.passed;
      o.skipped = r.skipped;
      o.detail = r.detail;
    } catch (const std::exception& ex) {
      o.passed = false;
      o.detail = std::string("threw: ") + ex.what();
    }
    o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return o;
  }
  throw Error(ErrorKind::InvalidConfig, "no check with id " + std::to_string(id));
}

std::string format_outcome(const Outcome& o) {
  std::ostringstream s;
  s << (o.skipped ? "SKIP" : o.passed ? "PASS" : "FAIL") << " [" << o.id << "] " << o.name << ": " << o.detail << " ("
    << fmt("%.1f", o.seconds) << " s)";
  return s.str();
}

bool run_and_print(const std::vector<int>& ids, const Options& opt, std::ostream& out) {
  bool ok = true;
  for (int id : ids.empty() ? criterion_ids() : ids) {
    const Outcome o = run_criterion(id, opt);
    out << format_outcome(o) << std::endl;
    ok = ok && (o.passed || o.skipped);
  }
  return ok;
}

}  // namespace blo::acceptance
