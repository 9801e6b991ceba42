#include <cmath>
#include <numbers>

#include "blo/csv.hpp"
#include "blo/error.hpp"
#include "blo/experiments.hpp"
#include "blo/hypergrad.hpp"
#include "blo/svg.hpp"

namespace blo {

Vector featurize(const FourierBasis& basis, double x) {
  if (basis.l == 0) throw Error(ErrorKind::InvalidConfig, "Fourier basis needs at least one harmonic");
  const std::size_t l = basis.l;
  Vector f(2 * l + 1);
  f[0] = 1.0;
  for (std::size_t k = 1; k <= l; ++k) {
    const double a = basis.amplitude == Amplitude::Exponential ? std::ldexp(1.0, static_cast<int>(l - k))
                                                               : 1.0 / static_cast<double>(k);
    f[k] = a * std::cos(static_cast<double>(k) * x);
    f[l + k] = a * std::sin(static_cast<double>(k) * x);
  }
  return f;
}

Vector featurize_affine(double x) { return Vector{1.0, x}; }

QuadraticBilevel build_antidistill_problem(const FeatureMap& phi, const std::vector<double>& synth_x,
                                           const std::vector<RegressionPoint>& original) {
  if (synth_x.empty() || original.empty())
    throw Error(ErrorKind::InvalidConfig, "need at least one synthetic and one original point");
  const std::size_t nw = phi(synth_x.front()).size();
  const std::size_t nu = synth_x.size();
  DenseMatrix ph(nu, nw), po(original.size(), nw);
  for (std::size_t i = 0; i < nu; ++i) {
    const Vector r = phi(synth_x[i]);
    for (std::size_t j = 0; j < nw; ++j) ph(i, j) = r[j];
  }
  Vector y(original.size());
  for (std::size_t i = 0; i < original.size(); ++i) {
    const Vector r = phi(original[i].x);
    for (std::size_t j = 0; j < nw; ++j) po(i, j) = r[j];
    y[i] = original[i].y;
  }
  QuadraticBilevel::Terms t;
  const DenseMatrix pht = ph.transpose(), pot = po.transpose();
  t.a = pht * ph;
  t.b = -1.0 * pht;
  t.c = DenseMatrix::identity(nu);
  t.d = Vector(nw);
  t.e = Vector(nu);
  t.p = pot * po;
  t.f = -1.0 * (pot * y);
  t.h_scalar = 0.5 * y.squared_norm();
  return QuadraticBilevel(std::move(t));
}

QuadraticBilevel build_antidistill_problem(const FourierBasis& basis, const std::vector<double>& synth_x,
                                           const std::vector<RegressionPoint>& original) {
  return build_antidistill_problem([&](double x) { return featurize(basis, x); }, synth_x, original);
}

namespace {

double method_param(const HypergradMethod& m) {
  return std::visit(
      [](const auto& v) -> double {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, method::Neumann> || std::is_same_v<T, method::Unroll> ||
                      std::is_same_v<T, method::TruncatedCG>)
          return static_cast<double>(v.k);
        else if constexpr (std::is_same_v<T, method::Damped>)
          return v.eps;
        else
          return 0.0;
      },
      m);
}

std::string file_safe(std::string s) {
  for (char& c : s)
    if (c == ':') c = '_';
  return s;
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> xs(n);
  for (std::size_t i = 0; i < n; ++i) xs[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (n - 1);
  return xs;
}

struct SweepSetup {
  std::shared_ptr<const QuadraticBilevel> problem;
  BilevelConfig base;
};

MethodRun run_one(const SweepSetup& s, const HypergradMethod& m, bool keep_trace, SolveTrace* trace_out) {
  BilevelConfig c = s.base;
  c.method = m;
  c.record_w = false;
  const auto p = s.problem;
  c.full_inner_solver = [p](const Vector& u, const Vector& from) { return inner_min_displacement(*p, u, from); };
  SolveTrace tr = run_bilevel(quadratic_oracles(p), c);
  MethodRun r;
  r.method = to_string(m);
  r.param = method_param(m);
  r.u = tr.final_u;
  r.w = tr.final_w;
  r.norm_sq = tr.final_u.squared_norm();
  r.outer_loss = p->outer_loss(tr.final_w);
  r.iterations = tr.iterations;
  r.converged = tr.status == SolveStatus::Converged;
  if (keep_trace && trace_out) *trace_out = std::move(tr);
  return r;
}

CsvTable summary_table(const std::vector<MethodRun>& runs) {
  CsvTable t;
  t.label_header = "method";
  t.header = {"param", "norm_sq", "outer_loss", "iterations", "converged"};
  const std::size_t nu = runs.empty() ? 0 : runs.front().u.size();
  for (std::size_t i = 0; i < nu; ++i) t.header.push_back("u_" + std::to_string(i));
  for (const auto& r : runs) {
    t.labels.push_back(r.method);
    std::vector<double> row{r.param, r.norm_sq, r.outer_loss, static_cast<double>(r.iterations),
                            r.converged ? 1.0 : 0.0};
    row.insert(row.end(), r.u.begin(), r.u.end());
    t.rows.push_back(std::move(row));
  }
  return t;
}

const char* family(const std::string& method) {
  for (const char* f : {"neumann", "unroll", "damped", "cg", "exact", "identity"})
    if (method.rfind(f, 0) == 0) return f;
  return "other";
}

}  // namespace

AntidistillResult run_antidistill(const Config& cfg, std::uint64_t seed, const std::filesystem::path& out_dir) {
  cfg.require_known({"basis", "harmonics", "synth_count", "synth_min", "synth_max", "original_x", "original_y",
                     "inner_lr", "outer_lr", "max_outer_iters", "outer_stop_tol", "neumann_ks", "damped_eps",
                     "methods", "mode", "curve_points", "toy", "toy_inner_lr", "toy_outer_lr", "toy_iters",
                     "toy_neumann_ks"});
  FourierBasis basis;
  const std::string amp = cfg.get_string("basis", "exponential");
  if (amp == "exponential")
    basis.amplitude = Amplitude::Exponential;
  else if (amp == "harmonic")
    basis.amplitude = Amplitude::Harmonic;
  else
    throw Error(ErrorKind::InvalidConfig, "basis must be exponential or harmonic");
  basis.l = cfg.get_uint("harmonics", 10);
  const auto synth_x = linspace(cfg.get_double("synth_min", -2.0), cfg.get_double("synth_max", 2.0),
                                cfg.get_uint("synth_count", 13));
  const auto ox = cfg.get_doubles("original_x", {0.0});
  const auto oy = cfg.get_doubles("original_y", {2.0});
  if (ox.size() != oy.size()) throw Error(ErrorKind::InvalidConfig, "original_x and original_y differ in length");
  std::vector<RegressionPoint> original;
  for (std::size_t i = 0; i < ox.size(); ++i) original.push_back({ox[i], oy[i]});

  const double alpha = cfg.get_double("inner_lr", basis.amplitude == Amplitude::Exponential ? 1e-7 : 1e-3);
  SweepSetup setup;
  setup.problem = std::make_shared<const QuadraticBilevel>(build_antidistill_problem(basis, synth_x, original));
  setup.base.mode = parse_mode(cfg.get_string("mode", "cold"));
  setup.base.inner_lr = alpha;
  setup.base.outer_lr = cfg.get_double("outer_lr", 1e-2);
  setup.base.max_outer_iters = cfg.get_uint("max_outer_iters", 200000);
  setup.base.outer_stop_tol = cfg.get_double("outer_stop_tol", 1e-9);
  setup.base.u0 = Vector(synth_x.size());
  setup.base.w0 = Vector(basis.dim());

  std::vector<std::string> defaults;
  for (double k : cfg.get_doubles("neumann_ks", {1, 10, 100, 1000}))
    defaults.push_back(to_string(HypergradMethod{method::Neumann{static_cast<std::size_t>(k), alpha}}));
  defaults.push_back("exact");
  for (double e : cfg.get_doubles("damped_eps", {1e7, 1e6, 1e5, 1e4}))
    defaults.push_back(to_string(HypergradMethod{method::Damped{e}}));

  AntidistillResult res;
  res.oracle_u = cold_start_outer_oracle(*setup.problem, setup.base.u0);
  for (const auto& text : cfg.get_strings("methods", defaults))
    res.runs.push_back(run_one(setup, parse_method(text), false, nullptr));

  // Two-point toy: y-values of synthetic points at x = 0 and 2, original point (1, 1).
  const bool toy = cfg.get_uint("toy", 1) != 0;
  std::vector<SolveTrace> toy_traces;
  if (toy) {
    SweepSetup ts;
    ts.problem = std::make_shared<const QuadraticBilevel>(
        build_antidistill_problem(featurize_affine, {0.0, 2.0}, {{1.0, 1.0}}));
    ts.base.mode = mode::ColdStart{};
    const double toy_alpha = cfg.get_double("toy_inner_lr", 0.1);
    ts.base.inner_lr = toy_alpha;
    ts.base.outer_lr = cfg.get_double("toy_outer_lr", 0.1);
    ts.base.max_outer_iters = cfg.get_uint("toy_iters", 2000);
    ts.base.outer_stop_tol = 1e-12;
    ts.base.u0 = Vector(2);
    ts.base.w0 = Vector(2);
    res.toy_oracle_u = cold_start_outer_oracle(*ts.problem, ts.base.u0);
    std::vector<HypergradMethod> toy_methods;
    for (double k : cfg.get_doubles("toy_neumann_ks", {0, 1, 2, 5}))
      toy_methods.push_back(method::Neumann{static_cast<std::size_t>(k), toy_alpha});
    toy_methods.push_back(method::Exact{});
    for (const auto& m : toy_methods) {
      SolveTrace tr;
      res.toy_runs.push_back(run_one(ts, m, true, &tr));
      toy_traces.push_back(std::move(tr));
    }
  }

  const std::size_t curve_n = cfg.get_uint("curve_points", 401);
  if (out_dir.empty()) return res;
  ensure_dir(out_dir);
  write_manifest(out_dir, "antidistill", cfg, seed);
  write_csv(out_dir / "antidistill_summary.csv", summary_table(res.runs));
  for (const char* fam : {"neumann", "unroll", "damped", "cg", "exact", "identity"}) {
    std::vector<MethodRun> sub;
    for (const auto& r : res.runs)
      if (std::string(family(r.method)) == fam) sub.push_back(r);
    if (!sub.empty()) write_csv(out_dir / ("antidistill_" + std::string(fam) + ".csv"), summary_table(sub));
  }

  // Fitted curves on [-pi, pi] plus the synthetic points of every run.
  const auto xs = linspace(-std::numbers::pi, std::numbers::pi, curve_n);
  CsvTable curves;
  curves.header = {"x"};
  for (const auto& r : res.runs) curves.header.push_back(r.method);
  double ymin = -1.0, ymax = 3.0;
  for (double x : xs) {
    const Vector f = featurize(basis, x);
    std::vector<double> row{x};
    for (const auto& r : res.runs) row.push_back(f.dot(r.w));
    curves.rows.push_back(std::move(row));
  }
  write_csv(out_dir / "antidistill_curves.csv", curves);
  for (const auto& r : res.runs)
    for (double v : r.u) ymin = std::min(ymin, v), ymax = std::max(ymax, v);
  const double pad = 0.05 * (ymax - ymin);
  SvgScene svg(-std::numbers::pi, std::numbers::pi, ymin - pad, ymax + pad);
  for (std::size_t j = 0; j < res.runs.size(); ++j) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& row : curves.rows) pts.emplace_back(row[0], row[j + 1]);
    svg.polyline(pts, palette(j));
    for (std::size_t i = 0; i < synth_x.size(); ++i) svg.circle(synth_x[i], res.runs[j].u[i], 3.0, palette(j));
    svg.text(-std::numbers::pi + 0.1, ymax + pad - (j + 1) * 0.06 * (ymax - ymin), res.runs[j].method);
  }
  for (const auto& o : original) svg.circle(o.x, o.y, 6.0, "none", "#2ca02c");
  svg.write(out_dir / "antidistill.svg");

  if (toy) {
    write_csv(out_dir / "toy_summary.csv", summary_table(res.toy_runs));
    for (std::size_t j = 0; j < res.toy_runs.size(); ++j)
      write_csv(out_dir / ("toy_trace_" + file_safe(res.toy_runs[j].method) + ".csv"), trace_table(toy_traces[j], true));
    // Outer solution set: oracle point plus the null directions of the reduced outer Hessian.
    const auto toy_p = build_antidistill_problem(featurize_affine, {0.0, 2.0}, {{1.0, 1.0}});
    const ReducedOuterQuadratic red = reduce_outer(toy_p);
    const EigenDecomposition ez = sym_eig(red.z);
    const double zmax = ez.max_eigenvalue();
    CsvTable line;
    line.header = {"t", "u_0", "u_1"};
    for (std::size_t k = 0; k < ez.eigenvalues.size(); ++k) {
      if (ez.eigenvalues[k] > kDefaultRankTol * zmax) continue;
      const Vector dir = ez.eigenvectors.col_vector(k);
      for (double t : linspace(-3.0, 3.0, 61)) {
        const Vector p = res.toy_oracle_u + t * dir;
        line.rows.push_back({t, p[0], p[1]});
      }
      break;
    }
    write_csv(out_dir / "toy_solution_line.csv", line);
    SvgScene tsvg(-0.5, 2.5, -0.5, 2.5);
    if (!line.rows.empty()) tsvg.line(line.rows.front()[1], line.rows.front()[2], line.rows.back()[1],
                                      line.rows.back()[2], "#999999", 2.0);
    for (std::size_t j = 0; j < res.toy_runs.size(); ++j) {
      std::vector<std::pair<double, double>> pts;
      for (const auto& r : toy_traces[j].records) pts.emplace_back(r.u[0], r.u[1]);
      tsvg.polyline(pts, palette(j));
      tsvg.text(-0.45, 2.4 - 0.12 * j, res.toy_runs[j].method);
    }
    tsvg.write(out_dir / "toy.svg");
  }
  return res;
}

}  // namespace blo
