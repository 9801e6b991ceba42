// blo_lab: run the bilevel experiments and the verification suite.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <iostream>
#include <memory>

#include "acceptance_checks.hpp"
#include "blo/csv.hpp"
#include "blo/error.hpp"
#include "blo/experiments.hpp"
#include "blo/hypergrad.hpp"
#include "blo/quad_blo.hpp"
#include "blo/solvers.hpp"

namespace {

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out;
  std::string method;
  std::string mode;
  std::string mnist_dir;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "key = value settings file")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--method", c.method, "exact | identity | neumann:K:alpha | unroll:K:alpha | damped:eps | cg:K");
  app->add_option("--mode", c.mode, "cold | warm-full | warm-partial:T");
  app->add_option("--mnist-dir", c.mnist_dir, "directory with MNIST IDX files (else BLO_LAB_MNIST_DIR)");
}

blo::Config resolve(const Common& c) {
  blo::Config cfg = c.config_path.empty() ? blo::Config{} : blo::Config::load(c.config_path);
  if (!c.method.empty()) {
    blo::parse_method(c.method);  // fail early on a malformed string
    cfg.set("methods", c.method);
  }
  if (!c.mode.empty()) {
    blo::parse_mode(c.mode);
    cfg.set("mode", c.mode);
  }
  if (!c.mnist_dir.empty()) cfg.set("mnist_dir", c.mnist_dir);
  return cfg;
}

std::filesystem::path out_dir(const Common& c, const char* name) {
  return c.out.empty() ? std::filesystem::path("results") / name : std::filesystem::path(c.out);
}

int run_sweep(const Common& c) {
  const blo::Config cfg = resolve(c);
  cfg.require_known({"problem", "methods", "modes", "mode", "inner_dim", "outer_dim", "inner_rank", "outer_rank",
                     "max_outer_iters", "inner_lr", "outer_lr", "outer_stop_tol", "inner_tol"});
  std::shared_ptr<const blo::QuadraticBilevel> p;
  const std::string path = cfg.get_string("problem", "");
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw blo::Error(blo::ErrorKind::IoError, "cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    p = std::make_shared<const blo::QuadraticBilevel>(blo::quadratic_from_document(buf.str()));
  } else {
    blo::InstanceShape shape;
    shape.inner_dim = cfg.get_uint("inner_dim", shape.inner_dim);
    shape.outer_dim = cfg.get_uint("outer_dim", shape.outer_dim);
    shape.inner_rank = cfg.get_uint("inner_rank", shape.inner_rank);
    shape.outer_rank = cfg.get_uint("outer_rank", shape.outer_rank);
    std::mt19937_64 rng(c.seed);
    p = std::make_shared<const blo::QuadraticBilevel>(blo::random_instance(shape, rng));
  }
  blo::BilevelConfig base = blo::default_quadratic_config(*p);
  base.inner_lr = cfg.get_double("inner_lr", base.inner_lr);
  base.outer_lr = cfg.get_double("outer_lr", base.outer_lr);
  base.max_outer_iters = cfg.get_uint("max_outer_iters", 2000);
  base.outer_stop_tol = cfg.get_double("outer_stop_tol", 1e-8);
  base.inner_convergence_tol = cfg.get_double("inner_tol", 1e-10);
  base.record_w = false;
  const std::string a = blo::format_double(0.5 * base.inner_lr);
  auto methods = cfg.get_strings("methods", {"exact", "neumann:1:" + a, "neumann:10:" + a, "neumann:100:" + a,
                                             "damped:0.1", "damped:1", "cg:2", "identity"});
  auto modes = cfg.get_strings("modes", {cfg.get_string("mode", "cold")});

  const auto out = out_dir(c, "sweep");
  blo::ensure_dir(out);
  blo::write_manifest(out, "sweep", cfg, c.seed);
  {
    std::ofstream doc(out / "problem.json");
    doc << blo::to_document(*p);
  }
  const blo::ProblemOracles o = blo::quadratic_oracles(p);
  blo::CsvTable summary;
  summary.label_header = "run";
  summary.header = {"final_outer_loss", "final_u_norm", "final_hypergrad_norm", "iterations", "converged"};
  for (const auto& mode_text : modes) {
    for (const auto& method_text : methods) {
      blo::BilevelConfig bc = base;
      bc.mode = blo::parse_mode(mode_text);
      bc.method = blo::parse_method(method_text);
      const std::string label = method_text + "|" + mode_text;
      try {
        const blo::SolveTrace tr = blo::run_bilevel(o, bc);
        const auto& last = tr.records.back();
        summary.labels.push_back(label);
        summary.rows.push_back({last.outer_loss, tr.final_u.norm(), last.hypergrad_norm,
                                static_cast<double>(tr.iterations),
                                tr.status == blo::SolveStatus::Converged ? 1.0 : 0.0});
        std::string file = "trace_" + label;
        for (char& ch : file)
          if (ch == ':' || ch == '|') ch = '_';
        blo::write_csv(out / (file + ".csv"), blo::trace_table(tr, true));
      } catch (const blo::Error& e) {
        std::cerr << label << ": " << e.what() << "\n";
        summary.labels.push_back(label);
        summary.rows.push_back({NAN, NAN, NAN, NAN, 0.0});
      }
    }
  }
  blo::write_csv(out / "sweep_summary.csv", summary);
  blo::write_csv(std::cout, summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bilevel optimization lab: warm/cold-start experiments and checks"};
  app.require_subcommand(1);
  Common c;
  bool quick = false;
  std::vector<int> only;

  auto* anti = app.add_subcommand("antidistill", "Fourier-basis anti-distillation sweep and the 2-point toy");
  auto* kacz = app.add_subcommand("kaczmarz", "warm/partial/cold trajectories on hyperplanes");
  auto* rings = app.add_subcommand("rings", "distill concentric rings into a few learned points");
  auto* mnist = app.add_subcommand("mnist", "distill MNIST into one learned image with soft labels");
  auto* sweep = app.add_subcommand("sweep", "method x mode grid on a quadratic problem");
  auto* verify = app.add_subcommand("verify", "run the property / oracle checks (one line per check)");
  for (auto* s : {anti, kacz, rings, mnist, sweep, verify}) add_common(s, c);
  verify->add_flag("--quick", quick, "skip the rings and MNIST runs");
  verify->add_option("--only", only, "check ids to run");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*anti) {
      const auto r = blo::run_antidistill(resolve(c), c.seed, out_dir(c, "antidistill"));
      for (const auto& m : r.runs)
        std::printf("%-22s |u|^2 = %-12.6g F = %-12.4g iters = %zu\n", m.method.c_str(), m.norm_sq, m.outer_loss,
                    m.iterations);
      std::printf("%-22s |u|^2 = %.6g\n", "min-norm oracle", r.oracle_u.squared_norm());
    } else if (*kacz) {
      const auto r = blo::run_kaczmarz_demo(resolve(c), c.seed, out_dir(c, "kaczmarz"));
      const auto& w = r.full_warm.back();
      std::printf("full-warm end point:");
      for (double v : w) std::printf(" %.9g", v);
      std::printf("\n");
    } else if (*rings) {
      const auto r = blo::run_rings_distill(resolve(c), c.seed, out_dir(c, "rings"));
      std::printf("%s: warm accuracy %.4f, retrained accuracy %.4f, retrained fits learned points: %s\n",
                  r.variant.c_str(), r.warm_accuracy, r.retrain_accuracy, r.retrain_fits_synthetic ? "yes" : "no");
    } else if (*mnist) {
      const auto r = blo::run_mnist_distill(resolve(c), c.seed, out_dir(c, "mnist"));
      std::printf("accuracy on %zu-example subset / all %zu examples\n", r.subset, r.full);
      std::printf("warm          %.4f / %.4f\n", r.warm_accuracy, r.warm_accuracy_full);
      std::printf("cold          %.4f / %.4f\n", r.cold_accuracy, r.cold_accuracy_full);
      std::printf("warm+retrain  %.4f / %.4f\n", r.retrain_accuracy, r.retrain_accuracy_full);
    } else if (*sweep) {
      return run_sweep(c);
    } else if (*verify) {
      blo::acceptance::Options opt;
      opt.mnist_dir = c.mnist_dir;
      opt.skip_long = quick;
      return blo::acceptance::run_and_print(only, opt, std::cout) ? 0 : 1;
    }
  } catch (const blo::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
