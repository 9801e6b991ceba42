#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "blo/csv.hpp"
#include "blo/error.hpp"
#include "blo/experiments.hpp"
#include "blo/idx.hpp"
#include "blo/svg.hpp"

namespace blo {

namespace {

constexpr auto kCE = LossKind::SoftmaxCrossEntropy;

MlpParams train_from(const MlpSpec& spec, MlpParams p, const SyntheticDataset& d, double lr, std::size_t steps) {
  Vector w = p.flatten();
  for (std::size_t s = 0; s < steps; ++s) w.axpy(-lr, inner_loss_and_grad(spec, MlpParams::unflatten(spec, w), d, kCE).second);
  if (!w.all_finite()) throw Error(ErrorKind::DivergenceDetected, "MNIST inner training diverged");
  return MlpParams::unflatten(spec, w);
}

Vector softmax_of(const Vector& logits) {
  Vector p(logits.size());
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] = std::exp(logits[i] - m));
  p *= 1.0 / s;
  return p;
}

void write_canvas(const std::filesystem::path& path, const Vector& image, std::size_t side) {
  double lo = image[0], hi = image[0];
  for (double v : image) lo = std::min(lo, v), hi = std::max(hi, v);
  const double span = hi > lo ? hi - lo : 1.0;
  SvgScene svg(0.0, static_cast<double>(side), 0.0, static_cast<double>(side), 280, 280);
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) {
      const int g = static_cast<int>(std::lround(255.0 * (image[r * side + c] - lo) / span));
      char hex[8];
      std::snprintf(hex, sizeof hex, "#%02x%02x%02x", g, g, g);
      svg.rect(static_cast<double>(c), static_cast<double>(side - 1 - r), 1.0, 1.0, hex);
    }
  svg.write(path);
}

struct Logger {
  CsvTable table;
  double max_sum_err = 0.0;
  Logger() {
    table.header = {"iter", "outer_loss", "accuracy_subset", "accuracy_full"};
    for (int c = 0; c < 10; ++c) table.header.push_back("p_" + std::to_string(c));
  }
  void log(std::size_t t, double loss, double acc, double acc_full, const Vector& logits) {
    const Vector p = softmax_of(logits);
    double s = 0.0;
    for (double v : p) s += v;
    max_sum_err = std::max(max_sum_err, std::abs(s - 1.0));
    std::vector<double> row{static_cast<double>(t), loss, acc, acc_full};
    row.insert(row.end(), p.begin(), p.end());
    table.rows.push_back(std::move(row));
  }
};

}  // namespace

MnistResult run_mnist_distill(const Config& cfg, std::uint64_t seed, const std::filesystem::path& out_dir) {
  cfg.require_known({"mnist_dir", "subset", "inner_lr", "outer_lr", "iters", "warm_t", "warm_unroll_k",
                     "cold_inner_steps", "cold_iters", "cold_neumann_k", "retrain_steps", "init_scale",
                     "eval_every"});
  std::string dir = cfg.get_string("mnist_dir", "");
  if (dir.empty()) {
    const char* env = std::getenv("BLO_LAB_MNIST_DIR");
    if (!env || !*env) throw Error(ErrorKind::InvalidConfig, "set mnist_dir (--mnist-dir) or BLO_LAB_MNIST_DIR");
    dir = env;
  }
  const OriginalData full = load_mnist(dir);
  const std::size_t subset = std::min<std::size_t>(cfg.get_uint("subset", 10000), full.size());
  if (subset == 0) throw Error(ErrorKind::InvalidConfig, "subset must be positive");
  const OriginalData data = full.slice(0, subset);
  const std::size_t px = full.x.cols();
  const std::size_t side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(px))));

  const double inner_lr = cfg.get_double("inner_lr", 0.1);
  const double outer_lr = cfg.get_double("outer_lr", 0.01);
  const std::size_t iters = cfg.get_uint("iters", 5000);
  const std::size_t warm_t = std::max<std::uint64_t>(1, cfg.get_uint("warm_t", 1));
  const std::size_t warm_k = std::max<std::uint64_t>(1, cfg.get_uint("warm_unroll_k", 1));
  const std::size_t cold_steps = cfg.get_uint("cold_inner_steps", 2000);
  const std::size_t cold_iters = cfg.get_uint("cold_iters", 500);
  const std::size_t cold_k = cfg.get_uint("cold_neumann_k", 20);
  const std::size_t retrain_steps = cfg.get_uint("retrain_steps", cold_steps);
  const double init_scale = cfg.get_double("init_scale", 0.1);
  const std::size_t eval_every = std::max<std::uint64_t>(1, cfg.get_uint("eval_every", 100));

  const MlpSpec spec({px, 10});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, init_scale);
  Vector image(px);
  for (auto& v : image) v = unif(rng);
  const SyntheticDataset synth0 = SyntheticDataset::with_learnable_inputs({image}, {PointLabel::soft(Vector(10))});
  const MlpParams w0 = MlpParams::zeros(spec);
  auto logits_of = [&](const Vector& u) { return u.segment(px, 10); };

  MnistResult res;
  res.subset = subset;
  res.full = full.size();

  // Warm start: T inner steps per outer step, hypergradient through warm_k unrolled steps.
  Logger warm_log;
  Vector u = synth0.outer_params();
  {
    MlpParams w = w0;
    Adam adam(outer_lr);
    for (std::size_t t = 0; t < iters; ++t) {
      const SyntheticDataset d = synth0.with_outer(u);
      const UnrollResult h = unrolled_hypergrad_mlp(spec, w, d, data, kCE, inner_lr, warm_k);
      if (!std::isfinite(h.outer_loss) || !h.hypergrad.all_finite())
        throw Error(ErrorKind::NonFiniteLoss, "MNIST warm outer loss non-finite at iteration " + std::to_string(t));
      if (t % eval_every == 0) warm_log.log(t, h.outer_loss, accuracy(spec, w, data), accuracy(spec, w, full), logits_of(u));
      adam.step(u, h.hypergrad);
      w = train_from(spec, w, synth0.with_outer(u), inner_lr, warm_t);
    }
    res.warm_accuracy = accuracy(spec, w, data);
    res.warm_accuracy_full = accuracy(spec, w, full);
    warm_log.log(iters, outer_loss(spec, w, data), res.warm_accuracy, res.warm_accuracy_full, logits_of(u));
  }
  const Vector warm_u = u;
  const MlpParams retrained = train_from(spec, w0, synth0.with_outer(warm_u), inner_lr, retrain_steps);
  res.retrain_accuracy = accuracy(spec, retrained, data);
  res.retrain_accuracy_full = accuracy(spec, retrained, full);

  // Cold start: retrain from w0 every outer step, Neumann hypergradient at the trained weights.
  Logger cold_log;
  u = synth0.outer_params();
  {
    Adam adam(outer_lr);
    for (std::size_t t = 0; t < cold_iters; ++t) {
      const SyntheticDataset d = synth0.with_outer(u);
      const MlpParams w = train_from(spec, w0, d, inner_lr, cold_steps);
      const Vector g = neumann_hypergrad_mlp(spec, w, d, data, kCE, inner_lr, cold_k);
      if (!g.all_finite()) throw Error(ErrorKind::NonFiniteLoss, "MNIST cold hypergradient non-finite");
      if (t % eval_every == 0)
        cold_log.log(t, outer_loss(spec, w, data), accuracy(spec, w, data), accuracy(spec, w, full), logits_of(u));
      adam.step(u, g);
    }
    const MlpParams w = train_from(spec, w0, synth0.with_outer(u), inner_lr, cold_steps);
    res.cold_accuracy = accuracy(spec, w, data);
    res.cold_accuracy_full = accuracy(spec, w, full);
    cold_log.log(cold_iters, outer_loss(spec, w, data), res.cold_accuracy, res.cold_accuracy_full, logits_of(u));
  }
  res.max_label_sum_error = std::max(warm_log.max_sum_err, cold_log.max_sum_err);

  if (out_dir.empty()) return res;
  ensure_dir(out_dir);
  write_manifest(out_dir, "mnist", cfg, seed);
  write_csv(out_dir / "mnist_warm.csv", warm_log.table);
  write_csv(out_dir / "mnist_cold.csv", cold_log.table);
  CsvTable summary;
  summary.label_header = "run";
  summary.header = {"accuracy_subset", "accuracy_full"};
  summary.labels = {"warm", "cold", "warm_retrain"};
  summary.rows = {{res.warm_accuracy, res.warm_accuracy_full},
                  {res.cold_accuracy, res.cold_accuracy_full},
                  {res.retrain_accuracy, res.retrain_accuracy_full}};
  write_csv(out_dir / "mnist_summary.csv", summary);
  if (side * side == px) {
    write_canvas(out_dir / "mnist_canvas_warm.svg", warm_u.segment(0, px), side);
    write_canvas(out_dir / "mnist_canvas_cold.svg", u.segment(0, px), side);
  }
  return res;
}

}  // namespace blo
