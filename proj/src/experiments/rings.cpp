#include <cmath>
#include <numbers>

#include "blo/csv.hpp"
#include "blo/error.hpp"
#include "blo/experiments.hpp"
#include "blo/svg.hpp"

namespace blo {

OriginalData make_rings(std::size_t n_classes, std::size_t per_class, double jitter, std::mt19937_64& rng) {
  if (n_classes < 2 || per_class == 0) throw Error(ErrorKind::InvalidConfig, "rings need >= 2 classes and points");
  if (!(jitter >= 0.0 && jitter < 0.5)) throw Error(ErrorKind::InvalidConfig, "ring jitter must be in [0, 0.5)");
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi), jit(-jitter, jitter);
  OriginalData d;
  d.loss = LossKind::SoftmaxCrossEntropy;
  d.x = DenseMatrix(n_classes * per_class, 2);
  for (std::size_t c = 0; c < n_classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      const double th = angle(rng);
      const double r = static_cast<double>(c + 1) + (jitter > 0.0 ? jit(rng) : 0.0);
      const std::size_t row = c * per_class + i;
      d.x(row, 0) = r * std::cos(th);
      d.x(row, 1) = r * std::sin(th);
      d.classes.push_back(c);
    }
  return d;
}

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id)};
  return std::mt19937_64(seq);
}

MlpParams gd_train(const MlpSpec& spec, MlpParams p, const SyntheticDataset& d, double lr, std::size_t steps) {
  Vector w = p.flatten();
  for (std::size_t s = 0; s < steps; ++s) {
    w.axpy(-lr, inner_loss_and_grad(spec, MlpParams::unflatten(spec, w), d, LossKind::SoftmaxCrossEntropy).second);
    if (!w.all_finite()) throw Error(ErrorKind::DivergenceDetected, "retraining diverged at step " + std::to_string(s));
  }
  return MlpParams::unflatten(spec, w);
}

bool fits_points(const MlpSpec& spec, const MlpParams& p, const SyntheticDataset& d) {
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Vector out = forward(spec, p, d.coords[i]);
    std::size_t want = d.labels[i].class_index;
    if (d.labels[i].kind == PointLabel::Kind::SoftLogits)
      want = static_cast<std::size_t>(std::max_element(d.labels[i].values.begin(), d.labels[i].values.end()) -
                                      d.labels[i].values.begin());
    if (static_cast<std::size_t>(std::max_element(out.begin(), out.end()) - out.begin()) != want) return false;
  }
  return true;
}

std::vector<std::size_t> grid_classes(const MlpSpec& spec, const MlpParams& p, std::size_t n, double extent) {
  DenseMatrix g(n * n, 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      g(i * n + j, 0) = -extent + (j + 0.5) * 2.0 * extent / n;
      g(i * n + j, 1) = -extent + (i + 0.5) * 2.0 * extent / n;
    }
  const DenseMatrix out = forward_batch(spec, p, g);
  std::vector<std::size_t> cls(n * n);
  for (std::size_t r = 0; r < n * n; ++r) {
    const double* o = out.data() + r * out.cols();
    cls[r] = static_cast<std::size_t>(std::max_element(o, o + out.cols()) - o);
  }
  return cls;
}

void write_scene(const std::filesystem::path& path, const OriginalData& data, const std::vector<std::size_t>& cls,
                 std::size_t n, double extent, const std::vector<std::vector<Vector>>& paths,
                 const SyntheticDataset& final_points, const std::string& title) {
  SvgScene svg(-extent, extent, -extent, extent);
  const double cell = 2.0 * extent / n;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      svg.rect(-extent + j * cell, -extent + i * cell, cell, cell, palette(cls[i * n + j]), 0.18);
  for (std::size_t r = 0; r < data.size(); ++r) svg.circle(data.x(r, 0), data.x(r, 1), 2.0, palette(data.classes[r]));
  for (std::size_t k = 0; k < paths.size(); ++k) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : paths[k]) pts.emplace_back(p[0], p[1]);
    svg.polyline(pts, "#000000", 1.0);
  }
  for (std::size_t k = 0; k < final_points.size(); ++k) {
    const auto& lab = final_points.labels[k];
    const std::size_t c = lab.kind == PointLabel::Kind::ClassIndex
                              ? lab.class_index
                              : static_cast<std::size_t>(std::max_element(lab.values.begin(), lab.values.end()) -
                                                         lab.values.begin());
    svg.circle(final_points.coords[k][0], final_points.coords[k][1], 7.0, palette(c), "#000000");
  }
  svg.text(-extent + 0.1, extent - 0.25, title, 14);
  svg.write(path);
}

}  // namespace

RingsResult run_rings_distill(const Config& cfg, std::uint64_t seed, const std::filesystem::path& out_dir) {
  cfg.require_known({"variant", "per_class", "jitter", "hidden", "inner_lr", "outer_lr", "iters", "unroll_k",
                     "init_scale", "retrain_steps", "retrain_lr", "eval_every", "boundary_grid"});
  RingsResult res;
  res.variant = cfg.get_string("variant", "two-class");
  std::size_t n_classes = 2, n_points = 2;
  bool soft = false;
  if (res.variant == "two-class") {
  } else if (res.variant == "three-class") {
    n_classes = n_points = 3;
  } else if (res.variant == "three-class-soft") {
    n_classes = 3;
    soft = true;
  } else {
    throw Error(ErrorKind::InvalidConfig, "variant must be two-class, three-class or three-class-soft");
  }
  std::vector<std::size_t> sizes{2};
  for (double h : cfg.get_doubles("hidden", {200, 200, 200})) sizes.push_back(static_cast<std::size_t>(h));
  sizes.push_back(n_classes);
  const MlpSpec spec(sizes);
  const double inner_lr = cfg.get_double("inner_lr", 0.001);
  const double outer_lr = cfg.get_double("outer_lr", 0.01);
  const std::size_t iters = cfg.get_uint("iters", 3000);
  const std::size_t k = cfg.get_uint("unroll_k", 1);
  const double init_scale = cfg.get_double("init_scale", 0.1);
  const std::size_t retrain_steps = cfg.get_uint("retrain_steps", 20000);
  const double retrain_lr = cfg.get_double("retrain_lr", 0.01);
  const std::size_t eval_every = std::max<std::uint64_t>(1, cfg.get_uint("eval_every", 100));
  const std::size_t grid = cfg.get_uint("boundary_grid", 200);

  auto data_rng = stream(seed, 1), init_rng = stream(seed, 2), synth_rng = stream(seed, 3);
  const OriginalData data =
      make_rings(n_classes, cfg.get_uint("per_class", 300), cfg.get_double("jitter", 0.1), data_rng);
  const MlpParams w0 = glorot_init(spec, init_rng);

  std::normal_distribution<double> nd(0.0, init_scale);
  std::vector<Vector> coords;
  std::vector<PointLabel> labels;
  for (std::size_t i = 0; i < n_points; ++i) {
    coords.push_back(Vector{nd(synth_rng), nd(synth_rng)});
    if (soft) {
      Vector logits(n_classes);
      for (auto& v : logits) v = nd(synth_rng);
      labels.push_back(PointLabel::soft(logits));
    } else {
      labels.push_back(PointLabel::hard(i));
    }
  }
  const SyntheticDataset synth0 = SyntheticDataset::with_learnable_inputs(coords, labels);

  Vector u = synth0.outer_params();
  MlpParams w = w0;
  Adam adam(outer_lr);
  CsvTable trace;
  trace.header = {"iter", "outer_loss", "accuracy"};
  for (std::size_t i = 0; i < u.size(); ++i) trace.header.push_back("u_" + std::to_string(i));
  std::vector<std::vector<Vector>> paths(n_points);
  auto record = [&](std::size_t t, double loss, double acc) {
    std::vector<double> row{static_cast<double>(t), loss, acc};
    row.insert(row.end(), u.begin(), u.end());
    trace.rows.push_back(std::move(row));
    const SyntheticDataset d = synth0.with_outer(u);
    for (std::size_t p = 0; p < n_points; ++p) paths[p].push_back(d.coords[p]);
  };

  for (std::size_t t = 0; t < iters; ++t) {
    const SyntheticDataset d = synth0.with_outer(u);
    const UnrollResult h = unrolled_hypergrad_mlp(spec, w, d, data, LossKind::SoftmaxCrossEntropy, inner_lr, k);
    if (!std::isfinite(h.outer_loss) || !h.hypergrad.all_finite())
      throw Error(ErrorKind::NonFiniteLoss, "rings outer loss non-finite at iteration " + std::to_string(t));
    record(t, h.outer_loss, t % eval_every == 0 ? accuracy(spec, w, data) : NAN);
    adam.step(u, h.hypergrad);
    // Inner step with the updated outer parameters.
    Vector wf = w.flatten();
    wf.axpy(-inner_lr,
            inner_loss_and_grad(spec, w, synth0.with_outer(u), LossKind::SoftmaxCrossEntropy).second);
    w = MlpParams::unflatten(spec, wf);
  }
  res.warm_accuracy = accuracy(spec, w, data);
  res.warm_outer_loss = outer_loss(spec, w, data);
  record(iters, res.warm_outer_loss, res.warm_accuracy);
  res.final_synthetic = synth0.with_outer(u);

  const MlpParams retrained = gd_train(spec, w0, res.final_synthetic, retrain_lr, retrain_steps);
  res.retrain_accuracy = accuracy(spec, retrained, data);
  res.retrain_outer_loss = outer_loss(spec, retrained, data);
  res.retrain_fits_synthetic = fits_points(spec, retrained, res.final_synthetic);

  if (out_dir.empty()) return res;
  ensure_dir(out_dir);
  write_manifest(out_dir, "rings", cfg, seed);
  write_csv(out_dir / "rings_trace.csv", trace);
  CsvTable summary;
  summary.header = {"warm_accuracy", "warm_outer_loss", "retrain_accuracy", "retrain_outer_loss",
                    "retrain_fits_synthetic"};
  summary.rows.push_back({res.warm_accuracy, res.warm_outer_loss, res.retrain_accuracy, res.retrain_outer_loss,
                          res.retrain_fits_synthetic ? 1.0 : 0.0});
  write_csv(out_dir / "rings_summary.csv", summary);
  CsvTable pts;
  pts.header = {"x", "y", "class"};
  for (std::size_t r = 0; r < data.size(); ++r)
    pts.rows.push_back({data.x(r, 0), data.x(r, 1), static_cast<double>(data.classes[r])});
  write_csv(out_dir / "rings_data.csv", pts);
  if (grid > 0) {
    const double extent = static_cast<double>(n_classes) + 0.75;
    const auto warm_cls = grid_classes(spec, w, grid, extent);
    const auto retrain_cls = grid_classes(spec, retrained, grid, extent);
    CsvTable b;
    b.header = {"x", "y", "warm_class", "retrain_class"};
    for (std::size_t i = 0; i < grid; ++i)
      for (std::size_t j = 0; j < grid; ++j)
        b.rows.push_back({-extent + (j + 0.5) * 2.0 * extent / grid, -extent + (i + 0.5) * 2.0 * extent / grid,
                          static_cast<double>(warm_cls[i * grid + j]), static_cast<double>(retrain_cls[i * grid + j])});
    write_csv(out_dir / "rings_boundary.csv", b);
    write_scene(out_dir / "rings_warm.svg", data, warm_cls, grid, extent, paths, res.final_synthetic,
                "warm start, accuracy " + format_double(res.warm_accuracy).substr(0, 5));
    write_scene(out_dir / "rings_retrain.svg", data, retrain_cls, grid, extent, {}, res.final_synthetic,
                "retrained on final points, accuracy " + format_double(res.retrain_accuracy).substr(0, 5));
  }
  return res;
}

}  // namespace blo
