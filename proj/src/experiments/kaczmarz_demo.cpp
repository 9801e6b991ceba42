#include <cmath>

#include "blo/csv.hpp"
#include "blo/error.hpp"
#include "blo/experiments.hpp"
#include "blo/svg.hpp"

namespace blo {

namespace {

CsvTable trajectory_table(const std::vector<Vector>& traj, std::size_t planes) {
  CsvTable t;
  t.header = {"step", "plane"};
  const std::size_t dim = traj.empty() ? 0 : traj.front().size();
  for (std::size_t i = 0; i < dim; ++i) t.header.push_back("w_" + std::to_string(i));
  for (std::size_t s = 0; s < traj.size(); ++s) {
    // Row 0 is the start point; row s > 0 was produced by visiting plane (s - 1) mod planes.
    std::vector<double> row{static_cast<double>(s), s == 0 ? -1.0 : static_cast<double>((s - 1) % planes)};
    row.insert(row.end(), traj[s].begin(), traj[s].end());
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace

KaczmarzDemoResult run_kaczmarz_demo(const Config& cfg, std::uint64_t seed, const std::filesystem::path& out_dir) {
  cfg.require_known({"normals", "offsets", "w0", "sweeps", "partial_lr"});
  const double r = 1.0 / std::sqrt(2.0);
  const auto normals = cfg.get_doubles("normals", {1.0, 0.0, 0.0, 1.0, r, r, r, -r});
  const auto offsets = cfg.get_doubles("offsets", {1.0, 1.0, 0.5, 0.8});
  if (offsets.size() < 2) throw Error(ErrorKind::InvalidConfig, "need at least two hyperplanes");
  if (normals.size() % offsets.size() != 0)
    throw Error(ErrorKind::InvalidConfig, "normals length must be a multiple of the plane count");
  const std::size_t dim = normals.size() / offsets.size();
  const auto w0v = cfg.get_doubles("w0", std::vector<double>(dim, 0.0));
  if (w0v.size() != dim) throw Error(ErrorKind::InvalidConfig, "w0 has the wrong dimension");
  const std::size_t sweeps = cfg.get_uint("sweeps", 25);
  const double lr = cfg.get_double("partial_lr", 0.5);

  KaczmarzDemoResult res;
  for (std::size_t i = 0; i < offsets.size(); ++i)
    res.planes.push_back({Vector(std::vector<double>(normals.begin() + i * dim, normals.begin() + (i + 1) * dim)),
                          offsets[i]});
  const Vector w0(w0v);
  res.full_warm = kaczmarz_cycle(w0, res.planes, sweeps);

  // One GD step on 1/2 (x.w - y)^2 per visit.
  res.partial_warm.push_back(w0);
  for (std::size_t s = 0; s < sweeps; ++s)
    for (const auto& p : res.planes) {
      Vector w = res.partial_warm.back();
      w.axpy(-lr * (p.x.dot(w) - p.y), p.x);
      res.partial_warm.push_back(std::move(w));
    }

  res.cold.push_back(w0);
  for (std::size_t s = 0; s < sweeps; ++s)
    for (const auto& p : res.planes) res.cold.push_back(kaczmarz_project(w0, p));

  if (out_dir.empty()) return res;
  ensure_dir(out_dir);
  write_manifest(out_dir, "kaczmarz", cfg, seed);
  write_csv(out_dir / "kaczmarz_full_warm.csv", trajectory_table(res.full_warm, res.planes.size()));
  write_csv(out_dir / "kaczmarz_partial_warm.csv", trajectory_table(res.partial_warm, res.planes.size()));
  write_csv(out_dir / "kaczmarz_cold.csv", trajectory_table(res.cold, res.planes.size()));
  if (dim == 2) {
    const double lo = -1.0, hi = 2.5;
    SvgScene svg(lo, hi, lo, hi);
    for (std::size_t i = 0; i < res.planes.size(); ++i) {
      // Two far points on the line x.w = y.
      const Vector& x = res.planes[i].x;
      const double nn = x.squared_norm();
      const Vector base = (res.planes[i].y / nn) * x;
      const Vector dir{-x[1], x[0]};
      const Vector a = base + 10.0 * dir, b = base - 10.0 * dir;
      svg.line(a[0], a[1], b[0], b[1], "#bbbbbb", 1.5);
    }
    const std::pair<const std::vector<Vector>*, const char*> trajs[] = {
        {&res.full_warm, "full warm"}, {&res.partial_warm, "partial warm"}, {&res.cold, "cold"}};
    for (std::size_t j = 0; j < 3; ++j) {
      std::vector<std::pair<double, double>> pts;
      for (const auto& w : *trajs[j].first) pts.emplace_back(w[0], w[1]);
      svg.polyline(pts, palette(j));
      svg.text(lo + 0.05, hi - 0.12 * (j + 1), trajs[j].second);
    }
    svg.write(out_dir / "kaczmarz.svg");
  }
  return res;
}

}  // namespace blo
