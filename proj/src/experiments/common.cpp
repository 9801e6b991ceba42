#include <cmath>
#include <fstream>

#include "blo/error.hpp"
#include "blo/experiments.hpp"

namespace blo {

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

void write_manifest(const std::filesystem::path& out_dir, const std::string& experiment, const Config& config,
                    std::uint64_t seed) {
  ensure_dir(out_dir);
  const auto path = out_dir / "manifest.txt";
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  out << "experiment = " << experiment << "\nseed = " << seed << "\n" << config.resolved_text();
  if (!out) throw Error(ErrorKind::IoError, "write failed: " + path.string());
}

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
  if (!(lr > 0.0)) throw Error(ErrorKind::InvalidConfig, "Adam learning rate must be positive");
}

void Adam::step(Vector& params, const Vector& grad) {
  require_same_size(params, grad, "Adam::step");
  if (m_.size() != params.size()) {
    m_ = Vector(params.size());
    v_ = Vector(params.size());
    t_ = 0;
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

}  // namespace blo
