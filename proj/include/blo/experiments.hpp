#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "blo/config.hpp"
#include "blo/mlp.hpp"
#include "blo/quad_blo.hpp"
#include "blo/solvers.hpp"

namespace blo {

// ---- features and the regression bilevel problem ----

enum class Amplitude { Exponential, Harmonic };

struct FourierBasis {
  std::size_t l = 10;
  Amplitude amplitude = Amplitude::Exponential;

  std::size_t dim() const { return 2 * l + 1; }
};

// [1, a_1 cos x, ..., a_L cos Lx, a_1 sin x, ..., a_L sin Lx];
// a_k = 2^(L-k) (Exponential) or 1/k (Harmonic).
Vector featurize(const FourierBasis& basis, double x);
// [1, x]: the line y = w_0 + w_1 x.
Vector featurize_affine(double x);

using FeatureMap = std::function<Vector(double)>;

struct RegressionPoint {
  double x = 0.0;
  double y = 0.0;
};

// f(u, w) = 1/2 ||Phi w - u||^2 over synthetic x's, F(w) = 1/2 ||Phi_o w - y||^2.
QuadraticBilevel build_antidistill_problem(const FeatureMap& phi, const std::vector<double>& synth_x,
                                           const std::vector<RegressionPoint>& original);
QuadraticBilevel build_antidistill_problem(const FourierBasis& basis, const std::vector<double>& synth_x,
                                           const std::vector<RegressionPoint>& original);

// ---- anti-distillation ----

struct MethodRun {
  std::string method;
  double param = 0.0;  // K for neumann/unroll/cg, eps for damped, 0 otherwise
  double norm_sq = 0.0;
  double outer_loss = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  Vector u;
  Vector w;
};

struct AntidistillResult {
  std::vector<MethodRun> runs;
  Vector oracle_u;  // min-displacement outer solution
  std::vector<MethodRun> toy_runs;
  Vector toy_oracle_u;
};

AntidistillResult run_antidistill(const Config& config, std::uint64_t seed, const std::filesystem::path& out_dir);

// ---- Kaczmarz picture ----

struct KaczmarzDemoResult {
  std::vector<Hyperplane> planes;
  std::vector<Vector> full_warm;     // cyclic projections, starts at w0
  std::vector<Vector> partial_warm;  // one GD step toward each visited plane
  std::vector<Vector> cold;          // origin projected onto each plane in turn
};

KaczmarzDemoResult run_kaczmarz_demo(const Config& config, std::uint64_t seed, const std::filesystem::path& out_dir);

// ---- outer optimizer ----

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(Vector& params, const Vector& grad);

 private:
  double lr_, b1_, b2_, eps_;
  Vector m_, v_;
  std::size_t t_ = 0;
};

// ---- rings distillation ----

// Concentric annuli of radius 1..n_classes, uniform angle, radial jitter +-jitter.
OriginalData make_rings(std::size_t n_classes, std::size_t per_class, double jitter, std::mt19937_64& rng);

struct RingsResult {
  std::string variant;
  double warm_accuracy = 0.0;
  double retrain_accuracy = 0.0;
  bool retrain_fits_synthetic = false;
  double warm_outer_loss = 0.0;
  double retrain_outer_loss = 0.0;
  SyntheticDataset final_synthetic;
};

RingsResult run_rings_distill(const Config& config, std::uint64_t seed, const std::filesystem::path& out_dir);

// ---- MNIST distillation ----

struct MnistResult {
  std::size_t subset = 0;
  std::size_t full = 0;
  double warm_accuracy = 0.0;  // on the distillation subset
  double warm_accuracy_full = 0.0;
  double cold_accuracy = 0.0;
  double cold_accuracy_full = 0.0;
  double retrain_accuracy = 0.0;
  double retrain_accuracy_full = 0.0;
  double max_label_sum_error = 0.0;  // |sum softmax(labels) - 1| over logged steps
};

// Data directory: config key mnist_dir, else BLO_LAB_MNIST_DIR.
MnistResult run_mnist_distill(const Config& config, std::uint64_t seed, const std::filesystem::path& out_dir);

// ---- shared output plumbing ----

// manifest.txt: experiment, seed and every resolved setting.
void write_manifest(const std::filesystem::path& out_dir, const std::string& experiment, const Config& config,
                    std::uint64_t seed);
void ensure_dir(const std::filesystem::path& dir);  // IoError

}  // namespace blo
