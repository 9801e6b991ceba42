#pragma once

#include <cstddef>
#include <random>
#include <utility>
#include <vector>

#include "blo/linalg.hpp"

namespace blo {

// Fully connected net: ReLU on hidden layers, identity on the output layer.
struct MlpSpec {
  std::vector<std::size_t> layer_sizes;  // input, hidden..., output

  MlpSpec() = default;
  explicit MlpSpec(std::vector<std::size_t> sizes);  // ShapeMismatch unless >= 2 sizes, all >= 1

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return layer_sizes.size() - 1; }
  std::size_t num_params() const;
};

// weights[l] is out x in (row-major), biases[l] has length out.
// Flattened layout: W_0, b_0, W_1, b_1, ...
struct MlpParams {
  std::vector<DenseMatrix> weights;
  std::vector<Vector> biases;

  Vector flatten() const;
  static MlpParams unflatten(const MlpSpec& spec, const Vector& flat);
  static MlpParams zeros(const MlpSpec& spec);
};

// Uniform in +-sqrt(6/(fan_in+fan_out)), zero biases.
MlpParams glorot_init(const MlpSpec& spec, std::mt19937_64& rng);

enum class LossKind { SquaredError, SoftmaxCrossEntropy };

// Per-point label of a synthetic dataset.
struct PointLabel {
  enum class Kind { ClassIndex, SoftLogits, Target };
  Kind kind = Kind::ClassIndex;
  std::size_t class_index = 0;
  Vector values;  // logits (SoftLogits) or regression target (Target)
  bool learnable = false;

  static PointLabel hard(std::size_t c) { return {Kind::ClassIndex, c, {}, false}; }
  static PointLabel soft(Vector logits, bool learnable = true) {
    return {Kind::SoftLogits, 0, std::move(logits), learnable};
  }
  static PointLabel target(Vector t, bool learnable = false) { return {Kind::Target, 0, std::move(t), learnable}; }
};

// The outer parameters u of a distillation problem. u lists, point by point,
// the learnable input coordinates and then the learnable label entries.
struct SyntheticDataset {
  std::vector<Vector> coords;
  std::vector<std::vector<bool>> learnable;  // per point, per coordinate
  std::vector<PointLabel> labels;

  // All coordinates learnable.
  static SyntheticDataset with_learnable_inputs(std::vector<Vector> coords, std::vector<PointLabel> labels);

  std::size_t size() const { return coords.size(); }
  std::size_t outer_dim() const;
  Vector outer_params() const;
  SyntheticDataset with_outer(const Vector& u) const;
  // Shape check against the net; ShapeMismatch on failure.
  void validate(const MlpSpec& spec, LossKind loss) const;
};

// Fixed dataset the outer objective is measured on.
struct OriginalData {
  DenseMatrix x;                        // n x input_dim
  std::vector<std::size_t> classes;     // for SoftmaxCrossEntropy
  DenseMatrix targets;                  // n x output_dim for SquaredError
  LossKind loss = LossKind::SoftmaxCrossEntropy;

  std::size_t size() const { return x.rows(); }
  OriginalData slice(std::size_t begin, std::size_t count) const;
};

Vector forward(const MlpSpec& spec, const MlpParams& params, const Vector& x);
// Row-wise forward pass over a batch (n x input_dim -> n x output_dim).
DenseMatrix forward_batch(const MlpSpec& spec, const MlpParams& params, const DenseMatrix& x);

// Mean loss over the synthetic points and its gradient w.r.t. the flattened params.
std::pair<double, Vector> inner_loss_and_grad(const MlpSpec& spec, const MlpParams& params,
                                              const SyntheticDataset& data, LossKind loss);
std::pair<double, Vector> outer_loss_and_grad_w(const MlpSpec& spec, const MlpParams& params,
                                                const OriginalData& data);
double outer_loss(const MlpSpec& spec, const MlpParams& params, const OriginalData& data);
double accuracy(const MlpSpec& spec, const MlpParams& params, const OriginalData& data);

inline constexpr std::size_t kMaxOuterDimForFd = 4096;

// grad_u (grad_w f(u, w) . v) by central differences in u, step 1e-5 (1 + |u_i|).
// ReLU activation patterns stay frozen at the base point during the probes, so a
// probe never straddles a kink (the result is the derivative autodiff would give).
Vector mixed_vjp(const MlpSpec& spec, const MlpParams& params, const SyntheticDataset& data, LossKind loss,
                 const Vector& v);

// H v by central differences of grad_w f along v (displacement 1e-5 in norm),
// activation patterns frozen as in mixed_vjp.
Vector hvp(const MlpSpec& spec, const MlpParams& params, const SyntheticDataset& data, LossKind loss, const Vector& v);

struct UnrollResult {
  Vector hypergrad;    // d F(u, w_k) / du through the k unrolled steps
  MlpParams w_final;   // w_k
  double outer_loss = 0.0;
};

// k >= 1 GD steps of size alpha from params, then a reverse sweep with
// Hessian-vector and mixed products at each stored iterate.
UnrollResult unrolled_hypergrad_mlp(const MlpSpec& spec, const MlpParams& params, const SyntheticDataset& data,
                                    const OriginalData& original, LossKind loss, double alpha, std::size_t k);

// -mixed^T alpha sum_{j<=K} (I - alpha H)^j dF/dw, matrix-free.
Vector neumann_hypergrad_mlp(const MlpSpec& spec, const MlpParams& params, const SyntheticDataset& data,
                             const OriginalData& original, LossKind loss, double alpha, std::size_t k);

}  // namespace blo
