#include "blo/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "blo/error.hpp"

namespace blo {

namespace {

// Offsets of W_l and b_l inside the flat vector.
struct Layout {
  std::vector<std::size_t> w_off, b_off;
  std::size_t total = 0;
};

Layout layout_of(const MlpSpec& spec) {
  Layout l;
  std::size_t off = 0;
  for (std::size_t i = 0; i < spec.num_layers(); ++i) {
    const std::size_t in = spec.layer_sizes[i], out = spec.layer_sizes[i + 1];
    l.w_off.push_back(off);
    off += in * out;
    l.b_off.push_back(off);
    off += out;
  }
  l.total = off;
  return l;
}

void check_params(const MlpSpec& spec, const MlpParams& p) {
  if (p.weights.size() != spec.num_layers() || p.biases.size() != spec.num_layers())
    throw Error(ErrorKind::ShapeMismatch, "parameter layer count does not match the spec");
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    if (p.weights[l].rows() != spec.layer_sizes[l + 1] || p.weights[l].cols() != spec.layer_sizes[l] ||
        p.biases[l].size() != spec.layer_sizes[l + 1])
      throw Error(ErrorKind::ShapeMismatch, "layer " + std::to_string(l) + " has the wrong shape");
  }
}

// z (n x out) = a (n x in) W^T + b, with W^T materialized so the inner loop is an axpy.
DenseMatrix affine(const DenseMatrix& a, const DenseMatrix& w, const Vector& b) {
  const std::size_t n = a.rows(), in = w.cols(), out = w.rows();
  const DenseMatrix wt = w.transpose();
  DenseMatrix z(n, out);
  for (std::size_t i = 0; i < n; ++i) {
    double* zi = z.data() + i * out;
    for (std::size_t o = 0; o < out; ++o) zi[o] = b[o];
    const double* ai = a.data() + i * in;
    for (std::size_t k = 0; k < in; ++k) {
      const double s = ai[k];
      if (s == 0.0) continue;
      const double* wk = wt.data() + k * out;
      for (std::size_t o = 0; o < out; ++o) zi[o] += s * wk[o];
    }
  }
  return z;
}

// One 0/1 entry per hidden unit and row; frozen patterns let finite differences
// see a single linear piece of the ReLU net.
using Masks = std::vector<std::vector<std::uint8_t>>;

void relu_inplace(DenseMatrix& z, std::vector<std::uint8_t>& mask, const std::vector<std::uint8_t>* fixed) {
  double* p = z.data();
  const std::size_t n = z.rows() * z.cols();
  if (fixed) {
    mask = *fixed;
  } else {
    mask.resize(n);
    for (std::size_t i = 0; i < n; ++i) mask[i] = p[i] > 0.0;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!mask[i]) p[i] = 0.0;
}

struct Cache {
  std::vector<DenseMatrix> acts;  // acts[0] = x, acts[l] = output of layer l
  Masks masks;                    // masks[l] for hidden layer l
};

Cache forward_cache(const MlpSpec& spec, const MlpParams& p, const DenseMatrix& x, const Masks* fixed = nullptr) {
  Cache c;
  c.acts.reserve(spec.num_layers() + 1);
  c.acts.push_back(x);
  c.masks.resize(spec.num_layers() - 1);
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    DenseMatrix z = affine(c.acts.back(), p.weights[l], p.biases[l]);
    if (l + 1 < spec.num_layers()) relu_inplace(z, c.masks[l], fixed ? &(*fixed)[l] : nullptr);
    c.acts.push_back(std::move(z));
  }
  return c;
}

Vector softmax(const double* o, std::size_t k) {
  Vector p(k);
  const double m = *std::max_element(o, o + k);
  double s = 0.0;
  for (std::size_t c = 0; c < k; ++c) s += (p[c] = std::exp(o[c] - m));
  for (std::size_t c = 0; c < k; ++c) p[c] /= s;
  return p;
}

// Mean loss over rows; writes dL/d(outputs) into dout when non-null.
double loss_rows(LossKind kind, const DenseMatrix& out, const DenseMatrix& t, DenseMatrix* dout) {
  const std::size_t n = out.rows(), k = out.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  if (dout) *dout = DenseMatrix(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    const double* o = out.data() + i * k;
    const double* ti = t.data() + i * k;
    if (kind == LossKind::SquaredError) {
      for (std::size_t c = 0; c < k; ++c) {
        const double r = o[c] - ti[c];
        total += 0.5 * r * r;
        if (dout) (*dout)(i, c) = r * inv_n;
      }
    } else {
      const double m = *std::max_element(o, o + k);
      double s = 0.0, tsum = 0.0;
      for (std::size_t c = 0; c < k; ++c) s += std::exp(o[c] - m);
      const double lse = m + std::log(s);
      for (std::size_t c = 0; c < k; ++c) {
        total += ti[c] * (lse - o[c]);
        tsum += ti[c];
      }
      if (dout)
        for (std::size_t c = 0; c < k; ++c) (*dout)(i, c) = (tsum * std::exp(o[c] - lse) - ti[c]) * inv_n;
    }
  }
  return total * inv_n;
}

std::pair<double, Vector> loss_and_grad(const MlpSpec& spec, const MlpParams& p, const DenseMatrix& x,
                                        const DenseMatrix& t, LossKind kind, bool want_grad,
                                        const Masks* fixed = nullptr, Masks* used = nullptr) {
  check_params(spec, p);
  Cache cache = forward_cache(spec, p, x, fixed);
  const auto& acts = cache.acts;
  if (used) *used = cache.masks;
  DenseMatrix dz;
  const double loss = loss_rows(kind, acts.back(), t, want_grad ? &dz : nullptr);
  if (!want_grad) return {loss, Vector()};

  const Layout lay = layout_of(spec);
  Vector g(lay.total);
  const std::size_t n = x.rows();
  for (std::size_t l = spec.num_layers(); l-- > 0;) {
    const DenseMatrix& a = acts[l];
    const DenseMatrix& w = p.weights[l];
    const std::size_t in = w.cols(), out = w.rows();
    double* gw = g.data() + lay.w_off[l];
    double* gb = g.data() + lay.b_off[l];
    for (std::size_t i = 0; i < n; ++i) {
      const double* ai = a.data() + i * in;
      const double* dzi = dz.data() + i * out;
      for (std::size_t o = 0; o < out; ++o) {
        const double s = dzi[o];
        gb[o] += s;
        if (s == 0.0) continue;
        double* row = gw + o * in;
        for (std::size_t k = 0; k < in; ++k) row[k] += s * ai[k];
      }
    }
    if (l == 0) break;
    DenseMatrix da(n, in);
    for (std::size_t i = 0; i < n; ++i) {
      const double* dzi = dz.data() + i * out;
      double* dai = da.data() + i * in;
      for (std::size_t o = 0; o < out; ++o) {
        const double s = dzi[o];
        if (s == 0.0) continue;
        const double* wo = w.data() + o * in;
        for (std::size_t k = 0; k < in; ++k) dai[k] += s * wo[k];
      }
      const std::uint8_t* mi = cache.masks[l - 1].data() + i * in;
      for (std::size_t k = 0; k < in; ++k)
        if (!mi[k]) dai[k] = 0.0;
    }
    dz = std::move(da);
  }
  return {loss, std::move(g)};
}

DenseMatrix synthetic_inputs(const SyntheticDataset& d, std::size_t in) {
  DenseMatrix x(d.size(), in);
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t k = 0; k < in; ++k) x(i, k) = d.coords[i][k];
  return x;
}

DenseMatrix synthetic_targets(const SyntheticDataset& d, std::size_t out) {
  DenseMatrix t(d.size(), out);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const PointLabel& lab = d.labels[i];
    switch (lab.kind) {
      case PointLabel::Kind::ClassIndex:
        t(i, lab.class_index) = 1.0;
        break;
      case PointLabel::Kind::SoftLogits: {
        const Vector p = softmax(lab.values.data(), out);
        for (std::size_t c = 0; c < out; ++c) t(i, c) = p[c];
        break;
      }
      case PointLabel::Kind::Target:
        for (std::size_t c = 0; c < out; ++c) t(i, c) = lab.values[c];
        break;
    }
  }
  return t;
}

DenseMatrix original_targets(const OriginalData& d, std::size_t out) {
  if (d.loss == LossKind::SquaredError) {
    if (d.targets.rows() != d.size() || d.targets.cols() != out)
      throw Error(ErrorKind::ShapeMismatch, "original targets must be n x output_dim");
    return d.targets;
  }
  if (d.classes.size() != d.size()) throw Error(ErrorKind::ShapeMismatch, "one class label per original point");
  DenseMatrix t(d.size(), out);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.classes[i] >= out) throw Error(ErrorKind::ShapeMismatch, "class label out of range");
    t(i, d.classes[i]) = 1.0;
  }
  return t;
}

void check_original(const MlpSpec& spec, const OriginalData& d) {
  if (d.size() == 0) throw Error(ErrorKind::ShapeMismatch, "original dataset is empty");
  if (d.x.cols() != spec.input_dim()) throw Error(ErrorKind::ShapeMismatch, "original inputs have the wrong width");
}

Vector inner_grad_masked(const MlpSpec& spec, const MlpParams& p, const SyntheticDataset& d, LossKind loss,
                         const Masks* fixed, Masks* used = nullptr) {
  return loss_and_grad(spec, p, synthetic_inputs(d, spec.input_dim()), synthetic_targets(d, spec.output_dim()), loss,
                       true, fixed, used)
      .second;
}

}  // namespace

MlpSpec::MlpSpec(std::vector<std::size_t> sizes) : layer_sizes(std::move(sizes)) {
  if (layer_sizes.size() < 2) throw Error(ErrorKind::ShapeMismatch, "an MLP needs input and output sizes");
  for (std::size_t s : layer_sizes)
    if (s == 0) throw Error(ErrorKind::ShapeMismatch, "layer sizes must be positive");
}

std::size_t MlpSpec::num_params() const { return layout_of(*this).total; }

Vector MlpParams::flatten() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].rows() * weights[l].cols() + biases[l].size();
  std::vector<double> flat;
  flat.reserve(n);
  for (std::size_t l = 0; l < weights.size(); ++l) {
    flat.insert(flat.end(), weights[l].values().begin(), weights[l].values().end());
    flat.insert(flat.end(), biases[l].begin(), biases[l].end());
  }
  return Vector(std::move(flat));
}

MlpParams MlpParams::unflatten(const MlpSpec& spec, const Vector& flat) {
  const Layout lay = layout_of(spec);
  if (flat.size() != lay.total)
    throw Error(ErrorKind::ShapeMismatch, "flat parameter vector has " + std::to_string(flat.size()) +
                                              " entries, spec needs " + std::to_string(lay.total));
  MlpParams p;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t in = spec.layer_sizes[l], out = spec.layer_sizes[l + 1];
    const double* w = flat.data() + lay.w_off[l];
    p.weights.emplace_back(out, in, std::vector<double>(w, w + in * out));
    p.biases.push_back(flat.segment(lay.b_off[l], out));
  }
  return p;
}

MlpParams MlpParams::zeros(const MlpSpec& spec) { return unflatten(spec, Vector(spec.num_params())); }

MlpParams glorot_init(const MlpSpec& spec, std::mt19937_64& rng) {
  MlpParams p = MlpParams::zeros(spec);
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const double in = static_cast<double>(spec.layer_sizes[l]), out = static_cast<double>(spec.layer_sizes[l + 1]);
    const double r = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> dist(-r, r);
    DenseMatrix& w = p.weights[l];
    for (std::size_t i = 0; i < w.rows() * w.cols(); ++i) w.data()[i] = dist(rng);
  }
  return p;
}

SyntheticDataset SyntheticDataset::with_learnable_inputs(std::vector<Vector> coords, std::vector<PointLabel> labels) {
  SyntheticDataset d;
  for (const auto& c : coords) d.learnable.emplace_back(c.size(), true);
  d.coords = std::move(coords);
  d.labels = std::move(labels);
  return d;
}

std::size_t SyntheticDataset::outer_dim() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < size(); ++i) {
    n += static_cast<std::size_t>(std::count(learnable[i].begin(), learnable[i].end(), true));
    if (labels[i].learnable) n += labels[i].values.size();
  }
  return n;
}

Vector SyntheticDataset::outer_params() const {
  std::vector<double> u;
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t k = 0; k < coords[i].size(); ++k)
      if (learnable[i][k]) u.push_back(coords[i][k]);
    if (labels[i].learnable) u.insert(u.end(), labels[i].values.begin(), labels[i].values.end());
  }
  return Vector(std::move(u));
}

SyntheticDataset SyntheticDataset::with_outer(const Vector& u) const {
  if (u.size() != outer_dim())
    throw Error(ErrorKind::ShapeMismatch,
                "outer vector has " + std::to_string(u.size()) + " entries, dataset has " + std::to_string(outer_dim()));
  SyntheticDataset d = *this;
  std::size_t j = 0;
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t k = 0; k < d.coords[i].size(); ++k)
      if (learnable[i][k]) d.coords[i][k] = u[j++];
    if (d.labels[i].learnable)
      for (std::size_t c = 0; c < d.labels[i].values.size(); ++c) d.labels[i].values[c] = u[j++];
  }
  return d;
}

void SyntheticDataset::validate(const MlpSpec& spec, LossKind loss) const {
  if (size() == 0) throw Error(ErrorKind::ShapeMismatch, "synthetic dataset is empty");
  if (learnable.size() != size() || labels.size() != size())
    throw Error(ErrorKind::ShapeMismatch, "coords, learnable mask and labels differ in length");
  for (std::size_t i = 0; i < size(); ++i) {
    const std::string at = " (point " + std::to_string(i) + ")";
    if (coords[i].size() != spec.input_dim()) throw Error(ErrorKind::ShapeMismatch, "input width" + at);
    if (learnable[i].size() != coords[i].size()) throw Error(ErrorKind::ShapeMismatch, "mask width" + at);
    const PointLabel& lab = labels[i];
    switch (lab.kind) {
      case PointLabel::Kind::ClassIndex:
        if (loss != LossKind::SoftmaxCrossEntropy || lab.class_index >= spec.output_dim())
          throw Error(ErrorKind::ShapeMismatch, "class label needs cross-entropy and an index < output_dim" + at);
        if (lab.learnable) throw Error(ErrorKind::ShapeMismatch, "class indices cannot be learnable" + at);
        break;
      case PointLabel::Kind::SoftLogits:
        if (loss != LossKind::SoftmaxCrossEntropy || lab.values.size() != spec.output_dim())
          throw Error(ErrorKind::ShapeMismatch, "soft logits need cross-entropy and output_dim entries" + at);
        break;
      case PointLabel::Kind::Target:
        if (loss != LossKind::SquaredError || lab.values.size() != spec.output_dim())
          throw Error(ErrorKind::ShapeMismatch, "regression target needs squared error and output_dim entries" + at);
        break;
    }
  }
}

OriginalData OriginalData::slice(std::size_t begin, std::size_t count) const {
  if (begin + count > size()) throw Error(ErrorKind::ShapeMismatch, "slice past the end of the dataset");
  OriginalData d;
  d.loss = loss;
  const std::size_t in = x.cols();
  d.x = DenseMatrix(count, in, std::vector<double>(x.data() + begin * in, x.data() + (begin + count) * in));
  if (!classes.empty()) d.classes.assign(classes.begin() + begin, classes.begin() + begin + count);
  if (targets.rows() > 0) {
    const std::size_t k = targets.cols();
    d.targets =
        DenseMatrix(count, k, std::vector<double>(targets.data() + begin * k, targets.data() + (begin + count) * k));
  }
  return d;
}

Vector forward(const MlpSpec& spec, const MlpParams& params, const Vector& x) {
  if (x.size() != spec.input_dim()) throw Error(ErrorKind::ShapeMismatch, "input has the wrong width");
  return forward_batch(spec, params, DenseMatrix::row(x)).row_vector(0);
}

DenseMatrix forward_batch(const MlpSpec& spec, const MlpParams& params, const DenseMatrix& x) {
  check_params(spec, params);
  if (x.cols() != spec.input_dim()) throw Error(ErrorKind::ShapeMismatch, "input batch has the wrong width");
  return std::move(forward_cache(spec, params, x).acts.back());
}

std::pair<double, Vector> inner_loss_and_grad(const MlpSpec& spec, const MlpParams& params,
                                              const SyntheticDataset& data, LossKind loss) {
  data.validate(spec, loss);
  return loss_and_grad(spec, params, synthetic_inputs(data, spec.input_dim()),
                       synthetic_targets(data, spec.output_dim()), loss, true);
}

std::pair<double, Vector> outer_loss_and_grad_w(const MlpSpec& spec, const MlpParams& params,
                                                const OriginalData& data) {
  check_original(spec, data);
  return loss_and_grad(spec, params, data.x, original_targets(data, spec.output_dim()), data.loss, true);
}

double outer_loss(const MlpSpec& spec, const MlpParams& params, const OriginalData& data) {
  check_original(spec, data);
  return loss_and_grad(spec, params, data.x, original_targets(data, spec.output_dim()), data.loss, false).first;
}

double accuracy(const MlpSpec& spec, const MlpParams& params, const OriginalData& data) {
  check_original(spec, data);
  if (data.classes.size() != data.size()) throw Error(ErrorKind::ShapeMismatch, "accuracy needs class labels");
  const DenseMatrix out = forward_batch(spec, params, data.x);
  const std::size_t k = out.cols();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const double* o = out.data() + i * k;
    if (static_cast<std::size_t>(std::max_element(o, o + k) - o) == data.classes[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(out.rows());
}

Vector mixed_vjp(const MlpSpec& spec, const MlpParams& params, const SyntheticDataset& data, LossKind loss,
                 const Vector& v) {
  const std::size_t m = data.outer_dim();
  if (m > kMaxOuterDimForFd)
    throw Error(ErrorKind::OuterDimTooLarge, "outer dimension " + std::to_string(m) + " exceeds " +
                                                 std::to_string(kMaxOuterDimForFd) + " for finite differences");
  if (v.size() != spec.num_params()) throw Error(ErrorKind::ShapeMismatch, "vjp vector has the wrong length");
  data.validate(spec, loss);
  const Vector u = data.outer_params();
  Masks base;
  inner_grad_masked(spec, params, data, loss, nullptr, &base);
  Vector out(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double eps = 1e-5 * (1.0 + std::abs(u[i]));
    Vector up = u, dn = u;
    up[i] += eps;
    dn[i] -= eps;
    const double fp = inner_grad_masked(spec, params, data.with_outer(up), loss, &base).dot(v);
    const double fm = inner_grad_masked(spec, params, data.with_outer(dn), loss, &base).dot(v);
    out[i] = (fp - fm) / (up[i] - dn[i]);
  }
  return out;
}

Vector hvp(const MlpSpec& spec, const MlpParams& params, const SyntheticDataset& data, LossKind loss, const Vector& v) {
  if (v.size() != spec.num_params()) throw Error(ErrorKind::ShapeMismatch, "hvp vector has the wrong length");
  const double vn = v.norm();
  if (vn == 0.0) return Vector(v.size());
  data.validate(spec, loss);
  const double h = 1e-5 / vn;
  const Vector w = params.flatten();
  Masks base;
  inner_grad_masked(spec, params, data, loss, nullptr, &base);
  Vector gp = inner_grad_masked(spec, MlpParams::unflatten(spec, w + h * v), data, loss, &base);
  gp -= inner_grad_masked(spec, MlpParams::unflatten(spec, w - h * v), data, loss, &base);
  gp *= 1.0 / (2.0 * h);
  return gp;
}

UnrollResult unrolled_hypergrad_mlp(const MlpSpec& spec, const MlpParams& params, const SyntheticDataset& data,
                                    const OriginalData& original, LossKind loss, double alpha, std::size_t k) {
  if (k == 0) throw Error(ErrorKind::InvalidConfig, "unroll needs at least one step");
  if (!(alpha > 0.0)) throw Error(ErrorKind::InvalidConfig, "unroll step size must be positive");
  std::vector<MlpParams> iterates;
  iterates.reserve(k + 1);
  iterates.push_back(params);
  for (std::size_t i = 0; i < k; ++i) {
    Vector w = iterates.back().flatten();
    w.axpy(-alpha, inner_loss_and_grad(spec, iterates.back(), data, loss).second);
    iterates.push_back(MlpParams::unflatten(spec, w));
  }
  UnrollResult r;
  auto [f, v] = outer_loss_and_grad_w(spec, iterates.back(), original);
  r.outer_loss = f;
  r.hypergrad = Vector(data.outer_dim());
  for (std::size_t i = k; i-- > 0;) {
    r.hypergrad.axpy(-alpha, mixed_vjp(spec, iterates[i], data, loss, v));
    if (i > 0) v.axpy(-alpha, hvp(spec, iterates[i], data, loss, v));
  }
  r.w_final = std::move(iterates.back());
  return r;
}

Vector neumann_hypergrad_mlp(const MlpSpec& spec, const MlpParams& params, const SyntheticDataset& data,
                             const OriginalData& original, LossKind loss, double alpha, std::size_t k) {
  if (!(alpha > 0.0)) throw Error(ErrorKind::InvalidConfig, "Neumann step size must be positive");
  Vector p = outer_loss_and_grad_w(spec, params, original).second;
  Vector acc = p;
  for (std::size_t j = 0; j < k; ++j) {
    p.axpy(-alpha, hvp(spec, params, data, loss, p));
    acc += p;
  }
  return -alpha * mixed_vjp(spec, params, data, loss, acc);
}

}  // namespace blo
