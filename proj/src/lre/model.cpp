#include "linfreq/lre/model.hpp"

#include <cmath>

#include "linfreq/error.hpp"
#include "linfreq/random.hpp"

namespace linfreq::lre {

namespace {

// Parameter streams drawn from one model seed.
enum Stream : std::uint64_t { kHead = 1, kShift, kReadout, kBias, kLayer0 = 16 };

Matrix gaussian(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = scale * standard_normal(rng);
  }
  return m;
}

Matrix orthogonal(Rng& rng, std::size_t n) {
  const Matrix g = gaussian(rng, n, n, 1.0);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  // Fix column signs so the draw does not depend on Householder conventions.
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  return q;
}

void check_dims(const ModelSpec& spec) {
  if (spec.subject_dim == 0 || spec.object_dim == 0 || spec.vocab_size == 0 || spec.contexts == 0) {
    throw InvalidArgument("model dimensions, vocabulary and context count must be positive");
  }
  if (!(spec.noise >= 0) || !std::isfinite(spec.noise)) {
    throw InvalidArgument("model noise must be finite and nonnegative");
  }
}

void init_common(const ModelSpec& spec, Matrix& head, std::vector<Vector>& shifts) {
  Rng hr(derive_seed(spec.seed, kHead));
  head = gaussian(hr, spec.vocab_size, spec.object_dim, 1.0 / std::sqrt(double(spec.object_dim)));
  Rng sr(derive_seed(spec.seed, kShift));
  shifts.assign(spec.contexts, Vector::Zero(static_cast<Eigen::Index>(spec.object_dim)));
  for (std::size_t c = 1; c < spec.contexts; ++c) {
    shifts[c] = gaussian(sr, spec.object_dim, 1, spec.context_scale);
  }
}

void check_probe(std::size_t probe, std::size_t count) {
  if (probe >= count) {
    throw InvalidArgument("probe point " + std::to_string(probe) + " out of range (model has " +
                          std::to_string(count) + ")");
  }
}

void check_size(const Vector& v, std::size_t n, const char* what) {
  if (static_cast<std::size_t>(v.size()) != n) {
    throw InvalidArgument(std::string(what) + " has dimension " + std::to_string(v.size()) +
                          ", expected " + std::to_string(n));
  }
}

}  // namespace

std::string to_string(ModelKind kind) { return kind == ModelKind::kLinear ? "linear" : "mlp"; }

ModelKind parse_model_kind(const std::string& text) {
  if (text == "linear") return ModelKind::kLinear;
  if (text == "mlp") return ModelKind::kMlp;
  throw InvalidArgument("unknown model kind '" + text + "' (expected linear or mlp)");
}

const Vector& ReferenceModel::context_shift(ContextId c) const {
  if (c >= shifts_.size()) {
    throw InvalidArgument("context id " + std::to_string(c) + " out of range (model has " +
                          std::to_string(shifts_.size()) + ")");
  }
  return shifts_[c];
}

LinearModel::LinearModel(const ModelSpec& spec) {
  check_dims(spec);
  init_common(spec, head_, shifts_);
  Rng ar(derive_seed(spec.seed, kReadout));
  a_ = gaussian(ar, spec.object_dim, spec.subject_dim, 1.0 / std::sqrt(double(spec.subject_dim)));
  Rng kr(derive_seed(spec.seed, kBias));
  k_ = gaussian(kr, spec.object_dim, 1, 0.5);
}

Vector LinearModel::subject_state(const Vector& s, std::size_t probe) const {
  check_probe(probe, 1);
  check_size(s, subject_dim(), "subject vector");
  return s;
}

Vector LinearModel::forward(const Vector& h, ContextId c, std::size_t probe) const {
  check_probe(probe, 1);
  check_size(h, subject_dim(), "subject state");
  return a_ * h + k_ + context_shift(c);
}

std::optional<Matrix> LinearModel::analytic_jacobian(const Vector&, ContextId, std::size_t probe) const {
  check_probe(probe, 1);
  return a_;
}

Vector LinearModel::invert(const Vector& o) const {
  check_size(o, object_dim(), "object vector");
  return a_.completeOrthogonalDecomposition().solve(o - k_);
}

MlpModel::MlpModel(const ModelSpec& spec) : noise_(spec.noise) {
  check_dims(spec);
  if (spec.object_dim != spec.subject_dim) {
    throw InvalidArgument("mlp reference model needs object_dim == subject_dim");
  }
  if (spec.depth == 0) throw InvalidArgument("mlp reference model needs depth >= 1");
  init_common(spec, head_, shifts_);
  const std::size_t d = spec.subject_dim;
  // Orthogonal factors keep every residual layer invertible while noise < 1.
  Rng rr(derive_seed(spec.seed, kReadout));
  Vector scales(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < scales.size(); ++i) scales(i) = uniform_real(rr, 0.5, 1.5);
  readout_ = orthogonal(rr, d) * scales.asDiagonal() * orthogonal(rr, d).transpose();
  Rng kr(derive_seed(spec.seed, kBias));
  k_ = gaussian(kr, d, 1, 0.5);
  for (std::size_t l = 0; l < spec.depth; ++l) {
    Rng lr(derive_seed(spec.seed, kLayer0 + l));
    Layer layer;
    layer.u = orthogonal(lr, d);
    layer.v = orthogonal(lr, d);
    layer.a = gaussian(lr, d, 1, 0.5);
    layers_.push_back(std::move(layer));
  }
}

std::string MlpModel::probe_name(std::size_t probe) const { return "layer" + std::to_string(probe); }

Vector MlpModel::apply_layer(const Layer& l, const Vector& h) const {
  return h + noise_ * (l.u * (l.v * h + l.a).array().tanh().matrix());
}

Vector MlpModel::subject_state(const Vector& s, std::size_t probe) const {
  check_probe(probe, probe_count());
  check_size(s, subject_dim(), "subject vector");
  Vector h = s;
  for (std::size_t l = 0; l < probe; ++l) h = apply_layer(layers_[l], h);
  return h;
}

Vector MlpModel::forward(const Vector& h, ContextId c, std::size_t probe) const {
  check_probe(probe, probe_count());
  check_size(h, subject_dim(), "subject state");
  Vector x = h;
  for (std::size_t l = probe; l < layers_.size(); ++l) x = apply_layer(layers_[l], x);
  return readout_ * x + k_ + context_shift(c);
}

std::optional<Matrix> MlpModel::analytic_jacobian(const Vector& h, ContextId, std::size_t probe) const {
  check_probe(probe, probe_count());
  check_size(h, subject_dim(), "subject state");
  const auto d = h.size();
  Matrix j = Matrix::Identity(d, d);
  Vector x = h;
  for (std::size_t l = probe; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    const Vector t = (layer.v * x + layer.a).array().tanh().matrix();
    const Vector dt = (1.0 - t.array().square()).matrix();
    j = (Matrix::Identity(d, d) + noise_ * layer.u * dt.asDiagonal() * layer.v) * j;
    x = x + noise_ * layer.u * t;
  }
  return readout_ * j;
}

Vector MlpModel::invert(const Vector& o) const {
  check_size(o, object_dim(), "object vector");
  Vector h = readout_.partialPivLu().solve(o - k_);
  const auto d = h.size();
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    const Vector target = h;
    Vector x = target;
    auto residual = [&](const Vector& y) { return Vector(apply_layer(layer, y) - target); };
    Vector r = residual(x);
    for (int it = 0; it < 100 && r.norm() > 1e-13 * (1.0 + target.norm()); ++it) {
      const Vector t = (layer.v * x + layer.a).array().tanh().matrix();
      const Vector dt = (1.0 - t.array().square()).matrix();
      const Matrix jac = Matrix::Identity(d, d) + noise_ * layer.u * dt.asDiagonal() * layer.v;
      Vector next = x - jac.partialPivLu().solve(r);
      Vector rn = residual(next);
      if (!(rn.norm() < r.norm())) {
        // Fixed-point step; a contraction whenever noise < 1.
        next = target - noise_ * (layer.u * t);
        rn = residual(next);
      }
      x = std::move(next);
      r = std::move(rn);
    }
    h = x;
  }
  return h;
}

std::unique_ptr<ReferenceModel> make_reference_model(const ModelSpec& spec) {
  if (spec.kind == ModelKind::kLinear) return std::make_unique<LinearModel>(spec);
  return std::make_unique<MlpModel>(spec);
}

}  // namespace linfreq::lre
