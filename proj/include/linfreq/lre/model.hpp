#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace linfreq::lre {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using ContextId = std::uint32_t;

// A relation computed by some model: a subject representation read at a probe
// point is mapped to an object representation, which a head decodes into
// scores over a finite vocabulary.
//
// Probe points are numbered 0..probe_count()-1. subject_state() carries an
// input subject vector to the representation read at a probe point, and
// forward() finishes the computation from there, so
// forward(subject_state(s, p), c, p) is the same for every p.
class RelationModel {
 public:
  virtual ~RelationModel() = default;

  virtual std::size_t subject_dim() const = 0;
  virtual std::size_t object_dim() const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual std::size_t probe_count() const = 0;
  virtual std::size_t context_count() const = 0;
  virtual std::string probe_name(std::size_t probe) const { return std::to_string(probe); }

  virtual Vector subject_state(const Vector& s, std::size_t probe) const = 0;
  virtual Vector forward(const Vector& h, ContextId c, std::size_t probe) const = 0;
  virtual Vector decode(const Vector& o) const = 0;

  // d(forward)/dh when the model can supply it.
  virtual std::optional<Matrix> analytic_jacobian(const Vector& h, ContextId c,
                                                  std::size_t probe) const {
    (void)h, (void)c, (void)probe;
    return std::nullopt;
  }
};

enum class ModelKind { kLinear, kMlp };

struct ModelSpec {
  ModelKind kind = ModelKind::kLinear;
  std::size_t subject_dim = 16;
  std::size_t object_dim = 16;  // mlp: must equal subject_dim
  std::size_t vocab_size = 32;
  std::size_t depth = 2;        // mlp residual layers; probe points are 0..depth
  std::size_t contexts = 5;
  std::uint64_t seed = 0;
  double noise = 0.0;           // mlp: scale of the nonlinear residual branches
  double context_scale = 0.1;   // size of the per-context output shift

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);

// Shared pieces: a linear decode head and per-context output shifts
// (context 0 is the unshifted prompt).
class ReferenceModel : public RelationModel {
 public:
  std::size_t object_dim() const override { return static_cast<std::size_t>(head_.cols()); }
  std::size_t vocab_size() const override { return static_cast<std::size_t>(head_.rows()); }
  std::size_t context_count() const override { return shifts_.size(); }
  Vector decode(const Vector& o) const override { return head_ * o; }

  // Input subject vector whose forward output under context 0 is `o`
  // (least squares when the map is not onto).
  virtual Vector invert(const Vector& o) const = 0;

  const Matrix& head() const { return head_; }
  const Vector& context_shift(ContextId c) const;

 protected:
  Matrix head_;
  std::vector<Vector> shifts_;
};

// F(h, c) = A h + k + shift_c, one probe point.
class LinearModel final : public ReferenceModel {
 public:
  explicit LinearModel(const ModelSpec& spec);

  std::size_t subject_dim() const override { return static_cast<std::size_t>(a_.cols()); }
  std::size_t probe_count() const override { return 1; }
  Vector subject_state(const Vector& s, std::size_t probe) const override;
  Vector forward(const Vector& h, ContextId c, std::size_t probe) const override;
  std::optional<Matrix> analytic_jacobian(const Vector& h, ContextId c,
                                          std::size_t probe) const override;
  Vector invert(const Vector& o) const override;

  const Matrix& a() const { return a_; }
  const Vector& k() const { return k_; }

 private:
  Matrix a_;
  Vector k_;
};

// Residual tanh network h <- h + noise * U tanh(V h + a) over `depth` layers,
// followed by the affine readout A h + k + shift_c. Probe point p reads the
// state after layer p; the last probe point is exactly affine.
class MlpModel final : public ReferenceModel {
 public:
  struct Layer {
    Matrix u;
    Matrix v;
    Vector a;
  };

  explicit MlpModel(const ModelSpec& spec);

  std::size_t subject_dim() const override { return static_cast<std::size_t>(readout_.cols()); }
  std::size_t probe_count() const override { return layers_.size() + 1; }
  std::string probe_name(std::size_t probe) const override;
  Vector subject_state(const Vector& s, std::size_t probe) const override;
  Vector forward(const Vector& h, ContextId c, std::size_t probe) const override;
  std::optional<Matrix> analytic_jacobian(const Vector& h, ContextId c,
                                          std::size_t probe) const override;

  // Inverts the readout, then each residual layer with Newton steps.
  Vector invert(const Vector& o) const override;

  const std::vector<Layer>& layers() const { return layers_; }
  const Matrix& readout() const { return readout_; }
  const Vector& k() const { return k_; }
  double noise() const { return noise_; }

 private:
  Vector apply_layer(const Layer& l, const Vector& h) const;

  std::vector<Layer> layers_;
  Matrix readout_;
  Vector k_;
  double noise_;
};

std::unique_ptr<ReferenceModel> make_reference_model(const ModelSpec& spec);

}  // namespace linfreq::lre
