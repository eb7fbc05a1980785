#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "linfreq/lre/model.hpp"

namespace linfreq::lre {

struct RelationExample {
  std::uint32_t subject_id = 0;  // term ids in the corpus dictionary
  std::uint32_t object_id = 0;
  std::string subject_surface;
  std::string object_surface;
  Vector subject_vector;         // model input, read at probe point 0
  ContextId context_id = 0;
  std::size_t object_token = 0;  // index into the model vocabulary
};

// Affine stand-in beta * W h + b for one relation at one probe point.
struct Lre {
  Matrix w;
  Vector b;
  double beta = 1.0;
  std::size_t rank = 0;  // used by causal edits only
  std::size_t probe = 0;
  std::vector<std::size_t> fit_example_ids;
};

enum class JacobianMethod {
  kAuto,               // analytic when the model supplies it
  kAnalytic,
  kCentralDifference,
};

struct JacobianOptions {
  JacobianMethod method = JacobianMethod::kAuto;
  double step = 1e-4;  // scaled per coordinate by (1 + |h_j|)
};

// d forward / d h at h. Throws if forward is non-finite at a probed
// coordinate, or if an analytic Jacobian is requested but unavailable.
Matrix jacobian(const RelationModel& model, const Vector& h, ContextId c, std::size_t probe,
                const JacobianOptions& opts = {});

// W = mean of per-example Jacobians, b = mean of F(h_i) - J_i h_i, over the
// examples named by fit_ids. Examples are never filtered by correctness.
// rank defaults to min(object_dim, subject_dim).
Lre fit_lre(const RelationModel& model, std::span<const RelationExample> examples,
            std::span<const std::size_t> fit_ids, double beta, std::size_t probe,
            const JacobianOptions& opts = {});
Lre fit_lre(const RelationModel& model, std::span<const RelationExample> examples, double beta,
            std::size_t probe, const JacobianOptions& opts = {});

Vector lre_apply(const Lre& lre, const Vector& h);

// Lowest index wins ties.
std::size_t argmax(const Vector& scores);
Vector log_softmax(const Vector& scores);

double faithfulness(const Lre& lre, const RelationModel& model,
                    std::span<const RelationExample> examples);
double faith_prob(const Lre& lre, const RelationModel& model,
                  std::span<const RelationExample> examples);

struct EditResult {
  Vector state;   // edited subject state at the probe point
  Vector scores;  // decoded scores after the edit
  std::size_t token = 0;
};

// Moves the source state by pinv_rank(W) (o_target - o_source), where the o
// are model outputs, then reruns the model under the source context.
EditResult causal_edit(const Lre& lre, const RelationModel& model, const RelationExample& source,
                       const RelationExample& target, std::size_t rank);

using EditPair = std::pair<std::size_t, std::size_t>;  // (source, target)

// Ordered pairs whose object tokens differ.
std::vector<EditPair> edit_pairs(std::span<const RelationExample> examples);

struct CausalityScores {
  double soft = 0.0;  // target score strictly above the source object's score
  double hard = 0.0;  // target token is the top prediction
};

CausalityScores causality(const Lre& lre, const RelationModel& model,
                          std::span<const RelationExample> examples,
                          std::span<const EditPair> pairs, std::size_t rank);

struct LreMetrics {
  double faithfulness = 0.0;
  double faith_prob = 0.0;
  double soft_causality = 0.0;
  double hard_causality = 0.0;
  std::size_t n_eval = 0;
};

// Same quantities for one example; the causality fields are over the edit
// pairs in which the example is the source.
struct ExampleMetrics {
  double faithful = 0.0;
  double faith_prob = 0.0;
  double soft_causality = 0.0;
  double hard_causality = 0.0;
  std::size_t n_edits = 0;
};

struct Evaluation {
  LreMetrics relation;
  std::vector<ExampleMetrics> examples;
};

// Faithfulness terms over all examples, causality over edit_pairs(examples)
// at lre.rank. Throws if no two examples have different objects.
Evaluation evaluate(const Lre& lre, const RelationModel& model,
                    std::span<const RelationExample> examples);

struct LmFeatures {
  double logprob_correct = 0.0;   // under the example's own context
  double fewshot_accuracy = 0.0;  // over `trials` rotated contexts
};

LmFeatures lm_features(const RelationModel& model, const RelationExample& example,
                       std::size_t trials = 5);

}  // namespace linfreq::lre
