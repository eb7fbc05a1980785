#include "linfreq/lre/lre.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "linfreq/error.hpp"
#include "linfreq/lre/svd.hpp"

namespace linfreq::lre {

namespace {

void check_finite(const Vector& v, const std::string& where) {
  if (!v.allFinite()) throw InvalidArgument("non-finite model output " + where);
}

// Model-side quantities reused by every metric at one probe point.
struct ProbeCache {
  std::vector<Vector> states;
  std::vector<Vector> outputs;
  std::vector<std::size_t> predictions;
};

ProbeCache cache_probe(const RelationModel& model, std::span<const RelationExample> examples,
                       std::size_t probe) {
  ProbeCache c;
  for (const auto& ex : examples) {
    c.states.push_back(model.subject_state(ex.subject_vector, probe));
    c.outputs.push_back(model.forward(c.states.back(), ex.context_id, probe));
    c.predictions.push_back(argmax(model.decode(c.outputs.back())));
  }
  return c;
}

void check_tokens(const RelationModel& model, std::span<const RelationExample> examples) {
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].object_token >= model.vocab_size()) {
      throw InvalidArgument("example " + std::to_string(i) + " object token " +
                            std::to_string(examples[i].object_token) + " outside vocabulary of " +
                            std::to_string(model.vocab_size()));
    }
  }
}

struct EditOutcome {
  bool soft = false;
  bool hard = false;
};

EditOutcome run_edit(const RelationModel& model, const Matrix& pinv, const ProbeCache& cache,
                     std::span<const RelationExample> examples, std::size_t probe, EditPair p) {
  const auto [s, t] = p;
  const Vector state = cache.states[s] + pinv * (cache.outputs[t] - cache.outputs[s]);
  const Vector scores = model.decode(model.forward(state, examples[s].context_id, probe));
  const auto target = static_cast<Eigen::Index>(examples[t].object_token);
  const auto source = static_cast<Eigen::Index>(examples[s].object_token);
  return {scores(target) > scores(source), argmax(scores) == examples[t].object_token};
}

}  // namespace

Matrix jacobian(const RelationModel& model, const Vector& h, ContextId c, std::size_t probe,
                const JacobianOptions& opts) {
  if (opts.method != JacobianMethod::kCentralDifference) {
    if (auto j = model.analytic_jacobian(h, c, probe)) return *std::move(j);
    if (opts.method == JacobianMethod::kAnalytic) {
      throw InvalidArgument("model does not provide an analytic Jacobian");
    }
  }
  if (!(opts.step > 0)) throw InvalidArgument("finite-difference step must be positive");
  Matrix j(static_cast<Eigen::Index>(model.object_dim()), h.size());
  Vector x = h;
  for (Eigen::Index k = 0; k < h.size(); ++k) {
    const double step = opts.step * (1.0 + std::abs(h(k)));
    x(k) = h(k) + step;
    const Vector plus = model.forward(x, c, probe);
    x(k) = h(k) - step;
    const Vector minus = model.forward(x, c, probe);
    x(k) = h(k);
    const std::string where = "at coordinate " + std::to_string(k);
    check_finite(plus, where);
    check_finite(minus, where);
    // Divide by the realised spacing so rounding in h +- step cancels.
    j.col(k) = (plus - minus) / ((h(k) + step) - (h(k) - step));
  }
  return j;
}

Lre fit_lre(const RelationModel& model, std::span<const RelationExample> examples,
            std::span<const std::size_t> fit_ids, double beta, std::size_t probe,
            const JacobianOptions& opts) {
  if (fit_ids.empty()) throw InvalidArgument("fit_lre needs at least one example");
  const auto ds = static_cast<Eigen::Index>(model.subject_dim());
  const auto dout = static_cast<Eigen::Index>(model.object_dim());
  Lre lre;
  lre.w = Matrix::Zero(dout, ds);
  lre.b = Vector::Zero(dout);
  for (std::size_t id : fit_ids) {
    if (id >= examples.size()) {
      throw InvalidArgument("fit example id " + std::to_string(id) + " out of range");
    }
    const auto& ex = examples[id];
    if (ex.subject_vector.size() != ds) {
      throw InvalidArgument("example " + std::to_string(id) + " has subject dimension " +
                            std::to_string(ex.subject_vector.size()) + ", expected " +
                            std::to_string(ds));
    }
    const Vector h = model.subject_state(ex.subject_vector, probe);
    const Vector o = model.forward(h, ex.context_id, probe);
    check_finite(o, "for example " + std::to_string(id));
    const Matrix j = jacobian(model, h, ex.context_id, probe, opts);
    lre.w += j;
    lre.b += o - j * h;
  }
  const double n = static_cast<double>(fit_ids.size());
  lre.w /= n;
  lre.b /= n;
  lre.beta = beta;
  lre.rank = static_cast<std::size_t>(std::min(ds, dout));
  lre.probe = probe;
  lre.fit_example_ids.assign(fit_ids.begin(), fit_ids.end());
  return lre;
}

Lre fit_lre(const RelationModel& model, std::span<const RelationExample> examples, double beta,
            std::size_t probe, const JacobianOptions& opts) {
  std::vector<std::size_t> ids(examples.size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  return fit_lre(model, examples, ids, beta, probe, opts);
}

Vector lre_apply(const Lre& lre, const Vector& h) { return lre.beta * (lre.w * h) + lre.b; }

std::size_t argmax(const Vector& scores) {
  if (scores.size() == 0) throw InvalidArgument("argmax of empty score vector");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < scores.size(); ++i) {
    if (scores(i) > scores(best)) best = i;
  }
  return static_cast<std::size_t>(best);
}

Vector log_softmax(const Vector& scores) {
  const double m = scores.maxCoeff();
  const double lse = m + std::log((scores.array() - m).exp().sum());
  return (scores.array() - lse).matrix();
}

double faithfulness(const Lre& lre, const RelationModel& model,
                    std::span<const RelationExample> examples) {
  if (examples.empty()) throw InvalidArgument("faithfulness needs a nonempty evaluation set");
  const auto cache = cache_probe(model, examples, lre.probe);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    hits += argmax(model.decode(lre_apply(lre, cache.states[i]))) == cache.predictions[i];
  }
  return double(hits) / double(examples.size());
}

double faith_prob(const Lre& lre, const RelationModel& model,
                  std::span<const RelationExample> examples) {
  if (examples.empty()) throw InvalidArgument("faith_prob needs a nonempty evaluation set");
  check_tokens(model, examples);
  double sum = 0;
  for (const auto& ex : examples) {
    const Vector h = model.subject_state(ex.subject_vector, lre.probe);
    sum += log_softmax(model.decode(lre_apply(lre, h)))(static_cast<Eigen::Index>(ex.object_token));
  }
  return sum / double(examples.size());
}

EditResult causal_edit(const Lre& lre, const RelationModel& model, const RelationExample& source,
                       const RelationExample& target, std::size_t rank) {
  const Matrix pinv = low_rank_pinv(lre.w, rank);
  const Vector hs = model.subject_state(source.subject_vector, lre.probe);
  const Vector ht = model.subject_state(target.subject_vector, lre.probe);
  const Vector os = model.forward(hs, source.context_id, lre.probe);
  const Vector ot = model.forward(ht, target.context_id, lre.probe);
  EditResult r;
  r.state = hs + pinv * (ot - os);
  r.scores = model.decode(model.forward(r.state, source.context_id, lre.probe));
  r.token = argmax(r.scores);
  return r;
}

std::vector<EditPair> edit_pairs(std::span<const RelationExample> examples) {
  std::vector<EditPair> pairs;
  for (std::size_t s = 0; s < examples.size(); ++s) {
    for (std::size_t t = 0; t < examples.size(); ++t) {
      if (examples[s].object_token != examples[t].object_token) pairs.emplace_back(s, t);
    }
  }
  return pairs;
}

CausalityScores causality(const Lre& lre, const RelationModel& model,
                          std::span<const RelationExample> examples,
                          std::span<const EditPair> pairs, std::size_t rank) {
  if (pairs.empty()) throw InvalidArgument("causality needs a nonempty set of edit pairs");
  check_tokens(model, examples);
  const Matrix pinv = low_rank_pinv(lre.w, rank);
  const auto cache = cache_probe(model, examples, lre.probe);
  std::size_t soft = 0;
  std::size_t hard = 0;
  for (const auto& p : pairs) {
    if (p.first >= examples.size() || p.second >= examples.size()) {
      throw InvalidArgument("edit pair refers to a missing example");
    }
    const auto e = run_edit(model, pinv, cache, examples, lre.probe, p);
    soft += e.soft;
    hard += e.hard;
  }
  const double n = double(pairs.size());
  return {double(soft) / n, double(hard) / n};
}

Evaluation evaluate(const Lre& lre, const RelationModel& model,
                    std::span<const RelationExample> examples) {
  if (examples.empty()) throw InvalidArgument("evaluate needs a nonempty evaluation set");
  check_tokens(model, examples);
  const auto pairs = edit_pairs(examples);
  if (pairs.empty()) throw InvalidArgument("evaluation needs examples with at least two objects");
  const Matrix pinv = low_rank_pinv(lre.w, lre.rank);
  const auto cache = cache_probe(model, examples, lre.probe);
  Evaluation ev;
  ev.examples.resize(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const Vector scores = model.decode(lre_apply(lre, cache.states[i]));
    auto& m = ev.examples[i];
    m.faithful = argmax(scores) == cache.predictions[i] ? 1.0 : 0.0;
    m.faith_prob = log_softmax(scores)(static_cast<Eigen::Index>(examples[i].object_token));
  }
  std::size_t soft = 0;
  std::size_t hard = 0;
  for (const auto& p : pairs) {
    const auto e = run_edit(model, pinv, cache, examples, lre.probe, p);
    auto& m = ev.examples[p.first];
    m.soft_causality += e.soft;
    m.hard_causality += e.hard;
    ++m.n_edits;
    soft += e.soft;
    hard += e.hard;
  }
  double faithful = 0;
  double logp = 0;
  for (auto& m : ev.examples) {
    if (m.n_edits > 0) {
      m.soft_causality /= double(m.n_edits);
      m.hard_causality /= double(m.n_edits);
    }
    faithful += m.faithful;
    logp += m.faith_prob;
  }
  const double n = double(examples.size());
  ev.relation = {faithful / n, logp / n, double(soft) / double(pairs.size()),
                 double(hard) / double(pairs.size()), examples.size()};
  return ev;
}

LmFeatures lm_features(const RelationModel& model, const RelationExample& example,
                       std::size_t trials) {
  if (trials == 0) throw InvalidArgument("few-shot accuracy needs at least one trial");
  if (example.object_token >= model.vocab_size()) {
    throw InvalidArgument("object token outside model vocabulary");
  }
  const auto token = static_cast<Eigen::Index>(example.object_token);
  LmFeatures f;
  const Vector h = model.subject_state(example.subject_vector, 0);
  f.logprob_correct = log_softmax(model.decode(model.forward(h, example.context_id, 0)))(token);
  std::size_t correct = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto c = static_cast<ContextId>((example.context_id + t) % model.context_count());
    correct += argmax(model.decode(model.forward(h, c, 0))) == example.object_token;
  }
  f.fewshot_accuracy = double(correct) / double(trials);
  return f;
}

}  // namespace linfreq::lre
