#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "linfreq/error.hpp"
#include "linfreq/lre/lre.hpp"
#include "linfreq/lre/svd.hpp"
#include "support/lre_oracle.hpp"

using namespace linfreq::lre;

namespace {

ModelSpec mlp(std::uint64_t seed, double noise) {
  ModelSpec s;
  s.kind = ModelKind::kMlp;
  s.subject_dim = s.object_dim = 8;
  s.vocab_size = 12;
  s.depth = 2;
  s.seed = seed;
  s.noise = noise;
  return s;
}

// Decodes with a caller-chosen head; forward is the identity.
class HeadModel final : public RelationModel {
 public:
  explicit HeadModel(Matrix head) : head_(std::move(head)) {}
  std::size_t subject_dim() const override { return static_cast<std::size_t>(head_.cols()); }
  std::size_t object_dim() const override { return static_cast<std::size_t>(head_.cols()); }
  std::size_t vocab_size() const override { return static_cast<std::size_t>(head_.rows()); }
  std::size_t probe_count() const override { return 1; }
  std::size_t context_count() const override { return 1; }
  Vector subject_state(const Vector& s, std::size_t) const override { return s; }
  Vector forward(const Vector& h, ContextId, std::size_t) const override { return h; }
  Vector decode(const Vector& o) const override { return head_ * o; }

 private:
  Matrix head_;
};

// Always outputs the same vector whatever the subject.
class FixedModel final : public RelationModel {
 public:
  explicit FixedModel(Vector out) : out_(std::move(out)) {}
  std::size_t subject_dim() const override { return 3; }
  std::size_t object_dim() const override { return static_cast<std::size_t>(out_.size()); }
  std::size_t vocab_size() const override { return static_cast<std::size_t>(out_.size()); }
  std::size_t probe_count() const override { return 1; }
  std::size_t context_count() const override { return 1; }
  Vector subject_state(const Vector& s, std::size_t) const override { return s; }
  Vector forward(const Vector&, ContextId, std::size_t) const override { return out_; }
  Vector decode(const Vector& o) const override { return o; }

 private:
  Vector out_;
};

}  // namespace

TEST_CASE("argmax breaks ties toward the lowest index") {
  Vector v(5);
  v << 1, 3, 3, 0, 3;
  CHECK(argmax(v) == 1);
  CHECK(argmax(Vector::Zero(4)) == 0);
}

TEST_CASE("affine models: faithfulness and full-rank causality are exact") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ModelSpec spec;
    spec.subject_dim = 10;
    spec.object_dim = 10;
    spec.vocab_size = 16;
    spec.seed = seed;
    const LinearModel m(spec);
    linfreq::Rng rng(seed);
    auto ex = oracle::random_examples(rng, 12, 10, 4, 16);
    oracle::label_with_predictions(m, ex);
    const auto lre = fit_lre(m, ex, 1.0, 0);
    CHECK(faithfulness(lre, m, ex) == 1.0);
    const auto pairs = edit_pairs(ex);
    REQUIRE(!pairs.empty());
    const auto c = causality(lre, m, ex, pairs, 10);
    CHECK(c.hard == 1.0);
    CHECK(c.soft == 1.0);
    for (const auto& [s, t] : pairs) CHECK(causal_edit(lre, m, ex[s], ex[t], 10).token == ex[t].object_token);
  }
}

TEST_CASE("zero W with bias on the model's fixed prediction is fully faithful") {
  Vector out = Vector::Zero(5);
  out(3) = 2.0;
  const FixedModel m(out);
  Lre lre;
  lre.w = Matrix::Zero(5, 3);
  lre.b = out;
  linfreq::Rng rng(1);
  const auto ex = oracle::random_examples(rng, 7, 3, 1, 5);
  CHECK(faithfulness(lre, m, ex) == 1.0);
}

TEST_CASE("faithfulness on an mlp equals per-example argmax comparison") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const MlpModel m(mlp(seed, 0.9));
    linfreq::Rng rng(seed + 10);
    auto ex = oracle::random_examples(rng, 15, 8, 3, 12);
    for (auto& e : ex) e.subject_vector *= 2.0;
    for (std::size_t probe = 0; probe < m.probe_count(); ++probe) {
      const auto lre = fit_lre(m, ex, 1.3, probe);
      std::size_t hits = 0;
      for (const auto& e : ex) {
        const Vector h = m.subject_state(e.subject_vector, probe);
        const Vector approx = lre.beta * lre.w * h + lre.b;
        hits += oracle::first_argmax(m.head() * approx) ==
                oracle::first_argmax(m.head() * m.forward(h, e.context_id, probe));
      }
      CHECK(faithfulness(lre, m, ex) == double(hits) / 15.0);
    }
  }
}

TEST_CASE("faith_prob: uniform decode, concentrated decode and hand normalisation") {
  const HeadModel zero(Matrix::Zero(6, 3));
  Lre lre;
  lre.w = Matrix::Identity(3, 3);
  lre.b = Vector::Zero(3);
  linfreq::Rng rng(2);
  const auto ex = oracle::random_examples(rng, 5, 3, 2, 6);
  CHECK(faith_prob(lre, zero, ex) == doctest::Approx(std::log(1.0 / 6.0)).epsilon(1e-12));

  Matrix head = Matrix::Zero(4, 1);
  head(2, 0) = 1.0;
  const HeadModel peaked(head);
  Lre big;
  big.w = Matrix::Zero(1, 1);
  big.b = Vector::Constant(1, 800.0);
  std::vector<RelationExample> one(1);
  one[0].subject_vector = Vector::Zero(1);
  one[0].object_token = 2;
  CHECK(faith_prob(big, peaked, one) > -1e-12);
  CHECK(faith_prob(big, peaked, one) <= 0.0);

  for (int t = 0; t < 20; ++t) {
    const HeadModel m(oracle::random_matrix(rng, 7, 4));
    Lre r;
    r.w = oracle::random_matrix(rng, 4, 4);
    r.b = oracle::random_vector(rng, 4);
    r.beta = 0.8;
    const auto e = oracle::random_examples(rng, 6, 4, 3, 7);
    double expect = 0;
    for (const auto& x : e) {
      const Vector scores = m.decode(0.8 * r.w * x.subject_vector + r.b);
      expect += oracle::softmax_logprob(scores)(static_cast<Eigen::Index>(x.object_token));
    }
    CHECK(std::abs(faith_prob(r, m, e) - expect / 6.0) < 1e-9);
  }
}

TEST_CASE("causal edit: zero displacement leaves the prediction unchanged") {
  const MlpModel m(mlp(5, 0.7));
  linfreq::Rng rng(3);
  auto ex = oracle::random_examples(rng, 2, 8, 2, 12);
  const auto lre = fit_lre(m, ex, 1.0, 0);
  ex[1] = ex[0];
  ex[1].object_token = 11;
  const auto r = causal_edit(lre, m, ex[0], ex[1], 8);
  CHECK((r.state - ex[0].subject_vector).norm() == 0.0);
  CHECK(r.token == oracle::first_argmax(m.decode(m.forward(ex[0].subject_vector, 0, 0))));
}

TEST_CASE("causal edit on an mlp moves the state by the oracle displacement") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const MlpModel m(mlp(seed, 0.6));
    linfreq::Rng rng(seed + 20);
    const auto ex = oracle::random_examples(rng, 10, 8, 4, 12);
    for (std::size_t probe = 0; probe < m.probe_count(); ++probe) {
      const auto lre = fit_lre(m, ex, 1.0, probe);
      for (std::size_t rank : {2u, 5u, 8u}) {
        const Matrix pinv = oracle::eigen_pinv(lre.w, rank);
        const Vector hs = m.subject_state(ex[1].subject_vector, probe);
        const Vector ht = m.subject_state(ex[6].subject_vector, probe);
        const Vector expect = hs + pinv * (m.forward(ht, 0, probe) - m.forward(hs, 0, probe));
        const auto r = causal_edit(lre, m, ex[1], ex[6], rank);
        CHECK((r.state - expect).cwiseAbs().maxCoeff() < 1e-8);
        CHECK(r.token == oracle::first_argmax(m.decode(m.forward(r.state, 0, probe))));
      }
    }
  }
}

TEST_CASE("causality on an mlp equals pairwise enumeration") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const MlpModel m(mlp(seed, 0.9));
    linfreq::Rng rng(seed + 30);
    auto ex = oracle::random_examples(rng, 8, 8, 4, 12);
    for (auto& e : ex) e.subject_vector *= 1.5;
    const auto lre = fit_lre(m, ex, 1.0, 1);
    auto all = edit_pairs(ex);
    REQUIRE(all.size() >= 20);
    std::vector<EditPair> pairs(all.begin(), all.begin() + 20);
    for (std::size_t rank : {1u, 4u, 8u}) {
      const Matrix pinv = oracle::eigen_pinv(lre.w, rank);
      double soft = 0;
      double hard = 0;
      for (const auto& [s, t] : pairs) {
        const Vector hs = m.subject_state(ex[s].subject_vector, 1);
        const Vector ht = m.subject_state(ex[t].subject_vector, 1);
        const Vector scores =
            m.head() * m.forward(hs + pinv * (m.forward(ht, 0, 1) - m.forward(hs, 0, 1)), 0, 1);
        const auto target = static_cast<Eigen::Index>(ex[t].object_token);
        const auto source = static_cast<Eigen::Index>(ex[s].object_token);
        soft += scores(target) > scores(source);
        hard += oracle::first_argmax(scores) == ex[t].object_token;
      }
      const auto c = causality(lre, m, ex, pairs, rank);
      CHECK(c.soft == soft / 20.0);
      CHECK(c.hard == hard / 20.0);
    }
  }
}

TEST_CASE("edit pairs are ordered pairs with distinct objects") {
  linfreq::Rng rng(4);
  const auto ex = oracle::random_examples(rng, 6, 2, 2, 4);  // objects alternate
  const auto pairs = edit_pairs(ex);
  CHECK(pairs.size() == 18);
  for (const auto& [s, t] : pairs) CHECK(ex[s].object_token != ex[t].object_token);
  CHECK_THROWS_AS(causality(Lre{Matrix::Identity(2, 2), Vector::Zero(2)}, HeadModel(Matrix::Identity(4, 2)),
                            ex, std::span<const EditPair>{}, 1),
                  linfreq::InvalidArgument);
}

TEST_CASE("evaluate agrees with the individual metrics and is order invariant") {
  const MlpModel m(mlp(9, 0.8));
  linfreq::Rng rng(6);
  auto ex = oracle::random_examples(rng, 14, 8, 4, 12);
  for (auto& e : ex) e.subject_vector *= 1.5;
  auto lre = fit_lre(m, ex, 1.2, 1);
  lre.rank = 5;
  const auto ev = evaluate(lre, m, ex);
  const auto pairs = edit_pairs(ex);
  const auto c = causality(lre, m, ex, pairs, 5);
  CHECK(ev.relation.faithfulness == doctest::Approx(faithfulness(lre, m, ex)).epsilon(1e-15));
  CHECK(ev.relation.faith_prob == doctest::Approx(faith_prob(lre, m, ex)).epsilon(1e-12));
  CHECK(ev.relation.soft_causality == c.soft);
  CHECK(ev.relation.hard_causality == c.hard);
  CHECK(ev.relation.n_eval == 14);
  double weighted = 0;
  for (std::size_t i = 0; i < ev.examples.size(); ++i) {
    const auto& e = ev.examples[i];
    const auto same = std::count_if(ex.begin(), ex.end(), [&](const RelationExample& x) {
      return x.object_token == ex[i].object_token;
    });
    CHECK(e.n_edits == ex.size() - static_cast<std::size_t>(same));
    CHECK(e.hard_causality >= 0.0);
    CHECK(e.hard_causality <= 1.0);
    CHECK(e.soft_causality <= 1.0);
    weighted += e.hard_causality * double(e.n_edits);
  }
  CHECK(weighted / double(pairs.size()) == doctest::Approx(c.hard).epsilon(1e-12));

  auto shuffled = ex;
  std::reverse(shuffled.begin(), shuffled.end());
  const auto ev2 = evaluate(lre, m, shuffled);
  CHECK(ev2.relation.faithfulness == ev.relation.faithfulness);
  CHECK(ev2.relation.faith_prob == doctest::Approx(ev.relation.faith_prob).epsilon(1e-14));
  CHECK(ev2.relation.soft_causality == ev.relation.soft_causality);
  CHECK(ev2.relation.hard_causality == ev.relation.hard_causality);
}

TEST_CASE("metrics stay finite when fit on mispredicted examples") {
  const MlpModel m(mlp(13, 0.9));
  linfreq::Rng rng(7);
  auto ex = oracle::random_examples(rng, 10, 8, 5, 12);
  // Relabel every example with a token the model does not predict.
  for (auto& e : ex) {
    const auto pred = oracle::first_argmax(m.decode(m.forward(e.subject_vector, 0, 0)));
    e.object_token = (pred + 1 + e.subject_id % 3) % 12;
  }
  const auto ev = evaluate(fit_lre(m, ex, 1.0, 0), m, ex);
  CHECK(std::isfinite(ev.relation.faith_prob));
  CHECK(ev.relation.faith_prob <= 0.0);
  for (double f : {ev.relation.faithfulness, ev.relation.soft_causality, ev.relation.hard_causality}) {
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
  }
}

TEST_CASE("positive beta never changes the decoded argmax when b = 0") {
  linfreq::Rng rng(8);
  const HeadModel m(oracle::random_matrix(rng, 9, 5));
  Lre lre;
  lre.w = oracle::random_matrix(rng, 5, 5);
  lre.b = Vector::Zero(5);
  for (int t = 0; t < 100; ++t) {
    const Vector s = oracle::random_vector(rng, 5);
    lre.beta = 1.0;
    const auto ref = argmax(m.decode(lre_apply(lre, s)));
    for (double beta : {0.1, 0.5, 2.0, 5.0}) {
      lre.beta = beta;
      CHECK(argmax(m.decode(lre_apply(lre, s))) == ref);
    }
  }
}

TEST_CASE("lm features: own-context log-probability and rotated-context accuracy") {
  ModelSpec spec;
  spec.kind = ModelKind::kLinear;
  spec.subject_dim = spec.object_dim = 6;
  spec.vocab_size = 10;
  spec.context_scale = 0.0;  // every context behaves like the prompt
  spec.seed = 3;
  const LinearModel m(spec);
  linfreq::Rng rng(9);
  auto ex = oracle::random_examples(rng, 1, 6, 1, 10)[0];
  const Vector scores = m.decode(m.forward(ex.subject_vector, 0, 0));
  ex.object_token = oracle::first_argmax(scores);
  const auto f = lm_features(m, ex);
  CHECK(f.logprob_correct ==
        doctest::Approx(oracle::softmax_logprob(scores)(static_cast<Eigen::Index>(ex.object_token))));
  CHECK(f.fewshot_accuracy == 1.0);
  ex.object_token = (ex.object_token + 1) % 10;
  CHECK(lm_features(m, ex).fewshot_accuracy == 0.0);
  CHECK_THROWS_AS(lm_features(m, ex, 0), linfreq::InvalidArgument);
}
