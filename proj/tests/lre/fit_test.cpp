#include <doctest.h>

#include "linfreq/error.hpp"
#include "linfreq/lre/lre.hpp"
#include "support/lre_oracle.hpp"

using namespace linfreq::lre;

namespace {

ModelSpec mlp(std::uint64_t seed, double noise = 0.5) {
  ModelSpec s;
  s.kind = ModelKind::kMlp;
  s.subject_dim = s.object_dim = 8;
  s.vocab_size = 16;
  s.depth = 2;
  s.seed = seed;
  s.noise = noise;
  return s;
}

}  // namespace

TEST_CASE("affine model: W = A and b = k for any examples") {
  ModelSpec spec;
  spec.subject_dim = 5;
  spec.object_dim = 7;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    spec.seed = seed;
    const LinearModel m(spec);
    linfreq::Rng rng(seed);
    const auto ex = oracle::random_examples(rng, 1 + seed * 3, 5, 1, 16);
    const auto lre = fit_lre(m, ex, 1.0, 0);
    CHECK((lre.w - m.a()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((lre.b - m.k()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(lre.rank == 5);
    CHECK(lre.fit_example_ids.size() == ex.size());
  }
}

TEST_CASE("single example gives its own Jacobian and intercept") {
  const MlpModel m(mlp(3));
  linfreq::Rng rng(1);
  const auto ex = oracle::random_examples(rng, 1, 8, 1, 16);
  const auto lre = fit_lre(m, ex, 1.0, 0);
  const Matrix j = oracle::mlp_jacobian(m, ex[0].subject_vector, 0);
  CHECK((lre.w - j).cwiseAbs().maxCoeff() < 1e-12);
  const Vector b = m.forward(ex[0].subject_vector, 0, 0) - j * ex[0].subject_vector;
  CHECK((lre.b - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mlp fit equals the term-by-term mean over 8 examples") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const MlpModel m(mlp(seed, 0.8));
    linfreq::Rng rng(seed + 50);
    auto ex = oracle::random_examples(rng, 12, 8, 3, 16);
    for (std::size_t i = 0; i < ex.size(); ++i) ex[i].context_id = static_cast<ContextId>(i % 5);
    const std::vector<std::size_t> ids = {0, 2, 3, 5, 7, 8, 10, 11};
    for (std::size_t probe = 0; probe < m.probe_count(); ++probe) {
      for (auto method : {JacobianMethod::kAuto, JacobianMethod::kCentralDifference}) {
        const auto lre = fit_lre(m, ex, ids, 1.0, probe, {method, 1e-4});
        Matrix w = Matrix::Zero(8, 8);
        Vector b = Vector::Zero(8);
        for (std::size_t id : ids) {
          const Vector h = m.subject_state(ex[id].subject_vector, probe);
          const Matrix j = oracle::mlp_jacobian(m, h, probe);
          w += j / 8.0;
          b += (m.forward(h, ex[id].context_id, probe) - j * h) / 8.0;
        }
        CHECK((lre.w - w).cwiseAbs().maxCoeff() < 1e-6);
        CHECK((lre.b - b).cwiseAbs().maxCoeff() < 1e-6);
        CHECK(lre.fit_example_ids == ids);
        CHECK(lre.probe == probe);
      }
    }
  }
}

TEST_CASE("fit_lre rejects bad inputs") {
  const MlpModel m(mlp(1));
  linfreq::Rng rng(2);
  auto ex = oracle::random_examples(rng, 3, 8, 1, 16);
  CHECK_THROWS_AS(fit_lre(m, std::span<const RelationExample>{}, 1.0, 0), linfreq::InvalidArgument);
  ex[1].subject_vector = Vector::Zero(5);
  CHECK_THROWS_WITH_AS(fit_lre(m, ex, 1.0, 0), doctest::Contains("example 1"),
                       linfreq::InvalidArgument);
  const std::vector<std::size_t> bad = {7};
  CHECK_THROWS_AS(fit_lre(m, ex, bad, 1.0, 0), linfreq::InvalidArgument);
}

TEST_CASE("lre_apply computes beta W s + b") {
  linfreq::Rng rng(4);
  Lre lre;
  lre.w = oracle::random_matrix(rng, 4, 6);
  lre.b = oracle::random_vector(rng, 4);
  const Vector s = oracle::random_vector(rng, 6);
  lre.beta = 0.0;
  CHECK(lre_apply(lre, s) == lre.b);
  lre.beta = 1.7;
  Vector expect(4);
  for (int i = 0; i < 4; ++i) {
    double acc = 0;
    for (int j = 0; j < 6; ++j) acc += lre.w(i, j) * s(j);
    expect(i) = 1.7 * acc + lre.b(i);
  }
  CHECK((lre_apply(lre, s) - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("beta 1 on an affine model reproduces the forward pass") {
  ModelSpec spec;
  spec.seed = 77;
  const LinearModel m(spec);
  linfreq::Rng rng(5);
  const auto ex = oracle::random_examples(rng, 8, spec.subject_dim, 1, 16);
  const auto lre = fit_lre(m, ex, 1.0, 0);
  for (const auto& e : ex) {
    CHECK((lre_apply(lre, e.subject_vector) - m.forward(e.subject_vector, 0, 0)).norm() < 1e-12);
  }
}
