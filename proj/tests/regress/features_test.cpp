#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "linfreq/error.hpp"
#include "linfreq/regress/features.hpp"

using namespace linfreq::regress;
using linfreq::corpus::CountTable;

namespace {

ExampleFeatures ex(std::uint32_t rel, std::uint64_t id, std::uint32_t s, std::uint32_t o, double base) {
  ExampleFeatures e;
  e.relation_id = rel;
  e.example_id = id;
  e.subject_id = s;
  e.object_id = o;
  e.logprob_correct = -base;
  e.fewshot_accuracy = base / 10;
  e.faithfulness = base / 20;
  e.faith_prob = -2 * base;
  e.soft_causality = base / 30;
  e.hard_causality = base / 40;
  return e;
}

struct Fixture {
  std::vector<ExampleFeatures> examples;
  CountTable counts;
  std::map<std::uint32_t, std::uint64_t> occ;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> pairs;

  Fixture() {
    // Three relations over terms 0..9.
    examples = {ex(0, 0, 0, 5, 1), ex(0, 1, 1, 5, 2), ex(0, 2, 2, 6, 3), ex(1, 3, 3, 7, 4),
                ex(1, 4, 4, 8, 5), ex(2, 5, 0, 9, 6), ex(2, 6, 9, 1, 7), ex(2, 7, 3, 2, 8)};
    occ = {{5, 40}, {6, 1}, {7, 0}, {8, 3}, {9, 2}, {1, 12}, {2, 1}};
    pairs = {{{0, 5}, 7}, {{1, 5}, 1}, {{2, 6}, 2}, {{3, 7}, 0}, {{4, 8}, 9}, {{0, 9}, 1}, {{1, 9}, 3}, {{2, 3}, 5}};
    for (auto [t, n] : occ) {
      if (n) counts.occurrences[t] = n;
    }
    for (auto [p, n] : pairs) {
      if (n) counts.add_pair(p.first, p.second, n);
    }
  }
};

}  // namespace

TEST_CASE("object-kind table keeps exactly the hand-filtered rows") {
  Fixture fx;
  const auto t = build_feature_table(fx.examples, fx.counts, 10, TargetKind::kObject);
  std::vector<std::uint64_t> expected_ids;
  for (const auto& e : fx.examples) {
    const auto it = fx.occ.find(e.object_id);
    if (it != fx.occ.end() && it->second > 1) expected_ids.push_back(e.example_id);
  }
  REQUIRE(t.rows.size() == expected_ids.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    CHECK(r.example_id == expected_ids[i]);
    const auto& e = fx.examples[r.example_id];
    CHECK(r.target_ln_count == doctest::Approx(std::log(1.0 + double(fx.occ.at(e.object_id)))).epsilon(1e-15));
    CHECK(r.target_ln_count >= std::log(2.0));
    CHECK(r.object_id == e.object_id);
    CHECK(r.features == std::vector<double>{e.logprob_correct, e.fewshot_accuracy, e.faithfulness, e.faith_prob,
                                            e.soft_causality, e.hard_causality});
  }
  CHECK(t.feature_names == all_feature_names());
}

TEST_CASE("subject-object table uses order-insensitive pair counts") {
  Fixture fx;
  const auto t = build_feature_table(fx.examples, fx.counts, 10, TargetKind::kSubjectObject);
  std::vector<std::uint64_t> expected_ids;
  for (const auto& e : fx.examples) {
    const auto key = std::minmax(e.subject_id, e.object_id);
    const auto it = fx.pairs.find({key.first, key.second});
    if (it != fx.pairs.end() && it->second > 1) expected_ids.push_back(e.example_id);
  }
  REQUIRE(t.rows.size() == expected_ids.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) CHECK(t.rows[i].example_id == expected_ids[i]);
  for (const auto& r : t.rows) CHECK(r.target_kind == TargetKind::kSubjectObject);
}

TEST_CASE("count of one or zero is excluded") {
  CountTable c;
  c.occurrences[0] = 1;
  const std::vector<ExampleFeatures> e = {ex(0, 0, 1, 0, 1), ex(0, 1, 1, 2, 1)};
  CHECK(build_feature_table(e, c, 3, TargetKind::kObject).rows.empty());
}

TEST_CASE("unknown term ids are listed in the error") {
  Fixture fx;
  auto e = fx.examples;
  e.push_back(ex(0, 99, 17, 23, 1));
  try {
    build_feature_table(e, fx.counts, 10, TargetKind::kSubjectObject);
    FAIL("expected an error");
  } catch (const linfreq::InvalidArgument& err) {
    const std::string msg = err.what();
    CHECK(msg.find("17") != std::string::npos);
    CHECK(msg.find("23") != std::string::npos);
  }
}

TEST_CASE("feature table round-trips through TSV bit-exactly") {
  Fixture fx;
  auto t = build_feature_table(fx.examples, fx.counts, 10, TargetKind::kObject);
  t.rows[0].features[0] = -0.1 - 1e-17;
  const auto path = std::filesystem::temp_directory_path() / "linfreq_features_rt.tsv";
  write_feature_table(t, path);
  const auto back = read_feature_table(path);
  CHECK(back.feature_names == t.feature_names);
  REQUIRE(back.rows.size() == t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    CHECK(back.rows[i].relation_id == t.rows[i].relation_id);
    CHECK(back.rows[i].example_id == t.rows[i].example_id);
    CHECK(back.rows[i].object_id == t.rows[i].object_id);
    CHECK(back.rows[i].features == t.rows[i].features);
    CHECK(back.rows[i].target_ln_count == t.rows[i].target_ln_count);
    CHECK(back.rows[i].target_kind == t.rows[i].target_kind);
  }
  std::filesystem::remove(path);
}

TEST_CASE("select reorders and rejects unknown columns") {
  Fixture fx;
  const auto t = build_feature_table(fx.examples, fx.counts, 10, TargetKind::kObject);
  const std::vector<std::string> names = {kHardCausality, kLogprobCorrect};
  const auto s = t.select(names);
  CHECK(s.feature_names == names);
  CHECK(s.rows[0].features[0] == t.rows[0].features[5]);
  CHECK(s.rows[0].features[1] == t.rows[0].features[0]);
  const std::vector<std::string> bad = {"relation_id"};
  CHECK_THROWS_AS(t.select(bad), linfreq::InvalidArgument);
}

TEST_CASE("malformed table files are rejected with a location") {
  const auto path = std::filesystem::temp_directory_path() / "linfreq_features_bad.tsv";
  {
    std::ofstream out(path);
    out << "relation_id\texample_id\tobject_id\tx\ttarget_ln_count\ttarget_kind\n0\t1\t2\tabc\t1.0\tobject\n";
  }
  try {
    read_feature_table(path);
    FAIL("expected an error");
  } catch (const linfreq::IoError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  std::filesystem::remove(path);
}
