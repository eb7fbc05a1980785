#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "linfreq/corpus/count_table.hpp"

namespace linfreq::regress {

enum class TargetKind { kObject, kSubjectObject };

std::string to_string(TargetKind kind);
TargetKind parse_target_kind(const std::string& text);

// Column names, in table order.
inline constexpr const char* kLogprobCorrect = "logprob_correct";
inline constexpr const char* kFewshotAccuracy = "fewshot_accuracy";
inline constexpr const char* kFaithfulness = "faithfulness";
inline constexpr const char* kFaithProb = "faith_prob";
inline constexpr const char* kSoftCausality = "soft_causality";
inline constexpr const char* kHardCausality = "hard_causality";

std::vector<std::string> all_feature_names();  // LM features then LRE features
std::vector<std::string> lm_feature_names();

struct FeatureRow {
  std::uint32_t relation_id = 0;
  std::uint64_t example_id = 0;
  std::uint32_t object_id = 0;   // used for leakage exclusion, never as a feature
  std::vector<double> features;  // ordered as FeatureTable::feature_names
  double target_ln_count = 0.0;  // ln(1 + count)
  TargetKind target_kind = TargetKind::kObject;
};

struct FeatureTable {
  std::vector<std::string> feature_names;
  std::vector<FeatureRow> rows;

  std::size_t column(const std::string& name) const;  // throws if absent
  // Same rows restricted to the named columns, in the given order.
  FeatureTable select(std::span<const std::string> names) const;
  // Rows ordered by (relation_id, example_id).
  void sort_rows();
};

// Per-example measurements joined with corpus counts.
struct ExampleFeatures {
  std::uint32_t relation_id = 0;
  std::uint64_t example_id = 0;
  std::uint32_t subject_id = 0;
  std::uint32_t object_id = 0;
  double logprob_correct = 0.0;
  double fewshot_accuracy = 0.0;
  double faithfulness = 0.0;
  double faith_prob = 0.0;
  double soft_causality = 0.0;
  double hard_causality = 0.0;
};

// Keeps examples whose count is > 1: the object's occurrences, or the
// subject-object pair count. Term ids must be < term_count; offending ids are
// listed in the error.
FeatureTable build_feature_table(std::span<const ExampleFeatures> examples,
                                 const corpus::CountTable& counts, std::size_t term_count,
                                 TargetKind kind);

// Tab-separated: relation_id, example_id, object_id, features..., target_ln_count,
// target_kind. Values are written with 17 significant digits.
void write_feature_table(const FeatureTable& table, const std::filesystem::path& file);
FeatureTable read_feature_table(const std::filesystem::path& file);

}  // namespace linfreq::regress
