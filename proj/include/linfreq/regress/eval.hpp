#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "linfreq/regress/features.hpp"
#include "linfreq/regress/forest.hpp"

namespace linfreq::regress {

// exp(ln) - 1, clamped at 0.
double to_count(double ln_count);

// True when pred and truth (both clamped to >= 1) are within a factor of 10,
// i.e. |log10(pred) - log10(truth)| <= 1.
bool within_magnitude(double pred_count, double true_count);
// max/min of the clamped counts, the "346x" style error.
double magnitude_ratio(double pred_count, double true_count);
std::string ratio_label(double ratio);

double within_magnitude_accuracy(std::span<const double> pred_counts, std::span<const double> true_counts);
double mae_ln(std::span<const double> pred_ln, std::span<const double> true_ln);
double pearson(std::span<const double> x, std::span<const double> y);

struct Scores {
  std::size_t n = 0;
  double accuracy = 0.0;
  double mae_ln = 0.0;
};

// Both inputs in ln(1 + count) space.
Scores score_ln(std::span<const double> pred_ln, std::span<const double> true_ln);

struct Baselines {
  double mean_accuracy = 0.0;
  double random_accuracy = 0.0;
};

// Mean: every eval row gets the mean training ln-count. Random: each eval row
// gets one training ln-count drawn uniformly with replacement.
Baselines baselines(std::span<const double> train_ln, std::span<const double> eval_ln, std::uint64_t seed);

struct RelationScores {
  std::uint32_t relation_id = 0;
  Scores scores;
};

struct EvalReport {
  Scores overall;
  std::vector<RelationScores> per_relation;  // ascending relation_id
  Baselines baseline;
  std::vector<double> predicted_ln;  // one per eval row, table order
  std::vector<double> true_ln;
  // Set by cross_model_transfer.
  std::string source_model;
  std::string target_model;
  double token_ratio = 1.0;
};

// Scores the forest on eval; baselines come from train's targets.
EvalReport evaluate(const Forest& forest, const FeatureTable& train, const FeatureTable& eval,
                    std::uint64_t seed);

struct Fold {
  std::uint64_t seed = 0;
  std::uint32_t relation_id = 0;
  std::vector<std::size_t> train;  // row indices into the sorted table
  std::vector<std::size_t> eval;
};

// One fold per (seed, relation). Training rows exclude the held-out relation
// and every row whose object also occurs in it.
std::vector<Fold> loro_folds(const FeatureTable& sorted, std::span<const std::uint64_t> seeds);

struct CvOptions {
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3};
  ForestOptions forest;  // seed is replaced per fold
};

struct FoldResult {
  std::uint64_t seed = 0;
  std::uint32_t relation_id = 0;
  std::size_t n_train = 0;
  EvalReport report;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single fold
};

struct CvReport {
  std::vector<std::string> feature_names;
  std::vector<FoldResult> folds;
  MeanStd accuracy;
  MeanStd mae_ln;
  MeanStd mean_baseline;
  MeanStd random_baseline;
  double pooled_accuracy = 0.0;  // over every held-out prediction
};

// Fold forest seed is derive_seed(seed, relation_id).
CvReport loro_cv(const FeatureTable& table, const CvOptions& opts);

// Mean accuracy drop when one column is shuffled, per feature, in table order.
std::vector<double> permutation_importance(const Forest& forest, const FeatureTable& eval,
                                           std::size_t n_repeats, std::uint64_t seed);

struct ImportanceReport {
  std::vector<std::string> feature_names;
  std::vector<double> mean_drop;  // averaged over seeds and repeats
  std::vector<std::size_t> ranking;  // feature indices, largest drop first
};

// Pooled held-out accuracy drop per feature. For each seed the fold forests
// predict every row once; a column is shuffled across the whole table so a
// held-out relation sees other relations' values, not a reshuffle of its own.
ImportanceReport cv_permutation_importance(const FeatureTable& table, const CvOptions& opts,
                                           std::size_t n_repeats);

struct PcaMerge {
  FeatureTable table;  // subset replaced by one column at the first subset position
  std::string column_name;
  double explained_variance_ratio = 0.0;
  std::vector<double> loadings;  // on standardized columns, first one >= 0
};

PcaMerge pca_merge(const FeatureTable& table, std::span<const std::string> subset);

// Rescales eval truth to the source model's corpus size:
// count' = count / token_ratio with token_ratio = target tokens / source tokens.
struct TransferOptions {
  std::string source_model;
  std::string target_model;
  double token_ratio = 1.0;
  std::uint64_t seed = 0;
};

EvalReport cross_model_transfer(const Forest& forest, const FeatureTable& train, const FeatureTable& eval,
                                const TransferOptions& opts);

void write_eval_report(const EvalReport& report, const std::filesystem::path& file);
void write_cv_report(const CvReport& report, const std::filesystem::path& file);
void write_importance(const ImportanceReport& report, const std::filesystem::path& file);

}  // namespace linfreq::regress
