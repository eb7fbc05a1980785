#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "linfreq/regress/features.hpp"

namespace linfreq::regress {

struct TreeOptions {
  std::size_t max_depth = 0;  // 0: unlimited
  std::size_t min_samples_leaf = 1;
};

struct ForestOptions {
  std::size_t n_trees = 100;
  bool bootstrap = true;
  std::uint64_t seed = 0;
  TreeOptions tree;
  unsigned workers = 1;  // never affects results
};

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // go left when x[feature] <= threshold
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  double value = 0.0;         // mean target of the training rows in the node

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // root at 0

  double predict(std::span<const double> x) const;
  friend bool operator==(const Tree&, const Tree&) = default;
};

// Dense row-major training matrix.
struct TrainingSet {
  std::size_t n_features = 0;
  std::vector<double> x;
  std::vector<double> y;

  std::size_t size() const { return y.size(); }
  std::span<const double> row(std::size_t i) const { return {x.data() + i * n_features, n_features}; }
  static TrainingSet from_table(const FeatureTable& t);
};

// CART regression tree on the given sample (indices may repeat). Each split
// is the exhaustive minimiser of the children's summed squared error over all
// features and midpoints between consecutive distinct values. Ties go to the
// earlier feature, then the smaller threshold. A node splits only if that
// strictly lowers the error.
Tree train_tree(const TrainingSet& data, std::span<const std::size_t> sample, const TreeOptions& opts);

struct Forest {
  std::vector<Tree> trees;
  std::vector<std::string> feature_names;
  ForestOptions options;

  double predict(std::span<const double> x) const;  // ln-count; mean over trees
  std::vector<double> predict(const FeatureTable& t) const;
  // Features that appear in at least one split.
  std::vector<bool> used_features() const;
};

// Rows are ordered by (relation_id, example_id) before training, so row order
// in the table does not matter. Tree t draws its bootstrap sample from
// derive_seed(seed, t).
Forest train_forest(const FeatureTable& table, const ForestOptions& opts);

// Text header ("key value" lines ending with "data") then, per tree, a
// uint64 node count and packed nodes, little-endian.
void save_forest(const Forest& forest, const std::filesystem::path& file);
Forest load_forest(const std::filesystem::path& file);

}  // namespace linfreq::regress
