#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "linfreq/corpus/types.hpp"
#include "linfreq/error.hpp"
#include "linfreq/regress/features.hpp"

namespace linfreq::pipeline {

// Unparseable config text, unknown keys, or wrongly typed values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kSchemaVersion = 1;

struct CorpusConfig {
  std::filesystem::path path;        // directory holding manifest.json and tokens.bin
  std::filesystem::path dictionary;  // JSON-lines term dictionary
  corpus::PairMode pair_mode = corpus::PairMode::kPresence;
  bool document_window = false;      // also write document-window pair counts
  unsigned shards = 1;

  friend bool operator==(const CorpusConfig&, const CorpusConfig&) = default;
};

struct SweepConfig {
  std::vector<double> beta_grid;           // empty: 21 points over [0, 5]
  std::vector<std::size_t> rank_schedule;  // empty: banded default
  std::vector<std::size_t> probes;         // empty: every probe point
  std::size_t n_fit = 5;                   // examples drawn to fit each LRE
  unsigned workers = 1;

  friend bool operator==(const SweepConfig&, const SweepConfig&) = default;
};

struct RegressionConfig {
  bool enabled = true;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3};
  regress::TargetKind target_kind = regress::TargetKind::kSubjectObject;
  std::size_t n_trees = 100;
  std::size_t max_depth = 0;
  std::size_t min_samples_leaf = 1;
  std::size_t importance_repeats = 5;
  std::vector<std::string> pca_merge = {"faithfulness", "faith_prob"};  // empty: no merge
  unsigned workers = 1;

  friend bool operator==(const RegressionConfig&, const RegressionConfig&) = default;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::uint64_t seed = 0;
  CorpusConfig corpus;
  std::vector<std::uint64_t> checkpoints;  // token budgets; empty: full corpus only
  std::vector<std::filesystem::path> relations;
  SweepConfig sweep;
  RegressionConfig regression;
  std::filesystem::path output_dir;
  // Relative paths resolve against this; not serialized.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::filesystem::path& p) const;

  // Equality ignores base_dir.
  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return a.schema_version == b.schema_version && a.seed == b.seed && a.corpus == b.corpus &&
           a.checkpoints == b.checkpoints && a.relations == b.relations && a.sweep == b.sweep &&
           a.regression == b.regression && a.output_dir == b.output_dir;
  }
};

// Throws ConfigError naming the offending key (or the line and column for
// malformed JSON). Checkpoints may be integers or budget strings such as "2M".
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& file);

nlohmann::json to_json(const ExperimentConfig& cfg);
std::string serialize_config(const ExperimentConfig& cfg);  // canonical, sorted keys
void save_config(const ExperimentConfig& cfg, const std::filesystem::path& file);

// Problems that would stop a run; empty means valid. Never touches the disk
// beyond existence checks.
std::vector<std::string> validate(const ExperimentConfig& cfg);

}  // namespace linfreq::pipeline
