#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "linfreq/lre/relation.hpp"
#include "linfreq/pipeline/config.hpp"
#include "linfreq/regress/features.hpp"

namespace linfreq::pipeline {

inline constexpr const char* kToolVersion = "linfreq 0.1.0";

// Stage order. A run executes them in sequence and stops at the first failure.
const std::vector<std::string>& stage_names();

// The run directory is missing completed stages; what() lists them.
class IncompleteRun : public Error {
 public:
  IncompleteRun(std::vector<std::string> missing);
  const std::vector<std::string>& missing() const { return missing_; }

 private:
  std::vector<std::string> missing_;
};

struct StageRecord {
  std::string name;
  std::string status;  // ran, cached, skipped, failed
  std::string key;     // digest of the stage's inputs and settings
  std::vector<std::pair<std::string, std::string>> outputs;  // path relative to the run dir, sha256
  double seconds = 0.0;
  std::string error;
};

struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string config_hash;  // sha256 of config.json in the run dir
  std::vector<StageRecord> stages;
  bool complete = false;

  const StageRecord* find(const std::string& name) const;
};

RunManifest read_run_manifest(const std::filesystem::path& run_dir);
void write_run_manifest(const RunManifest& m, const std::filesystem::path& run_dir);

struct RunOptions {
  std::ostream* log = nullptr;  // one line per stage when set
};

// Runs every stage into cfg.output_dir, skipping stages whose key and outputs
// match the previous manifest. Holds an exclusive lock on the run directory.
// Throws on the first failing stage after recording it in the manifest.
RunManifest run(const ExperimentConfig& cfg, const RunOptions& opts = {});

// Rewrites the report/ tables from a completed run directory.
void report(const std::filesystem::path& run_dir);

// Per-example LRE and LM measurements for one relation.
std::vector<regress::ExampleFeatures> example_features(const lre::RelationData& data, const lre::Lre& lre);

// metrics/examples.tsv: one row per example with subject and object surfaces.
void write_example_metrics_header(std::ostream& out);
void write_example_metrics(std::ostream& out, const lre::RelationData& data,
                           const std::vector<regress::ExampleFeatures>& feats);
std::vector<regress::ExampleFeatures> read_example_metrics(const std::filesystem::path& file);

}  // namespace linfreq::pipeline
