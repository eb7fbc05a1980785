#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "linfreq/corpus/synth.hpp"
#include "linfreq/pipeline/config.hpp"

namespace linfreq::pipeline {

// A synthetic experiment in which each relation's subject-object pairs are
// planted with a known frequency and its reference model drifts further from
// linear the rarer the relation is.
struct PlantSpec {
  std::uint64_t seed = 7;
  std::size_t relations = 16;
  std::size_t subjects_per_relation = 20;
  std::size_t objects_per_relation = 3;

  // Relation r's base pair count is log-spaced over [min, max]; each pair
  // gets the base count times exp(count_jitter * N(0, 1)), at least 2.
  double pair_count_min = 3;
  double pair_count_max = 10000;
  double count_jitter = 0.25;

  // Residual-branch scale, linear in log base count from noise_max (rarest)
  // down to noise_min (most frequent).
  double noise_max = 4.0;
  double noise_min = 0.5;
  std::size_t dim = 16;
  std::size_t vocab_size = 24;
  std::size_t depth = 2;
  // Each relation draws a margin scale log-uniformly from [min, max],
  // independent of its frequency; subjects then get scale * U[1 - spread,
  // 1 + spread].
  double margin_min = 1;
  double margin_max = 10;
  double margin_spread = 0.25;
  double subject_jitter = 0.05;

  std::uint32_t seq_len = 16;
  std::uint32_t batch_size = 64;
  std::uint64_t n_batches = 0;  // 0: planted rows plus a quarter of filler rows
  std::uint64_t doc_mean_length = 48;
  std::vector<std::uint64_t> checkpoints;  // empty: quarters of the corpus

  friend bool operator==(const PlantSpec&, const PlantSpec&) = default;
};

// Unknown keys are errors, as for experiment configs.
PlantSpec parse_plant_spec(const std::string& text);
PlantSpec load_plant_spec(const std::filesystem::path& file);

// Per-relation ground truth written alongside the planted data.
struct PlantedRelation {
  std::uint32_t relation_id = 0;
  double base_count = 0;
  double noise = 0;
  double margin_scale = 0;
};

// Writes dictionary.jsonl, corpus/, relations/relation_<id>.json,
// planted.tsv and config.json (output_dir "run") under `dir`, and returns the
// config as loaded from there.
ExperimentConfig plant_experiment(const PlantSpec& spec, const std::filesystem::path& dir);

std::vector<PlantedRelation> planted_relations(const PlantSpec& spec);

// Subject-object pairs and the number of rows each is planted in.
std::vector<corpus::PairPlant> planted_pairs(const PlantSpec& spec);

}  // namespace linfreq::pipeline
