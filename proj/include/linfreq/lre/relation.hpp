#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "linfreq/lre/lre.hpp"

namespace linfreq::lre {

// One relation's examples together with the reference model that computes it.
struct RelationData {
  std::string name;
  std::uint32_t relation_id = 0;
  ModelSpec model;
  std::vector<RelationExample> examples;
};

nlohmann::json model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

// JSON file: {"name", "relation_id", "model": {...}, "examples": [{"subject_id",
// "object_id", "subject", "object", "context_id", "object_token", "vector"}]}.
RelationData load_relation_data(const std::filesystem::path& file);
void save_relation_data(const RelationData& data, const std::filesystem::path& file);

// Text header (one "key value" per line, ending with "data float64-le") then
// W row-major and b as raw little-endian doubles.
void save_lre(const Lre& lre, const std::filesystem::path& file);
Lre load_lre(const std::filesystem::path& file);

struct SubjectPlan {
  std::uint32_t subject_id = 0;
  std::uint32_t object_id = 0;
  std::string subject_surface;
  std::string object_surface;
  std::size_t object_token = 0;
  double margin = 1.0;  // length of the targeted output along the object's head row
};

// Subjects whose context-0 output points along the head row of their object
// token, scaled by the plan's margin, then perturbed by Gaussian jitter of
// the given size in input space.
std::vector<RelationExample> make_examples(const ReferenceModel& model,
                                           std::span<const SubjectPlan> plans, double jitter,
                                           std::uint64_t seed);

}  // namespace linfreq::lre
