#include "linfreq/pipeline/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "linfreq/corpus/scan.hpp"

namespace linfreq::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    if (!ok.count(key)) throw ConfigError("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

std::string join(const std::string& where, const char* key) { return where.empty() ? key : where + "." + key; }

template <class T>
void read(const json& obj, const std::string& where, const char* key, T& out) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->template get<T>();
  } catch (const json::exception&) {
    throw ConfigError("'" + join(where, key) + "' has the wrong type (" + it->type_name() + ")");
  }
}

void read_path(const json& obj, const std::string& where, const char* key, fs::path& out) {
  std::string s;
  read(obj, where, key, s);
  if (obj.contains(key)) out = s;
}

corpus::PairMode parse_pair_mode(const std::string& s) {
  if (s == "presence") return corpus::PairMode::kPresence;
  if (s == "product") return corpus::PairMode::kProduct;
  throw ConfigError("'corpus.pair_mode' must be presence or product, got '" + s + "'");
}

std::string pair_mode_name(corpus::PairMode m) { return m == corpus::PairMode::kPresence ? "presence" : "product"; }

}  // namespace

fs::path ExperimentConfig::resolve(const fs::path& p) const {
  if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "", {"schema_version", "seed", "corpus", "checkpoints", "relations", "sweep", "regression",
                     "output_dir"});
  ExperimentConfig c;
  c.base_dir = base_dir;
  if (!j.contains("schema_version")) throw ConfigError("missing key 'schema_version'");
  read(j, "", "schema_version", c.schema_version);
  if (c.schema_version != kSchemaVersion) {
    throw ConfigError("unsupported schema_version " + std::to_string(c.schema_version) + " (expected " +
                      std::to_string(kSchemaVersion) + ")");
  }
  read(j, "", "seed", c.seed);
  read_path(j, "", "output_dir", c.output_dir);

  if (j.contains("corpus")) {
    const auto& o = j["corpus"];
    check_keys(o, "corpus", {"path", "dictionary", "pair_mode", "document_window", "shards"});
    read_path(o, "corpus", "path", c.corpus.path);
    read_path(o, "corpus", "dictionary", c.corpus.dictionary);
    std::string mode = pair_mode_name(c.corpus.pair_mode);
    read(o, "corpus", "pair_mode", mode);
    c.corpus.pair_mode = parse_pair_mode(mode);
    read(o, "corpus", "document_window", c.corpus.document_window);
    read(o, "corpus", "shards", c.corpus.shards);
  }

  if (j.contains("checkpoints")) {
    const auto& cps = j["checkpoints"];
    if (!cps.is_array()) throw ConfigError("'checkpoints' must be an array");
    for (std::size_t i = 0; i < cps.size(); ++i) {
      const auto& v = cps[i];
      const std::string where = "checkpoints[" + std::to_string(i) + "]";
      if (v.is_number_unsigned()) {
        c.checkpoints.push_back(v.get<std::uint64_t>());
      } else if (v.is_string()) {
        try {
          c.checkpoints.push_back(corpus::parse_token_budget(v.get<std::string>()));
        } catch (const Error& e) {
          throw ConfigError("'" + where + "': " + e.what());
        }
      } else {
        throw ConfigError("'" + where + "' must be a positive integer or a budget string");
      }
    }
  }

  if (j.contains("relations")) {
    std::vector<std::string> rel;
    read(j, "", "relations", rel);
    for (auto& r : rel) c.relations.emplace_back(r);
  }

  if (j.contains("sweep")) {
    const auto& o = j["sweep"];
    check_keys(o, "sweep", {"beta_grid", "rank_schedule", "probes", "n_fit", "workers"});
    read(o, "sweep", "beta_grid", c.sweep.beta_grid);
    read(o, "sweep", "rank_schedule", c.sweep.rank_schedule);
    read(o, "sweep", "probes", c.sweep.probes);
    read(o, "sweep", "n_fit", c.sweep.n_fit);
    read(o, "sweep", "workers", c.sweep.workers);
  }

  if (j.contains("regression")) {
    const auto& o = j["regression"];
    check_keys(o, "regression", {"enabled", "seeds", "target_kind", "n_trees", "max_depth", "min_samples_leaf",
                                 "importance_repeats", "pca_merge", "workers"});
    auto& r = c.regression;
    read(o, "regression", "enabled", r.enabled);
    read(o, "regression", "seeds", r.seeds);
    std::string kind = regress::to_string(r.target_kind);
    read(o, "regression", "target_kind", kind);
    try {
      r.target_kind = regress::parse_target_kind(kind);
    } catch (const Error& e) {
      throw ConfigError(std::string("'regression.target_kind': ") + e.what());
    }
    read(o, "regression", "n_trees", r.n_trees);
    read(o, "regression", "max_depth", r.max_depth);
    read(o, "regression", "min_samples_leaf", r.min_samples_leaf);
    read(o, "regression", "importance_repeats", r.importance_repeats);
    read(o, "regression", "pca_merge", r.pca_merge);
    read(o, "regression", "workers", r.workers);
  }
  return c;
}

ExperimentConfig load_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), fs::absolute(file).parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir.string();
  j["corpus"] = {{"path", c.corpus.path.string()},
                 {"dictionary", c.corpus.dictionary.string()},
                 {"pair_mode", pair_mode_name(c.corpus.pair_mode)},
                 {"document_window", c.corpus.document_window},
                 {"shards", c.corpus.shards}};
  j["checkpoints"] = c.checkpoints;
  std::vector<std::string> rel;
  for (const auto& r : c.relations) rel.push_back(r.string());
  j["relations"] = rel;
  j["sweep"] = {{"beta_grid", c.sweep.beta_grid},
                {"rank_schedule", c.sweep.rank_schedule},
                {"probes", c.sweep.probes},
                {"n_fit", c.sweep.n_fit},
                {"workers", c.sweep.workers}};
  const auto& r = c.regression;
  j["regression"] = {{"enabled", r.enabled},
                     {"seeds", r.seeds},
                     {"target_kind", regress::to_string(r.target_kind)},
                     {"n_trees", r.n_trees},
                     {"max_depth", r.max_depth},
                     {"min_samples_leaf", r.min_samples_leaf},
                     {"importance_repeats", r.importance_repeats},
                     {"pca_merge", r.pca_merge},
                     {"workers", r.workers}};
  return j;
}

std::string serialize_config(const ExperimentConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

void save_config(const ExperimentConfig& cfg, const fs::path& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << serialize_config(cfg);
}

std::vector<std::string> validate(const ExperimentConfig& c) {
  std::vector<std::string> problems;
  auto need_file = [&](const fs::path& p, const std::string& field) {
    if (p.empty()) {
      problems.push_back(field + ": not set");
    } else if (!fs::exists(c.resolve(p))) {
      problems.push_back(field + ": " + c.resolve(p).string() + " does not exist");
    }
  };
  need_file(c.corpus.path, "corpus.path");
  if (!c.corpus.path.empty() && fs::is_directory(c.resolve(c.corpus.path))) {
    for (const char* f : {"manifest.json", "tokens.bin"}) {
      if (!fs::exists(c.resolve(c.corpus.path) / f)) {
        problems.push_back("corpus.path: " + (c.resolve(c.corpus.path) / f).string() + " does not exist");
      }
    }
  }
  need_file(c.corpus.dictionary, "corpus.dictionary");
  if (c.corpus.shards == 0) problems.push_back("corpus.shards: must be at least 1");

  for (std::size_t i = 0; i < c.checkpoints.size(); ++i) {
    if (c.checkpoints[i] == 0) problems.push_back("checkpoints[" + std::to_string(i) + "]: must be positive");
    if (i > 0 && c.checkpoints[i] <= c.checkpoints[i - 1]) {
      problems.push_back("checkpoints: not strictly increasing at index " + std::to_string(i));
    }
  }

  if (c.relations.empty()) problems.push_back("relations: at least one relation file is required");
  for (std::size_t i = 0; i < c.relations.size(); ++i) need_file(c.relations[i], "relations[" + std::to_string(i) + "]");

  for (double b : c.sweep.beta_grid) {
    if (!std::isfinite(b) || b < 0) {
      problems.push_back("sweep.beta_grid: values must be finite and non-negative");
      break;
    }
  }
  for (auto r : c.sweep.rank_schedule) {
    if (r == 0) {
      problems.push_back("sweep.rank_schedule: ranks must be positive");
      break;
    }
  }
  if (c.sweep.n_fit == 0) problems.push_back("sweep.n_fit: must be at least 1");
  if (c.sweep.workers == 0) problems.push_back("sweep.workers: must be at least 1");

  const auto& r = c.regression;
  if (r.enabled) {
    if (r.seeds.empty()) problems.push_back("regression.seeds: at least one seed is required");
    if (r.n_trees == 0) problems.push_back("regression.n_trees: must be at least 1");
    if (r.min_samples_leaf == 0) problems.push_back("regression.min_samples_leaf: must be at least 1");
    if (r.importance_repeats == 0) problems.push_back("regression.importance_repeats: must be at least 1");
    if (r.workers == 0) problems.push_back("regression.workers: must be at least 1");
    if (!r.pca_merge.empty()) {
      const auto names = regress::all_feature_names();
      if (r.pca_merge.size() < 2) problems.push_back("regression.pca_merge: needs at least two features");
      std::set<std::string> seen;
      for (const auto& n : r.pca_merge) {
        if (std::find(names.begin(), names.end(), n) == names.end()) {
          problems.push_back("regression.pca_merge: unknown feature '" + n + "'");
        }
        if (!seen.insert(n).second) problems.push_back("regression.pca_merge: '" + n + "' listed twice");
      }
    }
  }

  if (c.output_dir.empty()) {
    problems.push_back("output_dir: not set");
  } else {
    fs::path p = fs::absolute(c.resolve(c.output_dir));
    while (!p.empty() && !fs::exists(p) && p != p.parent_path()) p = p.parent_path();
    const auto perms = fs::status(p).permissions();
    if (!fs::is_directory(p) || (perms & fs::perms::owner_write) == fs::perms::none) {
      problems.push_back("output_dir: " + p.string() + " is not a writable directory");
    }
  }
  return problems;
}

}  // namespace linfreq::pipeline
