#include "linfreq/pipeline/plant.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "linfreq/corpus/synth.hpp"
#include "linfreq/lre/relation.hpp"
#include "linfreq/random.hpp"

namespace linfreq::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr corpus::TokenId kFillerEnd = 5000;
constexpr corpus::TokenId kPatternBase = 5000;

template <class T>
void take(const json& j, const char* key, T& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("'") + key + "' has the wrong type (" + it->type_name() + ")");
  }
}

struct Layout {
  const PlantSpec& s;
  std::size_t per_relation() const { return s.subjects_per_relation + s.objects_per_relation; }
  corpus::TermId subject(std::size_t r, std::size_t i) const {
    return static_cast<corpus::TermId>(r * per_relation() + i);
  }
  corpus::TermId object(std::size_t r, std::size_t j) const {
    return static_cast<corpus::TermId>(r * per_relation() + s.subjects_per_relation + j);
  }
  std::size_t n_terms() const { return s.relations * per_relation(); }
};

std::string subject_surface(std::size_t r, std::size_t i) {
  return "rel" + std::to_string(r) + "_subj" + std::to_string(i);
}
std::string object_surface(std::size_t r, std::size_t j) {
  return "rel" + std::to_string(r) + "_obj" + std::to_string(j);
}

struct SubjectDraw {
  double margin = 0;
  std::uint64_t pair_rows = 0;
};

std::vector<SubjectDraw> draw_subjects(const PlantSpec& s, const PlantedRelation& pr) {
  Rng rng(derive_seed(derive_seed(s.seed, 2), pr.relation_id));
  std::vector<SubjectDraw> out;
  for (std::size_t i = 0; i < s.subjects_per_relation; ++i) {
    SubjectDraw d;
    d.margin = pr.margin_scale * uniform_real(rng, 1 - s.margin_spread, 1 + s.margin_spread);
    const double c = pr.base_count * std::exp(s.count_jitter * standard_normal(rng));
    d.pair_rows = std::max<std::uint64_t>(2, static_cast<std::uint64_t>(std::llround(c)));
    out.push_back(d);
  }
  return out;
}

}  // namespace

PlantSpec parse_plant_spec(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("plant spec is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("plant spec must be a JSON object");
  static const std::set<std::string> keys = {
      "seed",        "relations",     "subjects_per_relation", "objects_per_relation", "pair_count_min",
      "pair_count_max", "count_jitter", "noise_max",           "noise_min",            "dim",
      "vocab_size",  "depth",         "margin_min",            "margin_max",           "margin_spread",     "subject_jitter",
      "seq_len",     "batch_size",    "n_batches",             "doc_mean_length",      "checkpoints"};
  for (const auto& [k, v] : j.items()) {
    if (!keys.count(k)) throw ConfigError("unknown key '" + k + "'");
  }
  PlantSpec s;
  take(j, "seed", s.seed);
  take(j, "relations", s.relations);
  take(j, "subjects_per_relation", s.subjects_per_relation);
  take(j, "objects_per_relation", s.objects_per_relation);
  take(j, "pair_count_min", s.pair_count_min);
  take(j, "pair_count_max", s.pair_count_max);
  take(j, "count_jitter", s.count_jitter);
  take(j, "noise_max", s.noise_max);
  take(j, "noise_min", s.noise_min);
  take(j, "dim", s.dim);
  take(j, "vocab_size", s.vocab_size);
  take(j, "depth", s.depth);
  take(j, "margin_min", s.margin_min);
  take(j, "margin_max", s.margin_max);
  take(j, "margin_spread", s.margin_spread);
  take(j, "subject_jitter", s.subject_jitter);
  take(j, "seq_len", s.seq_len);
  take(j, "batch_size", s.batch_size);
  take(j, "n_batches", s.n_batches);
  take(j, "doc_mean_length", s.doc_mean_length);
  take(j, "checkpoints", s.checkpoints);

  if (s.relations < 2) throw ConfigError("relations: need at least 2");
  if (s.subjects_per_relation == 0 || s.objects_per_relation < 2) {
    throw ConfigError("need at least one subject and two objects per relation");
  }
  if (s.objects_per_relation > s.vocab_size) throw ConfigError("objects_per_relation exceeds vocab_size");
  if (!(s.pair_count_min >= 2 && s.pair_count_max >= s.pair_count_min)) {
    throw ConfigError("pair counts: need 2 <= pair_count_min <= pair_count_max");
  }
  if (!(s.margin_min > 0 && s.margin_max >= s.margin_min)) throw ConfigError("margins: need 0 < min <= max");
  if (!(s.margin_spread >= 0 && s.margin_spread < 1)) throw ConfigError("margin_spread: need 0 <= spread < 1");
  if (s.seq_len < 4) throw ConfigError("seq_len: need room for two 2-token terms");
  return s;
}

PlantSpec load_plant_spec(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_plant_spec(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
}

std::vector<PlantedRelation> planted_relations(const PlantSpec& s) {
  std::vector<PlantedRelation> out;
  const double lo = std::log(s.pair_count_min), hi = std::log(s.pair_count_max);
  for (std::size_t r = 0; r < s.relations; ++r) {
    const double t = s.relations == 1 ? 0.0 : double(r) / double(s.relations - 1);
    PlantedRelation p;
    p.relation_id = static_cast<std::uint32_t>(r);
    p.base_count = std::exp(lo + t * (hi - lo));
    p.noise = s.noise_max - t * (s.noise_max - s.noise_min);
    Rng rng(derive_seed(derive_seed(s.seed, 5), r));
    p.margin_scale = std::exp(uniform_real(rng, std::log(s.margin_min), std::log(s.margin_max)));
    out.push_back(p);
  }
  return out;
}

std::vector<corpus::PairPlant> planted_pairs(const PlantSpec& s) {
  const Layout lay{s};
  std::vector<corpus::PairPlant> out;
  for (const auto& pr : planted_relations(s)) {
    const auto draws = draw_subjects(s, pr);
    for (std::size_t i = 0; i < draws.size(); ++i) {
      out.push_back({lay.subject(pr.relation_id, i), lay.object(pr.relation_id, i % s.objects_per_relation),
                     draws[i].pair_rows});
    }
  }
  return out;
}

ExperimentConfig plant_experiment(const PlantSpec& s, const fs::path& dir) {
  const Layout lay{s};
  fs::create_directories(dir / "relations");

  std::vector<corpus::TermEntry> entries(lay.n_terms());
  for (std::size_t r = 0; r < s.relations; ++r) {
    for (std::size_t i = 0; i < lay.per_relation(); ++i) {
      const auto id = static_cast<corpus::TermId>(r * lay.per_relation() + i);
      auto& e = entries[id];
      e.term_id = id;
      e.surface = i < s.subjects_per_relation ? subject_surface(r, i)
                                              : object_surface(r, i - s.subjects_per_relation);
      e.patterns = {{kPatternBase + 2 * id, kPatternBase + 2 * id + 1}};
    }
  }
  corpus::TermDictionary dict(entries);
  dict.save(dir / "dictionary.jsonl");

  const auto planted = planted_relations(s);
  corpus::SynthSpec syn;
  syn.dictionary = dict;
  syn.filler_begin = 0;
  syn.filler_end = kFillerEnd;
  syn.batch_size = s.batch_size;
  syn.seq_len = s.seq_len;
  syn.doc_mean_length = s.doc_mean_length;
  syn.tokenizer_id = "planted";
  syn.seed = derive_seed(s.seed, 1);

  std::ofstream truth(dir / "planted.tsv");
  truth << "relation_id\tbase_count\tnoise\tmargin_scale\tmodel_seed\n";
  std::vector<fs::path> relation_files;
  for (const auto& pr : planted) {
    const auto r = pr.relation_id;
    const auto draws = draw_subjects(s, pr);
    lre::ModelSpec ms;
    ms.kind = lre::ModelKind::kMlp;
    ms.subject_dim = ms.object_dim = s.dim;
    ms.vocab_size = s.vocab_size;
    ms.depth = s.depth;
    ms.noise = pr.noise;
    ms.seed = derive_seed(derive_seed(s.seed, 3), r);
    const auto model = lre::make_reference_model(ms);

    std::vector<lre::SubjectPlan> plans;
    for (std::size_t i = 0; i < s.subjects_per_relation; ++i) {
      lre::SubjectPlan p;
      const std::size_t j = i % s.objects_per_relation;
      p.subject_id = lay.subject(r, i);
      p.object_id = lay.object(r, j);
      p.subject_surface = subject_surface(r, i);
      p.object_surface = object_surface(r, j);
      p.object_token = j;
      p.margin = draws[i].margin;
      plans.push_back(p);
      syn.pairs.push_back({p.subject_id, p.object_id, draws[i].pair_rows});
    }
    lre::RelationData data;
    data.name = "relation_" + std::to_string(r);
    data.relation_id = r;
    data.model = ms;
    data.examples = lre::make_examples(*model, plans, s.subject_jitter, derive_seed(derive_seed(s.seed, 4), r));
    const fs::path rel = fs::path("relations") / ("relation_" + std::to_string(r) + ".json");
    lre::save_relation_data(data, dir / rel);
    relation_files.push_back(rel);
    char line[160];
    std::snprintf(line, sizeof line, "%u\t%.6f\t%.6f\t%.6f\t%llu\n", r, pr.base_count, pr.noise, pr.margin_scale,
                  static_cast<unsigned long long>(ms.seed));
    truth << line;
  }
  truth.close();

  std::uint64_t planted_rows = 0;
  for (const auto& p : syn.pairs) planted_rows += p.rows;
  syn.n_batches = s.n_batches ? s.n_batches : (planted_rows * 5 / 4 + s.batch_size - 1) / s.batch_size;
  const auto gen = corpus::generate_synthetic_corpus(syn);
  fs::remove_all(dir / "corpus");
  gen.corpus.write(dir / "corpus");

  ExperimentConfig cfg;
  cfg.seed = s.seed;
  cfg.corpus.path = "corpus";
  cfg.corpus.dictionary = "dictionary.jsonl";
  cfg.relations = relation_files;
  cfg.sweep.probes = {0};
  cfg.output_dir = "run";
  if (s.checkpoints.empty()) {
    const std::uint64_t batch_tokens = std::uint64_t(s.batch_size) * s.seq_len;
    for (std::uint64_t q = 1; q <= 4; ++q) cfg.checkpoints.push_back(batch_tokens * (syn.n_batches * q / 4));
  } else {
    cfg.checkpoints = s.checkpoints;
  }
  save_config(cfg, dir / "config.json");
  return load_config(dir / "config.json");
}

}  // namespace linfreq::pipeline
