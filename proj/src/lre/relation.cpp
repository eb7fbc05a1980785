#include "linfreq/lre/relation.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "linfreq/error.hpp"
#include "linfreq/random.hpp"

namespace linfreq::lre {

using nlohmann::json;

namespace {

void require_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw IoError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw IoError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw IoError(where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw IoError(where + ": bad value for '" + key + "': " + e.what());
  }
}

}  // namespace

json model_spec_to_json(const ModelSpec& s) {
  return {{"kind", to_string(s.kind)},     {"subject_dim", s.subject_dim},
          {"object_dim", s.object_dim},    {"vocab_size", s.vocab_size},
          {"depth", s.depth},              {"contexts", s.contexts},
          {"seed", s.seed},                {"noise", s.noise},
          {"context_scale", s.context_scale}};
}

ModelSpec model_spec_from_json(const json& j) {
  const std::string where = "model";
  require_keys(j, {"kind", "subject_dim", "object_dim", "vocab_size", "depth", "contexts", "seed",
                   "noise", "context_scale"},
               where);
  ModelSpec s;
  try {
    s.kind = parse_model_kind(get<std::string>(j, "kind", where));
  } catch (const InvalidArgument& e) {
    throw IoError(where + ": " + e.what());
  }
  s.subject_dim = get<std::size_t>(j, "subject_dim", where);
  s.object_dim = j.contains("object_dim") ? get<std::size_t>(j, "object_dim", where) : s.subject_dim;
  s.vocab_size = get<std::size_t>(j, "vocab_size", where);
  if (j.contains("depth")) s.depth = get<std::size_t>(j, "depth", where);
  if (j.contains("contexts")) s.contexts = get<std::size_t>(j, "contexts", where);
  if (j.contains("seed")) s.seed = get<std::uint64_t>(j, "seed", where);
  if (j.contains("noise")) s.noise = get<double>(j, "noise", where);
  if (j.contains("context_scale")) s.context_scale = get<double>(j, "context_scale", where);
  return s;
}

RelationData load_relation_data(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError(file.string() + ": " + e.what());
  }
  const std::string where = file.string();
  require_keys(j, {"name", "relation_id", "model", "examples"}, where);
  RelationData d;
  d.name = get<std::string>(j, "name", where);
  d.relation_id = get<std::uint32_t>(j, "relation_id", where);
  d.model = model_spec_from_json(get<json>(j, "model", where));
  const auto examples = get<json>(j, "examples", where);
  if (!examples.is_array()) throw IoError(where + ": 'examples' must be an array");
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    const std::string ew = where + ": examples[" + std::to_string(i) + "]";
    require_keys(e, {"subject_id", "object_id", "subject", "object", "context_id", "object_token",
                     "vector"},
                 ew);
    RelationExample ex;
    ex.subject_id = get<std::uint32_t>(e, "subject_id", ew);
    ex.object_id = get<std::uint32_t>(e, "object_id", ew);
    ex.subject_surface = e.value("subject", "");
    ex.object_surface = e.value("object", "");
    ex.context_id = e.contains("context_id") ? get<ContextId>(e, "context_id", ew) : 0;
    ex.object_token = get<std::size_t>(e, "object_token", ew);
    const auto v = get<std::vector<double>>(e, "vector", ew);
    if (v.size() != d.model.subject_dim) {
      throw IoError(ew + ": vector has " + std::to_string(v.size()) + " entries, model expects " +
                    std::to_string(d.model.subject_dim));
    }
    ex.subject_vector = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
    d.examples.push_back(std::move(ex));
  }
  return d;
}

void save_relation_data(const RelationData& d, const std::filesystem::path& file) {
  json examples = json::array();
  for (const auto& ex : d.examples) {
    examples.push_back({{"subject_id", ex.subject_id},
                        {"object_id", ex.object_id},
                        {"subject", ex.subject_surface},
                        {"object", ex.object_surface},
                        {"context_id", ex.context_id},
                        {"object_token", ex.object_token},
                        {"vector", std::vector<double>(ex.subject_vector.data(),
                                                       ex.subject_vector.data() +
                                                           ex.subject_vector.size())}});
  }
  const json j = {{"name", d.name},
                  {"relation_id", d.relation_id},
                  {"model", model_spec_to_json(d.model)},
                  {"examples", std::move(examples)}};
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << j.dump(1) << '\n';
}

static_assert(std::endian::native == std::endian::little, "artifact I/O assumes a little-endian host");

void save_lre(const Lre& lre, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  out << "linfreq-lre 1\n";
  out << "rows " << lre.w.rows() << "\ncols " << lre.w.cols() << '\n';
  std::ostringstream beta;
  beta.precision(17);
  beta << lre.beta;
  out << "beta " << beta.str() << "\nrank " << lre.rank << "\nprobe " << lre.probe << '\n';
  out << "fit_example_ids";
  for (auto id : lre.fit_example_ids) out << ' ' << id;
  out << "\ndata float64-le\n";
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = lre.w;
  out.write(reinterpret_cast<const char*>(w.data()), static_cast<std::streamsize>(w.size() * 8));
  out.write(reinterpret_cast<const char*>(lre.b.data()), static_cast<std::streamsize>(lre.b.size() * 8));
  if (!out) throw IoError("write failed for " + file.string());
}

Lre load_lre(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  std::string line;
  std::getline(in, line);
  if (line != "linfreq-lre 1") throw IoError(file.string() + ": not an LRE artifact");
  Lre lre;
  long rows = -1;
  long cols = -1;
  while (std::getline(in, line) && line != "data float64-le") {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "rows") ls >> rows;
    else if (key == "cols") ls >> cols;
    else if (key == "beta") ls >> lre.beta;
    else if (key == "rank") ls >> lre.rank;
    else if (key == "probe") ls >> lre.probe;
    else if (key == "fit_example_ids") {
      std::size_t id = 0;
      while (ls >> id) lre.fit_example_ids.push_back(id);
      continue;
    } else {
      throw IoError(file.string() + ": unknown header key '" + key + "'");
    }
    if (!ls) throw IoError(file.string() + ": bad header line '" + line + "'");
  }
  if (line != "data float64-le" || rows < 0 || cols < 0) {
    throw IoError(file.string() + ": incomplete header");
  }
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w(rows, cols);
  lre.b.resize(rows);
  in.read(reinterpret_cast<char*>(w.data()), static_cast<std::streamsize>(w.size() * 8));
  in.read(reinterpret_cast<char*>(lre.b.data()), static_cast<std::streamsize>(rows * 8));
  if (!in) throw IntegrityError(file.string() + ": matrix data truncated");
  lre.w = w;
  return lre;
}

std::vector<RelationExample> make_examples(const ReferenceModel& model,
                                           std::span<const SubjectPlan> plans, double jitter,
                                           std::uint64_t seed) {
  Rng rng(seed);
  std::vector<RelationExample> out;
  for (const auto& p : plans) {
    if (p.object_token >= model.vocab_size()) {
      throw InvalidArgument("planned object token outside model vocabulary");
    }
    const Vector row = model.head().row(static_cast<Eigen::Index>(p.object_token)).transpose();
    Vector s = model.invert(p.margin * row / row.norm());
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) += jitter * standard_normal(rng);
    RelationExample ex;
    ex.subject_id = p.subject_id;
    ex.object_id = p.object_id;
    ex.subject_surface = p.subject_surface;
    ex.object_surface = p.object_surface;
    ex.subject_vector = std::move(s);
    ex.object_token = p.object_token;
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace linfreq::lre
