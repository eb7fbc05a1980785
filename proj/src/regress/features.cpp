#include "linfreq/regress/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "linfreq/error.hpp"

namespace linfreq::regress {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

}  // namespace

std::string to_string(TargetKind kind) {
  return kind == TargetKind::kObject ? "object" : "subject_object";
}

TargetKind parse_target_kind(const std::string& text) {
  if (text == "object") return TargetKind::kObject;
  if (text == "subject_object") return TargetKind::kSubjectObject;
  throw InvalidArgument("unknown target kind '" + text + "' (expected object or subject_object)");
}

std::vector<std::string> all_feature_names() {
  return {kLogprobCorrect, kFewshotAccuracy, kFaithfulness,
          kFaithProb,      kSoftCausality,   kHardCausality};
}

std::vector<std::string> lm_feature_names() { return {kLogprobCorrect, kFewshotAccuracy}; }

std::size_t FeatureTable::column(const std::string& name) const {
  const auto it = std::find(feature_names.begin(), feature_names.end(), name);
  if (it == feature_names.end()) throw InvalidArgument("feature table has no column '" + name + "'");
  return static_cast<std::size_t>(it - feature_names.begin());
}

FeatureTable FeatureTable::select(std::span<const std::string> names) const {
  if (names.empty()) throw InvalidArgument("feature selection is empty");
  std::vector<std::size_t> cols;
  for (const auto& n : names) cols.push_back(column(n));
  FeatureTable out;
  out.feature_names.assign(names.begin(), names.end());
  out.rows.reserve(rows.size());
  for (const auto& r : rows) {
    FeatureRow nr = r;
    nr.features.clear();
    for (auto c : cols) nr.features.push_back(r.features[c]);
    out.rows.push_back(std::move(nr));
  }
  return out;
}

void FeatureTable::sort_rows() {
  std::stable_sort(rows.begin(), rows.end(), [](const FeatureRow& a, const FeatureRow& b) {
    return std::tie(a.relation_id, a.example_id) < std::tie(b.relation_id, b.example_id);
  });
}

FeatureTable build_feature_table(std::span<const ExampleFeatures> examples,
                                 const corpus::CountTable& counts, std::size_t term_count,
                                 TargetKind kind) {
  std::set<std::uint32_t> unknown;
  for (const auto& e : examples) {
    if (e.object_id >= term_count) unknown.insert(e.object_id);
    if (kind == TargetKind::kSubjectObject && e.subject_id >= term_count) unknown.insert(e.subject_id);
  }
  if (!unknown.empty()) {
    std::string list;
    for (auto id : unknown) list += (list.empty() ? "" : ", ") + std::to_string(id);
    throw InvalidArgument("examples refer to term ids missing from the dictionary: " + list);
  }
  FeatureTable t;
  t.feature_names = all_feature_names();
  for (const auto& e : examples) {
    const std::uint64_t n = kind == TargetKind::kObject ? counts.occurrence(e.object_id)
                                                        : counts.pair(e.subject_id, e.object_id);
    if (n <= 1) continue;
    FeatureRow r;
    r.relation_id = e.relation_id;
    r.example_id = e.example_id;
    r.object_id = e.object_id;
    r.features = {e.logprob_correct, e.fewshot_accuracy, e.faithfulness,
                  e.faith_prob,      e.soft_causality,   e.hard_causality};
    r.target_ln_count = std::log1p(static_cast<double>(n));
    r.target_kind = kind;
    t.rows.push_back(std::move(r));
  }
  return t;
}

void write_feature_table(const FeatureTable& table, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << "relation_id\texample_id\tobject_id";
  for (const auto& n : table.feature_names) out << '\t' << n;
  out << "\ttarget_ln_count\ttarget_kind\n";
  for (const auto& r : table.rows) {
    out << r.relation_id << '\t' << r.example_id << '\t' << r.object_id;
    for (double v : r.features) out << '\t' << fmt(v);
    out << '\t' << fmt(r.target_ln_count) << '\t' << to_string(r.target_kind) << '\n';
  }
}

FeatureTable read_feature_table(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError(file.string() + ": empty feature table");
  const auto header = split_tabs(line);
  if (header.size() < 6 || header[0] != "relation_id" || header[1] != "example_id" ||
      header[2] != "object_id" || header[header.size() - 2] != "target_ln_count" ||
      header.back() != "target_kind") {
    throw IoError(file.string() + ": unexpected feature table header");
  }
  FeatureTable t;
  t.feature_names.assign(header.begin() + 3, header.end() - 2);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_tabs(line);
    const std::string where = file.string() + ":" + std::to_string(line_no);
    if (cells.size() != header.size()) throw IoError(where + ": wrong number of columns");
    FeatureRow r;
    try {
      std::size_t used = 0;
      auto num = [&](const std::string& s) {
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
      };
      r.relation_id = static_cast<std::uint32_t>(std::stoul(cells[0]));
      r.example_id = std::stoull(cells[1]);
      r.object_id = static_cast<std::uint32_t>(std::stoul(cells[2]));
      for (std::size_t c = 3; c + 2 < cells.size(); ++c) r.features.push_back(num(cells[c]));
      r.target_ln_count = num(cells[cells.size() - 2]);
      r.target_kind = parse_target_kind(cells.back());
    } catch (const InvalidArgument& e) {
      throw IoError(where + ": " + e.what());
    } catch (const std::exception&) {
      throw IoError(where + ": malformed number");
    }
    t.rows.push_back(std::move(r));
  }
  return t;
}

}  // namespace linfreq::regress
