#include "linfreq/corpus/dictionary.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "linfreq/error.hpp"

namespace linfreq::corpus {

TermDictionary::TermDictionary(std::vector<TermEntry> entries) {
  std::sort(entries.begin(), entries.end(),
            [](const TermEntry& a, const TermEntry& b) { return a.term_id < b.term_id; });
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].term_id != i) {
      throw InvalidArgument("term ids must be unique and dense from 0; expected " +
                            std::to_string(i) + ", found " +
                            std::to_string(entries[i].term_id));
    }
    if (entries[i].patterns.empty()) {
      throw InvalidArgument("term " + std::to_string(i) + " has no patterns");
    }
  }

  std::map<Pattern, TermId> owner;
  for (const auto& e : entries) {
    for (const auto& p : e.patterns) {
      if (p.empty()) {
        throw InvalidArgument("term " + std::to_string(e.term_id) + " has an empty pattern");
      }
      auto [it, inserted] = owner.emplace(p, e.term_id);
      if (!inserted) {
        throw InvalidArgument("duplicate pattern shared by terms " + std::to_string(it->second) +
                              " and " + std::to_string(e.term_id));
      }
    }
  }
  entries_ = std::move(entries);
}

std::size_t TermDictionary::pattern_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.patterns.size();
  return n;
}

std::optional<TermId> TermDictionary::find_surface(std::string_view surface) const {
  for (const auto& e : entries_) {
    if (e.surface == surface) return e.term_id;
  }
  return std::nullopt;
}

TermDictionary TermDictionary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open term dictionary " + path.string());
  std::vector<TermEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      TermEntry e;
      e.term_id = j.at("term_id").get<TermId>();
      e.surface = j.value("surface", std::string{});
      e.patterns = j.at("patterns").get<std::vector<Pattern>>();
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return TermDictionary(std::move(entries));
}

void TermDictionary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write term dictionary " + path.string());
  for (const auto& e : entries_) {
    nlohmann::json j;
    j["term_id"] = e.term_id;
    j["surface"] = e.surface;
    j["patterns"] = e.patterns;
    out << j.dump() << '\n';
  }
}

}  // namespace linfreq::corpus
