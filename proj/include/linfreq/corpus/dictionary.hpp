#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "linfreq/corpus/types.hpp"

namespace linfreq::corpus {

// Term IDs dense in [0, size()), every term with at least one nonempty
// pattern, and no pattern shared between two entries.
class TermDictionary {
 public:
  TermDictionary() = default;

  // Validates and takes ownership. Entries may arrive in any order; they are
  // stored by term_id. Throws InvalidArgument on any invariant violation.
  explicit TermDictionary(std::vector<TermEntry> entries);

  // One JSON object per line: {"term_id": 0, "surface": "...", "patterns": [[...], ...]}
  static TermDictionary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const TermEntry& operator[](TermId id) const { return entries_[id]; }
  std::span<const TermEntry> entries() const { return entries_; }

  std::size_t pattern_count() const;
  std::optional<TermId> find_surface(std::string_view surface) const;

 private:
  std::vector<TermEntry> entries_;
};

}  // namespace linfreq::corpus
