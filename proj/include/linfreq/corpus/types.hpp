#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace linfreq::corpus {

using TokenId = std::uint32_t;
using TermId = std::uint32_t;

using Pattern = std::vector<TokenId>;

struct TermEntry {
  TermId term_id = 0;
  std::string surface;
  std::vector<Pattern> patterns;  // surface variants; all accrue to term_id
};

// One occurrence of a pattern inside a row. `position` is the index of the
// pattern's first token within the row.
struct MatchRecord {
  TermId term_id = 0;
  std::uint64_t batch_index = 0;
  std::uint32_t row_index = 0;
  std::uint32_t position = 0;
  std::uint32_t pattern_index = 0;  // index into the term's pattern list

  friend bool operator==(const MatchRecord&, const MatchRecord&) = default;
};

enum class PairMode {
  kPresence,  // +1 per window where both terms match
  kProduct,   // +(matches of a) * (matches of b) per window
};

}  // namespace linfreq::corpus
