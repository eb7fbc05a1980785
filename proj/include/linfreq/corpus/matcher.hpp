#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "linfreq/corpus/dictionary.hpp"
#include "linfreq/corpus/types.hpp"

namespace linfreq::corpus {

using PatternId = std::uint32_t;

struct PatternInfo {
  TermId term_id = 0;
  std::uint32_t index_in_term = 0;
  std::uint32_t length = 0;
};

// Aho-Corasick automaton over the token-ID alphabet. The root keeps a dense
// transition table sized to the largest token used by any pattern; every other
// state stores its outgoing edges as a sorted (token, target) run. Immutable
// once built and safe to share between threads.
class Matcher {
 public:
  explicit Matcher(const TermDictionary& dict);

  std::size_t term_count() const { return term_count_; }
  std::size_t pattern_count() const { return patterns_.size(); }
  std::size_t state_count() const { return fail_.size(); }
  const PatternInfo& pattern(PatternId id) const { return patterns_[id]; }

  // Calls on_match(end_position, pattern_id) for every occurrence of every
  // pattern, overlapping ones included, in order of end position. For equal
  // end positions the longest pattern is reported first.
  template <class OnMatch>
  void for_each_match(std::span<const TokenId> text, OnMatch&& on_match) const {
    std::uint32_t state = kRoot;
    for (std::size_t i = 0; i < text.size(); ++i) {
      state = next_state(state, text[i]);
      for (std::uint32_t s = has_output_[state] ? state : kNone; s != kNone; s = dict_link_[s]) {
        if (terminal_[s] != kNone) on_match(i, terminal_[s]);
      }
    }
  }

  // All matches in one row, ordered by (position, term_id, pattern_index).
  std::vector<MatchRecord> scan_sequence(std::span<const TokenId> tokens,
                                         std::uint64_t batch_index,
                                         std::uint32_t row_index) const;

 private:
  static constexpr std::uint32_t kRoot = 0;
  static constexpr std::uint32_t kNone = 0xffffffffu;

  std::uint32_t next_state(std::uint32_t state, TokenId tok) const {
    while (state != kRoot) {
      const std::uint32_t lo = edge_begin_[state];
      const std::uint32_t hi = edge_begin_[state + 1];
      const std::uint32_t e = find_edge(lo, hi, tok);
      if (e != kNone) return edge_target_[e];
      state = fail_[state];
    }
    return tok < root_next_.size() ? root_next_[tok] : kRoot;
  }

  std::uint32_t find_edge(std::uint32_t lo, std::uint32_t hi, TokenId tok) const {
    if (hi - lo <= 8) {
      for (std::uint32_t e = lo; e < hi; ++e) {
        if (edge_token_[e] == tok) return e;
      }
      return kNone;
    }
    const std::uint32_t end = hi;
    while (lo < hi) {
      const std::uint32_t mid = lo + (hi - lo) / 2;
      if (edge_token_[mid] < tok) {
        lo = mid + 1;
      } else {
        hi = mid;
      }
    }
    return (lo < end && edge_token_[lo] == tok) ? lo : kNone;
  }

  std::size_t term_count_ = 0;
  std::vector<PatternInfo> patterns_;

  std::vector<std::uint32_t> root_next_;
  std::vector<std::uint32_t> edge_begin_;  // state_count + 1 offsets
  std::vector<TokenId> edge_token_;
  std::vector<std::uint32_t> edge_target_;
  std::vector<std::uint32_t> fail_;
  std::vector<std::uint32_t> terminal_;   // pattern ending exactly here, or kNone
  std::vector<std::uint32_t> dict_link_;  // nearest proper suffix state with a terminal
  std::vector<std::uint8_t> has_output_;
};

}  // namespace linfreq::corpus
