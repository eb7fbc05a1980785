#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include <boost/container/flat_map.hpp>

#include "linfreq/corpus/types.hpp"

namespace linfreq::corpus {

using TermPair = std::pair<TermId, TermId>;  // always first < second

// Occurrence and co-occurrence totals. Zero entries are never stored, so two
// tables describing the same counts compare equal.
struct CountTable {
  boost::container::flat_map<TermId, std::uint64_t> occurrences;
  boost::container::flat_map<TermPair, std::uint64_t> pair_counts;
  std::uint64_t tokens_scanned = 0;

  std::uint64_t occurrence(TermId t) const;
  std::uint64_t pair(TermId a, TermId b) const;  // order-insensitive; 0 when a == b
  void add_pair(TermId a, TermId b, std::uint64_t n);

  friend bool operator==(const CountTable&, const CountTable&) = default;
};

CountTable merge_counts(const CountTable& a, const CountTable& b);
void merge_into(CountTable& into, const CountTable& from);

// Hot-path accumulator owned by one worker. Terms are dense so occurrences use
// a flat array. Pair increments are appended to a buffer keyed by
// a * term_count + b, radix-sorted and folded into a sorted run whenever the
// buffer fills.
class CountAccumulator {
 public:
  explicit CountAccumulator(std::size_t term_count);

  void add_occurrence(TermId t, std::uint64_t n = 1) { occurrences_[t] += n; }
  void add_pair(TermId a, TermId b, std::uint64_t n) {  // requires a < b
    const std::uint64_t key = (a * term_count_ + b) << count_bits_;
    while (n > count_mask_) {
      push(key | count_mask_);
      n -= count_mask_;
    }
    push(key | n);
  }
  void add_tokens(std::uint64_t n) { tokens_ += n; }

  // Adds pair counts for one window given its per-term match counts, sorted by
  // term and with no repeats.
  void add_window(std::span<const std::pair<TermId, std::uint32_t>> term_counts, PairMode mode);

  CountTable table();

 private:
  struct Entry {
    std::uint64_t key;
    std::uint64_t n;
  };
  void push(std::uint64_t packed) {
    buffer_.push_back(packed);
    if (buffer_.size() >= flush_at_) flush();
  }
  void flush();

  // Buffered entries pack the pair key above count_bits_ bits of count.
  std::uint64_t term_count_;
  unsigned key_bits_;
  unsigned count_bits_;
  std::uint64_t count_mask_;
  std::vector<std::uint64_t> occurrences_;
  std::vector<std::uint64_t> buffer_;
  std::vector<std::uint64_t> radix_scratch_;
  std::vector<Entry> sorted_;
  std::vector<Entry> merge_scratch_;
  std::size_t flush_at_;
  std::uint64_t tokens_ = 0;
};

// Tab-separated outputs with a header row.
void write_occurrences_tsv(const CountTable& t, const std::filesystem::path& file);
void write_pairs_tsv(const CountTable& t, const std::filesystem::path& file);
// Reads either layout back; the header decides which field is filled.
CountTable read_counts_tsv(const std::filesystem::path& file);

}  // namespace linfreq::corpus
