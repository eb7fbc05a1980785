#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "linfreq/corpus/corpus.hpp"
#include "linfreq/corpus/count_table.hpp"
#include "linfreq/corpus/matcher.hpp"

namespace linfreq::corpus {

struct ScanOptions {
  bool emit_positions = false;
  PairMode pair_mode = PairMode::kPresence;
  unsigned shards = 1;  // worker threads; batches are split into contiguous shards
};

struct ScanResult {
  CountTable counts;
  std::vector<MatchRecord> positions;  // ordered by (batch, row, position, term_id)
};

// Counts every match in every row. Pair windows are rows, so co-occurrences
// never cross a row or batch boundary.
ScanResult scan_corpus(const Matcher& m, const TokenCorpus& corpus, const ScanOptions& opts = {});

// Document-window co-occurrence, presence mode.
//
// Every document span is scanned as one contiguous token run (it may cross
// rows and batches); its matches are the occurrences. Each row then counts a
// pair once when both terms match inside the row itself or inside any
// document overlapping the row. A row's document window therefore always
// contains its sequence window. Throws InvalidArgument when the corpus has no
// document offsets.
CountTable document_counts(const Matcher& m, const TokenCorpus& corpus, unsigned shards = 1);

class CheckpointSchedule {
 public:
  CheckpointSchedule() = default;
  // Throws InvalidArgument unless strictly increasing and positive.
  explicit CheckpointSchedule(std::vector<std::uint64_t> cutoffs);

  // Comma-separated token budgets; accepts plain integers, scientific
  // notation (41e9) and K/M/B/T suffixes (41B, 2T).
  static CheckpointSchedule parse(std::string_view text);

  const std::vector<std::uint64_t>& cutoffs() const { return cutoffs_; }
  bool empty() const { return cutoffs_.empty(); }

 private:
  std::vector<std::uint64_t> cutoffs_;
};

std::uint64_t parse_token_budget(std::string_view text);

struct CheckpointCounts {
  std::uint64_t cutoff = 0;
  std::uint64_t batches = 0;  // complete batches inside the cutoff
  CountTable counts;
};

// Entry k counts only the batches whose cumulative token total is <= cutoff k.
// Throws InvalidArgument when a cutoff exceeds the corpus size.
std::vector<CheckpointCounts> cumulative_counts(const Matcher& m, const TokenCorpus& corpus,
                                                const CheckpointSchedule& schedule,
                                                const ScanOptions& opts = {});

void write_positions_tsv(const std::vector<MatchRecord>& positions,
                         const std::filesystem::path& file);
void write_checkpoints_tsv(const std::vector<CheckpointCounts>& cps,
                           const std::filesystem::path& occurrence_file,
                           const std::filesystem::path& pair_file);

}  // namespace linfreq::corpus
