#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "linfreq/corpus/corpus.hpp"
#include "linfreq/corpus/count_table.hpp"
#include "linfreq/corpus/dictionary.hpp"

namespace linfreq::corpus {

struct PairPlant {
  TermId a = 0;
  TermId b = 0;
  std::uint64_t rows = 0;  // rows holding one instance of each
};

struct SynthSpec {
  TermDictionary dictionary;
  // Total occurrences wanted per term. Pair plants count toward the total;
  // the remainder is planted in rows holding only that term. Terms absent
  // here get only what pair plants give them.
  std::map<TermId, std::uint64_t> term_counts;
  std::vector<PairPlant> pairs;
  TokenId filler_begin = 0;  // filler vocabulary [begin, end) minus pattern tokens
  TokenId filler_end = 0;
  std::uint32_t batch_size = 0;
  std::uint32_t seq_len = 0;
  std::uint64_t n_batches = 0;
  std::uint32_t max_instances_per_row = 4;  // for solo rows
  std::uint64_t doc_mean_length = 0;        // 0: no document offsets
  std::string tokenizer_id = "synthetic";
  std::uint64_t seed = 0;
};

struct SynthCorpus {
  TokenCorpus corpus;
  // What a row-window scan of `corpus` reports, derived from the planting
  // record. Equals the request unless one pattern contains another.
  CountTable ground_truth;
};

// Throws InvalidArgument when the request does not fit the corpus shape,
// naming the capacity that was exceeded.
SynthCorpus generate_synthetic_corpus(const SynthSpec& spec, PairMode mode = PairMode::kPresence);

// JSON spec; "dictionary" is resolved relative to the spec file.
SynthSpec load_synth_spec(const std::filesystem::path& file);

}  // namespace linfreq::corpus
