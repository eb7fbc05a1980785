#pragma once

// Brute-force reference implementations for the counting engine. Nothing
// here touches the automaton; every match is found by comparing each pattern
// at each start position.

#include <algorithm>
#include <map>
#include <set>
#include <vector>

#include "linfreq/corpus/corpus.hpp"
#include "linfreq/corpus/count_table.hpp"
#include "linfreq/corpus/dictionary.hpp"
#include "linfreq/random.hpp"

namespace oracle {

using namespace linfreq::corpus;

struct NaiveMatch {
  std::size_t start;
  TermId term;
  std::uint32_t pattern_index;
  bool operator<(const NaiveMatch& o) const {
    return std::tie(start, term, pattern_index) < std::tie(o.start, o.term, o.pattern_index);
  }
  bool operator==(const NaiveMatch& o) const = default;
};

inline std::vector<NaiveMatch> naive_matches(const TermDictionary& dict,
                                             std::span<const TokenId> text) {
  std::vector<NaiveMatch> out;
  for (std::size_t s = 0; s < text.size(); ++s) {
    for (const auto& e : dict.entries()) {
      for (std::uint32_t k = 0; k < e.patterns.size(); ++k) {
        const auto& p = e.patterns[k];
        if (s + p.size() <= text.size() && std::equal(p.begin(), p.end(), text.begin() + s)) {
          out.push_back({s, e.term_id, k});
        }
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline void add_window(CountTable& t, const std::map<TermId, std::uint64_t>& terms, PairMode mode) {
  for (auto a = terms.begin(); a != terms.end(); ++a) {
    for (auto b = std::next(a); b != terms.end(); ++b) {
      t.add_pair(a->first, b->first, mode == PairMode::kPresence ? 1 : a->second * b->second);
    }
  }
}

// Row-window counts over batches [first, last).
inline CountTable naive_scan(const TermDictionary& dict, const TokenCorpus& c, PairMode mode,
                             std::uint64_t first = 0, std::uint64_t last = ~0ULL) {
  const auto& m = c.manifest();
  last = std::min(last, m.n_batches);
  CountTable t;
  for (std::uint64_t b = first; b < last; ++b) {
    for (std::uint32_t r = 0; r < m.batch_size; ++r) {
      std::map<TermId, std::uint64_t> terms;
      for (const auto& match : naive_matches(dict, c.row(b, r))) {
        t.occurrences[match.term] += 1;
        terms[match.term] += 1;
      }
      add_window(t, terms, mode);
    }
    t.tokens_scanned += m.tokens_per_batch();
  }
  return t;
}

// Document windows: each row's window is the row plus every overlapping document.
inline CountTable naive_document_counts(const TermDictionary& dict, const TokenCorpus& c) {
  const auto& m = c.manifest();
  const auto tokens = c.tokens();
  CountTable t;
  std::vector<std::set<TermId>> doc_terms;
  for (const auto& d : c.docs()) {
    std::set<TermId> terms;
    for (const auto& match : naive_matches(dict, tokens.subspan(d.start, d.end - d.start))) {
      t.occurrences[match.term] += 1;
      terms.insert(match.term);
    }
    t.tokens_scanned += d.end - d.start;
    doc_terms.push_back(std::move(terms));
  }
  for (std::uint64_t r = 0; r < m.total_rows(); ++r) {
    const std::uint64_t rs = r * m.seq_len;
    const std::uint64_t re = rs + m.seq_len;
    std::map<TermId, std::uint64_t> window;
    for (const auto& match : naive_matches(dict, c.global_row(r))) window[match.term] = 1;
    for (std::size_t d = 0; d < c.docs().size(); ++d) {
      if (c.docs()[d].start < re && c.docs()[d].end > rs) {
        for (TermId x : doc_terms[d]) window[x] = 1;
      }
    }
    add_window(t, window, PairMode::kPresence);
  }
  return t;
}

struct RandomFixture {
  TermDictionary dict;
  TokenCorpus corpus;
};

// Small alphabets so that matches, overlaps and co-occurrences are frequent.
inline TermDictionary random_dictionary(linfreq::Rng& rng, std::size_t n_patterns,
                                        TokenId alphabet, std::size_t max_len) {
  std::set<Pattern> used;
  std::vector<TermEntry> entries;
  std::size_t attempts = 0;
  while (used.size() < n_patterns && attempts++ < n_patterns * 50) {
    Pattern p(1 + linfreq::uniform_index(rng, max_len));
    for (auto& tok : p) tok = static_cast<TokenId>(linfreq::uniform_index(rng, alphabet));
    if (!used.insert(p).second) continue;
    // Roughly a third of patterns become extra surface variants of an existing term.
    if (!entries.empty() && linfreq::uniform_index(rng, 3) == 0) {
      entries[linfreq::uniform_index(rng, entries.size())].patterns.push_back(p);
    } else {
      TermEntry e;
      e.term_id = static_cast<TermId>(entries.size());
      e.surface = "t" + std::to_string(e.term_id);
      e.patterns.push_back(p);
      entries.push_back(std::move(e));
    }
  }
  return TermDictionary(std::move(entries));
}

inline std::vector<DocSpan> random_docs(linfreq::Rng& rng, std::uint64_t total, std::uint64_t mean) {
  std::vector<DocSpan> docs;
  std::uint64_t pos = 0;
  while (pos < total) {
    // Occasional gaps not covered by any document.
    if (linfreq::uniform_index(rng, 5) == 0) pos += linfreq::uniform_index(rng, mean);
    if (pos >= total) break;
    const std::uint64_t len = 1 + linfreq::uniform_index(rng, 2 * mean);
    const std::uint64_t end = std::min(total, pos + len);
    docs.push_back({pos, end});
    pos = end;
  }
  return docs;
}

inline TokenCorpus random_corpus(linfreq::Rng& rng, std::uint32_t batch_size, std::uint32_t seq_len,
                                 std::uint64_t n_batches, TokenId alphabet, bool with_docs) {
  CorpusManifest m;
  m.batch_size = batch_size;
  m.seq_len = seq_len;
  m.n_batches = n_batches;
  m.total_tokens = n_batches * batch_size * seq_len;
  m.tokenizer_id = "random";
  std::vector<TokenId> tokens(m.total_tokens);
  for (auto& t : tokens) t = static_cast<TokenId>(linfreq::uniform_index(rng, alphabet));
  std::vector<DocSpan> docs;
  if (with_docs && m.total_tokens > 0) docs = random_docs(rng, m.total_tokens, seq_len);
  return TokenCorpus(m, std::move(tokens), std::move(docs));
}

}  // namespace oracle
