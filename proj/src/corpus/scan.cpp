#include "linfreq/corpus/scan.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <string>

#include "linfreq/error.hpp"
#include "linfreq/parallel.hpp"

namespace linfreq::corpus {

namespace {

// Per-window term tally reused across rows by one worker.
class WindowTally {
 public:
  explicit WindowTally(std::size_t term_count) : counts_(term_count, 0) {}

  void add(TermId t, std::uint32_t n = 1) {
    if (counts_[t] == 0) touched_.push_back(t);
    counts_[t] += n;
  }

  void flush(CountAccumulator& acc, PairMode mode) {
    if (touched_.size() > 1) {
      std::sort(touched_.begin(), touched_.end());
      window_.clear();
      for (TermId t : touched_) window_.emplace_back(t, counts_[t]);
      acc.add_window(window_, mode);
    }
    for (TermId t : touched_) counts_[t] = 0;
    touched_.clear();
  }

 private:
  std::vector<std::uint32_t> counts_;
  std::vector<TermId> touched_;
  std::vector<std::pair<TermId, std::uint32_t>> window_;
};

struct ShardOutput {
  CountTable counts;
  std::vector<MatchRecord> positions;
};

ShardOutput scan_batches(const Matcher& m, const TokenCorpus& corpus, std::uint64_t first,
                         std::uint64_t last, const ScanOptions& opts) {
  const auto& man = corpus.manifest();
  CountAccumulator acc(m.term_count());
  WindowTally tally(m.term_count());
  ShardOutput out;
  for (std::uint64_t b = first; b < last; ++b) {
    for (std::uint32_t r = 0; r < man.batch_size; ++r) {
      const auto row = corpus.row(b, r);
      if (opts.emit_positions) {
        auto recs = m.scan_sequence(row, b, r);
        for (const auto& rec : recs) {
          acc.add_occurrence(rec.term_id);
          tally.add(rec.term_id);
        }
        out.positions.insert(out.positions.end(), recs.begin(), recs.end());
      } else {
        m.for_each_match(row, [&](std::size_t, PatternId pid) {
          const TermId t = m.pattern(pid).term_id;
          acc.add_occurrence(t);
          tally.add(t);
        });
      }
      tally.flush(acc, opts.pair_mode);
    }
    acc.add_tokens(man.tokens_per_batch());
  }
  out.counts = acc.table();
  return out;
}

ScanResult scan_batch_range(const Matcher& m, const TokenCorpus& corpus, std::uint64_t first,
                            std::uint64_t last, const ScanOptions& opts) {
  const std::size_t n = last - first;
  const std::size_t shards = shard_count(n, opts.shards);
  std::vector<ShardOutput> parts(shards);
  parallel_ranges(n, static_cast<unsigned>(shards), [&](std::size_t b, std::size_t e, unsigned w) {
    parts[w] = scan_batches(m, corpus, first + b, first + e, opts);
  });
  ScanResult result;
  for (auto& p : parts) {
    merge_into(result.counts, p.counts);
    result.positions.insert(result.positions.end(), p.positions.begin(), p.positions.end());
  }
  return result;
}

}  // namespace

ScanResult scan_corpus(const Matcher& m, const TokenCorpus& corpus, const ScanOptions& opts) {
  return scan_batch_range(m, corpus, 0, corpus.manifest().n_batches, opts);
}

CountTable document_counts(const Matcher& m, const TokenCorpus& corpus, unsigned shards) {
  if (!corpus.has_docs()) {
    throw InvalidArgument("document_counts requires document offsets (docs.idx)");
  }
  const auto& docs = corpus.docs();
  const auto tokens = corpus.tokens();
  const std::size_t n_docs = docs.size();

  // Pass 1: distinct terms and occurrences per document.
  std::vector<std::vector<TermId>> doc_terms(n_docs);
  std::vector<CountTable> doc_parts(shard_count(n_docs, shards));
  parallel_ranges(n_docs, static_cast<unsigned>(doc_parts.size()),
                  [&](std::size_t b, std::size_t e, unsigned w) {
                    CountAccumulator acc(m.term_count());
                    for (std::size_t d = b; d < e; ++d) {
                      const auto span = tokens.subspan(docs[d].start, docs[d].end - docs[d].start);
                      auto& terms = doc_terms[d];
                      m.for_each_match(span, [&](std::size_t, PatternId pid) {
                        const TermId t = m.pattern(pid).term_id;
                        acc.add_occurrence(t);
                        terms.push_back(t);
                      });
                      std::sort(terms.begin(), terms.end());
                      terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
                      acc.add_tokens(span.size());
                    }
                    doc_parts[w] = acc.table();
                  });

  // Pass 2: one presence window per row, widened by overlapping documents.
  const auto& man = corpus.manifest();
  const std::uint64_t rows = man.total_rows();
  std::vector<CountTable> row_parts(shard_count(rows, shards));
  parallel_ranges(rows, static_cast<unsigned>(row_parts.size()),
                  [&](std::size_t b, std::size_t e, unsigned w) {
                    CountAccumulator acc(m.term_count());
                    WindowTally tally(m.term_count());
                    std::vector<std::uint8_t> seen(m.term_count(), 0);
                    std::vector<TermId> window;
                    const std::uint64_t first_start = b * man.seq_len;
                    auto doc_it = std::upper_bound(
                        docs.begin(), docs.end(), first_start,
                        [](std::uint64_t pos, const DocSpan& d) { return pos < d.end; });
                    for (std::uint64_t r = b; r < e; ++r) {
                      const std::uint64_t row_start = r * man.seq_len;
                      const std::uint64_t row_end = row_start + man.seq_len;
                      while (doc_it != docs.end() && doc_it->end <= row_start) ++doc_it;
                      auto mark = [&](TermId t) {
                        if (!seen[t]) {
                          seen[t] = 1;
                          window.push_back(t);
                        }
                      };
                      m.for_each_match(corpus.global_row(r), [&](std::size_t, PatternId pid) {
                        mark(m.pattern(pid).term_id);
                      });
                      for (auto it = doc_it; it != docs.end() && it->start < row_end; ++it) {
                        for (TermId t : doc_terms[static_cast<std::size_t>(it - docs.begin())]) {
                          mark(t);
                        }
                      }
                      for (TermId t : window) {
                        tally.add(t);
                        seen[t] = 0;
                      }
                      window.clear();
                      tally.flush(acc, PairMode::kPresence);
                    }
                    row_parts[w] = acc.table();
                  });

  CountTable out;
  for (const auto& p : doc_parts) merge_into(out, p);
  for (const auto& p : row_parts) merge_into(out, p);  // pairs only
  return out;
}

CheckpointSchedule::CheckpointSchedule(std::vector<std::uint64_t> cutoffs) {
  for (std::size_t i = 0; i < cutoffs.size(); ++i) {
    if (cutoffs[i] == 0) throw InvalidArgument("checkpoint cutoffs must be positive");
    if (i > 0 && cutoffs[i] <= cutoffs[i - 1]) {
      throw InvalidArgument("checkpoint schedule must be strictly increasing: " +
                            std::to_string(cutoffs[i - 1]) + " then " +
                            std::to_string(cutoffs[i]));
    }
  }
  cutoffs_ = std::move(cutoffs);
}

std::uint64_t parse_token_budget(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (text.empty()) throw InvalidArgument("empty token budget");
  double scale = 1.0;
  switch (text.back()) {
    case 'K': case 'k': scale = 1e3; break;
    case 'M': case 'm': scale = 1e6; break;
    case 'B': case 'b': case 'G': case 'g': scale = 1e9; break;
    case 'T': case 't': scale = 1e12; break;
    default: break;
  }
  if (scale != 1.0) text.remove_suffix(1);
  const std::string s(text);
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || !(v >= 0) || !std::isfinite(v)) {
    throw InvalidArgument("cannot parse token budget '" + std::string(text) + "'");
  }
  return static_cast<std::uint64_t>(std::llround(v * scale));
}

CheckpointSchedule CheckpointSchedule::parse(std::string_view text) {
  std::vector<std::uint64_t> cutoffs;
  while (!text.empty()) {
    const auto comma = text.find(',');
    cutoffs.push_back(parse_token_budget(text.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return CheckpointSchedule(std::move(cutoffs));
}

std::vector<CheckpointCounts> cumulative_counts(const Matcher& m, const TokenCorpus& corpus,
                                                const CheckpointSchedule& schedule,
                                                const ScanOptions& opts) {
  const auto& man = corpus.manifest();
  ScanOptions inner = opts;
  inner.emit_positions = false;
  std::vector<CheckpointCounts> out;
  CountTable running;
  std::uint64_t done = 0;
  for (std::uint64_t cutoff : schedule.cutoffs()) {
    if (cutoff > man.total_tokens) {
      throw InvalidArgument("checkpoint cutoff " + std::to_string(cutoff) +
                            " exceeds corpus total_tokens " + std::to_string(man.total_tokens));
    }
    const std::uint64_t batches = cutoff / man.tokens_per_batch();
    if (batches > done) {
      merge_into(running, scan_batch_range(m, corpus, done, batches, inner).counts);
      done = batches;
    }
    out.push_back({cutoff, batches, running});
  }
  return out;
}

void write_positions_tsv(const std::vector<MatchRecord>& positions,
                         const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << "batch\trow\tposition\tterm_id\tpattern_index\n";
  for (const auto& r : positions) {
    out << r.batch_index << '\t' << r.row_index << '\t' << r.position << '\t' << r.term_id << '\t'
        << r.pattern_index << '\n';
  }
}

void write_checkpoints_tsv(const std::vector<CheckpointCounts>& cps,
                           const std::filesystem::path& occurrence_file,
                           const std::filesystem::path& pair_file) {
  std::ofstream occ(occurrence_file);
  if (!occ) throw IoError("cannot write " + occurrence_file.string());
  occ << "cutoff_tokens\tterm_id\tcount\n";
  for (const auto& cp : cps) {
    for (const auto& [t, n] : cp.counts.occurrences) occ << cp.cutoff << '\t' << t << '\t' << n << '\n';
  }
  if (pair_file.empty()) return;
  std::ofstream pairs(pair_file);
  if (!pairs) throw IoError("cannot write " + pair_file.string());
  pairs << "cutoff_tokens\tterm_a\tterm_b\tcount\n";
  for (const auto& cp : cps) {
    for (const auto& [p, n] : cp.counts.pair_counts) {
      pairs << cp.cutoff << '\t' << p.first << '\t' << p.second << '\t' << n << '\n';
    }
  }
}

}  // namespace linfreq::corpus
