#include "linfreq/corpus/count_table.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "linfreq/error.hpp"

namespace linfreq::corpus {

std::uint64_t CountTable::occurrence(TermId t) const {
  auto it = occurrences.find(t);
  return it == occurrences.end() ? 0 : it->second;
}

std::uint64_t CountTable::pair(TermId a, TermId b) const {
  if (a == b) return 0;
  if (a > b) std::swap(a, b);
  auto it = pair_counts.find({a, b});
  return it == pair_counts.end() ? 0 : it->second;
}

void CountTable::add_pair(TermId a, TermId b, std::uint64_t n) {
  if (a == b || n == 0) return;
  if (a > b) std::swap(a, b);
  pair_counts[{a, b}] += n;
}

namespace {

template <class Map>
void merge_sorted(Map& into, const Map& from) {
  if (from.empty()) return;
  if (into.empty()) {
    into = from;
    return;
  }
  typename Map::sequence_type merged;
  merged.reserve(into.size() + from.size());
  auto a = into.begin();
  auto b = from.begin();
  while (a != into.end() || b != from.end()) {
    if (b == from.end() || (a != into.end() && a->first < b->first)) {
      merged.push_back(*a++);
    } else if (a == into.end() || b->first < a->first) {
      merged.push_back(*b++);
    } else {
      merged.emplace_back(a->first, a->second + b->second);
      ++a;
      ++b;
    }
  }
  into.adopt_sequence(boost::container::ordered_unique_range, std::move(merged));
}

}  // namespace

void merge_into(CountTable& into, const CountTable& from) {
  merge_sorted(into.occurrences, from.occurrences);
  merge_sorted(into.pair_counts, from.pair_counts);
  into.tokens_scanned += from.tokens_scanned;
}

CountTable merge_counts(const CountTable& a, const CountTable& b) {
  CountTable out = a;
  merge_into(out, b);
  return out;
}

CountAccumulator::CountAccumulator(std::size_t term_count)
    : term_count_(std::max<std::size_t>(term_count, 1)),
      key_bits_(0),
      occurrences_(term_count, 0),
      flush_at_(std::size_t{1} << 20) {
  while (key_bits_ < 64 && (std::uint64_t{1} << key_bits_) < term_count_ * term_count_) ++key_bits_;
  if (key_bits_ > 48) throw InvalidArgument("too many terms for pair keys");
  count_bits_ = 64 - key_bits_;
  count_mask_ = count_bits_ >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << count_bits_) - 1;
}

void CountAccumulator::flush() {
  if (buffer_.empty()) return;
  // LSD radix sort on the key bits only, 9 bits per pass.
  constexpr unsigned kDigit = 9;
  constexpr std::size_t kBuckets = std::size_t{1} << kDigit;
  radix_scratch_.resize(buffer_.size());
  for (unsigned shift = count_bits_; shift < 64; shift += kDigit) {
    std::size_t counts[kBuckets] = {};
    for (const auto e : buffer_) ++counts[(e >> shift) & (kBuckets - 1)];
    std::size_t sum = 0;
    for (auto& c : counts) {
      const std::size_t c0 = c;
      c = sum;
      sum += c0;
    }
    for (const auto e : buffer_) radix_scratch_[counts[(e >> shift) & (kBuckets - 1)]++] = e;
    buffer_.swap(radix_scratch_);
  }
  // Merge runs of equal keys into the accumulated sorted run.
  merge_scratch_.clear();
  merge_scratch_.reserve(sorted_.size() + buffer_.size());
  std::size_t a = 0;
  std::size_t i = 0;
  while (i < buffer_.size()) {
    const std::uint64_t key = buffer_[i] >> count_bits_;
    std::uint64_t n = 0;
    while (i < buffer_.size() && (buffer_[i] >> count_bits_) == key) n += buffer_[i++] & count_mask_;
    while (a < sorted_.size() && sorted_[a].key < key) merge_scratch_.push_back(sorted_[a++]);
    if (a < sorted_.size() && sorted_[a].key == key) {
      merge_scratch_.push_back({key, sorted_[a++].n + n});
    } else {
      merge_scratch_.push_back({key, n});
    }
  }
  merge_scratch_.insert(merge_scratch_.end(), sorted_.begin() + static_cast<std::ptrdiff_t>(a),
                        sorted_.end());
  sorted_.swap(merge_scratch_);
  buffer_.clear();
  // Keep merge cost proportional to the number of appended entries.
  flush_at_ = std::max(flush_at_, sorted_.size());
}

void CountAccumulator::add_window(std::span<const std::pair<TermId, std::uint32_t>> term_counts,
                                  PairMode mode) {
  for (std::size_t i = 0; i < term_counts.size(); ++i) {
    for (std::size_t j = i + 1; j < term_counts.size(); ++j) {
      const std::uint64_t n = mode == PairMode::kPresence
                                  ? 1
                                  : static_cast<std::uint64_t>(term_counts[i].second) *
                                        term_counts[j].second;
      add_pair(term_counts[i].first, term_counts[j].first, n);
    }
  }
}

CountTable CountAccumulator::table() {
  flush();
  CountTable t;
  decltype(t.occurrences)::sequence_type occ;
  for (std::size_t i = 0; i < occurrences_.size(); ++i) {
    if (occurrences_[i] != 0) occ.emplace_back(static_cast<TermId>(i), occurrences_[i]);
  }
  t.occurrences.adopt_sequence(boost::container::ordered_unique_range, std::move(occ));
  decltype(t.pair_counts)::sequence_type pairs;
  pairs.reserve(sorted_.size());
  for (const auto& e : sorted_) {
    if (e.n != 0) {
      pairs.emplace_back(TermPair{static_cast<TermId>(e.key / term_count_),
                                  static_cast<TermId>(e.key % term_count_)},
                         e.n);
    }
  }
  t.pair_counts.adopt_sequence(boost::container::ordered_unique_range, std::move(pairs));
  t.tokens_scanned = tokens_;
  return t;
}

void write_occurrences_tsv(const CountTable& t, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << "term_id\tcount\n";
  for (const auto& [id, n] : t.occurrences) out << id << '\t' << n << '\n';
}

void write_pairs_tsv(const CountTable& t, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << "term_a\tterm_b\tcount\n";
  for (const auto& [p, n] : t.pair_counts) out << p.first << '\t' << p.second << '\t' << n << '\n';
}

CountTable read_counts_tsv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::string header;
  std::getline(in, header);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  const bool pairs = header == "term_a\tterm_b\tcount";
  if (!pairs && header != "term_id\tcount") {
    throw IoError(file.string() + ": unrecognised count header '" + header + "'");
  }
  CountTable t;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::uint64_t a = 0;
    std::uint64_t b = 0;
    std::uint64_t n = 0;
    const bool ok = pairs ? static_cast<bool>(ls >> a >> b >> n) : static_cast<bool>(ls >> a >> n);
    if (!ok) throw IoError(file.string() + ":" + std::to_string(line_no) + ": malformed row");
    if (pairs) {
      if (a >= b) {
        throw IoError(file.string() + ":" + std::to_string(line_no) + ": pair key not ordered");
      }
      t.add_pair(static_cast<TermId>(a), static_cast<TermId>(b), n);
    } else if (n != 0) {
      t.occurrences[static_cast<TermId>(a)] += n;
    }
  }
  return t;
}

}  // namespace linfreq::corpus
