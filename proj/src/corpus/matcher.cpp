#include "linfreq/corpus/matcher.hpp"

#include <algorithm>
#include <deque>
#include <map>

#include "linfreq/error.hpp"

namespace linfreq::corpus {

Matcher::Matcher(const TermDictionary& dict) : term_count_(dict.size()) {
  // Trie with ordered child maps; flattened once failure links are known.
  std::vector<std::map<TokenId, std::uint32_t>> children(1);
  std::vector<std::uint32_t> terminal(1, kNone);
  TokenId max_root_token = 0;
  bool any = false;

  for (const auto& entry : dict.entries()) {
    for (std::uint32_t k = 0; k < entry.patterns.size(); ++k) {
      const Pattern& p = entry.patterns[k];
      if (p.empty()) {
        throw InvalidArgument("term " + std::to_string(entry.term_id) + " has an empty pattern");
      }
      std::uint32_t node = kRoot;
      for (TokenId tok : p) {
        auto it = children[node].find(tok);
        if (it == children[node].end()) {
          const auto next = static_cast<std::uint32_t>(children.size());
          children[node].emplace(tok, next);
          children.emplace_back();
          terminal.push_back(kNone);
          node = next;
        } else {
          node = it->second;
        }
      }
      if (terminal[node] != kNone) {
        throw InvalidArgument("duplicate pattern shared by terms " +
                              std::to_string(patterns_[terminal[node]].term_id) + " and " +
                              std::to_string(entry.term_id));
      }
      terminal[node] = static_cast<std::uint32_t>(patterns_.size());
      patterns_.push_back({entry.term_id, k, static_cast<std::uint32_t>(p.size())});
      max_root_token = std::max(max_root_token, p.front());
      any = true;
    }
  }

  const std::size_t n = children.size();
  fail_.assign(n, kRoot);
  dict_link_.assign(n, kNone);

  auto child_of = [&](std::uint32_t node, TokenId tok) -> std::uint32_t {
    auto it = children[node].find(tok);
    return it == children[node].end() ? kNone : it->second;
  };

  std::deque<std::uint32_t> queue;
  for (const auto& [tok, child] : children[kRoot]) {
    fail_[child] = kRoot;
    queue.push_back(child);
  }
  while (!queue.empty()) {
    const std::uint32_t u = queue.front();
    queue.pop_front();
    for (const auto& [tok, child] : children[u]) {
      std::uint32_t f = fail_[u];
      std::uint32_t target = kNone;
      while (true) {
        target = child_of(f, tok);
        if (target != kNone || f == kRoot) break;
        f = fail_[f];
      }
      fail_[child] = (target == kNone || target == child) ? kRoot : target;
      const std::uint32_t fc = fail_[child];
      dict_link_[child] = terminal[fc] != kNone ? fc : dict_link_[fc];
      queue.push_back(child);
    }
  }

  edge_begin_.resize(n + 1);
  for (std::size_t s = 0; s < n; ++s) {
    edge_begin_[s] = static_cast<std::uint32_t>(edge_token_.size());
    if (s == kRoot) continue;  // root transitions live in root_next_
    for (const auto& [tok, child] : children[s]) {
      edge_token_.push_back(tok);
      edge_target_.push_back(child);
    }
  }
  edge_begin_[n] = static_cast<std::uint32_t>(edge_token_.size());

  if (any) {
    root_next_.assign(static_cast<std::size_t>(max_root_token) + 1, kRoot);
    for (const auto& [tok, child] : children[kRoot]) root_next_[tok] = child;
  }

  terminal_ = std::move(terminal);
  has_output_.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    has_output_[s] = (terminal_[s] != kNone || dict_link_[s] != kNone) ? 1 : 0;
  }
}

std::vector<MatchRecord> Matcher::scan_sequence(std::span<const TokenId> tokens,
                                                std::uint64_t batch_index,
                                                std::uint32_t row_index) const {
  std::vector<MatchRecord> out;
  for_each_match(tokens, [&](std::size_t end, PatternId pid) {
    const PatternInfo& info = patterns_[pid];
    MatchRecord rec;
    rec.term_id = info.term_id;
    rec.batch_index = batch_index;
    rec.row_index = row_index;
    rec.position = static_cast<std::uint32_t>(end + 1 - info.length);
    rec.pattern_index = info.index_in_term;
    out.push_back(rec);
  });
  std::sort(out.begin(), out.end(), [](const MatchRecord& a, const MatchRecord& b) {
    if (a.position != b.position) return a.position < b.position;
    if (a.term_id != b.term_id) return a.term_id < b.term_id;
    return a.pattern_index < b.pattern_index;
  });
  return out;
}

}  // namespace linfreq::corpus
