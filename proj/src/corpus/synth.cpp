#include "linfreq/corpus/synth.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "linfreq/error.hpp"
#include "linfreq/random.hpp"

namespace linfreq::corpus {

namespace {

struct Instance {
  TermId term = 0;
  std::uint32_t pattern = 0;
};

std::uint64_t row_length(const std::vector<Instance>& row, const TermDictionary& dict) {
  std::uint64_t len = 0;
  for (const auto& in : row) len += dict[in.term].patterns[in.pattern].size();
  return len + (row.empty() ? 0 : row.size() - 1);
}

}  // namespace

SynthCorpus generate_synthetic_corpus(const SynthSpec& spec, PairMode mode) {
  const auto& dict = spec.dictionary;
  Rng rng(spec.seed);

  CorpusManifest man;
  man.batch_size = spec.batch_size;
  man.seq_len = spec.seq_len;
  man.n_batches = spec.n_batches;
  man.total_tokens = man.n_batches * man.tokens_per_batch();
  man.tokenizer_id = spec.tokenizer_id;
  validate_manifest(man);
  if (spec.max_instances_per_row == 0) throw InvalidArgument("max_instances_per_row must be >= 1");

  std::set<TokenId> pattern_tokens;
  for (const auto& e : dict.entries()) {
    for (const auto& p : e.patterns) pattern_tokens.insert(p.begin(), p.end());
  }
  std::vector<TokenId> filler;
  for (TokenId t = spec.filler_begin; t < spec.filler_end; ++t) {
    if (!pattern_tokens.count(t)) filler.push_back(t);
  }
  if (filler.empty()) {
    throw InvalidArgument("filler vocabulary [" + std::to_string(spec.filler_begin) + ", " +
                          std::to_string(spec.filler_end) + ") has no token outside the patterns");
  }

  auto pick = [&](TermId t) -> Instance {
    if (t >= dict.size()) throw InvalidArgument("unknown term id " + std::to_string(t));
    return {t, static_cast<std::uint32_t>(uniform_index(rng, dict[t].patterns.size()))};
  };
  auto check_fits = [&](const std::vector<Instance>& row) {
    const auto len = row_length(row, dict);
    if (len > spec.seq_len) {
      throw InvalidArgument("planted row needs " + std::to_string(len) +
                            " tokens but seq_len is " + std::to_string(spec.seq_len));
    }
  };

  std::vector<std::vector<Instance>> plan;
  std::map<TermId, std::uint64_t> from_pairs;
  for (const auto& p : spec.pairs) {
    if (p.a == p.b) throw InvalidArgument("pair plant needs two distinct terms");
    for (std::uint64_t i = 0; i < p.rows; ++i) {
      std::vector<Instance> row{pick(p.a), pick(p.b)};
      if (uniform_index(rng, 2) == 1) std::swap(row[0], row[1]);
      check_fits(row);
      plan.push_back(std::move(row));
    }
    from_pairs[p.a] += p.rows;
    from_pairs[p.b] += p.rows;
  }
  for (const auto& [t, want] : spec.term_counts) {
    const std::uint64_t have = from_pairs.count(t) ? from_pairs[t] : 0;
    if (want < have) {
      throw InvalidArgument("term " + std::to_string(t) + " requests " + std::to_string(want) +
                            " occurrences but its pair plants already place " +
                            std::to_string(have));
    }
    std::uint64_t left = want - have;
    while (left > 0) {
      std::vector<Instance> row{pick(t)};
      check_fits(row);
      --left;
      while (left > 0 && row.size() < spec.max_instances_per_row) {
        row.push_back(pick(t));
        if (row_length(row, dict) > spec.seq_len) {
          row.pop_back();
          break;
        }
        --left;
      }
      plan.push_back(std::move(row));
    }
  }

  const std::uint64_t total_rows = man.total_rows();
  if (plan.size() > total_rows) {
    throw InvalidArgument("planting needs " + std::to_string(plan.size()) +
                          " rows but the corpus shape has capacity for " +
                          std::to_string(total_rows));
  }

  std::vector<TokenId> tokens(man.total_tokens);
  for (auto& t : tokens) t = filler[uniform_index(rng, filler.size())];

  std::vector<std::uint64_t> row_ids(total_rows);
  for (std::uint64_t i = 0; i < total_rows; ++i) row_ids[i] = i;
  shuffle(std::span<std::uint64_t>(row_ids), rng);

  // Ground truth comes from the planting record: any match must lie inside a
  // single instance because filler never contains a pattern token.
  std::map<Pattern, std::pair<TermId, std::uint32_t>> by_pattern;
  for (const auto& e : dict.entries()) {
    for (std::uint32_t k = 0; k < e.patterns.size(); ++k) by_pattern[e.patterns[k]] = {e.term_id, k};
  }
  std::size_t max_len = 0;
  for (const auto& [p, _] : by_pattern) max_len = std::max(max_len, p.size());

  CountTable truth;
  truth.tokens_scanned = man.total_tokens;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    auto& row = plan[i];
    shuffle(std::span<Instance>(row), rng);
    const std::uint64_t slack = spec.seq_len - row_length(row, dict);
    // Random gaps: row.size() + 1 gap sizes summing to slack, inner gaps +1.
    std::vector<std::uint64_t> cuts(row.size());
    for (auto& c : cuts) c = uniform_index(rng, slack + 1);
    std::sort(cuts.begin(), cuts.end());
    TokenId* dst = tokens.data() + row_ids[i] * spec.seq_len;
    std::uint64_t pos = 0;
    std::uint64_t prev_cut = 0;
    std::map<TermId, std::uint32_t> row_terms;
    for (std::size_t k = 0; k < row.size(); ++k) {
      pos += (cuts[k] - prev_cut) + (k > 0 ? 1 : 0);
      prev_cut = cuts[k];
      const Pattern& p = dict[row[k].term].patterns[row[k].pattern];
      std::copy(p.begin(), p.end(), dst + pos);
      for (std::size_t s = 0; s < p.size(); ++s) {
        for (std::size_t len = 1; len <= std::min(max_len, p.size() - s); ++len) {
          auto it = by_pattern.find(Pattern(p.begin() + s, p.begin() + s + len));
          if (it != by_pattern.end()) {
            truth.occurrences[it->second.first] += 1;
            row_terms[it->second.first] += 1;
          }
        }
      }
      pos += p.size();
    }
    for (auto a = row_terms.begin(); a != row_terms.end(); ++a) {
      for (auto b = std::next(a); b != row_terms.end(); ++b) {
        truth.add_pair(a->first, b->first,
                       mode == PairMode::kPresence
                           ? 1
                           : static_cast<std::uint64_t>(a->second) * b->second);
      }
    }
  }

  std::vector<DocSpan> docs;
  if (spec.doc_mean_length > 0) {
    std::uint64_t start = 0;
    while (start < man.total_tokens) {
      const std::uint64_t len = 1 + uniform_index(rng, 2 * spec.doc_mean_length - 1);
      const std::uint64_t end = std::min(man.total_tokens, start + len);
      docs.push_back({start, end});
      start = end;
    }
  }

  return {TokenCorpus(man, std::move(tokens), std::move(docs)), std::move(truth)};
}

SynthSpec load_synth_spec(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open synth spec " + file.string());
  SynthSpec spec;
  try {
    auto j = nlohmann::json::parse(in);
    auto dict_path = std::filesystem::path(j.at("dictionary").get<std::string>());
    if (dict_path.is_relative()) dict_path = file.parent_path() / dict_path;
    spec.dictionary = TermDictionary::load(dict_path);
    const auto& shape = j.at("shape");
    spec.batch_size = shape.at("batch_size").get<std::uint32_t>();
    spec.seq_len = shape.at("seq_len").get<std::uint32_t>();
    spec.n_batches = shape.at("n_batches").get<std::uint64_t>();
    const auto filler = j.at("filler").get<std::vector<TokenId>>();
    if (filler.size() != 2) throw IoError(file.string() + ": filler must be [begin, end]");
    spec.filler_begin = filler[0];
    spec.filler_end = filler[1];
    if (j.contains("term_counts")) {
      for (const auto& [k, v] : j["term_counts"].items()) {
        spec.term_counts[static_cast<TermId>(std::stoul(k))] = v.get<std::uint64_t>();
      }
    }
    if (j.contains("pairs")) {
      for (const auto& p : j["pairs"]) {
        spec.pairs.push_back({p.at(0).get<TermId>(), p.at(1).get<TermId>(), p.at(2).get<std::uint64_t>()});
      }
    }
    spec.max_instances_per_row = j.value("max_instances_per_row", 4u);
    spec.doc_mean_length = j.value("doc_mean_length", std::uint64_t{0});
    spec.tokenizer_id = j.value("tokenizer_id", std::string("synthetic"));
    spec.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& ex) {
    throw IoError(file.string() + ": " + ex.what());
  }
  return spec;
}

}  // namespace linfreq::corpus
