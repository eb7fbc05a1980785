#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "linfreq/corpus/types.hpp"

namespace linfreq::corpus {

struct CorpusManifest {
  std::uint32_t token_width = 4;
  std::string endianness = "little";
  std::uint32_t batch_size = 0;  // rows per batch
  std::uint32_t seq_len = 0;     // tokens per row
  std::uint64_t n_batches = 0;
  std::uint64_t total_tokens = 0;
  std::string tokenizer_id;

  std::uint64_t tokens_per_batch() const {
    return static_cast<std::uint64_t>(batch_size) * seq_len;
  }
  std::uint64_t total_rows() const { return n_batches * batch_size; }

  friend bool operator==(const CorpusManifest&, const CorpusManifest&) = default;
};

// Half-open [start, end) span in global token offsets.
struct DocSpan {
  std::uint64_t start = 0;
  std::uint64_t end = 0;
  friend bool operator==(const DocSpan&, const DocSpan&) = default;
};

// Row-major [batch][row][position] array of 4-byte token IDs. Storage is either
// owned in memory or a read-only mapping of tokens.bin; copies share it.
class TokenCorpus {
 public:
  TokenCorpus() = default;

  // Throws InvalidArgument when tokens.size() or doc spans disagree with the manifest.
  TokenCorpus(CorpusManifest manifest, std::vector<TokenId> tokens,
              std::vector<DocSpan> docs = {});

  // Directory layout: manifest.json, tokens.bin, optional docs.idx.
  static TokenCorpus open(const std::filesystem::path& dir);
  void write(const std::filesystem::path& dir) const;

  const CorpusManifest& manifest() const { return manifest_; }
  std::span<const TokenId> tokens() const { return {data_, size_}; }
  std::span<const TokenId> row(std::uint64_t batch, std::uint32_t row) const;
  std::span<const TokenId> global_row(std::uint64_t global_row) const;

  bool has_docs() const { return has_docs_; }
  const std::vector<DocSpan>& docs() const { return docs_; }

  // Slice of whole batches [first, last), doc spans clipped away.
  TokenCorpus batches(std::uint64_t first, std::uint64_t last) const;

 private:
  CorpusManifest manifest_;
  std::shared_ptr<const void> storage_;
  const TokenId* data_ = nullptr;
  std::size_t size_ = 0;
  std::vector<DocSpan> docs_;
  bool has_docs_ = false;
};

void validate_manifest(const CorpusManifest& m);
void validate_docs(std::span<const DocSpan> docs, std::uint64_t total_tokens);

CorpusManifest read_manifest(const std::filesystem::path& file);
void write_manifest(const CorpusManifest& m, const std::filesystem::path& file);

}  // namespace linfreq::corpus
