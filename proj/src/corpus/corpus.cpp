#include "linfreq/corpus/corpus.hpp"

#include <bit>
#include <fstream>

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <json.hpp>

#include "linfreq/error.hpp"

namespace linfreq::corpus {

static_assert(std::endian::native == std::endian::little,
              "token files are little-endian and mapped directly");

namespace {

class FileMapping {
 public:
  FileMapping(void* addr, std::size_t len) : addr_(addr), len_(len) {}
  ~FileMapping() {
    if (addr_ != nullptr) ::munmap(addr_, len_);
  }
  FileMapping(const FileMapping&) = delete;
  FileMapping& operator=(const FileMapping&) = delete;
  const void* data() const { return addr_; }

 private:
  void* addr_;
  std::size_t len_;
};

std::vector<DocSpan> read_docs(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0);
  if (bytes % 16 != 0) {
    throw IntegrityError(file.string() + ": size " + std::to_string(bytes) +
                         " is not a multiple of 16 bytes; last complete record ends at byte " +
                         std::to_string(bytes - bytes % 16));
  }
  std::vector<DocSpan> docs(bytes / 16);
  for (auto& d : docs) {
    std::uint64_t v[2];
    in.read(reinterpret_cast<char*>(v), sizeof v);
    d = {v[0], v[1]};
  }
  return docs;
}

}  // namespace

void validate_manifest(const CorpusManifest& m) {
  if (m.token_width != 4) {
    throw InvalidArgument("token_width must be 4, got " + std::to_string(m.token_width));
  }
  if (m.endianness != "little") {
    throw InvalidArgument("endianness must be \"little\", got \"" + m.endianness + "\"");
  }
  if (m.batch_size == 0 || m.seq_len == 0) {
    throw InvalidArgument("batch_size and seq_len must be positive");
  }
  if (m.total_tokens != m.n_batches * m.tokens_per_batch()) {
    throw InvalidArgument("total_tokens " + std::to_string(m.total_tokens) +
                          " != n_batches * batch_size * seq_len = " +
                          std::to_string(m.n_batches * m.tokens_per_batch()));
  }
}

void validate_docs(std::span<const DocSpan> docs, std::uint64_t total_tokens) {
  std::uint64_t prev_end = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto& d = docs[i];
    if (d.start >= d.end || d.end > total_tokens || d.start < prev_end) {
      throw IntegrityError("document span " + std::to_string(i) + " [" + std::to_string(d.start) +
                           ", " + std::to_string(d.end) +
                           ") is empty, out of bounds, unsorted or overlapping (total_tokens " +
                           std::to_string(total_tokens) + ")");
    }
    prev_end = d.end;
  }
}

CorpusManifest read_manifest(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open manifest " + file.string());
  CorpusManifest m;
  try {
    auto j = nlohmann::json::parse(in);
    m.token_width = j.at("token_width").get<std::uint32_t>();
    m.endianness = j.at("endianness").get<std::string>();
    m.batch_size = j.at("batch_size").get<std::uint32_t>();
    m.seq_len = j.at("seq_len").get<std::uint32_t>();
    m.n_batches = j.at("n_batches").get<std::uint64_t>();
    m.total_tokens = j.at("total_tokens").get<std::uint64_t>();
    m.tokenizer_id = j.value("tokenizer_id", std::string{});
  } catch (const nlohmann::json::exception& ex) {
    throw IoError(file.string() + ": " + ex.what());
  }
  validate_manifest(m);
  return m;
}

void write_manifest(const CorpusManifest& m, const std::filesystem::path& file) {
  nlohmann::ordered_json j;
  j["token_width"] = m.token_width;
  j["endianness"] = m.endianness;
  j["batch_size"] = m.batch_size;
  j["seq_len"] = m.seq_len;
  j["n_batches"] = m.n_batches;
  j["total_tokens"] = m.total_tokens;
  j["tokenizer_id"] = m.tokenizer_id;
  std::ofstream out(file);
  if (!out) throw IoError("cannot write manifest " + file.string());
  out << j.dump(2) << '\n';
}

TokenCorpus::TokenCorpus(CorpusManifest manifest, std::vector<TokenId> tokens,
                         std::vector<DocSpan> docs)
    : manifest_(std::move(manifest)) {
  validate_manifest(manifest_);
  if (tokens.size() != manifest_.total_tokens) {
    throw InvalidArgument("token array has " + std::to_string(tokens.size()) +
                          " tokens, manifest says " + std::to_string(manifest_.total_tokens));
  }
  if (!docs.empty()) {
    validate_docs(docs, manifest_.total_tokens);
    has_docs_ = true;
  }
  docs_ = std::move(docs);
  auto owned = std::make_shared<std::vector<TokenId>>(std::move(tokens));
  data_ = owned->data();
  size_ = owned->size();
  storage_ = std::move(owned);
}

TokenCorpus TokenCorpus::open(const std::filesystem::path& dir) {
  TokenCorpus c;
  c.manifest_ = read_manifest(dir / "manifest.json");
  const auto token_file = dir / "tokens.bin";
  const int fd = ::open(token_file.c_str(), O_RDONLY);
  if (fd < 0) throw IoError("cannot open " + token_file.string());
  struct stat st {};
  if (::fstat(fd, &st) != 0) {
    ::close(fd);
    throw IoError("cannot stat " + token_file.string());
  }
  const auto bytes = static_cast<std::uint64_t>(st.st_size);
  const std::uint64_t expected = c.manifest_.total_tokens * c.manifest_.token_width;
  if (bytes != expected) {
    ::close(fd);
    throw IntegrityError(token_file.string() + ": manifest expects " + std::to_string(expected) +
                         " bytes, file has " + std::to_string(bytes) + " bytes" +
                         (bytes < expected ? " (truncated at byte offset " : " (trailing data from byte offset ") +
                         std::to_string(std::min(bytes, expected)) + ")");
  }
  if (bytes > 0) {
    void* addr = ::mmap(nullptr, bytes, PROT_READ, MAP_PRIVATE, fd, 0);
    if (addr == MAP_FAILED) {
      ::close(fd);
      throw IoError("cannot map " + token_file.string());
    }
    ::madvise(addr, bytes, MADV_SEQUENTIAL);
    auto mapping = std::make_shared<FileMapping>(addr, bytes);
    c.data_ = static_cast<const TokenId*>(mapping->data());
    c.size_ = c.manifest_.total_tokens;
    c.storage_ = std::move(mapping);
  }
  ::close(fd);

  const auto doc_file = dir / "docs.idx";
  if (std::filesystem::exists(doc_file)) {
    c.docs_ = read_docs(doc_file);
    validate_docs(c.docs_, c.manifest_.total_tokens);
    c.has_docs_ = true;
  }
  return c;
}

void TokenCorpus::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  write_manifest(manifest_, dir / "manifest.json");
  {
    std::ofstream out(dir / "tokens.bin", std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / "tokens.bin").string());
    out.write(reinterpret_cast<const char*>(data_),
              static_cast<std::streamsize>(size_ * sizeof(TokenId)));
  }
  const auto doc_file = dir / "docs.idx";
  if (has_docs_) {
    std::ofstream out(doc_file, std::ios::binary);
    for (const auto& d : docs_) {
      const std::uint64_t v[2] = {d.start, d.end};
      out.write(reinterpret_cast<const char*>(v), sizeof v);
    }
  } else {
    std::filesystem::remove(doc_file);
  }
}

std::span<const TokenId> TokenCorpus::row(std::uint64_t batch, std::uint32_t r) const {
  return global_row(batch * manifest_.batch_size + r);
}

std::span<const TokenId> TokenCorpus::global_row(std::uint64_t global_row) const {
  return {data_ + global_row * manifest_.seq_len, manifest_.seq_len};
}

TokenCorpus TokenCorpus::batches(std::uint64_t first, std::uint64_t last) const {
  TokenCorpus c;
  c.manifest_ = manifest_;
  c.manifest_.n_batches = last - first;
  c.manifest_.total_tokens = c.manifest_.n_batches * manifest_.tokens_per_batch();
  c.storage_ = storage_;
  c.data_ = data_ + first * manifest_.tokens_per_batch();
  c.size_ = c.manifest_.total_tokens;
  return c;
}

}  // namespace linfreq::corpus
