#include "extax/embeddings.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "extax/errors.hpp"
#include "extax/io.hpp"

namespace extax {

namespace {

static_assert(std::endian::native == std::endian::little, "EXEB I/O assumes little-endian");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(std::string_view b, std::size_t& pos, const char* what) {
  if (b.size() - pos < sizeof(T)) {
    throw TruncatedRecord(std::string("embedding file truncated in ") + what);
  }
  T v;
  std::memcpy(&v, b.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::string serialize_embeddings(const EmbeddingFile& file) {
  std::string out = "EXEB";
  put<std::uint32_t>(out, kEmbeddingVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.dim));
  put<std::uint64_t>(out, file.records.size());
  for (const auto& r : file.records) {
    if (r.tokens.rank() != 2 || r.dim() != file.dim) {
      throw DimMismatch("record '" + r.sample_id + "' has width " +
                        std::to_string(r.tokens.rank() == 2 ? r.dim() : 0) + ", file has " +
                        std::to_string(file.dim));
    }
    if (r.length() == 0 || r.length() > kMaxTokens) {
      throw ValidationError("record '" + r.sample_id + "' has " + std::to_string(r.length()) +
                            " tokens; expected 1.." + std::to_string(kMaxTokens));
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.sample_id.size()));
    out += r.sample_id;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.length()));
    for (double x : r.tokens.data()) put<float>(out, static_cast<float>(x));
  }
  return out;
}

EmbeddingFile parse_embeddings(std::string_view b, std::size_t expected_dim) {
  if (b.size() < 4 || b.substr(0, 4) != "EXEB") throw BadMagic("not an EXEB embedding file");
  std::size_t pos = 4;
  auto version = get<std::uint32_t>(b, pos, "header");
  if (version != kEmbeddingVersion) {
    throw BadMagic("unsupported EXEB version " + std::to_string(version));
  }
  EmbeddingFile out;
  out.dim = get<std::uint32_t>(b, pos, "header");
  if (expected_dim != 0 && out.dim != expected_dim) {
    throw DimMismatch("embedding width " + std::to_string(out.dim) + ", expected " +
                      std::to_string(expected_dim));
  }
  auto count = get<std::uint64_t>(b, pos, "header");
  for (std::uint64_t i = 0; i < count; ++i) {
    auto id_len = get<std::uint32_t>(b, pos, "record id length");
    if (b.size() - pos < id_len) throw TruncatedRecord("embedding file truncated in record id");
    EmbeddingSequence r;
    r.sample_id = std::string(b.substr(pos, id_len));
    pos += id_len;
    auto len = get<std::uint32_t>(b, pos, "record length");
    if (len == 0 || len > kMaxTokens) {
      throw TruncatedRecord("record '" + r.sample_id + "' declares " + std::to_string(len) +
                            " tokens");
    }
    const std::size_t n = static_cast<std::size_t>(len) * out.dim;
    if ((b.size() - pos) / sizeof(float) < n) {
      throw TruncatedRecord("embedding file truncated in record '" + r.sample_id + "'");
    }
    std::vector<double> data(n);
    for (std::size_t k = 0; k < n; ++k) data[k] = get<float>(b, pos, "record data");
    r.tokens = Tensor({len, out.dim}, std::move(data));
    out.records.push_back(std::move(r));
  }
  if (pos != b.size()) throw TruncatedRecord("trailing bytes after declared records");
  return out;
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingFile& file) {
  write_file_atomic(path, serialize_embeddings(file));
}

EmbeddingFile read_embeddings(const std::filesystem::path& path, std::size_t expected_dim) {
  return parse_embeddings(read_file(path), expected_dim);
}

}  // namespace extax
