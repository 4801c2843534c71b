#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "extax/numerics/tensor.hpp"

namespace extax {

inline constexpr std::size_t kMaxTokens = 512;

// Frozen-backbone token states for one sample: L x D, 1 <= L <= kMaxTokens.
struct EmbeddingSequence {
  std::string sample_id;
  Tensor tokens;

  std::size_t length() const { return tokens.rows(); }
  std::size_t dim() const { return tokens.cols(); }
};

struct EmbeddingFile {
  std::size_t dim = 0;
  std::vector<EmbeddingSequence> records;
};

// EXEB layout, little-endian:
//   "EXEB" | u32 version=1 | u32 D | u64 count
//   per record: u32 id_len | id bytes | u32 L | L*D f32
inline constexpr unsigned kEmbeddingVersion = 1;

// Values are stored as f32; doubles that are not exactly representable are
// rounded. Throws DimMismatch when a record's width differs from `dim`.
std::string serialize_embeddings(const EmbeddingFile& file);
// Throws BadMagic or TruncatedRecord; DimMismatch when `expected_dim` is
// non-zero and differs from the header.
EmbeddingFile parse_embeddings(std::string_view bytes, std::size_t expected_dim = 0);

void write_embeddings(const std::filesystem::path& path, const EmbeddingFile& file);
EmbeddingFile read_embeddings(const std::filesystem::path& path, std::size_t expected_dim = 0);

}  // namespace extax
