#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace extax {

enum class Genre { Post, Article };

std::string_view genre_name(Genre g);

// One JSON-lines record: {"sample_id", "text", "label"?, "genre"?, "source"?}.
struct DatasetRecord {
  std::string sample_id;
  std::string text;
  std::optional<int> label;  // 1 = fake
  std::optional<Genre> genre;
  std::string source;
};

DatasetRecord parse_dataset_line(std::string_view line);
std::string to_json_line(const DatasetRecord& r);

// Preserves file order. Throws ParseError naming the line, or DuplicateId.
std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, std::span<const DatasetRecord> records);

}  // namespace extax
