#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

namespace extax {

// Writes to a sibling temp file and renames it over `path`, so readers never
// observe a partially written file under the final name.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

// Calls fn(line_number, line) for each non-blank line. Line numbers start at 1.
void for_each_line(const std::filesystem::path& path,
                   const std::function<void(std::size_t, std::string_view)>& fn);

}  // namespace extax
