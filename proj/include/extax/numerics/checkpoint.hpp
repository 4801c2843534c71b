#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "extax/numerics/parameters.hpp"

namespace extax {

// EXTX layout, little-endian:
//   "EXTX" | u32 version=1 | u32 count
//   per entry: u32 name_len | name | u32 rank | rank x u64 dims | f64 data
inline constexpr unsigned kCheckpointVersion = 1;

std::string serialize_parameters(const ParameterSet& params);
// Throws BadMagic or TruncatedRecord.
ParameterSet parse_parameters(std::string_view bytes);

void save_parameters(const std::filesystem::path& path, const ParameterSet& params);
ParameterSet load_parameters(const std::filesystem::path& path);

}  // namespace extax
