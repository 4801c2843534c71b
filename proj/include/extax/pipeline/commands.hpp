#pragma once

#include <iosfwd>

namespace extax {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// Entry point of the `extax` tool. Returns 0 on success, 1 for usage or
// validation errors, 2 for runtime failures.
int run_command(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace extax
