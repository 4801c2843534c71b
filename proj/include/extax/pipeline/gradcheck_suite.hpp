#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "extax/numerics/gradcheck.hpp"

namespace extax {

struct NamedGradCheck {
  std::string name;
  GradCheckReport report;
};

struct GradSuiteConfig {
  std::size_t dim = 16;
  std::size_t length = 7;
  std::size_t n_ppt = 3;
  std::uint64_t seed = 7;
};

// One check per autodiff primitive, on random inputs.
std::vector<NamedGradCheck> primitive_gradchecks(std::uint64_t seed);
// Gated pooling + facet heads + summed facet BCE, dropout off.
GradCheckReport stage1_gradcheck(const GradSuiteConfig& config);
// TransMLP -> prompts -> attention -> prediction head -> cross-entropy, on a
// padded batch whose longest sequence has `length` tokens.
GradCheckReport stage2_gradcheck(const GradSuiteConfig& config);

}  // namespace extax
