#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "extax/numerics/parameters.hpp"

namespace extax {

struct GradCheckConfig {
  double eps = 1e-5;
  std::size_t max_coords_per_block = 64;
  std::uint64_t seed = 0;
};

struct BlockGradError {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<BlockGradError> blocks;
  double max_rel_error = 0.0;
};

// Builds the scalar loss for `params` bound on a fresh graph.
using LossFn = std::function<Var(Graph&, const BoundParameters&)>;

// Compares reverse-mode gradients with central differences. Relative error is
// |a - n| / max(1, |a|, |n|). Blocks larger than the coordinate budget are
// sampled without replacement, coordinates with a nonzero analytic gradient
// first, so sparse blocks such as the gating vector are still exercised.
GradCheckReport gradient_check(const ParameterSet& params, const LossFn& loss,
                               const GradCheckConfig& config = {});

}  // namespace extax
