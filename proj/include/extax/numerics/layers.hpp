#pragma once

#include <cstddef>
#include <string>

#include "extax/numerics/autodiff.hpp"
#include "extax/numerics/parameters.hpp"
#include "extax/numerics/rng.hpp"

namespace extax::nn {

// `<prefix>.weight` (in x out) and `<prefix>.bias` (1 x out), both drawn from
// U(-1/sqrt(in), 1/sqrt(in)).
void add_linear(ParameterSet& params, const std::string& prefix, std::size_t in, std::size_t out,
                Rng& rng);
// `<prefix>.gamma` = 1 and `<prefix>.beta` = 0, both 1 x n.
void add_layer_norm(ParameterSet& params, const std::string& prefix, std::size_t n);

Var linear(const BoundParameters& p, const std::string& prefix, Var x);
Var layer_norm(const BoundParameters& p, const std::string& prefix, Var x);

Tensor uniform_matrix(std::size_t rows, std::size_t cols, double bound, Rng& rng);

}  // namespace extax::nn
