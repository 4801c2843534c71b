#include "extax/numerics/layers.hpp"

#include <cmath>

namespace extax::nn {

Tensor uniform_matrix(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  Tensor t = Tensor::matrix(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

void add_linear(ParameterSet& params, const std::string& prefix, std::size_t in, std::size_t out,
                Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  params.add(prefix + ".weight", uniform_matrix(in, out, bound, rng));
  params.add(prefix + ".bias", uniform_matrix(1, out, bound, rng));
}

void add_layer_norm(ParameterSet& params, const std::string& prefix, std::size_t n) {
  params.add(prefix + ".gamma", Tensor::matrix(1, n, 1.0));
  params.add(prefix + ".beta", Tensor::matrix(1, n, 0.0));
}

Var linear(const BoundParameters& p, const std::string& prefix, Var x) {
  return ad::add(ad::matmul(x, p[prefix + ".weight"]), p[prefix + ".bias"]);
}

Var layer_norm(const BoundParameters& p, const std::string& prefix, Var x) {
  return ad::layer_norm(x, p[prefix + ".gamma"], p[prefix + ".beta"]);
}

}  // namespace extax::nn
