#include "extax/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "extax/errors.hpp"
#include "extax/numerics/rng.hpp"

namespace extax {

namespace {

double evaluate(const ParameterSet& params, const LossFn& loss) {
  Graph g;
  BoundParameters bound(g, params, false);
  return loss(g, bound).value()[0];
}

}  // namespace

GradCheckReport gradient_check(const ParameterSet& params, const LossFn& loss,
                               const GradCheckConfig& config) {
  if (!(config.eps >= 1e-7 && config.eps <= 1e-3)) {
    throw DomainError("gradient check eps must lie in [1e-7, 1e-3]");
  }
  std::vector<Tensor> analytic;
  {
    Graph g;
    BoundParameters bound(g, params, true);
    Var l = loss(g, bound);
    g.backward(l);
    analytic = bound.gradients();
  }

  GradCheckReport report;
  ParameterSet probe = params;
  Rng rng(config.seed);
  auto entries = probe.entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    Tensor& w = entries[p].value;
    std::vector<std::size_t> coords(w.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > config.max_coords_per_block) {
      rng.shuffle(std::span<std::size_t>(coords));
      std::stable_partition(coords.begin(), coords.end(),
                            [&](std::size_t i) { return analytic[p][i] != 0.0; });
      coords.resize(config.max_coords_per_block);
    }
    BlockGradError block{entries[p].name, coords.size(), 0.0};
    for (std::size_t i : coords) {
      const double orig = w[i];
      w[i] = orig + config.eps;
      const double up = evaluate(probe, loss);
      w[i] = orig - config.eps;
      const double down = evaluate(probe, loss);
      w[i] = orig;
      const double numeric = (up - down) / (2.0 * config.eps);
      const double a = analytic[p][i];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      block.max_rel_error = std::max(block.max_rel_error, std::abs(a - numeric) / denom);
    }
    report.max_rel_error = std::max(report.max_rel_error, block.max_rel_error);
    report.blocks.push_back(std::move(block));
  }
  return report;
}

}  // namespace extax
