#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "extax/numerics/parameters.hpp"

namespace extax {

struct AdamWConfig {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with decoupled weight decay: theta -= lr * wd * theta before the moment step.
class AdamW {
 public:
  AdamW(const ParameterSet& params, AdamWConfig config);

  void step(ParameterSet& params, std::span<const Tensor> grads);
  std::size_t steps() const { return t_; }

 private:
  AdamWConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t t_ = 0;
};

}  // namespace extax
