#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "extax/numerics/autodiff.hpp"
#include "extax/numerics/tensor.hpp"

namespace extax {

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Named parameter table in insertion order. Insertion order is the checkpoint order.
class ParameterSet {
 public:
  Tensor& add(std::string name, Tensor init);
  bool contains(std::string_view name) const;
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  std::span<NamedTensor> entries() { return entries_; }
  std::span<const NamedTensor> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  bool operator==(const ParameterSet& o) const;

 private:
  std::vector<NamedTensor> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// A ParameterSet placed on a Graph, one leaf per entry.
class BoundParameters {
 public:
  BoundParameters(Graph& graph, const ParameterSet& params, bool trainable);

  Var operator[](std::string_view name) const;
  bool contains(std::string_view name) const { return params_->contains(name); }
  Var at(std::size_t i) const { return vars_[i]; }
  std::size_t size() const { return vars_.size(); }

  // Gradient per entry, in parameter order.
  std::vector<Tensor> gradients() const;

 private:
  Graph* graph_;
  const ParameterSet* params_;
  std::vector<Var> vars_;
};

}  // namespace extax
