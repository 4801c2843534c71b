#include "extax/numerics/parameters.hpp"

#include "extax/errors.hpp"

namespace extax {

Tensor& ParameterSet::add(std::string name, Tensor init) {
  if (contains(name)) throw ValidationError("duplicate parameter '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(init)});
  return entries_.back().value;
}

bool ParameterSet::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t ParameterSet::index_of(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("no parameter named '" + std::string(name) + "'");
  return it->second;
}

Tensor& ParameterSet::at(std::string_view name) { return entries_[index_of(name)].value; }
const Tensor& ParameterSet::at(std::string_view name) const {
  return entries_[index_of(name)].value;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

bool ParameterSet::operator==(const ParameterSet& o) const {
  if (entries_.size() != o.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != o.entries_[i].name || !(entries_[i].value == o.entries_[i].value)) {
      return false;
    }
  }
  return true;
}

BoundParameters::BoundParameters(Graph& graph, const ParameterSet& params, bool trainable)
    : graph_(&graph), params_(&params) {
  vars_.reserve(params.size());
  for (const auto& e : params.entries()) vars_.push_back(graph.leaf(e.value, trainable));
}

Var BoundParameters::operator[](std::string_view name) const {
  return vars_[params_->index_of(name)];
}

std::vector<Tensor> BoundParameters::gradients() const {
  std::vector<Tensor> out;
  out.reserve(vars_.size());
  for (Var v : vars_) out.push_back(graph_->grad(v));
  return out;
}

}  // namespace extax
