#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "extax/numerics/rng.hpp"
#include "extax/numerics/tensor.hpp"

namespace extax {

class Graph;

// Handle to a node recorded on a Graph. Cheap to copy; only valid while the
// graph is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor& grad() const;
  std::size_t id() const { return id_; }
  Graph& graph() const { return *graph_; }
  bool valid() const { return graph_ != nullptr; }

  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Tape of primitive applications. Nodes are appended in evaluation order, so
// reverse insertion order is a valid reverse topological order.
class Graph {
 public:
  // Receives the upstream gradient and the node's own forward value.
  using Backward = std::function<void(Graph&, const Tensor& out_grad, const Tensor& out_value)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor value, bool requires_grad);
  Var parameter(Tensor value) { return leaf(std::move(value), true); }
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Records an op output. `inputs` decides whether the node needs a gradient;
  // `backward` is only run when it does. Throws Diverged on non-finite output.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs,
             Backward backward);
  Var record(std::string_view op, Tensor value, std::span<const Var> inputs, Backward backward);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded adjoint in reverse.
  // Throws NonScalarLoss unless loss is 1 x 1.
  void backward(Var loss);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  // Zero tensor of the right shape when nothing flowed into `v`.
  const Tensor& grad(Var v);
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  // Adds `g` into the gradient slot of `v` (no-op if `v` needs no gradient).
  void accumulate(Var v, const Tensor& g);
  // Mutable gradient slot, allocated on first use; for fused adjoints.
  Tensor* grad_slot(Var v);

  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

namespace ad {

Var matmul(Var a, Var b);
// Elementwise sum. `b` may also be a 1 x n row broadcast over the rows of `a`.
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var transpose(Var a);
Var concat(std::span<const Var> parts, int axis);
Var slice(Var a, int axis, std::size_t begin, std::size_t end);

// Exact x * Phi(x).
Var gelu(Var x);
Var sigmoid(Var x);

// `valid`, when non-empty, has one flag per position along `axis`; masked
// positions get exactly zero weight. Throws AllKeysMasked if nothing is valid.
Var softmax(Var x, int axis, std::span<const std::uint8_t> valid = {});

// Normalizes each row over the last axis, then applies gamma/beta (1 x n).
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

// Multiplies by a precomputed mask (0 or 1/(1-rate)); see make_dropout_mask.
Var dropout(Var x, const Tensor& mask);
Tensor make_dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng);

Var sum(Var x);
Var mean(Var x);

inline constexpr double kProbClamp = 1e-12;

// (1/rows) * sum over rows and columns of -[y log p + (1-y) log(1-p)], with p
// clamped to [1e-12, 1 - 1e-12].
Var binary_cross_entropy(Var probs, const Tensor& targets);

// Mean over rows of -log softmax(logits)[label].
Var cross_entropy_with_logits(Var logits, std::span<const int> labels);

}  // namespace ad

// Plain-tensor helpers shared by forwards and oracles.
double gelu_value(double x);
double sigmoid_value(double x);

}  // namespace extax
