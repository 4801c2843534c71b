#include "extax/numerics/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "extax/errors.hpp"

namespace extax {

const Tensor& Var::value() const { return graph_->value(*this); }
const Tensor& Var::grad() const { return graph_->grad(*this); }

Var Graph::leaf(Tensor value, bool requires_grad) {
  if (!value.all_finite()) throw Diverged("non-finite value in graph input");
  nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(std::string_view op, Tensor value, std::initializer_list<Var> inputs,
                  Backward backward) {
  return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Graph::record(std::string_view op, Tensor value, std::span<const Var> inputs,
                  Backward backward) {
  if (!value.all_finite()) throw Diverged("non-finite output from " + std::string(op));
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [this](Var v) { return nodes_[v.id()].requires_grad; });
  nodes_.push_back(Node{std::move(value), Tensor{}, needs, needs ? std::move(backward) : nullptr});
  return Var(this, nodes_.size() - 1);
}

Tensor* Graph::grad_slot(Var v) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return &n.grad;
}

void Graph::accumulate(Var v, const Tensor& g) {
  Tensor* slot = grad_slot(v);
  if (slot == nullptr) return;
  auto dst = slot->data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

const Tensor& Graph::grad(Var v) {
  Node& n = nodes_[v.id()];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Graph::backward(Var loss) {
  Node& root = nodes_[loss.id()];
  if (root.value.size() != 1) {
    throw NonScalarLoss("loss must be scalar, got shape " + shape_string(root.value.shape()));
  }
  for (auto& n : nodes_) {
    if (!n.grad.empty()) n.grad.fill(0.0);
  }
  if (!root.requires_grad) return;
  root.grad = Tensor(root.value.shape(), 1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    // Adjoints only write to strictly earlier nodes, so n stays put.
    n.backward(*this, n.grad, n.value);
  }
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace ad {

namespace {

void require_matrix(const Tensor& t, std::string_view op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + " expects a rank-2 tensor, got " +
                     shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

// out[i, j] += sum_p a[i, p] * b[p, j]
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// out[i, p] += sum_j g[i, j] * b[p, j]
void gemm_nt(const Tensor& g, const Tensor& b, Tensor& out) {
  const std::size_t m = g.rows(), n = g.cols(), k = b.rows();
  const double* pg = g.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = pg + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = pb + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      po[i * k + p] += acc;
    }
  }
}

// out[p, j] += sum_i a[i, p] * g[i, j]
void gemm_tn(const Tensor& a, const Tensor& g, Tensor& out) {
  const std::size_t m = a.rows(), k = a.cols(), n = g.cols();
  const double* pa = a.data().data();
  const double* pg = g.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = pg + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      double* orow = po + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * grow[j];
    }
  }
}

template <typename F>
Tensor map(const Tensor& x, F f) {
  Tensor out(x.shape(), 0.0);
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  }
  Tensor out = Tensor::matrix(av.rows(), bv.cols());
  gemm_nn(av, bv, out);
  return a.graph().record("matmul", std::move(out), {a, b},
                          [a, b](Graph& g, const Tensor& dy, const Tensor&) {
                            if (Tensor* ga = g.grad_slot(a)) gemm_nt(dy, g.value(b), *ga);
                            if (Tensor* gb = g.grad_slot(b)) gemm_tn(g.value(a), dy, *gb);
                          });
}

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "add");
  require_matrix(bv, "add");
  const bool broadcast = !av.same_shape(bv);
  if (broadcast && !(bv.rows() == 1 && bv.cols() == av.cols())) {
    throw ShapeError("add: " + shape_string(av.shape()) + " + " + shape_string(bv.shape()));
  }
  Tensor out = av;
  const std::size_t n = av.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += broadcast ? bv[i % n] : bv[i];
  return a.graph().record("add", std::move(out), {a, b},
                          [a, b, broadcast, n](Graph& g, const Tensor& dy, const Tensor&) {
                            g.accumulate(a, dy);
                            if (Tensor* gb = g.grad_slot(b)) {
                              for (std::size_t i = 0; i < dy.size(); ++i) {
                                (*gb)[broadcast ? i % n : i] += dy[i];
                              }
                            }
                          });
}

Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "mul");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.graph().record("mul", std::move(out), {a, b},
                          [a, b](Graph& g, const Tensor& dy, const Tensor&) {
                            if (Tensor* ga = g.grad_slot(a)) {
                              const Tensor& bv = g.value(b);
                              for (std::size_t i = 0; i < dy.size(); ++i) (*ga)[i] += dy[i] * bv[i];
                            }
                            if (Tensor* gb = g.grad_slot(b)) {
                              const Tensor& av = g.value(a);
                              for (std::size_t i = 0; i < dy.size(); ++i) (*gb)[i] += dy[i] * av[i];
                            }
                          });
}

Var scale(Var a, double s) {
  Tensor out = map(a.value(), [s](double v) { return v * s; });
  return a.graph().record("scale", std::move(out), {a},
                          [a, s](Graph& g, const Tensor& dy, const Tensor&) {
                            Tensor* ga = g.grad_slot(a);
                            for (std::size_t i = 0; i < dy.size(); ++i) (*ga)[i] += dy[i] * s;
                          });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  require_matrix(av, "transpose");
  Tensor out = Tensor::matrix(av.cols(), av.rows());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (std::size_t j = 0; j < av.cols(); ++j) out(j, i) = av(i, j);
  }
  return a.graph().record("transpose", std::move(out), {a},
                          [a](Graph& g, const Tensor& dy, const Tensor&) {
                            Tensor* ga = g.grad_slot(a);
                            for (std::size_t i = 0; i < ga->rows(); ++i) {
                              for (std::size_t j = 0; j < ga->cols(); ++j) (*ga)(i, j) += dy(j, i);
                            }
                          });
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  if (axis != 0 && axis != 1) throw ShapeError("concat axis must be 0 or 1");
  std::vector<Var> inputs(parts.begin(), parts.end());
  const std::size_t fixed = axis == 0 ? parts[0].cols() : parts[0].rows();
  std::size_t extent = 0;
  for (Var p : parts) {
    require_matrix(p.value(), "concat");
    if ((axis == 0 ? p.cols() : p.rows()) != fixed) {
      throw ShapeError("concat: mismatched " + shape_string(p.value().shape()));
    }
    extent += axis == 0 ? p.rows() : p.cols();
  }
  Tensor out = axis == 0 ? Tensor::matrix(extent, fixed) : Tensor::matrix(fixed, extent);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t i = 0; i < pv.rows(); ++i) {
      for (std::size_t j = 0; j < pv.cols(); ++j) {
        if (axis == 0) {
          out(offset + i, j) = pv(i, j);
        } else {
          out(i, offset + j) = pv(i, j);
        }
      }
    }
    offset += axis == 0 ? pv.rows() : pv.cols();
  }
  Graph& graph = parts[0].graph();
  return graph.record("concat", std::move(out), inputs,
                      [inputs, axis](Graph& g, const Tensor& dy, const Tensor&) {
                        std::size_t offset = 0;
                        for (Var p : inputs) {
                          const std::size_t r = p.rows(), c = p.cols();
                          if (Tensor* gp = g.grad_slot(p)) {
                            for (std::size_t i = 0; i < r; ++i) {
                              for (std::size_t j = 0; j < c; ++j) {
                                (*gp)(i, j) += axis == 0 ? dy(offset + i, j) : dy(i, offset + j);
                              }
                            }
                          }
                          offset += axis == 0 ? r : c;
                        }
                      });
}

Var slice(Var a, int axis, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  require_matrix(av, "slice");
  if (axis != 0 && axis != 1) throw ShapeError("slice axis must be 0 or 1");
  const std::size_t extent = axis == 0 ? av.rows() : av.cols();
  if (begin >= end || end > extent) {
    throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for extent " + std::to_string(extent));
  }
  const std::size_t rows = axis == 0 ? end - begin : av.rows();
  const std::size_t cols = axis == 1 ? end - begin : av.cols();
  const std::size_t r0 = axis == 0 ? begin : 0;
  const std::size_t c0 = axis == 1 ? begin : 0;
  Tensor out = Tensor::matrix(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = av(r0 + i, c0 + j);
  }
  return a.graph().record("slice", std::move(out), {a},
                          [a, r0, c0](Graph& g, const Tensor& dy, const Tensor&) {
                            Tensor* ga = g.grad_slot(a);
                            for (std::size_t i = 0; i < dy.rows(); ++i) {
                              for (std::size_t j = 0; j < dy.cols(); ++j) {
                                (*ga)(r0 + i, c0 + j) += dy(i, j);
                              }
                            }
                          });
}

Var gelu(Var x) {
  Tensor out = map(x.value(), gelu_value);
  return x.graph().record("gelu", std::move(out), {x},
                          [x](Graph& g, const Tensor& dy, const Tensor&) {
                            Tensor* gx = g.grad_slot(x);
                            const Tensor& xv = g.value(x);
                            for (std::size_t i = 0; i < dy.size(); ++i) {
                              const double v = xv[i];
                              const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
                              const double pdf = std::exp(-0.5 * v * v) * std::numbers::inv_sqrtpi /
                                                 std::numbers::sqrt2;
                              (*gx)[i] += dy[i] * (cdf + v * pdf);
                            }
                          });
}

Var sigmoid(Var x) {
  Tensor out = map(x.value(), sigmoid_value);
  return x.graph().record("sigmoid", std::move(out), {x},
                          [x](Graph& g, const Tensor& dy, const Tensor& y) {
                            Tensor* gx = g.grad_slot(x);
                            for (std::size_t i = 0; i < dy.size(); ++i) {
                              (*gx)[i] += dy[i] * y[i] * (1.0 - y[i]);
                            }
                          });
}

Var softmax(Var x, int axis, std::span<const std::uint8_t> valid) {
  const Tensor& xv = x.value();
  require_matrix(xv, "softmax");
  if (axis != 0 && axis != 1) throw ShapeError("softmax axis must be 0 or 1");
  const std::size_t len = axis == 1 ? xv.cols() : xv.rows();
  const std::size_t lines = axis == 1 ? xv.rows() : xv.cols();
  const std::size_t stride = axis == 1 ? 1 : xv.cols();
  const std::size_t line_step = axis == 1 ? xv.cols() : 1;
  if (!valid.empty() && valid.size() != len) {
    throw ShapeError("softmax mask has " + std::to_string(valid.size()) +
                     " entries for an axis of " + std::to_string(len));
  }
  if (!valid.empty() && std::none_of(valid.begin(), valid.end(), [](auto m) { return m != 0; })) {
    throw AllKeysMasked("every position along the softmax axis is masked");
  }
  auto on = [&valid](std::size_t k) { return valid.empty() || valid[k] != 0; };

  Tensor out(xv.shape(), 0.0);
  for (std::size_t l = 0; l < lines; ++l) {
    const std::size_t base = l * line_step;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < len; ++k) {
      if (on(k)) mx = std::max(mx, xv[base + k * stride]);
    }
    double total = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      if (!on(k)) continue;
      const double e = std::exp(xv[base + k * stride] - mx);
      out[base + k * stride] = e;
      total += e;
    }
    for (std::size_t k = 0; k < len; ++k) out[base + k * stride] /= total;
  }
  // Masked outputs are exactly 0, so the adjoint below sends them no gradient.
  return x.graph().record(
      "softmax", std::move(out), {x},
      [x, lines, len, stride, line_step](Graph& g, const Tensor& dy, const Tensor& y) {
        Tensor* gx = g.grad_slot(x);
        for (std::size_t l = 0; l < lines; ++l) {
          const std::size_t base = l * line_step;
          double dot = 0.0;
          for (std::size_t k = 0; k < len; ++k) {
            dot += dy[base + k * stride] * y[base + k * stride];
          }
          for (std::size_t k = 0; k < len; ++k) {
            const std::size_t i = base + k * stride;
            (*gx)[i] += y[i] * (dy[i] - dot);
          }
        }
      });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = x.value();
  require_matrix(xv, "layer_norm");
  const std::size_t rows = xv.rows(), n = xv.cols();
  if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 || beta.cols() != n) {
    throw ShapeError("layer_norm affine parameters must be 1 x " + std::to_string(n));
  }
  if (!(eps > 0.0)) throw ShapeError("layer_norm eps must be positive");
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();

  Tensor normalized = Tensor::matrix(rows, n);
  std::vector<double> inv_std(rows);
  Tensor out = Tensor::matrix(rows, n);
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xv(r, j);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xv(r, j) - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      normalized(r, j) = (xv(r, j) - mu) * inv_std[r];
      out(r, j) = normalized(r, j) * gv[j] + bv[j];
    }
  }
  return x.graph().record(
      "layer_norm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, normalized = std::move(normalized), inv_std = std::move(inv_std)](
          Graph& g, const Tensor& dy, const Tensor&) {
        const std::size_t rows = dy.rows(), n = dy.cols();
        const Tensor& gv = g.value(gamma);
        if (Tensor* gg = g.grad_slot(gamma)) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < n; ++j) (*gg)[j] += dy(r, j) * normalized(r, j);
          }
        }
        if (Tensor* gb = g.grad_slot(beta)) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < n; ++j) (*gb)[j] += dy(r, j);
          }
        }
        if (Tensor* gx = g.grad_slot(x)) {
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double d = dy(r, j) * gv[j];
              mean_d += d;
              mean_dx += d * normalized(r, j);
            }
            mean_d *= inv_n;
            mean_dx *= inv_n;
            for (std::size_t j = 0; j < n; ++j) {
              const double d = dy(r, j) * gv[j];
              (*gx)(r, j) += inv_std[r] * (d - mean_d - normalized(r, j) * mean_dx);
            }
          }
        }
      });
}

Tensor make_dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ShapeError("dropout rate must lie in [0, 1)");
  Tensor mask = Tensor::matrix(rows, cols, 1.0);
  if (rate == 0.0) return mask;
  const double keep = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform() < rate ? 0.0 : keep;
  return mask;
}

Var dropout(Var x, const Tensor& mask) {
  require_same_shape(x.value(), mask, "dropout");
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return x.graph().record("dropout", std::move(out), {x},
                          [x, mask](Graph& g, const Tensor& dy, const Tensor&) {
                            Tensor* gx = g.grad_slot(x);
                            for (std::size_t i = 0; i < dy.size(); ++i) (*gx)[i] += dy[i] * mask[i];
                          });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return x.graph().record("sum", Tensor::matrix(1, 1, total), {x},
                          [x](Graph& g, const Tensor& dy, const Tensor&) {
                            Tensor* gx = g.grad_slot(x);
                            for (double& v : gx->data()) v += dy[0];
                          });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

Var binary_cross_entropy(Var probs, const Tensor& targets) {
  const Tensor& pv = probs.value();
  require_matrix(pv, "binary_cross_entropy");
  require_same_shape(pv, targets, "binary_cross_entropy");
  const double inv_rows = 1.0 / static_cast<double>(pv.rows());
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double p = std::clamp(pv[i], kProbClamp, 1.0 - kProbClamp);
    const double y = targets[i];
    total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return probs.graph().record(
      "binary_cross_entropy", Tensor::matrix(1, 1, total * inv_rows), {probs},
      [probs, targets, inv_rows](Graph& g, const Tensor& dy, const Tensor&) {
        Tensor* gp = g.grad_slot(probs);
        const Tensor& pv = g.value(probs);
        for (std::size_t i = 0; i < pv.size(); ++i) {
          const double p = pv[i];
          if (p < kProbClamp || p > 1.0 - kProbClamp) continue;
          const double y = targets[i];
          (*gp)[i] += dy[0] * inv_rows * (-y / p + (1.0 - y) / (1.0 - p));
        }
      });
}

Var cross_entropy_with_logits(Var logits, std::span<const int> labels) {
  const Tensor& lv = logits.value();
  require_matrix(lv, "cross_entropy_with_logits");
  if (labels.size() != lv.rows()) {
    throw ShapeError("cross_entropy_with_logits: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(lv.rows()) + " rows");
  }
  const std::size_t rows = lv.rows(), k = lv.cols();
  Tensor probs = Tensor::matrix(rows, k);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k) {
      throw ShapeError("label " + std::to_string(labels[r]) + " out of range");
    }
    double mx = lv(r, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, lv(r, j));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(lv(r, j) - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t j = 0; j < k; ++j) probs(r, j) = std::exp(lv(r, j) - log_z);
    total += log_z - lv(r, static_cast<std::size_t>(labels[r]));
  }
  const double inv_rows = 1.0 / static_cast<double>(rows);
  std::vector<int> owned(labels.begin(), labels.end());
  return logits.graph().record(
      "cross_entropy_with_logits", Tensor::matrix(1, 1, total * inv_rows), {logits},
      [logits, probs = std::move(probs), owned = std::move(owned), inv_rows](
          Graph& g, const Tensor& dy, const Tensor&) {
        Tensor* gl = g.grad_slot(logits);
        for (std::size_t r = 0; r < probs.rows(); ++r) {
          for (std::size_t j = 0; j < probs.cols(); ++j) {
            const double onehot = static_cast<int>(j) == owned[r] ? 1.0 : 0.0;
            (*gl)(r, j) += dy[0] * inv_rows * (probs(r, j) - onehot);
          }
        }
      });
}

}  // namespace ad
}  // namespace extax
