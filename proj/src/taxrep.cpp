#include "extax/taxrep.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "extax/errors.hpp"
#include "extax/metrics.hpp"
#include "extax/numerics/layers.hpp"
#include "extax/numerics/optim.hpp"

namespace extax {

namespace {

std::string prefix(Facet f, const char* layer) {
  return std::string(facet_key(f)) + "." + layer;
}

void check_tokens(const Tensor& tokens, std::size_t dim) {
  if (tokens.rank() != 2 || tokens.rows() == 0) throw EmptySequence("token sequence is empty");
  if (tokens.rows() > kMaxTokens) {
    throw ShapeError("sequence of " + std::to_string(tokens.rows()) + " tokens exceeds " +
                     std::to_string(kMaxTokens));
  }
  if (tokens.cols() != dim) {
    throw DimensionMismatch("token width " + std::to_string(tokens.cols()) + ", model expects " +
                            std::to_string(dim));
  }
}

Tensor target_matrix(std::span<const Stage1Example> xs, std::span<const std::size_t> idx) {
  Tensor t = Tensor::matrix(idx.size(), kTaxonomyDim);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    for (std::size_t c = 0; c < kTaxonomyDim; ++c) t(r, c) = xs[idx[r]].targets[c];
  }
  return t;
}

struct Evaluation {
  double loss = 0.0;
  std::array<double, 3> f1{};
};

Evaluation evaluate(const ParameterSet& params, std::span<const Stage1Example> xs,
                    std::size_t chunk) {
  std::vector<const Tensor*> tokens;
  std::vector<std::size_t> idx(xs.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (const auto& x : xs) tokens.push_back(x.tokens);
  Tensor probs = stage1_predict(params, tokens, chunk);
  Tensor targets = target_matrix(xs, idx);
  Graph g;
  Var loss = stage1_loss(g.constant(probs), targets);
  return {loss.value()[0], facet_macro_f1(probs, targets)};
}

}  // namespace

void Stage1Config::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("stage1 lr must be positive");
  if (!(weight_decay >= 0.0)) throw ValidationError("stage1 weight_decay must be >= 0");
  if (batch_size == 0) throw ValidationError("stage1 batch_size must be positive");
  if (d_h == 0) throw ValidationError("d_h must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
}

ParameterSet init_stage1(std::size_t dim, std::size_t d_h, std::uint64_t seed) {
  if (dim == 0 || d_h == 0) throw ValidationError("stage1 dimensions must be positive");
  Rng rng(derive_seed(seed, "stage1.init"));
  ParameterSet p;
  p.add("pool.w", Tensor::matrix(1, kMaxTokens, 1.0));
  for (Facet f : kFacets) {
    nn::add_linear(p, prefix(f, "fc1"), dim, d_h, rng);
    nn::add_layer_norm(p, prefix(f, "ln"), d_h);
    nn::add_linear(p, prefix(f, "fc2"), d_h, facet_size(f), rng);
  }
  return p;
}

Stage1Shape stage1_shape(const ParameterSet& params) {
  auto need = [&](const std::string& name, std::size_t rows, std::size_t cols) {
    if (!params.contains(name)) throw MissingStage1("stage-1 parameter '" + name + "' missing");
    const Tensor& t = params.at(name);
    if (t.rank() != 2 || (rows && t.rows() != rows) || (cols && t.cols() != cols)) {
      throw MissingStage1("stage-1 parameter '" + name + "' has shape " +
                          shape_string(t.shape()));
    }
    return &t;
  };
  need("pool.w", 1, kMaxTokens);
  const Tensor* w1 = need(prefix(Facet::Persuasion, "fc1.weight"), 0, 0);
  Stage1Shape s{w1->rows(), w1->cols()};
  for (Facet f : kFacets) {
    need(prefix(f, "fc1.weight"), s.dim, s.d_h);
    need(prefix(f, "fc1.bias"), 1, s.d_h);
    need(prefix(f, "ln.gamma"), 1, s.d_h);
    need(prefix(f, "ln.beta"), 1, s.d_h);
    need(prefix(f, "fc2.weight"), s.d_h, facet_size(f));
    need(prefix(f, "fc2.bias"), 1, facet_size(f));
  }
  return s;
}

Tensor pool_weights(const Tensor& w, std::size_t length) {
  if (length == 0) throw EmptySequence("cannot pool an empty sequence");
  if (length > w.cols()) throw ShapeError("sequence longer than the gating vector");
  Graph g;
  return ad::softmax(ad::slice(g.constant(w), 1, 0, length), 1).value();
}

Tensor gated_pool(const Tensor& tokens, const Tensor& w) {
  if (tokens.rank() != 2 || tokens.rows() == 0) throw EmptySequence("cannot pool an empty sequence");
  Graph g;
  Var weights = g.constant(pool_weights(w, tokens.rows()));
  return ad::matmul(weights, g.constant(tokens)).value();
}

Var facet_forward(const BoundParameters& p, Var pooled, const FacetForwardOptions& opts) {
  std::array<Var, 3> heads;
  for (std::size_t i = 0; i < kFacets.size(); ++i) {
    const Facet f = kFacets[i];
    Var h = ad::gelu(nn::linear(p, prefix(f, "fc1"), pooled));
    h = nn::layer_norm(p, prefix(f, "ln"), h);
    if (opts.dropout_rng != nullptr && opts.dropout > 0.0) {
      h = ad::dropout(h, ad::make_dropout_mask(h.rows(), h.cols(), opts.dropout, *opts.dropout_rng));
    }
    heads[i] = ad::sigmoid(nn::linear(p, prefix(f, "fc2"), h));
  }
  return ad::concat(heads, 1);
}

Var stage1_graph(Graph& g, const BoundParameters& p, std::span<const Tensor* const> tokens,
                 const FacetForwardOptions& opts) {
  if (tokens.empty()) throw EmptyInput("stage-1 forward needs at least one sequence");
  Var w = p["pool.w"];
  const std::size_t dim = p[prefix(Facet::Persuasion, "fc1.weight")].rows();
  std::vector<Var> pooled;
  pooled.reserve(tokens.size());
  for (const Tensor* s : tokens) {
    check_tokens(*s, dim);
    Var gate = ad::softmax(ad::slice(w, 1, 0, s->rows()), 1);
    pooled.push_back(ad::matmul(gate, g.constant(*s)));
  }
  return facet_forward(p, ad::concat(pooled, 0), opts);
}

std::array<Var, 3> stage1_facet_losses(Var probs, const Tensor& targets) {
  if (probs.cols() != kTaxonomyDim || !targets.same_shape(probs.value())) {
    throw ShapeError("stage-1 loss expects B x 17 probabilities and targets, got " +
                     shape_string(probs.value().shape()) + " and " +
                     shape_string(targets.shape()));
  }
  std::array<Var, 3> out;
  for (std::size_t i = 0; i < kFacets.size(); ++i) {
    const Facet f = kFacets[i];
    const std::size_t lo = facet_offset(f), hi = lo + facet_size(f);
    Tensor t = Tensor::matrix(targets.rows(), hi - lo);
    for (std::size_t r = 0; r < targets.rows(); ++r) {
      for (std::size_t c = lo; c < hi; ++c) t(r, c - lo) = targets(r, c);
    }
    out[i] = ad::binary_cross_entropy(ad::slice(probs, 1, lo, hi), t);
  }
  return out;
}

Var stage1_loss(Var probs, const Tensor& targets) {
  auto parts = stage1_facet_losses(probs, targets);
  return ad::add(ad::add(parts[0], parts[1]), parts[2]);
}

Tensor stage1_predict(const ParameterSet& params, std::span<const Tensor* const> tokens,
                      std::size_t chunk) {
  stage1_shape(params);
  Tensor out = Tensor::matrix(tokens.size(), kTaxonomyDim);
  for (std::size_t lo = 0; lo < tokens.size(); lo += chunk) {
    const std::size_t hi = std::min(tokens.size(), lo + chunk);
    Graph g;
    BoundParameters p(g, params, false);
    const Tensor& probs = stage1_graph(g, p, tokens.subspan(lo, hi - lo)).value();
    for (std::size_t r = lo; r < hi; ++r) {
      for (std::size_t c = 0; c < kTaxonomyDim; ++c) out(r, c) = probs(r - lo, c);
    }
  }
  return out;
}

std::array<double, 3> facet_macro_f1(const Tensor& probs, const Tensor& targets,
                                     double threshold) {
  if (!probs.same_shape(targets) || probs.cols() != kTaxonomyDim) {
    throw ShapeError("facet_macro_f1 expects matching B x 17 inputs");
  }
  std::array<double, 3> out{};
  std::vector<int> pred(probs.rows()), gold(probs.rows());
  for (std::size_t i = 0; i < kFacets.size(); ++i) {
    const Facet f = kFacets[i];
    double total = 0.0;
    for (std::size_t c = facet_offset(f); c < facet_offset(f) + facet_size(f); ++c) {
      for (std::size_t r = 0; r < probs.rows(); ++r) {
        pred[r] = probs(r, c) >= threshold ? 1 : 0;
        gold[r] = targets(r, c) >= 0.5 ? 1 : 0;
      }
      total += class_metrics(confusion(pred, gold, 1)).f1;
    }
    out[i] = total / static_cast<double>(facet_size(f));
  }
  return out;
}

std::string Stage1EpochLog::to_json() const {
  nlohmann::json j{{"stage", 1}, {"epoch", epoch}, {"val_loss", val_loss}, {"improved", improved}};
  j["train_loss"] = std::isnan(train_loss) ? nlohmann::json(nullptr) : nlohmann::json(train_loss);
  for (std::size_t i = 0; i < kFacets.size(); ++i) {
    j["val_macro_f1"][std::string(facet_key(kFacets[i]))] = val_macro_f1[i];
  }
  return j.dump();
}

Stage1Result train_stage1(std::span<const Stage1Example> train,
                          std::span<const Stage1Example> val, std::size_t dim,
                          const Stage1Config& config,
                          const std::function<void(const Stage1EpochLog&)>& on_epoch) {
  config.validate();
  if (train.empty() || val.empty()) throw EmptyInput("stage-1 training needs train and val data");

  ParameterSet params = init_stage1(dim, config.d_h, config.seed);
  AdamW opt(params, {.lr = config.lr, .weight_decay = config.weight_decay});
  Rng shuffle_rng(derive_seed(config.seed, "stage1.shuffle"));
  Rng dropout_rng(derive_seed(config.seed, "stage1.dropout"));

  Stage1Result result;
  auto emit = [&](Stage1EpochLog entry) {
    if (on_epoch) on_epoch(entry);
    result.log.push_back(entry);
  };

  Evaluation base = evaluate(params, val, config.batch_size);
  emit({0, std::numeric_limits<double>::quiet_NaN(), base.loss, base.f1, true});
  double best_loss = base.loss;
  result.params = params;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t lo = 0; lo < order.size(); lo += config.batch_size) {
      auto idx = std::span<const std::size_t>(order).subspan(
          lo, std::min(config.batch_size, order.size() - lo));
      std::vector<const Tensor*> tokens;
      for (std::size_t i : idx) tokens.push_back(train[i].tokens);
      Graph g;
      BoundParameters p(g, params, true);
      Var probs = stage1_graph(g, p, tokens, {config.dropout, &dropout_rng});
      Var loss = stage1_loss(probs, target_matrix(train, idx));
      g.backward(loss);
      opt.step(params, p.gradients());
      loss_sum += loss.value()[0] * static_cast<double>(idx.size());
    }
    Evaluation ev = evaluate(params, val, config.batch_size);
    if (!std::isfinite(ev.loss)) throw Diverged("stage-1 validation loss is not finite");
    const bool improved = ev.loss < best_loss;
    emit({epoch, loss_sum / static_cast<double>(train.size()), ev.loss, ev.f1, improved});
    if (improved) {
      best_loss = ev.loss;
      result.params = params;
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  return result;
}

}  // namespace extax
