#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "extax/embeddings.hpp"
#include "extax/numerics/autodiff.hpp"
#include "extax/numerics/parameters.hpp"
#include "extax/taxonomy.hpp"

namespace extax {

// Stage 1: token states -> 17 facet probabilities.
//
// Parameters:
//   pool.w                       1 x kMaxTokens, initialized to 1
//   <facet>.fc1.{weight,bias}    D -> D_h
//   <facet>.ln.{gamma,beta}      D_h
//   <facet>.fc2.{weight,bias}    D_h -> |facet|
// with <facet> in {persuasion, emotion, narrative_role}.

struct Stage1Config {
  double lr = 0.00065;
  double weight_decay = 0.00069;
  std::size_t epochs = 10;
  std::size_t patience = 7;
  std::size_t batch_size = 128;
  std::uint64_t seed = 43;
  std::size_t d_h = 32;
  double dropout = 0.3290;

  void validate() const;
};

struct Stage1Shape {
  std::size_t dim = 0;
  std::size_t d_h = 0;
};

ParameterSet init_stage1(std::size_t dim, std::size_t d_h, std::uint64_t seed);
// Throws MissingStage1 if any expected block is absent or inconsistent.
Stage1Shape stage1_shape(const ParameterSet& params);

// softmax(w[0..L]) as a 1 x L row.
Tensor pool_weights(const Tensor& w, std::size_t length);
// 1 x D. Throws EmptySequence for L = 0.
Tensor gated_pool(const Tensor& tokens, const Tensor& w);

// Dropout is applied only when `dropout_rng` is non-null.
struct FacetForwardOptions {
  double dropout = 0.0;
  Rng* dropout_rng = nullptr;
};

// Pooled vectors (B x D) -> B x 17 probabilities, facet blocks concatenated.
Var facet_forward(const BoundParameters& p, Var pooled, const FacetForwardOptions& opts = {});
// Token sequences -> B x 17 probabilities.
Var stage1_graph(Graph& g, const BoundParameters& p, std::span<const Tensor* const> tokens,
                 const FacetForwardOptions& opts = {});

// Per facet: batch mean of the summed per-category BCE.
std::array<Var, 3> stage1_facet_losses(Var probs, const Tensor& targets);
Var stage1_loss(Var probs, const Tensor& targets);

// Eval-mode probabilities, B x 17, computed in chunks of `chunk` samples.
Tensor stage1_predict(const ParameterSet& params, std::span<const Tensor* const> tokens,
                      std::size_t chunk = 256);

// Mean positive-class F1 over each facet's categories; gold is target >= 0.5.
std::array<double, 3> facet_macro_f1(const Tensor& probs, const Tensor& targets,
                                     double threshold = 0.5);

struct Stage1Example {
  const Tensor* tokens = nullptr;
  std::array<double, kTaxonomyDim> targets{};
};

struct Stage1EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // NaN for the baseline entry
  double val_loss = 0.0;
  std::array<double, 3> val_macro_f1{};
  bool improved = false;

  std::string to_json() const;
};

struct Stage1Result {
  ParameterSet params;
  std::vector<Stage1EpochLog> log;
  std::size_t best_epoch = 0;
};

// Early stopping on validation loss; returns the best-validation parameters.
Stage1Result train_stage1(std::span<const Stage1Example> train,
                          std::span<const Stage1Example> val, std::size_t dim,
                          const Stage1Config& config,
                          const std::function<void(const Stage1EpochLog&)>& on_epoch = {});

}  // namespace extax
