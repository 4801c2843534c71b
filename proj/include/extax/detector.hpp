#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "extax/metrics.hpp"
#include "extax/numerics/autodiff.hpp"
#include "extax/numerics/parameters.hpp"
#include "extax/taxonomy.hpp"

namespace extax {

// Stage 2: tokens + frozen taxonomy vector -> real/fake logits.
//
// Parameters:
//   trans.ln.{gamma,beta}             D
//   trans.fc1.{weight,bias}           D -> d_ff
//   trans.fc2.{weight,bias}           d_ff -> 17
//   prompt.q                          N_ppt x 17 (absent when N_ppt = 0)
//   attn<l>.head<k>.{wq,wk,wv}        17 -> d_k, d = (6, 5, 6), no bias
//   attn<l>.ln.{gamma,beta}           17
//   head.beta                         1 x (1 + N_ppt)
//   head.fc1.{weight,bias}            17 -> 128
//   head.ln.{gamma,beta}              128
//   head.fc2.{weight,bias}            128 -> 2

inline constexpr std::array<std::size_t, 3> kHeadDims{6, 5, 6};
inline constexpr std::size_t kPredictionHidden = 128;

struct DetectorShape {
  std::size_t dim = 0;
  std::size_t d_ff = 64;
  std::size_t n_ppt = 3;
  std::size_t n_att = 1;

  bool operator==(const DetectorShape&) const = default;
};

struct Stage2Config {
  double lr = 0.00096;
  double weight_decay = 0.00018;
  std::size_t epochs = 50;
  std::size_t patience = 3;
  std::size_t batch_size = 128;
  std::uint64_t seed = 43;

  void validate() const;
};

ParameterSet init_detector(const DetectorShape& shape, std::uint64_t seed);
// Recovers the architecture from parameter shapes. Throws ShapeError.
DetectorShape detector_shape(const ParameterSet& params);

// Plain single-sample forwards.
Tensor transform_tokens(const Tensor& tokens, const ParameterSet& det);
Tensor build_prompted_taxonomy(const Tensor& t, const Tensor& q);

struct AttentionOutput {
  Tensor h;                                          // (1 + N_ppt) x 17
  std::vector<std::array<Tensor, 3>> weights;        // [layer][head], queries x keys
};
// `key_mask` has one flag per row of `s_tilde`; empty means all valid.
AttentionOutput hetero_attention(const Tensor& t_tilde, const Tensor& s_tilde,
                                 const ParameterSet& det,
                                 std::span<const std::uint8_t> key_mask = {});

struct Prediction {
  std::array<double, 2> logits{};
  double fake_probability = 0.5;
  int verdict = kLabelReal;  // argmax, ties go to real
};
Prediction predict(const Tensor& h, const ParameterSet& det);
Prediction prediction_from_logits(std::span<const double> logits);

// Graph forwards. `tax` is B x 17 from the frozen Stage 1. Sequences are
// zero-padded to the batch maximum and padded keys are masked.
Var transform_tokens(const BoundParameters& p, Var tokens);
Var hetero_attention(const BoundParameters& p, Var t_tilde, Var s_tilde,
                     std::span<const std::uint8_t> key_mask, std::size_t n_att,
                     std::vector<std::array<Tensor, 3>>* weights = nullptr);
Var predict_logits(const BoundParameters& p, Var h_rows);
Var detector_graph(Graph& g, const BoundParameters& p, std::span<const Tensor* const> tokens,
                   const Tensor& tax);

// Eval-mode batched inference over precomputed taxonomy vectors.
std::vector<Prediction> detect(const ParameterSet& det, std::span<const Tensor* const> tokens,
                               const Tensor& tax, std::size_t chunk = 128);

struct Stage2Example {
  const Tensor* tokens = nullptr;
  int label = kLabelReal;
};

struct Stage2EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // NaN for the baseline entry
  double val_loss = 0.0;
  MetricReport val;
  bool improved = false;

  std::string to_json() const;
};

struct Stage2Result {
  ParameterSet params;
  std::vector<Stage2EpochLog> log;
  std::size_t best_epoch = 0;
};

// Stage 1 stays frozen: its outputs are computed once in eval mode. Early
// stopping on validation Macro-F1. Throws MissingStage1.
Stage2Result train_stage2(std::span<const Stage2Example> train,
                          std::span<const Stage2Example> val, const ParameterSet& stage1,
                          const DetectorShape& shape, const Stage2Config& config,
                          const std::function<void(const Stage2EpochLog&)>& on_epoch = {});

struct ManipulationProfile {
  std::string sample_id;
  TaxVector tax_vector{};
  int verdict = kLabelReal;
  double fake_probability = 0.5;
  std::array<std::vector<std::string>, 3> top_attributes;  // "None" when empty

  std::string to_json(const TaxonomySchema& schema) const;
  static ManipulationProfile from_json(std::string_view line, const TaxonomySchema& schema);
};

ManipulationProfile make_profile(std::string sample_id, const TaxVector& tax,
                                 const Prediction& pred, const TaxonomySchema& schema,
                                 double threshold = 0.5);

// Runs both stages on one sequence.
ManipulationProfile explain(const std::string& sample_id, const Tensor& tokens,
                            const ParameterSet& stage1, const ParameterSet& det,
                            const TaxonomySchema& schema, double threshold = 0.5);

}  // namespace extax
