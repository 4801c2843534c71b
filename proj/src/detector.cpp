#include "extax/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "extax/embeddings.hpp"
#include "extax/errors.hpp"
#include "extax/numerics/layers.hpp"
#include "extax/numerics/optim.hpp"
#include "extax/taxrep.hpp"

namespace extax {

namespace {

std::string head_name(std::size_t layer, std::size_t head, const char* w) {
  return "attn" + std::to_string(layer) + ".head" + std::to_string(head) + "." + w;
}

std::string ln_name(std::size_t layer) { return "attn" + std::to_string(layer) + ".ln"; }

// Row-stacks the sequences into (B * Lb) x D with zero padding.
Tensor pad_batch(std::span<const Tensor* const> tokens, std::size_t dim, std::size_t lb) {
  Tensor x = Tensor::matrix(tokens.size() * lb, dim);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Tensor& s = *tokens[i];
    for (std::size_t r = 0; r < s.rows(); ++r) {
      std::copy(s.row_span(r).begin(), s.row_span(r).end(), x.row_span(i * lb + r).begin());
    }
  }
  return x;
}

void check_tokens(const Tensor& tokens, std::size_t dim) {
  if (tokens.rank() != 2 || tokens.rows() == 0) throw EmptySequence("token sequence is empty");
  if (tokens.rows() > kMaxTokens) {
    throw ShapeError("sequence of " + std::to_string(tokens.rows()) + " tokens exceeds " +
                     std::to_string(kMaxTokens));
  }
  if (tokens.cols() != dim) {
    throw DimensionMismatch("token width " + std::to_string(tokens.cols()) +
                            ", detector expects " + std::to_string(dim));
  }
}

Var weighted_queries(const BoundParameters& p, Var h) {
  return ad::matmul(ad::softmax(p["head.beta"], 1), h);
}

Var prediction_head(const BoundParameters& p, Var pooled) {
  Var z = ad::gelu(nn::linear(p, "head.fc1", pooled));
  z = nn::layer_norm(p, "head.ln", z);
  return nn::linear(p, "head.fc2", z);
}

Tensor rows_of(const Tensor& m, std::span<const std::size_t> idx) {
  Tensor out = Tensor::matrix(idx.size(), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy(m.row_span(idx[r]).begin(), m.row_span(idx[r]).end(), out.row_span(r).begin());
  }
  return out;
}

double mean_cross_entropy(std::span<const Prediction> preds, std::span<const int> labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& l = preds[i].logits;
    const double m = std::max(l[0], l[1]);
    const double lse = m + std::log(std::exp(l[0] - m) + std::exp(l[1] - m));
    total += lse - l[labels[i]];
  }
  return total / static_cast<double>(preds.size());
}

struct Evaluation {
  double loss = 0.0;
  MetricReport report;
};

Evaluation evaluate(const ParameterSet& det, std::span<const Tensor* const> tokens,
                    const Tensor& tax, std::span<const int> labels, std::size_t chunk) {
  auto preds = detect(det, tokens, tax, chunk);
  std::vector<int> verdicts;
  for (const auto& p : preds) verdicts.push_back(p.verdict);
  return {mean_cross_entropy(preds, labels), compute_metrics(verdicts, labels)};
}

}  // namespace

void Stage2Config::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("stage2 lr must be positive");
  if (!(weight_decay >= 0.0)) throw ValidationError("stage2 weight_decay must be >= 0");
  if (batch_size == 0) throw ValidationError("stage2 batch_size must be positive");
}

ParameterSet init_detector(const DetectorShape& shape, std::uint64_t seed) {
  if (shape.dim == 0 || shape.d_ff == 0) throw ValidationError("detector dims must be positive");
  if (shape.n_att == 0) throw ValidationError("n_att must be at least 1");
  Rng rng(derive_seed(seed, "stage2.init"));
  const double bound17 = 1.0 / std::sqrt(static_cast<double>(kTaxonomyDim));
  ParameterSet p;
  nn::add_layer_norm(p, "trans.ln", shape.dim);
  nn::add_linear(p, "trans.fc1", shape.dim, shape.d_ff, rng);
  nn::add_linear(p, "trans.fc2", shape.d_ff, kTaxonomyDim, rng);
  if (shape.n_ppt > 0) {
    p.add("prompt.q", nn::uniform_matrix(shape.n_ppt, kTaxonomyDim, bound17, rng));
  }
  for (std::size_t l = 0; l < shape.n_att; ++l) {
    for (std::size_t k = 0; k < kHeadDims.size(); ++k) {
      for (const char* w : {"wq", "wk", "wv"}) {
        p.add(head_name(l, k, w), nn::uniform_matrix(kTaxonomyDim, kHeadDims[k], bound17, rng));
      }
    }
    nn::add_layer_norm(p, ln_name(l), kTaxonomyDim);
  }
  p.add("head.beta", Tensor::matrix(1, 1 + shape.n_ppt, 0.0));
  nn::add_linear(p, "head.fc1", kTaxonomyDim, kPredictionHidden, rng);
  nn::add_layer_norm(p, "head.ln", kPredictionHidden);
  nn::add_linear(p, "head.fc2", kPredictionHidden, 2, rng);
  return p;
}

DetectorShape detector_shape(const ParameterSet& params) {
  auto need = [&](const std::string& name) -> const Tensor& {
    if (!params.contains(name)) throw ShapeError("detector parameter '" + name + "' missing");
    const Tensor& t = params.at(name);
    if (t.rank() != 2) throw ShapeError("detector parameter '" + name + "' must be rank 2");
    return t;
  };
  DetectorShape s;
  s.dim = need("trans.ln.gamma").cols();
  s.d_ff = need("trans.fc1.weight").cols();
  const std::size_t queries = need("head.beta").cols();
  if (queries == 0) throw ShapeError("head.beta is empty");
  s.n_ppt = queries - 1;
  s.n_att = 0;
  while (params.contains(ln_name(s.n_att) + ".gamma")) ++s.n_att;
  if (s.n_att == 0) throw ShapeError("detector has no attention layers");
  // A fresh init with the inferred shape must match name for name, shape for shape.
  ParameterSet ref = init_detector(s, 0);
  if (ref.size() != params.size()) throw ShapeError("detector checkpoint has unexpected entries");
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const auto& a = ref.entries()[i];
    const auto& b = params.entries()[i];
    if (a.name != b.name || a.value.shape() != b.value.shape()) {
      throw ShapeError("detector parameter '" + b.name + "' does not fit shape " +
                       shape_string(a.value.shape()) + " of '" + a.name + "'");
    }
  }
  return s;
}

Var transform_tokens(const BoundParameters& p, Var tokens) {
  Var x = nn::layer_norm(p, "trans.ln", tokens);
  x = ad::gelu(nn::linear(p, "trans.fc1", x));
  return nn::linear(p, "trans.fc2", x);
}

Var hetero_attention(const BoundParameters& p, Var t_tilde, Var s_tilde,
                     std::span<const std::uint8_t> key_mask, std::size_t n_att,
                     std::vector<std::array<Tensor, 3>>* weights) {
  Var x = t_tilde;
  for (std::size_t l = 0; l < n_att; ++l) {
    std::array<Var, 3> heads;
    std::array<Tensor, 3> layer_weights;
    for (std::size_t k = 0; k < kHeadDims.size(); ++k) {
      Var q = ad::matmul(x, p[head_name(l, k, "wq")]);
      Var key = ad::matmul(s_tilde, p[head_name(l, k, "wk")]);
      Var v = ad::matmul(s_tilde, p[head_name(l, k, "wv")]);
      Var scores = ad::scale(ad::matmul(q, ad::transpose(key)),
                             1.0 / std::sqrt(static_cast<double>(kHeadDims[k])));
      Var a = ad::softmax(scores, 1, key_mask);
      if (weights != nullptr) layer_weights[k] = a.value();
      heads[k] = ad::matmul(a, v);
    }
    if (weights != nullptr) weights->push_back(std::move(layer_weights));
    x = nn::layer_norm(p, ln_name(l), ad::add(x, ad::concat(heads, 1)));
  }
  return x;
}

Var predict_logits(const BoundParameters& p, Var h_rows) {
  return prediction_head(p, weighted_queries(p, h_rows));
}

Var detector_graph(Graph& g, const BoundParameters& p, std::span<const Tensor* const> tokens,
                   const Tensor& tax) {
  if (tokens.empty()) throw EmptyInput("detector forward needs at least one sequence");
  if (tax.rank() != 2 || tax.rows() != tokens.size() || tax.cols() != kTaxonomyDim) {
    throw ShapeError("taxonomy batch must be " + std::to_string(tokens.size()) + " x 17, got " +
                     shape_string(tax.shape()));
  }
  const std::size_t dim = p["trans.ln.gamma"].cols();
  const std::size_t n_ppt = p["head.beta"].cols() - 1;
  std::size_t n_att = 0;
  while (p.contains(ln_name(n_att) + ".gamma")) ++n_att;

  std::size_t lb = 0;
  for (const Tensor* s : tokens) {
    check_tokens(*s, dim);
    lb = std::max(lb, s->rows());
  }
  Var s_all = transform_tokens(p, g.constant(pad_batch(tokens, dim, lb)));
  Var t_all = g.constant(tax);

  std::vector<Var> pooled;
  pooled.reserve(tokens.size());
  std::vector<std::uint8_t> mask(lb);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::fill(mask.begin(), mask.end(), std::uint8_t{0});
    std::fill_n(mask.begin(), tokens[i]->rows(), std::uint8_t{1});
    Var s_i = ad::slice(s_all, 0, i * lb, (i + 1) * lb);
    Var t_i = ad::slice(t_all, 0, i, i + 1);
    Var t_tilde = n_ppt > 0 ? ad::concat(std::array<Var, 2>{t_i, p["prompt.q"]}, 0) : t_i;
    Var h = hetero_attention(p, t_tilde, s_i, mask, n_att);
    pooled.push_back(weighted_queries(p, h));
  }
  return prediction_head(p, ad::concat(pooled, 0));
}

Tensor transform_tokens(const Tensor& tokens, const ParameterSet& det) {
  const DetectorShape s = detector_shape(det);
  check_tokens(tokens, s.dim);
  Graph g;
  BoundParameters p(g, det, false);
  return transform_tokens(p, g.constant(tokens)).value();
}

Tensor build_prompted_taxonomy(const Tensor& t, const Tensor& q) {
  if (t.rank() != 2 || t.rows() != 1 || t.cols() != kTaxonomyDim) {
    throw ShapeError("taxonomy vector must be 1 x 17, got " + shape_string(t.shape()));
  }
  if (q.empty()) return t;
  if (q.cols() != kTaxonomyDim) throw ShapeError("prompts must have 17 columns");
  Tensor out = Tensor::matrix(1 + q.rows(), kTaxonomyDim);
  std::copy(t.data().begin(), t.data().end(), out.data().begin());
  std::copy(q.data().begin(), q.data().end(), out.data().begin() + kTaxonomyDim);
  return out;
}

AttentionOutput hetero_attention(const Tensor& t_tilde, const Tensor& s_tilde,
                                 const ParameterSet& det,
                                 std::span<const std::uint8_t> key_mask) {
  const DetectorShape s = detector_shape(det);
  if (t_tilde.cols() != kTaxonomyDim || s_tilde.cols() != kTaxonomyDim) {
    throw ShapeError("attention inputs must have 17 columns");
  }
  Graph g;
  BoundParameters p(g, det, false);
  AttentionOutput out;
  out.h = hetero_attention(p, g.constant(t_tilde), g.constant(s_tilde), key_mask, s.n_att,
                           &out.weights)
              .value();
  return out;
}

Prediction prediction_from_logits(std::span<const double> logits) {
  Prediction pr;
  pr.logits = {logits[0], logits[1]};
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m), e1 = std::exp(logits[1] - m);
  pr.fake_probability = e1 / (e0 + e1);
  pr.verdict = logits[1] > logits[0] ? kLabelFake : kLabelReal;
  return pr;
}

Prediction predict(const Tensor& h, const ParameterSet& det) {
  const DetectorShape s = detector_shape(det);
  if (h.rows() != 1 + s.n_ppt || h.cols() != kTaxonomyDim) {
    throw ShapeError("predict expects " + std::to_string(1 + s.n_ppt) + " x 17, got " +
                     shape_string(h.shape()));
  }
  Graph g;
  BoundParameters p(g, det, false);
  return prediction_from_logits(predict_logits(p, g.constant(h)).value().data());
}

std::vector<Prediction> detect(const ParameterSet& det, std::span<const Tensor* const> tokens,
                               const Tensor& tax, std::size_t chunk) {
  detector_shape(det);
  if (tax.rows() != tokens.size()) throw ShapeError("one taxonomy row per sequence expected");
  std::vector<Prediction> out;
  out.reserve(tokens.size());
  for (std::size_t lo = 0; lo < tokens.size(); lo += chunk) {
    const std::size_t hi = std::min(tokens.size(), lo + chunk);
    std::vector<std::size_t> idx(hi - lo);
    std::iota(idx.begin(), idx.end(), lo);
    Graph g;
    BoundParameters p(g, det, false);
    const Tensor& logits = detector_graph(g, p, tokens.subspan(lo, hi - lo), rows_of(tax, idx)).value();
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      out.push_back(prediction_from_logits(logits.row_span(r)));
    }
  }
  return out;
}

std::string Stage2EpochLog::to_json() const {
  nlohmann::json j{{"stage", 2},
                   {"epoch", epoch},
                   {"val_loss", val_loss},
                   {"val_macro_f1", val.macro_f1},
                   {"val_macro_recall", val.macro_recall},
                   {"val_accuracy", val.accuracy},
                   {"improved", improved}};
  j["train_loss"] = std::isnan(train_loss) ? nlohmann::json(nullptr) : nlohmann::json(train_loss);
  return j.dump();
}

Stage2Result train_stage2(std::span<const Stage2Example> train,
                          std::span<const Stage2Example> val, const ParameterSet& stage1,
                          const DetectorShape& shape, const Stage2Config& config,
                          const std::function<void(const Stage2EpochLog&)>& on_epoch) {
  config.validate();
  const Stage1Shape s1 = stage1_shape(stage1);
  if (s1.dim != shape.dim) {
    throw DimensionMismatch("stage-1 width " + std::to_string(s1.dim) + ", detector width " +
                            std::to_string(shape.dim));
  }
  if (train.empty() || val.empty()) throw EmptyInput("stage-2 training needs train and val data");

  auto unpack = [](std::span<const Stage2Example> xs) {
    std::pair<std::vector<const Tensor*>, std::vector<int>> out;
    for (const auto& x : xs) {
      if (x.label != kLabelReal && x.label != kLabelFake) {
        throw ValidationError("stage-2 labels must be 0 or 1");
      }
      out.first.push_back(x.tokens);
      out.second.push_back(x.label);
    }
    return out;
  };
  auto [train_tokens, train_labels] = unpack(train);
  auto [val_tokens, val_labels] = unpack(val);
  const Tensor train_tax = stage1_predict(stage1, train_tokens);
  const Tensor val_tax = stage1_predict(stage1, val_tokens);

  ParameterSet params = init_detector(shape, config.seed);
  AdamW opt(params, {.lr = config.lr, .weight_decay = config.weight_decay});
  Rng shuffle_rng(derive_seed(config.seed, "stage2.shuffle"));

  Stage2Result result;
  auto emit = [&](Stage2EpochLog entry) {
    if (on_epoch) on_epoch(entry);
    result.log.push_back(entry);
  };

  Evaluation base = evaluate(params, val_tokens, val_tax, val_labels, config.batch_size);
  emit({0, std::numeric_limits<double>::quiet_NaN(), base.loss, base.report, true});
  double best_f1 = base.report.macro_f1;
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
      std::vector<int> labels;
      for (std::size_t i : idx) {
        tokens.push_back(train_tokens[i]);
        labels.push_back(train_labels[i]);
      }
      Graph g;
      BoundParameters p(g, params, true);
      Var logits = detector_graph(g, p, tokens, rows_of(train_tax, idx));
      Var loss = ad::cross_entropy_with_logits(logits, labels);
      g.backward(loss);
      opt.step(params, p.gradients());
      loss_sum += loss.value()[0] * static_cast<double>(idx.size());
    }
    Evaluation ev = evaluate(params, val_tokens, val_tax, val_labels, config.batch_size);
    if (!std::isfinite(ev.loss)) throw Diverged("stage-2 validation loss is not finite");
    // Ties in Macro-F1 are broken by validation loss.
    const bool improved = ev.report.macro_f1 > best_f1 ||
                          (ev.report.macro_f1 == best_f1 && ev.loss < best_loss);
    emit({epoch, loss_sum / static_cast<double>(train.size()), ev.loss, ev.report, improved});
    if (improved) {
      best_f1 = ev.report.macro_f1;
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

ManipulationProfile make_profile(std::string sample_id, const TaxVector& tax,
                                 const Prediction& pred, const TaxonomySchema& schema,
                                 double threshold) {
  ManipulationProfile m;
  m.sample_id = std::move(sample_id);
  m.tax_vector = tax;
  m.verdict = pred.verdict;
  m.fake_probability = pred.fake_probability;
  for (std::size_t i = 0; i < kFacets.size(); ++i) {
    m.top_attributes[i] = active_categories(tax, kFacets[i], schema, threshold);
    if (m.top_attributes[i].empty()) m.top_attributes[i].push_back("None");
  }
  return m;
}

ManipulationProfile explain(const std::string& sample_id, const Tensor& tokens,
                            const ParameterSet& stage1, const ParameterSet& det,
                            const TaxonomySchema& schema, double threshold) {
  const Tensor* seq[] = {&tokens};
  const Tensor tax = stage1_predict(stage1, seq);
  const Prediction pred = detect(det, seq, tax).front();
  TaxVector v{};
  std::copy(tax.data().begin(), tax.data().end(), v.begin());
  return make_profile(sample_id, v, pred, schema, threshold);
}

std::string ManipulationProfile::to_json(const TaxonomySchema& schema) const {
  nlohmann::ordered_json j;
  j["sample_id"] = sample_id;
  j["verdict"] = label_name(verdict);
  j["fake_probability"] = fake_probability;
  for (const auto& cat : schema.categories()) j["taxonomy"][cat.answer_key] = tax_vector[cat.global_index];
  for (std::size_t i = 0; i < kFacets.size(); ++i) {
    j["top_attributes"][std::string(facet_key(kFacets[i]))] = top_attributes[i];
  }
  return j.dump();
}

ManipulationProfile ManipulationProfile::from_json(std::string_view line,
                                                   const TaxonomySchema& schema) {
  auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError("profile is not a JSON object");
  try {
    ManipulationProfile m;
    m.sample_id = j.at("sample_id").get<std::string>();
    const auto verdict = j.at("verdict").get<std::string>();
    if (verdict != "fake" && verdict != "real") throw ParseError("verdict must be real or fake");
    m.verdict = verdict == "fake" ? kLabelFake : kLabelReal;
    m.fake_probability = j.at("fake_probability").get<double>();
    for (const auto& cat : schema.categories()) {
      m.tax_vector[cat.global_index] = j.at("taxonomy").at(cat.answer_key).get<double>();
    }
    for (std::size_t i = 0; i < kFacets.size(); ++i) {
      m.top_attributes[i] =
          j.at("top_attributes").at(std::string(facet_key(kFacets[i]))).get<std::vector<std::string>>();
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed profile: ") + e.what());
  }
}

}  // namespace extax
