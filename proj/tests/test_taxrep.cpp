#include <doctest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "extax/errors.hpp"
#include "extax/numerics/rng.hpp"
#include "extax/pipeline/gradcheck_suite.hpp"
#include "extax/taxrep.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace extax;

namespace {

// Independent pooling: softmax over the first L gate entries, then a weighted row sum.
std::vector<double> pool_oracle(const Tensor& tokens, const Tensor& w) {
  const std::size_t n = tokens.rows();
  double mx = -INFINITY;
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, w[i]);
  std::vector<double> e(n);
  double z = 0;
  for (std::size_t i = 0; i < n; ++i) z += (e[i] = std::exp(w[i] - mx));
  std::vector<double> out(tokens.cols(), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < tokens.cols(); ++d) out[d] += e[i] / z * tokens(i, d);
  return out;
}

struct Corpus {
  std::vector<std::unique_ptr<Tensor>> storage;
  std::vector<Stage1Example> examples;
  std::vector<const Tensor*> ptrs;
};

Corpus make_corpus(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  Corpus c;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = 1 + rng.below(9);
    c.storage.push_back(std::make_unique<Tensor>(test::random_tensor(len, dim, rng)));
    Stage1Example ex;
    ex.tokens = c.storage.back().get();
    for (auto& t : ex.targets) t = rng.uniform() < 0.3 ? 0.9 : 0.1;
    c.examples.push_back(ex);
    c.ptrs.push_back(ex.tokens);
  }
  return c;
}

Tensor targets_of(const Corpus& c) {
  Tensor t = Tensor::matrix(c.examples.size(), kTaxonomyDim);
  for (std::size_t i = 0; i < c.examples.size(); ++i)
    for (std::size_t k = 0; k < kTaxonomyDim; ++k) t(i, k) = c.examples[i].targets[k];
  return t;
}

}  // namespace

TEST_CASE("gated pooling matches the oracle on random sequences") {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t len = 1 + rng.below(40);
    const Tensor tokens = test::random_tensor(len, 12, rng);
    const Tensor w = test::random_tensor(1, kMaxTokens, rng, 2.0);
    const Tensor pooled = gated_pool(tokens, w);
    const auto expect = pool_oracle(tokens, w);
    for (std::size_t d = 0; d < 12; ++d) CHECK(std::abs(pooled[d] - expect[d]) < 1e-12);
    const Tensor a = pool_weights(w, len);
    double total = 0;
    for (double v : a.data()) total += v;
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("pooling edge cases") {
  Rng rng(22);
  const Tensor ones = Tensor::matrix(1, kMaxTokens, 1.0);
  const Tensor single = test::random_tensor(1, 5, rng);
  CHECK(test::max_abs_diff(gated_pool(single, ones), single) == 0.0);

  const Tensor tokens = test::random_tensor(6, 5, rng);
  Tensor w = Tensor::matrix(1, kMaxTokens, 0.0);
  w[3] = 60.0;
  const Tensor pooled = gated_pool(tokens, w);
  for (std::size_t d = 0; d < 5; ++d) CHECK(std::abs(pooled[d] - tokens(3, d)) < 1e-8);

  // Uniform gates give the plain mean.
  const Tensor mean_pool = gated_pool(tokens, ones);
  for (std::size_t d = 0; d < 5; ++d) {
    double m = 0;
    for (std::size_t i = 0; i < 6; ++i) m += tokens(i, d) / 6;
    CHECK(std::abs(mean_pool[d] - m) < 1e-12);
  }
  CHECK_THROWS_AS(gated_pool(Tensor::matrix(0, 5), ones), EmptySequence);
}

TEST_CASE("initialization") {
  const ParameterSet p = init_stage1(24, 32, 5);
  CHECK(p.at("pool.w") == Tensor::matrix(1, kMaxTokens, 1.0));
  CHECK(p.at("emotion.ln.gamma") == Tensor::matrix(1, 32, 1.0));
  CHECK(p.at("emotion.ln.beta") == Tensor::matrix(1, 32, 0.0));
  CHECK(p.at("persuasion.fc2.weight").cols() == 6);
  CHECK(p.at("emotion.fc2.weight").cols() == 5);
  CHECK(p.at("narrative_role.fc2.weight").cols() == 6);
  const double bound = 1.0 / std::sqrt(24.0);
  for (double v : p.at("persuasion.fc1.weight").data()) CHECK(std::abs(v) <= bound);
  CHECK(init_stage1(24, 32, 5) == p);
  CHECK_FALSE(init_stage1(24, 32, 6) == p);
  const Stage1Shape s = stage1_shape(p);
  CHECK(s.dim == 24);
  CHECK(s.d_h == 32);
  ParameterSet broken;
  broken.add("pool.w", Tensor::matrix(1, kMaxTokens, 1.0));
  CHECK_THROWS_AS(stage1_shape(broken), MissingStage1);
}

TEST_CASE("zeroed output layers give 0.5 everywhere and loss 17 ln 2") {
  ParameterSet p = init_stage1(10, 8, 1);
  for (const char* f : {"persuasion", "emotion", "narrative_role"}) {
    p.at(std::string(f) + ".fc2.weight").fill(0.0);
    p.at(std::string(f) + ".fc2.bias").fill(0.0);
  }
  Corpus c = make_corpus(7, 10, 2);
  const Tensor probs = stage1_predict(p, c.ptrs);
  for (double v : probs.data()) CHECK(v == 0.5);
  Graph g;
  const double loss = stage1_loss(g.constant(probs), targets_of(c)).value()[0];
  CHECK(std::abs(loss - 17.0 * std::log(2.0)) < 1e-12);
}

TEST_CASE("loss equals the BCE oracle and decomposes by facet") {
  Rng rng(8);
  Tensor probs = Tensor::matrix(5, kTaxonomyDim);
  for (double& v : probs.data()) v = rng.uniform(0.01, 0.99);
  probs(0, 0) = 0.0;
  probs(1, 1) = 1.0;
  Corpus c = make_corpus(5, 4, 9);
  const Tensor y = targets_of(c);

  std::vector<std::vector<double>> pv(5), yv(5);
  for (std::size_t r = 0; r < 5; ++r) {
    pv[r].assign(probs.row_span(r).begin(), probs.row_span(r).end());
    yv[r].assign(y.row_span(r).begin(), y.row_span(r).end());
  }
  Graph g;
  Var pvar = g.constant(probs);
  const double total = stage1_loss(pvar, y).value()[0];
  CHECK(std::abs(total - oracle::bce(pv, yv)) < 1e-10);
  const auto parts = stage1_facet_losses(pvar, y);
  double sum = 0;
  for (Var v : parts) sum += v.value()[0];
  CHECK(std::abs(sum - total) < 1e-12);
}

TEST_CASE("eval-mode prediction is deterministic and chunk independent") {
  const ParameterSet p = init_stage1(10, 16, 3);
  Corpus c = make_corpus(13, 10, 4);
  const Tensor a = stage1_predict(p, c.ptrs, 256);
  const Tensor b = stage1_predict(p, c.ptrs, 4);
  CHECK(a == stage1_predict(p, c.ptrs, 256));
  CHECK(test::max_abs_diff(a, b) < 1e-14);
  for (double v : a.data()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("stage 1 input validation") {
  const ParameterSet p = init_stage1(10, 16, 3);
  Rng rng(1);
  const Tensor empty = Tensor::matrix(0, 10);
  const Tensor too_long = test::random_tensor(kMaxTokens + 1, 10, rng);
  const Tensor wrong_dim = test::random_tensor(3, 11, rng);
  const Tensor* e[] = {&empty};
  const Tensor* l[] = {&too_long};
  const Tensor* d[] = {&wrong_dim};
  CHECK_THROWS_AS(stage1_predict(p, e), EmptySequence);
  CHECK_THROWS_AS(stage1_predict(p, l), ShapeError);
  CHECK_THROWS_AS(stage1_predict(p, d), DimensionMismatch);
  const Tensor max_len = test::random_tensor(kMaxTokens, 10, rng);
  const Tensor* m[] = {&max_len};
  CHECK(stage1_predict(p, m).rows() == 1);
}

TEST_CASE("stage 1 gradients agree with finite differences") {
  const GradCheckReport r = stage1_gradcheck({});
  CHECK(r.max_rel_error < 1e-5);
  bool saw_pool = false;
  for (const auto& b : r.blocks) {
    INFO(b.name);
    CHECK(b.checked > 0);
    saw_pool |= b.name == "pool.w";
  }
  CHECK(saw_pool);
}

TEST_CASE("facet macro F1") {
  Tensor probs = Tensor::matrix(2, kTaxonomyDim, 0.0);
  Tensor gold = Tensor::matrix(2, kTaxonomyDim, 0.0);
  // Emotion: perfect on category 6, a false positive on 7, the rest all-negative.
  gold(0, 6) = 1.0;
  probs(0, 6) = 0.9;
  probs(1, 7) = 0.7;
  const auto f1 = facet_macro_f1(probs, gold);
  CHECK(f1[0] == 0.0);
  CHECK(std::abs(f1[1] - 1.0 / 5.0) < 1e-15);
  CHECK(f1[2] == 0.0);
}

TEST_CASE("training with zero epochs returns the initialization") {
  Corpus tr = make_corpus(20, 8, 1), va = make_corpus(6, 8, 2);
  Stage1Config cfg;
  cfg.epochs = 0;
  cfg.d_h = 8;
  const Stage1Result r = train_stage1(tr.examples, va.examples, 8, cfg);
  CHECK(r.params == init_stage1(8, 8, cfg.seed));
  REQUIRE(r.log.size() == 1);
  CHECK(std::isnan(r.log[0].train_loss));
  CHECK(r.best_epoch == 0);
}

TEST_CASE("training is deterministic and lowers the validation loss") {
  Corpus tr = make_corpus(60, 8, 5), va = make_corpus(20, 8, 6);
  Stage1Config cfg;
  cfg.epochs = 4;
  cfg.d_h = 8;
  cfg.batch_size = 16;
  cfg.lr = 0.01;
  std::size_t calls = 0;
  const Stage1Result a =
      train_stage1(tr.examples, va.examples, 8, cfg, [&](const Stage1EpochLog&) { ++calls; });
  const Stage1Result b = train_stage1(tr.examples, va.examples, 8, cfg);
  CHECK(calls == a.log.size());
  CHECK(a.params == b.params);
  REQUIRE(a.log.size() == 5);
  double best = a.log[0].val_loss;
  for (const auto& e : a.log) best = std::min(best, e.val_loss);
  CHECK(best < a.log[0].val_loss);
  CHECK(a.log[a.best_epoch].val_loss == best);
  CHECK(a.log[1].to_json().find("\"epoch\"") != std::string::npos);
  cfg.seed = 44;
  CHECK_FALSE(train_stage1(tr.examples, va.examples, 8, cfg).params == a.params);
}

TEST_CASE("config validation") {
  Stage1Config cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.dropout = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
