#include <doctest.h>

#include <cmath>
#include <string>

#include "extax/errors.hpp"
#include "extax/numerics/autodiff.hpp"
#include "extax/numerics/checkpoint.hpp"
#include "extax/numerics/optim.hpp"
#include "extax/numerics/parameters.hpp"
#include "extax/numerics/rng.hpp"
#include "extax/pipeline/gradcheck_suite.hpp"
#include "support.hpp"

using namespace extax;

TEST_CASE("tensor basics") {
  Tensor t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t(1, 2) == 6);
  CHECK(t.row_span(1)[0] == 4);
  CHECK(t.all_finite());
  t(0, 0) = std::nan("");
  CHECK_FALSE(t.all_finite());
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST_CASE("rng is reproducible and seeds are salted") {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(derive_seed(43, "stage1.init") == derive_seed(43, "stage1.init"));
  CHECK(derive_seed(43, "stage1.init") != derive_seed(43, "stage2.init"));
  CHECK(derive_seed(43, "stage1.init") != derive_seed(434, "stage1.init"));
  Rng c(9);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(c.below(7) < 7);
  }
}

TEST_CASE("forward values of the primitives") {
  Graph g;
  Var a = g.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Var b = g.constant(Tensor::matrix(2, 2, {5, 6, 7, 8}));
  CHECK(ad::matmul(a, b).value() == Tensor::matrix(2, 2, {19, 22, 43, 50}));
  CHECK(ad::transpose(a).value() == Tensor::matrix(2, 2, {1, 3, 2, 4}));
  Var row = g.constant(Tensor::matrix(1, 2, {10, 20}));
  CHECK(ad::add(a, row).value() == Tensor::matrix(2, 2, {11, 22, 13, 24}));
  CHECK(ad::sum(a).value()[0] == 10);
  CHECK(ad::mean(a).value()[0] == 2.5);
  CHECK(ad::slice(a, 1, 1, 2).value() == Tensor::matrix(2, 1, {2, 4}));
  Var parts[] = {a, b};
  CHECK(ad::concat(parts, 0).value().rows() == 4);
  CHECK(ad::concat(parts, 1).value().cols() == 4);

  for (double x : {-3.0, -0.5, 0.0, 0.7, 4.0}) {
    const double phi = 0.5 * std::erfc(-x / std::sqrt(2.0));
    CHECK(std::abs(gelu_value(x) - x * phi) < 1e-15);
    CHECK(std::abs(sigmoid_value(x) - 1.0 / (1.0 + std::exp(-x))) < 1e-15);
  }
}

TEST_CASE("softmax rows sum to one and masked positions get exactly zero") {
  Rng rng(3);
  Graph g;
  Var x = g.constant(test::random_tensor(4, 6, rng, 5.0));
  const Tensor s = ad::softmax(x, 1).value();
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0;
    for (double v : s.row_span(r)) total += v;
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
  const std::uint8_t valid[] = {1, 0, 1, 1, 0, 0};
  const Tensor m = ad::softmax(x, 1, valid).value();
  for (std::size_t r = 0; r < 4; ++r) {
    CHECK(m(r, 1) == 0.0);
    CHECK(m(r, 4) == 0.0);
    CHECK(m(r, 5) == 0.0);
    CHECK(std::abs(m(r, 0) + m(r, 2) + m(r, 3) - 1.0) < 1e-12);
  }
  const std::uint8_t none[] = {0, 0, 0, 0, 0, 0};
  CHECK_THROWS_AS(ad::softmax(x, 1, none), AllKeysMasked);
}

TEST_CASE("layer norm output has zero mean and unit variance") {
  Rng rng(4);
  Graph g;
  Var x = g.constant(test::random_tensor(3, 8, rng, 3.0));
  Var gamma = g.constant(Tensor::matrix(1, 8, 1.0));
  Var beta = g.constant(Tensor::matrix(1, 8, 0.0));
  const Tensor y = ad::layer_norm(x, gamma, beta).value();
  for (std::size_t r = 0; r < 3; ++r) {
    double mean = 0, var = 0;
    for (double v : y.row_span(r)) mean += v / 8;
    for (double v : y.row_span(r)) var += (v - mean) * (v - mean) / 8;
    CHECK(std::abs(mean) < 1e-12);
    CHECK(std::abs(var - 1.0) < 1e-3);
  }
}

TEST_CASE("losses match closed forms") {
  Graph g;
  Var p = g.constant(Tensor::matrix(2, 2, {0.5, 0.5, 0.5, 0.5}));
  const Tensor y = Tensor::matrix(2, 2, {1, 0, 0.3, 1});
  CHECK(std::abs(ad::binary_cross_entropy(p, y).value()[0] - 2 * std::log(2.0)) < 1e-14);

  Var clamped = g.constant(Tensor::matrix(1, 1, {0.0}));
  const double big = ad::binary_cross_entropy(clamped, Tensor::matrix(1, 1, {1.0})).value()[0];
  CHECK(std::abs(big + std::log(1e-12)) < 1e-9);

  Var logits = g.constant(Tensor::matrix(2, 2, {0, 0, 1, 3}));
  const int labels[] = {0, 1};
  const double expected = (std::log(2.0) + std::log(1.0 + std::exp(-2.0))) / 2.0;
  CHECK(std::abs(ad::cross_entropy_with_logits(logits, labels).value()[0] - expected) < 1e-14);
}

TEST_CASE("backward needs a scalar and gradients of an affine map are exact") {
  Graph g;
  Var w = g.parameter(Tensor::matrix(2, 1, {3, -1}));
  Var x = g.constant(Tensor::matrix(1, 2, {2, 5}));
  CHECK_THROWS_AS(g.backward(ad::matmul(ad::transpose(x), ad::transpose(w))), NonScalarLoss);
  Var y = ad::matmul(x, w);
  g.backward(y);
  CHECK(g.grad(w) == Tensor::matrix(2, 1, {2, 5}));
  CHECK(g.grad(x) == Tensor::matrix(1, 2, {0, 0}));
}

TEST_CASE("non-finite values raise Diverged") {
  Graph g;
  Var x = g.parameter(Tensor::matrix(1, 1, {1e308}));
  CHECK_THROWS_AS(ad::scale(x, 10.0), Diverged);
}

TEST_CASE("dropout mask") {
  Rng rng(1);
  const Tensor m = ad::make_dropout_mask(50, 40, 0.25, rng);
  std::size_t zeros = 0;
  for (double v : m.data()) {
    CHECK((v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-15));
    zeros += v == 0.0;
  }
  CHECK(std::abs(static_cast<double>(zeros) / m.size() - 0.25) < 0.05);
  Rng rng2(1);
  CHECK(ad::make_dropout_mask(3, 3, 0.0, rng2) == Tensor::matrix(3, 3, 1.0));
}

TEST_CASE("AdamW matches a hand-rolled update") {
  ParameterSet ps;
  ps.add("w", Tensor::matrix(1, 2, {0.5, -2.0}));
  AdamWConfig cfg{0.01, 0.1, 0.9, 0.999, 1e-8};
  AdamW opt(ps, cfg);
  double w[2] = {0.5, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
  const double grads[3][2] = {{0.3, -1.0}, {-0.2, 0.4}, {1.5, 0.0}};
  for (int t = 1; t <= 3; ++t) {
    std::vector<Tensor> g{Tensor::matrix(1, 2, {grads[t - 1][0], grads[t - 1][1]})};
    opt.step(ps, g);
    for (int i = 0; i < 2; ++i) {
      w[i] = w[i] - 0.01 * 0.1 * w[i];
      m[i] = 0.9 * m[i] + 0.1 * grads[t - 1][i];
      v[i] = 0.999 * v[i] + 0.001 * grads[t - 1][i] * grads[t - 1][i];
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      w[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
    CHECK(std::abs(ps.at("w")[0] - w[0]) < 1e-15);
    CHECK(std::abs(ps.at("w")[1] - w[1]) < 1e-15);
  }
  CHECK(opt.steps() == 3);
  std::vector<Tensor> wrong{Tensor::matrix(1, 3)};
  CHECK_THROWS_AS(opt.step(ps, wrong), ShapeError);
}

TEST_CASE("parameter set bookkeeping") {
  ParameterSet ps;
  ps.add("a", Tensor::matrix(2, 3));
  ps.add("b", Tensor::matrix(1, 3));
  CHECK(ps.size() == 2);
  CHECK(ps.scalar_count() == 9);
  CHECK(ps.index_of("b") == 1);
  CHECK_THROWS_AS(ps.add("a", Tensor::matrix(1, 1)), ValidationError);
  CHECK_THROWS_AS(ps.at("zzz"), ValidationError);
}

TEST_CASE("checkpoint round trip and corruption") {
  Rng rng(2);
  ParameterSet ps;
  ps.add("x.weight", test::random_tensor(4, 3, rng));
  ps.add("x.bias", test::random_tensor(1, 3, rng));
  ps.add("scalar", Tensor({1}, std::vector<double>{std::nextafter(1.0, 2.0)}));
  const std::string bytes = serialize_parameters(ps);
  CHECK(bytes.substr(0, 4) == "EXTX");
  CHECK(parse_parameters(bytes) == ps);
  CHECK(serialize_parameters(parse_parameters(bytes)) == bytes);

  std::string bad = bytes;
  bad[0] = 'Z';
  CHECK_THROWS_AS(parse_parameters(bad), BadMagic);
  for (std::size_t cut = 4; cut < bytes.size(); cut += 7) {
    CHECK_THROWS_AS(parse_parameters(bytes.substr(0, cut)), TruncatedRecord);
  }
  CHECK_THROWS_AS(parse_parameters(bytes + "x"), TruncatedRecord);

  test::TempDir dir("ckpt");
  save_parameters(dir / "p.bin", ps);
  CHECK(load_parameters(dir / "p.bin") == ps);
  std::size_t files = 0;
  for (auto& e : std::filesystem::directory_iterator(dir.path())) files += e.is_regular_file();
  CHECK(files == 1);
  CHECK_THROWS_AS(load_parameters(dir / "missing.bin"), RuntimeFailure);
}

TEST_CASE("every primitive passes a central-difference check") {
  const auto checks = primitive_gradchecks(17);
  CHECK(checks.size() >= 15);
  for (const auto& c : checks) {
    INFO(c.name);
    CHECK(c.report.max_rel_error < 1e-6);
    for (const auto& b : c.report.blocks) CHECK(b.checked > 0);
  }
}

TEST_CASE("gradient_check validates eps") {
  ParameterSet ps;
  ps.add("w", Tensor::matrix(1, 1, {1.0}));
  LossFn loss = [](Graph&, const BoundParameters& p) { return ad::sum(ad::mul(p["w"], p["w"])); };
  CHECK(gradient_check(ps, loss).max_rel_error < 1e-8);
  CHECK_THROWS_AS(gradient_check(ps, loss, {1e-1, 8, 0}), ValidationError);
}
