#include "extax/pipeline/gradcheck_suite.hpp"

#include <array>

#include "extax/detector.hpp"
#include "extax/numerics/layers.hpp"
#include "extax/numerics/rng.hpp"
#include "extax/taxrep.hpp"

namespace extax {

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::matrix(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

Tensor uniform01(std::size_t r, std::size_t c, Rng& rng, double lo, double hi) {
  Tensor t = Tensor::matrix(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Projects a non-scalar output onto a fixed random tensor so every output
// coordinate reaches the loss with a distinct weight.
Var project(Var y, const Tensor& r) {
  return ad::sum(ad::mul(y, y.graph().constant(r)));
}

// Overwrites every entry except the gating vector with random values, so the
// check does not run at the symmetric initialization.
void jitter(ParameterSet& p, Rng& rng, double scale) {
  for (auto& e : p.entries()) {
    if (e.name == "pool.w") continue;
    for (std::size_t i = 0; i < e.value.size(); ++i) e.value[i] += scale * rng.normal();
  }
}

}  // namespace

std::vector<NamedGradCheck> primitive_gradchecks(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "gradcheck.primitives"));
  std::vector<NamedGradCheck> out;
  auto run = [&](std::string name, ParameterSet p, LossFn f) {
    out.push_back({std::move(name), gradient_check(p, f, {.seed = seed})});
  };
  const Tensor r34 = random_matrix(3, 4, rng), r43 = random_matrix(4, 3, rng);
  const Tensor r33 = random_matrix(3, 3, rng), r24 = random_matrix(2, 4, rng);
  const Tensor r37 = random_matrix(3, 7, rng);

  auto two = [&](std::size_t ar, std::size_t ac, std::size_t br, std::size_t bc) {
    ParameterSet p;
    p.add("a", random_matrix(ar, ac, rng));
    p.add("b", random_matrix(br, bc, rng));
    return p;
  };
  auto one = [&](std::size_t r, std::size_t c, double scale = 1.0) {
    ParameterSet p;
    p.add("a", random_matrix(r, c, rng, scale));
    return p;
  };

  run("matmul", two(3, 5, 5, 3), [&](Graph&, const BoundParameters& b) {
    return project(ad::matmul(b["a"], b["b"]), r33);
  });
  run("add", two(3, 4, 3, 4), [&](Graph&, const BoundParameters& b) {
    return project(ad::add(b["a"], b["b"]), r34);
  });
  run("add_row_broadcast", two(3, 4, 1, 4), [&](Graph&, const BoundParameters& b) {
    return project(ad::add(b["a"], b["b"]), r34);
  });
  run("mul", two(3, 4, 3, 4), [&](Graph&, const BoundParameters& b) {
    return project(ad::mul(b["a"], b["b"]), r34);
  });
  run("scale", one(3, 4), [&](Graph&, const BoundParameters& b) {
    return project(ad::scale(b["a"], -1.7), r34);
  });
  run("transpose", one(3, 4), [&](Graph&, const BoundParameters& b) {
    return project(ad::transpose(b["a"]), r43);
  });
  run("concat_rows", two(1, 4, 2, 4), [&](Graph&, const BoundParameters& b) {
    return project(ad::concat(std::array<Var, 2>{b["a"], b["b"]}, 0), r34);
  });
  run("concat_cols", two(3, 1, 3, 3), [&](Graph&, const BoundParameters& b) {
    return project(ad::concat(std::array<Var, 2>{b["a"], b["b"]}, 1), r34);
  });
  run("slice_rows", one(5, 4), [&](Graph&, const BoundParameters& b) {
    return project(ad::slice(b["a"], 0, 1, 3), r24);
  });
  run("slice_cols", one(3, 9), [&](Graph&, const BoundParameters& b) {
    return project(ad::slice(b["a"], 1, 2, 9), r37);
  });
  run("gelu", one(3, 4, 2.0), [&](Graph&, const BoundParameters& b) {
    return project(ad::gelu(b["a"]), r34);
  });
  run("sigmoid", one(3, 4, 2.0), [&](Graph&, const BoundParameters& b) {
    return project(ad::sigmoid(b["a"]), r34);
  });
  run("softmax_rows_masked", one(3, 4, 2.0), [&](Graph&, const BoundParameters& b) {
    static constexpr std::array<std::uint8_t, 4> mask{1, 1, 0, 1};
    return project(ad::softmax(b["a"], 1, mask), r34);
  });
  run("softmax_cols", one(3, 4, 2.0), [&](Graph&, const BoundParameters& b) {
    return project(ad::softmax(b["a"], 0), r34);
  });
  {
    ParameterSet p;
    p.add("x", random_matrix(3, 4, rng, 2.0));
    p.add("gamma", random_matrix(1, 4, rng));
    p.add("beta", random_matrix(1, 4, rng));
    run("layer_norm", p, [&](Graph&, const BoundParameters& b) {
      return project(ad::layer_norm(b["x"], b["gamma"], b["beta"]), r34);
    });
  }
  {
    Rng mask_rng(derive_seed(seed, "gradcheck.dropout"));
    const Tensor mask = ad::make_dropout_mask(3, 4, 0.3, mask_rng);
    run("dropout_fixed_mask", one(3, 4), [&, mask](Graph&, const BoundParameters& b) {
      return project(ad::dropout(b["a"], mask), r34);
    });
  }
  run("sum", one(3, 4), [&](Graph&, const BoundParameters& b) {
    return ad::sum(ad::mul(b["a"], b["a"]));
  });
  run("mean", one(3, 4), [&](Graph&, const BoundParameters& b) {
    return ad::mean(ad::mul(b["a"], b["a"]));
  });
  {
    ParameterSet p;
    p.add("p", uniform01(3, 4, rng, 0.05, 0.95));
    const Tensor y = uniform01(3, 4, rng, 0.0, 1.0);
    run("binary_cross_entropy", p, [&, y](Graph&, const BoundParameters& b) {
      return ad::binary_cross_entropy(b["p"], y);
    });
  }
  {
    static constexpr std::array<int, 3> labels{1, 0, 1};
    run("cross_entropy_with_logits", one(3, 2, 2.0), [&](Graph&, const BoundParameters& b) {
      return ad::cross_entropy_with_logits(b["a"], labels);
    });
  }
  return out;
}

GradCheckReport stage1_gradcheck(const GradSuiteConfig& config) {
  Rng rng(derive_seed(config.seed, "gradcheck.stage1"));
  ParameterSet params = init_stage1(config.dim, Stage1Config{}.d_h, config.seed);
  jitter(params, rng, 0.3);
  for (double& w : params.at("pool.w").data()) w = rng.normal();

  const std::array<std::size_t, 3> lengths{config.length, (config.length + 1) / 2, 1};
  std::vector<Tensor> seqs;
  for (std::size_t len : lengths) seqs.push_back(random_matrix(len, config.dim, rng));
  std::vector<const Tensor*> tokens;
  for (const auto& s : seqs) tokens.push_back(&s);
  const Tensor targets = uniform01(lengths.size(), kTaxonomyDim, rng, 0.0, 1.0);

  return gradient_check(params,
                        [&](Graph& g, const BoundParameters& b) {
                          return stage1_loss(stage1_graph(g, b, tokens), targets);
                        },
                        {.seed = config.seed});
}

GradCheckReport stage2_gradcheck(const GradSuiteConfig& config) {
  Rng rng(derive_seed(config.seed, "gradcheck.stage2"));
  DetectorShape shape{.dim = config.dim, .d_ff = 64, .n_ppt = config.n_ppt, .n_att = 1};
  ParameterSet params = init_detector(shape, config.seed);
  jitter(params, rng, 0.3);

  const std::array<std::size_t, 3> lengths{config.length, (config.length + 1) / 2, 1};
  std::vector<Tensor> seqs;
  for (std::size_t len : lengths) seqs.push_back(random_matrix(len, config.dim, rng));
  std::vector<const Tensor*> tokens;
  for (const auto& s : seqs) tokens.push_back(&s);
  const Tensor tax = uniform01(lengths.size(), kTaxonomyDim, rng, 0.0, 1.0);
  static constexpr std::array<int, 3> labels{1, 0, 1};

  return gradient_check(params,
                        [&](Graph& g, const BoundParameters& b) {
                          return ad::cross_entropy_with_logits(detector_graph(g, b, tokens, tax),
                                                               labels);
                        },
                        {.seed = config.seed});
}

}  // namespace extax
