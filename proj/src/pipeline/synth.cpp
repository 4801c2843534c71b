#include "extax/pipeline/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "extax/errors.hpp"
#include "extax/numerics/rng.hpp"

namespace extax {

Tensor planted_directions(std::uint64_t seed, std::size_t dim) {
  if (dim < kTaxonomyDim) {
    throw ValidationError("synthetic embeddings need D >= 17, got " + std::to_string(dim));
  }
  Rng rng(derive_seed(seed, "synth.directions"));
  Tensor u = Tensor::matrix(kTaxonomyDim, dim);
  for (std::size_t c = 0; c < kTaxonomyDim; ++c) {
    auto row = u.row_span(c);
    // Gram-Schmidt; redraw on the (practically impossible) degenerate case.
    for (;;) {
      for (double& x : row) x = rng.normal();
      for (std::size_t prev = 0; prev < c; ++prev) {
        auto p = u.row_span(prev);
        double dot = 0.0;
        for (std::size_t k = 0; k < dim; ++k) dot += row[k] * p[k];
        for (std::size_t k = 0; k < dim; ++k) row[k] -= dot * p[k];
      }
      double norm = 0.0;
      for (double x : row) norm += x * x;
      norm = std::sqrt(norm);
      if (norm > 1e-6) {
        for (double& x : row) x /= norm;
        break;
      }
    }
  }
  return u;
}

int manipulative_label(std::span<const std::size_t> plant) {
  for (std::size_t c : plant) {
    if (std::find(kManipulativeCategories.begin(), kManipulativeCategories.end(), c) !=
        kManipulativeCategories.end()) {
      return 1;
    }
  }
  return 0;
}

SynthSample synth_embed(const DatasetRecord& record, std::span<const std::size_t> plant,
                        const Tensor& directions, std::uint64_t seed) {
  const std::size_t dim = directions.cols();
  Rng rng(derive_seed(seed, "synth.tokens:" + record.sample_id));
  const std::size_t len =
      kSynthMinTokens + rng.below(kSynthMaxTokens - kSynthMinTokens + 1);

  SynthSample s;
  s.embedding.sample_id = record.sample_id;
  s.embedding.tokens = Tensor::matrix(len, dim);
  for (std::size_t i = 0; i < s.embedding.tokens.size(); ++i) s.embedding.tokens[i] = kTokenNoiseStd * rng.normal();

  s.targets.sample_id = record.sample_id;
  for (std::size_t c : plant) {
    if (c >= kTaxonomyDim) throw ValidationError("planted category index out of range");
    s.targets.values[c] = 1.0;
    auto u = directions.row_span(c);
    for (std::size_t r = 0; r < len; ++r) {
      auto row = s.embedding.tokens.row_span(r);
      for (std::size_t k = 0; k < dim; ++k) row[k] += kPlantStrength * u[k];
    }
  }
  // Stored as f32 on disk; keep memory identical to what a reader would see.
  for (double& x : s.embedding.tokens.data()) x = static_cast<double>(static_cast<float>(x));
  s.targets.proportions = s.targets.values;
  s.targets.vote_counts.fill(1);
  s.label = manipulative_label(plant);
  return s;
}

SynthSample synth_embed(const DatasetRecord& record, std::span<const std::size_t> plant,
                        std::uint64_t seed, std::size_t dim) {
  return synth_embed(record, plant, planted_directions(seed, dim), seed);
}

SynthCorpus make_synth_corpus(const SynthConfig& config) {
  if (!(config.plant_probability >= 0.0 && config.plant_probability <= 1.0)) {
    throw ValidationError("plant probability must lie in [0, 1]");
  }
  const Tensor directions = planted_directions(config.seed, config.dim);
  auto build = [&](const char* split, std::size_t n) {
    SynthSplit out;
    out.embeddings.dim = config.dim;
    for (std::size_t i = 0; i < n; ++i) {
      char id[64];
      std::snprintf(id, sizeof id, "synth-%s-%05zu", split, i);
      Rng rng(derive_seed(config.seed, std::string("synth.plant:") + id));
      std::vector<std::size_t> plant;
      for (std::size_t c = 0; c < kTaxonomyDim; ++c) {
        if (rng.uniform() < config.plant_probability) plant.push_back(c);
      }
      DatasetRecord rec;
      rec.sample_id = id;
      rec.text = std::string("synthetic sample ") + id;
      rec.genre = rng.below(2) == 0 ? Genre::Post : Genre::Article;
      rec.source = "synth";
      SynthSample s = synth_embed(rec, plant, directions, config.seed);
      rec.label = s.label;
      out.records.push_back(std::move(rec));
      out.embeddings.records.push_back(std::move(s.embedding));
      out.targets.push_back(std::move(s.targets));
      out.plants.push_back(std::move(plant));
    }
    return out;
  };
  return {build("train", config.n_train), build("val", config.n_val), build("test", config.n_test)};
}

}  // namespace extax
