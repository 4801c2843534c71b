#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "extax/embeddings.hpp"
#include "extax/pipeline/dataset.hpp"
#include "extax/smoothing.hpp"

namespace extax {

// Desk-scale stand-in for a frozen backbone. Tokens are seeded Gaussian noise;
// every planted category adds a fixed orthonormal direction to all rows.
inline constexpr double kPlantStrength = 2.0;
inline constexpr double kTokenNoiseStd = 0.5;
inline constexpr std::size_t kSynthMinTokens = 8;
inline constexpr std::size_t kSynthMaxTokens = 16;

// Attack on Reputation, Fear, Anger, Deceptive Subversives, Institutional Toxins.
inline constexpr std::array<std::size_t, 5> kManipulativeCategories{0, 6, 7, 14, 15};

struct SynthSample {
  EmbeddingSequence embedding;
  SmoothedTargets targets;
  int label = 0;
};

// 17 x D, orthonormal rows, fixed by `seed`. Throws ValidationError for D < 17.
Tensor planted_directions(std::uint64_t seed, std::size_t dim);

// Deterministic in (record.sample_id, seed, dim).
SynthSample synth_embed(const DatasetRecord& record, std::span<const std::size_t> plant,
                        std::uint64_t seed, std::size_t dim);
SynthSample synth_embed(const DatasetRecord& record, std::span<const std::size_t> plant,
                        const Tensor& directions, std::uint64_t seed);

int manipulative_label(std::span<const std::size_t> plant);

struct SynthConfig {
  std::size_t n_train = 2000;
  std::size_t n_val = 500;
  std::size_t n_test = 500;
  std::size_t dim = 64;
  std::uint64_t seed = 43;
  double plant_probability = 0.15;
};

struct SynthSplit {
  std::vector<DatasetRecord> records;
  EmbeddingFile embeddings;
  std::vector<SmoothedTargets> targets;
  std::vector<std::vector<std::size_t>> plants;
};

struct SynthCorpus {
  SynthSplit train, val, test;
};

// Each category is planted independently with `plant_probability`; genre
// alternates at random between post and article.
SynthCorpus make_synth_corpus(const SynthConfig& config);

}  // namespace extax
