#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "extax/detector.hpp"
#include "extax/embeddings.hpp"
#include "extax/metrics.hpp"
#include "extax/pipeline/config.hpp"
#include "extax/pipeline/dataset.hpp"
#include "extax/smoothing.hpp"
#include "extax/taxrep.hpp"

namespace extax {

// Samples of one split joined across the embedding, target, and dataset files.
// Token pointers refer into the EmbeddingFile the split was built from.
struct PipelineSplit {
  std::vector<std::string> ids;
  std::vector<const Tensor*> tokens;
  std::vector<TaxVector> targets;  // empty unless requested
  std::vector<int> labels;         // empty unless requested
  std::vector<std::optional<Genre>> genres;

  std::size_t size() const { return ids.size(); }
  std::vector<Stage1Example> stage1_examples() const;
  std::vector<Stage2Example> stage2_examples() const;
};

// Throws ValidationError naming the first sample that lacks targets or a label.
PipelineSplit join_split(const EmbeddingFile& embeddings,
                         const std::vector<SmoothedTargets>* targets,
                         const std::vector<DatasetRecord>* dataset);

// Whole split plus per-genre slices that have at least one sample.
SplitReports evaluate_by_genre(std::span<const int> preds, std::span<const int> golds,
                               std::span<const std::optional<Genre>> genres);

struct SeedRun {
  std::uint64_t seed = 0;
  Stage1Result stage1;
  Stage2Result stage2;
  Tensor test_tax;  // frozen Stage-1 outputs on the test split
  std::vector<Prediction> test_predictions;
  SplitReports test;
  std::array<double, 3> test_facet_f1{};  // only when the test split has targets
};

struct PipelineHooks {
  std::function<void(const Stage1EpochLog&)> stage1_epoch;
  std::function<void(const Stage2EpochLog&)> stage2_epoch;
};

// Stage 1 -> Stage 2 -> test evaluation with every seed-dependent choice
// drawn from `seed`.
SeedRun run_pipeline(const PipelineSplit& train, const PipelineSplit& val,
                     const PipelineSplit& test, const RunConfig& config, std::uint64_t seed,
                     const PipelineHooks& hooks = {});

}  // namespace extax
