#include "extax/pipeline/workflow.hpp"

#include <algorithm>
#include <unordered_map>

#include "extax/errors.hpp"

namespace extax {

std::vector<Stage1Example> PipelineSplit::stage1_examples() const {
  if (targets.size() != ids.size()) throw ValidationError("split has no Stage-1 targets");
  std::vector<Stage1Example> out;
  for (std::size_t i = 0; i < ids.size(); ++i) out.push_back({tokens[i], targets[i]});
  return out;
}

std::vector<Stage2Example> PipelineSplit::stage2_examples() const {
  if (labels.size() != ids.size()) throw ValidationError("split has no labels");
  std::vector<Stage2Example> out;
  for (std::size_t i = 0; i < ids.size(); ++i) out.push_back({tokens[i], labels[i]});
  return out;
}

PipelineSplit join_split(const EmbeddingFile& embeddings,
                         const std::vector<SmoothedTargets>* targets,
                         const std::vector<DatasetRecord>* dataset) {
  std::unordered_map<std::string_view, const SmoothedTargets*> by_target;
  std::unordered_map<std::string_view, const DatasetRecord*> by_record;
  if (targets != nullptr) {
    for (const auto& t : *targets) by_target.emplace(t.sample_id, &t);
  }
  if (dataset != nullptr) {
    for (const auto& r : *dataset) by_record.emplace(r.sample_id, &r);
  }
  PipelineSplit s;
  for (const auto& e : embeddings.records) {
    s.ids.push_back(e.sample_id);
    s.tokens.push_back(&e.tokens);
    if (targets != nullptr) {
      auto it = by_target.find(e.sample_id);
      if (it == by_target.end()) {
        throw ValidationError("no targets for sample '" + e.sample_id + "'");
      }
      s.targets.push_back(it->second->values);
    }
    std::optional<Genre> genre;
    if (dataset != nullptr) {
      auto it = by_record.find(e.sample_id);
      if (it == by_record.end() || !it->second->label) {
        throw ValidationError("no labeled dataset record for sample '" + e.sample_id + "'");
      }
      s.labels.push_back(*it->second->label);
      genre = it->second->genre;
    }
    s.genres.push_back(genre);
  }
  return s;
}

SplitReports evaluate_by_genre(std::span<const int> preds, std::span<const int> golds,
                               std::span<const std::optional<Genre>> genres) {
  SplitReports out;
  out.overall = compute_metrics(preds, golds);
  for (Genre g : {Genre::Post, Genre::Article}) {
    std::vector<int> p, y;
    for (std::size_t i = 0; i < preds.size() && i < genres.size(); ++i) {
      if (genres[i] == g) {
        p.push_back(preds[i]);
        y.push_back(golds[i]);
      }
    }
    if (p.empty()) continue;
    (g == Genre::Post ? out.post : out.article) = compute_metrics(p, y);
  }
  return out;
}

SeedRun run_pipeline(const PipelineSplit& train, const PipelineSplit& val,
                     const PipelineSplit& test, const RunConfig& config, std::uint64_t seed,
                     const PipelineHooks& hooks) {
  if (train.size() == 0) throw EmptyInput("empty training split");
  const std::size_t dim = train.tokens.front()->cols();

  SeedRun run;
  run.seed = seed;
  Stage1Config s1 = config.stage1;
  s1.seed = seed;
  const auto tr1 = train.stage1_examples();
  const auto va1 = val.stage1_examples();
  run.stage1 = train_stage1(tr1, va1, dim, s1, hooks.stage1_epoch);

  Stage2Config s2 = config.stage2;
  s2.seed = seed;
  const auto tr2 = train.stage2_examples();
  const auto va2 = val.stage2_examples();
  run.stage2 = train_stage2(tr2, va2, run.stage1.params, config.detector_shape(dim), s2,
                            hooks.stage2_epoch);

  run.test_tax = stage1_predict(run.stage1.params, test.tokens);
  run.test_predictions = detect(run.stage2.params, test.tokens, run.test_tax);
  std::vector<int> verdicts;
  for (const auto& p : run.test_predictions) verdicts.push_back(p.verdict);
  if (test.labels.size() == test.size()) {
    run.test = evaluate_by_genre(verdicts, test.labels, test.genres);
  }
  if (test.targets.size() == test.size()) {
    Tensor targets = Tensor::matrix(test.size(), kTaxonomyDim);
    for (std::size_t i = 0; i < test.size(); ++i) {
      std::copy(test.targets[i].begin(), test.targets[i].end(), targets.row_span(i).begin());
    }
    run.test_facet_f1 = facet_macro_f1(run.test_tax, targets);
  }
  return run;
}

}  // namespace extax
