#include "extax/pipeline/commands.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "extax/detector.hpp"
#include "extax/elicitation.hpp"
#include "extax/embeddings.hpp"
#include "extax/errors.hpp"
#include "extax/io.hpp"
#include "extax/metrics.hpp"
#include "extax/numerics/checkpoint.hpp"
#include "extax/pipeline/config.hpp"
#include "extax/pipeline/dataset.hpp"
#include "extax/pipeline/gradcheck_suite.hpp"
#include "extax/pipeline/synth.hpp"
#include "extax/pipeline/workflow.hpp"
#include "extax/smoothing.hpp"
#include "extax/taxonomy.hpp"
#include "extax/taxrep.hpp"

namespace extax {

namespace fs = std::filesystem;

namespace {

constexpr double kGradTolerance = 1e-4;
constexpr std::array<const char*, 3> kSplits{"train", "val", "test"};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) s += l + "\n";
  return s;
}

// Every *.exeb under a directory (sorted by name), or a single file.
struct EmbeddingSource {
  std::vector<EmbeddingFile> files;
  std::unordered_map<std::string, const Tensor*> by_id;

  static EmbeddingSource load(const fs::path& path) {
    EmbeddingSource s;
    std::vector<fs::path> paths;
    if (fs::is_directory(path)) {
      for (const auto& e : fs::directory_iterator(path)) {
        if (e.path().extension() == ".exeb") paths.push_back(e.path());
      }
      std::sort(paths.begin(), paths.end());
      if (paths.empty()) throw ValidationError("no .exeb files under " + path.string());
    } else {
      paths.push_back(path);
    }
    for (const auto& p : paths) s.files.push_back(read_embeddings(p));
    for (const auto& f : s.files) {
      for (const auto& r : f.records) {
        if (!s.by_id.emplace(r.sample_id, &r.tokens).second) {
          throw DuplicateId("sample '" + r.sample_id + "' appears in more than one record");
        }
      }
    }
    return s;
  }

  const Tensor& at(const std::string& id) const {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError("no embedding for sample '" + id + "'");
    return *it->second;
  }
};

EmbeddingFile read_split(const fs::path& dir, const char* split) {
  const fs::path p = dir / (std::string(split) + ".exeb");
  if (!fs::exists(p)) throw ValidationError("missing " + p.string());
  return read_embeddings(p);
}

ParameterSet load_stage1(const fs::path& p) {
  ParameterSet s = load_parameters(p);
  stage1_shape(s);
  return s;
}

ParameterSet load_detector(const fs::path& p) {
  ParameterSet s = load_parameters(p);
  detector_shape(s);
  return s;
}

std::vector<ManipulationProfile> read_profiles(const fs::path& path,
                                               const TaxonomySchema& schema) {
  std::vector<ManipulationProfile> out;
  for_each_line(path, [&](std::size_t n, std::string_view line) {
    try {
      out.push_back(ManipulationProfile::from_json(line, schema));
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  });
  return out;
}

// Aligns profiles with labeled dataset records by sample_id.
struct AlignedProfiles {
  std::vector<TaxVector> tax;
  std::vector<int> preds;
  std::vector<int> golds;
  std::vector<std::optional<Genre>> genres;
};

AlignedProfiles align(const std::vector<ManipulationProfile>& profiles,
                      const std::vector<DatasetRecord>* dataset) {
  std::unordered_map<std::string, const DatasetRecord*> by_id;
  if (dataset != nullptr) {
    for (const auto& r : *dataset) by_id.emplace(r.sample_id, &r);
  }
  AlignedProfiles a;
  for (const auto& p : profiles) {
    a.tax.push_back(p.tax_vector);
    a.preds.push_back(p.verdict);
    if (dataset == nullptr) {
      a.golds.push_back(p.verdict);
      a.genres.push_back(std::nullopt);
      continue;
    }
    auto it = by_id.find(p.sample_id);
    if (it == by_id.end() || !it->second->label) {
      throw ValidationError("no labeled dataset record for profile '" + p.sample_id + "'");
    }
    a.golds.push_back(*it->second->label);
    a.genres.push_back(it->second->genre);
  }
  return a;
}

std::string split_reports_json(const SplitReports& r) {
  std::string s = "{\n\"overall\": " + r.overall.to_json();
  if (r.post) s += ",\n\"post\": " + r.post->to_json();
  if (r.article) s += ",\n\"article\": " + r.article->to_json();
  return s + "\n}\n";
}

std::string split_reports_text(const SplitReports& r) {
  std::string s = "[overall]\n" + r.overall.to_text();
  if (r.post) s += "[post]\n" + r.post->to_text();
  if (r.article) s += "[article]\n" + r.article->to_text();
  return s;
}

// ---- subcommand option holders -------------------------------------------

struct ElicitArgs {
  std::string dataset, out, manifest, cache_dir, taxonomy;
  std::size_t budget = 0;
};
struct SmoothArgs {
  std::string votes, out;
  double alpha = kDefaultAlpha;
  bool strict = false;
};
struct SynthArgs {
  std::string out;
  SynthConfig cfg;
};
struct TrainTaxArgs {
  std::string embeddings, targets, out, log;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
};
struct TrainDetArgs {
  std::string embeddings, dataset, stage1, out, log;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
};
struct PredictArgs {
  std::string in, embeddings, stage1, detector, out;
  double threshold = 0.5;
};
struct ExplainArgs {
  std::string id, embeddings, stage1, detector, out;
  double threshold = 0.5;
};
struct EvalArgs {
  std::string profiles, dataset, embeddings, targets, out, distribution;
  std::vector<std::uint64_t> seeds;
  double threshold = 0.5;
};
struct GradArgs {
  GradSuiteConfig cfg;
};
struct CooccurArgs {
  std::string profiles, dataset, out;
  double threshold = 0.5;
};

// ---- subcommands -----------------------------------------------------------

int cmd_elicit(const ElicitArgs& a, RunConfig cfg, std::ostream& out) {
  if (cfg.endpoints.empty()) throw ValidationError("config lists no annotator endpoints");
  if (a.budget) cfg.budget = a.budget;
  if (!a.cache_dir.empty()) cfg.cache_dir = a.cache_dir;
  const TaxonomySchema schema =
      a.taxonomy.empty() ? TaxonomySchema::builtin() : TaxonomySchema::load(a.taxonomy);
  std::vector<LabeledText> texts;
  for (const auto& r : load_dataset(a.dataset)) texts.push_back({r.sample_id, r.text});

  HttpChatTransport http;
  std::optional<CachingTransport> cache;
  ChatTransport* transport = &http;
  if (!cfg.cache_dir.empty()) transport = &cache.emplace(http, cfg.cache_dir);

  ElicitationResult res = elicit_dataset(texts, cfg.endpoints, schema, *transport, cfg.budget);
  ensure_parent(a.out);
  write_votes_jsonl(a.out, res.votes);
  const fs::path manifest = a.manifest.empty() ? fs::path(a.out + ".manifest.json") : fs::path(a.manifest);
  write_file_atomic(manifest, res.manifest.to_json());
  out << "elicited " << res.manifest.samples << " samples (" << res.manifest.complete_samples
      << " complete), " << res.manifest.total_requests() << " requests, manifest "
      << manifest.string() << "\n";
  return kExitOk;
}

int cmd_smooth(const SmoothArgs& a, std::ostream& out, std::ostream& err) {
  const SmoothingConfig sc{a.alpha};
  sc.validate();
  std::vector<SmoothedTargets> targets;
  std::size_t skipped = 0;
  for (const auto& v : read_votes_jsonl(a.votes)) {
    try {
      targets.push_back(smooth_sample(v, sc));
    } catch (const NoValidVotes& e) {
      if (a.strict) throw;
      err << "skipping: " << e.what() << "\n";
      ++skipped;
    }
  }
  ensure_parent(a.out);
  write_targets_jsonl(a.out, targets);
  out << "smoothed " << targets.size() << " samples (alpha " << a.alpha << ")";
  if (skipped) out << ", skipped " << skipped << " without valid votes";
  out << "\n";
  return kExitOk;
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const SynthCorpus c = make_synth_corpus(a.cfg);
  const fs::path dir = a.out;
  fs::create_directories(dir);
  std::vector<DatasetRecord> all_records;
  std::vector<SmoothedTargets> all_targets;
  for (const SynthSplit* s : {&c.train, &c.val, &c.test}) {
    const char* name = kSplits[s == &c.train ? 0 : s == &c.val ? 1 : 2];
    write_dataset(dir / (std::string(name) + ".jsonl"), s->records);
    write_embeddings(dir / (std::string(name) + ".exeb"), s->embeddings);
    all_records.insert(all_records.end(), s->records.begin(), s->records.end());
    all_targets.insert(all_targets.end(), s->targets.begin(), s->targets.end());
  }
  write_dataset(dir / "dataset.jsonl", all_records);
  write_targets_jsonl(dir / "targets.jsonl", all_targets);
  out << "wrote " << all_records.size() << " synthetic samples (D=" << a.cfg.dim << ", seed "
      << a.cfg.seed << ") to " << dir.string() << "\n";
  return kExitOk;
}

void apply_stage_overrides(RunConfig& cfg, std::uint64_t seed, bool has_seed, std::size_t epochs,
                           bool has_epochs, bool stage1) {
  if (stage1) {
    if (has_seed) cfg.stage1.seed = seed;
    if (has_epochs) cfg.stage1.epochs = epochs;
  } else {
    if (has_seed) cfg.stage2.seed = seed;
    if (has_epochs) cfg.stage2.epochs = epochs;
  }
}

int cmd_train_tax(const TrainTaxArgs& a, const RunConfig& cfg, std::ostream& out,
                  std::ostream& err) {
  const auto targets = read_targets_jsonl(a.targets);
  const EmbeddingFile train_file = read_split(a.embeddings, "train");
  const EmbeddingFile val_file = read_split(a.embeddings, "val");
  if (train_file.dim != val_file.dim) throw DimMismatch("train and val embedding widths differ");
  const PipelineSplit train = join_split(train_file, &targets, nullptr);
  const PipelineSplit val = join_split(val_file, &targets, nullptr);
  std::vector<std::string> log;
  const Stage1Result r = train_stage1(train.stage1_examples(), val.stage1_examples(),
                                      train_file.dim, cfg.stage1, [&](const Stage1EpochLog& e) {
                                        log.push_back(e.to_json());
                                        err << log.back() << "\n";
                                      });
  ensure_parent(a.out);
  save_parameters(a.out, r.params);
  if (!a.log.empty()) write_file_atomic(a.log, join_lines(log));
  const auto& best = r.log[r.best_epoch];
  out << "stage 1: best epoch " << r.best_epoch << ", val loss " << fmt("%.6f", best.val_loss)
      << ", val macro-F1 P/E/N " << fmt("%.4f", best.val_macro_f1[0]) << "/"
      << fmt("%.4f", best.val_macro_f1[1]) << "/" << fmt("%.4f", best.val_macro_f1[2]) << "\n";
  return kExitOk;
}

int cmd_train_det(const TrainDetArgs& a, const RunConfig& cfg, std::ostream& out,
                  std::ostream& err) {
  const auto dataset = load_dataset(a.dataset);
  const ParameterSet stage1 = load_stage1(a.stage1);
  const EmbeddingFile train_file = read_split(a.embeddings, "train");
  const EmbeddingFile val_file = read_split(a.embeddings, "val");
  const PipelineSplit train = join_split(train_file, nullptr, &dataset);
  const PipelineSplit val = join_split(val_file, nullptr, &dataset);
  std::vector<std::string> log;
  const Stage2Result r =
      train_stage2(train.stage2_examples(), val.stage2_examples(), stage1,
                   cfg.detector_shape(train_file.dim), cfg.stage2, [&](const Stage2EpochLog& e) {
                     log.push_back(e.to_json());
                     err << log.back() << "\n";
                   });
  ensure_parent(a.out);
  save_parameters(a.out, r.params);
  if (!a.log.empty()) write_file_atomic(a.log, join_lines(log));
  const auto& best = r.log[r.best_epoch];
  out << "stage 2: best epoch " << r.best_epoch << ", val macro-F1 "
      << fmt("%.4f", best.val.macro_f1) << ", val macro-recall "
      << fmt("%.4f", best.val.macro_recall) << "\n";
  return kExitOk;
}

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  if (!(a.threshold > 0.0)) throw ValidationError("--threshold must be positive");
  const auto dataset = load_dataset(a.in);
  const EmbeddingSource src = EmbeddingSource::load(a.embeddings);
  const ParameterSet stage1 = load_stage1(a.stage1);
  const ParameterSet det = load_detector(a.detector);
  const TaxonomySchema& schema = TaxonomySchema::builtin();

  std::vector<const Tensor*> tokens;
  for (const auto& r : dataset) tokens.push_back(&src.at(r.sample_id));
  const Tensor tax = stage1_predict(stage1, tokens);
  const auto preds = detect(det, tokens, tax);
  std::string lines;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    TaxVector v{};
    std::copy(tax.row_span(i).begin(), tax.row_span(i).end(), v.begin());
    lines += make_profile(dataset[i].sample_id, v, preds[i], schema, a.threshold).to_json(schema);
    lines += "\n";
  }
  ensure_parent(a.out);
  write_file_atomic(a.out, lines);
  out << "wrote " << dataset.size() << " profiles to " << a.out << "\n";
  return kExitOk;
}

int cmd_explain(const ExplainArgs& a, std::ostream& out) {
  const EmbeddingSource src = EmbeddingSource::load(a.embeddings);
  const TaxonomySchema& schema = TaxonomySchema::builtin();
  const ManipulationProfile m = explain(a.id, src.at(a.id), load_stage1(a.stage1),
                                        load_detector(a.detector), schema, a.threshold);
  out << "sample   " << m.sample_id << "\n";
  out << "verdict  " << label_name(m.verdict) << " (p_fake " << fmt("%.4f", m.fake_probability)
      << ")\n";
  for (std::size_t i = 0; i < kFacets.size(); ++i) {
    out << facet_label(kFacets[i]) << ": ";
    for (std::size_t k = 0; k < m.top_attributes[i].size(); ++k) {
      out << (k ? ", " : "") << m.top_attributes[i][k];
    }
    out << "\n";
  }
  out << "taxonomy vector:\n";
  for (const auto& cat : schema.categories()) {
    out << "  " << cat.name << std::string(24 - std::min<std::size_t>(23, cat.name.size()), ' ')
        << fmt("%.4f", m.tax_vector[cat.global_index]) << "\n";
  }
  if (!a.out.empty()) {
    ensure_parent(a.out);
    write_file_atomic(a.out, m.to_json(schema) + "\n");
  }
  return kExitOk;
}

int cmd_eval_profiles(const EvalArgs& a, std::ostream& out) {
  const TaxonomySchema& schema = TaxonomySchema::builtin();
  const auto dataset = load_dataset(a.dataset);
  const auto profiles = read_profiles(a.profiles, schema);
  const AlignedProfiles al = align(profiles, &dataset);
  const SplitReports r = evaluate_by_genre(al.preds, al.golds, al.genres);
  out << split_reports_text(r);
  if (!a.out.empty()) {
    ensure_parent(a.out);
    write_file_atomic(a.out, split_reports_json(r));
  }
  if (!a.distribution.empty()) {
    ensure_parent(a.distribution);
    write_file_atomic(a.distribution,
                      attribute_distribution(al.tax, al.golds, a.threshold).to_json(schema) + "\n");
  }
  return kExitOk;
}

int cmd_eval_seeds(const EvalArgs& a, const RunConfig& cfg, std::ostream& out,
                   std::ostream& err) {
  if (a.embeddings.empty() || a.targets.empty()) {
    throw ValidationError("multi-seed eval needs --embeddings <dir> and --targets <file>");
  }
  const auto dataset = load_dataset(a.dataset);
  const auto targets = read_targets_jsonl(a.targets);
  const EmbeddingFile train_file = read_split(a.embeddings, "train");
  const EmbeddingFile val_file = read_split(a.embeddings, "val");
  const EmbeddingFile test_file = read_split(a.embeddings, "test");
  const PipelineSplit train = join_split(train_file, &targets, &dataset);
  const PipelineSplit val = join_split(val_file, &targets, &dataset);
  const PipelineSplit test = join_split(test_file, nullptr, &dataset);

  const std::vector<std::uint64_t> seeds = a.seeds.empty() ? cfg.seeds : a.seeds;
  const fs::path dir = a.out;
  if (!a.out.empty()) fs::create_directories(dir);
  std::vector<SplitReports> reports;
  for (std::uint64_t seed : seeds) {
    err << "seed " << seed << "\n";
    PipelineHooks hooks{[&](const Stage1EpochLog& e) { err << e.to_json() << "\n"; },
                        [&](const Stage2EpochLog& e) { err << e.to_json() << "\n"; }};
    const SeedRun run = run_pipeline(train, val, test, cfg, seed, hooks);
    reports.push_back(run.test);
    out << "seed " << seed << ": test macro-F1 " << fmt("%.4f", run.test.overall.macro_f1)
        << ", macro-recall " << fmt("%.4f", run.test.overall.macro_recall) << "\n";
    if (!a.out.empty()) {
      const std::string tag = std::to_string(seed);
      save_parameters(dir / ("stage1-" + tag + ".extx"), run.stage1.params);
      save_parameters(dir / ("detector-" + tag + ".extx"), run.stage2.params);
      write_file_atomic(dir / ("report-" + tag + ".json"), split_reports_json(run.test));
    }
  }
  const std::string table = format_seed_table(reports);
  out << table;
  if (!a.out.empty()) {
    write_file_atomic(dir / "table.txt", table);
    write_file_atomic(dir / "table.json", seed_table_json(reports, seeds) + "\n");
  }
  return kExitOk;
}

int cmd_gradcheck(const GradArgs& a, std::ostream& out) {
  bool ok = true;
  auto report = [&](const std::string& group, const std::string& name, double err) {
    const bool pass = err < kGradTolerance;
    ok = ok && pass;
    out << (pass ? "ok   " : "FAIL ") << group << " " << name << " " << fmt("%.3e", err) << "\n";
  };
  for (const auto& c : primitive_gradchecks(a.cfg.seed)) {
    report("primitive", c.name, c.report.max_rel_error);
  }
  for (const auto& b : stage1_gradcheck(a.cfg).blocks) report("stage1", b.name, b.max_rel_error);
  for (const auto& b : stage2_gradcheck(a.cfg).blocks) report("stage2", b.name, b.max_rel_error);
  out << (ok ? "all blocks below " : "some blocks at or above ") << fmt("%.0e", kGradTolerance)
      << "\n";
  return ok ? kExitOk : kExitRuntime;
}

int cmd_cooccur(const CooccurArgs& a, std::ostream& out) {
  const TaxonomySchema& schema = TaxonomySchema::builtin();
  const auto profiles = read_profiles(a.profiles, schema);
  std::optional<std::vector<DatasetRecord>> dataset;
  if (!a.dataset.empty()) dataset = load_dataset(a.dataset);
  const AlignedProfiles al = align(profiles, dataset ? &*dataset : nullptr);
  const auto flows = cooccurrence_flows(al.tax, al.golds, schema, a.threshold);
  ensure_parent(a.out);
  write_file_atomic(a.out, flows_to_csv(flows));
  out << "wrote " << flows.size() << " flows from " << profiles.size() << " profiles to " << a.out
      << "\n";
  return kExitOk;
}

}  // namespace

int run_command(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Taxonomy-grounded disinformation detection pipeline", "extax"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "JSON run configuration");

  ElicitArgs elicit;
  auto* s_elicit = app.add_subcommand("elicit", "Query annotator endpoints for facet votes");
  s_elicit->add_option("--dataset", elicit.dataset, "Dataset JSON-lines")->required();
  s_elicit->add_option("--out", elicit.out, "Votes JSON-lines")->required();
  s_elicit->add_option("--manifest", elicit.manifest, "Run manifest (default <out>.manifest.json)");
  s_elicit->add_option("--budget", elicit.budget, "Concurrent requests");
  s_elicit->add_option("--cache-dir", elicit.cache_dir, "Response cache directory");
  s_elicit->add_option("--taxonomy", elicit.taxonomy, "Taxonomy JSON (default: built in)");

  SmoothArgs smooth;
  auto* s_smooth = app.add_subcommand("smooth", "Turn votes into entropy-smoothed targets");
  s_smooth->add_option("--votes", smooth.votes, "Votes JSON-lines")->required();
  s_smooth->add_option("--out", smooth.out, "Targets JSON-lines")->required();
  auto* o_alpha = s_smooth->add_option("--alpha", smooth.alpha, "Smoothing strength");
  s_smooth->add_flag("--strict", smooth.strict, "Fail on samples without valid votes");

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "Write a planted synthetic corpus");
  s_synth->add_option("--out", synth.out, "Output directory")->required();
  s_synth->add_option("--n-train", synth.cfg.n_train);
  s_synth->add_option("--n-val", synth.cfg.n_val);
  s_synth->add_option("--n-test", synth.cfg.n_test);
  s_synth->add_option("--dim", synth.cfg.dim, "Embedding width (>= 17)");
  s_synth->add_option("--seed", synth.cfg.seed);
  s_synth->add_option("--plant-prob", synth.cfg.plant_probability);

  TrainTaxArgs tax;
  auto* s_tax = app.add_subcommand("train-tax", "Train Stage 1");
  s_tax->add_option("--embeddings", tax.embeddings, "Directory with train.exeb and val.exeb")
      ->required();
  s_tax->add_option("--targets", tax.targets, "Targets JSON-lines")->required();
  s_tax->add_option("--out", tax.out, "Checkpoint path")->required();
  s_tax->add_option("--log", tax.log, "Per-epoch JSON-lines log");
  auto* o_tax_seed = s_tax->add_option("--seed", tax.seed);
  auto* o_tax_epochs = s_tax->add_option("--epochs", tax.epochs);

  TrainDetArgs det;
  auto* s_det = app.add_subcommand("train-det", "Train Stage 2 on a frozen Stage 1");
  s_det->add_option("--embeddings", det.embeddings, "Directory with train.exeb and val.exeb")
      ->required();
  s_det->add_option("--dataset", det.dataset, "Labeled dataset JSON-lines")->required();
  s_det->add_option("--stage1", det.stage1, "Stage-1 checkpoint")->required();
  s_det->add_option("--out", det.out, "Checkpoint path")->required();
  s_det->add_option("--log", det.log, "Per-epoch JSON-lines log");
  auto* o_det_seed = s_det->add_option("--seed", det.seed);
  auto* o_det_epochs = s_det->add_option("--epochs", det.epochs);

  PredictArgs pred;
  auto* s_pred = app.add_subcommand("predict", "Write manipulation profiles");
  s_pred->add_option("--in", pred.in, "Dataset JSON-lines")->required();
  s_pred->add_option("--embeddings", pred.embeddings, "EXEB file or directory")->required();
  s_pred->add_option("--stage1", pred.stage1)->required();
  s_pred->add_option("--detector", pred.detector)->required();
  s_pred->add_option("--out", pred.out, "Profiles JSON-lines")->required();
  auto* o_pred_thr = s_pred->add_option("--threshold", pred.threshold);

  ExplainArgs expl;
  auto* s_expl = app.add_subcommand("explain", "Show one sample's manipulation profile");
  s_expl->add_option("--id", expl.id, "sample_id")->required();
  s_expl->add_option("--embeddings", expl.embeddings, "EXEB file or directory")->required();
  s_expl->add_option("--stage1", expl.stage1)->required();
  s_expl->add_option("--detector", expl.detector)->required();
  s_expl->add_option("--out", expl.out, "Also write the profile as JSON");
  auto* o_expl_thr = s_expl->add_option("--threshold", expl.threshold);

  EvalArgs ev;
  auto* s_eval = app.add_subcommand(
      "eval", "Score profiles, or run the full pipeline once per --seed and tabulate");
  s_eval->add_option("--dataset", ev.dataset, "Labeled dataset JSON-lines")->required();
  s_eval->add_option("--profiles", ev.profiles, "Profiles JSON-lines to score");
  s_eval->add_option("--embeddings", ev.embeddings, "Directory with train/val/test.exeb");
  s_eval->add_option("--targets", ev.targets, "Targets JSON-lines");
  s_eval->add_option("--seed", ev.seeds, "Seed (repeatable)");
  s_eval->add_option("--out", ev.out, "Report JSON, or output directory for seed runs");
  s_eval->add_option("--distribution", ev.distribution, "Attribute distribution JSON");
  auto* o_eval_thr = s_eval->add_option("--threshold", ev.threshold);

  GradArgs grad;
  auto* s_grad = app.add_subcommand("gradcheck", "Compare analytic and numeric gradients");
  s_grad->add_option("--dim", grad.cfg.dim);
  s_grad->add_option("--len", grad.cfg.length);
  s_grad->add_option("--n-ppt", grad.cfg.n_ppt);
  s_grad->add_option("--seed", grad.cfg.seed);

  CooccurArgs co;
  auto* s_co = app.add_subcommand("cooccur", "Cross-facet co-occurrence flows as CSV");
  s_co->add_option("--profiles", co.profiles, "Profiles JSON-lines")->required();
  s_co->add_option("--dataset", co.dataset, "Labeled dataset (default: use verdicts)");
  s_co->add_option("--out", co.out, "CSV path")->required();
  auto* o_co_thr = s_co->add_option("--threshold", co.threshold);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitValidation;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    // A flag given on the command line wins over the config file.
    auto thr = [&](CLI::Option* o, double& v) {
      if (o->count() == 0) v = cfg.threshold;
    };
    thr(o_pred_thr, pred.threshold);
    thr(o_expl_thr, expl.threshold);
    thr(o_eval_thr, ev.threshold);
    thr(o_co_thr, co.threshold);

    if (s_elicit->parsed()) return cmd_elicit(elicit, cfg, out);
    if (s_smooth->parsed()) {
      if (o_alpha->count() == 0) smooth.alpha = cfg.alpha;
      return cmd_smooth(smooth, out, err);
    }
    if (s_synth->parsed()) return cmd_synth(synth, out);
    if (s_tax->parsed()) {
      apply_stage_overrides(cfg, tax.seed, o_tax_seed->count() > 0, tax.epochs,
                            o_tax_epochs->count() > 0, true);
      return cmd_train_tax(tax, cfg, out, err);
    }
    if (s_det->parsed()) {
      apply_stage_overrides(cfg, det.seed, o_det_seed->count() > 0, det.epochs,
                            o_det_epochs->count() > 0, false);
      return cmd_train_det(det, cfg, out, err);
    }
    if (s_pred->parsed()) return cmd_predict(pred, out);
    if (s_expl->parsed()) return cmd_explain(expl, out);
    if (s_eval->parsed()) {
      return ev.profiles.empty() ? cmd_eval_seeds(ev, cfg, out, err) : cmd_eval_profiles(ev, out);
    }
    if (s_grad->parsed()) return cmd_gradcheck(grad, out);
    if (s_co->parsed()) return cmd_cooccur(co, out);
    err << app.help();
    return kExitValidation;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const RuntimeFailure& e) {
    err << "failure: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "failure: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace extax
