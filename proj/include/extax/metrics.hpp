#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "extax/taxonomy.hpp"

namespace extax {

inline constexpr int kLabelReal = 0;
inline constexpr int kLabelFake = 1;

std::string_view label_name(int label);

// One-vs-rest counts for a single class.
struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
};

ConfusionCounts confusion(std::span<const int> preds, std::span<const int> golds, int positive);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

// Precision, recall, and F1 with 0 for any zero denominator.
ClassMetrics class_metrics(const ConfusionCounts& c);

struct MetricReport {
  std::size_t n = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double macro_recall = 0.0;
  std::array<ClassMetrics, 2> per_class{};  // indexed by label

  std::string to_json() const;
  std::string to_text() const;
};

// Labels must be 0 (real) or 1 (fake). Throws LengthMismatch or EmptyInput.
MetricReport compute_metrics(std::span<const int> preds, std::span<const int> golds);

using TaxVector = std::array<double, kTaxonomyDim>;

// Positive rate of each category among fake and among real samples.
struct AttributeDistribution {
  std::size_t n_fake = 0;
  std::size_t n_real = 0;
  TaxVector fake_rate{};
  TaxVector real_rate{};

  std::string to_json(const TaxonomySchema& schema) const;
};

AttributeDistribution attribute_distribution(std::span<const TaxVector> profiles,
                                             std::span<const int> golds, double threshold = 0.5);

// Names of categories at or above `threshold` for one facet; empty if none.
std::vector<std::string> active_categories(const TaxVector& v, Facet f,
                                           const TaxonomySchema& schema, double threshold);

struct Flow {
  std::string persuasion;
  std::string emotion;
  std::string role;
  int label = 0;
  std::size_t count = 0;
};

// One unit per element of the Cartesian product of the per-facet active sets,
// with "None" standing in for an empty facet. Sorted by (persuasion, emotion,
// role, label).
std::vector<Flow> cooccurrence_flows(std::span<const TaxVector> profiles,
                                     std::span<const int> golds, const TaxonomySchema& schema,
                                     double threshold = 0.5);

// Columns: persuasion,emotion,role,label,count
std::string flows_to_csv(std::span<const Flow> flows);

// Evaluation of one run on the whole test split and on each genre present.
struct SplitReports {
  MetricReport overall;
  std::optional<MetricReport> post;
  std::optional<MetricReport> article;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single run
};

MeanStd mean_std(std::span<const double> xs);

// Rows Overall/Post/Article, columns Macro-F1 and Macro-Recall as mean ± std.
std::string format_seed_table(std::span<const SplitReports> runs);
std::string seed_table_json(std::span<const SplitReports> runs, std::span<const std::uint64_t> seeds);

}  // namespace extax
