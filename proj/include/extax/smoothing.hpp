#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "extax/elicitation.hpp"
#include "extax/taxonomy.hpp"

namespace extax {

inline constexpr double kDefaultAlpha = 0.1896;

struct SmoothingConfig {
  double alpha = kDefaultAlpha;
  void validate() const;
};

// Entropy-aware soft targets in the unified 17-dim order.
struct SmoothedTargets {
  std::string sample_id;
  std::array<double, kTaxonomyDim> values{};
  std::array<int, kTaxonomyDim> vote_counts{};  // valid-vote denominators
  std::array<double, kTaxonomyDim> proportions{};
  std::array<double, kTaxonomyDim> entropy{};
};

// Fraction of positive votes among the valid ones.
double vote_proportion(std::span<const std::uint8_t> votes, std::size_t valid_count);

// Binary entropy in bits, with 0 log 0 = 0.
double binary_entropy(double p);

// p (1 - alpha H) + 0.5 alpha H. Stays between p and 0.5 whenever alpha H is in [0, 1].
double smooth_target(double p, double entropy, double alpha);

// Invalid annotators are excluded from the denominator of their facet.
SmoothedTargets smooth_sample(const RawVotes& raw, const SmoothingConfig& config);

std::vector<SmoothedTargets> smooth_dataset(std::span<const RawVotes> raw,
                                            const TaxonomySchema& schema,
                                            const SmoothingConfig& config);

// {sample_id, y_tax[17], H[17], votes[17], p[17]}
std::string to_json_line(const SmoothedTargets& t);
SmoothedTargets parse_targets_line(std::string_view line);
void write_targets_jsonl(const std::filesystem::path& path, std::span<const SmoothedTargets> t);
std::vector<SmoothedTargets> read_targets_jsonl(const std::filesystem::path& path);

}  // namespace extax
