#include "extax/smoothing.hpp"

#include <cmath>

#include <json.hpp>

#include "extax/errors.hpp"
#include "extax/io.hpp"

namespace extax {

using nlohmann::json;

void SmoothingConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw DomainError("alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
}

double vote_proportion(std::span<const std::uint8_t> votes, std::size_t valid_count) {
  if (valid_count == 0) throw NoValidVotes("no valid votes");
  if (votes.size() != valid_count) {
    throw LengthMismatch("expected " + std::to_string(valid_count) + " votes, got " +
                         std::to_string(votes.size()));
  }
  std::size_t positive = 0;
  for (auto v : votes) {
    if (v > 1) throw DomainError("votes must be 0 or 1");
    positive += v;
  }
  return static_cast<double>(positive) / static_cast<double>(valid_count);
}

double binary_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("binary_entropy needs p in [0, 1]");
  auto term = [](double x) { return x > 0.0 ? x * std::log2(x) : 0.0; };
  return -(term(p) + term(1.0 - p));
}

double smooth_target(double p, double entropy, double alpha) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("smooth_target needs p in [0, 1]");
  if (!(entropy >= 0.0 && entropy <= 1.0)) throw DomainError("smooth_target needs H in [0, 1]");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("smooth_target needs alpha in [0, 1]");
  const double pull = alpha * entropy;
  return p * (1.0 - pull) + 0.5 * pull;
}

SmoothedTargets smooth_sample(const RawVotes& raw, const SmoothingConfig& config) {
  config.validate();
  SmoothedTargets t;
  t.sample_id = raw.sample_id;
  for (Facet f : kFacets) {
    const std::size_t valid = raw.valid_count(f);
    if (valid == 0) {
      throw NoValidVotes("sample '" + raw.sample_id + "' has no valid " +
                         std::string(facet_key(f)) + " votes");
    }
    for (std::size_t c = 0; c < facet_size(f); ++c) {
      std::vector<std::uint8_t> column;
      column.reserve(valid);
      for (const auto& a : raw.annotators) {
        if (a.valid(f)) column.push_back(a.votes(f).bits.at(c));
      }
      const std::size_t g = facet_offset(f) + c;
      const double p = vote_proportion(column, valid);
      const double h = binary_entropy(p);
      t.proportions[g] = p;
      t.entropy[g] = h;
      t.vote_counts[g] = static_cast<int>(valid);
      t.values[g] = smooth_target(p, h, config.alpha);
    }
  }
  return t;
}

std::vector<SmoothedTargets> smooth_dataset(std::span<const RawVotes> raw,
                                            const TaxonomySchema& schema,
                                            const SmoothingConfig& config) {
  if (schema.categories().size() != kTaxonomyDim) {
    throw DimensionMismatch("schema must have 17 categories");
  }
  std::vector<SmoothedTargets> out;
  out.reserve(raw.size());
  for (const auto& r : raw) out.push_back(smooth_sample(r, config));
  return out;
}

std::string to_json_line(const SmoothedTargets& t) {
  json j;
  j["sample_id"] = t.sample_id;
  j["y_tax"] = t.values;
  j["H"] = t.entropy;
  j["votes"] = t.vote_counts;
  j["p"] = t.proportions;
  return j.dump();
}

SmoothedTargets parse_targets_line(std::string_view line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError("target record is not a JSON object");
  SmoothedTargets t;
  try {
    t.sample_id = j.at("sample_id").get<std::string>();
    const auto y = j.at("y_tax").get<std::vector<double>>();
    if (y.size() != kTaxonomyDim) throw ParseError("y_tax must have 17 entries");
    std::copy(y.begin(), y.end(), t.values.begin());
    for (double v : t.values) {
      if (!(v >= 0.0 && v <= 1.0)) throw ParseError("y_tax values must lie in [0, 1]");
    }
    auto fill = [&](const char* key, auto& arr) {
      if (!j.contains(key)) return;
      const auto v = j.at(key).get<std::vector<typename std::decay_t<decltype(arr)>::value_type>>();
      if (v.size() != kTaxonomyDim) throw ParseError(std::string(key) + " must have 17 entries");
      std::copy(v.begin(), v.end(), arr.begin());
    };
    fill("H", t.entropy);
    fill("votes", t.vote_counts);
    fill("p", t.proportions);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed target record: ") + e.what());
  }
  return t;
}

void write_targets_jsonl(const std::filesystem::path& path, std::span<const SmoothedTargets> t) {
  std::string out;
  for (const auto& x : t) out += to_json_line(x) + "\n";
  write_file_atomic(path, out);
}

std::vector<SmoothedTargets> read_targets_jsonl(const std::filesystem::path& path) {
  std::vector<SmoothedTargets> out;
  for_each_line(path, [&](std::size_t n, std::string_view line) {
    try {
      out.push_back(parse_targets_line(line));
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace extax
