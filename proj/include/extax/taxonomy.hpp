#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace extax {

enum class Facet { Persuasion, Emotion, NarrativeRole };

inline constexpr std::array<Facet, 3> kFacets{Facet::Persuasion, Facet::Emotion,
                                              Facet::NarrativeRole};
inline constexpr std::size_t kTaxonomyDim = 17;

constexpr std::size_t facet_size(Facet f) {
  switch (f) {
    case Facet::Persuasion: return 6;
    case Facet::Emotion: return 5;
    case Facet::NarrativeRole: return 6;
  }
  return 0;
}

// Start of the facet's block in the unified 17-dim space.
constexpr std::size_t facet_offset(Facet f) {
  switch (f) {
    case Facet::Persuasion: return 0;
    case Facet::Emotion: return 6;
    case Facet::NarrativeRole: return 11;
  }
  return 0;
}

// Machine name used in files: "persuasion", "emotion", "narrative_role".
std::string_view facet_key(Facet f);
// Human label used in reports: "Persuasion", "Emotion", "Narrative Roles".
std::string_view facet_label(Facet f);
Facet parse_facet(std::string_view s);

struct SubTechnique {
  std::string name;
  std::string definition;
};

struct Category {
  Facet facet = Facet::Persuasion;
  std::string name;        // canonical display name, e.g. "Attack on Reputation"
  std::string answer_key;  // key used in the answer template, e.g. "Attack_on_reputation"
  std::string definition;
  std::vector<SubTechnique> sub_techniques;
  std::size_t global_index = 0;
};

struct PromptPair {
  std::string system_text;
  std::string user_text;
};

// One annotator's binary decisions for one facet.
struct FacetVector {
  Facet facet = Facet::Persuasion;
  std::vector<std::uint8_t> bits;
  std::vector<std::string> explanations;
  // Non-fatal parse issues (missing keys, unrecognised answers).
  std::vector<std::string> warnings;

  bool operator==(const FacetVector& o) const {
    return facet == o.facet && bits == o.bits && explanations == o.explanations;
  }
};

// Lowercase, trim, and fold spaces and hyphens into underscores.
std::string normalize_key(std::string_view s);

// Ordered category sets for the three facets plus the prompt templates used to
// elicit them. Immutable after construction.
class TaxonomySchema {
 public:
  // Schema compiled into the binary from data/taxonomy.json.
  static const TaxonomySchema& builtin();
  static TaxonomySchema from_json(std::string_view text);
  static TaxonomySchema load(const std::filesystem::path& path);

  int version() const { return version_; }
  std::span<const Category> categories() const { return categories_; }
  std::span<const Category> categories(Facet f) const;
  const Category& category(std::size_t global_index) const { return categories_.at(global_index); }

  // Case-insensitive; spaces and underscores are interchangeable.
  std::size_t category_index(Facet f, std::string_view name) const;

  PromptPair render_prompt(Facet f, std::string_view text) const;

  // Extracts the first JSON object in `raw` that carries at least one expected
  // key. Missing categories become 0 and are listed in `warnings`.
  FacetVector parse_response(Facet f, std::string_view raw) const;

  // Serializes `v` in the shape of the facet's answer template.
  std::string format_answer(const FacetVector& v) const;

  std::string definitions_block(Facet f) const;

 private:
  struct FacetTemplates {
    std::string placeholder;
    std::string system_template;
    std::string user_template;
  };

  int version_ = 0;
  std::vector<Category> categories_;
  std::array<FacetTemplates, 3> templates_;
};

}  // namespace extax
