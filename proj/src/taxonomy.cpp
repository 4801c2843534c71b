#include "extax/taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "extax/errors.hpp"

namespace extax {

// Generated at configure time from data/taxonomy.json.
extern const char* const kBuiltinTaxonomyJson;

namespace {

using nlohmann::json;

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::size_t facet_slot(Facet f) { return static_cast<std::size_t>(f); }

// Returns the end (one past the closing brace) of the balanced object starting
// at `open`, or npos. String literals are skipped so braces inside them don't count.
std::size_t match_object(std::string_view raw, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < raw.size(); ++i) {
    const char c = raw[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

// yes -> 1, no -> 0, anything else -> -1.
int interpret_answer(const json& v) {
  if (v.is_boolean()) return v.get<bool>() ? 1 : 0;
  if (!v.is_string()) return -1;
  std::string s = normalize_key(v.get<std::string>());
  while (!s.empty() && (s.back() == '.' || s.back() == '!')) s.pop_back();
  if (s == "yes" || s == "true") return 1;
  if (s == "no" || s == "false") return 0;
  return -1;
}

}  // namespace

std::string_view facet_key(Facet f) {
  switch (f) {
    case Facet::Persuasion: return "persuasion";
    case Facet::Emotion: return "emotion";
    case Facet::NarrativeRole: return "narrative_role";
  }
  return {};
}

std::string_view facet_label(Facet f) {
  switch (f) {
    case Facet::Persuasion: return "Persuasion";
    case Facet::Emotion: return "Emotion";
    case Facet::NarrativeRole: return "Narrative Roles";
  }
  return {};
}

Facet parse_facet(std::string_view s) {
  const std::string k = normalize_key(s);
  if (k == "persuasion") return Facet::Persuasion;
  if (k == "emotion") return Facet::Emotion;
  if (k == "narrative_role" || k == "narrative_roles" || k == "narrativerole") {
    return Facet::NarrativeRole;
  }
  throw ValidationError("unknown facet '" + std::string(s) + "'");
}

std::string normalize_key(std::string_view s) {
  s = trim(s);
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == ' ' || c == '-' || c == '_') {
      if (out.empty() || out.back() != '_') out.push_back('_');
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

const TaxonomySchema& TaxonomySchema::builtin() {
  static const TaxonomySchema schema = from_json(kBuiltinTaxonomyJson);
  return schema;
}

TaxonomySchema TaxonomySchema::from_json(std::string_view text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw ParseError("taxonomy file is not a JSON object");
  }
  TaxonomySchema schema;
  try {
    schema.version_ = doc.at("version").get<int>();
    const auto& facets = doc.at("facets");
    if (!facets.is_array() || facets.size() != kFacets.size()) {
      throw ParseError("taxonomy must declare exactly three facets");
    }
    for (std::size_t fi = 0; fi < kFacets.size(); ++fi) {
      const auto& jf = facets[fi];
      const Facet facet = parse_facet(jf.at("facet").get<std::string>());
      if (facet != kFacets[fi]) {
        throw ParseError("facets must appear in the order persuasion, emotion, narrative_role");
      }
      const auto& cats = jf.at("categories");
      if (cats.size() != facet_size(facet)) {
        throw ParseError("facet '" + std::string(facet_key(facet)) + "' must have " +
                         std::to_string(facet_size(facet)) + " categories");
      }
      for (const auto& jc : cats) {
        Category c;
        c.facet = facet;
        c.name = jc.at("name").get<std::string>();
        c.answer_key = jc.at("answer_key").get<std::string>();
        c.definition = jc.at("definition").get<std::string>();
        for (const auto& st : jc.value("sub_techniques", json::array())) {
          c.sub_techniques.push_back({st.at(0).get<std::string>(), st.at(1).get<std::string>()});
        }
        c.global_index = schema.categories_.size();
        schema.categories_.push_back(std::move(c));
      }
      auto& t = schema.templates_[fi];
      t.placeholder = jf.at("definitions_placeholder").get<std::string>();
      t.system_template = jf.at("system_template").get<std::string>();
      t.user_template = jf.at("user_template").get<std::string>();
      if (t.system_template.find(t.placeholder) == std::string::npos) {
        throw ParseError("system template for '" + std::string(facet_key(facet)) +
                         "' lacks its definitions placeholder");
      }
      if (t.user_template.find("{text}") == std::string::npos) {
        throw ParseError("user template for '" + std::string(facet_key(facet)) +
                         "' lacks the {text} slot");
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed taxonomy file: ") + e.what());
  }
  return schema;
}

TaxonomySchema TaxonomySchema::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open taxonomy file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::span<const Category> TaxonomySchema::categories(Facet f) const {
  return std::span<const Category>(categories_).subspan(facet_offset(f), facet_size(f));
}

std::size_t TaxonomySchema::category_index(Facet f, std::string_view name) const {
  const std::string key = normalize_key(name);
  for (const auto& c : categories(f)) {
    if (normalize_key(c.name) == key || normalize_key(c.answer_key) == key) {
      return c.global_index;
    }
  }
  throw UnknownCategory("'" + std::string(name) + "' is not a " + std::string(facet_key(f)) +
                        " category");
}

std::string TaxonomySchema::definitions_block(Facet f) const {
  std::string out;
  for (const auto& c : categories(f)) {
    out += "- " + c.name + ": " + c.definition + "\n";
    for (const auto& st : c.sub_techniques) {
      out += "    - " + st.name + ": " + st.definition + "\n";
    }
  }
  if (!out.empty()) out.pop_back();
  return out;
}

PromptPair TaxonomySchema::render_prompt(Facet f, std::string_view text) const {
  if (trim(text).empty()) throw EmptyText("cannot render a prompt for empty text");
  const auto& t = templates_[facet_slot(f)];

  PromptPair p;
  p.system_text = t.system_template;
  const auto at = p.system_text.find(t.placeholder);
  p.system_text.replace(at, t.placeholder.size(), definitions_block(f));

  // Only the first {text} slot is substituted, so braces in the input survive untouched.
  p.user_text = t.user_template;
  const auto slot = p.user_text.find("{text}");
  p.user_text.replace(slot, 6, text);
  return p;
}

FacetVector TaxonomySchema::parse_response(Facet f, std::string_view raw) const {
  const auto cats = categories(f);
  std::vector<std::string> wanted;
  for (const auto& c : cats) wanted.push_back(normalize_key(c.answer_key));

  auto slot_of = [&](const std::string& key) -> int {
    const std::string k = normalize_key(key);
    for (std::size_t i = 0; i < cats.size(); ++i) {
      if (k == wanted[i] || k == normalize_key(cats[i].name)) return static_cast<int>(i);
    }
    return -1;
  };

  for (std::size_t open = raw.find('{'); open != std::string_view::npos;
       open = raw.find('{', open + 1)) {
    const std::size_t end = match_object(raw, open);
    if (end == std::string_view::npos) continue;
    json obj = json::parse(raw.substr(open, end - open), nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) continue;

    bool any = false;
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (slot_of(it.key()) >= 0) {
        any = true;
        break;
      }
    }
    if (!any) continue;

    FacetVector v;
    v.facet = f;
    v.bits.assign(cats.size(), 0);
    v.explanations.assign(cats.size(), std::string());
    std::vector<bool> seen(cats.size(), false);
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      const int slot = slot_of(it.key());
      if (slot < 0) continue;
      seen[slot] = true;
      const json& val = it.value();
      int answer = -1;
      if (val.is_object()) {
        for (auto field = val.begin(); field != val.end(); ++field) {
          const std::string fk = normalize_key(field.key());
          if (fk == "is_used") {
            answer = interpret_answer(field.value());
          } else if (fk == "explanation" && field.value().is_string()) {
            v.explanations[slot] = field.value().get<std::string>();
          }
        }
      } else {
        answer = interpret_answer(val);
      }
      if (answer < 0) {
        v.warnings.push_back("unrecognised answer for " + cats[slot].name + ", treated as No");
        answer = 0;
      }
      v.bits[slot] = static_cast<std::uint8_t>(answer);
    }
    for (std::size_t i = 0; i < cats.size(); ++i) {
      if (!seen[i]) v.warnings.push_back("missing key for " + cats[i].name + ", treated as No");
    }
    return v;
  }
  throw Unparseable("no JSON object with " + std::string(facet_key(f)) + " keys in response");
}

std::string TaxonomySchema::format_answer(const FacetVector& v) const {
  const auto cats = categories(v.facet);
  if (v.bits.size() != cats.size()) {
    throw DimensionMismatch("facet vector has " + std::to_string(v.bits.size()) +
                            " bits, expected " + std::to_string(cats.size()));
  }
  json obj = json::object();
  for (std::size_t i = 0; i < cats.size(); ++i) {
    json entry = json::object();
    entry["is_used"] = v.bits[i] ? "Yes" : "No";
    entry["explanation"] = i < v.explanations.size() ? v.explanations[i] : std::string();
    obj[cats[i].answer_key] = std::move(entry);
  }
  return obj.dump(2);
}

}  // namespace extax
