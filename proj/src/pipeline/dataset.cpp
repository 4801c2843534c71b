#include "extax/pipeline/dataset.hpp"

#include <set>

#include <json.hpp>

#include "extax/errors.hpp"
#include "extax/io.hpp"

namespace extax {

using nlohmann::json;

std::string_view genre_name(Genre g) { return g == Genre::Post ? "post" : "article"; }

DatasetRecord parse_dataset_line(std::string_view line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError("record is not a JSON object");
  DatasetRecord r;
  try {
    r.sample_id = j.at("sample_id").get<std::string>();
    r.text = j.at("text").get<std::string>();
    if (r.sample_id.empty()) throw ParseError("sample_id is empty");
    if (j.contains("label") && !j["label"].is_null()) {
      if (!j["label"].is_number_integer()) throw ParseError("label must be 0 or 1");
      const auto y = j["label"].get<long long>();
      if (y != 0 && y != 1) throw ParseError("label must be 0 or 1, got " + std::to_string(y));
      r.label = static_cast<int>(y);
    }
    if (j.contains("genre") && !j["genre"].is_null()) {
      const auto g = j["genre"].get<std::string>();
      if (g == "post") r.genre = Genre::Post;
      else if (g == "article") r.genre = Genre::Article;
      else throw ParseError("genre must be post or article, got '" + g + "'");
    }
    if (j.contains("source") && !j["source"].is_null()) r.source = j["source"].get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed record: ") + e.what());
  }
  return r;
}

std::string to_json_line(const DatasetRecord& r) {
  nlohmann::ordered_json j{{"sample_id", r.sample_id}, {"text", r.text}};
  if (r.label) j["label"] = *r.label;
  if (r.genre) j["genre"] = genre_name(*r.genre);
  if (!r.source.empty()) j["source"] = r.source;
  return j.dump();
}

std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path) {
  std::vector<DatasetRecord> out;
  std::set<std::string, std::less<>> seen;
  for_each_line(path, [&](std::size_t n, std::string_view line) {
    DatasetRecord r;
    try {
      r = parse_dataset_line(line);
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
    if (!seen.insert(r.sample_id).second) {
      throw DuplicateId(path.string() + ":" + std::to_string(n) + ": duplicate sample_id '" +
                        r.sample_id + "'");
    }
    out.push_back(std::move(r));
  });
  return out;
}

void write_dataset(const std::filesystem::path& path, std::span<const DatasetRecord> records) {
  std::string out;
  for (const auto& r : records) out += to_json_line(r) + "\n";
  write_file_atomic(path, out);
}

}  // namespace extax
