#include "extax/pipeline/config.hpp"

#include <set>

#include <json.hpp>

#include "extax/errors.hpp"
#include "extax/io.hpp"

namespace extax {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* where) {
  std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [k, _] : j.items()) {
    if (!allowed.contains(k)) {
      throw ValidationError(std::string("unknown config key '") + k + "' in " + where);
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

template <typename Cfg>
void read_optimizer(const json& j, Cfg& c, const char* where) {
  if (!j.is_object()) throw ValidationError(std::string(where) + " must be an object");
  reject_unknown(j, {"lr", "weight_decay", "epochs", "patience", "batch_size"}, where);
  read(j, "lr", c.lr);
  read(j, "weight_decay", c.weight_decay);
  read(j, "epochs", c.epochs);
  read(j, "patience", c.patience);
  read(j, "batch_size", c.batch_size);
}

template <typename Cfg>
json optimizer_json(const Cfg& c) {
  return {{"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"epochs", c.epochs},
          {"patience", c.patience},
          {"batch_size", c.batch_size}};
}

}  // namespace

RunConfig RunConfig::from_json(std::string_view text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError("config is not a JSON object");
  RunConfig c;
  try {
    reject_unknown(j,
                   {"alpha", "n_ppt", "n_att", "d_h", "d_ff", "dropout", "threshold", "budget",
                    "cache_dir", "stage1", "stage2", "seeds", "endpoints"},
                   "config");
    read(j, "alpha", c.alpha);
    read(j, "n_ppt", c.n_ppt);
    read(j, "n_att", c.n_att);
    read(j, "d_h", c.stage1.d_h);
    read(j, "d_ff", c.d_ff);
    read(j, "dropout", c.stage1.dropout);
    read(j, "threshold", c.threshold);
    read(j, "budget", c.budget);
    read(j, "cache_dir", c.cache_dir);
    if (j.contains("stage1")) read_optimizer(j["stage1"], c.stage1, "stage1");
    if (j.contains("stage2")) read_optimizer(j["stage2"], c.stage2, "stage2");
    read(j, "seeds", c.seeds);
    if (j.contains("endpoints")) {
      for (const auto& e : j["endpoints"]) {
        reject_unknown(e,
                       {"name", "base_url", "model_id", "api_key_env", "timeout_s",
                        "max_retries", "temperature"},
                       "endpoints[]");
        AnnotatorEndpoint ep;
        ep.name = e.at("name").get<std::string>();
        ep.base_url = e.at("base_url").get<std::string>();
        ep.model_id = e.at("model_id").get<std::string>();
        read(e, "api_key_env", ep.api_key_env);
        read(e, "timeout_s", ep.timeout_s);
        read(e, "max_retries", ep.max_retries);
        read(e, "temperature", ep.temperature);
        c.endpoints.push_back(std::move(ep));
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  try {
    return from_json(read_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string RunConfig::to_json() const {
  json j{{"alpha", alpha},
         {"n_ppt", n_ppt},
         {"n_att", n_att},
         {"d_h", stage1.d_h},
         {"d_ff", d_ff},
         {"dropout", stage1.dropout},
         {"threshold", threshold},
         {"budget", budget},
         {"cache_dir", cache_dir},
         {"stage1", optimizer_json(stage1)},
         {"stage2", optimizer_json(stage2)},
         {"seeds", seeds},
         {"endpoints", json::array()}};
  for (const auto& e : endpoints) {
    j["endpoints"].push_back({{"name", e.name},
                              {"base_url", e.base_url},
                              {"model_id", e.model_id},
                              {"api_key_env", e.api_key_env},
                              {"timeout_s", e.timeout_s},
                              {"max_retries", e.max_retries},
                              {"temperature", e.temperature}});
  }
  return j.dump(2);
}

DetectorShape RunConfig::detector_shape(std::size_t dim) const {
  return {.dim = dim, .d_ff = d_ff, .n_ppt = n_ppt, .n_att = n_att};
}

void RunConfig::validate() const {
  SmoothingConfig{alpha}.validate();
  stage1.validate();
  stage2.validate();
  if (n_att == 0) throw ValidationError("n_att must be at least 1");
  if (d_ff == 0) throw ValidationError("d_ff must be positive");
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ValidationError("threshold must lie in (0, 1]");
  if (budget == 0) throw ValidationError("budget must be positive");
  if (seeds.empty()) throw ValidationError("seeds must not be empty");
  for (const auto& e : endpoints) e.validate();
  if (!endpoints.empty()) validate_endpoints(endpoints);
}

}  // namespace extax
