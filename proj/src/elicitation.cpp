#include "extax/elicitation.hpp"

#include <atomic>
#include <cstdlib>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "extax/errors.hpp"
#include "extax/io.hpp"

namespace extax {

using nlohmann::json;

void AnnotatorEndpoint::validate() const {
  if (name.empty()) throw ValidationError("endpoint name must not be empty");
  if (model_id.empty()) throw ValidationError("endpoint '" + name + "' has no model_id");
  if (!(timeout_s > 0.0)) throw ValidationError("endpoint '" + name + "' needs timeout > 0");
  if (max_retries < 0) throw ValidationError("endpoint '" + name + "' has negative max_retries");
}

void validate_endpoints(std::span<const AnnotatorEndpoint> endpoints) {
  if (endpoints.empty()) throw ValidationError("at least one annotator endpoint is required");
  std::set<std::string> names;
  for (const auto& e : endpoints) {
    e.validate();
    if (!names.insert(e.name).second) {
      throw ValidationError("duplicate endpoint name '" + e.name + "'");
    }
  }
}

std::size_t RawVotes::valid_count(Facet f) const {
  std::size_t n = 0;
  for (const auto& a : annotators) n += a.valid(f) ? 1 : 0;
  return n;
}

bool RawVotes::complete() const {
  for (Facet f : kFacets) {
    if (valid_count(f) == 0) return false;
  }
  return true;
}

std::string to_json_line(const RawVotes& v) {
  json annotators = json::array();
  for (const auto& a : v.annotators) {
    json ja;
    ja["name"] = a.name;
    for (Facet f : kFacets) {
      const std::string key(facet_key(f));
      if (!a.valid(f)) {
        ja[key] = nullptr;
        continue;
      }
      const auto& fv = a.votes(f);
      json jf;
      jf["bits"] = fv.bits;
      jf["explanations"] = fv.explanations;
      if (!fv.warnings.empty()) jf["warnings"] = fv.warnings;
      ja[key] = std::move(jf);
    }
    annotators.push_back(std::move(ja));
  }
  json out;
  out["sample_id"] = v.sample_id;
  out["complete"] = v.complete();
  out["annotators"] = std::move(annotators);
  return out.dump();
}

RawVotes parse_votes_line(std::string_view line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError("vote record is not a JSON object");
  RawVotes v;
  try {
    v.sample_id = j.at("sample_id").get<std::string>();
    for (const auto& ja : j.at("annotators")) {
      AnnotatorVotes a;
      a.name = ja.at("name").get<std::string>();
      for (Facet f : kFacets) {
        const std::string key(facet_key(f));
        if (!ja.contains(key) || ja.at(key).is_null()) continue;
        const auto& jf = ja.at(key);
        FacetVector fv;
        fv.facet = f;
        fv.bits = jf.at("bits").get<std::vector<std::uint8_t>>();
        if (fv.bits.size() != facet_size(f)) {
          throw ParseError("annotator '" + a.name + "' has " + std::to_string(fv.bits.size()) +
                           " " + key + " bits, expected " + std::to_string(facet_size(f)));
        }
        for (auto b : fv.bits) {
          if (b > 1) throw ParseError("vote bits must be 0 or 1");
        }
        fv.explanations = jf.value("explanations", std::vector<std::string>(fv.bits.size()));
        fv.explanations.resize(fv.bits.size());
        fv.warnings = jf.value("warnings", std::vector<std::string>{});
        a.facets[static_cast<std::size_t>(f)] = std::move(fv);
      }
      v.annotators.push_back(std::move(a));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed vote record: ") + e.what());
  }
  return v;
}

void write_votes_jsonl(const std::filesystem::path& path, std::span<const RawVotes> votes) {
  std::string out;
  for (const auto& v : votes) out += to_json_line(v) + "\n";
  write_file_atomic(path, out);
}

std::vector<RawVotes> read_votes_jsonl(const std::filesystem::path& path) {
  std::vector<RawVotes> out;
  for_each_line(path, [&](std::size_t n, std::string_view line) {
    try {
      out.push_back(parse_votes_line(line));
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  });
  return out;
}

// --- transport ---------------------------------------------------------------

std::string build_chat_request_body(const AnnotatorEndpoint& endpoint, const PromptPair& prompt) {
  json body;
  body["model"] = endpoint.model_id;
  body["temperature"] = endpoint.temperature;
  body["messages"] = json::array({
      json{{"role", "system"}, {"content", prompt.system_text}},
      json{{"role", "user"}, {"content", prompt.user_text}},
  });
  return body.dump();
}

std::string parse_chat_response_body(std::string_view body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw TransportError("chat response is not JSON");
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    if (j.contains("error")) throw TransportError("endpoint error: " + j["error"].dump());
    throw TransportError("chat response lacks choices[0].message.content");
  }
}

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // may be empty
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("base_url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  SplitUrl s;
  s.origin = url.substr(0, path_start);
  s.path = path_start == std::string::npos ? std::string() : url.substr(path_start);
  while (!s.path.empty() && s.path.back() == '/') s.path.pop_back();
  return s;
}

}  // namespace

std::string HttpChatTransport::complete(const AnnotatorEndpoint& endpoint,
                                        const PromptPair& prompt) {
  const SplitUrl url = split_url(endpoint.base_url);
  httplib::Client client(url.origin);
  const auto secs = static_cast<time_t>(endpoint.timeout_s);
  const auto usecs = static_cast<time_t>((endpoint.timeout_s - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers headers;
  if (!endpoint.api_key_env.empty()) {
    const char* key = std::getenv(endpoint.api_key_env.c_str());
    if (key == nullptr) {
      throw TransportError("environment variable " + endpoint.api_key_env + " is not set");
    }
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  auto res = client.Post(url.path + "/chat/completions", headers,
                         build_chat_request_body(endpoint, prompt), "application/json");
  if (!res) {
    throw TransportError(endpoint.name + ": " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw TransportError(endpoint.name + ": HTTP " + std::to_string(res->status));
  }
  return parse_chat_response_body(res->body);
}

std::string cache_key(std::string_view model_id, const PromptPair& prompt) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  const char sep = '\0';
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  EVP_DigestUpdate(ctx, model_id.data(), model_id.size());
  EVP_DigestUpdate(ctx, &sep, 1);
  EVP_DigestUpdate(ctx, prompt.system_text.data(), prompt.system_text.size());
  EVP_DigestUpdate(ctx, &sep, 1);
  EVP_DigestUpdate(ctx, prompt.user_text.data(), prompt.user_text.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

CachingTransport::CachingTransport(ChatTransport& inner, std::filesystem::path dir)
    : inner_(inner), dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::string CachingTransport::complete(const AnnotatorEndpoint& endpoint,
                                       const PromptPair& prompt) {
  const auto file = dir_ / (cache_key(endpoint.model_id, prompt) + ".txt");
  if (std::filesystem::exists(file)) {
    std::lock_guard lock(mu_);
    ++hits_;
    return read_file(file);
  }
  std::string reply = inner_.complete(endpoint, prompt);
  write_file_atomic(file, reply);
  std::lock_guard lock(mu_);
  ++misses_;
  return reply;
}

void CachingTransport::invalidate(const AnnotatorEndpoint& endpoint, const PromptPair& prompt) {
  std::error_code ec;
  std::filesystem::remove(dir_ / (cache_key(endpoint.model_id, prompt) + ".txt"), ec);
}

std::size_t CachingTransport::hits() const {
  std::lock_guard lock(mu_);
  return hits_;
}

std::size_t CachingTransport::misses() const {
  std::lock_guard lock(mu_);
  return misses_;
}

// --- manifest ----------------------------------------------------------------

std::size_t RunManifest::total_requests() const {
  std::size_t n = 0;
  for (const auto& [_, s] : endpoints) n += s.requests;
  return n;
}

std::string RunManifest::to_json() const {
  json j;
  j["samples"] = samples;
  j["complete_samples"] = complete_samples;
  j["budget"] = budget;
  j["total_requests"] = total_requests();
  j["wall_time_s"] = wall_time_s;
  json eps = json::object();
  for (const auto& [name, s] : endpoints) {
    eps[name] = {{"requests", s.requests},
                 {"retry_count", s.retries},
                 {"transport_errors", s.transport_errors},
                 {"unparseable", s.unparseable},
                 {"failures", s.failures}};
  }
  j["endpoints"] = std::move(eps);
  j["failed_samples"] = failed_samples;
  return j.dump(2);
}

// --- elicitation -------------------------------------------------------------

namespace {

struct TaskOutcome {
  std::optional<FacetVector> votes;
  EndpointStats stats;
  std::string last_error;
};

TaskOutcome run_task(const AnnotatorEndpoint& endpoint, Facet facet, const PromptPair& prompt,
                     const TaxonomySchema& schema, ChatTransport& transport) {
  TaskOutcome out;
  for (int attempt = 0; attempt <= endpoint.max_retries; ++attempt) {
    if (attempt > 0) ++out.stats.retries;
    ++out.stats.requests;
    try {
      out.votes = schema.parse_response(facet, transport.complete(endpoint, prompt));
      return out;
    } catch (const Unparseable& e) {
      ++out.stats.unparseable;
      out.last_error = e.what();
      transport.invalidate(endpoint, prompt);
    } catch (const TransportError& e) {
      ++out.stats.transport_errors;
      out.last_error = e.what();
    }
  }
  ++out.stats.failures;
  return out;
}

void accumulate(EndpointStats& into, const EndpointStats& s) {
  into.requests += s.requests;
  into.retries += s.retries;
  into.transport_errors += s.transport_errors;
  into.unparseable += s.unparseable;
  into.failures += s.failures;
}

// Builds the RawVotes for one sample from its endpoint-major, facet-minor outcomes.
RawVotes assemble(std::string_view sample_id, std::span<const AnnotatorEndpoint> endpoints,
                  std::span<TaskOutcome> outcomes, RunManifest* manifest) {
  RawVotes v;
  v.sample_id = std::string(sample_id);
  for (std::size_t e = 0; e < endpoints.size(); ++e) {
    AnnotatorVotes a;
    a.name = endpoints[e].name;
    for (std::size_t f = 0; f < kFacets.size(); ++f) {
      auto& o = outcomes[e * kFacets.size() + f];
      a.facets[f] = std::move(o.votes);
      if (manifest) accumulate(manifest->endpoints[a.name], o.stats);
    }
    v.annotators.push_back(std::move(a));
  }
  return v;
}

std::optional<Facet> first_empty_facet(const RawVotes& v) {
  for (Facet f : kFacets) {
    if (v.valid_count(f) == 0) return f;
  }
  return std::nullopt;
}

}  // namespace

RawVotes elicit_sample(std::string_view sample_id, std::string_view text,
                       std::span<const AnnotatorEndpoint> endpoints, const TaxonomySchema& schema,
                       ChatTransport& transport, RunManifest* manifest) {
  validate_endpoints(endpoints);
  std::array<PromptPair, 3> prompts;
  for (Facet f : kFacets) prompts[static_cast<std::size_t>(f)] = schema.render_prompt(f, text);

  std::vector<TaskOutcome> outcomes;
  for (const auto& e : endpoints) {
    for (Facet f : kFacets) {
      outcomes.push_back(run_task(e, f, prompts[static_cast<std::size_t>(f)], schema, transport));
    }
  }
  RawVotes v = assemble(sample_id, endpoints, outcomes, manifest);
  if (auto f = first_empty_facet(v)) {
    throw AllAnnotatorsFailed("sample '" + v.sample_id + "': no annotator produced valid " +
                              std::string(facet_key(*f)) + " votes");
  }
  return v;
}

ElicitationResult elicit_dataset(std::span<const LabeledText> dataset,
                                 std::span<const AnnotatorEndpoint> endpoints,
                                 const TaxonomySchema& schema, ChatTransport& transport,
                                 std::size_t budget) {
  if (budget < 1) throw ValidationError("budget must be at least 1");
  validate_endpoints(endpoints);
  const auto start = std::chrono::steady_clock::now();

  ElicitationResult result;
  result.manifest.samples = dataset.size();
  result.manifest.budget = budget;
  for (const auto& e : endpoints) result.manifest.endpoints[e.name];

  const std::size_t per_sample = endpoints.size() * kFacets.size();
  const std::size_t n_tasks = dataset.size() * per_sample;

  // Prompts are rendered up front; a bad sample text fails the run before any request.
  std::vector<std::array<PromptPair, 3>> prompts(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (Facet f : kFacets) {
      prompts[i][static_cast<std::size_t>(f)] = schema.render_prompt(f, dataset[i].text);
    }
  }

  std::vector<TaskOutcome> outcomes(n_tasks);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < n_tasks; t = next++) {
      const std::size_t sample = t / per_sample;
      const std::size_t endpoint = (t % per_sample) / kFacets.size();
      const Facet facet = kFacets[t % kFacets.size()];
      outcomes[t] = run_task(endpoints[endpoint], facet,
                             prompts[sample][static_cast<std::size_t>(facet)], schema, transport);
    }
  };
  const std::size_t n_workers = std::min(budget, std::max<std::size_t>(n_tasks, 1));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }

  for (std::size_t i = 0; i < dataset.size(); ++i) {
    auto slice = std::span(outcomes).subspan(i * per_sample, per_sample);
    RawVotes v = assemble(dataset[i].sample_id, endpoints, slice, &result.manifest);
    if (auto f = first_empty_facet(v)) {
      result.manifest.failed_samples.push_back(v.sample_id + ": all annotators failed for " +
                                               std::string(facet_key(*f)));
    } else {
      ++result.manifest.complete_samples;
    }
    result.votes.push_back(std::move(v));
  }
  result.manifest.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace extax
