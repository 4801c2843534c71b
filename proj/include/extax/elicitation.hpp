#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "extax/taxonomy.hpp"

namespace extax {

struct AnnotatorEndpoint {
  std::string name;
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string model_id;
  std::string api_key_env;
  double timeout_s = 30.0;
  int max_retries = 2;
  double temperature = 0.1;

  void validate() const;
};

// Throws ValidationError on duplicate names or an empty list.
void validate_endpoints(std::span<const AnnotatorEndpoint> endpoints);

// One annotator's answers for a sample. A facet is empty when the annotator
// never produced a parseable answer for it.
struct AnnotatorVotes {
  std::string name;
  std::array<std::optional<FacetVector>, 3> facets;

  bool valid(Facet f) const { return facets[static_cast<std::size_t>(f)].has_value(); }
  const FacetVector& votes(Facet f) const { return *facets[static_cast<std::size_t>(f)]; }
};

struct RawVotes {
  std::string sample_id;
  std::vector<AnnotatorVotes> annotators;

  std::size_t valid_count(Facet f) const;
  bool complete() const;
};

std::string to_json_line(const RawVotes& v);
RawVotes parse_votes_line(std::string_view line);
void write_votes_jsonl(const std::filesystem::path& path, std::span<const RawVotes> votes);
std::vector<RawVotes> read_votes_jsonl(const std::filesystem::path& path);

// Sends one chat completion and returns the assistant message text.
// Implementations must be safe to call from several threads at once.
class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual std::string complete(const AnnotatorEndpoint& endpoint, const PromptPair& prompt) = 0;
  // Called when a reply could not be parsed, before the request is retried.
  virtual void invalidate(const AnnotatorEndpoint&, const PromptPair&) {}
};

// OpenAI-compatible POST {base_url}/chat/completions.
class HttpChatTransport : public ChatTransport {
 public:
  std::string complete(const AnnotatorEndpoint& endpoint, const PromptPair& prompt) override;
};

std::string build_chat_request_body(const AnnotatorEndpoint& endpoint, const PromptPair& prompt);
// Pulls choices[0].message.content out of a chat-completions reply.
std::string parse_chat_response_body(std::string_view body);

// Hex SHA-256 of (model_id, system prompt, user prompt).
std::string cache_key(std::string_view model_id, const PromptPair& prompt);

// Replies stored one file per key under a directory. Hits skip the network.
class CachingTransport : public ChatTransport {
 public:
  CachingTransport(ChatTransport& inner, std::filesystem::path dir);
  std::string complete(const AnnotatorEndpoint& endpoint, const PromptPair& prompt) override;
  // Drops the stored reply so the next request reaches the inner transport.
  void invalidate(const AnnotatorEndpoint& endpoint, const PromptPair& prompt) override;

  std::size_t hits() const;
  std::size_t misses() const;

 private:
  ChatTransport& inner_;
  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

struct EndpointStats {
  std::size_t requests = 0;
  std::size_t retries = 0;
  std::size_t transport_errors = 0;
  std::size_t unparseable = 0;
  std::size_t failures = 0;  // (sample, facet) pairs abandoned after all retries
};

struct RunManifest {
  std::size_t samples = 0;
  std::size_t complete_samples = 0;
  std::map<std::string, EndpointStats> endpoints;
  std::vector<std::string> failed_samples;  // "sample_id: reason"
  double wall_time_s = 0.0;
  std::size_t budget = 1;

  std::size_t total_requests() const;
  std::string to_json() const;
};

struct LabeledText {
  std::string sample_id;
  std::string text;
};

struct ElicitationResult {
  std::vector<RawVotes> votes;
  RunManifest manifest;
};

// Queries every endpoint for every facet. Throws AllAnnotatorsFailed when some
// facet ends with no valid annotator.
RawVotes elicit_sample(std::string_view sample_id, std::string_view text,
                       std::span<const AnnotatorEndpoint> endpoints, const TaxonomySchema& schema,
                       ChatTransport& transport, RunManifest* manifest = nullptr);

// At most `budget` requests are in flight. Output order follows `dataset`
// regardless of completion order; failing samples are kept (incomplete) and
// listed in the manifest.
ElicitationResult elicit_dataset(std::span<const LabeledText> dataset,
                                 std::span<const AnnotatorEndpoint> endpoints,
                                 const TaxonomySchema& schema, ChatTransport& transport,
                                 std::size_t budget);

}  // namespace extax
