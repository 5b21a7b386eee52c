// SPDX-License-Identifier: Apache-2.0
//
// Querying a model under test over an OpenAI-compatible chat endpoint.

#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "haven/dataset.hpp"
#include "haven/transport.hpp"

namespace haven {

class Config;

inline constexpr const char* kDefaultCotSuffix =
    "Let's think step by step, then give your final answer.";

struct EndpointConfig {
  std::string base_url;
  std::string api_key_env;  // empty: no Authorization header
  std::string model_name;
  std::size_t max_concurrency = 4;
  double timeout_s = 60.0;
  int max_retries = 3;

  // Throws ConfigError when an invariant is broken.
  void validate() const;
  // Reads `{section}.base_url`, `{section}.model_name`, ... from `cfg`.
  static EndpointConfig from_config(const Config& cfg, const std::string& section);
};

// Resolves the bearer token named by `ep.api_key_env`. Throws ConfigError if
// the variable is named but unset.
std::string resolve_api_key(const EndpointConfig& ep);

enum class PromptMode { Direct, CoT };
std::string_view to_string(PromptMode m);
std::optional<PromptMode> parse_prompt_mode(std::string_view s);

struct SamplingConfig {
  std::size_t n_frames = 16;
  std::optional<std::size_t> resize_long_edge_px;
  PromptMode prompt_mode = PromptMode::Direct;

  void validate() const;
  // Stable digest over every field; part of the inference cache key.
  std::string digest() const;
};

struct InferenceRecord {
  std::string question_id;
  std::string model_name;
  std::string sampling_digest;
  std::string response_text;
  double latency_ms = 0.0;
  std::string created_at;  // ISO-8601 UTC
  int attempts = 1;
};

nlohmann::json to_json(const InferenceRecord& r);
InferenceRecord record_from_json(const nlohmann::json& j);

// Frame indices for `n_frames` uniform samples of a `total_frames` clip, taking
// the midpoint of each of n equal segments: floor((i + 0.5) * total / n).
// Ascending, deduplicated, at most min(n_frames, total_frames) entries.
std::vector<std::size_t> plan_frame_indices(std::size_t total_frames, std::size_t n_frames);

struct ImagePayload {
  std::string bytes;
  std::string mime = "image/jpeg";
};

std::string base64_encode(std::string_view bytes);
std::string mime_for_path(const std::string& path);

struct RequestOptions {
  std::size_t max_request_bytes = 20u * 1024u * 1024u;
  std::string cot_suffix = kDefaultCotSuffix;
};

struct ChatRequest {
  std::string question_id;
  std::string sampling_digest;
  nlohmann::json messages;  // OpenAI "messages" array
  std::size_t payload_bytes = 0;
};

// Text sent after the frames: the question, plus the CoT suffix on its own line
// in CoT mode.
std::string question_prompt(const Question& q, const SamplingConfig& sampling,
                            const RequestOptions& opts = {});

// One user message: image parts in frame order, then the question text.
ChatRequest build_inference_request(const Question& q, const std::vector<ImagePayload>& frames,
                                    const SamplingConfig& sampling,
                                    const RequestOptions& opts = {});

struct BackoffPolicy {
  std::chrono::milliseconds initial{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max{30000};
  // Replaceable for tests; defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleep;
};

struct Completion {
  std::string text;
  int attempts = 0;
  double latency_ms = 0.0;
};

// Chat-completions client with retry/backoff. 4xx fails permanently on the
// first attempt; 5xx and transport errors are retried up to max_retries times.
class ChatClient {
 public:
  ChatClient(EndpointConfig ep, std::shared_ptr<Transport> transport,
             std::shared_ptr<ConcurrencyLimiter> limiter = nullptr, BackoffPolicy backoff = {});

  Completion complete(const nlohmann::json& messages) const;
  const EndpointConfig& endpoint() const noexcept { return ep_; }

 private:
  EndpointConfig ep_;
  std::string api_key_;
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<ConcurrencyLimiter> limiter_;
  BackoffPolicy backoff_;
};

// Extracts choices[0].message.content from a chat-completions body.
std::string parse_completion_text(const std::string& body);

class RecordCache;

// Returns the cached record for (model, question, sampling) if present;
// otherwise queries, stores and returns the new record.
InferenceRecord cached_query(const ChatRequest& req, RecordCache& cache, const ChatClient& client);

std::string utc_timestamp();

}  // namespace haven
