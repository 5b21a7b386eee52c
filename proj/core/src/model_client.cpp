// SPDX-License-Identifier: Apache-2.0

#include "haven/model_client.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <ctime>
#include <thread>

#include "haven/config.hpp"
#include "haven/digest.hpp"
#include "haven/record_cache.hpp"

namespace haven {

using json = nlohmann::json;

void EndpointConfig::validate() const {
  if (base_url.empty()) throw ConfigError("endpoint base_url is empty");
  if (base_url.rfind("http://", 0) != 0 && base_url.rfind("https://", 0) != 0) {
    throw ConfigError("endpoint base_url must start with http:// or https://: " + base_url);
  }
  if (model_name.empty()) throw ConfigError("endpoint model_name is empty");
  if (max_concurrency < 1) throw ConfigError("max_concurrency must be >= 1");
  if (!(timeout_s > 0.0)) throw ConfigError("timeout_s must be > 0");
  if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
}

EndpointConfig EndpointConfig::from_config(const Config& cfg, const std::string& section) {
  EndpointConfig ep;
  const auto key = [&](const char* k) { return section + "." + k; };
  ep.base_url = cfg.get_string(key("base_url"));
  ep.api_key_env = cfg.get_string(key("api_key_env"), std::string{});
  ep.model_name = cfg.get_string(key("model_name"));
  const auto conc = cfg.get_int(key("max_concurrency"), 4);
  if (conc < 1) throw ConfigError(key("max_concurrency") + " must be >= 1");
  ep.max_concurrency = static_cast<std::size_t>(conc);
  ep.timeout_s = cfg.get_double(key("timeout_s"), 60.0);
  ep.max_retries = static_cast<int>(cfg.get_int(key("max_retries"), 3));
  ep.validate();
  return ep;
}

std::string resolve_api_key(const EndpointConfig& ep) {
  if (ep.api_key_env.empty()) return {};
  auto value = Config::process_env(ep.api_key_env);
  if (!value) {
    throw ConfigError("API key environment variable '" + ep.api_key_env + "' is not set");
  }
  return *value;
}

std::string_view to_string(PromptMode m) { return m == PromptMode::CoT ? "cot" : "direct"; }

std::optional<PromptMode> parse_prompt_mode(std::string_view s) {
  if (s == "direct") return PromptMode::Direct;
  if (s == "cot") return PromptMode::CoT;
  return std::nullopt;
}

void SamplingConfig::validate() const {
  if (n_frames < 1) throw ConfigError("n_frames must be >= 1");
  if (resize_long_edge_px && *resize_long_edge_px < 1) {
    throw ConfigError("resize_long_edge_px must be positive");
  }
}

std::string SamplingConfig::digest() const {
  std::string canon = "n_frames=" + std::to_string(n_frames) + ";resize=" +
                      (resize_long_edge_px ? std::to_string(*resize_long_edge_px) : "none") +
                      ";mode=" + std::string(to_string(prompt_mode));
  return digest_hex(canon);
}

json to_json(const InferenceRecord& r) {
  return json{{"question_id", r.question_id},     {"model_name", r.model_name},
              {"sampling", r.sampling_digest},    {"response_text", r.response_text},
              {"latency_ms", r.latency_ms},       {"created_at", r.created_at},
              {"attempts", r.attempts}};
}

InferenceRecord record_from_json(const json& j) {
  InferenceRecord r;
  r.question_id = j.at("question_id").get<std::string>();
  r.model_name = j.at("model_name").get<std::string>();
  r.sampling_digest = j.at("sampling").get<std::string>();
  r.response_text = j.at("response_text").get<std::string>();
  r.latency_ms = j.value("latency_ms", 0.0);
  r.created_at = j.value("created_at", std::string{});
  r.attempts = j.value("attempts", 1);
  return r;
}

std::vector<std::size_t> plan_frame_indices(std::size_t total_frames, std::size_t n_frames) {
  if (total_frames < 1) throw DomainError("total_frames must be >= 1");
  if (n_frames < 1) throw DomainError("n_frames must be >= 1");
  std::vector<std::size_t> out;
  out.reserve(std::min(total_frames, n_frames));
  for (std::size_t i = 0; i < n_frames; ++i) {
    // floor((i + 0.5) * total / n) in exact integer arithmetic
    const std::size_t idx = ((2 * i + 1) * total_frames) / (2 * n_frames);
    if (out.empty() || out.back() != idx) out.push_back(idx);
  }
  return out;
}

std::string base64_encode(std::string_view bytes) {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const auto n = (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << 16) |
                   (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 1])) << 8) |
                   static_cast<unsigned char>(bytes[i + 2]);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += kAlphabet[n & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    std::uint32_t n = static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << 16;
    if (rest == 2) n |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 1])) << 8;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += rest == 2 ? kAlphabet[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string mime_for_path(const std::string& path) {
  auto dot = path.rfind('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == "png") return "image/png";
  if (ext == "webp") return "image/webp";
  if (ext == "gif") return "image/gif";
  return "image/jpeg";
}

std::string question_prompt(const Question& q, const SamplingConfig& sampling,
                            const RequestOptions& opts) {
  if (sampling.prompt_mode == PromptMode::CoT) return q.text + "\n" + opts.cot_suffix;
  return q.text;
}

ChatRequest build_inference_request(const Question& q, const std::vector<ImagePayload>& frames,
                                    const SamplingConfig& sampling, const RequestOptions& opts) {
  if (frames.empty()) throw DomainError("question " + q.id + ": no frames to send");
  std::size_t total = 0;
  for (const auto& f : frames) total += f.bytes.size();
  if (total > opts.max_request_bytes) {
    throw RequestTooLarge("question " + q.id + ": frame payload " + std::to_string(total) +
                          " bytes exceeds cap " + std::to_string(opts.max_request_bytes));
  }

  json content = json::array();
  for (const auto& f : frames) {
    content.push_back({{"type", "image_url"},
                       {"image_url", {{"url", "data:" + f.mime + ";base64," + base64_encode(f.bytes)}}}});
  }
  content.push_back({{"type", "text"}, {"text", question_prompt(q, sampling, opts)}});

  ChatRequest req;
  req.question_id = q.id;
  req.sampling_digest = sampling.digest();
  req.messages = json::array({{{"role", "user"}, {"content", std::move(content)}}});
  req.payload_bytes = total;
  return req;
}

std::string parse_completion_text(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("completion body is not JSON: ") + e.what());
  }
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_null()) return {};
    return content.get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("completion body lacks choices[0].message.content: ") + e.what());
  }
}

ChatClient::ChatClient(EndpointConfig ep, std::shared_ptr<Transport> transport,
                       std::shared_ptr<ConcurrencyLimiter> limiter, BackoffPolicy backoff)
    : ep_(std::move(ep)),
      transport_(std::move(transport)),
      limiter_(std::move(limiter)),
      backoff_(std::move(backoff)) {
  ep_.validate();
  api_key_ = resolve_api_key(ep_);
  if (!transport_) throw ConfigError("ChatClient needs a transport");
  if (!backoff_.sleep) {
    backoff_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
}

Completion ChatClient::complete(const json& messages) const {
  const json body{{"model", ep_.model_name}, {"messages", messages}, {"temperature", 0}};
  HttpRequest req{ep_.base_url, "/chat/completions", api_key_, body.dump(), ep_.timeout_s};

  const int max_attempts = 1 + ep_.max_retries;
  std::string last_error;
  auto delay = backoff_.initial;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    const auto start = std::chrono::steady_clock::now();
    HttpResponse res;
    try {
      ConcurrencyLimiter::Permit permit(limiter_.get());
      res = transport_->post(req);
    } catch (const TransportError& e) {
      last_error = e.what();
      res.status = 0;
    }
    const double latency =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

    if (res.status >= 200 && res.status < 300) {
      try {
        return {parse_completion_text(res.body), attempt, latency};
      } catch (const FormatError& e) {
        throw PermanentFailure(res.status, ep_.model_name + ": " + e.what());
      }
    }
    if (res.status >= 400 && res.status < 500) {
      throw PermanentFailure(res.status, ep_.model_name + ": HTTP " + std::to_string(res.status) +
                                             " " + res.body.substr(0, 200));
    }
    if (res.status != 0) last_error = "HTTP " + std::to_string(res.status);
    if (attempt < max_attempts) {
      backoff_.sleep(std::min(delay, backoff_.max));
      delay = std::chrono::milliseconds(
          static_cast<long long>(std::llround(static_cast<double>(delay.count()) * backoff_.multiplier)));
    }
  }
  throw TransientFailure(max_attempts, ep_.model_name + ": " + last_error);
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

InferenceRecord cached_query(const ChatRequest& req, RecordCache& cache, const ChatClient& client) {
  const auto& model = client.endpoint().model_name;
  if (auto hit = cache.find(model, req.question_id, req.sampling_digest)) return *hit;

  const Completion c = client.complete(req.messages);
  InferenceRecord rec{req.question_id, model, req.sampling_digest, c.text,
                      c.latency_ms,    utc_timestamp(), c.attempts};
  if (!cache.put(rec)) {
    // Another worker stored the same key first; keep the stored record.
    if (auto stored = cache.find(model, req.question_id, req.sampling_digest)) return *stored;
  }
  return rec;
}

}  // namespace haven
