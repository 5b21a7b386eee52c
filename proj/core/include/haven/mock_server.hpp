// SPDX-License-Identifier: Apache-2.0
//
// Scripted OpenAI-compatible endpoint for offline runs and tests. A script maps
// question text to an answer per model; models listed as judges grade by
// comparing the standard and predicted answers in the rendered judge prompt.

#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "haven/transport.hpp"

namespace haven {

// Answers with these values make the model reply with the matching HTTP error.
inline constexpr const char* kScriptHttp500 = "__http_500__";
inline constexpr const char* kScriptHttp400 = "__http_400__";

struct MockScript {
  // model name (or "*") -> question text -> answer
  std::map<std::string, std::map<std::string, std::string>> answers;
  std::set<std::string> judge_models{"scripted-judge"};
  std::string fallback = "I don't know";
  std::string cot_suffix;  // empty: kDefaultCotSuffix

  static MockScript from_json(const nlohmann::json& j);
  static MockScript load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

// Grades a rendered judge prompt, or answers a rendered extraction prompt.
std::string scripted_judge_reply(const std::string& prompt);

// Stateless request handler shared by the HTTP server and the in-process
// transport.
class MockResponder {
 public:
  explicit MockResponder(MockScript script);
  // `path` is the request path relative to the base URL.
  HttpResponse handle(const std::string& path, const std::string& body) const;
  const MockScript& script() const noexcept { return script_; }

 private:
  std::string answer_for(const std::string& model, const nlohmann::json& messages, int& status) const;
  MockScript script_;
  std::string cot_suffix_;
};

// Transport that never touches the network; counts calls.
class ScriptedTransport final : public Transport {
 public:
  explicit ScriptedTransport(MockScript script) : responder_(std::move(script)) {}
  HttpResponse post(const HttpRequest& request) override;
  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  MockResponder responder_;
  std::atomic<std::size_t> calls_{0};
};

// Loopback HTTP server on an ephemeral (or given) port, serving
// POST {prefix}/chat/completions.
class MockServer {
 public:
  explicit MockServer(MockScript script, std::string prefix = "/v1");
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  // Returns the bound port. Throws Error if binding fails.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  void stop();
  std::string base_url() const;
  std::size_t requests() const noexcept;

  // Blocks until stop() is called from another thread or a signal handler.
  void wait();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace haven
