// SPDX-License-Identifier: Apache-2.0

#include "haven/mock_server.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "haven/error.hpp"
#include "haven/model_client.hpp"

namespace haven {

using json = nlohmann::json;

MockScript MockScript::from_json(const json& j) {
  MockScript s;
  try {
    if (j.contains("answers")) s.answers = j["answers"].get<decltype(s.answers)>();
    if (j.contains("judge_models")) s.judge_models = j["judge_models"].get<std::set<std::string>>();
    s.fallback = j.value("fallback", s.fallback);
    s.cot_suffix = j.value("cot_suffix", s.cot_suffix);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("mock script: ") + e.what());
  }
  return s;
}

MockScript MockScript::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open mock script " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("mock script " + path.string() + ": " + e.what());
  }
}

json MockScript::to_json() const {
  return json{{"answers", answers}, {"judge_models", judge_models}, {"fallback", fallback},
              {"cot_suffix", cot_suffix}};
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

// Lowercased, trimmed, trailing punctuation removed.
std::string norm(std::string_view s) {
  std::string t = lower(trim(s));
  while (!t.empty() && std::ispunct(static_cast<unsigned char>(t.back()))) t.pop_back();
  return trim(t);
}

// Text after `label` up to the end of that line, or to end of string when
// `to_end` is set.
std::optional<std::string> field(const std::string& text, const std::string& label, bool to_end = false) {
  const auto p = text.find(label);
  if (p == std::string::npos) return std::nullopt;
  const auto b = p + label.size();
  if (to_end) return text.substr(b);
  const auto e = text.find('\n', b);
  return text.substr(b, e == std::string::npos ? std::string::npos : e - b);
}

std::optional<char> choice_letter(std::string_view s) {
  const std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(t[0])));
  if (c < 'A' || c > 'C') return std::nullopt;
  if (t.size() > 1 && std::isalnum(static_cast<unsigned char>(t[1]))) return std::nullopt;
  return c;
}

std::string first_word(std::string_view s) {
  const std::string t = norm(s);
  std::size_t e = 0;
  while (e < t.size() && std::isalpha(static_cast<unsigned char>(t[e]))) ++e;
  return t.substr(0, e);
}

// The final-answer line a scripted model writes in CoT mode.
constexpr const char* kFinalAnswer = "Final answer: ";

std::string final_answer(const std::string& reasoning) {
  const auto p = reasoning.rfind(kFinalAnswer);
  if (p == std::string::npos) return trim(reasoning);
  return trim(reasoning.substr(p + std::char_traits<char>::length(kFinalAnswer)));
}

std::string message_text(const json& content) {
  if (content.is_string()) return content.get<std::string>();
  std::string out;
  if (content.is_array()) {
    for (const auto& part : content) {
      if (part.value("type", "") == "text") out = part.value("text", "");
    }
  }
  return out;
}

HttpResponse completion(const std::string& model, const std::string& text) {
  json body{{"id", "mock"},
            {"object", "chat.completion"},
            {"model", model},
            {"choices", json::array({{{"index", 0},
                                      {"message", {{"role", "assistant"}, {"content", text}}},
                                      {"finish_reason", "stop"}}})}};
  return {200, body.dump()};
}

}  // namespace

std::string scripted_judge_reply(const std::string& prompt) {
  if (auto reasoning = field(prompt, "Reasoning Process: ", true)) {
    const auto cut = reasoning->find("\nInstructions:");
    const std::string ans = final_answer(reasoning->substr(0, cut));
    if (prompt.find("\"yes\" or \"no\"") != std::string::npos) {
      const auto w = first_word(ans);
      if (w == "yes" || w == "no") return w;
      return "no answer";
    }
    if (choice_letter(ans)) return ans;
    return "no answer";
  }

  const auto standard = field(prompt, "Standard Answer: ");
  const auto predicted = field(prompt, "The Predicted Answer: ", true);
  if (!standard || !predicted) return "I cannot grade this.";
  bool ok = false;
  if (prompt.find("This is a yes/no question") != std::string::npos) {
    ok = first_word(*standard) == first_word(*predicted);
  } else if (prompt.find("This is a multiple-choice question") != std::string::npos) {
    const auto a = choice_letter(*standard);
    const auto b = choice_letter(*predicted);
    ok = (a && b) ? *a == *b : norm(*standard) == norm(*predicted);
  } else {
    const std::string s = norm(*standard);
    const std::string p = norm(*predicted);
    ok = !s.empty() && (s == p || p.find(s) != std::string::npos);
  }
  return ok ? "1" : "0";
}

MockResponder::MockResponder(MockScript script)
    : script_(std::move(script)), cot_suffix_(script_.cot_suffix.empty() ? kDefaultCotSuffix : script_.cot_suffix) {}

std::string MockResponder::answer_for(const std::string& model, const json& messages, int& status) const {
  status = 200;
  if (!messages.is_array() || messages.empty()) {
    status = 400;
    return "messages must be a non-empty array";
  }
  const std::string first = message_text(messages.front().value("content", json()));
  if (script_.judge_models.count(model)) return scripted_judge_reply(first);

  std::string question = first;
  bool cot = false;
  const std::string tail = "\n" + cot_suffix_;
  if (question.size() >= tail.size() && question.compare(question.size() - tail.size(), tail.size(), tail) == 0) {
    question.resize(question.size() - tail.size());
    cot = true;
  }

  std::string answer = script_.fallback;
  for (const std::string& key : {model, std::string("*")}) {
    const auto m = script_.answers.find(key);
    if (m == script_.answers.end()) continue;
    const auto a = m->second.find(question);
    if (a != m->second.end()) {
      answer = a->second;
      break;
    }
  }
  if (answer == kScriptHttp500) {
    status = 500;
    return "scripted server error";
  }
  if (answer == kScriptHttp400) {
    status = 400;
    return "scripted client error";
  }
  if (cot && !answer.empty()) return "Looking at the frames one at a time.\n" + std::string(kFinalAnswer) + answer;
  return answer;
}

HttpResponse MockResponder::handle(const std::string& path, const std::string& body) const {
  if (path != "/chat/completions") return {404, R"({"error":"not found"})"};
  json req;
  try {
    req = json::parse(body);
  } catch (const json::parse_error&) {
    return {400, R"({"error":"body is not JSON"})"};
  }
  const std::string model = req.value("model", "");
  int status = 200;
  const std::string text = answer_for(model, req.value("messages", json()), status);
  if (status != 200) return {status, json{{"error", text}}.dump()};
  return completion(model, text);
}

HttpResponse ScriptedTransport::post(const HttpRequest& request) {
  ++calls_;
  return responder_.handle(request.path, request.body);
}

struct MockServer::Impl {
  MockResponder responder;
  std::string prefix;
  httplib::Server server;
  std::thread thread;
  std::string host;
  int port = 0;
  std::atomic<std::size_t> requests{0};
  bool running = false;

  Impl(MockScript s, std::string p) : responder(std::move(s)), prefix(std::move(p)) {}
};

MockServer::MockServer(MockScript script, std::string prefix)
    : impl_(std::make_unique<Impl>(std::move(script), std::move(prefix))) {
  impl_->server.Post(impl_->prefix + "/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
    ++impl_->requests;
    const auto r = impl_->responder.handle("/chat/completions", req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  });
}

MockServer::~MockServer() { stop(); }

int MockServer::start(const std::string& host, int port) {
  if (impl_->running) return impl_->port;
  impl_->host = host;
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else {
    impl_->port = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  if (impl_->port <= 0) throw Error("mock server: cannot bind " + host + ":" + std::to_string(port));
  impl_->running = true;
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void MockServer::stop() {
  if (!impl_ || !impl_->running) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
  impl_->running = false;
}

void MockServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string MockServer::base_url() const {
  return "http://" + impl_->host + ":" + std::to_string(impl_->port) + impl_->prefix;
}

std::size_t MockServer::requests() const noexcept { return impl_->requests.load(); }

}  // namespace haven
