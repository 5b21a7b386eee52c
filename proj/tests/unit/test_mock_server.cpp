// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "haven/error.hpp"
#include "haven/judge.hpp"
#include "haven/mock_server.hpp"
#include "haven/model_client.hpp"

using namespace haven;
using json = nlohmann::json;

namespace {

MockScript script() {
  MockScript s;
  s.answers["m1"]["Is it raining?"] = "Yes.";
  s.answers["*"]["Is it raining?"] = "No.";
  s.answers["*"]["Broken?"] = kScriptHttp500;
  return s;
}

EndpointConfig ep(const std::string& url, const std::string& model) {
  EndpointConfig e;
  e.base_url = url;
  e.model_name = model;
  e.max_retries = 1;
  return e;
}

json user(const std::string& text) {
  return json::array({{{"role", "user"}, {"content", json::array({{{"type", "text"}, {"text", text}}})}}});
}

BackoffPolicy no_sleep() {
  BackoffPolicy b;
  b.sleep = [](std::chrono::milliseconds) {};
  return b;
}

}  // namespace

TEST_CASE("scripted judge grades binary, multiple-choice and short answers") {
  const auto bc = render_prompt(TemplateId::BC_Judge, {"Q", "yes", "Yes, clearly."});
  CHECK(scripted_judge_reply(bc) == "1");
  CHECK(scripted_judge_reply(render_prompt(TemplateId::BC_Judge, {"Q", "no", "Yes."})) == "0");
  CHECK(scripted_judge_reply(render_prompt(TemplateId::MC_Judge, {"Q", "B. red", "b) crimson"})) == "1");
  CHECK(scripted_judge_reply(render_prompt(TemplateId::MC_Judge, {"Q", "B. red", "A. blue"})) == "0");
  CHECK(scripted_judge_reply(render_prompt(TemplateId::SA_Judge, {"Q", "a dog", "I see a dog."})) == "1");
  CHECK(scripted_judge_reply(render_prompt(TemplateId::SA_Judge, {"Q", "a dog", "a cat"})) == "0");
}

TEST_CASE("scripted judge answers extraction prompts from the final-answer line") {
  const auto mc = render_prompt(TemplateId::MC_Extract, {"Q", std::nullopt, "thinking\nFinal answer: C. green"});
  CHECK(scripted_judge_reply(mc) == "C. green");
  const auto bc = render_prompt(TemplateId::BC_Extract, {"Q", std::nullopt, "hmm\nFinal answer: No."});
  CHECK(scripted_judge_reply(bc) == "no");
}

TEST_CASE("in-process transport answers by model, falls back to the wildcard") {
  auto t = std::make_shared<ScriptedTransport>(script());
  ChatClient m1(ep("http://x/v1", "m1"), t);
  ChatClient m2(ep("http://x/v1", "m2"), t);
  CHECK(m1.complete(user("Is it raining?")).text == "Yes.");
  CHECK(m2.complete(user("Is it raining?")).text == "No.");
  CHECK(m2.complete(user("Unknown?")).text == "I don't know");
  CHECK(m1.complete(user(std::string("Is it raining?\n") + kDefaultCotSuffix)).text ==
        "Looking at the frames one at a time.\nFinal answer: Yes.");
  CHECK(t->calls() == 4);
}

TEST_CASE("loopback server serves completions and scripted errors") {
  MockServer server(script());
  const int port = server.start();
  CHECK(port > 0);
  auto http = std::make_shared<HttpTransport>();
  ChatClient client(ep(server.base_url(), "m1"), http, nullptr, no_sleep());
  CHECK(client.complete(user("Is it raining?")).text == "Yes.");
  CHECK_THROWS_AS(client.complete(user("Broken?")), TransientFailure);
  CHECK(server.requests() == 3);
  server.stop();
}

TEST_CASE("script JSON round trip") {
  const auto s = script();
  const auto back = MockScript::from_json(s.to_json());
  CHECK(back.answers == s.answers);
  CHECK(back.judge_models == s.judge_models);
  CHECK_THROWS_AS(MockScript::from_json(json{{"answers", 3}}), ConfigError);
}
