// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "generators.hpp"
#include "haven/commands.hpp"
#include "haven/dataset.hpp"
#include "haven/error.hpp"
#include "haven/mock_server.hpp"

using namespace haven;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Fixture {
  fs::path fx = testing::fixture_dir() / "e2e";
  fs::path work;
  std::shared_ptr<ScriptedTransport> transport;
  CommandContext ctx;
  std::ostringstream log;

  explicit Fixture(const std::string& name) : work(testing::scratch_dir(name)) {
    testing::write_dummy_frames(load_dataset(fx / "dataset.jsonl"), work / "frames", 4);
    transport = std::make_shared<ScriptedTransport>(MockScript::load(fx / "script.json"));
    ctx.transport = transport;
    ctx.log = &log;
    ctx.backoff.sleep = [](std::chrono::milliseconds) {};
  }

  RunManifest manifest(bool resume = false, const std::string& key_env = "") const {
    Config cfg;
    cfg.set("dataset", (fx / "dataset.jsonl").string());
    cfg.set("model.base_url", std::string("http://127.0.0.1:9/v1"));
    cfg.set("model.model_name", std::string("scripted-model"));
    cfg.set("model.max_retries", 0LL);
    if (!key_env.empty()) cfg.set("model.api_key_env", key_env);
    cfg.set("judge.base_url", std::string("http://127.0.0.1:9/v1"));
    cfg.set("judge.model_name", std::string("scripted-judge"));
    cfg.set("sampling.n_frames", 4LL);
    cfg.set("frames.dir", std::string("frames"));
    GlobalOptions g;
    g.out = work / "out";
    g.resume = resume;
    return RunManifest::from_config(cfg, work, g, true, true);
  }
};

json meta(const fs::path& p) { return json::parse(testing::read_text(p)); }

}  // namespace

TEST_CASE("exit codes") {
  CHECK(exit_code_for(IntegrityError("x")) == kExitIntegrity);
  CHECK(exit_code_for(ConfigError("x")) == kExitError);
  CHECK(exit_code_for(std::runtime_error("x")) == kExitError);
}

TEST_CASE("relative config paths resolve against the config directory") {
  Fixture f("cli-paths");
  const auto m = f.manifest();
  REQUIRE(m.frames_dir);
  CHECK(*m.frames_dir == f.work / "frames");
  CHECK(m.sampling.n_frames == 4);
  CHECK(m.model.max_retries == 0);
}

TEST_CASE("resume issues no requests for cached records") {
  Fixture f("cli-resume");
  REQUIRE(cmd_run(f.manifest(), f.ctx) == kExitOk);
  const auto first = meta(f.work / "out" / "run_meta.json");
  CHECK(first["new_requests"] == 60);
  CHECK(first["records"] == 58);
  CHECK(first["failures"] == 2);
  const auto responses = testing::read_text(f.work / "out" / "responses.jsonl");

  const auto before = f.transport->calls();
  REQUIRE(cmd_run(f.manifest(true), f.ctx) == kExitOk);
  const auto second = meta(f.work / "out" / "run_meta.json");
  // Only the two scripted client errors are retried.
  CHECK(second["new_requests"] == 2);
  CHECK(f.transport->calls() - before == 2);
  CHECK(testing::read_text(f.work / "out" / "responses.jsonl") == responses);

  REQUIRE(cmd_run(f.manifest(false), f.ctx) == kExitOk);
  CHECK(meta(f.work / "out" / "run_meta.json")["new_requests"] == 60);
}

TEST_CASE("an unset API key variable fails before any request") {
  Fixture f("cli-key");
  CHECK_THROWS_AS(cmd_run(f.manifest(false, "HAVEN_TEST_SURELY_UNSET_KEY"), f.ctx), ConfigError);
  CHECK(f.transport->calls() == 0);
}

TEST_CASE("questions without a response are listed as unevaluated") {
  Fixture f("cli-judge");
  const auto m = f.manifest();
  REQUIRE(cmd_run(m, f.ctx) == kExitOk);
  REQUIRE(cmd_judge(m, f.ctx) == kExitOk);
  const auto unevaluated = testing::read_text(m.out / "unevaluated.txt");
  CHECK(unevaluated.find("s10") != std::string::npos);
  CHECK(unevaluated.find("m10-c") != std::string::npos);
  const auto verdicts = testing::read_text(m.out / "verdicts.jsonl");
  REQUIRE(cmd_judge(m, f.ctx) == kExitOk);
  CHECK(testing::read_text(m.out / "verdicts.jsonl") == verdicts);
  REQUIRE(cmd_score(m, f.log) == kExitOk);
  CHECK(testing::read_text(m.out / "scores" / "accuracy_table.csv") ==
        testing::read_text(f.fx / "expected_accuracy_table.csv"));
}

TEST_CASE("a response for an unknown question is an integrity error") {
  Fixture f("cli-unknown");
  const auto m = f.manifest();
  REQUIRE(cmd_run(m, f.ctx) == kExitOk);
  {
    std::ofstream out(m.out / "responses.jsonl", std::ios::app);
    out << R"({"question_id":"ghost","model_name":"scripted-model","sampling":"x","response":"yes"})" << "\n";
  }
  try {
    cmd_judge(m, f.ctx);
    FAIL("expected an integrity error");
  } catch (const std::exception& e) {
    CHECK(exit_code_for(e) == kExitIntegrity);
  }
}

TEST_CASE("scoring without verdicts is an input error") {
  Fixture f("cli-noverdicts");
  CHECK_THROWS_AS(cmd_score(f.manifest(), f.log), Error);
}

TEST_CASE("tdpo and srft commands write traces and summaries") {
  const auto dir = testing::scratch_dir("cli-labs");
  std::ostringstream log;
  TdpoArgs t;
  t.out = dir / "tdpo";
  t.cfg.steps = 5;
  t.synthetic_pairs = 6;
  REQUIRE(cmd_tdpo(t, log) == kExitOk);
  const auto trace = testing::read_text(t.out / "tdpo_trace.csv");
  CHECK(std::count(trace.begin(), trace.end(), '\n') == 7);
  CHECK(meta(t.out / "tdpo_summary.json").contains("final_margin_rate"));

  SrftArgs s;
  s.out = dir / "srft";
  s.cfg.steps = 4;
  s.synthetic_samples = 5;
  REQUIRE(cmd_srft(s, log) == kExitOk);
  const auto strace = testing::read_text(s.out / "srft_trace.csv");
  CHECK(strace.rfind("step,loss\n", 0) == 0);
  CHECK(std::count(strace.begin(), strace.end(), '\n') == 6);
  CHECK(fs::exists(s.out / "srft_summary.json"));
}
