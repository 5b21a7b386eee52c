// SPDX-License-Identifier: Apache-2.0

#include "haven/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "haven/dataset.hpp"
#include "haven/error.hpp"
#include "haven/frames.hpp"
#include "haven/judge.hpp"
#include "haven/record_cache.hpp"
#include "haven/report.hpp"

namespace haven {

namespace fs = std::filesystem;
using json = nlohmann::json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IntegrityError*>(&e) || dynamic_cast<const ProtocolViolation*>(&e)) {
    return kExitIntegrity;
  }
  return kExitError;
}

namespace {

fs::path resolve_path(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::optional<McConsistency> parse_mc_rule(const std::string& s) {
  if (s == "all_equal") return McConsistency::AllEqual;
  if (s == "all_correct") return McConsistency::AllCorrect;
  return std::nullopt;
}

template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) fn(i);
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(workers, n));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
}

void write_jsonl(const fs::path& path, const std::vector<json>& rows) {
  std::string text;
  for (const auto& r : rows) text += r.dump() + "\n";
  write_text_file(path, text);
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<json> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(text));
    } catch (const json::parse_error& e) {
      throw ParseError(line, path.string() + ": " + e.what());
    }
  }
  return out;
}

std::ostream& log_of(const CommandContext& ctx) { return ctx.log ? *ctx.log : std::clog; }

std::unique_ptr<FrameSource> make_frame_source(const RunManifest& m) {
  if (m.frames_dir) return std::make_unique<DirectoryFrameSource>(*m.frames_dir);
  if (m.frames_command) return std::make_unique<CommandFrameSource>(*m.frames_command, m.out / "frames_tmp");
  throw ConfigError("no frame source: set frames.dir or frames.command");
}

struct Loaded {
  std::vector<Question> questions;
  std::vector<VariantGroup> groups;
};

Loaded load_checked(const fs::path& dataset) {
  Loaded l;
  l.questions = load_dataset(dataset);
  l.groups = validate_groups(l.questions);
  return l;
}

std::vector<Verdict> load_verdicts(const fs::path& out) {
  std::vector<Verdict> v;
  for (const auto& j : read_jsonl(out / "verdicts.jsonl")) {
    try {
      v.push_back(verdict_from_json(j));
    } catch (const json::exception& e) {
      throw FormatError(std::string("verdicts.jsonl: ") + e.what());
    }
  }
  return v;
}

}  // namespace

RunManifest RunManifest::from_config(const Config& cfg, const fs::path& base_dir, const GlobalOptions& g,
                                     bool need_model, bool need_judge) {
  RunManifest m;
  m.dataset = resolve_path(base_dir, cfg.get_string("dataset"));
  if (g.out) {
    m.out = *g.out;
  } else {
    m.out = resolve_path(base_dir, cfg.get_string("out", std::string("haven-out")));
  }
  m.resume = g.resume;

  if (need_model || cfg.contains("model.base_url")) m.model = EndpointConfig::from_config(cfg, "model");
  if (cfg.contains("model.size_b")) m.model_size_b = cfg.get_double("model.size_b");
  if (need_judge || cfg.contains("judge.base_url")) {
    Config jc = cfg;
    if (!cfg.contains("judge.model_name")) jc.set("judge.model_name", std::string(kDefaultJudgeModel));
    m.judge = EndpointConfig::from_config(jc, "judge");
  }

  const auto n_frames = cfg.get_int("sampling.n_frames", 16);
  if (n_frames < 1) throw ConfigError("sampling.n_frames must be >= 1");
  m.sampling.n_frames = static_cast<std::size_t>(n_frames);
  if (cfg.contains("sampling.resize_long_edge_px")) {
    const auto px = cfg.get_int("sampling.resize_long_edge_px");
    if (px < 1) throw ConfigError("sampling.resize_long_edge_px must be >= 1");
    m.sampling.resize_long_edge_px = static_cast<std::size_t>(px);
  }
  const auto mode_name = cfg.get_string("sampling.prompt_mode", std::string("direct"));
  const auto mode = parse_prompt_mode(mode_name);
  if (!mode) throw ConfigError("sampling.prompt_mode must be direct or cot, got '" + mode_name + "'");
  m.sampling.prompt_mode = g.cot ? PromptMode::CoT : *mode;
  m.sampling.validate();

  if (cfg.contains("frames.dir")) m.frames_dir = resolve_path(base_dir, cfg.get_string("frames.dir"));
  if (cfg.contains("frames.command")) m.frames_command = cfg.get_string("frames.command");

  const auto rule_name = cfg.get_string("score.mc_consistency", std::string("all_equal"));
  const auto rule = parse_mc_rule(rule_name);
  if (!rule) throw ConfigError("score.mc_consistency must be all_equal or all_correct");
  m.mc_rule = *rule;

  m.concurrency = g.concurrency ? *g.concurrency : m.model.max_concurrency;
  if (m.concurrency == 0) throw ConfigError("--concurrency must be >= 1");
  return m;
}

RunManifest RunManifest::resolve(const GlobalOptions& g, bool need_model, bool need_judge) {
  if (!g.config) throw ConfigError("--config is required for this command");
  const Config cfg = Config::load(*g.config);
  return from_config(cfg, fs::absolute(*g.config).parent_path(), g, need_model, need_judge);
}

json RunManifest::echo() const {
  const auto ep = [](const EndpointConfig& e) {
    return json{{"base_url", e.base_url},   {"api_key_env", e.api_key_env}, {"model_name", e.model_name},
                {"max_concurrency", e.max_concurrency}, {"timeout_s", e.timeout_s},
                {"max_retries", e.max_retries}};
  };
  json j{{"dataset", dataset.string()},
         {"out", out.string()},
         {"model", ep(model)},
         {"judge", ep(judge)},
         {"sampling",
          {{"n_frames", sampling.n_frames},
           {"resize_long_edge_px", sampling.resize_long_edge_px ? json(*sampling.resize_long_edge_px) : json()},
           {"prompt_mode", to_string(sampling.prompt_mode)},
           {"digest", sampling.digest()}}},
         {"mc_consistency", mc_rule == McConsistency::AllEqual ? "all_equal" : "all_correct"},
         {"resume", resume},
         {"concurrency", concurrency}};
  if (frames_dir) j["frames_dir"] = frames_dir->string();
  if (frames_command) j["frames_command"] = *frames_command;
  return j;
}

CommandContext CommandContext::standard(std::ostream& log) {
  CommandContext c;
  c.transport = std::make_shared<HttpTransport>();
  c.log = &log;
  return c;
}

int cmd_stats(const StatsArgs& args, std::ostream& log) {
  const auto questions = load_dataset(args.dataset);
  const auto stats = compute_stats(questions);
  std::optional<ReferenceTotals> ref;
  std::vector<TotalsDiscrepancy> gaps;
  if (args.reference) {
    ref = load_reference_totals(*args.reference);
    gaps = compare_totals(stats, *ref);
  }
  fs::create_directories(args.out);
  write_text_file(args.out / "stats.csv", stats_csv(stats));
  write_text_file(args.out / "stats.md", stats_markdown(stats, ref ? &*ref : nullptr, gaps));
  log << "stats: " << stats.total << " questions -> " << (args.out / "stats.md").string() << "\n";
  for (const auto& g : gaps) {
    log << "stats: reference mismatch in " << g.what << ": declared " << g.declared << ", cells sum to "
        << g.from_cells << "\n";
  }
  return kExitOk;
}

int cmd_run(const RunManifest& m, const CommandContext& ctx) {
  auto& log = log_of(ctx);
  m.model.validate();
  resolve_api_key(m.model);  // fail before the first request
  const auto data = load_checked(m.dataset);
  const auto frames = make_frame_source(m);

  fs::create_directories(m.out);
  const fs::path cache_dir = m.out / "cache";
  if (!m.resume) fs::remove_all(cache_dir);
  RecordCache cache(cache_dir);
  auto limiter = std::make_shared<ConcurrencyLimiter>(m.concurrency);
  const ChatClient client(m.model, ctx.transport, limiter, ctx.backoff);
  const std::string digest = m.sampling.digest();
  const std::string started = utc_timestamp();

  const std::size_t n = data.questions.size();
  std::vector<std::optional<InferenceRecord>> records(n);
  std::vector<std::string> errors(n);
  std::atomic<std::size_t> new_requests{0};
  parallel_for(n, m.concurrency, [&](std::size_t i) {
    const Question& q = data.questions[i];
    try {
      if (auto hit = cache.find(m.model.model_name, q.id, digest)) {
        records[i] = std::move(hit);
        return;
      }
      const auto images = gather_frames(*frames, q, m.sampling);
      const auto req = build_inference_request(q, images, m.sampling);
      ++new_requests;
      records[i] = cached_query(req, cache, client);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });

  std::vector<json> responses, failures;
  json latencies = json::object();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& q = data.questions[i];
    if (records[i]) {
      responses.push_back({{"question_id", q.id},
                           {"model_name", records[i]->model_name},
                           {"sampling", records[i]->sampling_digest},
                           {"response", records[i]->response_text}});
      latencies[q.id] = {{"latency_ms", records[i]->latency_ms},
                         {"created_at", records[i]->created_at},
                         {"attempts", records[i]->attempts}};
    } else {
      failures.push_back({{"question_id", q.id}, {"error", errors[i]}});
    }
  }
  write_jsonl(m.out / "responses.jsonl", responses);
  write_jsonl(m.out / "failures.jsonl", failures);
  const json meta{{"started_at", started}, {"finished_at", utc_timestamp()},
                  {"records", responses.size()}, {"failures", failures.size()},
                  {"new_requests", new_requests.load()}, {"manifest", m.echo()},
                  {"records_meta", latencies}};
  json meta_out = meta;
  if (m.model_size_b) meta_out["model_size_b"] = *m.model_size_b;
  write_text_file(m.out / "run_meta.json", meta_out.dump(2) + "\n");
  log << "run: " << responses.size() << " records, " << failures.size() << " failures, "
      << new_requests.load() << " new requests\n";
  for (const auto& f : failures) {
    log << "run: failed " << f["question_id"].get<std::string>() << ": " << f["error"].get<std::string>() << "\n";
  }
  return kExitOk;
}

int cmd_judge(const RunManifest& m, const CommandContext& ctx) {
  auto& log = log_of(ctx);
  m.judge.validate();
  resolve_api_key(m.judge);
  const auto data = load_checked(m.dataset);
  const auto index = index_questions(data.questions);

  std::map<std::string, std::string> responses;
  for (const auto& j : read_jsonl(m.out / "responses.jsonl")) {
    const auto id = j.at("question_id").get<std::string>();
    if (!index.count(id)) throw IntegrityError("response for unknown question '" + id + "'");
    if (!responses.emplace(id, j.at("response").get<std::string>()).second) {
      throw IntegrityError("duplicate response for question '" + id + "'");
    }
  }

  auto limiter = std::make_shared<ConcurrencyLimiter>(m.concurrency);
  const Judge judge(ChatClient(m.judge, ctx.transport, limiter, ctx.backoff));
  const std::string started = utc_timestamp();

  const std::size_t n = data.questions.size();
  std::vector<std::optional<Verdict>> verdicts(n);
  std::vector<std::string> errors(n);
  parallel_for(n, m.concurrency, [&](std::size_t i) {
    const Question& q = data.questions[i];
    const auto r = responses.find(q.id);
    if (r == responses.end()) return;
    try {
      verdicts[i] = judge.evaluate(q, r->second, m.sampling.prompt_mode);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });

  std::vector<json> rows;
  std::string unevaluated;
  std::size_t n_unevaluated = 0;
  json failures = json::object();
  for (std::size_t i = 0; i < n; ++i) {
    if (verdicts[i]) {
      rows.push_back(to_json(*verdicts[i]));
    } else {
      unevaluated += data.questions[i].id + "\n";
      ++n_unevaluated;
      if (!errors[i].empty()) failures[data.questions[i].id] = errors[i];
    }
  }
  write_jsonl(m.out / "verdicts.jsonl", rows);
  write_text_file(m.out / "unevaluated.txt", unevaluated);
  const json meta{{"started_at", started}, {"finished_at", utc_timestamp()}, {"verdicts", rows.size()},
                  {"unevaluated", n_unevaluated}, {"judge_errors", failures}, {"manifest", m.echo()}};
  write_text_file(m.out / "judge_meta.json", meta.dump(2) + "\n");
  log << "judge: " << rows.size() << " verdicts, " << n_unevaluated << " unevaluated\n";
  if (n_unevaluated > 0) {
    std::istringstream ids(unevaluated);
    for (std::string id; std::getline(ids, id);) log << "judge: unevaluated " << id << "\n";
  }
  return kExitOk;
}

namespace {

ScoreBundle score_run(const RunManifest& m, const fs::path& run_dir, const std::string& model_name) {
  const auto data = load_checked(m.dataset);
  const auto verdicts = load_verdicts(run_dir);
  ScoreBundle b = compute_scores(data.questions, data.groups, verdicts, default_tokenizer(), m.mc_rule);
  b.model_name = model_name;
  b.judge_model = verdicts.empty() ? m.judge.model_name : verdicts.front().judge_model;
  b.prompt_mode = std::string(to_string(m.sampling.prompt_mode));
  b.model_size_b = m.model_size_b;
  return b;
}

std::string run_model_name(const RunManifest& m) {
  return m.model.model_name.empty() ? std::string("model") : m.model.model_name;
}

}  // namespace

int cmd_score(const RunManifest& m, std::ostream& log) {
  const auto bundle = score_run(m, m.out, run_model_name(m));
  const auto files = write_score_files(m.out / "scores", bundle);
  log << "score: wrote " << files.size() << " files under " << (m.out / "scores").string() << "\n";
  if (!bundle.unevaluated.empty()) log << "score: " << bundle.unevaluated.size() << " questions without a verdict\n";
  return kExitOk;
}

int cmd_report(const RunManifest& m, const ReportArgs& args, std::ostream& log) {
  const auto bundle = score_run(m, m.out, run_model_name(m));
  write_score_files(m.out / "scores", bundle);
  const auto summary = write_summary(m.out, bundle);
  log << "report: " << summary.string() << "\n";
  if (!args.scatter_runs.empty()) {
    std::vector<ScatterRow> rows;
    rows.push_back({bundle.model_name, bundle.model_size_b, bundle.accuracy.total_pct, bundle.bias.pooled_pct});
    for (const auto& dir : args.scatter_runs) {
      std::ifstream in(dir / "run_meta.json");
      if (!in) throw Error("scatter run " + dir.string() + " has no run_meta.json");
      const json meta = json::parse(in);
      const auto& man = meta.at("manifest");
      const std::string name = man.at("model").at("model_name").get<std::string>();
      auto b = score_run(m, dir, name);
      std::optional<double> size;
      if (meta.contains("model_size_b")) size = meta["model_size_b"].get<double>();
      rows.push_back({name, size, b.accuracy.total_pct, b.bias.pooled_pct});
    }
    write_text_file(m.out / "scatter.csv", scatter_csv(rows));
    log << "report: scatter over " << rows.size() << " runs\n";
  }
  return kExitOk;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

int cmd_tdpo(const TdpoArgs& args, std::ostream& log) {
  args.cfg.validate();
  const FeatureMap fm;
  const auto pairs = args.pairs ? load_preference_pairs(*args.pairs)
                                : make_synthetic_pairs(args.synthetic_pairs, args.vocab, fm.video_dim, args.cfg.seed);
  if (pairs.empty()) throw DomainError("no preference pairs");
  const auto initial = ToyPolicy::random(fm, args.vocab, args.init_stddev, args.cfg.seed);
  const auto result = train_tdpo(pairs, initial, args.cfg);
  const double gain = corrected_token_gain(pairs, initial, result.policy);

  fs::create_directories(args.out);
  write_text_file(args.out / "tdpo_trace.csv", tdpo_trace_csv(result.trace));
  const auto& last = result.trace.back();
  const json summary{{"pairs", pairs.size()},
                     {"gamma", args.cfg.gamma},
                     {"beta", args.cfg.beta},
                     {"learning_rate", args.cfg.learning_rate},
                     {"steps", args.cfg.steps},
                     {"seed", args.cfg.seed},
                     {"score", to_string(args.cfg.score)},
                     {"initial_loss", fixed(result.trace.front().mean_loss, 9)},
                     {"final_loss", fixed(last.mean_loss, 9)},
                     {"final_margin_rate", fixed(last.margin_rate, 4)},
                     {"corrected_token_gain", fixed(gain, 9)}};
  write_text_file(args.out / "tdpo_summary.json", summary.dump(2) + "\n");
  log << "tdpo: loss " << fixed(result.trace.front().mean_loss, 6) << " -> " << fixed(last.mean_loss, 6)
      << ", margin rate " << fixed(last.margin_rate, 4) << "\n";
  return kExitOk;
}

int cmd_srft(const SrftArgs& args, std::ostream& log) {
  const FeatureMap fm;
  std::vector<TokenizedSample> batch;
  if (args.samples) {
    for (const auto& s : load_reasoning_samples(*args.samples)) batch.push_back(tokenize_sample(s, fm, args.vocab));
  } else {
    batch = make_synthetic_reasoning_batch(args.synthetic_samples, fm, args.vocab, args.cfg.seed);
  }
  if (batch.empty()) throw DomainError("no reasoning samples");
  const Matrix w = make_base_weights(fm, args.vocab, args.base_seed);
  const auto result = train_srft(batch, w, fm, args.cfg);

  fs::create_directories(args.out);
  write_text_file(args.out / "srft_trace.csv", srft_trace_csv(result.trace));
  const json summary{{"samples", batch.size()},
                     {"alpha", args.cfg.alpha},
                     {"rank", args.cfg.rank},
                     {"learning_rate", args.cfg.learning_rate},
                     {"steps", args.cfg.steps},
                     {"seed", args.cfg.seed},
                     {"initial_loss", fixed(result.trace.front().loss, 9)},
                     {"final_loss", fixed(result.trace.back().loss, 9)},
                     {"delta_rank", result.delta_rank}};
  write_text_file(args.out / "srft_summary.json", summary.dump(2) + "\n");
  log << "srft: loss " << fixed(result.trace.front().loss, 6) << " -> " << fixed(result.trace.back().loss, 6)
      << ", rank(BA) = " << result.delta_rank << "\n";
  return kExitOk;
}

int cmd_srft_synthesize(const SynthArgs& args, const CommandContext& ctx) {
  auto& log = log_of(ctx);
  args.reasoning.validate();
  resolve_api_key(args.reasoning);
  if (args.n_frames == 0) throw ConfigError("--frames must be >= 1");

  std::vector<fs::path> images;
  for (const auto& e : fs::directory_iterator(args.images)) {
    if (e.is_regular_file()) images.push_back(e.path());
  }
  std::sort(images.begin(), images.end());
  std::vector<StaticVideoRequest> reqs;
  for (const auto& p : images) {
    reqs.push_back({p.stem().string(), {read_file_bytes(p), mime_for_path(p.string())}, args.question});
  }

  auto limiter = std::make_shared<ConcurrencyLimiter>(args.concurrency);
  const ChatClient client(args.reasoning, ctx.transport, limiter, ctx.backoff);
  fs::create_directories(args.out);
  const auto result = synthesize_static_video_samples(reqs, client, args.n_frames, args.out / "frames", args.concurrency);
  save_reasoning_samples(args.out / "reasoning_samples.jsonl", result.samples);
  log << "srft synthesize: " << result.samples.size() << " samples, " << result.rejected.size()
      << " rejected, " << result.failed.size() << " failed\n";
  for (const auto& id : result.rejected) log << "srft synthesize: rejected " << id << " (empty response)\n";
  for (const auto& [id, err] : result.failed) log << "srft synthesize: failed " << id << ": " << err << "\n";
  return kExitOk;
}

}  // namespace haven
