// SPDX-License-Identifier: Apache-2.0
//
// The `haven` subcommands as library calls. Each returns a process exit code
// and writes only under its output directory. Integrity and protocol errors
// propagate as exceptions; exit_code_for() maps them.

#pragma once

#include <cstddef>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "haven/config.hpp"
#include "haven/metrics.hpp"
#include "haven/model_client.hpp"
#include "haven/srft.hpp"
#include "haven/tdpo.hpp"

namespace haven {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;      // bad input, configuration, I/O
inline constexpr int kExitIntegrity = 2;  // integrity or protocol violation

int exit_code_for(const std::exception& e);

struct GlobalOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> out;
  bool resume = false;
  std::optional<std::size_t> concurrency;
  bool cot = false;
};

// Everything a batch evaluation needs, resolved from the config file and
// global flags. Relative paths in the config are taken from its directory.
struct RunManifest {
  std::filesystem::path dataset;
  std::filesystem::path out;
  EndpointConfig model;
  SamplingConfig sampling;
  std::optional<std::filesystem::path> frames_dir;
  std::optional<std::string> frames_command;
  EndpointConfig judge;
  McConsistency mc_rule = McConsistency::AllEqual;
  std::optional<double> model_size_b;
  bool resume = false;
  std::size_t concurrency = 4;

  // Throws ConfigError. Endpoint sections are optional unless `need_model`
  // or `need_judge` is set.
  static RunManifest resolve(const GlobalOptions& g, bool need_model, bool need_judge);
  static RunManifest from_config(const Config& cfg, const std::filesystem::path& base_dir,
                                 const GlobalOptions& g, bool need_model, bool need_judge);

  nlohmann::json echo() const;  // manifest without secrets
};

// Transport used by run/judge/srft; tests swap in a scripted one.
struct CommandContext {
  std::shared_ptr<Transport> transport;
  std::ostream* log = nullptr;
  BackoffPolicy backoff;
  static CommandContext standard(std::ostream& log);
};

struct StatsArgs {
  std::filesystem::path dataset;
  std::filesystem::path out;
  std::optional<std::filesystem::path> reference;
};

// stats.csv and stats.md.
int cmd_stats(const StatsArgs& args, std::ostream& log);

// responses.jsonl, failures.jsonl and the run_meta.json sidecar. Cached
// records live under {out}/cache; without resume the cache is cleared first.
int cmd_run(const RunManifest& m, const CommandContext& ctx);

// verdicts.jsonl, unevaluated.txt and the judge_meta.json sidecar.
int cmd_judge(const RunManifest& m, const CommandContext& ctx);

// CSVs under {out}/scores.
int cmd_score(const RunManifest& m, std::ostream& log);

struct ReportArgs {
  // Further run directories to place on the size/accuracy/bias scatter. Each
  // needs verdicts.jsonl and a run_meta.json naming its model.
  std::vector<std::filesystem::path> scatter_runs;
};

// Scores plus summary.md, and scatter.csv when scatter runs are given.
int cmd_report(const RunManifest& m, const ReportArgs& args, std::ostream& log);

struct TdpoArgs {
  std::optional<std::filesystem::path> pairs;  // absent: synthetic pairs
  std::filesystem::path out;
  TdpoConfig cfg;
  std::size_t synthetic_pairs = 50;
  std::size_t vocab = 32;
  double init_stddev = 0.01;
};

// tdpo_trace.csv and tdpo_summary.json.
int cmd_tdpo(const TdpoArgs& args, std::ostream& log);

struct SrftArgs {
  std::optional<std::filesystem::path> samples;  // absent: synthetic batch
  std::filesystem::path out;
  SrftConfig cfg;
  std::size_t synthetic_samples = 100;
  std::size_t vocab = 32;
  std::uint64_t base_seed = 11;
};

// srft_trace.csv and srft_summary.json.
int cmd_srft(const SrftArgs& args, std::ostream& log);

struct SynthArgs {
  std::filesystem::path images;  // directory of still images
  std::string question;
  std::filesystem::path out;
  EndpointConfig reasoning;
  std::size_t n_frames = 8;
  std::size_t concurrency = 4;
};

// reasoning_samples.jsonl plus static-video frames under {out}/frames.
int cmd_srft_synthesize(const SynthArgs& args, const CommandContext& ctx);

}  // namespace haven
