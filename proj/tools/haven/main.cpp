// SPDX-License-Identifier: Apache-2.0
//
// haven: batch evaluation harness and toy training lab.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "haven/commands.hpp"
#include "haven/error.hpp"

namespace fs = std::filesystem;

namespace {

struct Cli {
  std::string config;
  std::string out;
  bool resume = false;
  std::size_t concurrency = 0;
  bool cot = false;

  haven::GlobalOptions globals() const {
    haven::GlobalOptions g;
    if (!config.empty()) g.config = config;
    if (!out.empty()) g.out = out;
    g.resume = resume;
    if (concurrency > 0) g.concurrency = concurrency;
    g.cot = cot;
    return g;
  }

  // --out, else the config's `out`, else ./haven-out.
  fs::path out_dir() const {
    if (!out.empty()) return out;
    if (!config.empty()) {
      const auto cfg = haven::Config::load(config);
      if (cfg.contains("out")) {
        fs::path p = cfg.get_string("out");
        return p.is_absolute() ? p : fs::absolute(config).parent_path() / p;
      }
    }
    return "haven-out";
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hallucination benchmark harness and toy preference/reasoning lab"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", "haven 0.1.0");

  Cli cli;
  app.add_option("--config", cli.config, "Manifest file (TOML-style)")->check(CLI::ExistingFile);
  app.add_option("--out", cli.out, "Output directory");
  app.add_flag("--resume", cli.resume, "Reuse cached model responses");
  app.add_option("--concurrency", cli.concurrency, "Max in-flight requests")->check(CLI::PositiveNumber);
  app.add_flag("--cot", cli.cot, "Chain-of-thought prompting and extraction");

  auto* stats = app.add_subcommand("stats", "Dataset statistics");
  std::string stats_dataset, stats_reference;
  stats->add_option("--dataset", stats_dataset, "Question JSONL (defaults to the config's dataset)");
  stats->add_option("--reference", stats_reference, "Published totals JSON to cross-check")
      ->check(CLI::ExistingFile);

  auto* run = app.add_subcommand("run", "Query the model under test");
  auto* judge = app.add_subcommand("judge", "Grade model responses");
  auto* score = app.add_subcommand("score", "Accuracy, bias, bucket and heatmap CSVs");
  auto* report = app.add_subcommand("report", "Scores plus Markdown summary");
  std::vector<std::string> scatter;
  report->add_option("--scatter", scatter, "Other run directories for the size scatter");

  auto* tdpo = app.add_subcommand("tdpo", "Segment-weighted preference training on the toy policy");
  haven::TdpoArgs targs;
  std::string pairs_path, score_mode = "weighted";
  tdpo->add_option("--pairs", pairs_path, "Preference JSONL (synthetic pairs when omitted)")
      ->check(CLI::ExistingFile);
  tdpo->add_option("--gamma", targs.cfg.gamma, "Weight of corrected segments")->capture_default_str();
  tdpo->add_option("--beta", targs.cfg.beta, "Preference temperature")->capture_default_str();
  tdpo->add_option("--lr", targs.cfg.learning_rate, "Learning rate")->capture_default_str();
  tdpo->add_option("--steps", targs.cfg.steps, "Gradient steps")->capture_default_str();
  tdpo->add_option("--seed", targs.cfg.seed, "Seed")->capture_default_str();
  tdpo->add_option("--score", score_mode, "standard|weighted")
      ->check(CLI::IsMember({"standard", "weighted"}))
      ->capture_default_str();
  tdpo->add_flag("--normalize-standard", targs.cfg.normalize_standard, "Length-normalise the standard score");
  tdpo->add_option("--init-stddev", targs.init_stddev, "Initial policy weight scale")->capture_default_str();
  tdpo->add_option("--synthetic-pairs", targs.synthetic_pairs, "Synthetic pair count")->capture_default_str();

  auto* srft = app.add_subcommand("srft", "Low-rank reasoning fine-tuning on the toy policy");
  haven::SrftArgs sargs;
  std::string samples_path, synth_images, synth_question = "Describe the image, then answer: what is shown?";
  std::size_t synth_frames = 8;
  srft->add_option("--samples", samples_path, "Reasoning sample JSONL (synthetic batch when omitted)")
      ->check(CLI::ExistingFile);
  srft->add_option("--alpha", sargs.cfg.alpha, "Adapter scale")->capture_default_str();
  srft->add_option("--rank", sargs.cfg.rank, "Adapter rank")->capture_default_str();
  srft->add_option("--lr", sargs.cfg.learning_rate, "Learning rate")->capture_default_str();
  srft->add_option("--steps", sargs.cfg.steps, "Gradient steps")->capture_default_str();
  srft->add_option("--seed", sargs.cfg.seed, "Seed")->capture_default_str();
  srft->add_option("--synthesize", synth_images,
                   "Instead of training, build static-video samples from a directory of images "
                   "using the [reasoning] endpoint")
      ->check(CLI::ExistingDirectory);
  srft->add_option("--question", synth_question, "Question paired with every image");
  srft->add_option("--frames", synth_frames, "Copies of each image per static video")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version exit 0; any other usage error is an input error.
    const int code = app.exit(e);
    return code == 0 ? haven::kExitOk : haven::kExitError;
  }

  try {
    const auto g = cli.globals();
    if (stats->parsed()) {
      haven::StatsArgs a;
      if (!stats_dataset.empty()) {
        a.dataset = stats_dataset;
      } else {
        a.dataset = haven::RunManifest::resolve(g, false, false).dataset;
      }
      a.out = cli.out_dir();
      if (!stats_reference.empty()) a.reference = stats_reference;
      return haven::cmd_stats(a, std::cerr);
    }
    if (run->parsed()) {
      return haven::cmd_run(haven::RunManifest::resolve(g, true, false), haven::CommandContext::standard(std::cerr));
    }
    if (judge->parsed()) {
      return haven::cmd_judge(haven::RunManifest::resolve(g, false, true),
                              haven::CommandContext::standard(std::cerr));
    }
    if (score->parsed()) return haven::cmd_score(haven::RunManifest::resolve(g, false, false), std::cerr);
    if (report->parsed()) {
      haven::ReportArgs r;
      for (const auto& s : scatter) r.scatter_runs.emplace_back(s);
      return haven::cmd_report(haven::RunManifest::resolve(g, false, false), r, std::cerr);
    }
    if (tdpo->parsed()) {
      targs.cfg.score = *haven::parse_score_mode(score_mode);
      if (!pairs_path.empty()) targs.pairs = pairs_path;
      targs.out = cli.out_dir();
      return haven::cmd_tdpo(targs, std::cerr);
    }
    if (srft->parsed()) {
      if (!synth_images.empty()) {
        if (cli.config.empty()) throw haven::ConfigError("--synthesize needs --config with a [reasoning] section");
        haven::SynthArgs s;
        s.images = synth_images;
        s.question = synth_question;
        s.out = cli.out_dir();
        s.reasoning = haven::EndpointConfig::from_config(haven::Config::load(cli.config), "reasoning");
        s.n_frames = synth_frames;
        s.concurrency = cli.concurrency > 0 ? cli.concurrency : s.reasoning.max_concurrency;
        return haven::cmd_srft_synthesize(s, haven::CommandContext::standard(std::cerr));
      }
      if (!samples_path.empty()) sargs.samples = samples_path;
      sargs.out = cli.out_dir();
      return haven::cmd_srft(sargs, std::cerr);
    }
  } catch (const std::exception& e) {
    std::cerr << "haven: error: " << e.what() << "\n";
    return haven::exit_code_for(e);
  }
  return haven::kExitOk;
}
