// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "generators.hpp"
#include "haven/commands.hpp"
#include "haven/error.hpp"
#include "haven/judge.hpp"
#include "haven/mock_server.hpp"
#include "haven/report.hpp"
#include "haven/srft.hpp"
#include "haven/tdpo.hpp"
#include "oracles.hpp"

using namespace haven;
using namespace haven::testing;
namespace fs = std::filesystem;

namespace {

// Thrown by check() with a description of the first violated condition.
struct Failed {
  std::string what;
};

void check(bool ok, const std::string& what) {
  if (!ok) throw Failed{what};
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 3) {
  std::ostringstream os;
  os.precision(digits);
  os << std::fixed << v;
  return os.str();
}

bool same_pct(std::optional<double> a, std::optional<double> b) {
  return a.has_value() == b.has_value() && (!a || *a == *b);
}

// 1 ------------------------------------------------------------------------
std::string metric_oracle() {
  const auto t0 = Clock::now();
  constexpr int kSets = 1000;
  for (int trial = 0; trial < kSets; ++trial) {
    std::mt19937_64 rng(1000 + trial);
    const auto qs = random_dataset(rng, 1 + trial % 40);
    const double p_missing = (trial % 5) * 0.05;
    const auto vs = random_verdicts(qs, rng, p_missing, (trial % 3) * 0.05);
    const auto idx = index_questions(qs);
    const auto groups = validate_groups(qs);
    const std::string tag = "set " + std::to_string(trial) + ": ";

    const auto acc = accuracy_table(vs, idx);
    const auto oa = oracle_accuracy(qs, vs);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t a = 0; a < 3; ++a) {
        const auto& cell = acc.cells[c][a];
        check(cell.n == oa.cells[c][a].n && cell.n_correct == oa.cells[c][a].correct &&
                  same_pct(cell.accuracy_pct, oracle_pct(oa.cells[c][a].correct, oa.cells[c][a].n)),
              tag + "accuracy cell mismatch");
      }
    }
    check(acc.n == oa.total.n && acc.n_correct == oa.total.correct && acc.n_unjudgeable == oa.unjudgeable &&
              same_pct(acc.total_pct, oracle_pct(oa.total.correct, oa.total.n)),
          tag + "accuracy total mismatch");

    const auto bb = bias_binary(groups, vs);
    const auto ob = oracle_bias(qs, vs, QFormat::Binary);
    check(bb.total == ob.groups && bb.biased == ob.biased && bb.excluded == ob.excluded &&
              same_pct(bb.pct, oracle_pct(ob.biased, ob.groups)),
          tag + "binary bias mismatch");
    for (bool strict : {false, true}) {
      const auto bm = bias_mc(groups, vs, strict ? McConsistency::AllCorrect : McConsistency::AllEqual);
      const auto om = oracle_bias(qs, vs, QFormat::MultipleChoice, strict);
      check(bm.total == om.groups && bm.biased == om.biased && bm.excluded == om.excluded &&
                same_pct(bm.pct, oracle_pct(om.biased, om.groups)),
            tag + "multiple-choice bias mismatch");
      check(same_pct(pooled_bias(bb, bm), oracle_pct(ob.biased + om.biased, ob.groups + om.groups)),
            tag + "pooled bias mismatch");
    }

    for (BucketAxis axis : {BucketAxis::Duration, BucketAxis::Frames, BucketAxis::QLen}) {
      const auto edges = default_edges(axis);
      const auto rows = bucket_series(vs, idx, axis, edges);
      const auto expect = oracle_buckets(qs, vs, axis, edges);
      check(rows.size() == expect.size(), tag + "bucket count mismatch on " + std::string(to_string(axis)));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        check(rows[i].bucket == expect[i].first && rows[i].n == expect[i].second.n &&
                  rows[i].n_correct == expect[i].second.correct &&
                  rows[i].accuracy_pct == *oracle_pct(expect[i].second.correct, expect[i].second.n),
              tag + "bucket row mismatch on " + std::string(to_string(axis)));
      }
    }

    for (const auto& [r, c] : default_heatmap_dims()) {
      const auto h = pair_heatmap(vs, idx, r, c);
      const auto oh = oracle_heatmap(qs, vs, r, c);
      for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
          check(h.n[i][j] == oh[i][j].n && h.n_correct[i][j] == oh[i][j].correct &&
                    same_pct(h.pct(i, j), oracle_pct(oh[i][j].correct, oh[i][j].n)),
                tag + "heatmap mismatch");
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  check(secs < 10.0, "runtime " + fmt(secs) + " s exceeds 10 s");
  return std::to_string(kSets) + " random sets, " + fmt(secs) + " s";
}

// 2 ------------------------------------------------------------------------
std::string weighted_identities() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> logp(-12.0, 0.0), gamma(0.0, 20.0);
  std::uniform_int_distribution<std::size_t> len(1, 64);
  std::bernoulli_distribution coin(0.5);
  constexpr int kSequences = 100000;
  double worst = 0.0;
  std::size_t degenerate = 0;
  for (int n = 0; n < kSequences; ++n) {
    const std::size_t L = len(rng);
    std::vector<double> lp(L);
    std::vector<Segment> labels(L), original(L, Segment::Original);
    double sum = 0.0;
    for (std::size_t i = 0; i < L; ++i) {
      lp[i] = logp(rng);
      labels[i] = coin(rng) ? Segment::Corrected : Segment::Original;
      sum += lp[i];
    }
    const double mean = sum / static_cast<double>(L);

    worst = std::max(worst, std::abs(weighted_logprob(lp, labels, 1.0) - mean));
    const double g = gamma(rng);
    check(weighted_logprob(lp, original, g) == mean, "all-Original score differs from the mean");

    // Degenerate exactly when |y_o| + gamma |y_h| == 0.
    std::vector<Segment> probe = labels;
    if (n % 4 == 0) probe.assign(L, Segment::Corrected);
    const double gp = n % 2 == 0 ? 0.0 : g;
    std::size_t n_o = 0;
    for (auto s : probe) n_o += s == Segment::Original ? 1 : 0;
    const double denom = static_cast<double>(n_o) + gp * static_cast<double>(L - n_o);
    bool threw = false;
    try {
      weighted_logprob(lp, probe, gp);
    } catch (const DegenerateWeightError&) {
      threw = true;
    }
    check(threw == (denom == 0.0), "degenerate-weight error raised for the wrong case");
    degenerate += threw ? 1 : 0;
  }
  check(worst <= 1e-12, "gamma=1 deviation " + std::to_string(worst));
  check(degenerate > 0, "no degenerate case exercised");
  return std::to_string(kSequences) + " sequences, max |gamma=1 - mean| = " + fmt(worst * 1e15, 2) +
         "e-15, " + std::to_string(degenerate) + " degenerate cases";
}

// 3 ------------------------------------------------------------------------
std::string dpo_fixed_point() {
  std::mt19937_64 rng(3);
  const FeatureMap fm;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto pair = random_pair(rng, 32, fm.video_dim);
    const auto policy = ToyPolicy::random(fm, 32, 0.5, 300 + i);
    for (ScoreMode mode : {ScoreMode::Standard, ScoreMode::Weighted}) {
      for (double beta : {0.05, 0.1, 1.0}) {
        TdpoConfig cfg;
        cfg.score = mode;
        cfg.beta = beta;
        worst = std::max(worst, std::abs(dpo_loss(pair, policy, policy, cfg) - std::numbers::ln2));
      }
    }
  }
  check(worst <= 1e-9, "max deviation from ln 2: " + std::to_string(worst));
  return "100 pairs x 2 modes x 3 betas, max |loss - ln 2| = " + std::to_string(worst);
}

// 4 ------------------------------------------------------------------------
std::string gradient_oracles() {
  const auto t0 = Clock::now();
  constexpr int kInstances = 100;
  constexpr double kTol = 1e-4;
  const FeatureMap fm;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> gamma(0.2, 6.0);
  std::uniform_real_distribution<double> beta(0.05, 2.0);
  double worst_std = 0.0, worst_w = 0.0, worst_srft = 0.0;

  for (int i = 0; i < kInstances; ++i) {
    const auto pair = random_pair(rng, 32, fm.video_dim);
    const auto reference = ToyPolicy::random(fm, 32, 0.3, 4000 + i);
    for (ScoreMode mode : {ScoreMode::Standard, ScoreMode::Weighted}) {
      ToyPolicy policy = ToyPolicy::random(fm, 32, 0.3, 5000 + i);
      TdpoConfig cfg;
      cfg.score = mode;
      cfg.gamma = gamma(rng);
      cfg.beta = beta(rng);
      const auto analytic = loss_gradient(pair, policy, reference, cfg).grad;
      const auto numeric =
          finite_difference([&] { return dpo_loss(pair, policy, reference, cfg); }, policy.weights);
      const double err = relative_error(analytic, numeric);
      auto& worst = mode == ScoreMode::Standard ? worst_std : worst_w;
      worst = std::max(worst, err);
      check(err < kTol, "dpo gradient instance " + std::to_string(i) + " rel err " + std::to_string(err));
    }
  }

  for (int i = 0; i < kInstances; ++i) {
    std::vector<TokenizedSample> batch = make_synthetic_reasoning_batch(3, fm, 32, 6000 + i);
    for (auto& s : batch) s.target.resize(std::min<std::size_t>(s.target.size(), 6));
    const Matrix w = make_base_weights(fm, 32, 7000 + i);
    const Matrix w_copy = w;
    std::mt19937_64 arng(8000 + i);
    LoraAdapter ad;
    ad.rank = 1 + i % 4;
    ad.alpha = 0.5 + (i % 3);
    ad.A = Matrix::random_normal(ad.rank, 32, 0.3, arng);
    ad.B = Matrix::random_normal(fm.dim(), ad.rank, 0.3, arng);
    const auto g = srft_gradient(batch, w, ad, fm);
    const auto num_a = finite_difference([&] { return srft_loss(batch, w, ad, fm); }, ad.A);
    const auto num_b = finite_difference([&] { return srft_loss(batch, w, ad, fm); }, ad.B);
    const double err = std::max(relative_error(g.dA, num_a), relative_error(g.dB, num_b));
    worst_srft = std::max(worst_srft, err);
    check(err < kTol, "srft gradient instance " + std::to_string(i) + " rel err " + std::to_string(err));
    check(w == w_copy, "srft gradient touched the base weights");
  }
  const double secs = seconds_since(t0);
  check(secs < 30.0, "runtime " + fmt(secs) + " s exceeds 30 s");
  std::ostringstream os;
  os << kInstances << " instances each, max rel err standard " << worst_std << ", weighted " << worst_w
     << ", srft " << worst_srft << ", " << fmt(secs) << " s";
  return os.str();
}

// 5 ------------------------------------------------------------------------
nlohmann::json load_json(const fs::path& p) {
  std::ifstream in(p);
  check(static_cast<bool>(in), "missing fixture " + p.string());
  return nlohmann::json::parse(in);
}

bool near(double a, double b, double rel = 1e-9) {
  return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

std::string toy_tdpo() {
  const FeatureMap fm;
  const auto pairs = make_synthetic_pairs(50, 32, fm.video_dim, 7);
  const auto initial = ToyPolicy::random(fm, 32, 0.01, 7);
  TdpoConfig cfg;
  cfg.seed = 7;
  cfg.steps = 200;
  cfg.learning_rate = 0.1;
  cfg.gamma = 5.0;
  const auto run5 = train_tdpo(pairs, initial, cfg);
  cfg.gamma = 1.0;
  const auto run1 = train_tdpo(pairs, initial, cfg);
  const double gain5 = corrected_token_gain(pairs, initial, run5.policy);
  const double gain1 = corrected_token_gain(pairs, initial, run1.policy);
  const double margin = run5.trace.back().margin_rate;

  check(margin >= 0.9, "final margin rate " + fmt(margin, 4) + " < 0.90");
  check(gain5 > gain1, "corrected-token gain gamma=5 (" + fmt(gain5, 6) + ") <= gamma=1 (" + fmt(gain1, 6) + ")");
  check(run5.trace.back().mean_loss < run5.trace.front().mean_loss, "mean loss did not decrease");

  const auto frozen = load_json(fixture_dir() / "regression" / "tdpo.json");
  check(near(margin, frozen.at("final_margin_rate").get<double>()), "margin rate drifted from the frozen fixture");
  check(near(run5.trace.back().mean_loss, frozen.at("final_loss").get<double>()), "final loss drifted");
  check(near(gain5, frozen.at("gain_gamma5").get<double>()), "gamma=5 gain drifted");
  check(near(gain1, frozen.at("gain_gamma1").get<double>()), "gamma=1 gain drifted");
  std::ostringstream os;
  os.precision(12);
  os << "margin rate " << margin << ", final loss " << run5.trace.back().mean_loss << ", gain gamma=5 "
     << gain5 << " > gamma=1 " << gain1;
  return os.str();
}

// 6 ------------------------------------------------------------------------
std::string srft_contracts() {
  const FeatureMap fm;
  struct Run {
    std::size_t samples, rank;
    double alpha;
    int steps;
  };
  const std::vector<Run> runs = {{100, 2, 1.0, 300}, {40, 4, 1.0, 60}, {40, 1, 2.0, 60}, {40, 8, 0.5, 30}};
  double worst_tail = 0.0;
  std::string standard_detail;
  for (const auto& r : runs) {
    const auto batch = make_synthetic_reasoning_batch(r.samples, fm, 32, 7);
    const Matrix w = make_base_weights(fm, 32, 11);
    std::vector<unsigned char> before(w.size() * sizeof(double));
    std::memcpy(before.data(), w.data().data(), before.size());
    SrftConfig cfg;
    cfg.rank = r.rank;
    cfg.alpha = r.alpha;
    cfg.steps = r.steps;
    const auto res = train_srft(batch, w, fm, cfg);
    check(std::memcmp(before.data(), w.data().data(), before.size()) == 0, "base W changed");
    const auto sv = singular_values(res.adapter.delta());
    for (Eigen::Index i = static_cast<Eigen::Index>(r.rank); i < sv.size(); ++i) {
      worst_tail = std::max(worst_tail, sv(i));
    }
    check(worst_tail < 1e-9, "singular value beyond rank " + std::to_string(r.rank) + ": " + std::to_string(worst_tail));
    check(res.trace.back().loss < res.trace.front().loss, "final loss not below initial loss");
    if (r.samples == 100) {
      for (int s = 1; s <= 10; ++s) {
        check(res.trace[s].loss < res.trace[s - 1].loss, "loss did not strictly decrease at step " + std::to_string(s));
      }
      const auto frozen = load_json(fixture_dir() / "regression" / "srft.json");
      check(near(res.trace.back().loss, frozen.at("final_loss").get<double>()), "final loss drifted from fixture");
      std::ostringstream os;
      os.precision(12);
      os << "standard batch loss " << res.trace.front().loss << " -> " << res.trace.back().loss;
      standard_detail = os.str();
    }
  }
  std::ostringstream os;
  os << runs.size() << " runs, W bit-identical, max tail singular value " << worst_tail << ", " << standard_detail;
  return os.str();
}

// 7 ------------------------------------------------------------------------
std::string end_to_end() {
  const auto t0 = Clock::now();
  const fs::path fx = fixture_dir() / "e2e";
  const fs::path work = scratch_dir("acceptance-e2e");
  const auto questions = load_dataset(fx / "dataset.jsonl");
  check(questions.size() == 60, "fixture dataset does not have 60 questions");
  write_dummy_frames(questions, work / "frames", 6);

  MockServer server(MockScript::load(fx / "script.json"));
  server.start();

  std::vector<std::string> names = {"accuracy_table.csv", "bias_report.csv", "buckets_duration.csv",
                                    "buckets_frames.csv",  "buckets_qlen.csv"};
  std::vector<std::vector<std::string>> outputs;
  for (int pass = 0; pass < 2; ++pass) {
    Config cfg;
    cfg.set("dataset", (fx / "dataset.jsonl").string());
    cfg.set("model.base_url", server.base_url());
    cfg.set("model.model_name", std::string("scripted-model"));
    cfg.set("model.max_retries", 0LL);
    cfg.set("judge.base_url", server.base_url());
    cfg.set("judge.model_name", std::string("scripted-judge"));
    cfg.set("sampling.n_frames", 4LL);
    cfg.set("frames.dir", (work / "frames").string());
    GlobalOptions g;
    g.out = work / ("run" + std::to_string(pass));
    const auto m = RunManifest::from_config(cfg, work, g, true, true);
    std::ostringstream log;
    auto ctx = CommandContext::standard(log);
    check(cmd_run(m, ctx) == kExitOk, "run failed");
    check(cmd_judge(m, ctx) == kExitOk, "judge failed");
    check(cmd_score(m, log) == kExitOk, "score failed");
    std::vector<std::string> files;
    for (const auto& n : names) files.push_back(read_text(m.out / "scores" / n));
    for (const auto& n : {"responses.jsonl", "verdicts.jsonl", "unevaluated.txt"}) files.push_back(read_text(m.out / n));
    outputs.push_back(std::move(files));
  }
  server.stop();

  check(outputs[0][0] == read_text(fx / "expected_accuracy_table.csv"), "accuracy table differs from the oracle");
  check(outputs[0][1] == read_text(fx / "expected_bias_report.csv"), "bias report differs from the oracle");
  check(outputs[0] == outputs[1], "second pass is not byte-identical");
  const double secs = seconds_since(t0);
  check(secs < 5.0, "runtime " + fmt(secs) + " s exceeds 5 s");
  return "60 questions, " + std::to_string(server.requests()) + " requests over loopback HTTP, 2 passes identical, " +
         fmt(secs) + " s";
}

// 8 ------------------------------------------------------------------------
std::string prompt_fidelity() {
  for (TemplateId id : kTemplateIds) {
    const auto path = fixture_dir() / "prompts" / (std::string(template_name(id)) + ".txt");
    check(fs::exists(path), "missing golden file " + path.string());
    check(read_text(path) == template_body(id), "template " + std::string(template_name(id)) + " differs from golden file");
  }
  // Exhaustive over short strings from an alphabet of digits, whitespace and
  // look-alikes: accepted iff trimming leaves exactly "1" or "0".
  const std::string alphabet = std::string("01 \t\n\rx.2") + '\0';
  std::size_t probed = 0;
  std::function<void(std::string)> walk = [&](std::string s) {
    ++probed;
    const auto b = s.find_first_not_of(" \t\r\n");
    const auto e = s.find_last_not_of(" \t\r\n");
    const std::string core = b == std::string::npos ? "" : s.substr(b, e - b + 1);
    const bool expect = core == "1" || core == "0";
    bool accepted = false;
    bool value = false;
    try {
      value = parse_verdict(s);
      accepted = true;
    } catch (const FormatError&) {
    }
    check(accepted == expect, "parse_verdict wrong on \"" + s + "\"");
    if (accepted) check(value == (core == "1"), "parse_verdict value wrong on \"" + s + "\"");
    if (s.size() < 4) {
      for (char c : alphabet) walk(s + c);
    }
  };
  walk("");
  for (const char* s : {"yes", "10", "01", "1.0", "true", "１", "1\n0"}) {
    bool threw = false;
    try {
      parse_verdict(s);
    } catch (const FormatError&) {
      threw = true;
    }
    check(threw, std::string("parse_verdict accepted \"") + s + "\"");
  }
  return std::to_string(kTemplateIds.size()) + " golden files identical, " + std::to_string(probed) +
         " verdict strings probed";
}

// 9 ------------------------------------------------------------------------
std::string stats_fidelity() {
  const fs::path work = scratch_dir("acceptance-stats");
  save_dataset(work / "replica.jsonl", category_replica());
  StatsArgs a;
  a.dataset = work / "replica.jsonl";
  a.out = work / "out";
  a.reference = data_dir() / "category_totals_reference.json";
  std::ostringstream log;
  check(cmd_stats(a, log) == kExitOk, "stats exited nonzero");
  const auto csv = read_text(a.out / "stats.csv");
  for (const char* line : {"column_sum,object,,3363\n", "column_sum,scene,,889\n", "column_sum,event,,2245\n",
                           "total,,,6497\n"}) {
    check(csv.find(line) != std::string::npos, std::string("stats.csv lacks ") + line);
  }
  const auto ref = load_reference_totals(*a.reference);
  const auto gaps = compare_totals(compute_stats(load_dataset(a.dataset)), ref);
  check(gaps.size() == 3, "expected exactly the three row-total discrepancies, got " + std::to_string(gaps.size()));
  for (const auto& g : gaps) check(g.what.rfind("row ", 0) == 0, "unexpected discrepancy " + g.what);
  const auto md = read_text(a.out / "stats.md");
  check(md.find("mismatch") != std::string::npos, "stats.md does not flag the mismatch");
  std::string rows;
  for (const auto& g : gaps) rows += " " + std::to_string(g.declared) + "/" + std::to_string(g.from_cells);
  return "columns 3363/889/2245, total 6497; declared/cell row totals:" + rows;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<std::string()>>> criteria = {
      {"metric oracle equivalence", metric_oracle},
      {"weighted score identities", weighted_identities},
      {"DPO fixed point", dpo_fixed_point},
      {"gradient oracles", gradient_oracles},
      {"toy TDPO training", toy_tdpo},
      {"SRFT contracts", srft_contracts},
      {"end-to-end determinism", end_to_end},
      {"prompt fidelity", prompt_fidelity},
      {"stats fidelity", stats_fidelity},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o.detail = criteria[i].second();
      o.pass = true;
    } catch (const Failed& f) {
      o.detail = f.what;
    } catch (const std::exception& e) {
      o.detail = std::string("exception: ") + e.what();
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
            << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
