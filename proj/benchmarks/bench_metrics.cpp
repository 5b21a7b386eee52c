// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "haven/dataset.hpp"
#include "haven/metrics.hpp"
#include "haven/report.hpp"

namespace {

using namespace haven;

// Binary pairs and MC triples in equal numbers, all verdicts present.
struct Synthetic {
  std::vector<Question> questions;
  std::vector<Verdict> verdicts;
};

Synthetic make(std::size_t groups) {
  std::mt19937_64 rng(42);
  std::bernoulli_distribution coin(0.6);
  Synthetic s;
  for (std::size_t g = 0; g < groups; ++g) {
    const bool binary = g % 2 == 0;
    const std::string gid = "g" + std::to_string(g);
    const auto tags = binary ? std::vector<VariantTag>{VariantTag::YesCorrect, VariantTag::NoCorrect}
                             : std::vector<VariantTag>{VariantTag::A, VariantTag::B, VariantTag::C};
    for (std::size_t i = 0; i < tags.size(); ++i) {
      Question q;
      q.id = gid + "-" + std::to_string(i);
      q.group_id = gid;
      q.variant_tag = tags[i];
      q.format = binary ? QFormat::Binary : QFormat::MultipleChoice;
      q.cause = kCauses[g % 3];
      q.aspect = kAspects[(g / 3) % 3];
      q.video_ref = gid + ".mp4";
      q.text = "Is the object in the clip what it seems to be?";
      q.gold_answer = binary ? (i == 0 ? "yes" : "no") : "A. one";
      q.duration_s = static_cast<double>(g % 300);
      q.frame_count = 30 + g % 900;
      s.verdicts.push_back({q.id, coin(rng), std::nullopt, "j", "1", false});
      s.questions.push_back(std::move(q));
    }
  }
  return s;
}

void BM_AccuracyTable(benchmark::State& state) {
  const auto s = make(static_cast<std::size_t>(state.range(0)));
  const auto index = index_questions(s.questions);
  for (auto _ : state) benchmark::DoNotOptimize(accuracy_table(s.verdicts, index));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(s.verdicts.size()));
}
BENCHMARK(BM_AccuracyTable)->Arg(1000)->Arg(10000);

void BM_BiasReport(benchmark::State& state) {
  const auto s = make(static_cast<std::size_t>(state.range(0)));
  const auto groups = validate_groups(s.questions);
  for (auto _ : state) benchmark::DoNotOptimize(bias_report(groups, s.verdicts));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(groups.size()));
}
BENCHMARK(BM_BiasReport)->Arg(1000)->Arg(10000);

void BM_ComputeScores(benchmark::State& state) {
  const auto s = make(static_cast<std::size_t>(state.range(0)));
  const auto groups = validate_groups(s.questions);
  for (auto _ : state) benchmark::DoNotOptimize(compute_scores(s.questions, groups, s.verdicts));
}
BENCHMARK(BM_ComputeScores)->Arg(2000);

void BM_TokenCount(benchmark::State& state) {
  const std::string text = "Does the man in the red jacket pick up the umbrella before or after the dog's bark?";
  for (auto _ : state) benchmark::DoNotOptimize(whitespace_punct_token_count(text));
}
BENCHMARK(BM_TokenCount);

}  // namespace
