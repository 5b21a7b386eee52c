// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <random>

#include "generators.hpp"
#include "haven/report.hpp"

using namespace haven;

TEST_CASE("percentages use two decimals") {
  CHECK(format_pct(std::nullopt) == "n/a");
  CHECK(format_pct(100.0 * 2 / 3) == "66.67");
  CHECK(format_pct(0.0) == "0.00");
  CHECK(format_pct(100.0) == "100.00");
}

TEST_CASE("accuracy and bias CSV layout") {
  AccuracyTable t;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t a = 0; a < 3; ++a) {
      t.cells[c][a].cause = kCauses[c];
      t.cells[c][a].aspect = kAspects[a];
    }
  }
  t.cells[0][0].n = 3;
  t.cells[0][0].n_correct = 2;
  t.cells[0][0].accuracy_pct = 100.0 * 2 / 3;
  t.n = 3;
  t.n_correct = 2;
  t.total_pct = t.cells[0][0].accuracy_pct;
  const auto csv = accuracy_csv(t);
  CHECK(csv.rfind("cause,aspect,n,n_correct,accuracy_pct\nprior_conflict,object,3,2,66.67\n", 0) == 0);
  CHECK(csv.find("prior_conflict,scene,0,0,n/a\n") != std::string::npos);
  CHECK(csv.find("total,,3,2,66.67\n") != std::string::npos);

  BiasReport b;
  b.binary = {1, 2, 0, 50.0};
  b.mc = {0, 1, 1, 0.0};
  b.pooled_pct = 100.0 / 3;
  CHECK(bias_csv(b) ==
        "kind,groups,biased,excluded,bias_pct\n"
        "binary,2,1,0,50.00\n"
        "multiple_choice,1,0,1,0.00\n"
        "pooled,3,1,1,33.33\n");
}

TEST_CASE("heatmap file names and header") {
  Heatmap h;
  h.rows = Dim::Format;
  h.cols = Dim::Aspect;
  CHECK(heatmap_file_name(h) == "heatmap_format_aspect.csv");
  CHECK(heatmap_csv(h).rfind("format\\aspect,object,scene,event\n", 0) == 0);
  CHECK(default_heatmap_dims().size() == 3);
}

TEST_CASE("scatter export leaves missing sizes as n/a") {
  const auto csv = scatter_csv({{"m-7b", 7.0, 55.5, 12.25}, {"mystery", std::nullopt, 40.0, std::nullopt}});
  CHECK(csv == "model,size_b,accuracy_pct,bias_pct\nm-7b,7.00,55.50,12.25\nmystery,n/a,40.00,n/a\n");
}

TEST_CASE("score files are a pure function of their inputs") {
  std::mt19937_64 rng(5);
  const auto qs = testing::random_dataset(rng, 25);
  const auto vs = testing::random_verdicts(qs, rng, 0.1, 0.05);
  const auto groups = validate_groups(qs);
  auto shuffled = vs;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);

  auto a = compute_scores(qs, groups, vs);
  auto b = compute_scores(qs, groups, shuffled);
  a.model_name = b.model_name = "m";
  const auto d1 = testing::scratch_dir("report-a");
  const auto d2 = testing::scratch_dir("report-b");
  const auto f1 = write_score_files(d1, a);
  const auto f2 = write_score_files(d2, b);
  REQUIRE(f1.size() == f2.size());
  CHECK(f1.size() >= 2 + 3 + 3);
  for (std::size_t i = 0; i < f1.size(); ++i) {
    CHECK(f1[i].filename() == f2[i].filename());
    CHECK(testing::read_text(f1[i]) == testing::read_text(f2[i]));
  }
  CHECK(testing::read_text(write_summary(d1, a)) == testing::read_text(write_summary(d2, b)));
  CHECK(a.unevaluated == b.unevaluated);
}

TEST_CASE("unevaluated ids follow dataset order") {
  std::mt19937_64 rng(8);
  const auto qs = testing::random_dataset(rng, 10);
  std::vector<Verdict> vs;
  for (std::size_t i = 1; i < qs.size(); i += 2) vs.push_back({qs[i].id, true, std::nullopt, "j", "1", false});
  const auto b = compute_scores(qs, validate_groups(qs), vs);
  REQUIRE(b.unevaluated.size() == (qs.size() + 1) / 2);
  for (std::size_t i = 0; i < b.unevaluated.size(); ++i) CHECK(b.unevaluated[i] == qs[2 * i].id);
}
