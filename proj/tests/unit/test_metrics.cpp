// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <random>

#include "generators.hpp"
#include "haven/error.hpp"
#include "haven/metrics.hpp"
#include "oracles.hpp"

using namespace haven;

namespace {

Question item(std::string id, std::string group, QFormat f, VariantTag tag, Cause c = Cause::PriorConflict,
              Aspect a = Aspect::Object) {
  Question q;
  q.id = std::move(id);
  q.group_id = std::move(group);
  q.format = f;
  q.variant_tag = tag;
  q.cause = c;
  q.aspect = a;
  q.video_ref = "v/" + q.group_id;
  q.text = "What is shown?";
  q.gold_answer = "yes";
  q.duration_s = 10;
  q.frame_count = 100;
  return q;
}

Verdict v(const std::string& id, bool correct, bool unjudgeable = false) {
  Verdict out;
  out.question_id = id;
  out.correct = correct;
  out.unjudgeable = unjudgeable;
  out.judge_model = "j";
  return out;
}

std::vector<Question> small_set() {
  return {item("b1y", "b1", QFormat::Binary, VariantTag::YesCorrect),
          item("b1n", "b1", QFormat::Binary, VariantTag::NoCorrect),
          item("b2y", "b2", QFormat::Binary, VariantTag::YesCorrect),
          item("b2n", "b2", QFormat::Binary, VariantTag::NoCorrect),
          item("m1a", "m1", QFormat::MultipleChoice, VariantTag::A, Cause::InContextConflict, Aspect::Event),
          item("m1b", "m1", QFormat::MultipleChoice, VariantTag::B, Cause::InContextConflict, Aspect::Event),
          item("m1c", "m1", QFormat::MultipleChoice, VariantTag::C, Cause::InContextConflict, Aspect::Event),
          item("s1", "s1", QFormat::ShortAnswer, VariantTag::Sole, Cause::CapabilityDeficiency, Aspect::Scene)};
}

}  // namespace

TEST_CASE("percent is undefined for an empty denominator") {
  CHECK_FALSE(percent(0, 0));
  CHECK(*percent(1, 3) == doctest::Approx(33.333333333));
  CHECK(*percent(5, 5) == 100.0);
}

TEST_CASE("accuracy table on a hand-built set") {
  const auto qs = small_set();
  const auto idx = index_questions(qs);
  const std::vector<Verdict> vs{v("b1y", true), v("b1n", false), v("b2y", true), v("b2n", true),
                                v("m1a", true), v("m1b", true),  v("m1c", false, true), v("s1", true)};
  const auto t = accuracy_table(vs, idx);
  CHECK(t.n == 8);
  CHECK(t.n_correct == 6);
  CHECK(t.n_unjudgeable == 1);
  CHECK(*t.total_pct == doctest::Approx(75.0));
  const auto& po = t.cells[0][0];
  CHECK(po.n == 4);
  CHECK(po.n_correct == 3);
  CHECK(t.cells[1][2].n == 3);
  CHECK(t.cells[1][2].n_correct == 2);
  CHECK(t.cells[2][1].n == 1);
  CHECK_FALSE(t.cells[0][1].accuracy_pct);
}

TEST_CASE("accuracy rejects unknown and duplicate ids") {
  const auto qs = small_set();
  const auto idx = index_questions(qs);
  CHECK_THROWS_AS(accuracy_table({v("nope", true)}, idx), IntegrityError);
  CHECK_THROWS_AS(accuracy_table({v("s1", true), v("s1", false)}, idx), IntegrityError);
  auto dup = qs;
  dup.push_back(dup.front());
  CHECK_THROWS_AS(index_questions(dup), IntegrityError);
}

TEST_CASE("bias counts disagreement and excludes incomplete groups") {
  const auto qs = small_set();
  const auto groups = validate_groups(qs);
  std::vector<Verdict> vs{v("b1y", true), v("b1n", false), v("b2y", true), v("b2n", true),
                          v("m1a", true), v("m1b", true), v("m1c", true)};
  auto r = bias_report(groups, vs);
  CHECK(r.binary.total == 2);
  CHECK(r.binary.biased == 1);
  CHECK(*r.binary.pct == doctest::Approx(50.0));
  CHECK(r.mc.total == 1);
  CHECK(r.mc.biased == 0);
  CHECK(*r.pooled_pct == doctest::Approx(100.0 / 3.0));

  vs[6].correct = false;
  r = bias_report(groups, vs);
  CHECK(r.mc.biased == 1);

  vs[6].unjudgeable = true;
  r = bias_report(groups, vs);
  CHECK(r.mc.total == 0);
  CHECK(r.mc.excluded == 1);
  CHECK_FALSE(r.mc.pct);
  CHECK(*r.pooled_pct == doctest::Approx(50.0));

  vs.pop_back();
  vs.erase(vs.begin());
  r = bias_report(groups, vs);
  CHECK(r.binary.excluded == 1);
  CHECK(r.binary.total == 1);
  CHECK(r.binary.biased == 0);
}

TEST_CASE("all-correct rule marks uniformly wrong triples as biased") {
  const auto qs = small_set();
  const auto groups = validate_groups(qs);
  const std::vector<Verdict> vs{v("m1a", false), v("m1b", false), v("m1c", false)};
  CHECK(bias_mc(groups, vs, McConsistency::AllEqual).biased == 0);
  CHECK(bias_mc(groups, vs, McConsistency::AllCorrect).biased == 1);
}

TEST_CASE("pooled bias weights by group count") {
  BiasResult b{1, 4, 0, 25.0};
  BiasResult m{3, 6, 0, 50.0};
  CHECK(*pooled_bias(b, m) == doctest::Approx(40.0));
  CHECK_FALSE(pooled_bias(BiasResult{}, BiasResult{}));
}

TEST_CASE("heatmap rejects a repeated dimension") {
  const auto qs = small_set();
  CHECK_THROWS_AS(pair_heatmap({}, index_questions(qs), Dim::Cause, Dim::Cause), DomainError);
}

TEST_CASE("metrics agree with independent recomputation on random data") {
  std::mt19937_64 rng(2024);
  const std::vector<double> edges{0, 15, 30, 60, 120, 240};
  for (int trial = 0; trial < 60; ++trial) {
    const auto qs = testing::random_dataset(rng, 5 + trial % 20);
    const auto vs = testing::random_verdicts(qs, rng, 0.1, 0.05);
    const auto idx = index_questions(qs);
    const auto groups = validate_groups(qs);

    const auto t = accuracy_table(vs, idx);
    const auto o = testing::oracle_accuracy(qs, vs);
    REQUIRE(t.n == o.total.n);
    REQUIRE(t.n_correct == o.total.correct);
    REQUIRE(t.n_unjudgeable == o.unjudgeable);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t a = 0; a < 3; ++a) {
        REQUIRE(t.cells[c][a].n == o.cells[c][a].n);
        REQUIRE(t.cells[c][a].n_correct == o.cells[c][a].correct);
        REQUIRE(t.cells[c][a].accuracy_pct == testing::oracle_pct(o.cells[c][a].correct, o.cells[c][a].n));
      }
    }

    for (bool strict : {false, true}) {
      const auto rule = strict ? McConsistency::AllCorrect : McConsistency::AllEqual;
      const auto b = bias_binary(groups, vs);
      const auto m = bias_mc(groups, vs, rule);
      const auto ob = testing::oracle_bias(qs, vs, QFormat::Binary);
      const auto om = testing::oracle_bias(qs, vs, QFormat::MultipleChoice, strict);
      REQUIRE(b.total == ob.groups);
      REQUIRE(b.biased == ob.biased);
      REQUIRE(b.excluded == ob.excluded);
      REQUIRE(m.total == om.groups);
      REQUIRE(m.biased == om.biased);
      REQUIRE(m.excluded == om.excluded);
    }

    const auto rows = bucket_series(vs, idx, BucketAxis::Duration, edges);
    const auto ob = testing::oracle_buckets(qs, vs, BucketAxis::Duration, edges);
    REQUIRE(rows.size() == ob.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      REQUIRE(rows[i].bucket == ob[i].first);
      REQUIRE(rows[i].n == ob[i].second.n);
      REQUIRE(rows[i].n_correct == ob[i].second.correct);
    }

    const auto h = pair_heatmap(vs, idx, Dim::Format, Dim::Cause);
    const auto oh = testing::oracle_heatmap(qs, vs, Dim::Format, Dim::Cause);
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t c = 0; c < 3; ++c) {
        REQUIRE(h.n[r][c] == oh[r][c].n);
        REQUIRE(h.n_correct[r][c] == oh[r][c].correct);
      }
    }
  }
}

TEST_CASE("metrics do not depend on verdict order") {
  std::mt19937_64 rng(99);
  const auto qs = testing::random_dataset(rng, 30);
  auto vs = testing::random_verdicts(qs, rng, 0.0, 0.0);
  const auto idx = index_questions(qs);
  const auto groups = validate_groups(qs);
  const auto t1 = accuracy_table(vs, idx);
  const auto b1 = bias_report(groups, vs);
  std::reverse(vs.begin(), vs.end());
  const auto t2 = accuracy_table(vs, idx);
  const auto b2 = bias_report(groups, vs);
  CHECK(t1.n_correct == t2.n_correct);
  CHECK(b1.pooled_pct == b2.pooled_pct);
  CHECK(b1.mc.biased == b2.mc.biased);
}
