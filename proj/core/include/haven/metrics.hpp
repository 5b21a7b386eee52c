// SPDX-License-Identifier: Apache-2.0
//
// Accuracy, bias score and bucketed/heatmap breakdowns over judge verdicts.
// Counts are exact integers; a percentage is formed once as 100 * a / b.

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "haven/dataset.hpp"
#include "haven/judge.hpp"

namespace haven {

using QuestionIndex = std::unordered_map<std::string, const Question*>;

// Throws IntegrityError on duplicate ids.
QuestionIndex index_questions(const std::vector<Question>& questions);

std::optional<double> percent(std::size_t num, std::size_t den);

struct EvalCell {
  Cause cause = Cause::PriorConflict;
  Aspect aspect = Aspect::Object;
  std::size_t n = 0;
  std::size_t n_correct = 0;
  std::optional<double> accuracy_pct;  // nullopt when n == 0
};

struct AccuracyTable {
  std::array<std::array<EvalCell, 3>, 3> cells{};  // [cause][aspect]
  std::size_t n = 0;
  std::size_t n_correct = 0;
  std::size_t n_unjudgeable = 0;
  std::optional<double> total_pct;
};

// Unjudgeable verdicts count in n with no correct contribution. Throws
// IntegrityError for an unknown or repeated question id.
AccuracyTable accuracy_table(const std::vector<Verdict>& verdicts, const QuestionIndex& questions);

struct BiasResult {
  std::size_t biased = 0;
  std::size_t total = 0;     // groups scored
  std::size_t excluded = 0;  // groups with a missing or unjudgeable member
  std::optional<double> pct;
};

enum class McConsistency {
  AllEqual,   // consistent iff the three correctness values agree
  AllCorrect  // consistent iff all three are correct (sensitivity analysis)
};

// Pairs are biased when their two correctness values differ. Non-binary
// groups in `groups` are ignored.
BiasResult bias_binary(const std::vector<VariantGroup>& groups, const std::vector<Verdict>& verdicts);
BiasResult bias_mc(const std::vector<VariantGroup>& groups, const std::vector<Verdict>& verdicts,
                   McConsistency rule = McConsistency::AllEqual);

// Group-count weighted: 100 * (biased_b + biased_mc) / (total_b + total_mc).
std::optional<double> pooled_bias(const BiasResult& binary, const BiasResult& mc);

struct BiasReport {
  BiasResult binary;
  BiasResult mc;
  std::optional<double> pooled_pct;
};

BiasReport bias_report(const std::vector<VariantGroup>& groups, const std::vector<Verdict>& verdicts,
                       McConsistency rule = McConsistency::AllEqual);

struct BucketRow {
  std::size_t bucket = 0;
  std::string label;
  std::size_t n = 0;
  std::size_t n_correct = 0;
  double accuracy_pct = 0.0;
};

// Empty buckets are omitted.
std::vector<BucketRow> bucket_series(const std::vector<Verdict>& verdicts,
                                     const QuestionIndex& questions, BucketAxis axis,
                                     const std::vector<double>& edges,
                                     const Tokenizer& tok = default_tokenizer());

enum class Dim { Cause, Aspect, Format };
std::string_view to_string(Dim d);
std::string_view dim_value_name(Dim d, std::size_t value);
std::size_t dim_value(const Question& q, Dim d);

struct Heatmap {
  Dim rows = Dim::Cause;
  Dim cols = Dim::Aspect;
  std::array<std::array<std::size_t, 3>, 3> n{};
  std::array<std::array<std::size_t, 3>, 3> n_correct{};

  std::optional<double> pct(std::size_t r, std::size_t c) const { return percent(n_correct[r][c], n[r][c]); }
};

// Throws DomainError when rows == cols.
Heatmap pair_heatmap(const std::vector<Verdict>& verdicts, const QuestionIndex& questions, Dim rows,
                     Dim cols);

}  // namespace haven
