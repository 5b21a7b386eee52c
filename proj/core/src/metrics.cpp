// SPDX-License-Identifier: Apache-2.0

#include "haven/metrics.hpp"

#include <map>
#include <unordered_set>

#include "haven/error.hpp"

namespace haven {

namespace {

using VerdictMap = std::unordered_map<std::string, const Verdict*>;

VerdictMap map_verdicts(const std::vector<Verdict>& verdicts) {
  VerdictMap out;
  for (const auto& v : verdicts) {
    if (!out.emplace(v.question_id, &v).second) {
      throw IntegrityError("multiple verdicts for question '" + v.question_id + "'");
    }
  }
  return out;
}

const Question& resolve(const QuestionIndex& questions, const std::string& id) {
  auto it = questions.find(id);
  if (it == questions.end()) throw IntegrityError("verdict references unknown question '" + id + "'");
  return *it->second;
}

// Collects member outcomes; nullopt when any member lacks a usable verdict.
std::optional<std::vector<bool>> outcomes(const VariantGroup& g, const VerdictMap& verdicts) {
  std::vector<bool> out;
  for (const auto& id : g.members) {
    auto it = verdicts.find(id);
    if (it == verdicts.end() || it->second->unjudgeable) return std::nullopt;
    out.push_back(it->second->correct);
  }
  return out;
}

}  // namespace

QuestionIndex index_questions(const std::vector<Question>& questions) {
  QuestionIndex idx;
  for (const auto& q : questions) {
    if (!idx.emplace(q.id, &q).second) throw IntegrityError("duplicate question id '" + q.id + "'");
  }
  return idx;
}

std::optional<double> percent(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

AccuracyTable accuracy_table(const std::vector<Verdict>& verdicts, const QuestionIndex& questions) {
  AccuracyTable t;
  for (Cause c : kCauses) {
    for (Aspect a : kAspects) {
      t.cells[index_of(c)][index_of(a)].cause = c;
      t.cells[index_of(c)][index_of(a)].aspect = a;
    }
  }
  std::unordered_set<std::string> seen;
  for (const auto& v : verdicts) {
    const Question& q = resolve(questions, v.question_id);
    if (!seen.insert(v.question_id).second) {
      throw IntegrityError("multiple verdicts for question '" + v.question_id + "'");
    }
    auto& cell = t.cells[index_of(q.cause)][index_of(q.aspect)];
    const bool ok = v.correct && !v.unjudgeable;
    ++cell.n;
    ++t.n;
    if (ok) {
      ++cell.n_correct;
      ++t.n_correct;
    }
    if (v.unjudgeable) ++t.n_unjudgeable;
  }
  for (auto& row : t.cells) {
    for (auto& cell : row) cell.accuracy_pct = percent(cell.n_correct, cell.n);
  }
  t.total_pct = percent(t.n_correct, t.n);
  return t;
}

BiasResult bias_binary(const std::vector<VariantGroup>& groups, const std::vector<Verdict>& verdicts) {
  const VerdictMap vm = map_verdicts(verdicts);
  BiasResult r;
  for (const auto& g : groups) {
    if (g.format != QFormat::Binary) continue;
    auto o = outcomes(g, vm);
    if (!o) {
      ++r.excluded;
      continue;
    }
    ++r.total;
    if ((*o)[0] != (*o)[1]) ++r.biased;
  }
  r.pct = percent(r.biased, r.total);
  return r;
}

BiasResult bias_mc(const std::vector<VariantGroup>& groups, const std::vector<Verdict>& verdicts,
                   McConsistency rule) {
  const VerdictMap vm = map_verdicts(verdicts);
  BiasResult r;
  for (const auto& g : groups) {
    if (g.format != QFormat::MultipleChoice) continue;
    auto o = outcomes(g, vm);
    if (!o) {
      ++r.excluded;
      continue;
    }
    ++r.total;
    const auto& v = *o;
    const bool consistent = rule == McConsistency::AllEqual
                                ? (v[0] == v[1] && v[1] == v[2])
                                : (v[0] && v[1] && v[2]);
    if (!consistent) ++r.biased;
  }
  r.pct = percent(r.biased, r.total);
  return r;
}

std::optional<double> pooled_bias(const BiasResult& binary, const BiasResult& mc) {
  return percent(binary.biased + mc.biased, binary.total + mc.total);
}

BiasReport bias_report(const std::vector<VariantGroup>& groups, const std::vector<Verdict>& verdicts,
                       McConsistency rule) {
  BiasReport r;
  r.binary = bias_binary(groups, verdicts);
  r.mc = bias_mc(groups, verdicts, rule);
  r.pooled_pct = pooled_bias(r.binary, r.mc);
  return r;
}

std::vector<BucketRow> bucket_series(const std::vector<Verdict>& verdicts,
                                     const QuestionIndex& questions, BucketAxis axis,
                                     const std::vector<double>& edges, const Tokenizer& tok) {
  std::map<std::size_t, BucketRow> rows;
  for (const auto& v : verdicts) {
    const Question& q = resolve(questions, v.question_id);
    const std::size_t b = assign_bucket(q, axis, edges, tok);
    auto& row = rows[b];
    row.bucket = b;
    ++row.n;
    if (v.correct && !v.unjudgeable) ++row.n_correct;
  }
  std::vector<BucketRow> out;
  for (auto& [b, row] : rows) {
    row.label = bucket_label(edges, b);
    row.accuracy_pct = *percent(row.n_correct, row.n);
    out.push_back(std::move(row));
  }
  return out;
}

std::string_view to_string(Dim d) {
  switch (d) {
    case Dim::Cause: return "cause";
    case Dim::Aspect: return "aspect";
    case Dim::Format: return "format";
  }
  return "?";
}

std::string_view dim_value_name(Dim d, std::size_t value) {
  switch (d) {
    case Dim::Cause: return to_string(kCauses.at(value));
    case Dim::Aspect: return to_string(kAspects.at(value));
    case Dim::Format: return to_string(kFormats.at(value));
  }
  return "?";
}

std::size_t dim_value(const Question& q, Dim d) {
  switch (d) {
    case Dim::Cause: return index_of(q.cause);
    case Dim::Aspect: return index_of(q.aspect);
    case Dim::Format: return index_of(q.format);
  }
  return 0;
}

Heatmap pair_heatmap(const std::vector<Verdict>& verdicts, const QuestionIndex& questions, Dim rows,
                     Dim cols) {
  if (rows == cols) throw DomainError("heatmap dimensions must differ");
  Heatmap h;
  h.rows = rows;
  h.cols = cols;
  for (const auto& v : verdicts) {
    const Question& q = resolve(questions, v.question_id);
    const auto r = dim_value(q, rows);
    const auto c = dim_value(q, cols);
    ++h.n[r][c];
    if (v.correct && !v.unjudgeable) ++h.n_correct[r][c];
  }
  return h;
}

}  // namespace haven
