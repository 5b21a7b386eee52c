// SPDX-License-Identifier: Apache-2.0

#include "haven/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "haven/error.hpp"

namespace haven {

namespace {

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void hist_rows(std::ostringstream& os, const char* name, const Histogram& h) {
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    os << "hist_" << name << ',' << csv_field(bucket_label(h.edges, b)) << ",," << h.counts[b] << '\n';
  }
}

void hist_markdown(std::ostringstream& os, const char* title, const Histogram& h) {
  os << "\n### " << title << "\n\n| Bin | Count |\n|---|---:|\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    os << "| " << bucket_label(h.edges, b) << " | " << h.counts[b] << " |\n";
  }
}

}  // namespace

std::string format_pct(std::optional<double> pct) { return pct ? fixed(*pct, 2) : "n/a"; }

std::string stats_csv(const DatasetStats& st) {
  std::ostringstream os;
  os << "section,key,subkey,value\n";
  for (Cause c : kCauses) {
    for (Aspect a : kAspects) {
      os << "cell," << to_string(c) << ',' << to_string(a) << ',' << st.counts[index_of(c)][index_of(a)]
         << '\n';
    }
  }
  for (Cause c : kCauses) os << "row_sum," << to_string(c) << ",," << st.row_sum(c) << '\n';
  for (Aspect a : kAspects) os << "column_sum," << to_string(a) << ",," << st.column_sum(a) << '\n';
  os << "total,,," << st.total << '\n';
  for (QFormat f : kFormats) os << "format_count," << to_string(f) << ",," << st.format_counts[index_of(f)] << '\n';
  for (QFormat f : kFormats) {
    os << "format_share," << to_string(f) << ",," << fixed(st.format_shares[index_of(f)], 6) << '\n';
  }
  hist_rows(os, "duration", st.duration_histogram);
  hist_rows(os, "frames", st.frame_histogram);
  hist_rows(os, "qlen", st.qlen_histogram);
  os << "tokenizer," << csv_field(st.tokenizer_name) << ",,\n";
  return os.str();
}

std::string stats_markdown(const DatasetStats& st, const ReferenceTotals* ref,
                           const std::vector<TotalsDiscrepancy>& discrepancies) {
  std::ostringstream os;
  os << "# Dataset statistics\n\n";
  os << "Questions: " << st.total << "  \nQuestion-length tokenizer: " << st.tokenizer_name << "\n\n";

  const bool declared = ref != nullptr && (ref->row_totals || ref->column_totals || ref->grand_total);
  os << "| Cause/Aspect | Object | Scene | Event | #Total (cells)";
  if (declared) os << " | #Total (declared)";
  os << " |\n|---|---:|---:|---:|---:";
  if (declared) os << "|---:";
  os << "|\n";
  for (Cause c : kCauses) {
    const auto& row = st.counts[index_of(c)];
    os << "| " << display_name(c) << " | " << row[0] << " | " << row[1] << " | " << row[2] << " | "
       << st.row_sum(c);
    if (declared) {
      if (ref->row_totals) {
        const auto d = (*ref->row_totals)[index_of(c)];
        os << " | " << d << (d != st.row_sum(c) ? " (mismatch)" : "");
      } else {
        os << " | ";
      }
    }
    os << " |\n";
  }
  os << "| #Total | " << st.column_sum(Aspect::Object) << " | " << st.column_sum(Aspect::Scene) << " | "
     << st.column_sum(Aspect::Event) << " | " << st.total;
  if (declared) {
    if (ref->grand_total) {
      os << " | " << *ref->grand_total << (*ref->grand_total != st.total ? " (mismatch)" : "");
    } else {
      os << " | ";
    }
  }
  os << " |\n";

  if (ref != nullptr) {
    os << "\n## Reference check (" << ref->label << ")\n\n";
    if (discrepancies.empty()) {
      os << "All declared totals agree with the cell counts.\n";
    } else {
      os << "Declared totals that disagree with the cell counts (cells are used for every "
            "figure above):\n\n";
      for (const auto& d : discrepancies) {
        os << "- " << d.what << ": declared " << d.declared << ", cells sum to " << d.from_cells << '\n';
      }
    }
  }

  os << "\n## Question formats\n\n| Format | Count | Share |\n|---|---:|---:|\n";
  for (QFormat f : kFormats) {
    os << "| " << display_name(f) << " | " << st.format_counts[index_of(f)] << " | "
       << fixed(100.0 * st.format_shares[index_of(f)], 2) << "% |\n";
  }

  os << "\n## Distributions\n";
  hist_markdown(os, "Duration (s)", st.duration_histogram);
  hist_markdown(os, "Frame count", st.frame_histogram);
  hist_markdown(os, ("Question length (tokens, " + st.tokenizer_name + ")").c_str(), st.qlen_histogram);
  return os.str();
}

std::vector<std::pair<Dim, Dim>> default_heatmap_dims() {
  return {{Dim::Cause, Dim::Aspect}, {Dim::Format, Dim::Aspect}, {Dim::Format, Dim::Cause}};
}

ScoreBundle compute_scores(const std::vector<Question>& questions,
                           const std::vector<VariantGroup>& groups,
                           const std::vector<Verdict>& verdicts, const Tokenizer& tok,
                           McConsistency rule) {
  const QuestionIndex index = index_questions(questions);
  ScoreBundle b;
  b.tokenizer_name = tok.name;
  b.accuracy = accuracy_table(verdicts, index);
  b.bias = bias_report(groups, verdicts, rule);
  for (BucketAxis axis : {BucketAxis::Duration, BucketAxis::Frames, BucketAxis::QLen}) {
    b.bucket_edges[axis] = default_edges(axis);
    b.buckets[axis] = bucket_series(verdicts, index, axis, b.bucket_edges[axis], tok);
  }
  for (auto [r, c] : default_heatmap_dims()) b.heatmaps.push_back(pair_heatmap(verdicts, index, r, c));

  std::unordered_set<std::string> judged;
  for (const auto& v : verdicts) judged.insert(v.question_id);
  for (const auto& q : questions) {
    if (!judged.contains(q.id)) b.unevaluated.push_back(q.id);
  }
  return b;
}

std::string accuracy_csv(const AccuracyTable& t) {
  std::ostringstream os;
  os << "cause,aspect,n,n_correct,accuracy_pct\n";
  for (const auto& row : t.cells) {
    for (const auto& cell : row) {
      os << to_string(cell.cause) << ',' << to_string(cell.aspect) << ',' << cell.n << ','
         << cell.n_correct << ',' << format_pct(cell.accuracy_pct) << '\n';
    }
  }
  os << "total,," << t.n << ',' << t.n_correct << ',' << format_pct(t.total_pct) << '\n';
  return os.str();
}

std::string bias_csv(const BiasReport& b) {
  std::ostringstream os;
  os << "kind,groups,biased,excluded,bias_pct\n";
  os << "binary," << b.binary.total << ',' << b.binary.biased << ',' << b.binary.excluded << ','
     << format_pct(b.binary.pct) << '\n';
  os << "multiple_choice," << b.mc.total << ',' << b.mc.biased << ',' << b.mc.excluded << ','
     << format_pct(b.mc.pct) << '\n';
  os << "pooled," << b.binary.total + b.mc.total << ',' << b.binary.biased + b.mc.biased << ','
     << b.binary.excluded + b.mc.excluded << ',' << format_pct(b.pooled_pct) << '\n';
  return os.str();
}

std::string buckets_csv(const std::vector<BucketRow>& rows) {
  std::ostringstream os;
  os << "bucket,label,n,n_correct,accuracy_pct\n";
  for (const auto& r : rows) {
    os << r.bucket << ',' << csv_field(r.label) << ',' << r.n << ',' << r.n_correct << ','
       << format_pct(r.accuracy_pct) << '\n';
  }
  return os.str();
}

std::string heatmap_csv(const Heatmap& h) {
  std::ostringstream os;
  os << to_string(h.rows) << '\\' << to_string(h.cols);
  for (std::size_t c = 0; c < 3; ++c) os << ',' << dim_value_name(h.cols, c);
  os << '\n';
  for (std::size_t r = 0; r < 3; ++r) {
    os << dim_value_name(h.rows, r);
    for (std::size_t c = 0; c < 3; ++c) os << ',' << format_pct(h.pct(r, c));
    os << '\n';
  }
  return os.str();
}

std::string heatmap_file_name(const Heatmap& h) {
  return "heatmap_" + std::string(to_string(h.rows)) + "_" + std::string(to_string(h.cols)) + ".csv";
}

std::string summary_markdown(const ScoreBundle& b) {
  std::ostringstream os;
  os << "# Evaluation summary\n\n";
  os << "Model: " << b.model_name << "  \nJudge: " << b.judge_model << "  \nPrompt mode: " << b.prompt_mode
     << "  \nQuestion-length tokenizer: " << b.tokenizer_name << "\n\n";

  os << "## Hallucination evaluation (accuracy %)\n\n";
  os << "| Model/Type | Prior Object | Prior Scene | Prior Event | In-context Object | In-context Scene "
        "| In-context Event | Capability Object | Capability Scene | Capability Event | Total |\n";
  os << "|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n";
  os << "| " << b.model_name;
  for (const auto& row : b.accuracy.cells) {
    for (const auto& cell : row) os << " | " << format_pct(cell.accuracy_pct);
  }
  os << " | " << format_pct(b.accuracy.total_pct) << " |\n\n";
  os << "Judged: " << b.accuracy.n << ", correct: " << b.accuracy.n_correct
     << ", unjudgeable (counted incorrect): " << b.accuracy.n_unjudgeable << "\n\n";

  os << "## Consistency evaluation (bias score %)\n\n";
  os << "| Model/Type | Binary-choice | Multiple-choice | Total |\n|---|---:|---:|---:|\n";
  os << "| " << b.model_name << " | " << format_pct(b.bias.binary.pct) << " | " << format_pct(b.bias.mc.pct)
     << " | " << format_pct(b.bias.pooled_pct) << " |\n\n";
  os << "Groups scored: binary " << b.bias.binary.total << ", multiple-choice " << b.bias.mc.total
     << "  \nGroups excluded (missing or unjudgeable member): binary " << b.bias.binary.excluded
     << ", multiple-choice " << b.bias.mc.excluded << "\n\n";

  os << "## Accuracy by bucket\n";
  for (const auto& [axis, rows] : b.buckets) {
    os << "\n### " << to_string(axis) << "\n\n| Bucket | n | Accuracy |\n|---|---:|---:|\n";
    for (const auto& r : rows) os << "| " << r.label << " | " << r.n << " | " << format_pct(r.accuracy_pct) << " |\n";
  }

  os << "\n## Accuracy heatmaps\n";
  for (const auto& h : b.heatmaps) {
    os << "\n### " << to_string(h.rows) << " x " << to_string(h.cols) << "\n\n| |";
    for (std::size_t c = 0; c < 3; ++c) os << ' ' << dim_value_name(h.cols, c) << " |";
    os << "\n|---|---:|---:|---:|\n";
    for (std::size_t r = 0; r < 3; ++r) {
      os << "| " << dim_value_name(h.rows, r) << " |";
      for (std::size_t c = 0; c < 3; ++c) os << ' ' << format_pct(h.pct(r, c)) << " |";
      os << '\n';
    }
  }

  if (!b.unevaluated.empty()) {
    os << "\n## Unevaluated questions (" << b.unevaluated.size() << ")\n\n";
    for (const auto& id : b.unevaluated) os << "- " << id << '\n';
  }
  return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

std::vector<std::filesystem::path> write_score_files(const std::filesystem::path& dir,
                                                     const ScoreBundle& b) {
  std::vector<std::filesystem::path> written;
  const auto emit = [&](const std::string& name, const std::string& text) {
    write_text_file(dir / name, text);
    written.push_back(dir / name);
  };
  emit("accuracy_table.csv", accuracy_csv(b.accuracy));
  emit("bias_report.csv", bias_csv(b.bias));
  for (const auto& [axis, rows] : b.buckets) {
    emit("buckets_" + std::string(to_string(axis)) + ".csv", buckets_csv(rows));
  }
  for (const auto& h : b.heatmaps) emit(heatmap_file_name(h), heatmap_csv(h));
  return written;
}

std::filesystem::path write_summary(const std::filesystem::path& dir, const ScoreBundle& b) {
  const auto path = dir / "summary.md";
  write_text_file(path, summary_markdown(b));
  return path;
}

std::string scatter_csv(const std::vector<ScatterRow>& rows) {
  std::ostringstream os;
  os << "model,size_b,accuracy_pct,bias_pct\n";
  for (const auto& r : rows) {
    os << csv_field(r.model_name) << ',' << (r.size_b ? fixed(*r.size_b, 2) : "n/a") << ','
       << format_pct(r.accuracy_pct) << ',' << format_pct(r.bias_pct) << '\n';
  }
  return os.str();
}

}  // namespace haven
