// SPDX-License-Identifier: Apache-2.0
//
// CSV and Markdown emitters for statistics and scores. All output is a pure
// function of its inputs so reruns are byte-identical.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "haven/dataset.hpp"
#include "haven/metrics.hpp"

namespace haven {

// Two decimals, or "n/a" for an undefined value.
std::string format_pct(std::optional<double> pct);

std::string stats_csv(const DatasetStats& stats);
std::string stats_markdown(const DatasetStats& stats, const ReferenceTotals* reference,
                           const std::vector<TotalsDiscrepancy>& discrepancies);

struct ScoreBundle {
  std::string model_name;
  std::string judge_model;
  std::string prompt_mode;
  std::string tokenizer_name;
  AccuracyTable accuracy;
  BiasReport bias;
  std::map<BucketAxis, std::vector<double>> bucket_edges;
  std::map<BucketAxis, std::vector<BucketRow>> buckets;
  std::vector<Heatmap> heatmaps;
  std::vector<std::string> unevaluated;  // question ids without a verdict
  std::optional<double> model_size_b;
};

// The three panels: cause x aspect, format x aspect, format x cause.
std::vector<std::pair<Dim, Dim>> default_heatmap_dims();

ScoreBundle compute_scores(const std::vector<Question>& questions,
                           const std::vector<VariantGroup>& groups,
                           const std::vector<Verdict>& verdicts, const Tokenizer& tok = default_tokenizer(),
                           McConsistency rule = McConsistency::AllEqual);

std::string accuracy_csv(const AccuracyTable& table);
std::string bias_csv(const BiasReport& bias);
std::string buckets_csv(const std::vector<BucketRow>& rows);
std::string heatmap_csv(const Heatmap& h);
std::string heatmap_file_name(const Heatmap& h);
std::string summary_markdown(const ScoreBundle& bundle);

// accuracy_table.csv, bias_report.csv, buckets_{axis}.csv, heatmap_{dims}.csv.
// Returns the paths written.
std::vector<std::filesystem::path> write_score_files(const std::filesystem::path& dir,
                                                     const ScoreBundle& bundle);
std::filesystem::path write_summary(const std::filesystem::path& dir, const ScoreBundle& bundle);

struct ScatterRow {
  std::string model_name;
  std::optional<double> size_b;
  std::optional<double> accuracy_pct;
  std::optional<double> bias_pct;
};

// (size, accuracy, bias) export for the model-size analysis; no fitting.
std::string scatter_csv(const std::vector<ScatterRow>& rows);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace haven
