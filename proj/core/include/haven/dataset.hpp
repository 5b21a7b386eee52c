// SPDX-License-Identifier: Apache-2.0
//
// Benchmark schema: taxonomy enums, questions, variant groups and corpus
// statistics. Datasets are stored as JSONL, one question per line.

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace haven {

enum class Cause { PriorConflict, InContextConflict, CapabilityDeficiency };
enum class Aspect { Object, Scene, Event };
enum class QFormat { Binary, MultipleChoice, ShortAnswer };
enum class VariantTag { YesCorrect, NoCorrect, A, B, C, Sole };

inline constexpr std::array<Cause, 3> kCauses{
    Cause::PriorConflict, Cause::InContextConflict, Cause::CapabilityDeficiency};
inline constexpr std::array<Aspect, 3> kAspects{Aspect::Object, Aspect::Scene,
                                                 Aspect::Event};
inline constexpr std::array<QFormat, 3> kFormats{
    QFormat::Binary, QFormat::MultipleChoice, QFormat::ShortAnswer};

std::string_view to_string(Cause c);
std::string_view to_string(Aspect a);
std::string_view to_string(QFormat f);
std::string_view to_string(VariantTag t);

// Human-readable labels used in report headers ("Prior Conflict", "Object", ...).
std::string_view display_name(Cause c);
std::string_view display_name(Aspect a);
std::string_view display_name(QFormat f);

std::optional<Cause> parse_cause(std::string_view s);
std::optional<Aspect> parse_aspect(std::string_view s);
std::optional<QFormat> parse_format(std::string_view s);
std::optional<VariantTag> parse_variant_tag(std::string_view s);

constexpr std::size_t index_of(Cause c) { return static_cast<std::size_t>(c); }
constexpr std::size_t index_of(Aspect a) { return static_cast<std::size_t>(a); }
constexpr std::size_t index_of(QFormat f) { return static_cast<std::size_t>(f); }

struct Question {
  std::string id;
  std::string group_id;
  VariantTag variant_tag = VariantTag::Sole;
  std::string video_ref;
  Cause cause = Cause::PriorConflict;
  Aspect aspect = Aspect::Object;
  QFormat format = QFormat::ShortAnswer;
  std::string text;
  std::string gold_answer;
  double duration_s = 0.0;
  std::size_t frame_count = 0;
  // Keys not in the schema, kept so a load/save cycle is lossless.
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const Question&) const = default;
};

// True for the unanswerable-item gold ("no answer", any case).
bool is_no_answer(std::string_view gold);

nlohmann::json to_json(const Question& q);
// Throws SchemaError tagged with `line`.
Question question_from_json(const nlohmann::json& j, std::size_t line);

std::vector<Question> parse_dataset(std::istream& in);
std::vector<Question> load_dataset(const std::filesystem::path& path);
void write_dataset(std::ostream& out, const std::vector<Question>& questions);
void save_dataset(const std::filesystem::path& path, const std::vector<Question>& questions);

struct VariantGroup {
  std::string group_id;
  QFormat format = QFormat::ShortAnswer;
  std::vector<std::string> members;  // question ids in file order
};

// Partitions questions by group_id (first-appearance order) and enforces the
// variant protocol: binary pairs {yes_correct, no_correct}, MC triples {a, b, c},
// short-answer singletons, shared cause/aspect/video within a group.
std::vector<VariantGroup> validate_groups(const std::vector<Question>& questions);

// Token counter for question length. `name` is echoed into reports.
struct Tokenizer {
  std::string name;
  std::function<std::size_t(std::string_view)> count;
};

// Splits on whitespace; every run of alphanumerics (plus apostrophes inside a
// word) is one token and every other printable character is its own token.
std::size_t whitespace_punct_token_count(std::string_view text);
Tokenizer default_tokenizer();

enum class BucketAxis { Duration, Frames, QLen };
std::string_view to_string(BucketAxis axis);
std::optional<BucketAxis> parse_bucket_axis(std::string_view s);

double axis_value(const Question& q, BucketAxis axis, const Tokenizer& tok);

// Index of the half-open bin [e_i, e_{i+1}) holding `value`; values at or
// beyond the last edge land in the overflow bucket `edges.size() - 1`.
std::size_t assign_bucket(double value, const std::vector<double>& edges);
std::size_t assign_bucket(const Question& q, BucketAxis axis,
                          const std::vector<double>& edges, const Tokenizer& tok);

std::vector<double> uniform_edges(double lo, double hi, double width);
std::vector<double> default_edges(BucketAxis axis);
std::string bucket_label(const std::vector<double>& edges, std::size_t bucket);

struct Histogram {
  std::vector<double> edges;
  std::vector<std::size_t> counts;  // edges.size() entries, last is overflow
};

struct StatsOptions {
  std::vector<double> duration_edges = default_edges(BucketAxis::Duration);
  std::vector<double> frame_edges = default_edges(BucketAxis::Frames);
  std::vector<double> qlen_edges = default_edges(BucketAxis::QLen);
};

struct DatasetStats {
  std::array<std::array<std::size_t, 3>, 3> counts{};  // [cause][aspect]
  std::size_t total = 0;
  std::array<std::size_t, 3> format_counts{};
  std::array<double, 3> format_shares{};  // zeros on empty input
  Histogram duration_histogram;
  Histogram frame_histogram;
  Histogram qlen_histogram;
  std::string tokenizer_name;

  std::size_t row_sum(Cause c) const;
  std::size_t column_sum(Aspect a) const;
};

DatasetStats compute_stats(const std::vector<Question>& questions,
                           const Tokenizer& tok = default_tokenizer(),
                           const StatsOptions& opts = {});

// Totals as printed in a published statistics table, used to cross-check the
// cell counts. Any field may be absent.
struct ReferenceTotals {
  std::string label;
  std::optional<std::array<std::array<std::size_t, 3>, 3>> cells;
  std::optional<std::array<std::size_t, 3>> row_totals;
  std::optional<std::array<std::size_t, 3>> column_totals;
  std::optional<std::size_t> grand_total;
};

ReferenceTotals load_reference_totals(const std::filesystem::path& path);

struct TotalsDiscrepancy {
  std::string what;  // e.g. "row prior_conflict"
  std::size_t declared = 0;
  std::size_t from_cells = 0;
};

std::vector<TotalsDiscrepancy> compare_totals(const DatasetStats& stats,
                                              const ReferenceTotals& ref);

}  // namespace haven
