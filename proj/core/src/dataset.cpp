// SPDX-License-Identifier: Apache-2.0

#include "haven/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "haven/error.hpp"

namespace haven {

namespace {

using json = nlohmann::json;

constexpr std::array<std::string_view, 3> kCauseNames{
    "prior_conflict", "in_context_conflict", "capability_deficiency"};
constexpr std::array<std::string_view, 3> kAspectNames{"object", "scene", "event"};
constexpr std::array<std::string_view, 3> kFormatNames{"binary", "multiple_choice",
                                                       "short_answer"};
constexpr std::array<std::string_view, 6> kTagNames{"yes_correct", "no_correct", "a",
                                                    "b",           "c",          "sole"};

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::string_view, N>& names, std::string_view s) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<E>(i);
  }
  return std::nullopt;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

const std::unordered_set<std::string>& schema_keys() {
  static const std::unordered_set<std::string> keys{
      "id",     "group_id", "variant_tag", "video_ref", "cause",      "aspect",
      "format", "question", "answer",      "duration_s", "frame_count"};
  return keys;
}

std::string require_string(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(line, std::string("missing field '") + key + "'");
  if (!it->is_string()) throw SchemaError(line, std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

char option_letter(VariantTag t) {
  switch (t) {
    case VariantTag::A: return 'A';
    case VariantTag::B: return 'B';
    case VariantTag::C: return 'C';
    default: return '\0';
  }
}

void check_question_invariants(const Question& q, std::size_t line) {
  // "no answer" golds are legal for every format; only the tag is checked.
  switch (q.format) {
    case QFormat::Binary: {
      if (q.variant_tag != VariantTag::YesCorrect && q.variant_tag != VariantTag::NoCorrect) {
        throw SchemaError(line, "binary question '" + q.id + "' needs tag yes_correct or no_correct");
      }
      if (is_no_answer(q.gold_answer)) break;
      const std::string gold = lower(trim(q.gold_answer));
      const std::string expected = q.variant_tag == VariantTag::YesCorrect ? "yes" : "no";
      if (gold != "yes" && gold != "no") {
        throw SchemaError(line, "binary question '" + q.id + "' must have answer Yes or No");
      }
      if (gold != expected) {
        throw SchemaError(line, "binary question '" + q.id + "' answer contradicts tag " +
                                    std::string(to_string(q.variant_tag)));
      }
      break;
    }
    case QFormat::MultipleChoice: {
      const char letter = option_letter(q.variant_tag);
      if (letter == '\0') {
        throw SchemaError(line, "multiple-choice question '" + q.id + "' needs tag a, b or c");
      }
      if (is_no_answer(q.gold_answer)) break;
      const std::string_view gold = trim(q.gold_answer);
      const bool starts = !gold.empty() &&
                          std::toupper(static_cast<unsigned char>(gold.front())) == letter;
      const bool delimited = gold.size() == 1 || !std::isalnum(static_cast<unsigned char>(gold[1]));
      if (!starts || !delimited) {
        throw SchemaError(line, "multiple-choice question '" + q.id + "' answer must start with option " +
                                    std::string(1, letter));
      }
      break;
    }
    case QFormat::ShortAnswer:
      if (q.variant_tag != VariantTag::Sole) {
        throw SchemaError(line, "short-answer question '" + q.id + "' needs tag sole");
      }
      break;
  }
}

}  // namespace

std::string_view to_string(Cause c) { return kCauseNames[index_of(c)]; }
std::string_view to_string(Aspect a) { return kAspectNames[index_of(a)]; }
std::string_view to_string(QFormat f) { return kFormatNames[index_of(f)]; }
std::string_view to_string(VariantTag t) { return kTagNames[static_cast<std::size_t>(t)]; }

std::string_view display_name(Cause c) {
  constexpr std::array<std::string_view, 3> names{"Prior Conflict", "In-context Conflict",
                                                  "Capability"};
  return names[index_of(c)];
}
std::string_view display_name(Aspect a) {
  constexpr std::array<std::string_view, 3> names{"Object", "Scene", "Event"};
  return names[index_of(a)];
}
std::string_view display_name(QFormat f) {
  constexpr std::array<std::string_view, 3> names{"Binary-choice", "Multiple-choice",
                                                  "Short-answer"};
  return names[index_of(f)];
}

std::optional<Cause> parse_cause(std::string_view s) { return lookup<Cause>(kCauseNames, s); }
std::optional<Aspect> parse_aspect(std::string_view s) { return lookup<Aspect>(kAspectNames, s); }
std::optional<QFormat> parse_format(std::string_view s) { return lookup<QFormat>(kFormatNames, s); }
std::optional<VariantTag> parse_variant_tag(std::string_view s) {
  return lookup<VariantTag>(kTagNames, s);
}

bool is_no_answer(std::string_view gold) { return lower(trim(gold)) == "no answer"; }

json to_json(const Question& q) {
  json j = q.extra.is_object() ? q.extra : json::object();
  j["id"] = q.id;
  j["group_id"] = q.group_id;
  j["variant_tag"] = to_string(q.variant_tag);
  j["video_ref"] = q.video_ref;
  j["cause"] = to_string(q.cause);
  j["aspect"] = to_string(q.aspect);
  j["format"] = to_string(q.format);
  j["question"] = q.text;
  j["answer"] = q.gold_answer;
  j["duration_s"] = q.duration_s;
  j["frame_count"] = q.frame_count;
  return j;
}

Question question_from_json(const json& j, std::size_t line) {
  if (!j.is_object()) throw SchemaError(line, "record must be a JSON object");
  Question q;
  q.id = require_string(j, "id", line);
  if (q.id.empty()) throw SchemaError(line, "empty id");
  q.group_id = require_string(j, "group_id", line);
  q.video_ref = require_string(j, "video_ref", line);
  q.text = require_string(j, "question", line);
  q.gold_answer = require_string(j, "answer", line);

  const auto enum_field = [&](const char* key, auto parse) {
    const std::string raw = require_string(j, key, line);
    auto v = parse(raw);
    if (!v) throw SchemaError(line, std::string("unknown ") + key + " '" + raw + "'");
    return *v;
  };
  q.variant_tag = enum_field("variant_tag", parse_variant_tag);
  q.cause = enum_field("cause", parse_cause);
  q.aspect = enum_field("aspect", parse_aspect);
  q.format = enum_field("format", parse_format);

  auto dur = j.find("duration_s");
  if (dur == j.end() || !dur->is_number()) throw SchemaError(line, "field 'duration_s' must be a number");
  q.duration_s = dur->get<double>();
  if (!(q.duration_s >= 0.0) || !std::isfinite(q.duration_s)) {
    throw SchemaError(line, "duration_s must be a finite non-negative number");
  }
  auto fc = j.find("frame_count");
  if (fc == j.end() || !fc->is_number_integer() || fc->get<long long>() < 0) {
    throw SchemaError(line, "field 'frame_count' must be a non-negative integer");
  }
  q.frame_count = fc->get<std::size_t>();

  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!schema_keys().contains(it.key())) q.extra[it.key()] = it.value();
  }
  check_question_invariants(q, line);
  return q;
}

std::vector<Question> parse_dataset(std::istream& in) {
  std::vector<Question> out;
  std::unordered_map<std::string, std::size_t> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (trim(text).empty()) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(line, e.what());
    }
    Question q = question_from_json(j, line);
    auto [it, inserted] = seen.emplace(q.id, line);
    if (!inserted) {
      throw IntegrityError("line " + std::to_string(line) + ": duplicate id '" + q.id +
                           "' (first seen on line " + std::to_string(it->second) + ")");
    }
    out.push_back(std::move(q));
  }
  return out;
}

std::vector<Question> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset " + path.string());
  return parse_dataset(in);
}

void write_dataset(std::ostream& out, const std::vector<Question>& questions) {
  for (const auto& q : questions) out << to_json(q).dump() << '\n';
}

void save_dataset(const std::filesystem::path& path, const std::vector<Question>& questions) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write dataset " + path.string());
  write_dataset(out, questions);
}

std::vector<VariantGroup> validate_groups(const std::vector<Question>& questions) {
  std::vector<VariantGroup> groups;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::vector<const Question*>> members;
  for (const auto& q : questions) {
    auto [it, inserted] = index.emplace(q.group_id, groups.size());
    if (inserted) {
      groups.push_back({q.group_id, q.format, {}});
      members.emplace_back();
    }
    groups[it->second].members.push_back(q.id);
    members[it->second].push_back(&q);
  }

  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& group = groups[g];
    const auto& qs = members[g];
    const Question& head = *qs.front();
    for (const Question* q : qs) {
      if (q->format != head.format) {
        throw IntegrityError("group " + group.group_id + ": mixed formats");
      }
      if (q->cause != head.cause) throw IntegrityError("group " + group.group_id + ": mixed cause");
      if (q->aspect != head.aspect) throw IntegrityError("group " + group.group_id + ": mixed aspect");
      if (q->video_ref != head.video_ref) {
        throw IntegrityError("group " + group.group_id + ": mixed video_ref");
      }
    }

    std::size_t expected = 1;
    std::vector<VariantTag> required;
    switch (group.format) {
      case QFormat::Binary:
        expected = 2;
        required = {VariantTag::YesCorrect, VariantTag::NoCorrect};
        break;
      case QFormat::MultipleChoice:
        expected = 3;
        required = {VariantTag::A, VariantTag::B, VariantTag::C};
        break;
      case QFormat::ShortAnswer:
        expected = 1;
        required = {VariantTag::Sole};
        break;
    }
    if (qs.size() != expected) {
      throw ProtocolViolation(group.group_id, std::string(to_string(group.format)) + " group has " +
                                                  std::to_string(qs.size()) + " members, expected " +
                                                  std::to_string(expected));
    }
    for (VariantTag tag : required) {
      const auto n = std::count_if(qs.begin(), qs.end(),
                                   [tag](const Question* q) { return q->variant_tag == tag; });
      if (n != 1) {
        throw ProtocolViolation(group.group_id, "variant tag " + std::string(to_string(tag)) +
                                                    " appears " + std::to_string(n) + " times");
      }
    }
  }
  return groups;
}

std::size_t whitespace_punct_token_count(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    // Bytes >= 0x80 are treated as word characters so UTF-8 words stay whole.
    const bool wordish = std::isalnum(c) || c >= 0x80 ||
                         (c == '\'' && in_word && i + 1 < text.size() &&
                          std::isalnum(static_cast<unsigned char>(text[i + 1])));
    if (wordish) {
      if (!in_word) ++n;
      in_word = true;
    } else {
      in_word = false;
      if (!std::isspace(c)) ++n;
    }
  }
  return n;
}

Tokenizer default_tokenizer() {
  return {"whitespace_punct", [](std::string_view s) { return whitespace_punct_token_count(s); }};
}

std::string_view to_string(BucketAxis axis) {
  switch (axis) {
    case BucketAxis::Duration: return "duration";
    case BucketAxis::Frames: return "frames";
    case BucketAxis::QLen: return "qlen";
  }
  return "?";
}

std::optional<BucketAxis> parse_bucket_axis(std::string_view s) {
  if (s == "duration") return BucketAxis::Duration;
  if (s == "frames") return BucketAxis::Frames;
  if (s == "qlen") return BucketAxis::QLen;
  return std::nullopt;
}

double axis_value(const Question& q, BucketAxis axis, const Tokenizer& tok) {
  switch (axis) {
    case BucketAxis::Duration: return q.duration_s;
    case BucketAxis::Frames: return static_cast<double>(q.frame_count);
    case BucketAxis::QLen: return static_cast<double>(tok.count(q.text));
  }
  return 0.0;
}

std::size_t assign_bucket(double value, const std::vector<double>& edges) {
  if (edges.empty()) throw DomainError("bucket edges must not be empty");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) throw DomainError("bucket edges must be strictly increasing");
  }
  if (std::isnan(value) || value < 0.0) throw DomainError("negative bucket value");
  if (value < edges.front()) throw DomainError("value below first bucket edge");
  const auto it = std::upper_bound(edges.begin(), edges.end(), value);
  return static_cast<std::size_t>(it - edges.begin()) - 1;
}

std::size_t assign_bucket(const Question& q, BucketAxis axis, const std::vector<double>& edges,
                          const Tokenizer& tok) {
  return assign_bucket(axis_value(q, axis, tok), edges);
}

std::vector<double> uniform_edges(double lo, double hi, double width) {
  if (!(width > 0.0) || !(hi > lo)) throw DomainError("invalid uniform edge range");
  std::vector<double> edges;
  const auto n = static_cast<std::size_t>(std::llround((hi - lo) / width));
  for (std::size_t i = 0; i <= n; ++i) edges.push_back(lo + width * static_cast<double>(i));
  return edges;
}

std::vector<double> default_edges(BucketAxis axis) {
  switch (axis) {
    case BucketAxis::Duration: return uniform_edges(0, 70, 10);
    case BucketAxis::Frames: return uniform_edges(0, 1200, 100);
    case BucketAxis::QLen: return uniform_edges(0, 50, 5);
  }
  return {};
}

std::string bucket_label(const std::vector<double>& edges, std::size_t bucket) {
  const auto fmt = [](double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  };
  if (bucket + 1 >= edges.size()) return ">=" + fmt(edges.back());
  return "[" + fmt(edges[bucket]) + "," + fmt(edges[bucket + 1]) + ")";
}

std::size_t DatasetStats::row_sum(Cause c) const {
  const auto& row = counts[index_of(c)];
  return row[0] + row[1] + row[2];
}

std::size_t DatasetStats::column_sum(Aspect a) const {
  std::size_t s = 0;
  for (const auto& row : counts) s += row[index_of(a)];
  return s;
}

DatasetStats compute_stats(const std::vector<Question>& questions, const Tokenizer& tok,
                           const StatsOptions& opts) {
  DatasetStats st;
  st.tokenizer_name = tok.name;
  st.duration_histogram = {opts.duration_edges, std::vector<std::size_t>(opts.duration_edges.size())};
  st.frame_histogram = {opts.frame_edges, std::vector<std::size_t>(opts.frame_edges.size())};
  st.qlen_histogram = {opts.qlen_edges, std::vector<std::size_t>(opts.qlen_edges.size())};

  for (const auto& q : questions) {
    ++st.counts[index_of(q.cause)][index_of(q.aspect)];
    ++st.format_counts[index_of(q.format)];
    ++st.duration_histogram.counts[assign_bucket(q, BucketAxis::Duration, opts.duration_edges, tok)];
    ++st.frame_histogram.counts[assign_bucket(q, BucketAxis::Frames, opts.frame_edges, tok)];
    ++st.qlen_histogram.counts[assign_bucket(q, BucketAxis::QLen, opts.qlen_edges, tok)];
  }
  st.total = questions.size();
  if (st.total > 0) {
    for (std::size_t f = 0; f < 3; ++f) {
      st.format_shares[f] = static_cast<double>(st.format_counts[f]) / static_cast<double>(st.total);
    }
  }
  return st;
}

ReferenceTotals load_reference_totals(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open reference totals " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(1, e.what());
  }
  ReferenceTotals ref;
  ref.label = j.value("label", path.filename().string());

  const auto by_name = [&](const json& obj, auto names_parse, const char* what) {
    std::array<std::size_t, 3> out{};
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      auto idx = names_parse(it.key());
      if (!idx) throw SchemaError(1, std::string("unknown ") + what + " '" + it.key() + "'");
      out[static_cast<std::size_t>(*idx)] = it.value().get<std::size_t>();
    }
    return out;
  };

  if (j.contains("cells")) {
    std::array<std::array<std::size_t, 3>, 3> cells{};
    for (auto it = j["cells"].begin(); it != j["cells"].end(); ++it) {
      auto c = parse_cause(it.key());
      if (!c) throw SchemaError(1, "unknown cause '" + it.key() + "'");
      cells[index_of(*c)] = by_name(it.value(), parse_aspect, "aspect");
    }
    ref.cells = cells;
  }
  if (j.contains("row_totals")) ref.row_totals = by_name(j["row_totals"], parse_cause, "cause");
  if (j.contains("column_totals")) {
    ref.column_totals = by_name(j["column_totals"], parse_aspect, "aspect");
  }
  if (j.contains("grand_total")) ref.grand_total = j["grand_total"].get<std::size_t>();
  return ref;
}

std::vector<TotalsDiscrepancy> compare_totals(const DatasetStats& stats, const ReferenceTotals& ref) {
  std::vector<TotalsDiscrepancy> out;
  if (ref.cells) {
    for (Cause c : kCauses) {
      for (Aspect a : kAspects) {
        const auto declared = (*ref.cells)[index_of(c)][index_of(a)];
        const auto actual = stats.counts[index_of(c)][index_of(a)];
        if (declared != actual) {
          out.push_back({"cell " + std::string(to_string(c)) + "/" + std::string(to_string(a)),
                         declared, actual});
        }
      }
    }
  }
  if (ref.row_totals) {
    for (Cause c : kCauses) {
      const auto declared = (*ref.row_totals)[index_of(c)];
      if (declared != stats.row_sum(c)) {
        out.push_back({"row " + std::string(to_string(c)), declared, stats.row_sum(c)});
      }
    }
  }
  if (ref.column_totals) {
    for (Aspect a : kAspects) {
      const auto declared = (*ref.column_totals)[index_of(a)];
      if (declared != stats.column_sum(a)) {
        out.push_back({"column " + std::string(to_string(a)), declared, stats.column_sum(a)});
      }
    }
  }
  if (ref.grand_total && *ref.grand_total != stats.total) {
    out.push_back({"grand total", *ref.grand_total, stats.total});
  }
  return out;
}

}  // namespace haven
