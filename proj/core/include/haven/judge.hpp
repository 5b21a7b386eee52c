// SPDX-License-Identifier: Apache-2.0
//
// Two-stage LLM judge: optional answer extraction for chain-of-thought
// responses, then a strict 1/0 correctness verdict.

#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "haven/dataset.hpp"
#include "haven/model_client.hpp"

namespace haven {

inline constexpr const char* kDefaultJudgeModel = "gpt-4o-mini";

enum class TemplateId {
  MC_Judge,
  BC_Judge,
  SA_Judge,
  MC_Extract,
  MC_CotJudge,
  BC_Extract,
  BC_CotJudge,
  SA_CotJudge,
};

inline constexpr std::array<TemplateId, 8> kTemplateIds{
    TemplateId::MC_Judge,    TemplateId::BC_Judge,   TemplateId::SA_Judge,
    TemplateId::MC_Extract,  TemplateId::MC_CotJudge, TemplateId::BC_Extract,
    TemplateId::BC_CotJudge, TemplateId::SA_CotJudge};

// Template text with placeholders {question}, {answer}, {prediction}.
std::string_view template_body(TemplateId id);
// Snake-case name, also the fixture file stem ("mc_judge", "bc_extract", ...).
std::string_view template_name(TemplateId id);

struct PromptValues {
  std::optional<std::string> question;
  std::optional<std::string> answer;
  std::optional<std::string> prediction;
};

// Single-pass placeholder substitution; substituted text is never rescanned.
// Throws TemplateError if the body uses a placeholder without a value.
std::string render_prompt(std::string_view body, const PromptValues& values);
std::string render_prompt(TemplateId id, const PromptValues& values);

// Accepts exactly "1" or "0" after trimming whitespace; FormatError otherwise.
bool parse_verdict(std::string_view raw);

TemplateId judge_template(QFormat format, PromptMode mode);
// Extraction applies to chain-of-thought binary and multiple-choice items only.
std::optional<TemplateId> extract_template(QFormat format, PromptMode mode);

// Maps a raw extraction reply onto the allowed shapes: binary -> "yes", "no"
// or "no answer"; multiple choice -> "X. option text" or "no answer".
std::optional<std::string> normalize_extraction(QFormat format, std::string_view raw);

inline constexpr const char* kVerdictReask = "Respond with only 1 or 0.";
inline constexpr const char* kBinaryExtractReask =
    "Return only \"yes\", \"no\" or \"no answer\".";
inline constexpr const char* kChoiceExtractReask =
    "Return only the answer in the format \"Letter. Option text\", or \"no answer\".";

struct Verdict {
  std::string question_id;
  bool correct = false;
  std::optional<std::string> extracted_answer;
  std::string judge_model;
  std::string raw_judge_output;
  // Judge output never parsed after the re-ask; counted as incorrect.
  bool unjudgeable = false;

  bool operator==(const Verdict&) const = default;
};

nlohmann::json to_json(const Verdict& v);
Verdict verdict_from_json(const nlohmann::json& j);

class Judge {
 public:
  explicit Judge(ChatClient client) : client_(std::move(client)) {}

  // Throws ExtractionFormatError if neither reply fits an allowed shape.
  std::string extract_answer(const Question& q, const std::string& reasoning) const;

  // Judges an already-final prediction. `mode` picks the Direct or CoT template.
  Verdict judge_answer(const Question& q, const std::string& prediction,
                       PromptMode mode = PromptMode::Direct) const;

  // Full pipeline for one model response: extraction for CoT binary/MC, then
  // judging. Extraction failures come back as unjudgeable verdicts.
  Verdict evaluate(const Question& q, const std::string& response, PromptMode mode) const;

  const std::string& model_name() const noexcept { return client_.endpoint().model_name; }

 private:
  ChatClient client_;
};

}  // namespace haven
