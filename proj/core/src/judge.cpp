// SPDX-License-Identifier: Apache-2.0

#include "haven/judge.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

namespace haven {

using json = nlohmann::json;

namespace {

constexpr std::string_view kMcJudge =
    R"tpl(You are a professional homework grading tool. I will provide you with four rules for grading:
1. This is a multiple-choice question. Judge the correctness based on the selected letter and actual content of the provided answers.
2. Regardless of the question type, respond only with either 1 or 0, without any additional explanation.
3. 1 means the prediction is correct, and 0 means it is incorrect.
4. If the predicted answer matches the correct answer in meaning, even if it is phrased differently, consider it correct.
For example, if the prediction conveys the same meaning as the standard answer, you should respond with 1.
Based on the question and its standard answer, is the prediction correct? If yes, return only 1; otherwise, return only 0.
Question: {question}
Standard Answer: {answer}
The Predicted Answer: {prediction})tpl";

constexpr std::string_view kBcJudge =
    R"tpl(You are a professional homework grading tool. I will provide you with four rules for grading:
1. This is a yes/no question. The Standard Answer is only Yes/No, please directly compare the standard answer with 'yes' or 'no' in the predicted answer.
2. No matter what kind of questions, only response with one of 1 or 0. No more explanation.
3. 1 means correct (they are the same), 0 means wrong (they are different).
For example, if the prediction conveys the same meaning as the standard answer, you should respond with 1.
Based on the question, is the prediction correct? If yes, only return 1, otherwise only return 0.
Question: {question}
Standard Answer: {answer}
The Predicted Answer: {prediction})tpl";

// Rule numbering runs to 6 although the preamble announces four rules.
constexpr std::string_view kSaJudge =
    R"tpl(You are a professional homework grading tool. I will provide you with four rules for grading
1. The Standard Answer is a sentence. Compare the provided predicted answers based on their meaning rather than exact wording. The prediction is correct if it conveys the same intent.
2. If the question asks about identity or species, the predicted answer is correct as long as the core identity or species is correct, even if descriptive adjectives differ.
3. If the question asks about a scene, the predicted answer is correct if the described scene exists in the standard answer or is similar.
4. If the answer indicates that the asked character, object or event is not visible or does not exist, it should be considered as "No answer."
5. Regardless of the question type, respond only with either 1 or 0, without any additional explanation.
6. 1 means correct, and 0 means incorrect.
For example, if the prediction conveys the same meaning as the standard answer, even if phrased differently, you should respond with 1.
Based on the question, is the prediction correct? If yes, return only 1; otherwise, return only 0.
Question: {question}
Standard Answer: {answer}
The Predicted Answer: {prediction})tpl";

constexpr std::string_view kMcExtract =
    R"tpl(This is a multiple-choice question. Based on the given question and reasoning process, extract the corresponding answer of the reasoning process.
Question: {question}
Reasoning Process: {prediction}
Instructions:
1. Identify the correct answer based on the reasoning process.
2. If the reasoning process directly mentions one of the given choices (A, B, or C), return the corresponding letter along with the full text of that option (e.g., "A. Option text").
3. If the reasoning process provides an answer that does not explicitly mention A, B, or C, compare its meaning to the given choices and return the best-matching option in the format "Letter. Option text".
4. If the reasoning process concludes that the correct answer is "no answer" or "I don't know", return "no answer".
5. Return only the final answer, without explanation or additional text.
6. Foucs more on the final summary sentence.)tpl";

constexpr std::string_view kMcCotJudge =
    R"tpl(You are a professional homework grading tool. I will provide you with four rules for grading:
1. This is a multiple-choice question. Judge the correctness based on selected letter and actual content of the provided answers.
2. Regardless of the question type, respond only with either 1 or 0, without any additional explanation.
3. 1 means the prediction is correct, and 0 means it is incorrect.
4. If the predicted answer matches the correct answer in meaning, even if it is phrased differently, consider it correct.
For example, if the prediction conveys the same meaning as the standard answer, you should respond with 1.
Based on the question and its standard answer, is the prediction correct? If yes, return only 1; otherwise, return only 0.
Question: {question}
Standard Answer: {answer}
The Predicted Answer: {prediction})tpl";

// The binary extraction prompt opens with "multiple-choice" and skips rule 4;
// both quirks are kept verbatim.
constexpr std::string_view kBcExtract =
    R"tpl(This is a multiple-choice question. Based on the given question and reasoning process, extract the corresponding answer of the reasoning process.
Question: {question}
Reasoning Process: {prediction}
Instructions:
1. Identify the correct answer based on the reasoning process.
2. If the reasoning process explicitly states "yes" or "no", return direct "yes" or "no"
3. If the reasoning process concludes that the correct answer is "no answer" or "I don't know", return "no answer".
5. Return only the final "yes" or "no", without explanation or additional text.)tpl";

constexpr std::string_view kBcCotJudge =
    R"tpl(You are a professional homework grading tool. I will provide you with four rules for grading
1. This is a yes/no question. The Standard Answer is only Yes/No, please directly compare the standard answer with 'yes' or 'no' in the predicted answer.
2. No matter what kind of questions, only response with one of 1 or 0. No more explaination.
3. 1 means correct (they are the same), 0 means wrong (they are different).
For example, if the prediction conveys the same meaning as the standard answer, you should respond with 1.
Based on the question, is the prediction correct? If yes, only return 1, otherwise only return 0.
Question: {question}
Standard Answer: {answer}
The Predicted Answer: {prediction})tpl";

constexpr std::string_view kSaCotJudge = kSaJudge;

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Drops wrapping quotes/backticks and a trailing period.
std::string_view strip_decoration(std::string_view s) {
  s = trim(s);
  while (s.size() >= 2 && (s.front() == '"' || s.front() == '\'' || s.front() == '`') &&
         s.back() == s.front()) {
    s = trim(s.substr(1, s.size() - 2));
  }
  if (!s.empty() && s.back() == '.') s.remove_suffix(1);
  return trim(s);
}

json user_turn(const std::string& text) { return {{"role", "user"}, {"content", text}}; }
json assistant_turn(const std::string& text) { return {{"role", "assistant"}, {"content", text}}; }

}  // namespace

std::string_view template_body(TemplateId id) {
  switch (id) {
    case TemplateId::MC_Judge: return kMcJudge;
    case TemplateId::BC_Judge: return kBcJudge;
    case TemplateId::SA_Judge: return kSaJudge;
    case TemplateId::MC_Extract: return kMcExtract;
    case TemplateId::MC_CotJudge: return kMcCotJudge;
    case TemplateId::BC_Extract: return kBcExtract;
    case TemplateId::BC_CotJudge: return kBcCotJudge;
    case TemplateId::SA_CotJudge: return kSaCotJudge;
  }
  return {};
}

std::string_view template_name(TemplateId id) {
  switch (id) {
    case TemplateId::MC_Judge: return "mc_judge";
    case TemplateId::BC_Judge: return "bc_judge";
    case TemplateId::SA_Judge: return "sa_judge";
    case TemplateId::MC_Extract: return "mc_extract";
    case TemplateId::MC_CotJudge: return "mc_cot_judge";
    case TemplateId::BC_Extract: return "bc_extract";
    case TemplateId::BC_CotJudge: return "bc_cot_judge";
    case TemplateId::SA_CotJudge: return "sa_cot_judge";
  }
  return {};
}

std::string render_prompt(std::string_view body, const PromptValues& values) {
  struct Slot {
    std::string_view token;
    const std::optional<std::string>* value;
  };
  const Slot slots[] = {{"{question}", &values.question},
                        {"{answer}", &values.answer},
                        {"{prediction}", &values.prediction}};
  std::string out;
  out.reserve(body.size() + 256);
  std::size_t i = 0;
  while (i < body.size()) {
    bool matched = false;
    if (body[i] == '{') {
      for (const auto& slot : slots) {
        if (body.substr(i, slot.token.size()) == slot.token) {
          if (!slot.value->has_value()) {
            throw TemplateError("no value for placeholder " + std::string(slot.token));
          }
          out += **slot.value;
          i += slot.token.size();
          matched = true;
          break;
        }
      }
    }
    if (!matched) out += body[i++];
  }
  return out;
}

std::string render_prompt(TemplateId id, const PromptValues& values) {
  return render_prompt(template_body(id), values);
}

bool parse_verdict(std::string_view raw) {
  const auto t = trim(raw);
  if (t == "1") return true;
  if (t == "0") return false;
  throw FormatError("judge verdict is not \"1\" or \"0\": \"" + std::string(raw.substr(0, 80)) + "\"");
}

TemplateId judge_template(QFormat format, PromptMode mode) {
  const bool cot = mode == PromptMode::CoT;
  switch (format) {
    case QFormat::Binary: return cot ? TemplateId::BC_CotJudge : TemplateId::BC_Judge;
    case QFormat::MultipleChoice: return cot ? TemplateId::MC_CotJudge : TemplateId::MC_Judge;
    case QFormat::ShortAnswer: return cot ? TemplateId::SA_CotJudge : TemplateId::SA_Judge;
  }
  return TemplateId::SA_Judge;
}

std::optional<TemplateId> extract_template(QFormat format, PromptMode mode) {
  if (mode != PromptMode::CoT) return std::nullopt;
  if (format == QFormat::Binary) return TemplateId::BC_Extract;
  if (format == QFormat::MultipleChoice) return TemplateId::MC_Extract;
  return std::nullopt;
}

std::optional<std::string> normalize_extraction(QFormat format, std::string_view raw) {
  const std::string_view s = strip_decoration(raw);
  const std::string l = lower(s);
  if (l == "no answer" || l == "\"no answer\"") return std::string("no answer");
  if (format == QFormat::Binary) {
    if (l == "yes" || l == "no") return l;
    return std::nullopt;
  }
  if (format == QFormat::MultipleChoice) {
    static const std::regex option(R"(^([ABCabc])\s*[.)]\s*(\S[\s\S]*)$)");
    std::cmatch m;
    const std::string text(trim(raw));
    if (std::regex_match(text.c_str(), m, option)) {
      std::string body = m[2].str();
      while (!body.empty() && std::isspace(static_cast<unsigned char>(body.back()))) body.pop_back();
      if (body.find('\n') != std::string::npos) return std::nullopt;
      const char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(m[1].str()[0])));
      return std::string(1, letter) + ". " + body;
    }
    return std::nullopt;
  }
  return std::nullopt;
}

json to_json(const Verdict& v) {
  return json{{"question_id", v.question_id},
              {"correct", v.correct},
              {"extracted_answer", v.extracted_answer ? json(*v.extracted_answer) : json(nullptr)},
              {"judge_model", v.judge_model},
              {"raw_judge_output", v.raw_judge_output},
              {"unjudgeable", v.unjudgeable}};
}

Verdict verdict_from_json(const json& j) {
  Verdict v;
  v.question_id = j.at("question_id").get<std::string>();
  v.correct = j.at("correct").get<bool>();
  if (j.contains("extracted_answer") && !j["extracted_answer"].is_null()) {
    v.extracted_answer = j["extracted_answer"].get<std::string>();
  }
  v.judge_model = j.value("judge_model", std::string{});
  v.raw_judge_output = j.value("raw_judge_output", std::string{});
  v.unjudgeable = j.value("unjudgeable", false);
  return v;
}

std::string Judge::extract_answer(const Question& q, const std::string& reasoning) const {
  const auto tpl = extract_template(q.format, PromptMode::CoT);
  if (!tpl) throw DomainError("answer extraction only applies to binary and multiple-choice items");
  const std::string prompt = render_prompt(*tpl, {q.text, std::nullopt, reasoning});

  json messages = json::array({user_turn(prompt)});
  const Completion first = client_.complete(messages);
  if (auto norm = normalize_extraction(q.format, first.text)) return *norm;

  messages.push_back(assistant_turn(first.text));
  messages.push_back(user_turn(q.format == QFormat::Binary ? kBinaryExtractReask : kChoiceExtractReask));
  const Completion second = client_.complete(messages);
  if (auto norm = normalize_extraction(q.format, second.text)) return *norm;
  throw ExtractionFormatError("question " + q.id + ": extraction reply \"" +
                              std::string(trim(second.text).substr(0, 80)) + "\" fits no allowed shape");
}

Verdict Judge::judge_answer(const Question& q, const std::string& prediction, PromptMode mode) const {
  const std::string prompt =
      render_prompt(judge_template(q.format, mode), {q.text, q.gold_answer, prediction});
  Verdict v;
  v.question_id = q.id;
  v.judge_model = model_name();

  json messages = json::array({user_turn(prompt)});
  const Completion first = client_.complete(messages);
  v.raw_judge_output = first.text;
  try {
    v.correct = parse_verdict(first.text);
    return v;
  } catch (const FormatError&) {
  }

  messages.push_back(assistant_turn(first.text));
  messages.push_back(user_turn(kVerdictReask));
  const Completion second = client_.complete(messages);
  v.raw_judge_output = second.text;
  try {
    v.correct = parse_verdict(second.text);
  } catch (const FormatError&) {
    v.correct = false;
    v.unjudgeable = true;
  }
  return v;
}

Verdict Judge::evaluate(const Question& q, const std::string& response, PromptMode mode) const {
  if (!extract_template(q.format, mode)) return judge_answer(q, response, mode);

  std::string extracted;
  try {
    extracted = extract_answer(q, response);
  } catch (const ExtractionFormatError& e) {
    Verdict v;
    v.question_id = q.id;
    v.judge_model = model_name();
    v.raw_judge_output = e.what();
    v.unjudgeable = true;
    return v;
  }
  Verdict v = judge_answer(q, extracted, mode);
  v.extracted_answer = extracted;
  return v;
}

}  // namespace haven
