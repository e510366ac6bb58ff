// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace abstain {

// Instruction prompt that elicits the structured response format.
inline constexpr std::string_view kModelInstructionTemplate =
    R"(Question:
{question}
Respond using the following structure without repeating the original question.
The reasoning process must be written inside <thinking> </thinking> tags, and the final answer must be written inside <answer> </answer> tags.
You must follow this structure:
<thinking>
Reasoning process here
</thinking>
<answer>
Final answer here, for example: \boxed{42}.
If the question is answerable, provide the final answer wrapped in \boxed{}.
If you find the question is unanswerable, reply with \boxed{I don't know.} and then ask the user for the necessary information by phrasing the request as a question, or explain why you cannot answer it.
</answer>
Let's think step by step, <thinking>)";

// Clarification-equivalence judge prompt. The original question is rewritten
// into a meta-question about why it cannot be answered, so the model
// clarification and the reference clarification are compared as explanations
// of the same defect.
inline constexpr std::string_view kClarificationJudgeTemplate =
    R"(You are a diligent and precise assistant tasked with evaluating the correctness of responses. Think step by step as you make your evaluation.

You will receive a question, an output sentence, and the correct answer. Your task is to determine if the output sentence accurately answers the question based on the provided correct answer. Think step by step and respond with either [Correct] or [Incorrect].
-
Special considerations:
1. **Multiple statements**: If the output contains multiple statements, compare its final or main statement with the correct answer. If the final statement is unclear or does not match the correct answer in meaning, respond with [Incorrect].
2. **Mathematical or logical problems**: If the formats differ but the meanings are equivalent, respond with [Correct].
3. **No explicit options**: If the question does not provide options, the output must match the correct answer in content and meaning to be considered [Correct].
-
Please present your response in the following JSON format:
{
    "reasoning": "Your step-by-step reasoning here.",
    "judgment": "Correct or Incorrect"
}
-
Question: """The following problem is known to be unanswerable, ill-posed, or logically flawed as stated.

Problem:
{question}

Question: What is the MAIN reason why this problem cannot be reliably answered as stated?
The core reason can be, for example:
- some crucial information or conditions are missing or unspecified;
- the assumptions or premises are mutually inconsistent or logically contradictory;
- the setup is impossible or violates the stated constraints;
- key terms or concepts are undefined, ambiguous, or too vague to apply;
- the problem is underdetermined or non-unique with the given data;
- or any other structural defect in the problem statement that makes a reliable answer impossible.
Your answer should clearly describe this main defect in natural language."""
Output sentence: """{model_answer}"""
Correct answer: """{reference_clarification}""")";

// Open-domain answer judge prompt for answerable questions.
inline constexpr std::string_view kAnswerJudgeTemplate =
    R"(You are grading an open-domain QA answer.

You are given the question, a ground-truth reference answer, and the model's final answer. The model's answer is the content between <answer> tags (it does not include any intermediate reasoning).

Your goal is to decide whether the model's final answer is correct.
- Mark it as correct if it is semantically equivalent to the reference answer, even if the wording is different or it includes extra correct explanation.
- Mark it as incorrect if it contradicts the reference, misses key required information, answers a different question, is too vague to be judged correct, or explicitly refuses to answer (e.g., says it does not know).

Output format:
- Return exactly one token: "correct" or "incorrect" (lowercase, no quotes, no extra text).

Question:
{question}

Reference answer:
{ground_truth}

Model answer:
{model_output})";

// Substitutes every {name} placeholder in one pass over the template, so
// substituted payloads are never re-scanned. Throws if a listed placeholder
// is absent from the template, so a truncated template cannot render silently.
inline std::string render_template(
    std::string_view tmpl,
    std::initializer_list<std::pair<std::string_view, std::string_view>> substitutions) {
  std::string out;
  out.reserve(tmpl.size() + 256);
  std::vector<bool> found(substitutions.size(), false);
  for (std::size_t i = 0; i < tmpl.size();) {
    bool matched = false;
    if (tmpl[i] == '{') {
      std::size_t k = 0;
      for (const auto& [name, value] : substitutions) {
        const std::size_t len = name.size() + 2;
        if (tmpl.size() - i >= len && tmpl[i + len - 1] == '}' &&
            tmpl.substr(i + 1, name.size()) == name) {
          out += value;
          i += len;
          found[k] = true;
          matched = true;
          break;
        }
        ++k;
      }
    }
    if (!matched) {
      out += tmpl[i];
      ++i;
    }
  }
  std::size_t k = 0;
  for (const auto& [name, value] : substitutions) {
    if (!found[k++])
      throw std::logic_error("template placeholder not found: {" + std::string(name) + "}");
  }
  return out;
}

inline std::string build_model_prompt(std::string_view question) {
  if (question.empty()) throw std::invalid_argument("question must be non-empty");
  return render_template(kModelInstructionTemplate, {{"question", question}});
}

// Meta-question prompt for the clarification verifier. All three payloads are
// embedded verbatim.
inline std::string build_clarification_prompt(std::string_view question,
                                              std::string_view model_clarification,
                                              std::string_view reference_clarification) {
  if (question.empty()) throw std::invalid_argument("question must be non-empty");
  if (model_clarification.empty())
    throw std::invalid_argument("model clarification must be non-empty");
  if (reference_clarification.empty())
    throw std::invalid_argument("reference clarification must be non-empty");
  return render_template(kClarificationJudgeTemplate,
                         {{"question", question},
                          {"model_answer", model_clarification},
                          {"reference_clarification", reference_clarification}});
}

inline std::string build_answer_judge_prompt(std::string_view question,
                                             std::string_view ground_truth,
                                             std::string_view model_answer) {
  if (question.empty()) throw std::invalid_argument("question must be non-empty");
  if (ground_truth.empty()) throw std::invalid_argument("ground truth must be non-empty");
  if (model_answer.empty()) throw std::invalid_argument("model answer must be non-empty");
  return render_template(kAnswerJudgeTemplate, {{"question", question},
                                                {"ground_truth", ground_truth},
                                                {"model_output", model_answer}});
}

}  // namespace abstain
