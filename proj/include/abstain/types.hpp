// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace abstain {

enum class AnswerabilityClass { Answerable, Unanswerable };

// Binary by construction: anything a judge emits is mapped onto these two
// values before it reaches reward code (fail-closed mapping lives in parsing).
enum class Verdict { Correct, Incorrect };

inline constexpr std::string_view to_string(AnswerabilityClass c) {
  return c == AnswerabilityClass::Answerable ? "answerable" : "unanswerable";
}

inline constexpr std::string_view to_string(Verdict v) {
  return v == Verdict::Correct ? "correct" : "incorrect";
}

inline std::optional<AnswerabilityClass> answerability_from_string(std::string_view s) {
  if (s == "answerable") return AnswerabilityClass::Answerable;
  if (s == "unanswerable") return AnswerabilityClass::Unanswerable;
  return std::nullopt;
}

inline std::optional<Verdict> verdict_from_string(std::string_view s) {
  if (s == "correct") return Verdict::Correct;
  if (s == "incorrect") return Verdict::Incorrect;
  return std::nullopt;
}

// One labeled query. Answerable records carry a gold answer, unanswerable
// records carry the reference clarification the judge compares against.
struct QueryRecord {
  std::string id;
  std::string question;
  AnswerabilityClass cls = AnswerabilityClass::Answerable;
  std::optional<std::string> gold_answer;
  std::optional<std::string> reference_clarification;
  std::optional<std::string> domain;
  // Optional annotation consumed by the rule-based stub judge.
  std::optional<std::string> key_phrase;

  void validate() const {
    if (id.empty()) throw std::invalid_argument("query record missing id");
    if (question.empty())
      throw std::invalid_argument("query record " + id + " missing question");
    if (cls == AnswerabilityClass::Answerable) {
      if (!gold_answer || gold_answer->empty())
        throw std::invalid_argument("answerable record " + id + " missing gold_answer");
    } else {
      if (!reference_clarification || reference_clarification->empty())
        throw std::invalid_argument("unanswerable record " + id +
                                    " missing reference_clarification");
    }
  }
};

}  // namespace abstain
