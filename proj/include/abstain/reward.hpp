// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string_view>

#include "abstain/match.hpp"
#include "abstain/parse.hpp"
#include "abstain/types.hpp"

namespace abstain {

// Composite-reward weights. Defaults reproduce the plain sums of the reward
// definition; the fields exist so the weighted variants stay expressible.
struct RewardConfig {
  double format_weight = 1.0;
  double answer_correct = 1.0;
  // Penalty for abstaining on an answerable query; <= 0. Sweep values
  // of interest: 0, -0.5, -1.
  double false_refusal_penalty = -1.0;
  // Split of the unanswerable-side reward: base credit for the bare
  // abstention plus a bonus for a verified clarification.
  double abstain_base = 0.3;
  double clarification_bonus = 0.7;
  double unanswerable_total = 1.0;

  void validate() const {
    if (abstain_base < 0.0 || clarification_bonus < 0.0)
      throw std::invalid_argument("abstain_base and clarification_bonus must be >= 0");
    if (std::fabs(abstain_base + clarification_bonus - unanswerable_total) > 1e-9)
      throw std::invalid_argument("abstain_base + clarification_bonus must equal unanswerable_total");
    if (false_refusal_penalty > 0.0)
      throw std::invalid_argument("false_refusal_penalty must be <= 0");
    if (answer_correct < 0.0)
      throw std::invalid_argument("answer_correct must be >= 0");
  }
};

// Per-rollout component scores. Exactly one of r_ans / r_ref is set,
// matching the query class; total is the exact sum of two terms.
struct RewardBreakdown {
  double r_fmt = 0.0;
  std::optional<double> r_ans;
  std::optional<double> r_ref;
  std::optional<Verdict> verdict;
  double total = 0.0;
};

inline double format_reward(const ParsedOutput& parsed, const RewardConfig& config) {
  return parsed.format_valid ? config.format_weight : 0.0;
}

// Answerable branch: full credit for a non-abstaining boxed answer the
// matcher accepts, the false-refusal penalty for a boxed abstention,
// zero otherwise (including a missing boxed directive).
inline double answerable_reward(const ParsedOutput& parsed, std::string_view gold,
                                const AnswerMatcher& matcher, const RewardConfig& config) {
  if (gold.empty()) throw std::invalid_argument("answerable_reward requires a gold answer");
  if (parsed.is_abstention) return config.false_refusal_penalty;
  if (parsed.boxed && matcher(*parsed.boxed, gold) == MatchResult::Match)
    return config.answer_correct;
  return 0.0;
}

// Unanswerable branch: base + bonus when the clarification verdict is
// Correct, base alone for any other abstention (a missing clarification is
// unverifiable and scores like an Incorrect verdict), zero when the output
// attempts an answer.
inline double abstention_reward(const ParsedOutput& parsed, std::optional<Verdict> verdict,
                                const RewardConfig& config) {
  if (!parsed.is_abstention) return 0.0;
  if (verdict && *verdict == Verdict::Correct)
    return config.abstain_base + config.clarification_bonus;
  return config.abstain_base;
}

// Class dispatch. A verdict may only accompany unanswerable queries; the
// format component is computed identically for both classes. Abstention on an
// unanswerable query earns the abstention component regardless of structural
// validity (the format component is already zero in that case).
inline RewardBreakdown total_reward(const QueryRecord& query, const ParsedOutput& parsed,
                                    std::optional<Verdict> verdict, const RewardConfig& config,
                                    const AnswerMatcher& matcher = default_matcher()) {
  RewardBreakdown out;
  out.r_fmt = format_reward(parsed, config);
  if (query.cls == AnswerabilityClass::Answerable) {
    if (verdict)
      throw std::invalid_argument("verdict supplied for answerable query " + query.id);
    if (!query.gold_answer || query.gold_answer->empty())
      throw std::invalid_argument("answerable query " + query.id + " missing gold answer");
    out.r_ans = answerable_reward(parsed, *query.gold_answer, matcher, config);
    out.total = out.r_fmt + *out.r_ans;
  } else {
    out.verdict = verdict;
    out.r_ref = abstention_reward(parsed, verdict, config);
    out.total = out.r_fmt + *out.r_ref;
  }
  return out;
}

}  // namespace abstain
