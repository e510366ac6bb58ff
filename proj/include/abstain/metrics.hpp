// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "abstain/match.hpp"
#include "abstain/parse.hpp"
#include "abstain/types.hpp"
#include "abstain/util.hpp"

namespace abstain {

// ---------------------------------------------------------------------------
// Prediction records
// ---------------------------------------------------------------------------

struct PredictionRecord {
  QueryRecord query;
  ParsedOutput parsed;
  std::optional<Verdict> answer_verdict;  // answerable, answered rows only
  std::optional<Verdict> clar_verdict;    // unanswerable, abstained rows only

  void validate() const {
    query.validate();
    if (answer_verdict && query.cls != AnswerabilityClass::Answerable)
      throw std::invalid_argument("answer_verdict on unanswerable record " + query.id);
    if (clar_verdict) {
      if (query.cls != AnswerabilityClass::Unanswerable)
        throw std::invalid_argument("clar_verdict on answerable record " + query.id);
      if (!parsed.is_abstention)
        throw std::invalid_argument("clar_verdict without abstention on record " + query.id);
    }
  }
};

// ---------------------------------------------------------------------------
// Six-metric report
// ---------------------------------------------------------------------------

struct MetricCounts {
  long answerable = 0;
  long unanswerable = 0;
  long answered = 0;        // answerable and did not abstain
  long answer_correct = 0;  // answered with an accepted boxed answer
  long false_unknown = 0;   // answerable but abstained
  long refused = 0;         // unanswerable and abstained
  long clar_correct = 0;    // refused with a Correct clarification verdict
};

// Conditional metrics are absent when their denominator is zero.
struct MetricReport {
  std::optional<double> a_acc;
  std::optional<double> a_fu;
  std::optional<double> a_acc_c;
  std::optional<double> u_ref;
  std::optional<double> u_clar;
  std::optional<double> u_clar_c;
  MetricCounts counts;
};

struct MetricsOptions {
  // Count a refusal on the unanswerable side only when the surrounding
  // structure is also valid.
  bool strict_refusal = false;
  // Fallback correctness check when a record carries no cached answer verdict.
  AnswerMatcher matcher = default_matcher();
};

// "Answered" means "did not abstain": malformed non-abstaining outputs count
// as answered-and-wrong. That is the only reading under which
// A-Acc = A-Acc_c * (1 - A-FU) holds as an identity on raw counts.
inline MetricReport compute_metrics(std::span<const PredictionRecord> predictions,
                                    const MetricsOptions& options = {}) {
  if (predictions.empty())
    throw std::invalid_argument("compute_metrics requires at least one prediction");
  MetricCounts c;
  for (const auto& p : predictions) {
    if (p.query.cls == AnswerabilityClass::Answerable) {
      ++c.answerable;
      if (p.parsed.is_abstention) {
        ++c.false_unknown;
        continue;
      }
      ++c.answered;
      bool correct = false;
      if (p.parsed.boxed) {
        if (p.answer_verdict) {
          correct = *p.answer_verdict == Verdict::Correct;
        } else if (p.query.gold_answer) {
          correct = options.matcher(*p.parsed.boxed, *p.query.gold_answer) ==
                    MatchResult::Match;
        }
      }
      if (correct) ++c.answer_correct;
    } else {
      ++c.unanswerable;
      const bool refused =
          p.parsed.is_abstention && (!options.strict_refusal || p.parsed.format_valid);
      if (!refused) continue;
      ++c.refused;
      if (p.clar_verdict && *p.clar_verdict == Verdict::Correct) ++c.clar_correct;
    }
  }
  MetricReport report;
  report.counts = c;
  const auto ratio = [](long num, long den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  report.a_acc = ratio(c.answer_correct, c.answerable);
  report.a_fu = ratio(c.false_unknown, c.answerable);
  report.a_acc_c = ratio(c.answer_correct, c.answered);
  report.u_ref = ratio(c.refused, c.unanswerable);
  report.u_clar = ratio(c.clar_correct, c.unanswerable);
  report.u_clar_c = ratio(c.clar_correct, c.refused);
  return report;
}

// ---------------------------------------------------------------------------
// Judge agreement
// ---------------------------------------------------------------------------

struct AgreementTable {
  // counts[a][b]: verdict of judge A crossed with judge B; index 0 = Correct.
  long counts[2][2] = {{0, 0}, {0, 0}};

  long total() const {
    return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1];
  }
  double agreement_rate() const {
    return static_cast<double>(counts[0][0] + counts[1][1]) /
           static_cast<double>(total());
  }
};

inline AgreementTable agreement(std::span<const std::pair<Verdict, Verdict>> pairs) {
  if (pairs.empty()) throw std::invalid_argument("agreement requires at least one pair");
  AgreementTable table;
  for (const auto& [a, b] : pairs)
    ++table.counts[a == Verdict::Correct ? 0 : 1][b == Verdict::Correct ? 0 : 1];
  return table;
}

// ---------------------------------------------------------------------------
// Dataset ingestion (line-delimited JSON)
// ---------------------------------------------------------------------------

struct IngestIssue {
  int line = 0;  // 1-based; 0 for file-level notes
  std::string message;
};

struct IngestResult {
  std::vector<QueryRecord> records;
  std::vector<IngestIssue> issues;
};

namespace detail {

inline std::optional<std::string> optional_string_field(const nlohmann::json& obj,
                                                        const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw std::invalid_argument(std::string(key) + " must be a string");
  return it->get<std::string>();
}

inline QueryRecord query_from_json(const nlohmann::json& obj) {
  if (!obj.is_object()) throw std::invalid_argument("record must be a JSON object");
  QueryRecord q;
  q.id = optional_string_field(obj, "id").value_or("");
  q.question = optional_string_field(obj, "question").value_or("");
  const auto label = optional_string_field(obj, "label");
  if (!label) throw std::invalid_argument("missing label");
  const auto cls = answerability_from_string(*label);
  if (!cls) throw std::invalid_argument("label must be answerable|unanswerable");
  q.cls = *cls;
  q.gold_answer = optional_string_field(obj, "gold_answer");
  q.reference_clarification = optional_string_field(obj, "reference_clarification");
  q.domain = optional_string_field(obj, "domain");
  q.key_phrase = optional_string_field(obj, "key_phrase");
  q.validate();
  return q;
}

}  // namespace detail

// Reads one JSON object per line. Invalid lines are reported with their line
// number and skipped; an unreadable file throws.
inline IngestResult ingest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  IngestResult result;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim_view(line).empty()) continue;
    const auto obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded()) {
      result.issues.push_back({lineno, "not valid JSON"});
      continue;
    }
    try {
      result.records.push_back(detail::query_from_json(obj));
    } catch (const std::exception& e) {
      result.issues.push_back({lineno, e.what()});
    }
  }
  if (result.records.empty() && result.issues.empty())
    result.issues.push_back({0, "file contains no records"});
  return result;
}

// Prediction rows: a query record plus the raw completion and optionally
// cached verdicts from an earlier scoring run.
struct PredictionRow {
  QueryRecord query;
  std::string raw_output;
  std::optional<Verdict> answer_verdict;
  std::optional<Verdict> clar_verdict;
};

struct PredictionIngestResult {
  std::vector<PredictionRow> rows;
  std::vector<IngestIssue> issues;
};

inline PredictionIngestResult ingest_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open predictions: " + path);
  PredictionIngestResult result;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim_view(line).empty()) continue;
    const auto obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded()) {
      result.issues.push_back({lineno, "not valid JSON"});
      continue;
    }
    try {
      PredictionRow row;
      row.query = detail::query_from_json(obj);
      const auto raw = detail::optional_string_field(obj, "raw_output");
      if (!raw) throw std::invalid_argument("missing raw_output");
      row.raw_output = *raw;
      if (const auto v = detail::optional_string_field(obj, "answer_verdict")) {
        row.answer_verdict = verdict_from_string(*v);
        if (!row.answer_verdict)
          throw std::invalid_argument("answer_verdict must be correct|incorrect");
      }
      if (const auto v = detail::optional_string_field(obj, "clar_verdict")) {
        row.clar_verdict = verdict_from_string(*v);
        if (!row.clar_verdict)
          throw std::invalid_argument("clar_verdict must be correct|incorrect");
      }
      result.rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      result.issues.push_back({lineno, e.what()});
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Mixed sampling
// ---------------------------------------------------------------------------

// Seeded sampling with replacement: each draw picks the class by the target
// fraction, then a uniform record of that class.
inline std::vector<QueryRecord> mixed_sample(std::span<const QueryRecord> records,
                                             double unanswerable_fraction, std::size_t n,
                                             std::uint64_t seed) {
  if (unanswerable_fraction < 0.0 || unanswerable_fraction > 1.0)
    throw std::invalid_argument("unanswerable_fraction must be in [0, 1]");
  std::vector<std::size_t> answerable, unanswerable;
  for (std::size_t i = 0; i < records.size(); ++i) {
    (records[i].cls == AnswerabilityClass::Answerable ? answerable : unanswerable)
        .push_back(i);
  }
  if (unanswerable_fraction > 0.0 && unanswerable.empty())
    throw std::invalid_argument("no unanswerable records to sample from");
  if (unanswerable_fraction < 1.0 && answerable.empty())
    throw std::invalid_argument("no answerable records to sample from");
  std::mt19937_64 rng(seed);
  std::vector<QueryRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& pool = bernoulli(rng, unanswerable_fraction) ? unanswerable : answerable;
    out.push_back(records[pool[uniform_index(rng, pool.size())]]);
  }
  return out;
}

}  // namespace abstain
