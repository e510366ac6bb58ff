// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdlib>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "abstain/match.hpp"
#include "abstain/prompts.hpp"
#include "abstain/types.hpp"
#include "abstain/util.hpp"

namespace abstain {

// ---------------------------------------------------------------------------
// Verdict parsing
// ---------------------------------------------------------------------------

namespace detail {

inline std::optional<Verdict> verdict_from_judgment_value(std::string_view v) {
  const std::string lowered = to_lower(trim_view(v));
  if (lowered == "correct") return Verdict::Correct;
  if (lowered == "incorrect") return Verdict::Incorrect;
  return std::nullopt;
}

inline std::optional<Verdict> verdict_from_json_payload(std::string_view response) {
  const auto try_parse = [](std::string_view text) -> std::optional<Verdict> {
    const auto parsed = nlohmann::json::parse(text, nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object()) return std::nullopt;
    const auto it = parsed.find("judgment");
    if (it == parsed.end() || !it->is_string()) return std::nullopt;
    return verdict_from_judgment_value(it->get<std::string>());
  };
  if (auto v = try_parse(trim_view(response))) return v;
  const std::size_t open = response.find('{');
  const std::size_t close = response.rfind('}');
  if (open != std::string_view::npos && close != std::string_view::npos && open < close)
    return try_parse(response.substr(open, close - open + 1));
  return std::nullopt;
}

inline std::optional<Verdict> verdict_from_bracket_token(std::string_view response) {
  const std::string lowered = to_lower(response);
  const std::size_t c = lowered.rfind("[correct]");
  const std::size_t i = lowered.rfind("[incorrect]");
  if (c == std::string::npos && i == std::string::npos) return std::nullopt;
  if (i == std::string::npos) return Verdict::Correct;
  if (c == std::string::npos) return Verdict::Incorrect;
  return c > i ? Verdict::Correct : Verdict::Incorrect;
}

}  // namespace detail

// Total, deterministic mapping from a judge response to a Verdict:
//   1. a JSON object with a "judgment" field wins,
//   2. otherwise the last bracketed [Correct]/[Incorrect] token,
//   3. otherwise a bare correct/incorrect token (one trailing period tolerated),
//   4. otherwise Incorrect — unparseable responses never grant reward.
inline Verdict parse_verdict(std::string_view response) {
  if (auto v = detail::verdict_from_json_payload(response)) return *v;
  if (auto v = detail::verdict_from_bracket_token(response)) return *v;
  std::string bare = to_lower(trim_view(response));
  if (!bare.empty() && bare.back() == '.') {
    bare.pop_back();
    bare = trim(bare);
  }
  if (auto v = verdict_from_string(bare)) return *v;
  return Verdict::Incorrect;
}

// ---------------------------------------------------------------------------
// Rule-based stub judge
// ---------------------------------------------------------------------------

namespace detail {

inline const std::set<std::string>& stop_words() {
  static const std::set<std::string> words = {
      "a",    "an",   "and",  "are",  "as",   "at",    "be",   "been", "but",
      "by",   "can",  "cannot", "could", "did", "do",   "does", "for",  "from",
      "has",  "have", "how",  "if",   "in",   "is",    "it",   "its",  "no",
      "not",  "of",   "on",   "or",   "so",   "that",  "the",  "then", "there",
      "this", "to",   "was",  "were", "what", "when",  "where", "which",
      "who",  "why",  "will", "with", "would", "you",  "your"};
  return words;
}

inline std::set<std::string> content_words(std::string_view text) {
  std::set<std::string> out;
  std::string token;
  const auto flush = [&] {
    if (!token.empty() && !stop_words().count(token)) out.insert(token);
    token.clear();
  };
  for (char c : text) {
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) token += c;
    else if (c >= 'A' && c <= 'Z') token += static_cast<char>(c - 'A' + 'a');
    else flush();
  }
  flush();
  return out;
}

}  // namespace detail

// Deterministic test double for the clarification verifier: Correct iff the
// content-word overlap |words(model) ∩ words(reference)| / |words(reference)|
// reaches 0.6 (inclusive), or the clarification contains the record's
// key-phrase annotation.
inline Verdict stub_verdict(std::string_view model_clarification,
                            std::string_view reference_clarification,
                            const std::optional<std::string>& key_phrase = std::nullopt) {
  if (key_phrase && !key_phrase->empty() &&
      to_lower(model_clarification).find(to_lower(*key_phrase)) != std::string::npos)
    return Verdict::Correct;
  const auto ref = detail::content_words(reference_clarification);
  if (ref.empty()) {
    return to_lower(trim_view(model_clarification)) ==
                   to_lower(trim_view(reference_clarification))
               ? Verdict::Correct
               : Verdict::Incorrect;
  }
  const auto hyp = detail::content_words(model_clarification);
  std::size_t overlap = 0;
  for (const auto& w : hyp) overlap += ref.count(w);
  return (static_cast<double>(overlap) / static_cast<double>(ref.size()) >= 0.6)
             ? Verdict::Correct
             : Verdict::Incorrect;
}

// ---------------------------------------------------------------------------
// Judge backend
// ---------------------------------------------------------------------------

// Remote backends speak a chat-completions style HTTP API: the rendered
// prompt goes out as a single user message and the first message content of
// the response body is fed to parse_verdict.
struct JudgeBackendConfig {
  enum class Kind { Stub, Remote };
  Kind kind = Kind::Stub;
  std::string endpoint;  // full URL, Remote only
  std::string model = "judge";
  std::string api_key_env = "ABSTAIN_JUDGE_TOKEN";
  int timeout_ms = 30000;
  int max_retries = 2;
  int max_concurrency = 4;

  void validate() const {
    if (kind == Kind::Remote && endpoint.empty())
      throw std::invalid_argument("remote judge backend requires an endpoint");
    if (max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
    if (max_concurrency < 1) throw std::invalid_argument("max_concurrency must be >= 1");
    if (timeout_ms <= 0) throw std::invalid_argument("timeout_ms must be > 0");
  }
};

namespace detail {

struct EndpointParts {
  std::string base;  // scheme://host[:port]
  std::string path;
};

inline EndpointParts split_endpoint(const std::string& endpoint) {
  const std::size_t scheme = endpoint.find("://");
  if (scheme == std::string::npos)
    throw std::invalid_argument("judge endpoint must include a scheme: " + endpoint);
  const std::size_t slash = endpoint.find('/', scheme + 3);
  if (slash == std::string::npos) return {endpoint, "/v1/chat/completions"};
  return {endpoint.substr(0, slash), endpoint.substr(slash)};
}

// Declared here, defined in verifier_http.hpp to keep the httplib dependency
// out of translation units that only use the stub backend.
std::optional<std::string> remote_complete_once(const JudgeBackendConfig& backend,
                                                const std::string& prompt,
                                                std::string* diagnostic);

}  // namespace detail

// One completion with retry-on-transport-failure. Returns the raw response
// content, or nullopt once retries are exhausted (diagnostic describes the
// last failure).
inline std::optional<std::string> complete_with_retries(const JudgeBackendConfig& backend,
                                                        const std::string& prompt,
                                                        std::string* diagnostic = nullptr) {
  backend.validate();
  std::string last_error;
  for (int attempt = 0; attempt <= backend.max_retries; ++attempt) {
    if (auto body = detail::remote_complete_once(backend, prompt, &last_error)) return body;
  }
  if (diagnostic)
    *diagnostic = "judge transport failed after " +
                  std::to_string(backend.max_retries + 1) + " attempts: " + last_error;
  return std::nullopt;
}

// Judge whether a model clarification matches the reference clarification.
// Transport failures map to Incorrect so training never stalls on judge
// outages; configuration errors throw before any request goes out.
inline Verdict judge_clarification(const QueryRecord& query,
                                   std::string_view model_clarification,
                                   const JudgeBackendConfig& backend,
                                   std::string* diagnostic = nullptr) {
  if (query.cls != AnswerabilityClass::Unanswerable)
    throw std::invalid_argument("judge_clarification requires an unanswerable query");
  if (!query.reference_clarification || query.reference_clarification->empty())
    throw std::invalid_argument("query " + query.id + " has no reference clarification");
  backend.validate();
  if (backend.kind == JudgeBackendConfig::Kind::Stub)
    return stub_verdict(model_clarification, *query.reference_clarification,
                        query.key_phrase);
  const std::string prompt = build_clarification_prompt(
      query.question, model_clarification, *query.reference_clarification);
  const auto body = complete_with_retries(backend, prompt, diagnostic);
  if (!body) return Verdict::Incorrect;
  return parse_verdict(*body);
}

// Judge an answerable-question response. The stub backend falls back to the
// tiered answer matcher.
inline Verdict judge_answer(std::string_view question, std::string_view gold,
                            std::string_view model_answer,
                            const JudgeBackendConfig& backend,
                            std::string* diagnostic = nullptr) {
  if (question.empty() || gold.empty() || model_answer.empty())
    throw std::invalid_argument("judge_answer requires non-empty inputs");
  backend.validate();
  if (backend.kind == JudgeBackendConfig::Kind::Stub)
    return answer_match(model_answer, gold) == MatchResult::Match ? Verdict::Correct
                                                                  : Verdict::Incorrect;
  const std::string prompt = build_answer_judge_prompt(question, gold, model_answer);
  const auto body = complete_with_retries(backend, prompt, diagnostic);
  if (!body) return Verdict::Incorrect;
  return parse_verdict(*body);
}

// ---------------------------------------------------------------------------
// Batched judging
// ---------------------------------------------------------------------------

struct ClarificationJob {
  const QueryRecord* query = nullptr;
  std::string model_clarification;
};

// Judges a batch with at most max_concurrency requests in flight. Results are
// indexed by job position, independent of completion order.
inline std::vector<Verdict> judge_clarifications(std::span<const ClarificationJob> jobs,
                                                 const JudgeBackendConfig& backend) {
  backend.validate();
  std::vector<Verdict> verdicts(jobs.size(), Verdict::Incorrect);
  if (jobs.empty()) return verdicts;
  if (backend.kind == JudgeBackendConfig::Kind::Stub || jobs.size() == 1 ||
      backend.max_concurrency == 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i)
      verdicts[i] = judge_clarification(*jobs[i].query, jobs[i].model_clarification, backend);
    return verdicts;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string first_error;
  std::mutex error_mutex;
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(backend.max_concurrency), jobs.size());
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
        try {
          verdicts[i] =
              judge_clarification(*jobs[i].query, jobs[i].model_clarification, backend);
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!failed.exchange(true)) first_error = e.what();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failed) throw std::runtime_error("batched judging failed: " + first_error);
  return verdicts;
}

// ---------------------------------------------------------------------------
// On-disk verdict cache
// ---------------------------------------------------------------------------

// Judge calls are the one expensive, potentially nondeterministic dependency;
// verdicts are cached keyed by (query id, clarification content hash).
class VerdictCache {
 public:
  VerdictCache() = default;

  explicit VerdictCache(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_);
    if (!in) return;
    const auto parsed = nlohmann::json::parse(in, nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object()) return;
    for (const auto& [key, value] : parsed.items()) {
      if (!value.is_string()) continue;
      if (auto v = verdict_from_string(value.get<std::string>())) entries_[key] = *v;
    }
  }

  static std::string key(std::string_view query_id, std::string_view clarification) {
    return std::string(query_id) + ":" + to_hex(fnv1a64(clarification));
  }

  std::optional<Verdict> lookup(std::string_view query_id, std::string_view clarification) {
    const auto it = entries_.find(key(query_id, clarification));
    if (it == entries_.end()) {
      ++misses_;
      return std::nullopt;
    }
    ++hits_;
    return it->second;
  }

  void store(std::string_view query_id, std::string_view clarification, Verdict v) {
    entries_[key(query_id, clarification)] = v;
  }

  void save() const {
    if (path_.empty()) return;
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (const auto& [k, v] : entries_) out[k] = std::string(to_string(v));
    write_file(path_, out.dump(2) + "\n");
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  std::string path_;
  std::map<std::string, Verdict> entries_;  // ordered keys => stable serialization
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

}  // namespace abstain

#include "abstain/verifier_http.hpp"
