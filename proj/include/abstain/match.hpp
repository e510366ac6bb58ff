// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "abstain/util.hpp"

namespace abstain {

enum class MatchResult { Match, NoMatch };

using AnswerMatcher =
    std::function<MatchResult(std::string_view candidate, std::string_view gold)>;

namespace detail {

inline std::string normalize_answer_text(std::string_view s) {
  std::string lowered = to_lower(trim_view(s));
  std::string out;
  out.reserve(lowered.size());
  bool in_ws = false;
  for (char c : lowered) {
    const bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    if (ws) {
      in_ws = true;
      continue;
    }
    if (in_ws && !out.empty()) out += ' ';
    in_ws = false;
    out += c;
  }
  return out;
}

inline std::optional<double> parse_plain_double(std::string_view s) {
  s = trim_view(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  const auto* begin = s.data();
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end || !std::isfinite(value)) return std::nullopt;
  return value;
}

// Accepts decimal and scientific forms, plus a single a/b quotient.
inline std::optional<double> parse_numeric(std::string_view s) {
  s = trim_view(s);
  const std::size_t slash = s.find('/');
  if (slash != std::string_view::npos) {
    if (s.find('/', slash + 1) != std::string_view::npos) return std::nullopt;
    const auto num = parse_plain_double(s.substr(0, slash));
    const auto den = parse_plain_double(s.substr(slash + 1));
    if (!num || !den || *den == 0.0) return std::nullopt;
    return *num / *den;
  }
  return parse_plain_double(s);
}

struct ExactRational {
  __int128 num = 0;
  __int128 den = 1;  // > 0
};

inline std::optional<__int128> parse_scaled_integer(std::string_view s, int* frac_digits) {
  // [+-]?digits[.digits]; at most 18 significant digits on either side of the dot
  s = trim_view(s);
  if (s.empty()) return std::nullopt;
  bool negative = false;
  if (s.front() == '+' || s.front() == '-') {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  if (s.empty()) return std::nullopt;
  __int128 value = 0;
  int digits = 0;
  int frac = 0;
  bool seen_dot = false;
  bool seen_digit = false;
  for (char c : s) {
    if (c == '.') {
      if (seen_dot) return std::nullopt;
      seen_dot = true;
      continue;
    }
    if (c < '0' || c > '9') return std::nullopt;
    seen_digit = true;
    if (++digits > 18) return std::nullopt;
    value = value * 10 + (c - '0');
    if (seen_dot) ++frac;
  }
  if (!seen_digit) return std::nullopt;
  *frac_digits = frac;
  return negative ? -value : value;
}

// Exact rational for integer, decimal, and integer/integer forms.
inline std::optional<ExactRational> parse_exact_rational(std::string_view s) {
  s = trim_view(s);
  const std::size_t slash = s.find('/');
  if (slash != std::string_view::npos) {
    if (s.find('/', slash + 1) != std::string_view::npos) return std::nullopt;
    int fa = 0, fb = 0;
    const auto num = parse_scaled_integer(s.substr(0, slash), &fa);
    const auto den = parse_scaled_integer(s.substr(slash + 1), &fb);
    if (!num || !den || fa != 0 || fb != 0 || *den == 0) return std::nullopt;
    ExactRational r{*num, *den};
    if (r.den < 0) {
      r.num = -r.num;
      r.den = -r.den;
    }
    return r;
  }
  int frac = 0;
  const auto scaled = parse_scaled_integer(s, &frac);
  if (!scaled) return std::nullopt;
  __int128 den = 1;
  for (int i = 0; i < frac; ++i) den *= 10;
  return ExactRational{*scaled, den};
}

}  // namespace detail

// Tiered equivalence: (1) canonical string equality, (2) numeric equality
// within 1e-9 relative tolerance, (3) exact fraction cross-multiplication.
// Symbolic rewriting ("x+1" vs "1+x") is out of scope.
inline MatchResult answer_match(std::string_view candidate, std::string_view gold) {
  const std::string nc = detail::normalize_answer_text(candidate);
  const std::string ng = detail::normalize_answer_text(gold);
  if (!ng.empty() && nc == ng) return MatchResult::Match;

  const auto ca = detail::parse_numeric(candidate);
  const auto cb = detail::parse_numeric(gold);
  if (ca && cb) {
    const double a = *ca, b = *cb;
    if (a == b || std::fabs(a - b) <= 1e-9 * std::fmax(std::fabs(a), std::fabs(b)))
      return MatchResult::Match;
  }

  const auto ra = detail::parse_exact_rational(candidate);
  const auto rb = detail::parse_exact_rational(gold);
  if (ra && rb && ra->num * rb->den == rb->num * ra->den) return MatchResult::Match;

  return MatchResult::NoMatch;
}

inline const AnswerMatcher& default_matcher() {
  static const AnswerMatcher matcher = [](std::string_view c, std::string_view g) {
    return answer_match(c, g);
  };
  return matcher;
}

}  // namespace abstain
