// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "abstain/util.hpp"

namespace abstain {

// Response-structure literals. The defaults match the instruction template
// the policy is prompted with; override them for template experiments.
// `abstention_phrase` is compared after normalization (lowercase, trimmed,
// one trailing period stripped, typographic apostrophes folded to ').
struct TemplateSpec {
  std::string thinking_open = "<thinking>";
  std::string thinking_close = "</thinking>";
  std::string answer_open = "<answer>";
  std::string answer_close = "</answer>";
  std::string boxed_prefix = "\\boxed{";
  std::string abstention_phrase = "i don't know";
};

inline const TemplateSpec& default_template() {
  static const TemplateSpec spec{};
  return spec;
}

// Structural decomposition of one raw completion. Guarantees:
//   format_valid        => thinking, answer_span and boxed are all present
//   is_abstention       => boxed is present and normalizes to the abstention phrase
//   clarification set   => is_abstention
// All fields are best-effort on malformed input; parsing never throws.
struct ParsedOutput {
  std::optional<std::string> thinking;
  std::optional<std::string> answer_span;
  std::optional<std::string> boxed;
  bool is_abstention = false;
  std::optional<std::string> clarification;
  bool format_valid = false;

  bool operator==(const ParsedOutput&) const = default;
};

inline bool normalize_abstention(std::string_view boxed_content,
                                 const TemplateSpec& spec = default_template()) {
  std::string s = to_lower(trim(boxed_content));
  replace_all(s, "\xE2\x80\x99", "'");  // U+2019 right single quotation mark
  replace_all(s, "\xCA\xBC", "'");      // U+02BC modifier letter apostrophe
  if (!s.empty() && s.back() == '.') {
    s.pop_back();
    s = trim(s);
  }
  return s == spec.abstention_phrase;
}

namespace detail {

struct BoxedHit {
  std::string content;
  std::size_t end = 0;  // one past the closing brace, relative to the region
};

// First well-bracketed boxed directive in `region`; nested braces allowed.
inline std::optional<BoxedHit> find_boxed(std::string_view region,
                                          std::string_view prefix) {
  for (std::size_t pos = region.find(prefix); pos != std::string_view::npos;
       pos = region.find(prefix, pos + prefix.size())) {
    const std::size_t start = pos + prefix.size();
    int depth = 1;
    for (std::size_t i = start; i < region.size(); ++i) {
      if (region[i] == '{') ++depth;
      else if (region[i] == '}' && --depth == 0)
        return BoxedHit{std::string(region.substr(start, i - start)), i + 1};
    }
    // unclosed directive: try the next occurrence
  }
  return std::nullopt;
}

}  // namespace detail

// Pure, total decomposition of a raw completion. format_valid holds iff
// exactly one thinking block precedes exactly one answer block, the tags are
// properly ordered and closed, and the answer block holds exactly one
// brace-balanced boxed directive. A missing opening thinking tag is tolerated
// when a closing tag appears before the answer block, because the inference
// prompt pre-seeds the opening tag. Text outside the two blocks is ignored.
inline ParsedOutput parse(std::string_view text,
                          const TemplateSpec& spec = default_template()) {
  constexpr std::size_t npos = std::string_view::npos;
  ParsedOutput out;

  const std::size_t n_to = count_occurrences(text, spec.thinking_open);
  const std::size_t n_tc = count_occurrences(text, spec.thinking_close);
  const std::size_t n_ao = count_occurrences(text, spec.answer_open);
  const std::size_t n_ac = count_occurrences(text, spec.answer_close);

  const std::size_t ao = text.find(spec.answer_open);
  std::size_t ac = npos;
  if (ao != npos) ac = text.find(spec.answer_close, ao + spec.answer_open.size());

  if (ao != npos) {
    const std::size_t begin = ao + spec.answer_open.size();
    const std::size_t end = (ac != npos) ? ac : text.size();
    out.answer_span = std::string(text.substr(begin, end - begin));
  }

  const std::size_t to_pos = text.find(spec.thinking_open);
  const std::size_t tc_pos = text.find(spec.thinking_close);
  bool thinking_paired = false;
  std::size_t thinking_end = npos;
  if (n_to == 1 && n_tc == 1 && to_pos < tc_pos) {
    const std::size_t begin = to_pos + spec.thinking_open.size();
    out.thinking = std::string(text.substr(begin, tc_pos - begin));
    thinking_paired = true;
    thinking_end = tc_pos + spec.thinking_close.size();
  } else if (n_to == 0 && n_tc == 1) {
    // lenient pre-pass: the opening tag was consumed by the prompt
    out.thinking = std::string(text.substr(0, tc_pos));
    thinking_paired = true;
    thinking_end = tc_pos + spec.thinking_close.size();
  } else if (to_pos != npos && tc_pos != npos && to_pos < tc_pos) {
    // duplicated tags: keep a best-effort span, validity stays false
    const std::size_t begin = to_pos + spec.thinking_open.size();
    out.thinking = std::string(text.substr(begin, tc_pos - begin));
  }

  // Best-effort boxed extraction: inside the answer block when one exists,
  // otherwise anywhere in the text (abstention detection on malformed output).
  std::optional<detail::BoxedHit> hit;
  bool boxed_in_answer = false;
  if (out.answer_span) {
    hit = detail::find_boxed(*out.answer_span, spec.boxed_prefix);
    boxed_in_answer = hit.has_value();
  } else {
    hit = detail::find_boxed(text, spec.boxed_prefix);
  }
  if (hit) out.boxed = hit->content;

  if (out.boxed) out.is_abstention = normalize_abstention(*out.boxed, spec);

  // Clarification lives strictly after the boxed directive inside the answer
  // block; content past the answer close tag never counts.
  if (out.is_abstention && boxed_in_answer) {
    std::string clar = trim(std::string_view(*out.answer_span).substr(hit->end));
    if (!clar.empty()) out.clarification = std::move(clar);
  }

  const bool structure_ok = thinking_paired && n_ao == 1 && n_ac == 1 &&
                            ao != npos && ac != npos && ao < ac &&
                            thinking_end != npos && thinking_end <= ao;
  const bool boxed_ok =
      out.answer_span && boxed_in_answer &&
      count_occurrences(*out.answer_span, spec.boxed_prefix) == 1;
  out.format_valid = structure_ok && boxed_ok;
  return out;
}

// Canonical template renderer, the inverse of parse() for well-formed
// payloads (no tag literals inside, brace-balanced boxed content).
inline std::string render_response(std::string_view thinking, std::string_view boxed,
                                   std::string_view clarification = {},
                                   const TemplateSpec& spec = default_template()) {
  std::string out;
  out.reserve(thinking.size() + boxed.size() + clarification.size() + 64);
  out += spec.thinking_open;
  out += thinking;
  out += spec.thinking_close;
  out += spec.answer_open;
  out += spec.boxed_prefix;
  out += boxed;
  out += '}';
  if (!clarification.empty()) {
    out += ' ';
    out += clarification;
  }
  out += spec.answer_close;
  return out;
}

}  // namespace abstain
