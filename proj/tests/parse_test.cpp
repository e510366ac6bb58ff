#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <string>

#include "abstain/parse.hpp"

using namespace abstain;

TEST_CASE("parse extracts the three spans from a well-formed response") {
    const auto out = parse("<thinking>reason</thinking><answer>\\boxed{42}</answer>");
    REQUIRE(out.format_valid);
    REQUIRE(out.thinking == "reason");
    REQUIRE(out.answer_span == "\\boxed{42}");
    REQUIRE(out.boxed == "42");
    REQUIRE_FALSE(out.is_abstention);
    REQUIRE_FALSE(out.clarification.has_value());
}

TEST_CASE("parse recognizes a boxed abstention with trailing clarification") {
    const auto out = parse(
        "<thinking>r</thinking><answer>\\boxed{I don't know.} What is the value of y?</answer>");
    REQUIRE(out.format_valid);
    REQUIRE(out.is_abstention);
    REQUIRE(out.clarification == "What is the value of y?");
}

TEST_CASE("missing boxed directive invalidates the format") {
    const auto out = parse("<thinking>r</thinking><answer>42</answer>");
    REQUIRE_FALSE(out.format_valid);
    REQUIRE_FALSE(out.boxed.has_value());
    REQUIRE(out.answer_span == "42");
}

TEST_CASE("missing thinking block invalidates the format but boxed is still extracted") {
    const auto out = parse("<answer>\\boxed{7}</answer>");
    REQUIRE_FALSE(out.format_valid);
    REQUIRE(out.boxed == "7");
}

TEST_CASE("a closing thinking tag alone is accepted before the answer block") {
    // the inference prompt pre-seeds the opening tag
    const auto out = parse("some reasoning</thinking><answer>\\boxed{1}</answer>");
    REQUIRE(out.format_valid);
    REQUIRE(out.thinking == "some reasoning");
    REQUIRE(out.boxed == "1");
}

TEST_CASE("duplicated tags invalidate the format") {
    REQUIRE_FALSE(parse("<thinking>a</thinking><thinking>b</thinking>"
                        "<answer>\\boxed{1}</answer>")
                      .format_valid);
    REQUIRE_FALSE(parse("<thinking>a</thinking><answer>\\boxed{1}</answer>"
                        "<answer>\\boxed{2}</answer>")
                      .format_valid);
}

TEST_CASE("text outside the two blocks is ignored") {
    const auto out =
        parse("preamble<thinking>a</thinking> mid <answer>\\boxed{3}</answer> postscript");
    REQUIRE(out.format_valid);
    REQUIRE(out.boxed == "3");
}

TEST_CASE("answer block must follow the thinking block") {
    const auto out = parse("<answer>\\boxed{1}</answer><thinking>a</thinking>");
    REQUIRE_FALSE(out.format_valid);
}

TEST_CASE("multiple boxed directives: first extracted, format invalid") {
    const auto out =
        parse("<thinking>a</thinking><answer>\\boxed{1} and \\boxed{2}</answer>");
    REQUIRE_FALSE(out.format_valid);
    REQUIRE(out.boxed == "1");
}

TEST_CASE("nested braces inside boxed are balanced") {
    const auto out =
        parse("<thinking>a</thinking><answer>\\boxed{\\frac{1}{2}}</answer>");
    REQUIRE(out.format_valid);
    REQUIRE(out.boxed == "\\frac{1}{2}");
}

TEST_CASE("unclosed boxed directive yields no boxed content") {
    const auto out = parse("<thinking>a</thinking><answer>\\boxed{1</answer>");
    REQUIRE_FALSE(out.format_valid);
    REQUIRE_FALSE(out.boxed.has_value());
}

TEST_CASE("clarification is bounded to the answer block") {
    const auto out = parse(
        "<thinking>r</thinking><answer>\\boxed{I don't know.}</answer> trailing text");
    REQUIRE(out.is_abstention);
    REQUIRE_FALSE(out.clarification.has_value());
}

TEST_CASE("whitespace-only clarification maps to absent") {
    const auto out =
        parse("<thinking>r</thinking><answer>\\boxed{I don't know.}   \n</answer>");
    REQUIRE(out.is_abstention);
    REQUIRE_FALSE(out.clarification.has_value());
}

TEST_CASE("clarification is only reported for abstentions") {
    const auto out = parse("<thinking>r</thinking><answer>\\boxed{42} because</answer>");
    REQUIRE_FALSE(out.is_abstention);
    REQUIRE_FALSE(out.clarification.has_value());
}

TEST_CASE("normalize_abstention accepts the canonical phrase and variants") {
    REQUIRE(normalize_abstention("I don't know."));
    REQUIRE(normalize_abstention("I DON'T KNOW"));
    REQUIRE(normalize_abstention("  i don't know  "));
    REQUIRE(normalize_abstention("I don\xE2\x80\x99t know."));  // typographic apostrophe
    REQUIRE_FALSE(normalize_abstention("I am not sure"));
    REQUIRE_FALSE(normalize_abstention("I don't know why"));
    REQUIRE_FALSE(normalize_abstention("I don't know.."));  // only one period stripped
    REQUIRE_FALSE(normalize_abstention(""));
}

TEST_CASE("abstention detection works without a surrounding answer block") {
    const auto out = parse("no tags at all \\boxed{I don't know.} more text");
    REQUIRE_FALSE(out.format_valid);
    REQUIRE(out.is_abstention);
    REQUIRE_FALSE(out.clarification.has_value());
}

TEST_CASE("template literals are overridable") {
    TemplateSpec spec;
    spec.thinking_open = "<r>";
    spec.thinking_close = "</r>";
    spec.answer_open = "<a>";
    spec.answer_close = "</a>";
    spec.boxed_prefix = "@box{";
    const auto out = parse("<r>t</r><a>@box{5}</a>", spec);
    REQUIRE(out.format_valid);
    REQUIRE(out.boxed == "5");
}

static std::string random_text(std::mt19937_64& rng, std::size_t max_len) {
    static const std::string alphabet =
        "<>/{}\\ \t\nabcdthinkgswer.'IDONTKNOW\\boxed{}0123456789";
    std::uniform_int_distribution<std::size_t> len_dist(0, max_len);
    std::uniform_int_distribution<std::size_t> ch(0, alphabet.size() - 1);
    std::string s;
    const std::size_t n = len_dist(rng);
    s.reserve(n);
    for (std::size_t i = 0; i < n; ++i) s += alphabet[ch(rng)];
    return s;
}

TEST_CASE("parse is deterministic on arbitrary input") {
    std::mt19937_64 rng(1234);
    for (int i = 0; i < 2000; ++i) {
        const std::string s = random_text(rng, 300);
        REQUIRE(parse(s) == parse(s));
    }
}

TEST_CASE("round trip through the canonical template") {
    std::mt19937_64 rng(99);
    const auto payload = [&](std::size_t max_len) {
        // tag-free, brace-free payloads; the markup cannot represent those
        static const std::string alphabet = "abcdefghij 0123456789,?";
        std::uniform_int_distribution<std::size_t> len_dist(1, max_len);
        std::uniform_int_distribution<std::size_t> ch(0, alphabet.size() - 1);
        std::string s;
        const std::size_t n = len_dist(rng);
        for (std::size_t i = 0; i < n; ++i) s += alphabet[ch(rng)];
        return s;
    };
    for (int i = 0; i < 500; ++i) {
        const std::string thinking = payload(60);
        const std::string boxed = payload(20);
        const auto out = parse(render_response(thinking, boxed));
        REQUIRE(out.format_valid);
        REQUIRE(out.thinking == thinking);
        REQUIRE(out.boxed == boxed);
    }
    for (int i = 0; i < 500; ++i) {
        const std::string thinking = payload(60);
        const std::string clar = trim(payload(40));
        if (clar.empty()) continue;
        const auto out = parse(render_response(thinking, "I don't know.", clar));
        REQUIRE(out.format_valid);
        REQUIRE(out.is_abstention);
        REQUIRE(out.thinking == thinking);
        REQUIRE(out.clarification == clar);
    }
}

TEST_CASE("format validity of an abstention does not depend on the clarification") {
    const auto with = parse(render_response("t", "I don't know.", "missing datum"));
    const auto without = parse(render_response("t", "I don't know."));
    REQUIRE(with.is_abstention);
    REQUIRE(without.is_abstention);
    REQUIRE(with.format_valid == without.format_valid);
}

TEST_CASE("parse survives a 1 MB input") {
    std::mt19937_64 rng(7);
    std::string big;
    big.reserve(1 << 20);
    while (big.size() < (1 << 20)) big += random_text(rng, 4096);
    big.resize(1 << 20);
    REQUIRE_NOTHROW(parse(big));
}
