#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <chrono>
#include <random>
#include <thread>

#include <httplib.h>

#include "abstain/verifier.hpp"

using namespace abstain;

namespace {

QueryRecord unanswerable_query() {
    QueryRecord q;
    q.id = "u1";
    q.question = "What is x+y?";
    q.cls = AnswerabilityClass::Unanswerable;
    q.reference_clarification = "the variable y is never defined";
    return q;
}

}  // namespace

TEST_CASE("clarification prompt embeds all payloads verbatim") {
    const std::string prompt = build_clarification_prompt(
        "What is x+y?", "y is undefined", "the variable y is never defined");
    REQUIRE(prompt.find("What is x+y?") != std::string::npos);
    REQUIRE(prompt.find("y is undefined") != std::string::npos);
    REQUIRE(prompt.find("the variable y is never defined") != std::string::npos);
    REQUIRE(prompt.find("MAIN reason") != std::string::npos);
    REQUIRE(prompt.find("known to be unanswerable, ill-posed, or logically flawed") !=
            std::string::npos);
    REQUIRE(prompt.find("{question}") == std::string::npos);
    REQUIRE(prompt.find("{model_answer}") == std::string::npos);
    REQUIRE(prompt.find("{reference_clarification}") == std::string::npos);
}

TEST_CASE("empty payloads are rejected before rendering") {
    REQUIRE_THROWS_AS(build_clarification_prompt("q", "", "ref"), std::invalid_argument);
    REQUIRE_THROWS_AS(build_clarification_prompt("", "c", "ref"), std::invalid_argument);
    REQUIRE_THROWS_AS(build_clarification_prompt("q", "c", ""), std::invalid_argument);
}

TEST_CASE("a template missing a placeholder fails to render") {
    REQUIRE_THROWS_AS(render_template("no placeholders here", {{"question", "q"}}),
                      std::logic_error);
}

TEST_CASE("prompt rendering distinguishes distinct payloads") {
    const auto p1 = build_clarification_prompt("q", "alpha", "ref");
    const auto p2 = build_clarification_prompt("q", "beta", "ref");
    REQUIRE(p1 != p2);
    const auto p3 = build_clarification_prompt("q", "c", "ref-one");
    const auto p4 = build_clarification_prompt("q", "c", "ref-two");
    REQUIRE(p3 != p4);
}

TEST_CASE("answer judge prompt carries the exact token contract") {
    const std::string prompt = build_answer_judge_prompt("2+2?", "4", "four");
    REQUIRE(prompt.find("Return exactly one token") != std::string::npos);
    REQUIRE(prompt.find("2+2?") != std::string::npos);
    REQUIRE(prompt.find("four") != std::string::npos);
}

TEST_CASE("verdict parsing cascade") {
    // structured judgment field
    REQUIRE(parse_verdict(R"({"reasoning": "...", "judgment": "Correct"})") ==
            Verdict::Correct);
    REQUIRE(parse_verdict(R"({"judgment": "incorrect"})") == Verdict::Incorrect);
    REQUIRE(parse_verdict("Here you go:\n{\"judgment\": \"Correct\"}\nthanks") ==
            Verdict::Correct);
    // bracketed tokens, last occurrence wins
    REQUIRE(parse_verdict("...therefore [Incorrect]") == Verdict::Incorrect);
    REQUIRE(parse_verdict("[Incorrect] wait, on reflection [Correct]") == Verdict::Correct);
    // bare token with tolerated trailing period
    REQUIRE(parse_verdict("correct") == Verdict::Correct);
    REQUIRE(parse_verdict("  Incorrect ") == Verdict::Incorrect);
    REQUIRE(parse_verdict("Correct.") == Verdict::Correct);
    // fail-closed
    REQUIRE(parse_verdict("I cannot evaluate this") == Verdict::Incorrect);
    REQUIRE(parse_verdict("") == Verdict::Incorrect);
}

TEST_CASE("structured judgment outranks a conflicting bracketed token") {
    REQUIRE(parse_verdict(R"(respond [Incorrect] {"judgment": "Correct"})") ==
            Verdict::Correct);
    REQUIRE(parse_verdict(R"({"judgment": "Incorrect"} but really [Correct])") ==
            Verdict::Incorrect);
}

TEST_CASE("an unmappable judgment value falls through the cascade") {
    REQUIRE(parse_verdict(R"({"judgment": "maybe"} anyway [Correct])") == Verdict::Correct);
    REQUIRE(parse_verdict(R"({"judgment": "Correct or Incorrect"})") == Verdict::Incorrect);
}

TEST_CASE("verdict parsing is total on arbitrary input") {
    std::mt19937_64 rng(555);
    static const std::string alphabet = "{}[]\"coretinCORETIN judgment:\\n .";
    for (int i = 0; i < 3000; ++i) {
        std::string s;
        const std::size_t n = uniform_index(rng, 60);
        for (std::size_t k = 0; k < n; ++k)
            s += alphabet[uniform_index(rng, alphabet.size())];
        const Verdict v = parse_verdict(s);
        REQUIRE(parse_verdict(s) == v);  // deterministic
    }
}

TEST_CASE("stub verdict uses content-word overlap with an inclusive 0.6 threshold") {
    const std::string ref = "the variable y is never defined";
    REQUIRE(stub_verdict(ref, ref) == Verdict::Correct);
    REQUIRE(stub_verdict("", ref) == Verdict::Incorrect);
    REQUIRE(stub_verdict("completely unrelated words here", ref) == Verdict::Incorrect);
    // ref content words: {variable, y, never, defined}; 3/4 = 0.75 >= 0.6
    REQUIRE(stub_verdict("y seems never defined", ref) == Verdict::Correct);
    // 2/4 = 0.5 < 0.6
    REQUIRE(stub_verdict("y is defined", ref) == Verdict::Incorrect);
    // exact boundary: 3/5 = 0.6 with a five-word reference
    const std::string ref5 = "alpha beta gamma delta epsilon";
    REQUIRE(stub_verdict("alpha beta gamma", ref5) == Verdict::Correct);
    REQUIRE(stub_verdict("alpha beta", ref5) == Verdict::Incorrect);
}

TEST_CASE("stub verdict honors the key-phrase annotation") {
    REQUIRE(stub_verdict("the DRYING TIME is missing", "unrelated reference text",
                         std::optional<std::string>{"drying time"}) == Verdict::Correct);
    REQUIRE(stub_verdict("something else", "unrelated reference text",
                         std::optional<std::string>{"drying time"}) == Verdict::Incorrect);
}

TEST_CASE("judge_clarification with the stub backend") {
    const auto query = unanswerable_query();
    JudgeBackendConfig backend;  // stub
    REQUIRE(judge_clarification(query, *query.reference_clarification, backend) ==
            Verdict::Correct);
    REQUIRE(judge_clarification(query, "bananas are yellow", backend) ==
            Verdict::Incorrect);

    QueryRecord answerable = query;
    answerable.cls = AnswerabilityClass::Answerable;
    answerable.gold_answer = "4";
    REQUIRE_THROWS_AS(judge_clarification(answerable, "c", backend), std::invalid_argument);
}

TEST_CASE("remote backend without an endpoint fails fast") {
    JudgeBackendConfig backend;
    backend.kind = JudgeBackendConfig::Kind::Remote;
    REQUIRE_THROWS_AS(judge_clarification(unanswerable_query(), "c", backend),
                      std::invalid_argument);
}

TEST_CASE("remote judge round trip against a local server") {
    httplib::Server server;
    std::atomic<int> calls{0};
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        ++calls;
        const auto body = nlohmann::json::parse(req.body);
        const std::string prompt = body["messages"][0]["content"].get<std::string>();
        const bool matches = prompt.find("y is undefined") != std::string::npos;
        nlohmann::json reply = {
            {"choices",
             {{{"message",
                {{"role", "assistant"},
                 {"content", matches ? R"({"judgment": "Correct"})"
                                     : R"({"judgment": "Incorrect"})"}}}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    JudgeBackendConfig backend;
    backend.kind = JudgeBackendConfig::Kind::Remote;
    backend.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    backend.max_retries = 0;

    const auto query = unanswerable_query();
    REQUIRE(judge_clarification(query, "y is undefined", backend) == Verdict::Correct);
    REQUIRE(judge_clarification(query, "no overlap at all", backend) == Verdict::Incorrect);
    REQUIRE(calls == 2);

    server.stop();
    server_thread.join();
}

TEST_CASE("transport failure maps to Incorrect after retries, with a diagnostic") {
    JudgeBackendConfig backend;
    backend.kind = JudgeBackendConfig::Kind::Remote;
    backend.endpoint = "http://127.0.0.1:9/v1/chat/completions";  // discard port, refused
    backend.max_retries = 2;
    backend.timeout_ms = 200;
    std::string diagnostic;
    const auto verdict =
        judge_clarification(unanswerable_query(), "clarification", backend, &diagnostic);
    REQUIRE(verdict == Verdict::Incorrect);
    REQUIRE(diagnostic.find("3 attempts") != std::string::npos);
}

TEST_CASE("judge_answer with stub and remote backends") {
    JudgeBackendConfig stub;
    REQUIRE(judge_answer("2+2?", "4", "4", stub) == Verdict::Correct);
    REQUIRE(judge_answer("2+2?", "4", "5", stub) == Verdict::Incorrect);
    REQUIRE_THROWS_AS(judge_answer("", "4", "4", stub), std::invalid_argument);

    httplib::Server server;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body);
        const std::string prompt = body["messages"][0]["content"].get<std::string>();
        const bool ok = prompt.find("Model answer:\nfour") != std::string::npos;
        nlohmann::json reply = {
            {"choices",
             {{{"message", {{"role", "assistant"}, {"content", ok ? "correct" : "incorrect"}}}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    JudgeBackendConfig remote;
    remote.kind = JudgeBackendConfig::Kind::Remote;
    remote.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    REQUIRE(judge_answer("2+2?", "4", "four", remote) == Verdict::Correct);
    REQUIRE(judge_answer("2+2?", "4", "five", remote) == Verdict::Incorrect);

    server.stop();
    server_thread.join();
}

TEST_CASE("batched judging is order-stable under concurrency") {
    // a server with per-request jitter so completion order differs from issue order
    httplib::Server server;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body);
        const std::string prompt = body["messages"][0]["content"].get<std::string>();
        std::this_thread::sleep_for(std::chrono::milliseconds(fnv1a64(prompt) % 40));
        const bool even = prompt.find("clar-even") != std::string::npos;
        nlohmann::json reply = {
            {"choices",
             {{{"message",
                {{"role", "assistant"}, {"content", even ? "[Correct]" : "[Incorrect]"}}}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    JudgeBackendConfig backend;
    backend.kind = JudgeBackendConfig::Kind::Remote;
    backend.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    backend.max_concurrency = 6;

    const auto query = unanswerable_query();
    std::vector<ClarificationJob> jobs;
    for (int i = 0; i < 12; ++i)
        jobs.push_back({&query, (i % 2 == 0 ? "clar-even " : "clar-odd ") + std::to_string(i)});
    const auto verdicts = judge_clarifications(jobs, backend);
    REQUIRE(verdicts.size() == jobs.size());
    for (int i = 0; i < 12; ++i)
        REQUIRE(verdicts[i] == (i % 2 == 0 ? Verdict::Correct : Verdict::Incorrect));

    server.stop();
    server_thread.join();
}

TEST_CASE("verdict cache round trip with stable keys") {
    const auto path =
        (std::filesystem::temp_directory_path() / "abstain_cache_test.json").string();
    std::remove(path.c_str());
    {
        VerdictCache cache(path);
        REQUIRE_FALSE(cache.lookup("q1", "clarification a").has_value());
        cache.store("q1", "clarification a", Verdict::Correct);
        cache.store("q2", "clarification b", Verdict::Incorrect);
        REQUIRE(cache.lookup("q1", "clarification a") == Verdict::Correct);
        REQUIRE(cache.hits() == 1);
        REQUIRE(cache.misses() == 1);
        cache.save();
    }
    {
        VerdictCache cache(path);
        REQUIRE(cache.size() == 2);
        REQUIRE(cache.lookup("q1", "clarification a") == Verdict::Correct);
        REQUIRE(cache.lookup("q2", "clarification b") == Verdict::Incorrect);
        REQUIRE(cache.lookup("q1", "different clarification") == std::nullopt);
    }
    std::remove(path.c_str());
}
