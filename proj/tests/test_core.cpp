#include <doctest.h>

#include "langlab/core.hpp"

using namespace langlab;

namespace {

Signature qa_signature() {
    return Signature{"qa", "Answer the question.", {{"question", ""}}, {{"answer", ""}}};
}

std::string random_value(Rng& rng) {
    static const char* words[] = {"alpha", "beta", "gamma", "delta", "42", "x1",
                                  "cat",   "dog",  "blue",  "sky",   "sum", "7"};
    std::string out;
    std::size_t n = 1 + rng.below(4);
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out += " ";
        out += words[rng.below(12)];
    }
    return out;
}

}  // namespace

TEST_CASE("field labels capitalize snake_case words") {
    CHECK(field_label("question") == "Question");
    CHECK(field_label("search_query") == "Search Query");
    CHECK(field_label("next_query") == "Next Query");
}

TEST_CASE("minimal render has one labeled input line and a trailing output label") {
    auto prompt = render_prompt(qa_signature(), {}, {{"question", "hi"}}, {});
    std::size_t first = prompt.find("Question: hi");
    REQUIRE(first != std::string::npos);
    CHECK(prompt.find("Question: hi", first + 1) == std::string::npos);
    CHECK(prompt.substr(prompt.size() - 7) == "Answer:");
}

TEST_CASE("rules block renders numbered before demos") {
    Demo demo;
    demo.values = {{"question", "q0"}, {"answer", "a0"}};
    auto prompt =
        render_prompt(qa_signature(), {demo}, {{"question", "hi"}}, {"Answer in lowercase"});
    auto rules_pos = prompt.find("Rules:\n1. Answer in lowercase");
    auto demo_pos = prompt.find("Question: q0");
    REQUIRE(rules_pos != std::string::npos);
    REQUIRE(demo_pos != std::string::npos);
    CHECK(rules_pos < demo_pos);
}

TEST_CASE("rendering is a pure function") {
    Demo demo;
    demo.values = {{"question", "q0"}, {"answer", "a0"}};
    auto a = render_prompt(qa_signature(), {demo}, {{"question", "hi"}}, {"r1", "r2"});
    auto b = render_prompt(qa_signature(), {demo}, {{"question", "hi"}}, {"r1", "r2"});
    CHECK(a == b);
}

TEST_CASE("missing input field raises a contract violation naming the field") {
    CHECK_THROWS_WITH_AS(render_prompt(qa_signature(), {}, {}, {}),
                         doctest::Contains("question"), ContractError);
}

TEST_CASE("demo values embed newlines as literal backslash-n") {
    Demo demo;
    demo.values = {{"question", "line1\nline2"}, {"answer", "a"}};
    auto block = render_demo_block(qa_signature(), demo);
    CHECK(block.find("Question: line1\\nline2\n") != std::string::npos);
}

TEST_CASE("parse_completion fills labeled output fields") {
    auto pred = parse_completion(qa_signature(), "Answer: 42");
    CHECK(pred.parse_ok);
    CHECK(pred.outputs.at("answer") == "42");
}

TEST_CASE("a missing required label fails the parse with empty outputs") {
    Signature sig{"cot", "", {{"question", ""}}, {{"reasoning", ""}, {"answer", ""}}};
    auto pred = parse_completion(sig, "Answer: 42");
    CHECK_FALSE(pred.parse_ok);
    CHECK(pred.outputs.empty());
}

TEST_CASE("single-output fallback takes the whole trimmed completion") {
    auto pred = parse_completion(qa_signature(), "  42\n");
    CHECK(pred.parse_ok);
    CHECK(pred.outputs.at("answer") == "42");
}

TEST_CASE("first label occurrence wins") {
    auto pred = parse_completion(qa_signature(), "Answer: one\nAnswer: two");
    CHECK(pred.outputs.at("answer") == "one");
}

TEST_CASE("render/parse round-trip recovers demo outputs") {
    // Random newline-free field values; the demo's output segment must parse
    // back to exactly the demo's output values.
    Signature sig{"multi",
                  "",
                  {{"question", ""}, {"context", ""}},
                  {{"reasoning", ""}, {"answer", ""}}};
    Rng rng(1234);
    for (int round = 0; round < 200; ++round) {
        Demo demo;
        for (const auto& f : sig.input_fields) demo.values[f.name] = random_value(rng);
        for (const auto& f : sig.output_fields) demo.values[f.name] = random_value(rng);
        auto block = render_demo_block(sig, demo);
        // output segment = lines from the first output label onward
        auto cut = block.find(field_label(sig.output_fields.front().name) + ":");
        REQUIRE(cut != std::string::npos);
        auto pred = parse_completion(sig, block.substr(cut));
        REQUIRE(pred.parse_ok);
        for (const auto& f : sig.output_fields) CHECK(pred.outputs.at(f.name) == demo.values[f.name]);
    }
}

TEST_CASE("parse_ok never holds with a missing output field") {
    Signature sig{"two", "", {{"q", ""}}, {{"left", ""}, {"right", ""}}};
    const std::string completions[] = {"",        "Left: x",      "Right: y",
                                       "nothing", "Left:\nMid: z", "Left: a\nRight: b"};
    for (const auto& c : completions) {
        auto pred = parse_completion(sig, c);
        if (pred.parse_ok) {
            CHECK(pred.outputs.count("left") == 1);
            CHECK(pred.outputs.count("right") == 1);
        } else {
            CHECK(pred.outputs.empty());
        }
    }
}

TEST_CASE("signature validation rejects duplicates and empty sides") {
    Signature dup{"d", "", {{"x", ""}}, {{"x", ""}}};
    CHECK_THROWS_AS(dup.validate(), ContractError);
    Signature empty{"e", "", {}, {{"y", ""}}};
    CHECK_THROWS_AS(empty.validate(), ContractError);
}
