#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "grpolab/errors.hpp"
#include "grpolab/tasks.hpp"

using namespace grpolab;

namespace {

std::vector<Token> answer(const TaskEnvironment& task, const std::string& expr) {
    return task.render_answer(expr);
}

}  // namespace

TEST_SUITE("tasks") {

TEST_CASE("solvability by brute force") {
    const std::vector<int> a = {3, 4};
    CHECK(is_solvable(a, 12, "+*"));
    CHECK(is_solvable(a, 7, "+*"));
    const std::vector<int> b = {2, 3};
    CHECK_FALSE(is_solvable(b, 7, "+*"));
    const auto values = reachable_values(b, "+*", true);
    CHECK(values == std::vector<long long>{5, 6});
    const std::vector<int> c = {8, 2};
    CHECK(is_solvable(c, 4, "/"));
    CHECK_FALSE(is_solvable(c, 1, "/"));
}

TEST_CASE("enumeration covers subsets and rejects non-integer intermediates") {
    const std::vector<int> n = {8, 2};
    const auto cands = enumerate_expressions(n, "+-*/");
    std::set<std::string> texts;
    for (const auto& c : cands) {
        texts.insert(c.text);
        if (c.text == "2/8" || c.text == "2-8") {
            CHECK_FALSE(c.value.has_value());
        }
        if (c.text == "8/2") {
            CHECK(c.value == 4);
        }
    }
    CHECK(texts.count("8"));
    CHECK(texts.count("8+2"));
    CHECK(texts.count("2*8"));
}

TEST_CASE("generation is deterministic, in range and solvable") {
    GenerationConfig cfg;
    const auto a = generate_instances(cfg, 50, 42, "train");
    const auto b = generate_instances(cfg, 50, 42, "train");
    CHECK(a == b);
    CHECK(a != generate_instances(cfg, 50, 43, "train"));
    for (const auto& inst : a) {
        REQUIRE(inst.numbers.size() == 2);
        for (int v : inst.numbers) {
            CHECK(v >= 1);
            CHECK(v <= 9);
        }
        CHECK(inst.target >= 1);
        CHECK(inst.target <= 99);
        CHECK(is_solvable(inst.numbers, inst.target, "+*"));
        CHECK(inst.split == "train");
    }
}

TEST_CASE("infeasible generation settings fail loudly") {
    GenerationConfig cfg;
    cfg.max_value = 2;
    cfg.min_target = 50;
    cfg.max_attempts = 100;
    CHECK_THROWS_AS(generate_instances(cfg, 5, 1, "train"), GenerationError);
}

TEST_CASE("direct-sum instances target the sum") {
    GenerationConfig cfg;
    cfg.family = TaskFamily::kDirectSum;
    for (const auto& inst : generate_instances(cfg, 20, 3, "test")) {
        CHECK(inst.target == inst.numbers[0] + inst.numbers[1]);
    }
}

TEST_CASE("datasets round-trip") {
    const auto a = generate_instances(GenerationConfig{}, 10, 7, "test");
    std::stringstream buf;
    write_dataset(buf, a);
    CHECK(read_dataset(buf) == a);
    std::stringstream bad("{\"id\": \"x\", \"numbers\": [1]}\n");
    CHECK_THROWS(read_dataset(bad));
}

TEST_CASE("parser honours precedence and parentheses") {
    CHECK(parse_expression("2+3*4").evaluate() == 14);
    CHECK(parse_expression("(2+3)*4").evaluate() == 20);
    CHECK(parse_expression("8/2/2").evaluate() == 2);
    CHECK(parse_expression("9-3-2").evaluate() == 4);
    CHECK(parse_expression("3×4").evaluate() == 12);
    CHECK(parse_expression("8÷2").evaluate() == 4);
    CHECK(parse_expression("(2+3)*4").to_string() == "(2+3)*4");
    CHECK(parse_expression("2+(3*4)").to_string() == "2+3*4");
    CHECK(parse_expression("9-(3-2)").to_string() == "9-(3-2)");
}

TEST_CASE("parser rejects malformed input") {
    for (const char* bad : {"", "3+", "(3", "3)", "03", "3(4)", "*3", "3++4", "1234567890123", "a"}) {
        CAPTURE(std::string(bad));
        CHECK_THROWS_AS(parse_expression(bad), ParseError);
    }
}

TEST_CASE("evaluation enforces positive integer intermediates") {
    CHECK_FALSE(parse_expression("2/8").evaluate().has_value());
    CHECK_FALSE(parse_expression("3-3").evaluate().has_value());
    CHECK_FALSE(parse_expression("2-8").evaluate().has_value());
    CHECK_FALSE(parse_expression("7/2").evaluate().has_value());
    CHECK_FALSE(parse_expression("999999999999*999999999999*999999999999").evaluate().has_value());
}

TEST_CASE("literal usage respects multiplicity") {
    const std::vector<int> n = {3, 4};
    CHECK(parse_expression("3*4").uses_numbers_from(n));
    CHECK(parse_expression("4").uses_numbers_from(n));
    CHECK_FALSE(parse_expression("3*3").uses_numbers_from(n));
    CHECK_FALSE(parse_expression("3*5").uses_numbers_from(n));
}

TEST_CASE("countdown verifier") {
    const TaskEnvironment task(TaskFamily::kCountdown);
    const Instance a{"a", {3, 4}, 12, "test"};
    CHECK(task.verify(a, answer(task, "3*4")) == 1);
    CHECK(task.verify(a, answer(task, "4*3")) == 1);
    CHECK(task.verify(a, answer(task, "3*3")) == 0);
    CHECK(task.verify(a, answer(task, "3+4")) == 0);
    const Instance b{"b", {8, 2}, 4, "test"};
    CHECK(task.verify(b, answer(task, "8/2")) == 1);
    const Instance c{"c", {8, 2}, 0, "test"};
    CHECK(task.verify(b, answer(task, "2/8")) == 0);
    CHECK(task.verify(c, answer(task, "2/8")) == 0);
}

TEST_CASE("the think segment is never inspected") {
    const TaskEnvironment task(TaskFamily::kCountdown);
    const Vocabulary& v = task.vocabulary();
    const Instance a{"a", {3, 4}, 12, "test"};
    std::vector<Token> r = {v.index("9"), v.index("("), v.index("+"), v.index("</sol>"), task.think_token()};
    const auto ans = answer(task, "3*4");
    r.insert(r.end(), ans.begin(), ans.end());
    CHECK(task.verify(a, r) == 1);
}

TEST_CASE("responses without both markers score zero") {
    const TaskEnvironment task(TaskFamily::kCountdown);
    const Vocabulary& v = task.vocabulary();
    const Instance a{"a", {3, 4}, 12, "test"};
    auto r = answer(task, "3*4");
    auto no_close = r;
    no_close.erase(std::find(no_close.begin(), no_close.end(), v.index("</sol>")));
    CHECK(task.verify(a, no_close) == 0);
    auto no_open = r;
    no_open.erase(no_open.begin());
    CHECK(task.verify(a, no_open) == 0);
    CHECK(task.verify(a, {}) == 0);
    CHECK(task.verify(a, std::vector<Token>{9999, -4}) == 0);
}

TEST_CASE("direct-sum verifier accepts only the sum literal") {
    const TaskEnvironment task(TaskFamily::kDirectSum);
    const Instance a{"a", {3, 4}, 7, "test"};
    CHECK(task.verify(a, answer(task, "7")) == 1);
    CHECK(task.verify(a, answer(task, "3+4")) == 0);
    CHECK(task.verify(a, answer(task, "8")) == 0);
}

TEST_CASE("prompt encoding") {
    const TaskEnvironment task(TaskFamily::kCountdown);
    const Instance a{"a", {3, 4}, 7, "test"};
    const Prompt p = task.encode_prompt(a);
    CHECK(task.vocabulary().decode(p.tokens) == "3 , 4 = 0 7");
    CHECK(p.instance_id == "a");
    const TaskEnvironment sum(TaskFamily::kDirectSum);
    CHECK(sum.vocabulary().decode(sum.encode_prompt(a).tokens) == "3 + 4 =");
}

TEST_CASE("segmentation splits at the first open marker") {
    const TaskEnvironment task(TaskFamily::kCountdown);
    const Token t = task.think_token();
    std::vector<Token> r = {t, t, t};
    const auto ans = answer(task, "3*4");
    r.insert(r.end(), ans.begin(), ans.end());
    const auto s = segment(r, task.markers());
    CHECK(s.think_length == 3);
    CHECK(s.solution_length == ans.size());
    CHECK(s.total() == r.size());
    const std::vector<Token> only_think = {t, t};
    CHECK(segment(only_think, task.markers()).think_length == 2);
    CHECK(segment(only_think, task.markers()).solution_length == 0);
}

}  // TEST_SUITE
