#include <doctest.h>

#include <json.hpp>

#include "pipevo/benchmark.hpp"
#include "pipevo/errors.hpp"
#include "pipevo/sandbox.hpp"
#include "support.hpp"

using namespace pipevo;
using namespace testing;

namespace {

std::vector<std::string> field_per_line(const std::filesystem::path& path, const char* key) {
    std::vector<std::string> out;
    std::istringstream in(slurp(path));
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) out.push_back(nlohmann::json::parse(line)[key].get<std::string>());
    }
    return out;
}

}  // namespace

TEST_CASE("humaneval records load with checker invocation") {
    auto problems = load_benchmark(BenchmarkKind::HumanEval, data_dir() / "humaneval_mini.jsonl");
    REQUIRE(problems.size() == 10);
    const auto& p = problems[0];
    CHECK(p.problem_id == "Mini/0");
    CHECK(p.entry_point == std::optional<std::string>("add"));
    CHECK(p.statement.find("def add(") != std::string::npos);
    CHECK(p.test_block.find("def check(candidate)") != std::string::npos);
    CHECK(p.test_block.find("check(add)") != std::string::npos);
    for (const auto& q : problems) {
        CHECK_FALSE(q.test_block.empty());
        CHECK(q.entry_point.has_value());
    }
}

TEST_CASE("mbpp records load with imports and one assertion per line") {
    auto problems = load_benchmark(BenchmarkKind::MbppSanitized, data_dir() / "mbpp_mini.jsonl");
    REQUIRE(problems.size() == 6);
    CHECK(problems[0].problem_id == "11");
    CHECK(problems[0].test_block == "assert square(3) == 9\nassert square(-2) == 4\nassert square(0) == 0\n");
    CHECK(problems[0].statement.find("square of a number") != std::string::npos);
    CHECK(problems[0].statement.find("assert square(3) == 9") != std::string::npos);
    CHECK(problems[2].test_block.starts_with("import math\n"));
    CHECK_FALSE(problems[0].entry_point.has_value());
}

TEST_CASE("mbpp accepts the text field in place of prompt") {
    auto ps = parse_benchmark(BenchmarkKind::MbppSanitized,
                              R"({"task_id": 1, "text": "Do it.", "test_list": ["assert f() == 1"]})");
    REQUIRE(ps.size() == 1);
    CHECK(ps[0].statement.starts_with("Do it."));
}

TEST_CASE("malformed records report their line") {
    const std::string good = R"({"task_id": "A/0", "prompt": "def f():\n", "entry_point": "f", "test": "def check(c): pass"})";
    const std::string missing = R"({"task_id": "A/1", "prompt": "def g():\n", "entry_point": "g"})";
    try {
        parse_benchmark(BenchmarkKind::HumanEval, good + "\n\n" + missing + "\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.field() == "test");
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_benchmark(BenchmarkKind::HumanEval, "{not json"), ParseError);
    CHECK_THROWS_AS(parse_benchmark(BenchmarkKind::MbppSanitized, R"({"task_id": 1, "prompt": "x", "test_list": []})"),
                    ParseError);
    CHECK_THROWS_AS(load_benchmark(BenchmarkKind::HumanEval, "/nonexistent/file.jsonl"), ConfigError);
}

TEST_CASE("official release sizes") {
    CHECK(expected_problem_count(BenchmarkKind::HumanEval) == 164);
    CHECK(expected_problem_count(BenchmarkKind::MbppSanitized) == 427);
    CHECK(benchmark_kind_from_string("mbpp") == BenchmarkKind::MbppSanitized);
    CHECK(benchmark_kind_from_string(to_string(BenchmarkKind::HumanEval)) == BenchmarkKind::HumanEval);
    CHECK_THROWS_AS(benchmark_kind_from_string("apps"), ConfigError);
}

TEST_CASE("candidate assembly") {
    auto problems = load_benchmark(BenchmarkKind::HumanEval, data_dir() / "humaneval_mini.jsonl");
    const auto& p = problems[0];
    CHECK(assemble_candidate(p, "def add(a, b):\n    return a + b") == "def add(a, b):\n    return a + b");
    const auto body = assemble_candidate(p, "    return a + b");
    CHECK(body.starts_with(p.statement));
    CHECK(body.ends_with("    return a + b"));
    // Defining a different function is still a body.
    CHECK(assemble_candidate(p, "def adder(a, b):\n    return 1").starts_with(p.statement));
    Problem m;
    m.benchmark = BenchmarkKind::MbppSanitized;
    CHECK(assemble_candidate(m, "x = 1") == "x = 1");
}

TEST_CASE("reference solutions pass their own tests and stubs fail") {
    TempDir dir;
    SandboxOptions o;
    o.scratch_root = dir.path();
    SandboxExecutor sandbox(o);
    auto he = load_benchmark(BenchmarkKind::HumanEval, data_dir() / "humaneval_mini.jsonl");
    auto he_solutions = field_per_line(data_dir() / "humaneval_mini.jsonl", "canonical_solution");
    for (std::size_t i = 0; i < he.size(); ++i) {
        auto ok = sandbox.execute(assemble_candidate(he[i], he_solutions[i]), he[i].test_block);
        CHECK_MESSAGE(ok.passed, he[i].problem_id, ok.stderr_text);
        auto bad = sandbox.execute(assemble_candidate(he[i], "    return None"), he[i].test_block);
        CHECK_FALSE(bad.passed);
    }
    auto mb = load_benchmark(BenchmarkKind::MbppSanitized, data_dir() / "mbpp_mini.jsonl");
    auto mb_solutions = field_per_line(data_dir() / "mbpp_mini.jsonl", "code");
    for (std::size_t i = 0; i < mb.size(); ++i) {
        auto ok = sandbox.execute(assemble_candidate(mb[i], mb_solutions[i]), mb[i].test_block);
        CHECK_MESSAGE(ok.passed, mb[i].problem_id, ok.stderr_text);
        auto bad = sandbox.execute("", mb[i].test_block);
        CHECK(bad.error_type == ErrorType::NameError);
    }
}
