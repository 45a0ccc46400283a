#include "pipevo/benchmark.hpp"

#include <fstream>
#include <regex>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "pipevo/errors.hpp"

namespace pipevo {

using Json = nlohmann::json;

std::string_view to_string(BenchmarkKind kind) {
    return kind == BenchmarkKind::HumanEval ? "humaneval" : "mbpp";
}

BenchmarkKind benchmark_kind_from_string(std::string_view name) {
    if (name == "humaneval" || name == "HumanEval") return BenchmarkKind::HumanEval;
    if (name == "mbpp" || name == "mbpp-sanitized" || name == "MbppSanitized") return BenchmarkKind::MbppSanitized;
    throw ConfigError(fmt::format("unknown benchmark '{}' (expected humaneval or mbpp)", name));
}

namespace {

std::string field_string(const Json& j, const char* key, std::size_t line) {
    auto it = j.find(key);
    if (it == j.end()) throw ParseError(key, fmt::format("line {}: missing field", line));
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number_integer()) return std::to_string(it->get<long long>());
    throw ParseError(key, fmt::format("line {}: expected a string", line));
}

std::vector<std::string> field_strings(const Json& j, const char* key, std::size_t line, bool required) {
    auto it = j.find(key);
    if (it == j.end()) {
        if (required) throw ParseError(key, fmt::format("line {}: missing field", line));
        return {};
    }
    if (!it->is_array()) throw ParseError(key, fmt::format("line {}: expected a list of strings", line));
    std::vector<std::string> out;
    for (const auto& v : *it) {
        if (!v.is_string()) throw ParseError(key, fmt::format("line {}: expected a list of strings", line));
        out.push_back(v.get<std::string>());
    }
    return out;
}

Problem humaneval_problem(const Json& j, std::size_t line) {
    Problem p;
    p.benchmark = BenchmarkKind::HumanEval;
    p.problem_id = field_string(j, "task_id", line);
    p.statement = field_string(j, "prompt", line);
    p.entry_point = field_string(j, "entry_point", line);
    std::string test = field_string(j, "test", line);
    if (test.empty()) throw ParseError("test", fmt::format("line {}: empty test", line));
    p.test_block = test + "\n\ncheck(" + *p.entry_point + ")\n";
    return p;
}

Problem mbpp_problem(const Json& j, std::size_t line) {
    Problem p;
    p.benchmark = BenchmarkKind::MbppSanitized;
    p.problem_id = field_string(j, "task_id", line);
    p.statement = j.contains("prompt") ? field_string(j, "prompt", line) : field_string(j, "text", line);
    auto imports = field_strings(j, "test_imports", line, false);
    auto tests = field_strings(j, "test_list", line, true);
    if (tests.empty()) throw ParseError("test_list", fmt::format("line {}: no assertions", line));

    std::string block;
    for (const auto& imp : imports) block += imp + "\n";
    for (const auto& t : tests) block += t + "\n";
    p.test_block = std::move(block);

    p.statement += "\nYour code should pass these tests:\n\n";
    for (const auto& t : tests) p.statement += t + "\n";
    return p;
}

}  // namespace

std::vector<Problem> parse_benchmark(BenchmarkKind kind, std::string_view jsonl) {
    std::vector<Problem> problems;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= jsonl.size()) {
        auto nl = jsonl.find('\n', pos);
        std::string_view line = jsonl.substr(pos, nl == std::string_view::npos ? jsonl.npos : nl - pos);
        ++line_no;
        pos = (nl == std::string_view::npos) ? jsonl.size() + 1 : nl + 1;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::parse_error& e) {
            throw ParseError("", fmt::format("line {}: malformed record: {}", line_no, e.what()));
        }
        if (!j.is_object()) throw ParseError("", fmt::format("line {}: record must be an object", line_no));
        problems.push_back(kind == BenchmarkKind::HumanEval ? humaneval_problem(j, line_no)
                                                            : mbpp_problem(j, line_no));
    }
    return problems;
}

std::vector<Problem> load_benchmark(BenchmarkKind kind, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read benchmark file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    auto problems = parse_benchmark(kind, ss.str());
    if (problems.size() != expected_problem_count(kind)) {
        spdlog::warn("{}: {} problems loaded, the official {} release has {}", path.string(),
                     problems.size(), to_string(kind), expected_problem_count(kind));
    }
    return problems;
}

std::string assemble_candidate(const Problem& problem, std::string_view code) {
    if (problem.benchmark != BenchmarkKind::HumanEval || !problem.entry_point) return std::string(code);
    const std::regex def_re("(^|\\n)[ \\t]*def[ \\t]+" + *problem.entry_point + "[ \\t]*\\(");
    std::string c(code);
    if (std::regex_search(c, def_re)) return c;
    std::string out = problem.statement;
    if (!out.empty() && out.back() != '\n') out += '\n';
    return out + c;
}

}  // namespace pipevo
