#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pipevo {

enum class BenchmarkKind { HumanEval, MbppSanitized };

std::string_view to_string(BenchmarkKind kind);
BenchmarkKind benchmark_kind_from_string(std::string_view name);

/// Number of problems in the official release of each benchmark.
constexpr std::size_t expected_problem_count(BenchmarkKind kind) {
    return kind == BenchmarkKind::HumanEval ? 164 : 427;
}

struct Problem {
    BenchmarkKind benchmark = BenchmarkKind::HumanEval;
    std::string problem_id;
    std::string statement;   ///< HumanEval: signature + docstring. MBPP: task text + example asserts.
    std::string test_block;  ///< assertions plus the checker call, appended after candidate code
    std::optional<std::string> entry_point;
};

/// Reads JSON Lines in the public schema of each benchmark.
///
/// HumanEval records: task_id, prompt, entry_point, test. MBPP (sanitized) records: task_id,
/// prompt (or text), test_imports, test_list. A malformed record throws ParseError naming its
/// line. A count different from the official release is logged, not fatal.
std::vector<Problem> load_benchmark(BenchmarkKind kind, const std::filesystem::path& path);

std::vector<Problem> parse_benchmark(BenchmarkKind kind, std::string_view jsonl);

/// Code to execute for a model completion. HumanEval completions that do not define the entry
/// point are treated as a body and appended to the prompt.
std::string assemble_candidate(const Problem& problem, std::string_view code);

}  // namespace pipevo
