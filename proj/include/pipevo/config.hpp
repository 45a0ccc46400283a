#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pipevo/benchmark.hpp"
#include "pipevo/gateway.hpp"
#include "pipevo/genome.hpp"
#include "pipevo/params.hpp"
#include "pipevo/sandbox.hpp"

namespace pipevo {

/// Everything a run needs, read from one JSON file. Relative paths are resolved against the
/// file's directory; every referenced file must exist.
///
///     {
///       "benchmarks": {"humaneval": "data/HumanEval.jsonl", "mbpp": "data/mbpp.jsonl"},
///       "search_benchmark": "humaneval",
///       "models": ["llama3.2:3b", "qwen2.5-coder:1.5b"],
///       "gateway": {"endpoint": "http://localhost:11434", "api": "ollama",
///                   "max_in_flight": 4, "timeout_seconds": 120, "max_output_tokens": 1024},
///       "mock_script": "mock.json",
///       "prompt_dir": "prompts",
///       "difficulty_table": "difficulty.json",
///       "search": {"population_size": 20},
///       "sandbox": {"timeout_seconds": 10, "interpreter": "python3", "scratch_root": "/tmp"},
///       "output_dir": "runs",
///       "seed": 0
///     }
struct RunConfig {
    std::map<BenchmarkKind, std::filesystem::path> benchmarks;
    BenchmarkKind search_benchmark = BenchmarkKind::HumanEval;
    std::vector<ModelId> models;
    HttpGatewayConfig gateway;
    int max_output_tokens = kDefaultMaxOutputTokens;
    std::optional<std::filesystem::path> mock_script;
    std::optional<std::filesystem::path> prompt_dir;
    std::optional<std::filesystem::path> difficulty_table;
    SearchParams search;
    SandboxOptions sandbox;
    std::filesystem::path output_dir = "runs";
    std::uint64_t seed = 0;

    /// Throws ConfigError (unknown key, missing file, bad value) or ParseError.
    static RunConfig parse(const nlohmann::ordered_json& j, const std::filesystem::path& base_dir);
    static RunConfig load(const std::filesystem::path& path);

    /// Fully resolved configuration, for run.meta.
    nlohmann::ordered_json to_json() const;

    const std::filesystem::path& benchmark_path(BenchmarkKind kind) const;
};

/// Environment variable that overrides gateway.endpoint.
inline constexpr const char* kEndpointEnv = "PIPEVO_ENDPOINT";

/// Mock gateway when a script is configured, HTTP otherwise. `seed` feeds the mock's sampling.
std::unique_ptr<ModelGateway> make_gateway(const RunConfig& config, std::uint64_t seed);

}  // namespace pipevo
