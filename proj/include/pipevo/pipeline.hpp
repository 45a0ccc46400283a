#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pipevo/benchmark.hpp"
#include "pipevo/gateway.hpp"
#include "pipevo/genome.hpp"
#include "pipevo/prompts.hpp"
#include "pipevo/sandbox.hpp"

namespace pipevo {

/// One execute-(analyze)-refine pass of a stage.
struct IterationEvent {
    int stage_index = 0;
    int iteration_index = 0;
    std::string code_before;
    ExecutionOutcome outcome;
    std::optional<std::string> analyzer_text;
    std::optional<std::string> code_after;  ///< present iff refinement was attempted
    std::vector<std::string> nodes_invoked;
    ErrorType node_error = ErrorType::None;  ///< GatewayError when an LLM node call failed
    bool degenerate_output = false;          ///< refiner returned no usable code
};

struct PipelineTrace {
    std::string problem_id;
    GenomeId genome_id = 0;
    std::string initial_code;
    bool generator_failed = false;
    std::vector<IterationEvent> events;
    /// Verification run after the last stage's budget; absent when the run stopped early.
    std::optional<ExecutionOutcome> final_outcome;
    std::string final_code;
    bool passed = false;
    bool early_stopped = false;
    bool initial_passed = false;
    double wall_time = 0.0;

    /// Pass flag of every execution in order: iteration 0 first, verification run last.
    std::vector<bool> step_passes() const;
    ErrorType initial_error() const;
    int executions() const;
    int refiner_calls() const;
};

struct RunOptions {
    bool early_stopping = true;
    /// Overrides every node's temperature (0 for the deterministic regime).
    std::optional<double> forced_temperature;
    /// Mixed into every request's sample_key so separate runs sample independently.
    std::uint64_t sample_nonce = 0;
    int max_output_tokens = kDefaultMaxOutputTokens;
};

/// Generate, then for each stage: execute; stop on pass (when early stopping); otherwise build
/// feedback, optionally analyze, refine and adopt the refined code. A final execution after the
/// last stage decides the verdict.
///
/// LLM node failures are recorded on the iteration and the previous code is kept. Only an
/// unreachable server (GatewayError::unreachable()) propagates.
PipelineTrace run_pipeline(const PipelineGenome& genome, const Problem& problem, ModelGateway& gateway,
                           CodeExecutor& executor, const PromptPool& prompts, const RunOptions& options = {});

/// Pieces handed to the refiner. `traceback` already carries the error type header and has
/// been cut down to fit the context budget.
struct Feedback {
    std::string problem;
    std::string code;
    std::string traceback;

    std::string text() const;
};

inline constexpr int kTracebackLineBudget = 30;
inline constexpr int kTracebackHeadLines = 5;
/// Tokens reserved for the template around the feedback.
inline constexpr int kPromptOverheadTokens = 512;

/// Rough token count used for budgeting (4 characters per token, rounded up).
int estimate_tokens(std::string_view text);

/// Token budget for the feedback text: context minus output allowance minus template overhead.
int feedback_token_budget(int max_output_tokens = kDefaultMaxOutputTokens);

Feedback build_feedback(const Problem& problem, std::string_view code, const ExecutionOutcome& outcome,
                        int token_budget = feedback_token_budget());

std::string format_feedback(const Problem& problem, std::string_view code, const ExecutionOutcome& outcome);

nlohmann::ordered_json to_json(const ExecutionOutcome& outcome);
ExecutionOutcome outcome_from_json(const nlohmann::ordered_json& j);

/// Structured trace record; round-trips through trace_from_json.
nlohmann::ordered_json to_json(const PipelineTrace& trace);
PipelineTrace trace_from_json(const nlohmann::ordered_json& j);

}  // namespace pipevo
