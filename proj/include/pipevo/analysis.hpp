#pragma once

/// Multi-run validation of fixed configurations and the statistics built on top of it.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pipevo/benchmark.hpp"
#include "pipevo/evolution.hpp"
#include "pipevo/gateway.hpp"
#include "pipevo/genome.hpp"
#include "pipevo/pipeline.hpp"
#include "pipevo/prompts.hpp"
#include "pipevo/sandbox.hpp"

namespace pipevo {

/// A configuration to validate. A genome without stages is a solo model: one generation,
/// one execution.
struct ConfigUnderTest {
    std::string label;
    PipelineGenome genome;
    bool early_stopping = true;
    int runs = 5;
    std::optional<double> forced_temperature;
};

/// Generator-only genome for a solo-model baseline.
PipelineGenome solo_genome(const ModelId& model, int prompt_index = 0, double temperature = 0.7);

/// What the analyses need from one trace.
struct TraceSummary {
    std::string problem_id;
    bool passed = false;
    ErrorType initial_error = ErrorType::None;
    std::vector<bool> steps;  ///< pass flag of each execution in order

    static TraceSummary of(const PipelineTrace& trace);
};

struct ConfigResult {
    std::string label;
    PipelineGenome genome;
    bool early_stopping = true;
    std::string benchmark;
    std::vector<std::string> problem_ids;
    std::vector<int> run_counts;
    std::vector<std::vector<bool>> solved;            ///< [run][problem]
    std::vector<std::vector<TraceSummary>> summaries; ///< [run][problem]
    std::vector<bool> run_complete;
    std::string abort_reason;  ///< set when a run was cut short
    double mean = 0.0;
    double std = 0.0;

    /// Recomputes counts from `solved`, and mean and std over the complete runs.
    void summarize();

    /// Summaries of every trace of every complete run, in run order.
    std::vector<TraceSummary> all_summaries() const;

    nlohmann::ordered_json to_json() const;
    static ConfigResult from_json(const nlohmann::ordered_json& j);
};

struct EvaluateOptions {
    std::uint64_t seed = 0;  ///< mixed into sampling so runs differ; 0 is fine
    int threads = 1;
    /// Called with every finished trace (from worker threads when threads > 1, serialized).
    std::function<void(int run, const PipelineTrace&)> on_trace;
};

/// `cfg.runs` independent passes over `problems`. A run interrupted by an unreachable server
/// is kept as far as it got and marked incomplete; remaining runs are skipped.
ConfigResult evaluate_config(const ConfigUnderTest& cfg, std::span<const Problem> problems, ModelGateway& gateway,
                             CodeExecutor& executor, const PromptPool& prompts, const EvaluateOptions& options = {});

double mean_of(std::span<const int> counts);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sample_std(std::span<const int> counts);

/// |a - b| / sqrt(sa^2 + sb^2). Both stds zero: 0 for equal means, +infinity otherwise.
double sigma_separation(double mean_a, double std_a, double mean_b, double std_b);

inline constexpr int kSmallSample = 5;

struct TaxonomyRow {
    ErrorType type = ErrorType::None;
    int n = 0;      ///< problems whose iteration-0 execution failed with `type`
    int fixed = 0;  ///< of those, ended passed
    double rate = 0.0;
    bool small_sample = false;
};

/// Rows for every error type that occurs at iteration 0, in enum order.
std::vector<TaxonomyRow> error_taxonomy(std::span<const TraceSummary> traces);

struct IterationRow {
    int k = 0;
    int fixes = 0;
    int regressions = 0;
    int net = 0;
};

struct IterationAnalysis {
    int budget = 0;          ///< refinement iterations covered
    bool restricted = false;  ///< traces had different budgets; cut to the common one
    std::vector<IterationRow> net_value;  ///< k = 1..budget, from no-early-stop traces
    std::vector<int> cumulative;          ///< k = 0..B, from early-stop traces: solved at or before k
    int initially_passing = 0;
    int broken = 0;         ///< initially passing, failing after some later refinement
    int ended_failing = 0;  ///< initially passing, final outcome failed
    double break_rate = 0.0;
    std::vector<std::string> broken_ids;
};

/// Either side may be empty; the matching tables are then left empty.
IterationAnalysis iteration_analysis(std::span<const TraceSummary> without_early_stop,
                                     std::span<const TraceSummary> with_early_stop);

struct NoiseRow {
    std::string label;
    int single_run = 0;
    double multi_run_mean = 0.0;
    double inflation = 0.0;  ///< single_run - multi_run_mean
};

NoiseRow empirical_noise(const ConfigResult& result);

struct NoiseSimulation {
    /// True per-problem pass probability of each genome: [genome][problem].
    std::vector<std::vector<double>> pass_prob;
    int evaluations = 1;  ///< evaluations averaged per genome; 0 means exact (no noise)
    long trials = 1'000'000;
    std::uint64_t seed = 0;

    static NoiseSimulation uniform(int genomes, int problems, double p);
};

struct NoiseEstimate {
    double inflation = 0.0;  ///< E[observed - true] of the genome picked by observed score
    double standard_error = 0.0;
    long trials = 0;
};

/// Monte Carlo of picking the best-looking genome from one noisy evaluation round.
NoiseEstimate simulate_selection_inflation(const NoiseSimulation& sim);

struct CeilingReport {
    std::vector<std::string> problem_ids;
    std::vector<std::pair<ErrorType, int>> by_error;  ///< modal iteration-0 error type per problem
};

/// Problems unsolved in every run of every configuration.
CeilingReport hard_ceiling(std::span<const ConfigResult> results);

/// Per-problem solve fraction, as consumed by the subset scheduler.
DifficultyTable difficulty_from(const ConfigResult& result);

}  // namespace pipevo
