#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pipevo/benchmark.hpp"
#include "pipevo/gateway.hpp"
#include "pipevo/genome.hpp"
#include "pipevo/params.hpp"
#include "pipevo/prompts.hpp"
#include "pipevo/sandbox.hpp"
#include "pipevo/speciation.hpp"

namespace pipevo {

struct EvaluatedGenome {
    PipelineGenome genome;
    int raw_passes = 0;
    double fitness = 0.0;  ///< raw_passes minus the parsimony penalty
    double shared = 0.0;   ///< fitness divided by species size
    SpeciesId species = 0;
    int total_iterations = 0;
};

/// raw_passes - parsimony_per_node * node_count(g).
double fitness(int raw_passes, const PipelineGenome& g, const SearchParams& params);

/// Strict ordering used everywhere a "best" is needed: higher shared fitness first, then fewer
/// total iterations, then lower genome_id.
bool ranks_before(const EvaluatedGenome& a, const EvaluatedGenome& b);

std::vector<EvaluatedGenome> rank(std::vector<EvaluatedGenome> population);

/// Samples `size` positions of `ranked` uniformly with replacement and returns the best one
/// (the smallest index, since `ranked` is sorted).
std::size_t tournament_select(std::size_t population, int size, Rng& rng);

/// Next generation: the top `elites` copied verbatim under fresh ids, the rest bred by
/// tournament selection, crossover and mutation. `next_id` is advanced for every genome made.
std::vector<PipelineGenome> reproduce(std::span<const EvaluatedGenome> ranked, const SearchParams& params,
                                      const ModelPool& pool, Rng& rng, InnovationCounter& counter,
                                      GenomeId& next_id);

/// Per-problem baseline pass rate in [0, 1], keyed by problem id.
using DifficultyTable = std::map<std::string, double>;

DifficultyTable load_difficulty(const std::filesystem::path& path);
void save_difficulty(const DifficultyTable& table, const std::filesystem::path& path);

/// Problems sorted by difficulty (easiest first, ties in benchmark order) and dealt round-robin
/// into `column_count` columns. Problems missing from the table count as 0.5.
std::vector<std::vector<std::string>> difficulty_columns(std::span<const Problem> problems,
                                                         const DifficultyTable& difficulty, int column_count);

/// Problem ids evaluated in `generation`. Stratified: column (generation mod column_count),
/// topped up with evenly spaced picks from the following columns when short, or thinned to
/// evenly spaced picks when long. Non-stratified: a uniform random subset drawn from a stream
/// keyed by (seed, generation). A benchmark no larger than subset_size is used whole.
std::vector<std::string> subset_for_generation(std::span<const Problem> problems, const DifficultyTable& difficulty,
                                               const SearchParams& params, int generation, std::uint64_t seed);

struct SpeciesSummary {
    SpeciesId species_id = 0;
    std::size_t size = 0;
    GenomeId representative = 0;
    double best_fitness = 0.0;
};

struct GenerationRecord {
    int generation = 0;
    std::vector<std::string> subset;
    int column = -1;  ///< -1 for non-stratified subsets
    double threshold = 0.0;
    std::vector<SpeciesSummary> species;
    GenomeId best_genome_id = 0;
    int best_raw = 0;
    double best_fitness = 0.0;
    std::vector<EvaluatedGenome> population;  ///< ranked

    nlohmann::ordered_json to_json() const;
    static GenerationRecord from_json(const nlohmann::ordered_json& j);
};

struct SearchResult {
    PipelineGenome champion;
    int champion_raw = 0;
    double champion_fitness = 0.0;
    int champion_generation = 0;
    std::vector<GenerationRecord> records;
    std::vector<PipelineGenome> final_population;
};

struct SearchContext {
    std::span<const Problem> problems;
    ModelGateway& gateway;
    CodeExecutor& executor;
    const PromptPool& prompts;
    const ModelPool& models;
    DifficultyTable difficulty;
};

struct SearchOptions {
    int generations = 0;  ///< generations after the initial one; records = generations + 1
    std::uint64_t seed = 0;
    /// When set, records, champion.genome and the checkpoint are written here.
    std::optional<std::filesystem::path> run_dir;
    bool resume = false;
    /// Written to run.meta on a fresh start. Defaults to params + seed + generations.
    std::optional<nlohmann::ordered_json> meta;
    std::function<void(const GenerationRecord&)> on_generation;
};

/// Generational loop. Evaluation failures that only affect one problem count as unsolved; an
/// unreachable model server aborts with the checkpoint of the last completed generation left
/// in run_dir, so `resume` can pick up from there.
SearchResult run_search(const SearchParams& params, SearchContext& ctx, const SearchOptions& options);

/// Raw passes of `g` on `subset` (ids into ctx.problems). Exposed for the difficulty command.
int evaluate_on_subset(const PipelineGenome& g, std::span<const std::string> subset, SearchContext& ctx,
                       const SearchParams& params, std::uint64_t nonce);

inline constexpr const char* kChampionFile = "champion.genome";
inline constexpr const char* kCheckpointFile = "checkpoint";
inline constexpr const char* kRunMetaFile = "run.meta";

std::string record_file_name(int generation);

}  // namespace pipevo
