#pragma once

#include <array>
#include <string_view>
#include <vector>

#include "pipevo/genome.hpp"
#include "pipevo/params.hpp"
#include "pipevo/random.hpp"

namespace pipevo {

/// The seven mutation operators, in the order they are tried.
enum class MutationOp {
    AddRefineStage,
    AddAnalyzer,
    RemoveNode,
    SwapModel,
    MutatePrompt,
    AdjustTemperature,
    AdjustIterations,
};

inline constexpr std::array<MutationOp, 7> kMutationOrder = {
    MutationOp::AddRefineStage, MutationOp::AddAnalyzer,       MutationOp::RemoveNode,
    MutationOp::SwapModel,      MutationOp::MutatePrompt,      MutationOp::AdjustTemperature,
    MutationOp::AdjustIterations,
};

std::string_view to_string(MutationOp op);
double rate_of(const MutationRates& rates, MutationOp op);

struct MutationOutcome {
    PipelineGenome offspring;
    std::vector<MutationOp> fired;    ///< in firing order
    std::vector<MutationOp> blocked;  ///< subset of `fired` that could not apply

    bool did_fire(MutationOp op) const;
    bool was_blocked(MutationOp op) const;
};

/// Each operator fires independently with its configured rate. Structural operators run first
/// so a stage added in this step can pick up configuration mutations in the same step.
MutationOutcome apply_mutations(const PipelineGenome& g, const SearchParams& params,
                                const ModelPool& pool, Rng& rng, InnovationCounter& counter);

/// Innovation-aligned crossover. Fitnesses are the parents' shared fitnesses.
/// The offspring keeps genome_id 0.
PipelineGenome crossover(const PipelineGenome& a, const PipelineGenome& b, double fitness_a,
                         double fitness_b, const SearchParams& params, Rng& rng);

}  // namespace pipevo
