#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pipevo/genome.hpp"
#include "pipevo/params.hpp"
#include "pipevo/random.hpp"

namespace pipevo {

using SpeciesId = std::uint64_t;

struct Species {
    SpeciesId species_id = 0;
    PipelineGenome representative;
    std::vector<GenomeId> members;
};

/// Weighted structural + configuration distance. Generators are compared with each other;
/// stages are paired by innovation number. Unpaired stages and unpaired analyzers only show up
/// through the stage-count and analyzer-count terms.
double compatibility_distance(const PipelineGenome& a, const PipelineGenome& b,
                              const CompatibilityWeights& weights);

/// First-fit assignment in genome_id order. Existing species (in the order given) are tried
/// before species founded during this call. Species left without members are dropped.
std::vector<Species> assign_species(std::span<const PipelineGenome> population,
                                    std::span<const Species> previous, double threshold,
                                    const CompatibilityWeights& weights);

double adjust_threshold(double threshold, std::size_t species_count, int target_min = 3,
                        int target_max = 5, double step = 0.1);

/// raw / species_size. Throws std::logic_error for an empty species.
double shared_fitness(double raw, int species_size);

/// Carries species into the next generation with a representative drawn uniformly from each
/// species' current members.
std::vector<Species> resample_representatives(std::span<const Species> species,
                                              std::span<const PipelineGenome> population, Rng& rng);

}  // namespace pipevo
