#include "pipevo/speciation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <unordered_map>

namespace pipevo {

namespace {

struct NodeTerms {
    int model_mismatches = 0;
    int prompt_mismatches = 0;
    double temperature_diff = 0.0;

    void add(const LlmNodeConfig& x, const LlmNodeConfig& y) {
        model_mismatches += x.model != y.model;
        prompt_mismatches += x.prompt_index != y.prompt_index;
        temperature_diff += std::abs(x.temperature - y.temperature);
    }
};

}  // namespace

double compatibility_distance(const PipelineGenome& a, const PipelineGenome& b,
                              const CompatibilityWeights& w) {
    const double stage_diff =
        std::abs(static_cast<double>(a.stages.size()) - static_cast<double>(b.stages.size()));
    const double analyzer_diff = std::abs(analyzer_count(a) - analyzer_count(b));

    NodeTerms terms;
    terms.add(a.generator, b.generator);
    int iteration_diff = 0;
    for (const auto& sa : a.stages) {
        auto it = std::find_if(b.stages.begin(), b.stages.end(),
                               [&](const StageGene& sb) { return sb.innovation == sa.innovation; });
        if (it == b.stages.end()) continue;
        terms.add(sa.refiner, it->refiner);
        if (sa.analyzer && it->analyzer) terms.add(*sa.analyzer, *it->analyzer);
        iteration_diff += std::abs(sa.max_iterations - it->max_iterations);
    }

    return w.stage * stage_diff + w.analyzer * analyzer_diff + w.model * terms.model_mismatches +
           w.prompt * terms.prompt_mismatches + w.temperature * terms.temperature_diff +
           w.iterations * iteration_diff;
}

std::vector<Species> assign_species(std::span<const PipelineGenome> population,
                                    std::span<const Species> previous, double threshold,
                                    const CompatibilityWeights& weights) {
    std::vector<Species> species;
    species.reserve(previous.size());
    SpeciesId next_id = 1;
    for (const auto& s : previous) {
        species.push_back(Species{s.species_id, s.representative, {}});
        next_id = std::max(next_id, s.species_id + 1);
    }

    std::vector<const PipelineGenome*> order;
    order.reserve(population.size());
    for (const auto& g : population) order.push_back(&g);
    std::stable_sort(order.begin(), order.end(),
                     [](const auto* x, const auto* y) { return x->genome_id < y->genome_id; });

    for (const auto* g : order) {
        auto home = std::find_if(species.begin(), species.end(), [&](const Species& s) {
            return compatibility_distance(*g, s.representative, weights) < threshold;
        });
        if (home != species.end()) {
            home->members.push_back(g->genome_id);
        } else {
            species.push_back(Species{next_id++, *g, {g->genome_id}});
        }
    }

    std::erase_if(species, [](const Species& s) { return s.members.empty(); });
    return species;
}

double adjust_threshold(double threshold, std::size_t species_count, int target_min,
                        int target_max, double step) {
    if (species_count > static_cast<std::size_t>(target_max)) return threshold + step;
    if (species_count < static_cast<std::size_t>(target_min)) return std::max(step, threshold - step);
    return threshold;
}

double shared_fitness(double raw, int species_size) {
    if (species_size < 1) throw std::logic_error("shared_fitness: species size must be at least 1");
    return raw / species_size;
}

std::vector<Species> resample_representatives(std::span<const Species> species,
                                              std::span<const PipelineGenome> population, Rng& rng) {
    std::unordered_map<GenomeId, const PipelineGenome*> by_id;
    for (const auto& g : population) by_id.emplace(g.genome_id, &g);

    std::vector<Species> out;
    out.reserve(species.size());
    for (const auto& s : species) {
        Species next{s.species_id, s.representative, {}};
        if (!s.members.empty()) {
            GenomeId pick = s.members[uniform_index(rng, s.members.size())];
            if (auto it = by_id.find(pick); it != by_id.end()) next.representative = *it->second;
        }
        out.push_back(std::move(next));
    }
    return out;
}

}  // namespace pipevo
