#pragma once

#include <string>

#include <json.hpp>

namespace pipevo {

enum class EvalRegime { Stochastic, Deterministic };

struct MutationRates {
    double add_refine_stage = 0.04;
    double add_analyzer = 0.05;
    double remove_node = 0.18;
    double swap_model = 0.25;
    double mutate_prompt = 0.30;
    double adjust_temperature = 0.20;
    double adjust_iterations = 0.10;

    static MutationRates none() { return {0, 0, 0, 0, 0, 0, 0}; }
};

struct CompatibilityWeights {
    double stage = 1.0;
    double analyzer = 0.5;
    double model = 0.4;
    double prompt = 0.2;
    double temperature = 0.1;
    double iterations = 0.1;
};

/// Search hyperparameters. Defaults are the values the search was published with.
struct SearchParams {
    int population_size = 20;
    int elites = 2;
    int tournament_size = 3;
    double parsimony_per_node = 0.02;
    MutationRates rates;
    double temperature_jitter_sigma = 0.08;
    double weaker_parent_stage_p = 0.30;
    double iteration_decrease_bias = 0.60;
    double remove_analyzer_bias = 0.60;
    int subset_size = 25;
    int column_count = 7;
    int species_min = 3;
    int species_max = 5;
    double initial_threshold = 1.0;
    double threshold_step = 0.1;
    CompatibilityWeights weights;
    EvalRegime eval_regime = EvalRegime::Stochastic;
    bool stratified = true;
    bool early_stopping = true;
    int eval_threads = 1;

    /// Throws ConfigError if any rate leaves [0,1] or a size is non-positive.
    void check() const;
};

nlohmann::ordered_json to_json(const SearchParams& p);

/// Applies the keys present in `overrides` on top of `base`. Unknown keys are rejected.
SearchParams apply_overrides(SearchParams base, const nlohmann::ordered_json& overrides);

}  // namespace pipevo
