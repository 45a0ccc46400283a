#include "pipevo/params.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "pipevo/errors.hpp"

namespace pipevo {

using Json = nlohmann::ordered_json;

namespace {

void check_rate(double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(fmt::format("{} = {} is not in [0, 1]", name, v));
}

template <typename T>
void read(const Json& obj, const char* key, T& out, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
        out = it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(fmt::format("{}{}: wrong type", where, key));
    }
}

void reject_unknown(const Json& obj, std::initializer_list<std::string_view> known,
                    const std::string& where) {
    if (!obj.is_object()) throw ConfigError(fmt::format("{}: expected an object", where));
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
            throw ConfigError(fmt::format("unknown key '{}{}'", where, it.key()));
        }
    }
}

}  // namespace

void SearchParams::check() const {
    check_rate(rates.add_refine_stage, "add_refine_stage");
    check_rate(rates.add_analyzer, "add_analyzer");
    check_rate(rates.remove_node, "remove_node");
    check_rate(rates.swap_model, "swap_model");
    check_rate(rates.mutate_prompt, "mutate_prompt");
    check_rate(rates.adjust_temperature, "adjust_temperature");
    check_rate(rates.adjust_iterations, "adjust_iterations");
    check_rate(weaker_parent_stage_p, "weaker_parent_stage_p");
    check_rate(iteration_decrease_bias, "iteration_decrease_bias");
    check_rate(remove_analyzer_bias, "remove_analyzer_bias");
    if (population_size < 1) throw ConfigError("population_size must be positive");
    if (elites < 0 || elites > population_size) throw ConfigError("elites must be in [0, population_size]");
    if (tournament_size < 1) throw ConfigError("tournament_size must be positive");
    if (subset_size < 1) throw ConfigError("subset_size must be positive");
    if (column_count < 1) throw ConfigError("column_count must be positive");
    if (species_min < 1 || species_max < species_min) throw ConfigError("species target band is empty");
    if (!(initial_threshold > 0)) throw ConfigError("initial_threshold must be positive");
    if (!(threshold_step > 0)) throw ConfigError("threshold_step must be positive");
    if (!(temperature_jitter_sigma >= 0)) throw ConfigError("temperature_jitter_sigma must be >= 0");
    if (eval_threads < 1) throw ConfigError("eval_threads must be positive");
}

Json to_json(const SearchParams& p) {
    Json j;
    j["population_size"] = p.population_size;
    j["elites"] = p.elites;
    j["tournament_size"] = p.tournament_size;
    j["parsimony_per_node"] = p.parsimony_per_node;
    j["rates"] = {{"add_refine_stage", p.rates.add_refine_stage},
                  {"add_analyzer", p.rates.add_analyzer},
                  {"remove_node", p.rates.remove_node},
                  {"swap_model", p.rates.swap_model},
                  {"mutate_prompt", p.rates.mutate_prompt},
                  {"adjust_temperature", p.rates.adjust_temperature},
                  {"adjust_iterations", p.rates.adjust_iterations}};
    j["temperature_jitter_sigma"] = p.temperature_jitter_sigma;
    j["weaker_parent_stage_p"] = p.weaker_parent_stage_p;
    j["iteration_decrease_bias"] = p.iteration_decrease_bias;
    j["remove_analyzer_bias"] = p.remove_analyzer_bias;
    j["subset_size"] = p.subset_size;
    j["column_count"] = p.column_count;
    j["species_target"] = {p.species_min, p.species_max};
    j["initial_threshold"] = p.initial_threshold;
    j["threshold_step"] = p.threshold_step;
    j["weights"] = {{"stage", p.weights.stage},         {"analyzer", p.weights.analyzer},
                    {"model", p.weights.model},         {"prompt", p.weights.prompt},
                    {"temperature", p.weights.temperature}, {"iterations", p.weights.iterations}};
    j["eval_regime"] = p.eval_regime == EvalRegime::Deterministic ? "deterministic" : "stochastic";
    j["stratified"] = p.stratified;
    j["early_stopping"] = p.early_stopping;
    j["eval_threads"] = p.eval_threads;
    return j;
}

SearchParams apply_overrides(SearchParams p, const Json& o) {
    const std::string w = "search.";
    reject_unknown(o,
                   {"population_size", "elites", "tournament_size", "parsimony_per_node", "rates",
                    "temperature_jitter_sigma", "weaker_parent_stage_p", "iteration_decrease_bias",
                    "remove_analyzer_bias", "subset_size", "column_count", "species_target",
                    "initial_threshold", "threshold_step", "weights", "eval_regime", "stratified",
                    "early_stopping", "eval_threads"},
                   w);
    read(o, "population_size", p.population_size, w);
    read(o, "elites", p.elites, w);
    read(o, "tournament_size", p.tournament_size, w);
    read(o, "parsimony_per_node", p.parsimony_per_node, w);
    if (auto it = o.find("rates"); it != o.end()) {
        const std::string rw = w + "rates.";
        reject_unknown(*it,
                       {"add_refine_stage", "add_analyzer", "remove_node", "swap_model",
                        "mutate_prompt", "adjust_temperature", "adjust_iterations"},
                       rw);
        read(*it, "add_refine_stage", p.rates.add_refine_stage, rw);
        read(*it, "add_analyzer", p.rates.add_analyzer, rw);
        read(*it, "remove_node", p.rates.remove_node, rw);
        read(*it, "swap_model", p.rates.swap_model, rw);
        read(*it, "mutate_prompt", p.rates.mutate_prompt, rw);
        read(*it, "adjust_temperature", p.rates.adjust_temperature, rw);
        read(*it, "adjust_iterations", p.rates.adjust_iterations, rw);
    }
    read(o, "temperature_jitter_sigma", p.temperature_jitter_sigma, w);
    read(o, "weaker_parent_stage_p", p.weaker_parent_stage_p, w);
    read(o, "iteration_decrease_bias", p.iteration_decrease_bias, w);
    read(o, "remove_analyzer_bias", p.remove_analyzer_bias, w);
    read(o, "subset_size", p.subset_size, w);
    read(o, "column_count", p.column_count, w);
    if (auto it = o.find("species_target"); it != o.end()) {
        if (!it->is_array() || it->size() != 2) throw ConfigError("search.species_target: expected [min, max]");
        p.species_min = (*it)[0].get<int>();
        p.species_max = (*it)[1].get<int>();
    }
    read(o, "initial_threshold", p.initial_threshold, w);
    read(o, "threshold_step", p.threshold_step, w);
    if (auto it = o.find("weights"); it != o.end()) {
        const std::string ww = w + "weights.";
        reject_unknown(*it, {"stage", "analyzer", "model", "prompt", "temperature", "iterations"}, ww);
        read(*it, "stage", p.weights.stage, ww);
        read(*it, "analyzer", p.weights.analyzer, ww);
        read(*it, "model", p.weights.model, ww);
        read(*it, "prompt", p.weights.prompt, ww);
        read(*it, "temperature", p.weights.temperature, ww);
        read(*it, "iterations", p.weights.iterations, ww);
    }
    if (auto it = o.find("eval_regime"); it != o.end()) {
        auto v = it->is_string() ? it->get<std::string>() : std::string{};
        if (v == "stochastic") p.eval_regime = EvalRegime::Stochastic;
        else if (v == "deterministic") p.eval_regime = EvalRegime::Deterministic;
        else throw ConfigError("search.eval_regime must be \"stochastic\" or \"deterministic\"");
    }
    read(o, "stratified", p.stratified, w);
    read(o, "early_stopping", p.early_stopping, w);
    read(o, "eval_threads", p.eval_threads, w);
    p.check();
    return p;
}

}  // namespace pipevo
