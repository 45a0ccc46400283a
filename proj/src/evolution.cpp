#include "pipevo/evolution.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "pipevo/errors.hpp"
#include "pipevo/variation.hpp"

namespace pipevo {

using Json = nlohmann::ordered_json;

double fitness(int raw_passes, const PipelineGenome& g, const SearchParams& params) {
    return static_cast<double>(raw_passes) - params.parsimony_per_node * node_count(g);
}

bool ranks_before(const EvaluatedGenome& a, const EvaluatedGenome& b) {
    if (a.shared != b.shared) return a.shared > b.shared;
    if (a.total_iterations != b.total_iterations) return a.total_iterations < b.total_iterations;
    return a.genome.genome_id < b.genome.genome_id;
}

std::vector<EvaluatedGenome> rank(std::vector<EvaluatedGenome> population) {
    std::sort(population.begin(), population.end(), ranks_before);
    return population;
}

std::size_t tournament_select(std::size_t population, int size, Rng& rng) {
    std::size_t best = population;
    for (int i = 0; i < std::max(size, 1); ++i) best = std::min(best, uniform_index(rng, population));
    return best;
}

std::vector<PipelineGenome> reproduce(std::span<const EvaluatedGenome> ranked, const SearchParams& params,
                                      const ModelPool& pool, Rng& rng, InnovationCounter& counter,
                                      GenomeId& next_id) {
    if (ranked.empty()) throw std::invalid_argument("reproduce: empty population");
    const auto target = static_cast<std::size_t>(params.population_size);
    std::vector<PipelineGenome> next;
    next.reserve(target);

    const auto elites = std::min<std::size_t>(static_cast<std::size_t>(params.elites), std::min(target, ranked.size()));
    for (std::size_t i = 0; i < elites; ++i) {
        PipelineGenome copy = ranked[i].genome;
        copy.genome_id = next_id++;
        next.push_back(std::move(copy));
    }
    while (next.size() < target) {
        const auto& a = ranked[tournament_select(ranked.size(), params.tournament_size, rng)];
        const auto& b = ranked[tournament_select(ranked.size(), params.tournament_size, rng)];
        PipelineGenome child = crossover(a.genome, b.genome, a.shared, b.shared, params, rng);
        child = apply_mutations(child, params, pool, rng, counter).offspring;
        child.genome_id = next_id++;
        next.push_back(std::move(child));
    }
    return next;
}

// ---------------------------------------------------------------------------
// Difficulty-stratified subsets

DifficultyTable load_difficulty(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read difficulty table " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::exception& e) {
        throw ParseError("", fmt::format("{}: {}", path.string(), e.what()));
    }
    const Json& rates = j.contains("pass_rates") ? j.at("pass_rates") : j;
    if (!rates.is_object()) throw ParseError("pass_rates", "expected an object of problem id -> rate");
    DifficultyTable table;
    for (auto it = rates.begin(); it != rates.end(); ++it) {
        if (!it->is_number()) throw ParseError(it.key(), "expected a number");
        double v = it->get<double>();
        if (v < 0.0 || v > 1.0) throw ParseError(it.key(), "pass rate outside [0, 1]");
        table[it.key()] = v;
    }
    return table;
}

void save_difficulty(const DifficultyTable& table, const std::filesystem::path& path) {
    Json rates = Json::object();
    for (const auto& [id, rate] : table) rates[id] = rate;
    Json j;
    j["pass_rates"] = std::move(rates);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw EnvironmentError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

std::vector<std::vector<std::string>> difficulty_columns(std::span<const Problem> problems,
                                                         const DifficultyTable& difficulty, int column_count) {
    if (column_count < 1) throw std::invalid_argument("column_count must be positive");
    std::vector<std::pair<double, std::size_t>> order;
    order.reserve(problems.size());
    for (std::size_t i = 0; i < problems.size(); ++i) {
        auto it = difficulty.find(problems[i].problem_id);
        order.emplace_back(it == difficulty.end() ? 0.5 : it->second, i);
    }
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

    std::vector<std::vector<std::string>> columns(static_cast<std::size_t>(column_count));
    for (std::size_t k = 0; k < order.size(); ++k) {
        columns[k % columns.size()].push_back(problems[order[k].second].problem_id);
    }
    return columns;
}

namespace {

/// `k` evenly spaced members of `from` (all of it when k >= size).
std::vector<std::string> spaced_picks(const std::vector<std::string>& from, std::size_t k) {
    if (k >= from.size()) return from;
    std::vector<std::string> out;
    out.reserve(k);
    for (std::size_t j = 0; j < k; ++j) out.push_back(from[(2 * j + 1) * from.size() / (2 * k)]);
    return out;
}

}  // namespace

std::vector<std::string> subset_for_generation(std::span<const Problem> problems, const DifficultyTable& difficulty,
                                               const SearchParams& params, int generation, std::uint64_t seed) {
    const auto want = static_cast<std::size_t>(params.subset_size);
    if (problems.size() <= want) {
        std::vector<std::string> all;
        for (const auto& p : problems) all.push_back(p.problem_id);
        return all;
    }
    if (!params.stratified) {
        Rng rng = make_stream(hash_combine(seed, static_cast<std::uint64_t>(generation)), "subset");
        std::vector<std::size_t> idx(problems.size());
        std::iota(idx.begin(), idx.end(), 0);
        for (std::size_t i = 0; i < want; ++i) std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
        std::vector<std::string> out;
        for (std::size_t i = 0; i < want; ++i) out.push_back(problems[idx[i]].problem_id);
        return out;
    }

    const auto columns = difficulty_columns(problems, difficulty, params.column_count);
    const std::size_t n = columns.size();
    const std::size_t home = static_cast<std::size_t>(generation) % n;
    std::vector<std::string> out = spaced_picks(columns[home], want);
    for (std::size_t step = 1; out.size() < want && step < n; ++step) {
        auto more = spaced_picks(columns[(home + step) % n], want - out.size());
        out.insert(out.end(), more.begin(), more.end());
    }
    return out;
}

}  // namespace pipevo
