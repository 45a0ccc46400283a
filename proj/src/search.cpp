#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "pipevo/errors.hpp"
#include "pipevo/evolution.hpp"
#include "pipevo/pipeline.hpp"

namespace pipevo {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

std::string record_file_name(int generation) {
    return fmt::format("gen-{}.record", generation);
}

namespace {

Json genome_json(const PipelineGenome& g) {
    return Json::parse(serialize_genome(g));
}

PipelineGenome genome_from(const Json& j) {
    return parse_genome(j.dump());
}

void write_file(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw EnvironmentError("cannot write " + tmp.string());
        out << text;
        if (!out) throw EnvironmentError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

Json read_json(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw ParseError("", fmt::format("{}: {}", path.string(), e.what()));
    }
}

}  // namespace

Json GenerationRecord::to_json() const {
    Json j;
    j["generation"] = generation;
    j["column"] = column;
    j["subset"] = subset;
    j["threshold"] = threshold;
    Json sp = Json::array();
    for (const auto& s : species) {
        sp.push_back({{"species_id", s.species_id},
                      {"size", s.size},
                      {"representative", s.representative},
                      {"best_fitness", s.best_fitness}});
    }
    j["species"] = std::move(sp);
    j["best"] = {{"genome_id", best_genome_id}, {"raw_passes", best_raw}, {"fitness", best_fitness}};
    Json pop = Json::array();
    for (const auto& e : population) {
        pop.push_back({{"genome_id", e.genome.genome_id},
                       {"raw_passes", e.raw_passes},
                       {"fitness", e.fitness},
                       {"shared", e.shared},
                       {"species", e.species},
                       {"total_iterations", e.total_iterations},
                       {"genome", genome_json(e.genome)}});
    }
    j["population"] = std::move(pop);
    return j;
}

GenerationRecord GenerationRecord::from_json(const Json& j) {
    GenerationRecord r;
    try {
        r.generation = j.at("generation").get<int>();
        r.column = j.at("column").get<int>();
        r.subset = j.at("subset").get<std::vector<std::string>>();
        r.threshold = j.at("threshold").get<double>();
        for (const auto& s : j.at("species")) {
            r.species.push_back({s.at("species_id").get<SpeciesId>(), s.at("size").get<std::size_t>(),
                                 s.at("representative").get<GenomeId>(), s.at("best_fitness").get<double>()});
        }
        const auto& best = j.at("best");
        r.best_genome_id = best.at("genome_id").get<GenomeId>();
        r.best_raw = best.at("raw_passes").get<int>();
        r.best_fitness = best.at("fitness").get<double>();
        for (const auto& e : j.at("population")) {
            EvaluatedGenome eg;
            eg.genome = genome_from(e.at("genome"));
            eg.raw_passes = e.at("raw_passes").get<int>();
            eg.fitness = e.at("fitness").get<double>();
            eg.shared = e.at("shared").get<double>();
            eg.species = e.at("species").get<SpeciesId>();
            eg.total_iterations = e.at("total_iterations").get<int>();
            r.population.push_back(std::move(eg));
        }
    } catch (const Json::exception& e) {
        throw ParseError("record", e.what());
    }
    return r;
}

// ---------------------------------------------------------------------------

namespace {

RunOptions pipeline_options(const SearchParams& params, std::uint64_t nonce) {
    RunOptions o;
    o.early_stopping = params.early_stopping;
    if (params.eval_regime == EvalRegime::Deterministic) o.forced_temperature = 0.0;
    o.sample_nonce = nonce;
    return o;
}

bool solve_one(const PipelineGenome& g, const Problem& p, SearchContext& ctx, const SearchParams& params,
               std::uint64_t nonce) {
    const auto trace = run_pipeline(g, p, ctx.gateway, ctx.executor, ctx.prompts, pipeline_options(params, nonce));
    if (!trace.passed && trace.final_outcome && trace.final_outcome->error_type == ErrorType::HarnessError) {
        spdlog::warn("genome {} on {}: sandbox failure counted as unsolved: {}", g.genome_id, p.problem_id,
                     trace.final_outcome->stderr_text);
    }
    return trace.passed;
}

std::vector<const Problem*> lookup(std::span<const Problem> problems, std::span<const std::string> ids) {
    std::unordered_map<std::string_view, const Problem*> by_id;
    for (const auto& p : problems) by_id.emplace(p.problem_id, &p);
    std::vector<const Problem*> out;
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw ConfigError("unknown problem id " + id);
        out.push_back(it->second);
    }
    return out;
}

/// Raw passes for every genome on `subset`, optionally spread over worker threads. Results do
/// not depend on scheduling: every task has its own sampling nonce.
std::vector<int> evaluate_population(const std::vector<PipelineGenome>& population,
                                     const std::vector<const Problem*>& subset, SearchContext& ctx,
                                     const SearchParams& params, std::uint64_t seed) {
    const std::size_t tasks = population.size() * subset.size();
    std::vector<char> solved(tasks, 0);
    std::atomic<std::size_t> cursor{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&] {
        for (;;) {
            const std::size_t t = cursor.fetch_add(1);
            if (t >= tasks) return;
            const auto& g = population[t / subset.size()];
            const auto& p = *subset[t % subset.size()];
            try {
                solved[t] = solve_one(g, p, ctx, params, hash_combine(seed, g.genome_id));
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                cursor.store(tasks);
                return;
            }
        }
    };

    const int threads = std::max(1, params.eval_threads);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<int> raw(population.size(), 0);
    for (std::size_t t = 0; t < tasks; ++t) raw[t / subset.size()] += solved[t];
    return raw;
}

struct SearchState {
    int next_generation = 0;
    std::vector<PipelineGenome> population;
    std::vector<Species> species;
    double threshold = 1.0;
    GenomeId next_genome_id = 1;
    Innovation next_innovation = 1;
    Rng reproduce_rng;
    Rng species_rng;
    bool have_champion = false;
    PipelineGenome champion;
    int champion_raw = 0;
    double champion_fitness = 0.0;
    int champion_generation = 0;
    bool complete = false;
};

Json state_json(const SearchState& s, std::uint64_t seed) {
    Json j;
    j["seed"] = seed;
    j["next_generation"] = s.next_generation;
    j["complete"] = s.complete;
    j["threshold"] = s.threshold;
    j["next_genome_id"] = s.next_genome_id;
    j["next_innovation"] = s.next_innovation;
    Json pop = Json::array();
    for (const auto& g : s.population) pop.push_back(genome_json(g));
    j["population"] = std::move(pop);
    Json sp = Json::array();
    for (const auto& spc : s.species) {
        sp.push_back({{"species_id", spc.species_id},
                      {"representative", genome_json(spc.representative)},
                      {"members", spc.members}});
    }
    j["species"] = std::move(sp);
    j["rng"] = {{"reproduce", serialize_rng(s.reproduce_rng)}, {"species", serialize_rng(s.species_rng)}};
    if (s.have_champion) {
        j["champion"] = {{"genome", genome_json(s.champion)},
                         {"raw_passes", s.champion_raw},
                         {"fitness", s.champion_fitness},
                         {"generation", s.champion_generation}};
    }
    return j;
}

SearchState state_from(const Json& j, std::uint64_t seed) {
    SearchState s;
    try {
        if (j.at("seed").get<std::uint64_t>() != seed) {
            throw ConfigError(fmt::format("checkpoint was written with seed {}, not {}",
                                          j.at("seed").get<std::uint64_t>(), seed));
        }
        s.next_generation = j.at("next_generation").get<int>();
        s.complete = j.at("complete").get<bool>();
        s.threshold = j.at("threshold").get<double>();
        s.next_genome_id = j.at("next_genome_id").get<GenomeId>();
        s.next_innovation = j.at("next_innovation").get<Innovation>();
        for (const auto& g : j.at("population")) s.population.push_back(genome_from(g));
        for (const auto& sp : j.at("species")) {
            s.species.push_back({sp.at("species_id").get<SpeciesId>(), genome_from(sp.at("representative")),
                                 sp.at("members").get<std::vector<GenomeId>>()});
        }
        restore_rng(s.reproduce_rng, j.at("rng").at("reproduce").get<std::string>());
        restore_rng(s.species_rng, j.at("rng").at("species").get<std::string>());
        if (auto c = j.find("champion"); c != j.end()) {
            s.have_champion = true;
            s.champion = genome_from(c->at("genome"));
            s.champion_raw = c->at("raw_passes").get<int>();
            s.champion_fitness = c->at("fitness").get<double>();
            s.champion_generation = c->at("generation").get<int>();
        }
    } catch (const Json::exception& e) {
        throw ParseError("checkpoint", e.what());
    }
    return s;
}

bool fitter(const EvaluatedGenome& a, const EvaluatedGenome& b) {
    if (a.fitness != b.fitness) return a.fitness > b.fitness;
    if (a.total_iterations != b.total_iterations) return a.total_iterations < b.total_iterations;
    return a.genome.genome_id < b.genome.genome_id;
}

}  // namespace

int evaluate_on_subset(const PipelineGenome& g, std::span<const std::string> subset, SearchContext& ctx,
                       const SearchParams& params, std::uint64_t nonce) {
    const auto problems = lookup(ctx.problems, subset);
    return evaluate_population({g}, problems, ctx, params, nonce).front();
}

SearchResult run_search(const SearchParams& params, SearchContext& ctx, const SearchOptions& options) {
    params.check();
    if (ctx.models.empty()) throw ConfigError("model pool is empty");
    if (ctx.problems.empty()) throw ConfigError("benchmark has no problems");
    if (options.generations < 0) throw ConfigError("generations must be non-negative");

    const std::uint64_t seed = options.seed;
    SearchResult result;
    SearchState state;
    state.threshold = params.initial_threshold;
    state.reproduce_rng = make_stream(seed, "reproduce");
    state.species_rng = make_stream(seed, "species");

    std::optional<fs::path> dir = options.run_dir;
    const bool resuming = dir && options.resume && fs::exists(*dir / kCheckpointFile);
    if (resuming) {
        state = state_from(read_json(*dir / kCheckpointFile), seed);
        for (int g = 0; g < state.next_generation; ++g) {
            result.records.push_back(GenerationRecord::from_json(read_json(*dir / record_file_name(g))));
        }
        spdlog::info("resuming at generation {}", state.next_generation);
    } else {
        if (dir) {
            fs::create_directories(*dir);
            Json meta = options.meta ? *options.meta
                                     : Json{{"seed", seed}, {"generations", options.generations},
                                            {"search", to_json(params)}};
            write_file(*dir / kRunMetaFile, meta.dump(2) + "\n");
        }
        Rng init = make_stream(seed, "init");
        InnovationCounter counter(state.next_innovation);
        for (int i = 0; i < params.population_size; ++i) {
            PipelineGenome g = new_random_genome(ctx.models, init, counter);
            g.genome_id = state.next_genome_id++;
            state.population.push_back(std::move(g));
        }
        state.next_innovation = counter.peek();
    }

    auto save_checkpoint = [&] {
        if (dir) write_file(*dir / kCheckpointFile, state_json(state, seed).dump(2) + "\n");
    };

    while (!state.complete && state.next_generation <= options.generations) {
        save_checkpoint();
        const int gen = state.next_generation;
        GenerationRecord rec;
        rec.generation = gen;
        rec.subset = subset_for_generation(ctx.problems, ctx.difficulty, params, gen, seed);
        rec.column = (params.stratified && ctx.problems.size() > static_cast<std::size_t>(params.subset_size))
                         ? gen % params.column_count
                         : -1;
        rec.threshold = state.threshold;

        const auto subset = lookup(ctx.problems, rec.subset);
        const auto raw = evaluate_population(state.population, subset, ctx, params,
                                             hash_combine(seed, static_cast<std::uint64_t>(gen)));

        auto species = assign_species(state.population, state.species, state.threshold, params.weights);
        std::unordered_map<GenomeId, const Species*> species_of;
        for (const auto& s : species) {
            for (GenomeId id : s.members) species_of[id] = &s;
        }

        std::vector<EvaluatedGenome> evaluated;
        for (std::size_t i = 0; i < state.population.size(); ++i) {
            EvaluatedGenome e;
            e.genome = state.population[i];
            e.raw_passes = raw[i];
            e.fitness = fitness(raw[i], e.genome, params);
            const Species* s = species_of.at(e.genome.genome_id);
            e.species = s->species_id;
            e.shared = shared_fitness(e.fitness, static_cast<int>(s->members.size()));
            e.total_iterations = total_iterations(e.genome);
            evaluated.push_back(std::move(e));
        }
        auto ranked = rank(std::move(evaluated));

        const auto best = *std::min_element(ranked.begin(), ranked.end(), fitter);
        rec.best_genome_id = best.genome.genome_id;
        rec.best_raw = best.raw_passes;
        rec.best_fitness = best.fitness;
        for (const auto& s : species) {
            SpeciesSummary sum{s.species_id, s.members.size(), s.representative.genome_id, 0.0};
            bool first = true;
            for (const auto& e : ranked) {
                if (e.species != s.species_id) continue;
                if (first || e.fitness > sum.best_fitness) sum.best_fitness = e.fitness;
                first = false;
            }
            rec.species.push_back(sum);
        }
        rec.population = ranked;

        if (!state.have_champion || best.fitness > state.champion_fitness) {
            state.have_champion = true;
            state.champion = best.genome;
            state.champion_raw = best.raw_passes;
            state.champion_fitness = best.fitness;
            state.champion_generation = gen;
        }
        if (dir) {
            write_file(*dir / record_file_name(gen), rec.to_json().dump(2) + "\n");
            write_file(*dir / kChampionFile, serialize_genome(state.champion));
        }
        spdlog::info("generation {}: best raw {} fitness {:.2f} ({}), {} species, threshold {:.2f}", gen,
                     rec.best_raw, rec.best_fitness, describe(best.genome), species.size(), state.threshold);
        if (options.on_generation) options.on_generation(rec);
        result.records.push_back(std::move(rec));

        state.threshold = adjust_threshold(state.threshold, species.size(), params.species_min, params.species_max,
                                           params.threshold_step);
        state.species = resample_representatives(species, state.population, state.species_rng);
        state.next_generation = gen + 1;
        if (gen == options.generations) {
            state.complete = true;
        } else {
            InnovationCounter counter(state.next_innovation);
            state.population = reproduce(ranked, params, ctx.models, state.reproduce_rng, counter,
                                         state.next_genome_id);
            state.next_innovation = counter.peek();
        }
    }
    save_checkpoint();

    if (!state.have_champion) throw std::logic_error("search finished without evaluating a generation");
    result.champion = state.champion;
    result.champion_raw = state.champion_raw;
    result.champion_fitness = state.champion_fitness;
    result.champion_generation = state.champion_generation;
    result.final_population = state.population;
    return result;
}

}  // namespace pipevo
