// Tier 1 acceptance checks. One PASS/FAIL line per criterion; exit status 0 only if every
// selected criterion passes.
//
//     acceptance                 all criteria
//     acceptance --criterion 4   just one

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "pipevo/analysis.hpp"
#include "pipevo/cli.hpp"
#include "pipevo/evolution.hpp"
#include "pipevo/pipeline.hpp"
#include "pipevo/prompts.hpp"
#include "pipevo/sandbox.hpp"
#include "pipevo/speciation.hpp"
#include "pipevo/variation.hpp"
#include "support.hpp"

using namespace pipevo;
using namespace testing;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = true;
    std::vector<std::string> notes;

    void require(bool ok, std::string note) {
        pass = pass && ok;
        notes.push_back((ok ? "" : "!! ") + std::move(note));
    }
};

const PromptPool& prompts() {
    static const PromptPool pool = PromptPool::load(default_prompt_dir());
    return pool;
}

std::vector<Problem> synthetic_problems(int n) {
    std::vector<Problem> out;
    for (int i = 0; i < n; ++i) {
        Problem p;
        p.benchmark = BenchmarkKind::MbppSanitized;
        p.problem_id = fmt::format("S/{}", i);
        p.statement = fmt::format("Solve problem <<{}>>.", i);
        p.test_block = "assert True\n";
        out.push_back(p);
    }
    return out;
}

int problem_index(const std::string& prompt) {
    const auto at = prompt.find("<<");
    return at == std::string::npos ? -1 : std::stoi(prompt.substr(at + 2));
}

std::string fenced(const std::string& body) {
    return "```\n" + body + "\n```";
}

// 1. Genome validity ------------------------------------------------------------------------

constexpr long kVariationSteps = 1'000'000;

Verdict genome_validity() {
    const auto pool = three_models();
    const SearchParams params;
    Rng rng(20240601);
    InnovationCounter counter(1);
    std::vector<PipelineGenome> pop;
    for (int i = 0; i < 16; ++i) pop.push_back(arbitrary_genome(rng, pool, counter));

    long violating = 0, duplicate = 0, non_monotone = 0, ahead = 0, crossovers = 0;
    Innovation last_peek = counter.peek();
    for (long step = 0; step < kVariationSteps; ++step) {
        const auto ia = uniform_index(rng, pop.size());
        const auto& a = pop[ia];
        PipelineGenome child;
        std::set<Innovation> inherited;
        for (const auto& s : a.stages) inherited.insert(s.innovation);
        if (bernoulli(rng, 0.5)) {
            const auto& b = pop[uniform_index(rng, pop.size())];
            for (const auto& s : b.stages) inherited.insert(s.innovation);
            child = crossover(a, b, uniform_real(rng, 0, 25), uniform_real(rng, 0, 25), params, rng);
            ++crossovers;
        } else {
            child = a;
        }
        const Innovation before = counter.peek();
        child = apply_mutations(child, params, pool, rng, counter).offspring;
        const Innovation after = counter.peek();

        if (!violations(child, &pool).empty()) ++violating;
        std::set<Innovation> seen;
        for (const auto& s : child.stages) {
            if (!seen.insert(s.innovation).second) ++duplicate;
            if (s.innovation >= after) ++ahead;
            // A stage not inherited from a parent must carry a number issued during this step.
            if (!inherited.count(s.innovation) && s.innovation < before) ++non_monotone;
        }
        if (after < last_peek) ++non_monotone;
        last_peek = after;
        pop[uniform_index(rng, pop.size())] = std::move(child);
    }
    Verdict v;
    v.require(violating == 0, fmt::format("{} invalid genomes in {} steps ({} with crossover)", violating,
                                          kVariationSteps, crossovers));
    v.require(duplicate == 0, fmt::format("{} duplicate innovations within a genome", duplicate));
    v.require(non_monotone == 0 && ahead == 0,
              fmt::format("{} non-monotone and {} unissued innovation numbers", non_monotone, ahead));
    return v;
}

// 2. Operator firing rates ------------------------------------------------------------------

constexpr long kRateDraws = 100'000;
constexpr double kRateSigmas = 3.0;

Verdict operator_rates() {
    const auto pool = three_models();
    const SearchParams params;
    Rng rng(99);
    InnovationCounter counter(1);
    std::map<MutationOp, long> fired;
    auto g = arbitrary_genome(rng, pool, counter);
    for (long i = 0; i < kRateDraws; ++i) {
        auto out = apply_mutations(g, params, pool, rng, counter);
        for (auto op : kMutationOrder) fired[op] += out.did_fire(op);
        g = (i % 50 == 49) ? arbitrary_genome(rng, pool, counter) : std::move(out.offspring);
    }
    Verdict v;
    for (auto op : kMutationOrder) {
        const double p = rate_of(params.rates, op);
        const double freq = static_cast<double>(fired[op]) / kRateDraws;
        const double se = std::sqrt(p * (1 - p) / kRateDraws);
        v.require(std::abs(freq - p) <= kRateSigmas * se,
                  fmt::format("{} {:.4f} vs {:.2f} ({:+.2f} se)", to_string(op), freq, p, (freq - p) / se));
    }
    return v;
}

// 3. Speciation -----------------------------------------------------------------------------

constexpr int kControllerGenerations = 20;
constexpr int kControllerSeeds = 10;

Verdict speciation() {
    Verdict v;
    const CompatibilityWeights w;
    const auto pool = three_models();

    // Two tight clusters far apart.
    std::vector<PipelineGenome> pop;
    InnovationCounter counter(1);
    const auto a1 = counter.issue();
    const auto b1 = counter.issue(), b2 = counter.issue(), b3 = counter.issue();
    for (int i = 0; i < 6; ++i) {
        auto g = genome({stage(a1, 1, false, "alpha")}, "alpha", 1 + i);
        g.generator.temperature = 0.2 + 0.01 * i;
        pop.push_back(g);
    }
    for (int i = 0; i < 6; ++i) {
        auto g = genome({stage(b1, 3, true, "gamma"), stage(b2, 3, false, "gamma"), stage(b3, 3, false, "gamma")},
                        "gamma", 7 + i);
        g.generator.prompt_index = 2;
        g.generator.temperature = 1.0 - 0.01 * i;
        pop.push_back(g);
    }
    SearchParams params;
    const auto clusters = assign_species(pop, {}, params.initial_threshold, w);
    v.require(clusters.size() == 2, fmt::format("two-cluster population gives {} species", clusters.size()));

    // Threshold controller on a drifting population.
    int settled = 0;
    int latest_entry = -1;
    for (int seed = 1; seed <= kControllerSeeds; ++seed) {
        Rng rng(seed);
        InnovationCounter c(1);
        std::vector<PipelineGenome> drift;
        for (int i = 0; i < params.population_size; ++i) {
            drift.push_back(arbitrary_genome(rng, pool, c));
            drift.back().genome_id = static_cast<GenomeId>(i + 1);
        }
        double threshold = params.initial_threshold;
        std::vector<Species> species;
        int entered = -1;
        std::size_t count = 0;
        for (int gen = 1; gen <= kControllerGenerations; ++gen) {
            species = assign_species(drift, species, threshold, w);
            count = species.size();
            const bool in_band = count >= static_cast<std::size_t>(params.species_min) &&
                                 count <= static_cast<std::size_t>(params.species_max);
            if (in_band && entered < 0) entered = gen;
            if (!in_band) entered = -1;
            threshold = adjust_threshold(threshold, count, params.species_min, params.species_max,
                                         params.threshold_step);
            species = resample_representatives(species, drift, rng);
            for (int k = 0; k < 3; ++k) {
                auto& g = drift[uniform_index(rng, drift.size())];
                const auto id = g.genome_id;
                g = apply_mutations(g, params, pool, rng, c).offspring;
                g.genome_id = id;
            }
        }
        if (entered > 0) {
            ++settled;
            latest_entry = std::max(latest_entry, entered);
        }
    }
    v.require(settled == kControllerSeeds,
              fmt::format("species count in [3,5] by generation {} for {}/{} seeds (last entry at {})",
                          kControllerGenerations, settled, kControllerSeeds, latest_entry));

    Rng rng(5);
    bool exact = true;
    for (int i = 0; i < 10'000; ++i) {
        const double x = uniform_real(rng, -5, 30);
        const int n = 1 + static_cast<int>(uniform_index(rng, 20));
        exact = exact && shared_fitness(x, n) == x / n;
    }
    v.require(exact, "shared_fitness(x, n) == x / n on 10000 draws");
    return v;
}

// 4. Engine convergence ---------------------------------------------------------------------

constexpr int kConvergenceGenerations = 15;
constexpr int kConvergenceSeeds = 5;
constexpr int kConvergenceRequiredSeeds = 4;
constexpr double kCarrierFraction = 0.80;

Verdict convergence() {
    Verdict v;
    const auto problems = synthetic_problems(50);
    const auto pool = three_models();
    const SearchParams params;
    int successes = 0;
    bool monotone = true;
    std::string fractions;
    for (int seed = 1; seed <= kConvergenceSeeds; ++seed) {
        // Only (beta, generator prompt 1) solves anything; refiners never help.
        FunctionGateway gw([](const GenerationRequest& r) {
            if (r.role == Role::Generator && r.model.name == "beta" && r.prompt_index == 1) return fenced("PASS");
            return fenced("fail");
        });
        MarkerExecutor exec;
        SearchContext ctx{problems, gw, exec, prompts(), pool, {}};
        SearchOptions o;
        o.generations = kConvergenceGenerations;
        o.seed = static_cast<std::uint64_t>(seed);
        const auto res = run_search(params, ctx, o);
        const auto& last = res.records.back().population;
        const auto carriers = std::count_if(last.begin(), last.end(), [](const EvaluatedGenome& e) {
            return e.genome.generator.model.name == "beta" && e.genome.generator.prompt_index == 1;
        });
        const double fraction = static_cast<double>(carriers) / last.size();
        successes += fraction >= kCarrierFraction;
        fractions += fmt::format("{}{:.2f}", fractions.empty() ? "" : " ", fraction);

        std::map<int, int> best_by_column;
        for (const auto& rec : res.records) {
            auto [it, fresh] = best_by_column.emplace(rec.column, rec.best_raw);
            if (!fresh) {
                monotone = monotone && rec.best_raw >= it->second;
                it->second = rec.best_raw;
            }
        }
    }
    v.require(successes >= kConvergenceRequiredSeeds,
              fmt::format("{}/{} seeds with >= {:.0f}% carriers after {} generations (fractions {})", successes,
                          kConvergenceSeeds, 100 * kCarrierFraction, kConvergenceGenerations, fractions));
    v.require(monotone, "best raw fitness non-decreasing across generations sharing a column");
    return v;
}

// 5. Early stopping -------------------------------------------------------------------------

constexpr int kPassingProblems = 50;
constexpr int kFailingProblems = 50;
constexpr int kBrokenProblems = 31;  // 62% of the initially passing ones
constexpr double kTargetBreakRate = 0.62;

// Refiner that breaks problem i (i < kBrokenProblems) at iteration 1 + i % 3 and repairs two
// initially failing problems per iteration.
std::string corrupting_refiner(const GenerationRequest& r) {
    const int i = problem_index(r.user_prompt);
    if (r.role == Role::Generator) return fenced(i < kPassingProblems ? "PASS" : "fail");
    const bool passing = r.user_prompt.find("PASS") != std::string::npos;
    if (passing) {
        if (i < kBrokenProblems && r.call_index == 1 + i % 3) return fenced("broke");
        return fenced("PASS");
    }
    const int first_fix = kPassingProblems + 2 * (r.call_index - 1);
    if (i == first_fix || i == first_fix + 1) return fenced("PASS");
    return fenced("still wrong");
}

std::vector<TraceSummary> traces(const PipelineGenome& g, std::span<const Problem> problems,
                                 FunctionGateway::Fn fn, bool early_stopping) {
    FunctionGateway gw(std::move(fn));
    MarkerExecutor exec;
    RunOptions o;
    o.early_stopping = early_stopping;
    std::vector<TraceSummary> out;
    for (const auto& p : problems) out.push_back(TraceSummary::of(run_pipeline(g, p, gw, exec, prompts(), o)));
    return out;
}

Verdict early_stopping() {
    Verdict v;
    const auto problems = synthetic_problems(kPassingProblems + kFailingProblems);
    auto g = genome({stage(1, 3)}, "alpha");

    const auto without = traces(g, problems, corrupting_refiner, false);
    const auto with = traces(g, problems, corrupting_refiner, true);
    const auto a = iteration_analysis(without, with);
    v.require(std::abs(a.break_rate - kTargetBreakRate) < 1e-9,
              fmt::format("break rate {:.2f} of {} initially passing", a.break_rate, a.initially_passing));
    std::string nets;
    bool negative = !a.net_value.empty();
    for (const auto& row : a.net_value) {
        negative = negative && row.net < 0;
        nets += fmt::format(" k{}:{:+d}", row.k, row.net);
    }
    v.require(negative, "without early stopping net value per iteration" + nets);

    // Cumulative solves under early stopping, for the scripted refiner and random ones.
    auto non_decreasing = [](const std::vector<int>& c) { return std::is_sorted(c.begin(), c.end()); };
    bool ok = non_decreasing(a.cumulative);
    std::string cum;
    for (int c : a.cumulative) cum += fmt::format(" {}", c);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto random_refiner = [seed](const GenerationRequest& r) {
            const auto h = hash_combine(hash_combine(seed, fnv1a(r.user_prompt)), r.call_index);
            return fenced(h % 3 == 0 ? "PASS" : "nope");
        };
        const auto es = traces(g, problems, random_refiner, true);
        ok = ok && non_decreasing(iteration_analysis({}, es).cumulative);
    }
    v.require(ok, "with early stopping cumulative solves non-decreasing in budget (scripted:" + cum +
                      "; plus 20 random refiners)");
    return v;
}

// 6. Sandbox --------------------------------------------------------------------------------

constexpr double kSandboxTimeout = 10.0;
constexpr double kTimeoutTolerance = 0.5;
constexpr int kLeakRuns = 1000;

std::size_t entries(const fs::path& dir) {
    return static_cast<std::size_t>(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}));
}

Verdict sandbox() {
    Verdict v;
    TempDir root;
    SandboxOptions o;
    o.scratch_root = root.path();
    o.timeout = std::chrono::duration<double>(2.0);
    SandboxExecutor sb(o);
    if (sb.interpreter().empty()) {
        v.require(false, "no python3 interpreter found");
        return v;
    }

    const auto corpus = nlohmann::json::parse(slurp(data_dir() / "classification_corpus.json"));
    int right = 0;
    std::string wrong;
    for (const auto& c : corpus) {
        const auto expected = error_type_from_string(c["expected"].get<std::string>());
        const auto out = sb.execute(c["code"].get<std::string>(), c["tests"].get<std::string>());
        if (out.error_type == expected && out.passed == (expected == ErrorType::None)) {
            ++right;
        } else {
            wrong += " " + c["name"].get<std::string>();
        }
    }
    v.require(right == static_cast<int>(corpus.size()) && corpus.size() >= 20,
              fmt::format("corpus {}/{} classified{}", right, corpus.size(), wrong));

    const auto spin = sb.execute("while True:\n    pass\n", "", std::chrono::duration<double>(kSandboxTimeout));
    v.require(spin.error_type == ErrorType::Timeout && std::abs(spin.duration - kSandboxTimeout) <= kTimeoutTolerance,
              fmt::format("timeout fired after {:.2f}s (limit {:.0f}s)", spin.duration, kSandboxTimeout));

    // Mix of passing, failing, file-writing and timed-out programs.
    int timeouts = 0;
    std::size_t peak = 0;
    for (int i = 0; i < kLeakRuns; ++i) {
        ExecutionOutcome out;
        switch (i % 5) {
            case 0: out = sb.execute("x = 1\n", "assert x == 1\n"); break;
            case 1: out = sb.execute("x = 1\n", "assert x == 2\n"); break;
            case 2:
                out = sb.execute("import tempfile\nf = tempfile.NamedTemporaryFile(delete=False)\nf.write(b'x')\n"
                                 "open('left-behind.txt', 'w').write('y')\n",
                                 "");
                break;
            case 3: out = sb.execute("raise ValueError('boom')\n", ""); break;
            default:
                if (i % 50 == 4) {
                    out = sb.execute("import time\nwhile True:\n    time.sleep(0.01)\n", "",
                                     std::chrono::duration<double>(0.2));
                    timeouts += out.error_type == ErrorType::Timeout;
                } else {
                    out = sb.execute("print('hi')\n", "");
                }
        }
        peak = std::max(peak, entries(root.path()));
    }
    const auto left = entries(root.path());
    v.require(left == 0 && peak == 0 && timeouts == kLeakRuns / 50,
              fmt::format("{} runs ({} forced timeouts): {} scratch entries left", kLeakRuns, timeouts, left));
    return v;
}

// 7. Statistics -----------------------------------------------------------------------------

constexpr double kSigmaTolerance = 0.05;
constexpr long kNoiseTrials = 1'000'000;
constexpr double kInflationTolerance = 0.2;

struct SigmaRow {
    const char* name;
    double mean_a, std_a, mean_b, std_b;
    double reported;
};

// Five-run means and standard deviations of the compared configurations.
constexpr SigmaRow kSigmaRows[] = {
    {"humaneval coder self-refine vs best general", 139.6, 2.5, 94.0, 2.7, 12.4},
    {"humaneval evolved champion vs manual best", 98.2, 3.4, 94.0, 2.7, 1.0},
    {"humaneval coder self-refine vs coder solo", 139.6, 2.5, 133.6, 3.4, 1.4},
    {"mbpp coder self-refine vs coder solo", 307.2, 4.3, 295.4, 5.4, 1.7},
    {"mbpp coder self-refine vs best general", 307.2, 4.3, 287.0, 2.0, 4.2},
};

/// E[max of n iid Binomial(m, p)] by summing P(max > k).
double expected_max_binomial(int m, double p, int n) {
    std::vector<double> pmf(m + 1);
    for (int k = 0; k <= m; ++k) {
        pmf[k] = std::exp(std::lgamma(m + 1.0) - std::lgamma(k + 1.0) - std::lgamma(m - k + 1.0) + k * std::log(p) +
                          (m - k) * std::log1p(-p));
    }
    double e = 0, cdf = 0;
    for (int k = 0; k < m; ++k) {
        cdf += pmf[k];
        e += 1 - std::pow(std::min(cdf, 1.0), n);
    }
    return e;
}

Verdict statistics() {
    Verdict v;
    for (const auto& r : kSigmaRows) {
        const double s = sigma_separation(r.mean_a, r.std_a, r.mean_b, r.std_b);
        v.require(std::abs(s - r.reported) <= kSigmaTolerance,
                  fmt::format("{}: {:.3f} sigma vs {:.1f}", r.name, s, r.reported));
    }
    auto sim = NoiseSimulation::uniform(20, 25, 0.5);
    sim.evaluations = 1;
    sim.trials = kNoiseTrials;
    sim.seed = 17;
    const auto est = simulate_selection_inflation(sim);
    const double oracle = expected_max_binomial(25, 0.5, 20) - 25 * 0.5;
    v.require(std::abs(est.inflation - oracle) <= kInflationTolerance,
              fmt::format("selection inflation {:.3f} (se {:.4f}) vs extreme-value oracle {:.3f}", est.inflation,
                          est.standard_error, oracle));
    return v;
}

// 8. Determinism ----------------------------------------------------------------------------

Verdict determinism() {
    Verdict v;
    TempDir dir;
    auto cfg = nlohmann::ordered_json::parse(slurp(data_dir() / "mock_config.json"));
    cfg["benchmarks"]["humaneval"] = (data_dir() / "humaneval_mini.jsonl").string();
    cfg["benchmarks"]["mbpp"] = (data_dir() / "mbpp_mini.jsonl").string();
    cfg["mock_script"] = (data_dir() / "mock_script.json").string();
    spit(dir / "config.json", cfg.dump(2));

    constexpr int kGenerations = 3;
    auto evolve = [&](const std::string& out_dir) {
        const std::string gens = std::to_string(kGenerations);
        const std::string config = (dir / "config.json").string();
        const char* argv[] = {"pipevo", "evolve",   "--config", config.c_str(), "--generations",
                              gens.c_str(), "--seed", "42",     "--out",        out_dir.c_str()};
        std::ostringstream out, err;
        return run_cli(static_cast<int>(std::size(argv)), argv, out, err);
    };
    const auto a = dir / "a", b = dir / "b";
    const int ca = evolve(a.string()), cb = evolve(b.string());
    v.require(ca == kExitOk && cb == kExitOk, fmt::format("evolve exit codes {} and {}", ca, cb));
    int identical = 0;
    for (int g = 0; g <= kGenerations; ++g) {
        const auto name = record_file_name(g);
        identical += fs::exists(a / name) && slurp(a / name) == slurp(b / name);
    }
    v.require(identical == kGenerations + 1,
              fmt::format("{}/{} generation records byte-identical", identical, kGenerations + 1));
    v.require(fs::exists(a / kChampionFile) && slurp(a / kChampionFile) == slurp(b / kChampionFile),
              "champion.genome byte-identical");
    return v;
}

struct Criterion {
    int id;
    const char* name;
    Verdict (*run)();
};

constexpr Criterion kCriteria[] = {
    {1, "genome validity", genome_validity}, {2, "operator rates", operator_rates},
    {3, "speciation", speciation},           {4, "engine convergence", convergence},
    {5, "early stopping", early_stopping},   {6, "sandbox", sandbox},
    {7, "statistics", statistics},           {8, "determinism", determinism},
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tier 1 acceptance checks"};
    int only = 0;
    bool verbose = false;
    app.add_option("--criterion", only, "Run a single criterion (1-8)")->check(CLI::Range(1, 8));
    app.add_flag("-v,--verbose", verbose, "Print the detail lines of passing criteria too");
    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::warn);

    bool all = true;
    for (const auto& c : kCriteria) {
        if (only != 0 && c.id != only) continue;
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v.require(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << fmt::format("criterion {} {}: {} ({:.1f}s)\n", c.id, c.name, v.pass ? "PASS" : "FAIL", secs);
        for (const auto& n : v.notes) {
            if (verbose || !v.pass || only != 0) std::cout << "    " << n << "\n";
        }
        all = all && v.pass;
    }
    return all ? 0 : 1;
}
