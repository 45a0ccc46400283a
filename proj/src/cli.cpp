#include "pipevo/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "pipevo/analysis.hpp"
#include "pipevo/config.hpp"
#include "pipevo/errors.hpp"
#include "pipevo/evolution.hpp"
#include "pipevo/pipeline.hpp"

namespace pipevo {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw EnvironmentError("cannot write " + path.string());
    out << text;
}

/// Left-aligned first column, right-aligned rest.
class Table {
public:
    explicit Table(std::vector<std::string> header) { rows_.push_back(std::move(header)); }
    void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

    std::string str() const {
        std::vector<std::size_t> width;
        for (const auto& r : rows_) {
            width.resize(std::max(width.size(), r.size()), 0);
            for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
        }
        std::string out;
        for (std::size_t n = 0; n < rows_.size(); ++n) {
            const auto& r = rows_[n];
            for (std::size_t i = 0; i < r.size(); ++i) {
                if (i) out += "  ";
                out += i == 0 ? fmt::format("{:<{}}", r[i], width[i]) : fmt::format("{:>{}}", r[i], width[i]);
            }
            out += '\n';
            if (n == 0) {
                std::size_t total = 0;
                for (auto w : width) total += w;
                out += std::string(total + 2 * (width.size() - 1), '-') + '\n';
            }
        }
        return out;
    }

private:
    std::vector<std::vector<std::string>> rows_;
};

std::string fmt_sigma(double s) {
    return std::isinf(s) ? std::string("inf") : fmt::format("{:.2f}", s);
}

struct Environment {
    RunConfig config;
    PromptPool prompts;
    ModelPool models;
};

Environment load_environment(const fs::path& config_path) {
    Environment env{RunConfig::load(config_path), {}, {}};
    env.prompts = PromptPool::load(env.config.prompt_dir.value_or(default_prompt_dir()));
    env.models = ModelPool(env.config.models);
    return env;
}

std::unique_ptr<SandboxExecutor> make_sandbox(const SandboxOptions& options) {
    auto sandbox = std::make_unique<SandboxExecutor>(options);
    if (sandbox->interpreter().empty()) {
        throw EnvironmentError("no Python interpreter found (set PIPEVO_PYTHON or sandbox.interpreter)");
    }
    return sandbox;
}

Json run_meta(const std::string& command, const RunConfig& config, const PromptPool& prompts, Json extra) {
    Json meta;
    meta["command"] = command;
    meta["config"] = config.to_json();
    meta["prompt_versions"] = prompts.versions();
    for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = it.value();
    return meta;
}

// ---------------------------------------------------------------------------

struct EvolveArgs {
    std::string config;
    int generations = 0;
    std::uint64_t seed = 0;
    bool seed_given = false;
    bool deterministic = false;
    bool no_stratify = false;
    std::string out;
    bool resume = false;
};

int cmd_evolve(const EvolveArgs& a, std::ostream& out) {
    Environment env = load_environment(a.config);
    const std::uint64_t seed = a.seed_given ? a.seed : env.config.seed;
    SearchParams params = env.config.search;
    if (a.deterministic) params.eval_regime = EvalRegime::Deterministic;
    if (a.no_stratify) params.stratified = false;

    const BenchmarkKind kind = env.config.search_benchmark;
    const auto problems = load_benchmark(kind, env.config.benchmark_path(kind));
    DifficultyTable difficulty;
    if (env.config.difficulty_table) {
        difficulty = load_difficulty(*env.config.difficulty_table);
    } else {
        spdlog::info("no difficulty table configured; columns are dealt in benchmark order");
    }

    auto gateway = make_gateway(env.config, seed);
    auto sandbox = make_sandbox(env.config.sandbox);
    SearchContext ctx{problems, *gateway, *sandbox, env.prompts, env.models, std::move(difficulty)};

    SearchOptions opts;
    opts.generations = a.generations;
    opts.seed = seed;
    opts.run_dir = a.out.empty() ? env.config.output_dir / fmt::format("evolve-seed{}", seed) : fs::path(a.out);
    opts.resume = a.resume;
    Json extra;
    extra["seed"] = seed;
    extra["generations"] = a.generations;
    extra["search"] = to_json(params);
    opts.meta = run_meta("evolve", env.config, env.prompts, std::move(extra));

    const auto result = run_search(params, ctx, opts);
    out << fmt::format("champion (generation {}, raw {}, fitness {:.2f}): {}\n", result.champion_generation,
                       result.champion_raw, result.champion_fitness, describe(result.champion));
    out << fmt::format("run directory: {}\n", opts.run_dir->string());
    return kExitOk;
}

struct ValidateArgs {
    std::string config;
    std::string genome;
    std::string solo;
    std::string benchmark;
    int runs = 5;
    bool no_early_stopping = false;
    bool deterministic = false;
    std::string out;
    std::string label;
    std::uint64_t seed = 0;
    int threads = 1;
    bool traces = true;
};

int cmd_validate(const ValidateArgs& a, std::ostream& out) {
    Environment env = load_environment(a.config);
    if (a.genome.empty() == a.solo.empty()) throw ConfigError("give exactly one of --genome or --solo");

    ConfigUnderTest cfg;
    if (!a.genome.empty()) {
        cfg.genome = parse_genome(read_text(a.genome), &env.models);
        cfg.label = a.label.empty() ? fs::path(a.genome).stem().string() : a.label;
    } else {
        if (!env.models.contains(ModelId{a.solo})) throw ConfigError("--solo model is not in the model pool: " + a.solo);
        cfg.genome = solo_genome(ModelId{a.solo});
        cfg.label = a.label.empty() ? a.solo + " solo" : a.label;
    }
    cfg.early_stopping = !a.no_early_stopping;
    cfg.runs = a.runs;
    if (a.deterministic) cfg.forced_temperature = 0.0;

    const BenchmarkKind kind = a.benchmark.empty() ? env.config.search_benchmark : benchmark_kind_from_string(a.benchmark);
    const auto problems = load_benchmark(kind, env.config.benchmark_path(kind));

    std::string dir_name = cfg.label + "-" + std::string(to_string(kind)) + (cfg.early_stopping ? "" : "-noes");
    std::replace_if(dir_name.begin(), dir_name.end(), [](char c) { return !std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '.'; }, '_');
    const fs::path dir = a.out.empty() ? env.config.output_dir / ("validate-" + dir_name) : fs::path(a.out);
    fs::create_directories(dir);

    Json extra;
    extra["label"] = cfg.label;
    extra["benchmark"] = to_string(kind);
    extra["runs"] = cfg.runs;
    extra["early_stopping"] = cfg.early_stopping;
    extra["seed"] = a.seed;
    write_text(dir / kRunMetaFile, run_meta("validate", env.config, env.prompts, std::move(extra)).dump(2) + "\n");

    auto gateway = make_gateway(env.config, a.seed);
    auto sandbox = make_sandbox(env.config.sandbox);

    std::ofstream traces;
    if (a.traces) {
        traces.open(dir / "traces.jsonl", std::ios::binary | std::ios::trunc);
        if (!traces) throw EnvironmentError("cannot write " + (dir / "traces.jsonl").string());
    }
    EvaluateOptions opts;
    opts.seed = a.seed;
    opts.threads = a.threads;
    if (a.traces) {
        opts.on_trace = [&](int run, const PipelineTrace& t) {
            Json j = to_json(t);
            j["run"] = run;
            traces << j.dump() << '\n';
        };
    }
    const ConfigResult result = evaluate_config(cfg, problems, *gateway, *sandbox, env.prompts, opts);
    write_text(dir / "validation.json", result.to_json().dump(2) + "\n");

    Table t({"run", "solved", "complete"});
    for (std::size_t r = 0; r < result.run_counts.size(); ++r) {
        t.add({std::to_string(r), fmt::format("{}/{}", result.run_counts[r], problems.size()),
               result.run_complete[r] ? "yes" : "no"});
    }
    out << cfg.label << " on " << to_string(kind) << (cfg.early_stopping ? "" : " (no early stopping)") << "\n"
        << t.str() << fmt::format("mean {:.1f} +/- {:.1f}\n", result.mean, result.std)
        << "results: " << dir.string() << "\n";
    if (!result.abort_reason.empty()) throw GatewayError(GatewayError::Kind::Unreachable, result.abort_reason);
    return kExitOk;
}

// ---------------------------------------------------------------------------

std::vector<ConfigResult> load_results(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw ConfigError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().filename() == "validation.json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<ConfigResult> results;
    for (const auto& f : files) results.push_back(ConfigResult::from_json(Json::parse(read_text(f))));
    return results;
}

std::string config_name(const ConfigResult& r) {
    std::string name = r.label;
    if (!r.benchmark.empty()) name += " [" + r.benchmark + "]";
    if (!r.early_stopping) name += " (no-es)";
    return name;
}

int cmd_report(const std::string& run_dir, const std::string& tables_arg, const std::string& out_path,
               std::ostream& out) {
    static const std::set<std::string> kKnown = {"taxonomy", "iterations", "noise", "ceiling", "significance"};
    std::vector<std::string> tables;
    std::stringstream ss(tables_arg);
    for (std::string t; std::getline(ss, t, ',');) {
        if (t.empty()) continue;
        if (!kKnown.count(t)) throw ConfigError("unknown table '" + t + "'");
        tables.push_back(t);
    }
    const auto results = load_results(run_dir);
    if (results.empty()) throw ConfigError("no validation.json found under " + run_dir);

    Json summary;
    Json configs = Json::array();
    for (const auto& r : results) {
        configs.push_back({{"label", r.label},
                           {"benchmark", r.benchmark},
                           {"early_stopping", r.early_stopping},
                           {"run_counts", r.run_counts},
                           {"mean", r.mean},
                           {"std", r.std}});
    }
    summary["configs"] = std::move(configs);

    for (const auto& table : tables) {
        if (table == "significance") {
            Table t({"config", "mean", "std", "runs"});
            for (const auto& r : results) {
                t.add({config_name(r), fmt::format("{:.1f}", r.mean), fmt::format("{:.1f}", r.std),
                       std::to_string(r.run_counts.size())});
            }
            Table s({"config a", "config b", "delta", "sigma"});
            Json pairs = Json::array();
            for (std::size_t i = 0; i < results.size(); ++i) {
                for (std::size_t j = i + 1; j < results.size(); ++j) {
                    const auto& a = results[i];
                    const auto& b = results[j];
                    if (a.benchmark != b.benchmark) continue;
                    const double sigma = sigma_separation(a.mean, a.std, b.mean, b.std);
                    s.add({config_name(a), config_name(b), fmt::format("{:+.1f}", a.mean - b.mean), fmt_sigma(sigma)});
                    pairs.push_back({{"a", a.label}, {"b", b.label}, {"benchmark", a.benchmark},
                                     {"delta", a.mean - b.mean},
                                     {"sigma", std::isinf(sigma) ? Json("inf") : Json(sigma)}});
                }
            }
            summary["significance"] = std::move(pairs);
            out << "== significance ==\n" << t.str() << "\n" << s.str() << "\n";
        } else if (table == "taxonomy") {
            Json all = Json::array();
            out << "== taxonomy ==\n";
            for (const auto& r : results) {
                const auto sums = r.all_summaries();
                const auto rows = error_taxonomy(sums);
                Table t({"error type", "n", "fixed", "rate", "note"});
                Json jr = Json::array();
                for (const auto& row : rows) {
                    t.add({std::string(to_string(row.type)), std::to_string(row.n), std::to_string(row.fixed),
                           fmt::format("{:.0f}%", 100.0 * row.rate), row.small_sample ? "n<5" : ""});
                    jr.push_back({{"error_type", to_string(row.type)}, {"n", row.n}, {"fixed", row.fixed},
                                  {"rate", row.rate}, {"small_sample", row.small_sample}});
                }
                all.push_back({{"label", r.label}, {"benchmark", r.benchmark}, {"rows", std::move(jr)}});
                out << config_name(r) << "\n" << t.str() << "\n";
            }
            summary["taxonomy"] = std::move(all);
        } else if (table == "iterations") {
            Json all = Json::array();
            out << "== iterations ==\n";
            std::vector<bool> used(results.size(), false);
            for (std::size_t i = 0; i < results.size(); ++i) {
                if (used[i]) continue;
                used[i] = true;
                const ConfigResult* no_es = results[i].early_stopping ? nullptr : &results[i];
                const ConfigResult* es = results[i].early_stopping ? &results[i] : nullptr;
                for (std::size_t j = i + 1; j < results.size(); ++j) {
                    if (used[j] || results[j].benchmark != results[i].benchmark ||
                        results[j].early_stopping == results[i].early_stopping ||
                        !same_configuration(results[j].genome, results[i].genome)) {
                        continue;
                    }
                    used[j] = true;
                    (results[j].early_stopping ? es : no_es) = &results[j];
                    break;
                }
                const auto a_sums = no_es ? no_es->all_summaries() : std::vector<TraceSummary>{};
                const auto b_sums = es ? es->all_summaries() : std::vector<TraceSummary>{};
                const auto an = iteration_analysis(a_sums, b_sums);
                const auto& name = config_name(no_es ? *no_es : *es);
                out << name << (an.restricted ? " (restricted to common budget)" : "") << "\n";
                Json j;
                j["label"] = (no_es ? no_es : es)->label;
                if (!an.net_value.empty()) {
                    Table t({"iteration", "fixes", "regressions", "net"});
                    Json rows = Json::array();
                    for (const auto& row : an.net_value) {
                        t.add({std::to_string(row.k), std::to_string(row.fixes), std::to_string(row.regressions),
                               fmt::format("{:+d}", row.net)});
                        rows.push_back({{"k", row.k}, {"fixes", row.fixes}, {"regressions", row.regressions},
                                        {"net", row.net}});
                    }
                    out << t.str();
                    out << fmt::format("regressions: {} of {} initially passing broken ({:.0f}%), {} ended failing\n",
                                       an.broken, an.initially_passing, 100.0 * an.break_rate, an.ended_failing);
                    j["net_value"] = std::move(rows);
                    j["initially_passing"] = an.initially_passing;
                    j["broken"] = an.broken;
                    j["break_rate"] = an.break_rate;
                    j["ended_failing"] = an.ended_failing;
                }
                if (!an.cumulative.empty()) {
                    std::string line = "cumulative solved by budget:";
                    for (std::size_t k = 0; k < an.cumulative.size(); ++k) {
                        line += fmt::format(" k={}:{}", k, an.cumulative[k]);
                    }
                    out << line << "\n";
                    j["cumulative"] = an.cumulative;
                }
                j["restricted"] = an.restricted;
                out << "\n";
                all.push_back(std::move(j));
            }
            summary["iterations"] = std::move(all);
        } else if (table == "noise") {
            Table t({"config", "single run", "multi-run mean", "single - mean"});
            Json rows = Json::array();
            for (const auto& r : results) {
                const auto row = empirical_noise(r);
                t.add({config_name(r), std::to_string(row.single_run), fmt::format("{:.1f}", row.multi_run_mean),
                       fmt::format("{:+.1f}", row.inflation)});
                rows.push_back({{"label", r.label}, {"single_run", row.single_run},
                                {"multi_run_mean", row.multi_run_mean}, {"inflation", row.inflation}});
            }
            summary["noise"] = std::move(rows);
            out << "== noise ==\n" << t.str() << "\n";
        } else if (table == "ceiling") {
            std::map<std::string, std::vector<ConfigResult>> by_bench;
            for (const auto& r : results) by_bench[r.benchmark].push_back(r);
            Json all = Json::array();
            out << "== ceiling ==\n";
            for (const auto& [bench, rs] : by_bench) {
                const auto c = hard_ceiling(rs);
                out << fmt::format("{}: {} problems never solved", bench.empty() ? "?" : bench, c.problem_ids.size());
                Json breakdown = Json::object();
                for (const auto& [type, n] : c.by_error) {
                    out << fmt::format(", {} {}", n, to_string(type));
                    breakdown[std::string(to_string(type))] = n;
                }
                out << "\n";
                for (const auto& id : c.problem_ids) out << "  " << id << "\n";
                all.push_back({{"benchmark", bench}, {"problem_ids", c.problem_ids}, {"by_error", std::move(breakdown)}});
            }
            out << "\n";
            summary["ceiling"] = std::move(all);
        }
    }
    const fs::path report = out_path.empty() ? fs::path(run_dir) / "report.json" : fs::path(out_path);
    write_text(report, summary.dump(2) + "\n");
    out << "summary: " << report.string() << "\n";
    return kExitOk;
}

struct NoiseArgs {
    int genomes = 20;
    int problems = 25;
    double p = 0.5;
    int evals = 1;
    long trials = 1'000'000;
    std::uint64_t seed = 0;
    std::string run_dir;
};

int cmd_noise(const NoiseArgs& a, std::ostream& out) {
    if (!a.run_dir.empty()) {
        Table t({"config", "single run", "multi-run mean", "single - mean"});
        for (const auto& r : load_results(a.run_dir)) {
            const auto row = empirical_noise(r);
            t.add({config_name(r), std::to_string(row.single_run), fmt::format("{:.1f}", row.multi_run_mean),
                   fmt::format("{:+.1f}", row.inflation)});
        }
        out << t.str();
        return kExitOk;
    }
    if (a.genomes < 1 || a.problems < 1 || a.evals < 0 || a.trials < 1 || a.p < 0.0 || a.p > 1.0) {
        throw ConfigError("noise-study: genomes, problems, trials must be positive, evals >= 0, p in [0, 1]");
    }
    auto sim = NoiseSimulation::uniform(a.genomes, a.problems, a.p);
    sim.evaluations = a.evals;
    sim.trials = a.trials;
    sim.seed = a.seed;
    const auto est = simulate_selection_inflation(sim);
    out << fmt::format("genomes {} problems {} p {} evaluations {} trials {}\n", a.genomes, a.problems, a.p,
                       a.evals == 0 ? std::string("exact") : std::to_string(a.evals), est.trials);
    out << fmt::format("expected inflation of the selected genome: {:.3f} problems (se {:.3f})\n", est.inflation,
                       est.standard_error);
    return kExitOk;
}

int cmd_exec_one(const std::string& code, const std::string& tests, double timeout, const std::string& interpreter,
                 std::ostream& out) {
    SandboxOptions opts;
    opts.timeout = std::chrono::duration<double>(timeout);
    opts.interpreter = interpreter;
    auto sandbox = make_sandbox(opts);
    const auto outcome = sandbox->execute(read_text(code), read_text(tests));
    out << to_json(outcome).dump(2) << "\n";
    return kExitOk;
}

int cmd_difficulty(const std::string& config, const std::string& model, int runs, const std::string& benchmark,
                   const std::string& out_path, std::ostream& out) {
    Environment env = load_environment(config);
    const ModelId m{model.empty() ? (env.models.empty() ? std::string() : env.models[0].name) : model};
    if (!env.models.contains(m)) throw ConfigError("model is not in the model pool: " + m.name);
    const BenchmarkKind kind = benchmark.empty() ? env.config.search_benchmark : benchmark_kind_from_string(benchmark);
    const auto problems = load_benchmark(kind, env.config.benchmark_path(kind));

    ConfigUnderTest cfg{m.name + " solo", solo_genome(m), true, runs, std::nullopt};
    auto gateway = make_gateway(env.config, env.config.seed);
    auto sandbox = make_sandbox(env.config.sandbox);
    const auto result = evaluate_config(cfg, problems, *gateway, *sandbox, env.prompts, {env.config.seed, 1, {}});
    if (!result.abort_reason.empty()) throw GatewayError(GatewayError::Kind::Unreachable, result.abort_reason);

    const fs::path path = out_path.empty()
                              ? env.config.output_dir / fmt::format("difficulty-{}.json", to_string(kind))
                              : fs::path(out_path);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    save_difficulty(difficulty_from(result), path);
    out << fmt::format("{} solo: {:.1f} +/- {:.1f} over {} runs; table written to {}\n", m.name, result.mean,
                       result.std, runs, path.string());
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Evolutionary search over multi-model code-generation pipelines", "pipevo"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

    EvolveArgs ev;
    auto* evolve = app.add_subcommand("evolve", "Run the evolutionary search");
    evolve->add_option("--config", ev.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    evolve->add_option("--generations", ev.generations, "Generations after the initial one")->required()->check(CLI::NonNegativeNumber);
    evolve->add_option("--seed", ev.seed, "Master seed (default: config seed)")->each([&](const std::string&) { ev.seed_given = true; });
    evolve->add_flag("--deterministic", ev.deterministic, "Force temperature 0 during search");
    evolve->add_flag("--no-stratify", ev.no_stratify, "Uniform random subsets instead of difficulty columns");
    evolve->add_option("--out", ev.out, "Run directory");
    evolve->add_flag("--resume", ev.resume, "Continue from the run directory's checkpoint");

    ValidateArgs va;
    auto* validate = app.add_subcommand("validate", "Evaluate a fixed configuration over several runs");
    validate->add_option("--config", va.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    auto* genome_opt = validate->add_option("--genome", va.genome, "Genome file")->check(CLI::ExistingFile);
    validate->add_option("--solo", va.solo, "Evaluate a single model without refinement")->excludes(genome_opt);
    validate->add_option("--benchmark", va.benchmark, "humaneval or mbpp");
    validate->add_option("--runs", va.runs, "Independent runs")->check(CLI::PositiveNumber);
    validate->add_flag("--no-early-stopping", va.no_early_stopping, "Refine through the full budget");
    validate->add_flag("--deterministic", va.deterministic, "Force temperature 0");
    validate->add_option("--out", va.out, "Output directory");
    validate->add_option("--label", va.label, "Name used in reports");
    validate->add_option("--seed", va.seed, "Sampling seed for the mock backend");
    validate->add_option("--threads", va.threads, "Problems evaluated concurrently")->check(CLI::PositiveNumber);
    validate->add_flag("!--no-traces", va.traces, "Skip writing traces.jsonl");

    std::string rep_dir, rep_tables = "significance,taxonomy,iterations,noise,ceiling", rep_out;
    auto* report = app.add_subcommand("report", "Tables from stored validation results");
    report->add_option("--run-dir", rep_dir, "Directory searched for validation.json files")->required();
    report->add_option("--tables", rep_tables, "Comma-separated: taxonomy,iterations,noise,ceiling,significance");
    report->add_option("--out", rep_out, "Summary file (default <run-dir>/report.json)");

    NoiseArgs na;
    auto* noise = app.add_subcommand("noise-study", "Selection inflation from single noisy evaluations");
    noise->add_option("--genomes", na.genomes, "Genomes competing");
    noise->add_option("--problems", na.problems, "Problems per evaluation");
    noise->add_option("--p", na.p, "True per-problem pass probability");
    noise->add_option("--evals", na.evals, "Evaluations averaged per genome (0: exact)");
    noise->add_option("--trials", na.trials, "Monte Carlo trials");
    noise->add_option("--seed", na.seed, "Simulation seed");
    noise->add_option("--run-dir", na.run_dir, "Report empirical single-run vs multi-run gaps instead");

    std::string eo_code, eo_tests, eo_interp;
    double eo_timeout = 10.0;
    auto* exec_one = app.add_subcommand("exec-one", "Run one program against one test block in the sandbox");
    exec_one->add_option("--code", eo_code, "Candidate code file")->required()->check(CLI::ExistingFile);
    exec_one->add_option("--tests", eo_tests, "Test block file")->required()->check(CLI::ExistingFile);
    exec_one->add_option("--timeout", eo_timeout, "Seconds")->check(CLI::PositiveNumber);
    exec_one->add_option("--interpreter", eo_interp, "Python interpreter");

    std::string df_config, df_model, df_bench, df_out;
    int df_runs = 5;
    auto* diff = app.add_subcommand("difficulty", "Per-problem baseline pass rates for subset stratification");
    diff->add_option("--config", df_config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    diff->add_option("--model", df_model, "Baseline model (default: first in pool)");
    diff->add_option("--runs", df_runs, "Runs")->check(CLI::PositiveNumber);
    diff->add_option("--benchmark", df_bench, "humaneval or mbpp");
    diff->add_option("--out", df_out, "Output file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << sub->help();
        return kExitUserError;
    }

    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
    auto logger = std::make_shared<spdlog::logger>("pipevo", sink);
    logger->set_pattern("[%H:%M:%S] %^%l%$ %v");
    logger->set_level(spdlog::level::from_str(log_level));
    auto previous = spdlog::default_logger();
    spdlog::set_default_logger(logger);
    struct Restore {
        std::shared_ptr<spdlog::logger> p;
        ~Restore() { spdlog::set_default_logger(p); }
    } restore{previous};

    try {
        if (*evolve) return cmd_evolve(ev, out);
        if (*validate) return cmd_validate(va, out);
        if (*report) return cmd_report(rep_dir, rep_tables, rep_out, out);
        if (*noise) return cmd_noise(na, out);
        if (*exec_one) return cmd_exec_one(eo_code, eo_tests, eo_timeout, eo_interp, out);
        if (*diff) return cmd_difficulty(df_config, df_model, df_runs, df_bench, df_out, out);
    } catch (const EnvironmentError& e) {
        err << "error: " << e.what() << "\n";
        return kExitEnvironmentError;
    } catch (const GatewayError& e) {
        err << "error: model server: " << e.what() << "\n";
        return kExitEnvironmentError;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitEnvironmentError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitUserError;
    }
    return kExitUserError;
}

}  // namespace pipevo
