#include "pipevo/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "pipevo/errors.hpp"

namespace pipevo {

using Json = nlohmann::ordered_json;

PipelineGenome solo_genome(const ModelId& model, int prompt_index, double temperature) {
    PipelineGenome g;
    g.generator = LlmNodeConfig{Role::Generator, model, prompt_index, temperature};
    return g;
}

TraceSummary TraceSummary::of(const PipelineTrace& trace) {
    return {trace.problem_id, trace.passed, trace.initial_error(), trace.step_passes()};
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

std::string encode_steps(const std::vector<bool>& steps) {
    std::string s;
    for (bool b : steps) s.push_back(b ? '1' : '0');
    return s;
}

std::vector<bool> decode_steps(const std::string& s) {
    std::vector<bool> out;
    for (char c : s) {
        if (c != '0' && c != '1') throw ParseError("steps", "expected a string of 0/1");
        out.push_back(c == '1');
    }
    return out;
}

Json genome_json(const PipelineGenome& g) {
    return Json::parse(serialize_genome(g));
}

/// Like parse_genome but also accepts the generator-only genomes of solo configurations.
PipelineGenome genome_from(const Json& j) {
    if (j.contains("stages") && j.at("stages").is_array() && j.at("stages").empty()) {
        const auto& gen = j.at("generator");
        PipelineGenome g = solo_genome(ModelId{gen.at("model").get<std::string>()}, gen.at("prompt_index").get<int>(),
                                       gen.at("temperature").get<double>());
        g.genome_id = j.value("genome_id", GenomeId{0});
        return g;
    }
    return parse_genome(j.dump());
}

}  // namespace

void ConfigResult::summarize() {
    run_counts.clear();
    std::vector<int> complete;
    for (std::size_t r = 0; r < solved.size(); ++r) {
        const int c = static_cast<int>(std::count(solved[r].begin(), solved[r].end(), true));
        run_counts.push_back(c);
        if (r < run_complete.size() && run_complete[r]) complete.push_back(c);
    }
    mean = mean_of(complete);
    std = sample_std(complete);
}

std::vector<TraceSummary> ConfigResult::all_summaries() const {
    std::vector<TraceSummary> out;
    for (std::size_t r = 0; r < summaries.size(); ++r) {
        if (r < run_complete.size() && !run_complete[r]) continue;
        out.insert(out.end(), summaries[r].begin(), summaries[r].end());
    }
    return out;
}

Json ConfigResult::to_json() const {
    Json j;
    j["label"] = label;
    j["benchmark"] = benchmark;
    j["early_stopping"] = early_stopping;
    j["genome"] = genome_json(genome);
    j["problem_ids"] = problem_ids;
    j["run_counts"] = run_counts;
    j["run_complete"] = run_complete;
    if (!abort_reason.empty()) j["abort_reason"] = abort_reason;
    j["mean"] = mean;
    j["std"] = std;
    Json matrix = Json::array();
    for (const auto& row : solved) {
        Json r = Json::array();
        for (bool b : row) r.push_back(b ? 1 : 0);
        matrix.push_back(std::move(r));
    }
    j["solved"] = std::move(matrix);
    Json errors = Json::array();
    Json steps = Json::array();
    for (const auto& run : summaries) {
        Json e = Json::array();
        Json s = Json::array();
        for (const auto& t : run) {
            e.push_back(to_string(t.initial_error));
            s.push_back(encode_steps(t.steps));
        }
        errors.push_back(std::move(e));
        steps.push_back(std::move(s));
    }
    j["initial_errors"] = std::move(errors);
    j["steps"] = std::move(steps);
    return j;
}

ConfigResult ConfigResult::from_json(const Json& j) {
    ConfigResult r;
    try {
        r.label = j.at("label").get<std::string>();
        r.benchmark = j.value("benchmark", std::string());
        r.early_stopping = j.value("early_stopping", true);
        if (j.contains("genome")) r.genome = genome_from(j.at("genome"));
        r.problem_ids = j.value("problem_ids", std::vector<std::string>{});
        r.abort_reason = j.value("abort_reason", std::string());

        if (j.contains("solved")) {
            for (const auto& row : j.at("solved")) {
                std::vector<bool> b;
                for (const auto& v : row) b.push_back(v.get<int>() != 0);
                if (!r.problem_ids.empty() && b.size() != r.problem_ids.size()) {
                    throw ParseError("solved", "row length differs from problem_ids");
                }
                r.solved.push_back(std::move(b));
            }
        } else {
            // Counts only: enough for the significance table.
            for (int c : j.at("run_counts").get<std::vector<int>>()) {
                r.solved.emplace_back(static_cast<std::size_t>(std::max(c, 0)), true);
            }
        }
        r.run_complete = j.value("run_complete", std::vector<bool>(r.solved.size(), true));
        if (r.run_complete.size() != r.solved.size()) throw ParseError("run_complete", "length differs from runs");

        if (j.contains("initial_errors") && j.contains("steps")) {
            const auto& errors = j.at("initial_errors");
            const auto& steps = j.at("steps");
            if (errors.size() != r.solved.size() || steps.size() != r.solved.size()) {
                throw ParseError("steps", "run count differs from the solve matrix");
            }
            for (std::size_t run = 0; run < r.solved.size(); ++run) {
                std::vector<TraceSummary> row;
                if (errors[run].size() != r.solved[run].size() || steps[run].size() != r.solved[run].size()) {
                    throw ParseError("steps", fmt::format("run {} has the wrong number of problems", run));
                }
                for (std::size_t p = 0; p < r.solved[run].size(); ++p) {
                    row.push_back({r.problem_ids.at(p), r.solved[run][p],
                                   error_type_from_string(errors[run][p].get<std::string>()),
                                   decode_steps(steps[run][p].get<std::string>())});
                }
                r.summaries.push_back(std::move(row));
            }
        }
    } catch (const Json::exception& e) {
        throw ParseError("validation", e.what());
    }
    r.summarize();
    return r;
}

// ---------------------------------------------------------------------------
// Validation runs

ConfigResult evaluate_config(const ConfigUnderTest& cfg, std::span<const Problem> problems, ModelGateway& gateway,
                             CodeExecutor& executor, const PromptPool& prompts, const EvaluateOptions& options) {
    if (cfg.runs < 1) throw ConfigError("runs must be at least 1");
    ConfigResult result;
    result.label = cfg.label;
    result.genome = cfg.genome;
    result.early_stopping = cfg.early_stopping;
    if (!problems.empty()) result.benchmark = std::string(to_string(problems.front().benchmark));
    for (const auto& p : problems) result.problem_ids.push_back(p.problem_id);

    std::mutex report_mutex;
    for (int run = 0; run < cfg.runs; ++run) {
        RunOptions ro;
        ro.early_stopping = cfg.early_stopping;
        ro.forced_temperature = cfg.forced_temperature;
        const std::uint64_t run_nonce =
            hash_combine(hash_combine(options.seed, fnv1a(cfg.label)), static_cast<std::uint64_t>(run));

        std::vector<std::optional<PipelineTrace>> traces(problems.size());
        std::atomic<std::size_t> cursor{0};
        std::string failure;
        std::exception_ptr fatal;

        auto worker = [&] {
            for (;;) {
                const std::size_t i = cursor.fetch_add(1);
                if (i >= problems.size()) return;
                RunOptions mine = ro;
                mine.sample_nonce = run_nonce;
                try {
                    auto trace = run_pipeline(cfg.genome, problems[i], gateway, executor, prompts, mine);
                    if (options.on_trace) {
                        std::lock_guard lock(report_mutex);
                        options.on_trace(run, trace);
                    }
                    traces[i] = std::move(trace);
                } catch (const GatewayError& e) {
                    std::lock_guard lock(report_mutex);
                    if (failure.empty()) failure = e.what();
                    cursor.store(problems.size());
                    return;
                } catch (...) {
                    std::lock_guard lock(report_mutex);
                    if (!fatal) fatal = std::current_exception();
                    cursor.store(problems.size());
                    return;
                }
            }
        };
        const int threads = std::max(1, std::min<int>(options.threads, static_cast<int>(problems.size())));
        if (threads <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
        }
        if (fatal) std::rethrow_exception(fatal);

        std::vector<bool> solved;
        std::vector<TraceSummary> sums;
        for (std::size_t i = 0; i < problems.size(); ++i) {
            if (traces[i]) {
                solved.push_back(traces[i]->passed);
                sums.push_back(TraceSummary::of(*traces[i]));
            } else {
                solved.push_back(false);
                sums.push_back({problems[i].problem_id, false, ErrorType::GatewayError, {}});
            }
        }
        result.solved.push_back(std::move(solved));
        result.summaries.push_back(std::move(sums));
        result.run_complete.push_back(failure.empty());
        if (!failure.empty()) {
            result.abort_reason = fmt::format("run {} aborted: {}", run, failure);
            spdlog::error("{}", result.abort_reason);
            break;
        }
        spdlog::info("{} run {}: {}/{} solved", cfg.label, run,
                     std::count(result.solved.back().begin(), result.solved.back().end(), true), problems.size());
    }
    result.summarize();
    return result;
}

double mean_of(std::span<const int> counts) {
    if (counts.empty()) return 0.0;
    double s = 0.0;
    for (int c : counts) s += c;
    return s / static_cast<double>(counts.size());
}

double sample_std(std::span<const int> counts) {
    if (counts.size() < 2) return 0.0;
    const double m = mean_of(counts);
    double ss = 0.0;
    for (int c : counts) ss += (c - m) * (c - m);
    return std::sqrt(ss / static_cast<double>(counts.size() - 1));
}

double sigma_separation(double mean_a, double std_a, double mean_b, double std_b) {
    const double spread = std::hypot(std_a, std_b);
    const double diff = std::fabs(mean_a - mean_b);
    if (spread == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return diff / spread;
}

// ---------------------------------------------------------------------------
// Tables

std::vector<TaxonomyRow> error_taxonomy(std::span<const TraceSummary> traces) {
    std::map<ErrorType, TaxonomyRow> rows;
    for (const auto& t : traces) {
        if (t.steps.empty() || t.steps.front()) continue;
        auto& row = rows[t.initial_error];
        row.type = t.initial_error;
        ++row.n;
        row.fixed += t.passed;
    }
    std::vector<TaxonomyRow> out;
    for (auto& [type, row] : rows) {
        row.rate = static_cast<double>(row.fixed) / row.n;
        row.small_sample = row.n < kSmallSample;
        out.push_back(row);
    }
    return out;
}

IterationAnalysis iteration_analysis(std::span<const TraceSummary> without_early_stop,
                                     std::span<const TraceSummary> with_early_stop) {
    IterationAnalysis a;

    if (!without_early_stop.empty()) {
        std::size_t common = std::numeric_limits<std::size_t>::max();
        std::size_t longest = 0;
        for (const auto& t : without_early_stop) {
            common = std::min(common, t.steps.size());
            longest = std::max(longest, t.steps.size());
        }
        a.restricted = common != longest;
        if (a.restricted) spdlog::warn("traces have different iteration budgets; using the common {}", common);
        a.budget = common > 0 ? static_cast<int>(common) - 1 : 0;
        for (int k = 1; k <= a.budget; ++k) {
            IterationRow row{k, 0, 0, 0};
            for (const auto& t : without_early_stop) {
                const bool before = t.steps[k - 1];
                const bool after = t.steps[k];
                row.fixes += !before && after;
                row.regressions += before && !after;
            }
            row.net = row.fixes - row.regressions;
            a.net_value.push_back(row);
        }
        for (const auto& t : without_early_stop) {
            if (t.steps.empty() || !t.steps.front()) continue;
            ++a.initially_passing;
            const auto last = std::min(t.steps.size(), static_cast<std::size_t>(a.budget) + 1);
            bool broken = false;
            for (std::size_t k = 1; k < last; ++k) broken = broken || !t.steps[k];
            if (broken) {
                ++a.broken;
                a.broken_ids.push_back(t.problem_id);
            }
            a.ended_failing += !t.passed;
        }
        a.break_rate = a.initially_passing ? static_cast<double>(a.broken) / a.initially_passing : 0.0;
    }

    if (!with_early_stop.empty()) {
        std::size_t longest = 0;
        for (const auto& t : with_early_stop) longest = std::max(longest, t.steps.size());
        a.cumulative.assign(longest, 0);
        for (const auto& t : with_early_stop) {
            auto first = std::find(t.steps.begin(), t.steps.end(), true);
            if (first == t.steps.end()) continue;
            for (auto k = static_cast<std::size_t>(first - t.steps.begin()); k < longest; ++k) ++a.cumulative[k];
        }
    }
    return a;
}

NoiseRow empirical_noise(const ConfigResult& result) {
    NoiseRow row;
    row.label = result.label;
    row.single_run = result.run_counts.empty() ? 0 : result.run_counts.front();
    row.multi_run_mean = result.mean;
    row.inflation = row.single_run - row.multi_run_mean;
    return row;
}

NoiseSimulation NoiseSimulation::uniform(int genomes, int problems, double p) {
    NoiseSimulation sim;
    sim.pass_prob.assign(static_cast<std::size_t>(genomes), std::vector<double>(static_cast<std::size_t>(problems), p));
    return sim;
}

NoiseEstimate simulate_selection_inflation(const NoiseSimulation& sim) {
    NoiseEstimate est;
    const std::size_t n = sim.pass_prob.size();
    if (n == 0 || sim.trials <= 0) return est;

    std::vector<double> truth(n, 0.0);
    std::vector<std::optional<double>> constant(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& row = sim.pass_prob[i];
        for (double p : row) {
            if (p < 0.0 || p > 1.0) throw std::invalid_argument("pass probability outside [0, 1]");
            truth[i] += p;
        }
        if (!row.empty() && std::all_of(row.begin(), row.end(), [&](double p) { return p == row.front(); })) {
            constant[i] = row.front();
        }
    }
    if (sim.evaluations == 0) {
        // Exact scores: the pick is the truly best genome and nothing is inflated.
        est.trials = sim.trials;
        return est;
    }

    Rng rng = make_stream(sim.seed, "noise-study");
    const int evals = sim.evaluations;
    double sum = 0.0;
    double sum_sq = 0.0;
    for (long trial = 0; trial < sim.trials; ++trial) {
        double best_obs = -1.0;
        std::size_t best = 0;
        for (std::size_t i = 0; i < n; ++i) {
            long hits = 0;
            const auto& row = sim.pass_prob[i];
            if (constant[i]) {
                std::binomial_distribution<long> draw(static_cast<long>(row.size()) * evals, *constant[i]);
                hits = draw(rng);
            } else {
                for (int e = 0; e < evals; ++e) {
                    for (double p : row) hits += uniform01(rng) < p;
                }
            }
            const double obs = static_cast<double>(hits) / evals;
            if (obs > best_obs) {
                best_obs = obs;
                best = i;
            }
        }
        const double d = best_obs - truth[best];
        sum += d;
        sum_sq += d * d;
    }
    const double t = static_cast<double>(sim.trials);
    est.trials = sim.trials;
    est.inflation = sum / t;
    est.standard_error = sim.trials > 1 ? std::sqrt(std::max(0.0, (sum_sq - sum * sum / t) / (t - 1)) / t) : 0.0;
    return est;
}

CeilingReport hard_ceiling(std::span<const ConfigResult> results) {
    CeilingReport report;
    if (results.empty()) return report;
    std::map<std::string, bool> ever_solved;
    std::map<std::string, std::map<ErrorType, int>> errors;
    std::vector<std::string> order;
    for (const auto& r : results) {
        for (std::size_t run = 0; run < r.solved.size(); ++run) {
            for (std::size_t p = 0; p < r.solved[run].size() && p < r.problem_ids.size(); ++p) {
                const auto& id = r.problem_ids[p];
                if (!ever_solved.count(id)) order.push_back(id);
                ever_solved[id] = ever_solved[id] || r.solved[run][p];
                if (run < r.summaries.size() && p < r.summaries[run].size()) {
                    ++errors[id][r.summaries[run][p].initial_error];
                }
            }
        }
    }
    std::map<ErrorType, int> tally;
    for (const auto& id : order) {
        if (ever_solved[id]) continue;
        report.problem_ids.push_back(id);
        const auto& counts = errors[id];
        ErrorType modal = ErrorType::Other;
        int best = 0;
        for (const auto& [type, c] : counts) {
            if (c > best) {
                best = c;
                modal = type;
            }
        }
        ++tally[modal];
    }
    report.by_error.assign(tally.begin(), tally.end());
    return report;
}

DifficultyTable difficulty_from(const ConfigResult& result) {
    DifficultyTable table;
    std::size_t runs = 0;
    for (std::size_t r = 0; r < result.solved.size(); ++r) {
        if (r < result.run_complete.size() && !result.run_complete[r]) continue;
        ++runs;
        for (std::size_t p = 0; p < result.solved[r].size(); ++p) table[result.problem_ids[p]] += result.solved[r][p];
    }
    for (auto& [id, v] : table) v /= static_cast<double>(runs);
    return table;
}

}  // namespace pipevo
