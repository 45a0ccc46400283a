#include "pipevo/pipeline.hpp"

#include <chrono>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "pipevo/random.hpp"

namespace pipevo {

using Clock = std::chrono::steady_clock;

std::vector<bool> PipelineTrace::step_passes() const {
    std::vector<bool> out;
    out.reserve(events.size() + 1);
    for (const auto& e : events) out.push_back(e.outcome.passed);
    if (final_outcome) out.push_back(final_outcome->passed);
    return out;
}

ErrorType PipelineTrace::initial_error() const {
    if (!events.empty()) return events.front().outcome.error_type;
    if (final_outcome) return final_outcome->error_type;
    return ErrorType::HarnessError;
}

int PipelineTrace::executions() const {
    return static_cast<int>(events.size()) + (final_outcome ? 1 : 0);
}

int PipelineTrace::refiner_calls() const {
    int n = 0;
    for (const auto& e : events) {
        for (const auto& node : e.nodes_invoked) n += node == "refiner";
    }
    return n;
}

// ---------------------------------------------------------------------------

int estimate_tokens(std::string_view text) {
    return static_cast<int>((text.size() + 3) / 4);
}

int feedback_token_budget(int max_output_tokens) {
    return kContextTokens - max_output_tokens - kPromptOverheadTokens;
}

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            lines.push_back(text.substr(pos));
            break;
        }
        lines.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    return lines;
}

std::string excerpt_lines(std::string_view traceback) {
    auto lines = split_lines(traceback);
    while (!lines.empty() && lines.back().find_first_not_of(" \t\r") == std::string_view::npos) lines.pop_back();
    std::string out;
    if (lines.size() <= static_cast<std::size_t>(kTracebackLineBudget)) {
        for (auto l : lines) out.append(l).push_back('\n');
    } else {
        const std::size_t tail = kTracebackLineBudget - kTracebackHeadLines;
        for (std::size_t i = 0; i < static_cast<std::size_t>(kTracebackHeadLines); ++i) out.append(lines[i]).push_back('\n');
        out += fmt::format("... [{} lines omitted] ...\n", lines.size() - kTracebackHeadLines - tail);
        for (std::size_t i = lines.size() - tail; i < lines.size(); ++i) out.append(lines[i]).push_back('\n');
    }
    if (!out.empty()) out.pop_back();
    return out;
}

std::string cut_middle(const std::string& text, std::size_t max_chars) {
    if (text.size() <= max_chars) return text;
    const std::string marker = "\n... [truncated] ...\n";
    if (max_chars <= marker.size() + 2) return text.substr(text.size() - max_chars);
    const std::size_t keep = max_chars - marker.size();
    const std::size_t head = keep / 2;
    const std::size_t tail = keep - head;
    return text.substr(0, head) + marker + text.substr(text.size() - tail);
}

}  // namespace

std::string Feedback::text() const {
    return fmt::format("Problem:\n{}\n\nFailing code:\n{}\n\n{}\n", problem, code, traceback);
}

Feedback build_feedback(const Problem& problem, std::string_view code, const ExecutionOutcome& outcome,
                        int token_budget) {
    Feedback fb;
    fb.problem = problem.statement;
    fb.code = std::string(code);

    std::string body;
    if (outcome.error_type == ErrorType::Timeout) {
        body = "Execution timed out.";
        if (!outcome.stderr_text.empty()) body += "\n" + excerpt_lines(outcome.stderr_text);
    } else if (!outcome.stderr_text.empty()) {
        body = excerpt_lines(outcome.stderr_text);
    } else if (outcome.passed) {
        body = "All tests passed.";
    } else {
        body = fmt::format("Process exited with status {} and no error output.", outcome.exit_code);
    }
    const std::string header = fmt::format("Error type: {}\nTraceback:\n", to_string(outcome.error_type));

    // Only the traceback is shortened; problem and code are passed through verbatim.
    fb.traceback = header + body;
    const std::size_t budget_chars = static_cast<std::size_t>(std::max(token_budget, 0)) * 4;
    const std::size_t fixed = fb.text().size() - fb.traceback.size();
    if (fb.text().size() > budget_chars) {
        const std::size_t room = budget_chars > fixed + header.size() ? budget_chars - fixed - header.size() : 64;
        fb.traceback = header + cut_middle(body, std::max<std::size_t>(room, 64));
    }
    return fb;
}

std::string format_feedback(const Problem& problem, std::string_view code, const ExecutionOutcome& outcome) {
    return build_feedback(problem, code, outcome).text();
}

// ---------------------------------------------------------------------------

namespace {

class PipelineRun {
public:
    PipelineRun(const PipelineGenome& genome, const Problem& problem, ModelGateway& gateway,
                CodeExecutor& executor, const PromptPool& prompts, const RunOptions& options)
        : genome_(genome), problem_(problem), gateway_(gateway), executor_(executor), prompts_(prompts),
          options_(options) {
        sample_base_ = hash_combine(options.sample_nonce, fnv1a(problem.problem_id));
    }

    PipelineTrace run() {
        const auto started = Clock::now();
        PipelineTrace trace;
        trace.problem_id = problem_.problem_id;
        trace.genome_id = genome_.genome_id;

        PromptSlots gen_slots;
        gen_slots.problem = problem_.statement;
        std::string code;
        try {
            code = extract_code(call(genome_.generator, gen_slots));
        } catch (const GatewayError& e) {
            if (e.unreachable()) throw;
            spdlog::debug("{}: generator failed: {}", problem_.problem_id, e.what());
            trace.generator_failed = true;
        }
        code = assemble_candidate(problem_, code);
        trace.initial_code = code;

        bool first = true;
        for (std::size_t s = 0; s < genome_.stages.size(); ++s) {
            const auto& stage = genome_.stages[s];
            for (int it = 0; it < stage.max_iterations; ++it) {
                IterationEvent ev;
                ev.stage_index = static_cast<int>(s);
                ev.iteration_index = it;
                ev.code_before = code;
                ev.outcome = execute(code);
                ev.nodes_invoked.push_back("executor");
                if (first) {
                    trace.initial_passed = ev.outcome.passed;
                    first = false;
                }
                if (ev.outcome.passed && options_.early_stopping) {
                    trace.events.push_back(std::move(ev));
                    trace.passed = true;
                    trace.early_stopped = true;
                    trace.final_code = code;
                    trace.wall_time = std::chrono::duration<double>(Clock::now() - started).count();
                    return trace;
                }
                code = refine(stage, ev);
                trace.events.push_back(std::move(ev));
            }
        }

        trace.final_outcome = execute(code);
        if (first) trace.initial_passed = trace.final_outcome->passed;  // generator-only genome
        trace.final_code = code;
        trace.passed = trace.final_outcome->passed;
        trace.wall_time = std::chrono::duration<double>(Clock::now() - started).count();
        return trace;
    }

private:
    std::string call(const LlmNodeConfig& node, const PromptSlots& slots) {
        auto prompt = prompts_.render(node.role, node.prompt_index, slots);
        GenerationRequest req;
        req.model = node.model;
        req.system_prompt = std::move(prompt.system);
        req.user_prompt = std::move(prompt.user);
        req.temperature = options_.forced_temperature.value_or(node.temperature);
        req.max_output_tokens = options_.max_output_tokens;
        req.role = node.role;
        req.prompt_index = node.prompt_index;
        req.call_index = ++calls_[static_cast<int>(node.role)];
        req.sample_key = hash_combine(sample_base_, static_cast<std::uint64_t>(req.call_index) * 4 +
                                                        static_cast<std::uint64_t>(node.role));
        return gateway_.generate(req).text;
    }

    ExecutionOutcome execute(const std::string& code) {
        try {
            return executor_.execute(code, problem_.test_block);
        } catch (const std::exception& e) {
            ExecutionOutcome out;
            out.exit_code = -1;
            out.stderr_text = std::string("HarnessError: ") + e.what();
            out.error_type = ErrorType::HarnessError;
            return out;
        }
    }

    std::string refine(const StageGene& stage, IterationEvent& ev) {
        const Feedback fb = build_feedback(problem_, ev.code_before, ev.outcome,
                                           feedback_token_budget(options_.max_output_tokens));
        PromptSlots slots;
        slots.problem = fb.problem;
        slots.code = fb.code;
        slots.traceback = fb.traceback;

        if (stage.analyzer) {
            PromptSlots a_slots;
            a_slots.code = fb.code;
            a_slots.traceback = fb.traceback;
            ev.nodes_invoked.push_back("analyzer");
            try {
                ev.analyzer_text = call(*stage.analyzer, a_slots);
                slots.analysis = ev.analyzer_text;
            } catch (const GatewayError& e) {
                if (e.unreachable()) throw;
                ev.node_error = ErrorType::GatewayError;
            }
        }

        ev.nodes_invoked.push_back("refiner");
        std::string next = ev.code_before;
        try {
            std::string extracted = extract_code(call(stage.refiner, slots));
            if (extracted.empty()) {
                ev.degenerate_output = true;
                spdlog::debug("{}: refiner returned no code, keeping previous version", problem_.problem_id);
            } else {
                next = assemble_candidate(problem_, extracted);
            }
        } catch (const GatewayError& e) {
            if (e.unreachable()) throw;
            ev.node_error = ErrorType::GatewayError;
        }
        ev.code_after = next;
        return next;
    }

    const PipelineGenome& genome_;
    const Problem& problem_;
    ModelGateway& gateway_;
    CodeExecutor& executor_;
    const PromptPool& prompts_;
    const RunOptions& options_;
    std::uint64_t sample_base_ = 0;
    int calls_[3] = {0, 0, 0};
};

}  // namespace

PipelineTrace run_pipeline(const PipelineGenome& genome, const Problem& problem, ModelGateway& gateway,
                           CodeExecutor& executor, const PromptPool& prompts, const RunOptions& options) {
    return PipelineRun(genome, problem, gateway, executor, prompts, options).run();
}

}  // namespace pipevo
