#include <fmt/format.h>

#include "pipevo/errors.hpp"
#include "pipevo/pipeline.hpp"

namespace pipevo {

using Json = nlohmann::ordered_json;

Json to_json(const ExecutionOutcome& o) {
    return {{"passed", o.passed},
            {"exit_code", o.exit_code},
            {"error_type", to_string(o.error_type)},
            {"duration", o.duration},
            {"stdout", o.stdout_text},
            {"stderr", o.stderr_text}};
}

ExecutionOutcome outcome_from_json(const Json& j) {
    ExecutionOutcome o;
    o.passed = j.at("passed").get<bool>();
    o.exit_code = j.at("exit_code").get<int>();
    o.error_type = error_type_from_string(j.at("error_type").get<std::string>());
    o.duration = j.value("duration", 0.0);
    o.stdout_text = j.value("stdout", std::string());
    o.stderr_text = j.value("stderr", std::string());
    return o;
}

Json to_json(const PipelineTrace& t) {
    Json events = Json::array();
    for (const auto& e : t.events) {
        Json ej;
        ej["stage"] = e.stage_index;
        ej["iteration"] = e.iteration_index;
        ej["code_before"] = e.code_before;
        ej["outcome"] = to_json(e.outcome);
        if (e.analyzer_text) ej["analyzer_text"] = *e.analyzer_text;
        if (e.code_after) ej["code_after"] = *e.code_after;
        ej["nodes"] = e.nodes_invoked;
        if (e.node_error != ErrorType::None) ej["node_error"] = to_string(e.node_error);
        if (e.degenerate_output) ej["degenerate_output"] = true;
        events.push_back(std::move(ej));
    }
    Json j;
    j["problem_id"] = t.problem_id;
    j["genome_id"] = t.genome_id;
    j["initial_code"] = t.initial_code;
    if (t.generator_failed) j["generator_failed"] = true;
    j["events"] = std::move(events);
    if (t.final_outcome) j["final_outcome"] = to_json(*t.final_outcome);
    j["final_code"] = t.final_code;
    j["passed"] = t.passed;
    j["early_stopped"] = t.early_stopped;
    j["initial_passed"] = t.initial_passed;
    j["wall_time"] = t.wall_time;
    return j;
}

PipelineTrace trace_from_json(const Json& j) {
    PipelineTrace t;
    try {
        t.problem_id = j.at("problem_id").get<std::string>();
        t.genome_id = j.at("genome_id").get<GenomeId>();
        t.initial_code = j.value("initial_code", std::string());
        t.generator_failed = j.value("generator_failed", false);
        for (const auto& ej : j.at("events")) {
            IterationEvent e;
            e.stage_index = ej.at("stage").get<int>();
            e.iteration_index = ej.at("iteration").get<int>();
            e.code_before = ej.value("code_before", std::string());
            e.outcome = outcome_from_json(ej.at("outcome"));
            if (ej.contains("analyzer_text")) e.analyzer_text = ej.at("analyzer_text").get<std::string>();
            if (ej.contains("code_after")) e.code_after = ej.at("code_after").get<std::string>();
            e.nodes_invoked = ej.value("nodes", std::vector<std::string>{});
            if (ej.contains("node_error")) e.node_error = error_type_from_string(ej.at("node_error").get<std::string>());
            e.degenerate_output = ej.value("degenerate_output", false);
            t.events.push_back(std::move(e));
        }
        if (j.contains("final_outcome")) t.final_outcome = outcome_from_json(j.at("final_outcome"));
        t.final_code = j.value("final_code", std::string());
        t.passed = j.at("passed").get<bool>();
        t.early_stopped = j.value("early_stopped", false);
        t.initial_passed = j.value("initial_passed", false);
        t.wall_time = j.value("wall_time", 0.0);
    } catch (const Json::exception& e) {
        throw ParseError("trace", e.what());
    }
    return t;
}

}  // namespace pipevo
