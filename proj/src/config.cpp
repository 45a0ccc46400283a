#include "pipevo/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "pipevo/errors.hpp"

namespace pipevo {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(fmt::format("{}: expected an object", where.empty() ? "config" : where));
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) throw ConfigError(fmt::format("unknown config key '{}{}'", where, it.key()));
    }
}

fs::path existing_file(const Json& v, const fs::path& base, const std::string& key) {
    if (!v.is_string()) throw ConfigError(key + ": expected a path");
    fs::path p = v.get<std::string>();
    if (p.is_relative()) p = base / p;
    if (!fs::exists(p)) throw ConfigError(fmt::format("{}: file not found: {}", key, p.string()));
    return p;
}

template <typename T>
T get(const Json& j, const std::string& key) {
    try {
        return j.get<T>();
    } catch (const Json::exception&) {
        throw ConfigError(key + ": wrong type");
    }
}

}  // namespace

RunConfig RunConfig::parse(const Json& j, const fs::path& base) {
    reject_unknown(j,
                   {"benchmarks", "search_benchmark", "models", "gateway", "mock_script", "prompt_dir",
                    "difficulty_table", "search", "sandbox", "output_dir", "seed"},
                   "");
    RunConfig c;
    if (auto it = j.find("benchmarks"); it != j.end()) {
        if (!it->is_object()) throw ConfigError("benchmarks: expected an object");
        for (auto b = it->begin(); b != it->end(); ++b) {
            c.benchmarks[benchmark_kind_from_string(b.key())] = existing_file(*b, base, "benchmarks." + b.key());
        }
    }
    if (auto it = j.find("search_benchmark"); it != j.end()) {
        c.search_benchmark = benchmark_kind_from_string(get<std::string>(*it, "search_benchmark"));
    }
    if (auto it = j.find("models"); it != j.end()) {
        for (const auto& m : get<std::vector<std::string>>(*it, "models")) {
            if (m.empty()) throw ConfigError("models: empty model id");
            c.models.push_back(ModelId{m});
        }
    }
    if (auto it = j.find("gateway"); it != j.end()) {
        reject_unknown(*it, {"endpoint", "api", "max_in_flight", "timeout_seconds", "max_output_tokens", "retries"},
                       "gateway.");
        const auto& g = *it;
        if (g.contains("endpoint")) c.gateway.endpoint = get<std::string>(g["endpoint"], "gateway.endpoint");
        if (g.contains("api")) {
            auto api = get<std::string>(g["api"], "gateway.api");
            if (api == "ollama") c.gateway.api = HttpApi::Ollama;
            else if (api == "openai") c.gateway.api = HttpApi::OpenAI;
            else throw ConfigError("gateway.api must be \"ollama\" or \"openai\"");
        }
        if (g.contains("max_in_flight")) c.gateway.max_in_flight = get<int>(g["max_in_flight"], "gateway.max_in_flight");
        if (g.contains("timeout_seconds")) {
            c.gateway.request_timeout = std::chrono::duration<double>(get<double>(g["timeout_seconds"], "gateway.timeout_seconds"));
        }
        if (g.contains("retries")) c.gateway.retries = get<int>(g["retries"], "gateway.retries");
        if (g.contains("max_output_tokens")) {
            c.max_output_tokens = get<int>(g["max_output_tokens"], "gateway.max_output_tokens");
        }
        if (c.gateway.max_in_flight < 1) throw ConfigError("gateway.max_in_flight must be positive");
        if (c.gateway.retries < 0) throw ConfigError("gateway.retries must be >= 0");
        if (c.max_output_tokens < 1 || c.max_output_tokens >= kContextTokens) {
            throw ConfigError(fmt::format("gateway.max_output_tokens must be in [1, {})", kContextTokens));
        }
    }
    if (const char* env = std::getenv(kEndpointEnv); env && *env) c.gateway.endpoint = env;
    c.gateway.models = c.models;

    if (auto it = j.find("mock_script"); it != j.end()) c.mock_script = existing_file(*it, base, "mock_script");
    if (auto it = j.find("prompt_dir"); it != j.end()) c.prompt_dir = existing_file(*it, base, "prompt_dir");
    if (auto it = j.find("difficulty_table"); it != j.end()) {
        c.difficulty_table = existing_file(*it, base, "difficulty_table");
    }
    if (auto it = j.find("search"); it != j.end()) {
        try {
            c.search = apply_overrides(c.search, *it);
        } catch (const Json::exception& e) {
            throw ConfigError(std::string("search: ") + e.what());
        }
    }
    if (auto it = j.find("sandbox"); it != j.end()) {
        reject_unknown(*it, {"timeout_seconds", "interpreter", "scratch_root", "output_cap"}, "sandbox.");
        const auto& s = *it;
        if (s.contains("timeout_seconds")) {
            double t = get<double>(s["timeout_seconds"], "sandbox.timeout_seconds");
            if (!(t > 0)) throw ConfigError("sandbox.timeout_seconds must be positive");
            c.sandbox.timeout = std::chrono::duration<double>(t);
        }
        if (s.contains("interpreter")) c.sandbox.interpreter = get<std::string>(s["interpreter"], "sandbox.interpreter");
        if (s.contains("scratch_root")) c.sandbox.scratch_root = existing_file(s["scratch_root"], base, "sandbox.scratch_root");
        if (s.contains("output_cap")) c.sandbox.output_cap = get<std::size_t>(s["output_cap"], "sandbox.output_cap");
    }
    if (auto it = j.find("output_dir"); it != j.end()) {
        fs::path p = get<std::string>(*it, "output_dir");
        c.output_dir = p.is_relative() ? base / p : p;
    } else {
        c.output_dir = base / "runs";
    }
    if (auto it = j.find("seed"); it != j.end()) c.seed = get<std::uint64_t>(*it, "seed");
    return c;
}

RunConfig RunConfig::load(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ParseError("", fmt::format("{}: {}", path.string(), e.what()));
    }
    return parse(j, fs::absolute(path).parent_path());
}

Json RunConfig::to_json() const {
    Json j;
    Json b = Json::object();
    for (const auto& [kind, path] : benchmarks) b[std::string(to_string(kind))] = path.string();
    j["benchmarks"] = std::move(b);
    j["search_benchmark"] = to_string(search_benchmark);
    Json models_j = Json::array();
    for (const auto& m : models) models_j.push_back(m.name);
    j["models"] = std::move(models_j);
    j["gateway"] = {{"endpoint", gateway.endpoint},
                    {"api", gateway.api == HttpApi::Ollama ? "ollama" : "openai"},
                    {"max_in_flight", gateway.max_in_flight},
                    {"timeout_seconds", gateway.request_timeout.count()},
                    {"retries", gateway.retries},
                    {"max_output_tokens", max_output_tokens}};
    j["mock_script"] = mock_script ? Json(mock_script->string()) : Json(nullptr);
    j["prompt_dir"] = prompt_dir ? Json(prompt_dir->string()) : Json(nullptr);
    j["difficulty_table"] = difficulty_table ? Json(difficulty_table->string()) : Json(nullptr);
    j["search"] = pipevo::to_json(search);
    j["sandbox"] = {{"timeout_seconds", sandbox.timeout.count()},
                    {"interpreter", sandbox.interpreter},
                    {"scratch_root", sandbox.scratch_root.string()},
                    {"output_cap", sandbox.output_cap}};
    j["output_dir"] = output_dir.string();
    j["seed"] = seed;
    return j;
}

const fs::path& RunConfig::benchmark_path(BenchmarkKind kind) const {
    auto it = benchmarks.find(kind);
    if (it == benchmarks.end()) throw ConfigError(fmt::format("no {} benchmark file configured", to_string(kind)));
    return it->second;
}

std::unique_ptr<ModelGateway> make_gateway(const RunConfig& config, std::uint64_t seed) {
    if (config.models.empty()) throw ConfigError("models: the model pool is empty");
    if (config.mock_script) {
        return std::make_unique<ScriptedGateway>(MockScript::load(*config.mock_script), seed, config.models);
    }
    return std::make_unique<HttpGateway>(config.gateway);
}

}  // namespace pipevo
