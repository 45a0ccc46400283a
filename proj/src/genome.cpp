#include "pipevo/genome.hpp"

#include <algorithm>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "pipevo/errors.hpp"

namespace pipevo {

using Json = nlohmann::ordered_json;

std::string_view to_string(Role role) {
    switch (role) {
        case Role::Generator: return "generator";
        case Role::Analyzer: return "analyzer";
        case Role::Refiner: return "refiner";
    }
    return "?";
}

Role role_from_string(std::string_view name) {
    if (name == "generator") return Role::Generator;
    if (name == "analyzer") return Role::Analyzer;
    if (name == "refiner") return Role::Refiner;
    throw ParseError("role", fmt::format("unknown role '{}'", name));
}

ModelPool::ModelPool(std::vector<ModelId> models) : models_(std::move(models)) {
    for (const auto& m : models_) {
        if (m.name.empty()) throw ConfigError("model pool contains an empty model id");
    }
}

bool ModelPool::contains(const ModelId& id) const {
    return std::find(models_.begin(), models_.end(), id) != models_.end();
}

const ModelId& ModelPool::sample(Rng& rng) const {
    if (models_.empty()) throw ConfigError("model pool is empty");
    return models_[uniform_index(rng, models_.size())];
}

bool same_configuration(const PipelineGenome& a, const PipelineGenome& b) {
    return a.generator == b.generator && a.stages == b.stages;
}

void InnovationCounter::observe(const PipelineGenome& g) noexcept {
    for (const auto& s : g.stages) {
        Innovation want = s.innovation + 1;
        Innovation cur = next_.load(std::memory_order_relaxed);
        while (cur < want && !next_.compare_exchange_weak(cur, want, std::memory_order_relaxed)) {
        }
    }
}

int node_count(const PipelineGenome& g) {
    int n = 1;
    for (const auto& s : g.stages) n += 2 + (s.analyzer ? 1 : 0);
    return n;
}

int analyzer_count(const PipelineGenome& g) {
    return static_cast<int>(std::count_if(g.stages.begin(), g.stages.end(),
                                          [](const StageGene& s) { return s.analyzer.has_value(); }));
}

int total_iterations(const PipelineGenome& g) {
    int n = 0;
    for (const auto& s : g.stages) n += s.max_iterations;
    return n;
}

namespace {

void check_node(const LlmNodeConfig& node, Role expected, const std::string& where,
                const ModelPool* pool, std::vector<std::string>& out) {
    if (node.role != expected) {
        out.push_back(fmt::format("{}: role is {}, expected {}", where, to_string(node.role),
                                  to_string(expected)));
    }
    if (node.model.name.empty()) out.push_back(where + ": empty model id");
    if (pool && !node.model.name.empty() && !pool->contains(node.model)) {
        out.push_back(fmt::format("{}: model '{}' not in pool", where, node.model.name));
    }
    if (node.prompt_index < 0 || node.prompt_index >= prompt_pool_size(expected)) {
        out.push_back(fmt::format("{}: prompt_index {} outside [0, {})", where, node.prompt_index,
                                  prompt_pool_size(expected)));
    }
    // Written so that NaN fails too.
    if (!(node.temperature >= kMinTemperature && node.temperature <= kMaxTemperature)) {
        out.push_back(fmt::format("{}: temperature {} outside [{}, {}]", where, node.temperature,
                                  kMinTemperature, kMaxTemperature));
    }
}

}  // namespace

std::vector<std::string> violations(const PipelineGenome& g, const ModelPool* pool) {
    std::vector<std::string> out;
    check_node(g.generator, Role::Generator, "generator", pool, out);
    if (g.stages.size() < kMinStages || g.stages.size() > kMaxStages) {
        out.push_back(fmt::format("stages: {} stages, expected 1-3", g.stages.size()));
    }
    for (std::size_t i = 0; i < g.stages.size(); ++i) {
        const auto& s = g.stages[i];
        const std::string where = fmt::format("stages[{}]", i);
        if (s.innovation == 0) out.push_back(where + ".innovation: must be positive");
        if (i > 0 && s.innovation <= g.stages[i - 1].innovation) {
            out.push_back(where + ".innovation: not strictly increasing");
        }
        if (s.max_iterations < kMinIterations || s.max_iterations > kMaxIterations) {
            out.push_back(fmt::format("{}.max_iterations: {} outside [1, 3]", where, s.max_iterations));
        }
        if (s.analyzer) check_node(*s.analyzer, Role::Analyzer, where + ".analyzer", pool, out);
        check_node(s.refiner, Role::Refiner, where + ".refiner", pool, out);
    }
    if (node_count(g) > kMaxNodes) {
        out.push_back(fmt::format("node_count: {} exceeds {}", node_count(g), kMaxNodes));
    }
    return out;
}

void validate(const PipelineGenome& g, const ModelPool* pool) {
    auto v = violations(g, pool);
    if (!v.empty()) throw GenomeError(fmt::format("genome {}: {}", g.genome_id, v.front()));
}

LlmNodeConfig random_node(Role role, const ModelPool& pool, Rng& rng) {
    LlmNodeConfig node;
    node.role = role;
    node.model = pool.sample(rng);
    node.prompt_index = static_cast<int>(uniform_index(rng, prompt_pool_size(role)));
    node.temperature = uniform_real(rng, kMinTemperature, kMaxTemperature);
    return node;
}

PipelineGenome new_random_genome(const ModelPool& pool, Rng& rng, InnovationCounter& counter) {
    if (pool.empty()) throw ConfigError("cannot build a genome from an empty model pool");
    PipelineGenome g;
    g.generator = random_node(Role::Generator, pool, rng);
    StageGene stage;
    stage.innovation = counter.issue();
    stage.refiner = random_node(Role::Refiner, pool, rng);
    stage.max_iterations =
        kMinIterations + static_cast<int>(uniform_index(rng, kMaxIterations - kMinIterations + 1));
    g.stages.push_back(std::move(stage));
    return g;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

Json node_to_json(const LlmNodeConfig& n) {
    Json j;
    j["model"] = n.model.name;
    j["prompt_index"] = n.prompt_index;
    j["temperature"] = n.temperature;
    return j;
}

const Json& require(const Json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(where + "." + key, "missing field");
    return *it;
}

void reject_unknown(const Json& obj, std::initializer_list<std::string_view> known,
                    const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
            throw ParseError(where.empty() ? it.key() : where + "." + it.key(), "unknown field");
        }
    }
}

std::int64_t get_int(const Json& j, const std::string& where) {
    if (!j.is_number_integer()) throw ParseError(where, "expected an integer");
    return j.get<std::int64_t>();
}

LlmNodeConfig node_from_json(const Json& j, Role role, const std::string& where,
                             const ModelPool* pool) {
    if (!j.is_object()) throw ParseError(where, "expected an object");
    reject_unknown(j, {"model", "prompt_index", "temperature"}, where);
    LlmNodeConfig n;
    n.role = role;
    const auto& model = require(j, "model", where);
    if (!model.is_string() || model.get<std::string>().empty()) {
        throw ParseError(where + ".model", "expected a non-empty string");
    }
    n.model.name = model.get<std::string>();
    if (pool && !pool->contains(n.model)) {
        throw ParseError(where + ".model", fmt::format("unknown model id '{}'", n.model.name));
    }
    auto idx = get_int(require(j, "prompt_index", where), where + ".prompt_index");
    if (idx < 0 || idx >= prompt_pool_size(role)) {
        throw ParseError(where + ".prompt_index",
                         fmt::format("{} out of range [0, {})", idx, prompt_pool_size(role)));
    }
    n.prompt_index = static_cast<int>(idx);
    const auto& t = require(j, "temperature", where);
    if (!t.is_number()) throw ParseError(where + ".temperature", "expected a number");
    n.temperature = t.get<double>();
    if (!(n.temperature >= kMinTemperature && n.temperature <= kMaxTemperature)) {
        throw ParseError(where + ".temperature",
                         fmt::format("{} out of range [{}, {}]", n.temperature, kMinTemperature,
                                     kMaxTemperature));
    }
    return n;
}

}  // namespace

std::string serialize_genome(const PipelineGenome& g) {
    Json j;
    j["genome_id"] = g.genome_id;
    j["generator"] = node_to_json(g.generator);
    Json stages = Json::array();
    for (const auto& s : g.stages) {
        Json sj;
        sj["innovation"] = s.innovation;
        sj["max_iterations"] = s.max_iterations;
        if (s.analyzer) sj["analyzer"] = node_to_json(*s.analyzer);
        sj["refiner"] = node_to_json(s.refiner);
        stages.push_back(std::move(sj));
    }
    j["stages"] = std::move(stages);
    return j.dump(2) + "\n";
}

PipelineGenome parse_genome(std::string_view text, const ModelPool* pool) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("", fmt::format("malformed genome record: {}", e.what()));
    }
    if (!j.is_object()) throw ParseError("", "genome record must be an object");
    reject_unknown(j, {"genome_id", "generator", "stages"}, "");

    PipelineGenome g;
    const auto& id = require(j, "genome_id", "genome");
    if (!id.is_number_unsigned() && !(id.is_number_integer() && id.get<std::int64_t>() >= 0)) {
        throw ParseError("genome_id", "expected a non-negative integer");
    }
    g.genome_id = id.get<GenomeId>();
    g.generator = node_from_json(require(j, "generator", "genome"), Role::Generator, "generator", pool);

    const auto& stages = require(j, "stages", "genome");
    if (!stages.is_array()) throw ParseError("stages", "expected an array");
    if (stages.size() < kMinStages || stages.size() > kMaxStages) {
        throw ParseError("stages", fmt::format("{} stages, expected 1-3", stages.size()));
    }
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const std::string where = fmt::format("stages[{}]", i);
        const auto& sj = stages[i];
        if (!sj.is_object()) throw ParseError(where, "expected an object");
        reject_unknown(sj, {"innovation", "max_iterations", "analyzer", "refiner"}, where);
        StageGene s;
        auto inn = get_int(require(sj, "innovation", where), where + ".innovation");
        if (inn <= 0) throw ParseError(where + ".innovation", "must be positive");
        s.innovation = static_cast<Innovation>(inn);
        if (!g.stages.empty() && s.innovation <= g.stages.back().innovation) {
            throw ParseError(where + ".innovation", "innovation numbers must strictly increase");
        }
        auto it = get_int(require(sj, "max_iterations", where), where + ".max_iterations");
        if (it < kMinIterations || it > kMaxIterations) {
            throw ParseError(where + ".max_iterations", fmt::format("{} out of range [1, 3]", it));
        }
        s.max_iterations = static_cast<int>(it);
        if (auto a = sj.find("analyzer"); a != sj.end()) {
            s.analyzer = node_from_json(*a, Role::Analyzer, where + ".analyzer", pool);
        }
        s.refiner = node_from_json(require(sj, "refiner", where), Role::Refiner, where + ".refiner", pool);
        g.stages.push_back(std::move(s));
    }
    if (node_count(g) > kMaxNodes) {
        throw ParseError("stages", fmt::format("{} nodes exceeds the cap of {}", node_count(g), kMaxNodes));
    }
    return g;
}

std::string describe(const PipelineGenome& g) {
    auto node = [](std::string_view tag, const LlmNodeConfig& n) {
        return fmt::format("{}({}/p{}/t{:.2f})", tag, n.model.name, n.prompt_index, n.temperature);
    };
    std::string out = node("gen", g.generator);
    for (const auto& s : g.stages) {
        out += " -> exec";
        if (s.analyzer) out += " -> " + node("ana", *s.analyzer);
        out += " -> " + node("ref", s.refiner);
        out += fmt::format(" x{}", s.max_iterations);
    }
    return out;
}

}  // namespace pipevo
