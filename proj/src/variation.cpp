#include "pipevo/variation.hpp"

#include <algorithm>
#include <map>

namespace pipevo {

std::string_view to_string(MutationOp op) {
    switch (op) {
        case MutationOp::AddRefineStage: return "add_refine_stage";
        case MutationOp::AddAnalyzer: return "add_analyzer";
        case MutationOp::RemoveNode: return "remove_node";
        case MutationOp::SwapModel: return "swap_model";
        case MutationOp::MutatePrompt: return "mutate_prompt";
        case MutationOp::AdjustTemperature: return "adjust_temperature";
        case MutationOp::AdjustIterations: return "adjust_iterations";
    }
    return "?";
}

double rate_of(const MutationRates& r, MutationOp op) {
    switch (op) {
        case MutationOp::AddRefineStage: return r.add_refine_stage;
        case MutationOp::AddAnalyzer: return r.add_analyzer;
        case MutationOp::RemoveNode: return r.remove_node;
        case MutationOp::SwapModel: return r.swap_model;
        case MutationOp::MutatePrompt: return r.mutate_prompt;
        case MutationOp::AdjustTemperature: return r.adjust_temperature;
        case MutationOp::AdjustIterations: return r.adjust_iterations;
    }
    return 0.0;
}

bool MutationOutcome::did_fire(MutationOp op) const {
    return std::find(fired.begin(), fired.end(), op) != fired.end();
}

bool MutationOutcome::was_blocked(MutationOp op) const {
    return std::find(blocked.begin(), blocked.end(), op) != blocked.end();
}

namespace {

std::vector<LlmNodeConfig*> llm_nodes(PipelineGenome& g) {
    std::vector<LlmNodeConfig*> nodes{&g.generator};
    for (auto& s : g.stages) {
        if (s.analyzer) nodes.push_back(&*s.analyzer);
        nodes.push_back(&s.refiner);
    }
    return nodes;
}

LlmNodeConfig& pick_node(PipelineGenome& g, Rng& rng) {
    auto nodes = llm_nodes(g);
    return *nodes[uniform_index(rng, nodes.size())];
}

// Each returns false when structurally blocked.

bool add_refine_stage(PipelineGenome& g, const ModelPool& pool, Rng& rng, InnovationCounter& counter) {
    if (g.stages.size() >= kMaxStages || node_count(g) + 2 > kMaxNodes) return false;
    StageGene s;
    s.innovation = counter.issue();
    s.refiner = random_node(Role::Refiner, pool, rng);
    s.max_iterations = 1;
    g.stages.push_back(std::move(s));
    return true;
}

bool add_analyzer(PipelineGenome& g, const ModelPool& pool, Rng& rng) {
    auto& stage = g.stages[uniform_index(rng, g.stages.size())];
    if (stage.analyzer || node_count(g) + 1 > kMaxNodes) return false;
    stage.analyzer = random_node(Role::Analyzer, pool, rng);
    return true;
}

bool remove_analyzer(PipelineGenome& g, Rng& rng) {
    std::vector<StageGene*> with;
    for (auto& s : g.stages) {
        if (s.analyzer) with.push_back(&s);
    }
    if (with.empty()) return false;
    with[uniform_index(rng, with.size())]->analyzer.reset();
    return true;
}

bool remove_last_stage(PipelineGenome& g) {
    if (g.stages.size() < 2) return false;
    g.stages.pop_back();
    return true;
}

bool remove_node(PipelineGenome& g, double analyzer_bias, Rng& rng) {
    if (bernoulli(rng, analyzer_bias)) {
        return remove_analyzer(g, rng) || remove_last_stage(g);
    }
    return remove_last_stage(g) || remove_analyzer(g, rng);
}

}  // namespace

MutationOutcome apply_mutations(const PipelineGenome& g, const SearchParams& params,
                                const ModelPool& pool, Rng& rng, InnovationCounter& counter) {
    MutationOutcome out{g, {}, {}};
    PipelineGenome& child = out.offspring;

    for (MutationOp op : kMutationOrder) {
        if (!bernoulli(rng, rate_of(params.rates, op))) continue;
        out.fired.push_back(op);
        bool applied = true;
        switch (op) {
            case MutationOp::AddRefineStage:
                applied = add_refine_stage(child, pool, rng, counter);
                break;
            case MutationOp::AddAnalyzer:
                applied = add_analyzer(child, pool, rng);
                break;
            case MutationOp::RemoveNode:
                applied = remove_node(child, params.remove_analyzer_bias, rng);
                break;
            case MutationOp::SwapModel:
                pick_node(child, rng).model = pool.sample(rng);
                break;
            case MutationOp::MutatePrompt: {
                auto& node = pick_node(child, rng);
                node.prompt_index = static_cast<int>(uniform_index(rng, prompt_pool_size(node.role)));
                break;
            }
            case MutationOp::AdjustTemperature: {
                auto& node = pick_node(child, rng);
                std::normal_distribution<double> jitter(0.0, params.temperature_jitter_sigma);
                node.temperature =
                    std::clamp(node.temperature + jitter(rng), kMinTemperature, kMaxTemperature);
                break;
            }
            case MutationOp::AdjustIterations: {
                auto& stage = child.stages[uniform_index(rng, child.stages.size())];
                int delta = bernoulli(rng, params.iteration_decrease_bias) ? -1 : 1;
                stage.max_iterations =
                    std::clamp(stage.max_iterations + delta, kMinIterations, kMaxIterations);
                break;
            }
        }
        if (!applied) out.blocked.push_back(op);
    }
    return out;
}

PipelineGenome crossover(const PipelineGenome& a, const PipelineGenome& b, double fitness_a,
                         double fitness_b, const SearchParams& params, Rng& rng) {
    bool a_fitter = fitness_a > fitness_b || (fitness_a == fitness_b && bernoulli(rng, 0.5));
    const PipelineGenome& fitter = a_fitter ? a : b;

    PipelineGenome child;
    child.generator = bernoulli(rng, 0.5) ? a.generator : b.generator;

    std::map<Innovation, std::pair<const StageGene*, const StageGene*>> aligned;
    for (const auto& s : a.stages) aligned[s.innovation].first = &s;
    for (const auto& s : b.stages) aligned[s.innovation].second = &s;

    for (const auto& [innovation, pair] : aligned) {
        auto [from_a, from_b] = pair;
        if (from_a && from_b) {
            child.stages.push_back(bernoulli(rng, 0.5) ? *from_a : *from_b);
            continue;
        }
        const StageGene* only = from_a ? from_a : from_b;
        bool owned_by_fitter = (from_a != nullptr) == (&fitter == &a);
        if (owned_by_fitter || bernoulli(rng, params.weaker_parent_stage_p)) {
            child.stages.push_back(*only);
        }
    }

    // std::map iteration already yields ascending innovation order.
    if (child.stages.size() > kMaxStages) child.stages.resize(kMaxStages);
    for (auto it = child.stages.rbegin(); it != child.stages.rend() && node_count(child) > kMaxNodes; ++it) {
        it->analyzer.reset();
    }
    return child;
}

}  // namespace pipevo
