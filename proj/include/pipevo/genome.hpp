#pragma once

/// Constrained linear pipeline genome.
///
/// A pipeline is one generator followed by 1-3 refinement stages. Each stage is an executor,
/// an optional analyzer and a refiner, iterated up to `max_iterations` times. Stages carry an
/// innovation number that aligns them during crossover and speciation.

#include <atomic>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pipevo/random.hpp"

namespace pipevo {

enum class Role { Generator, Analyzer, Refiner };

std::string_view to_string(Role role);
Role role_from_string(std::string_view name);

inline constexpr double kMinTemperature = 0.05;
inline constexpr double kMaxTemperature = 1.2;
inline constexpr int kMinIterations = 1;
inline constexpr int kMaxIterations = 3;
inline constexpr std::size_t kMinStages = 1;
inline constexpr std::size_t kMaxStages = 3;
inline constexpr int kMaxNodes = 8;

/// Number of hand-written system prompts available to each role.
constexpr int prompt_pool_size(Role role) {
    switch (role) {
        case Role::Generator: return 3;
        case Role::Analyzer: return 2;
        case Role::Refiner: return 3;
    }
    return 0;
}

/// Tag the model server resolves, e.g. "llama3.2:3b".
struct ModelId {
    std::string name;

    auto operator<=>(const ModelId&) const = default;
};

/// Ordered set of models the search may assign to LLM nodes.
class ModelPool {
public:
    ModelPool() = default;
    explicit ModelPool(std::vector<ModelId> models);

    bool empty() const noexcept { return models_.empty(); }
    std::size_t size() const noexcept { return models_.size(); }
    const ModelId& operator[](std::size_t i) const { return models_[i]; }
    std::span<const ModelId> models() const noexcept { return models_; }
    bool contains(const ModelId& id) const;

    const ModelId& sample(Rng& rng) const;

private:
    std::vector<ModelId> models_;
};

struct LlmNodeConfig {
    Role role = Role::Generator;
    ModelId model;
    int prompt_index = 0;
    double temperature = 0.7;

    bool operator==(const LlmNodeConfig&) const = default;
};

using Innovation = std::uint64_t;
using GenomeId = std::uint64_t;

struct StageGene {
    Innovation innovation = 0;
    std::optional<LlmNodeConfig> analyzer;
    LlmNodeConfig refiner{Role::Refiner, {}, 0, 0.7};
    int max_iterations = 1;

    bool operator==(const StageGene&) const = default;
};

struct PipelineGenome {
    GenomeId genome_id = 0;
    LlmNodeConfig generator;
    std::vector<StageGene> stages;

    bool operator==(const PipelineGenome&) const = default;
};

/// Equality of everything heritable, ignoring `genome_id`.
bool same_configuration(const PipelineGenome& a, const PipelineGenome& b);

/// Hands out stage innovation numbers. Never reissues a number within one search run.
class InnovationCounter {
public:
    explicit InnovationCounter(Innovation next = 1) : next_(next) {}

    Innovation issue() noexcept { return next_.fetch_add(1, std::memory_order_relaxed); }
    Innovation peek() const noexcept { return next_.load(std::memory_order_relaxed); }

    /// Make sure future numbers are above everything in `g` (used after loading genomes).
    void observe(const PipelineGenome& g) noexcept;

private:
    std::atomic<Innovation> next_;
};

/// 1 for the generator plus, per stage, executor + refiner + analyzer if present.
int node_count(const PipelineGenome& g);

int analyzer_count(const PipelineGenome& g);

/// Sum of per-stage iteration budgets; the rank tiebreaker.
int total_iterations(const PipelineGenome& g);

/// Every invariant violation, as human-readable strings. Empty means valid.
/// When `pool` is given, models must also be pool members.
std::vector<std::string> violations(const PipelineGenome& g, const ModelPool* pool = nullptr);

/// Throws GenomeError listing the first violation.
void validate(const PipelineGenome& g, const ModelPool* pool = nullptr);

LlmNodeConfig random_node(Role role, const ModelPool& pool, Rng& rng);

/// Minimal starting genome: one analyzer-free stage, uniform draws for every field.
/// The returned genome has genome_id 0; the caller stamps ids.
PipelineGenome new_random_genome(const ModelPool& pool, Rng& rng, InnovationCounter& counter);

/// Plain-text record with stable key order.
std::string serialize_genome(const PipelineGenome& g);

/// Inverse of serialize_genome. Throws ParseError naming the offending field.
PipelineGenome parse_genome(std::string_view text, const ModelPool* pool = nullptr);

/// One-line human summary, e.g. "gen(llama3.2:3b/p0) -> exec -> ana(...) -> ref(...) x3".
std::string describe(const PipelineGenome& g);

}  // namespace pipevo
