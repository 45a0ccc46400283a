#pragma once

// Helpers shared by the unit and acceptance tests.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "pipevo/gateway.hpp"
#include "pipevo/genome.hpp"
#include "pipevo/random.hpp"
#include "pipevo/sandbox.hpp"
#include "pipevo/variation.hpp"

namespace testing {

using namespace pipevo;

inline std::filesystem::path data_dir() {
    return PIPEVO_TEST_DATA_DIR;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

/// Fresh directory removed on scope exit.
class TempDir {
public:
    TempDir() {
        std::string tmpl = (std::filesystem::temp_directory_path() / "pipevo-test-XXXXXX").string();
        path_ = ::mkdtemp(tmpl.data());
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline ModelPool three_models() {
    return ModelPool({ModelId{"alpha"}, ModelId{"beta"}, ModelId{"gamma"}});
}

inline LlmNodeConfig node(Role role, std::string model, int prompt = 0, double temperature = 0.5) {
    return LlmNodeConfig{role, ModelId{std::move(model)}, prompt, temperature};
}

inline StageGene stage(Innovation innovation, int iterations = 1, bool with_analyzer = false,
                       std::string model = "alpha") {
    StageGene s;
    s.innovation = innovation;
    s.max_iterations = iterations;
    s.refiner = node(Role::Refiner, model);
    if (with_analyzer) s.analyzer = node(Role::Analyzer, model);
    return s;
}

inline PipelineGenome genome(std::vector<StageGene> stages, std::string gen_model = "alpha", GenomeId id = 1) {
    PipelineGenome g;
    g.genome_id = id;
    g.generator = node(Role::Generator, std::move(gen_model));
    g.stages = std::move(stages);
    return g;
}

/// Random valid genome with up to three stages, built independently of the variation module.
inline PipelineGenome arbitrary_genome(Rng& rng, const ModelPool& pool, InnovationCounter& counter) {
    auto random_cfg = [&](Role role) {
        LlmNodeConfig n;
        n.role = role;
        n.model = pool[uniform_index(rng, pool.size())];
        n.prompt_index = static_cast<int>(uniform_index(rng, prompt_pool_size(role)));
        n.temperature = uniform_real(rng, kMinTemperature, kMaxTemperature);
        return n;
    };
    PipelineGenome g;
    g.generator = random_cfg(Role::Generator);
    const std::size_t stages = 1 + uniform_index(rng, 3);
    for (std::size_t i = 0; i < stages; ++i) {
        StageGene s;
        s.innovation = counter.issue();
        s.max_iterations = 1 + static_cast<int>(uniform_index(rng, 3));
        s.refiner = random_cfg(Role::Refiner);
        g.stages.push_back(s);
    }
    // Analyzers while the cap allows.
    for (auto& s : g.stages) {
        if (bernoulli(rng, 0.5) && node_count(g) + 1 <= kMaxNodes) s.analyzer = random_cfg(Role::Analyzer);
    }
    return g;
}

/// Executor that never starts a process: passes iff the code contains `marker`.
class MarkerExecutor final : public CodeExecutor {
public:
    explicit MarkerExecutor(std::string marker = "PASS") : marker_(std::move(marker)) {}

    ExecutionOutcome execute(std::string_view code, std::string_view) override {
        std::lock_guard lock(mutex_);
        ++calls_;
        ExecutionOutcome o;
        if (code.find(marker_) != std::string_view::npos) {
            o.passed = true;
            return o;
        }
        o.exit_code = 1;
        if (code.find("NAME_ERR") != std::string_view::npos) {
            o.stderr_text = "Traceback (most recent call last):\n  File \"solution.py\", line 3, in <module>\nNameError: name 'helper' is not defined\n";
            o.error_type = ErrorType::NameError;
        } else if (code.find("SYNTAX_ERR") != std::string_view::npos) {
            o.stderr_text = "  File \"solution.py\", line 1\n    def f(:\nSyntaxError: invalid syntax\n";
            o.error_type = ErrorType::SyntaxError;
        } else {
            o.stderr_text = "Traceback (most recent call last):\n  File \"solution.py\", line 9, in <module>\nAssertionError\n";
            o.error_type = ErrorType::AssertionError;
        }
        return o;
    }

    int calls() const { return calls_; }

private:
    std::string marker_;
    std::mutex mutex_;
    int calls_ = 0;
};

/// Gateway whose reply is computed by a function; records every request.
class FunctionGateway final : public ModelGateway {
public:
    using Fn = std::function<std::string(const GenerationRequest&)>;
    explicit FunctionGateway(Fn fn) : fn_(std::move(fn)) {}

    GenerationResponse generate(const GenerationRequest& request) override {
        request.check();
        {
            std::lock_guard lock(mutex_);
            requests_.push_back(request);
        }
        GenerationResponse r;
        r.text = fn_(request);
        r.degenerate = r.text.empty();
        return r;
    }

    std::vector<GenerationRequest> requests() const {
        std::lock_guard lock(mutex_);
        return requests_;
    }
    int count(Role role) const {
        std::lock_guard lock(mutex_);
        int n = 0;
        for (const auto& r : requests_) n += r.role == role;
        return n;
    }

private:
    Fn fn_;
    mutable std::mutex mutex_;
    std::vector<GenerationRequest> requests_;
};

}  // namespace testing
