#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pipevo/genome.hpp"

namespace pipevo {

inline constexpr int kContextTokens = 4096;
inline constexpr int kDefaultMaxOutputTokens = 1024;

struct GenerationRequest {
    ModelId model;
    std::string system_prompt;
    std::string user_prompt;
    double temperature = 0.7;  ///< 0.0 allowed for the deterministic regime
    int max_output_tokens = kDefaultMaxOutputTokens;
    int context_budget = kContextTokens;

    // Routing metadata. The HTTP backend ignores these; the scripted backend matches on them.
    Role role = Role::Generator;
    int prompt_index = 0;
    int call_index = 1;            ///< 1-based count of this role's calls within one pipeline run
    std::uint64_t sample_key = 0;  ///< varies per run so sampled replies can differ across runs

    /// Throws std::invalid_argument if temperature or prompts are out of contract.
    void check() const;
};

enum class Backend { HttpServer, ScriptedMock };

struct GenerationResponse {
    std::string text;
    double latency = 0.0;
    Backend backend = Backend::ScriptedMock;
    bool degenerate = false;  ///< set when `text` is empty
};

/// Node invocation failed. `unreachable()` failures mean the server cannot be reached at all;
/// everything else (timeouts, HTTP errors, refusals) is local to one request.
class GatewayError : public std::runtime_error {
public:
    enum class Kind { Unreachable, Timeout, Http, Refused };

    GatewayError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }
    bool unreachable() const noexcept { return kind_ == Kind::Unreachable; }

private:
    Kind kind_;
};

class ModelGateway {
public:
    virtual ~ModelGateway() = default;
    virtual GenerationResponse generate(const GenerationRequest& request) = 0;
};

/// Counting gate that bounds in-flight requests and remembers the peak it saw.
class InFlightLimiter {
public:
    explicit InFlightLimiter(int limit);

    class Slot {
    public:
        explicit Slot(InFlightLimiter& owner) : owner_(&owner) { owner_->acquire(); }
        ~Slot() { owner_->release(); }
        Slot(const Slot&) = delete;
        Slot& operator=(const Slot&) = delete;

    private:
        InFlightLimiter* owner_;
    };

    int limit() const noexcept { return limit_; }
    int in_flight() const noexcept { return in_flight_.load(); }
    int peak() const noexcept { return peak_.load(); }

private:
    void acquire();
    void release();

    int limit_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::atomic<int> in_flight_{0};
    std::atomic<int> peak_{0};
};

enum class HttpApi { Ollama, OpenAI };

struct HttpGatewayConfig {
    std::string endpoint = "http://localhost:11434";
    HttpApi api = HttpApi::Ollama;
    std::vector<ModelId> models;  ///< empty accepts any model
    int max_in_flight = 4;
    std::chrono::duration<double> request_timeout{120.0};
    int retries = 1;
};

/// Talks to a local model server. Ollama's /api/chat or an OpenAI-style /v1/chat/completions.
class HttpGateway final : public ModelGateway {
public:
    explicit HttpGateway(HttpGatewayConfig config);
    ~HttpGateway() override;

    GenerationResponse generate(const GenerationRequest& request) override;

    const InFlightLimiter& limiter() const noexcept { return limiter_; }
    std::uint64_t attempts() const noexcept { return attempts_.load(); }

private:
    HttpGatewayConfig config_;
    InFlightLimiter limiter_;
    std::atomic<std::uint64_t> attempts_{0};
};

/// One scripted reply rule. Unset criteria match anything.
struct ScriptRule {
    std::optional<Role> role;
    std::optional<std::string> model;
    std::optional<int> prompt_index;
    std::optional<int> call;          ///< matches GenerationRequest::call_index
    std::optional<std::string> contains;  ///< substring of the user prompt
    /// Candidate replies. At temperature 0 the first is returned; otherwise one is picked by a
    /// hash of (seed, sample_key, request), so replays are exact and independent of call order.
    std::vector<std::string> choices;
};

struct MockScript {
    std::vector<ScriptRule> rules;
    std::optional<std::string> fallback;

    /// JSON: {"rules": [{"role":..,"model":..,"prompt_index":..,"call":..,"contains":..,
    ///                   "response": "..." | "choices": [..]}], "default": "..."}
    static MockScript parse(std::string_view text);
    static MockScript load(const std::filesystem::path& path);
};

/// Deterministic stand-in for a model server. Stateless per request, so safe to call from
/// several evaluator threads without perturbing replies.
class ScriptedGateway final : public ModelGateway {
public:
    ScriptedGateway(MockScript script, std::uint64_t seed = 0, std::vector<ModelId> models = {});

    GenerationResponse generate(const GenerationRequest& request) override;

    std::uint64_t calls() const noexcept { return calls_.load(); }

private:
    MockScript script_;
    std::uint64_t seed_;
    std::vector<ModelId> models_;
    std::atomic<std::uint64_t> calls_{0};
};

}  // namespace pipevo
