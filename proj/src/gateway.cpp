#include "pipevo/gateway.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "pipevo/errors.hpp"
#include "pipevo/random.hpp"

namespace pipevo {

using Json = nlohmann::json;
using Clock = std::chrono::steady_clock;

void GenerationRequest::check() const {
    if (!(temperature >= 0.0 && temperature <= kMaxTemperature)) {
        throw std::invalid_argument(fmt::format("temperature {} outside [0, {}]", temperature, kMaxTemperature));
    }
    if (system_prompt.empty() || user_prompt.empty()) throw std::invalid_argument("empty prompt");
    if (model.name.empty()) throw std::invalid_argument("empty model id");
}

InFlightLimiter::InFlightLimiter(int limit) : limit_(std::max(1, limit)) {}

void InFlightLimiter::acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return in_flight_.load() < limit_; });
    int now = in_flight_.fetch_add(1) + 1;
    int prev = peak_.load();
    while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
    }
}

void InFlightLimiter::release() {
    {
        std::lock_guard lock(mutex_);
        in_flight_.fetch_sub(1);
    }
    cv_.notify_one();
}

// ---------------------------------------------------------------------------
// HTTP backend

namespace {

bool model_known(const std::vector<ModelId>& models, const ModelId& m) {
    return models.empty() || std::find(models.begin(), models.end(), m) != models.end();
}

Json request_body(const HttpGatewayConfig& cfg, const GenerationRequest& r) {
    Json messages = Json::array({{{"role", "system"}, {"content", r.system_prompt}},
                                 {{"role", "user"}, {"content", r.user_prompt}}});
    if (cfg.api == HttpApi::Ollama) {
        return {{"model", r.model.name},
                {"messages", std::move(messages)},
                {"stream", false},
                {"options",
                 {{"temperature", r.temperature}, {"num_predict", r.max_output_tokens}, {"num_ctx", r.context_budget}}}};
    }
    return {{"model", r.model.name},
            {"messages", std::move(messages)},
            {"stream", false},
            {"temperature", r.temperature},
            {"max_tokens", r.max_output_tokens}};
}

std::string response_text(HttpApi api, const std::string& body) {
    Json j = Json::parse(body);
    if (api == HttpApi::Ollama) return j.at("message").at("content").get<std::string>();
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
}

}  // namespace

HttpGateway::HttpGateway(HttpGatewayConfig config)
    : config_(std::move(config)), limiter_(config_.max_in_flight) {}

HttpGateway::~HttpGateway() = default;

GenerationResponse HttpGateway::generate(const GenerationRequest& request) {
    request.check();
    if (!model_known(config_.models, request.model)) {
        throw ConfigError(fmt::format("model '{}' is not served by this gateway", request.model.name));
    }
    const std::string path = config_.api == HttpApi::Ollama ? "/api/chat" : "/v1/chat/completions";
    const std::string body = request_body(config_, request).dump();

    InFlightLimiter::Slot slot(limiter_);
    const auto started = Clock::now();
    std::optional<GatewayError> last;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
        attempts_.fetch_add(1);
        httplib::Client client(config_.endpoint);
        auto secs = std::chrono::duration_cast<std::chrono::microseconds>(config_.request_timeout);
        client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(secs).count(),
                                      static_cast<time_t>(secs.count() % 1'000'000));
        client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(secs).count(),
                                static_cast<time_t>(secs.count() % 1'000'000));
        client.set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(secs).count(),
                                 static_cast<time_t>(secs.count() % 1'000'000));

        auto res = client.Post(path, body, "application/json");
        if (!res) {
            auto err = res.error();
            auto kind = (err == httplib::Error::Connection) ? GatewayError::Kind::Unreachable
                        : (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
                            ? GatewayError::Kind::Timeout
                            : GatewayError::Kind::Http;
            last.emplace(kind, fmt::format("{}{}: {}", config_.endpoint, path, httplib::to_string(err)));
            spdlog::debug("gateway attempt {} failed: {}", attempt + 1, last->what());
            continue;
        }
        if (res->status >= 500) {
            last.emplace(GatewayError::Kind::Http, fmt::format("{}{}: HTTP {}", config_.endpoint, path, res->status));
            continue;
        }
        if (res->status != 200) {
            throw GatewayError(GatewayError::Kind::Refused,
                               fmt::format("{}{}: HTTP {}: {}", config_.endpoint, path, res->status, res->body));
        }
        GenerationResponse out;
        try {
            out.text = response_text(config_.api, res->body);
        } catch (const Json::exception& e) {
            throw GatewayError(GatewayError::Kind::Http, fmt::format("malformed server reply: {}", e.what()));
        }
        out.backend = Backend::HttpServer;
        out.latency = std::chrono::duration<double>(Clock::now() - started).count();
        out.degenerate = out.text.empty();
        if (out.degenerate) spdlog::info("degenerate (empty) output from {}", request.model.name);
        return out;
    }
    throw *last;
}

// ---------------------------------------------------------------------------
// Scripted backend

MockScript MockScript::parse(std::string_view text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ParseError("", fmt::format("malformed mock script: {}", e.what()));
    }
    if (!j.is_object()) throw ParseError("", "mock script must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() != "rules" && it.key() != "default") throw ParseError(it.key(), "unknown field");
    }
    MockScript script;
    if (auto d = j.find("default"); d != j.end()) {
        if (!d->is_string()) throw ParseError("default", "expected a string");
        script.fallback = d->get<std::string>();
    }
    if (auto rules = j.find("rules"); rules != j.end()) {
        if (!rules->is_array()) throw ParseError("rules", "expected an array");
        for (std::size_t i = 0; i < rules->size(); ++i) {
            const auto& rj = (*rules)[i];
            const std::string where = fmt::format("rules[{}]", i);
            if (!rj.is_object()) throw ParseError(where, "expected an object");
            ScriptRule rule;
            try {
                for (auto it = rj.begin(); it != rj.end(); ++it) {
                    const auto& k = it.key();
                    if (k == "role") rule.role = role_from_string(it->get<std::string>());
                    else if (k == "model") rule.model = it->get<std::string>();
                    else if (k == "prompt_index") rule.prompt_index = it->get<int>();
                    else if (k == "call") rule.call = it->get<int>();
                    else if (k == "contains") rule.contains = it->get<std::string>();
                    else if (k == "response") rule.choices.push_back(it->get<std::string>());
                    else if (k == "choices") rule.choices = it->get<std::vector<std::string>>();
                    else throw ParseError(where + "." + k, "unknown field");
                }
            } catch (const Json::exception& e) {
                throw ParseError(where, e.what());
            }
            if (rule.choices.empty()) throw ParseError(where, "needs \"response\" or \"choices\"");
            script.rules.push_back(std::move(rule));
        }
    }
    return script;
}

MockScript MockScript::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read mock script " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

ScriptedGateway::ScriptedGateway(MockScript script, std::uint64_t seed, std::vector<ModelId> models)
    : script_(std::move(script)), seed_(seed), models_(std::move(models)) {}

GenerationResponse ScriptedGateway::generate(const GenerationRequest& request) {
    request.check();
    if (!model_known(models_, request.model)) {
        throw ConfigError(fmt::format("model '{}' is not in the mock's model list", request.model.name));
    }
    calls_.fetch_add(1);
    for (std::size_t i = 0; i < script_.rules.size(); ++i) {
        const auto& r = script_.rules[i];
        if (r.role && *r.role != request.role) continue;
        if (r.model && *r.model != request.model.name) continue;
        if (r.prompt_index && *r.prompt_index != request.prompt_index) continue;
        if (r.call && *r.call != request.call_index) continue;
        if (r.contains && request.user_prompt.find(*r.contains) == std::string::npos) continue;

        std::size_t pick = 0;
        if (request.temperature > 0.0 && r.choices.size() > 1) {
            std::uint64_t h = hash_combine(seed_, request.sample_key);
            h = hash_combine(h, i);
            h = hash_combine(h, fnv1a(request.model.name));
            h = hash_combine(h, static_cast<std::uint64_t>(request.role));
            h = hash_combine(h, static_cast<std::uint64_t>(request.call_index));
            h = hash_combine(h, fnv1a(request.user_prompt));
            pick = h % r.choices.size();
        }
        GenerationResponse out;
        out.text = r.choices[pick];
        out.backend = Backend::ScriptedMock;
        out.degenerate = out.text.empty();
        return out;
    }
    if (script_.fallback) {
        return GenerationResponse{*script_.fallback, 0.0, Backend::ScriptedMock, script_.fallback->empty()};
    }
    throw GatewayError(GatewayError::Kind::Refused,
                       fmt::format("no scripted reply for {} call {} on {}", to_string(request.role),
                                   request.call_index, request.model.name));
}

}  // namespace pipevo
