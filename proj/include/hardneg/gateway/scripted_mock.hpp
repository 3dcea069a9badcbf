#pragma once

// Deterministic offline Transport driven by a script of
// (request_tag, user-text substring) -> response sequence rules.
//
// Script JSON:
//   {
//     "strict": true,                // unmatched request -> error
//     "default": "No",               // reply for unmatched requests when not strict
//     "latency_ms": 0,               // simulated service time per call
//     "rules": [
//       {"tag": "verify_A", "contains": "*", "responses": ["Yes"], "cycle": true},
//       {"tag": "rerank", "responses": [{"text": "True", "logprobs": {"True": -0.31, "False": -1.31}}]},
//       {"tag": "*", "contains": "flaky", "responses": [{"error": "server_error", "status": 503}, "OK"]}
//     ]
//   }
//
// Rules are tried in order; the first match answers. A rule's response
// sequence advances separately for every distinct request (user text plus
// image bytes), so concurrent fan-out cannot change which request receives
// which reply. `{image_id}` in a response expands to a short hash of the
// request's first image, `{text_id}` to a short hash of its user text.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "hardneg/gateway/gateway.hpp"
#include "hardneg/random.hpp"

namespace hardneg::gateway {

struct ScriptResponse {
    std::string text;
    std::map<std::string, double> logprobs;
    std::optional<FailureKind> failure;
    int http_status = 0;
};

struct ScriptRule {
    std::string tag = "*";
    std::string contains = "*";
    std::vector<ScriptResponse> responses;
    bool cycle = false;
};

struct Script {
    std::vector<ScriptRule> rules;
    bool strict = true;
    std::optional<ScriptResponse> fallback;
    int latency_ms = 0;
};

inline FailureKind parse_failure_kind(const std::string& s) {
    for (auto k : {FailureKind::client_error, FailureKind::server_error, FailureKind::timeout, FailureKind::network,
                   FailureKind::protocol, FailureKind::script}) {
        if (to_string(k) == s) return k;
    }
    throw ValidationError("unknown scripted error kind '" + s + "'");
}

inline ScriptResponse parse_script_response(const nlohmann::json& j) {
    ScriptResponse r;
    if (j.is_string()) {
        r.text = j.get<std::string>();
        return r;
    }
    if (!j.is_object()) throw ValidationError("script response must be a string or an object");
    r.text = j.value("text", "");
    if (auto it = j.find("logprobs"); it != j.end())
        for (auto lp = it->begin(); lp != it->end(); ++lp) r.logprobs[lp.key()] = lp.value().get<double>();
    if (auto it = j.find("error"); it != j.end()) r.failure = parse_failure_kind(it->get<std::string>());
    r.http_status = j.value("status", 0);
    return r;
}

inline Script parse_script(const nlohmann::json& j) {
    Script s;
    s.strict = j.value("strict", true);
    s.latency_ms = j.value("latency_ms", 0);
    if (auto it = j.find("default"); it != j.end() && !it->is_null()) s.fallback = parse_script_response(*it);
    for (const auto& r : j.value("rules", nlohmann::json::array())) {
        ScriptRule rule;
        rule.tag = r.value("tag", "*");
        rule.contains = r.value("contains", "*");
        rule.cycle = r.value("cycle", false);
        for (const auto& resp : r.at("responses")) rule.responses.push_back(parse_script_response(resp));
        if (rule.responses.empty()) throw ValidationError("script rule for tag '" + rule.tag + "' has no responses");
        s.rules.push_back(std::move(rule));
    }
    return s;
}

inline Script load_script(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mock script " + path.string());
    try {
        return parse_script(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string(), 0, e.what());
    }
}

struct MockCall {
    std::string request_tag;
    std::string user_text;
    std::string response;  // reply text, or "error: ..." for scripted failures
};

class ScriptedTransport final : public Transport {
public:
    explicit ScriptedTransport(Script script) : script_(std::move(script)) {}

    Completion send(const EndpointConfig&, const ChatRequest& request) override {
        {
            std::lock_guard lock(mu_);
            ++in_flight_;
            peak_ = std::max(peak_, in_flight_);
            ++calls_;
        }
        struct Leave {
            ScriptedTransport& t;
            ~Leave() {
                std::lock_guard lock(t.mu_);
                --t.in_flight_;
            }
        } leave{*this};

        if (script_.latency_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(script_.latency_ms));

        const auto text = user_text(request);
        const auto image = image_id(request);
        std::unique_lock lock(mu_);
        const ScriptResponse* resp = nullptr;
        for (std::size_t i = 0; i < script_.rules.size(); ++i) {
            const auto& rule = script_.rules[i];
            if (rule.tag != "*" && rule.tag != request.request_tag) continue;
            if (rule.contains != "*" && text.find(rule.contains) == std::string::npos) continue;
            auto& cursor = cursors_[{i, text + '\x1f' + image}];
            if (cursor >= rule.responses.size()) {
                if (!rule.cycle) {
                    log_.push_back({request.request_tag, text, "error: script exhausted"});
                    throw TransportError(FailureKind::script, "script exhausted for tag '" + request.request_tag + "'");
                }
                cursor = 0;
            }
            resp = &rule.responses[cursor++];
            break;
        }
        if (!resp) {
            if (script_.strict || !script_.fallback) {
                log_.push_back({request.request_tag, text, "error: unmatched"});
                throw TransportError(FailureKind::script,
                                     "no script rule matches request tag '" + request.request_tag + "'");
            }
            resp = &*script_.fallback;
        }
        if (resp->failure) {
            log_.push_back({request.request_tag, text, "error: " + std::string(to_string(*resp->failure))});
            throw TransportError(*resp->failure, "scripted " + std::string(to_string(*resp->failure)),
                                 resp->http_status);
        }
        Completion c;
        c.text = expand(expand(resp->text, "{image_id}", image), "{text_id}", short_hash(text));
        c.first_token_logprobs = resp->logprobs;
        log_.push_back({request.request_tag, text, c.text});
        return c;
    }

    [[nodiscard]] int peak_in_flight() const {
        std::lock_guard lock(mu_);
        return peak_;
    }
    [[nodiscard]] int calls() const {
        std::lock_guard lock(mu_);
        return calls_;
    }
    [[nodiscard]] std::vector<MockCall> log() const {
        std::lock_guard lock(mu_);
        return log_;
    }

private:
    static std::string short_hash(std::string_view bytes) {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
        return std::string(buf, 8);
    }

    static std::string image_id(const ChatRequest& r) {
        for (const auto& m : r.messages)
            for (const auto& p : m.parts)
                if (const auto* img = std::get_if<ImagePart>(&p)) return short_hash(img->bytes);
        return "noimage";
    }

    static std::string expand(std::string text, std::string_view key, const std::string& value) {
        for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size()))
            text.replace(pos, key.size(), value);
        return text;
    }

    Script script_;
    mutable std::mutex mu_;
    std::map<std::pair<std::size_t, std::string>, std::size_t> cursors_;
    std::vector<MockCall> log_;
    int in_flight_ = 0;
    int peak_ = 0;
    int calls_ = 0;
};

inline EndpointConfig mock_endpoint(std::string id = "mock", int max_in_flight = 4, int max_attempts = 3) {
    EndpointConfig e;
    e.endpoint_id = std::move(id);
    e.base_url = "mock://";
    e.model_name = "scripted";
    e.max_in_flight = max_in_flight;
    e.timeout_ms = 1000;
    e.retry = {max_attempts, 0, 2.0};
    return e;
}

// Gateway backed by a ScriptedTransport.
inline std::unique_ptr<Gateway> scripted_mock(Script script, std::vector<EndpointConfig> endpoints = {mock_endpoint()}) {
    return std::make_unique<Gateway>(std::move(endpoints), std::make_shared<ScriptedTransport>(std::move(script)));
}

inline ScriptedTransport& mock_transport(Gateway& g) {
    auto* t = dynamic_cast<ScriptedTransport*>(&g.transport());
    if (!t) throw ValidationError("gateway is not backed by a scripted mock");
    return *t;
}

}  // namespace hardneg::gateway
