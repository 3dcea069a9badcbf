#pragma once

// OpenAI-compatible chat-completions over HTTP(S):
//   POST {base_url}/chat/completions, Authorization: Bearer $<api_key_env>

#include <cstdlib>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "hardneg/gateway/gateway.hpp"

namespace hardneg::gateway {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;    // path prefix without trailing slash
};

inline SplitUrl split_base_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ValidationError("base_url needs a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    SplitUrl out;
    out.origin = url.substr(0, path_start);
    out.path = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
    return out;
}

class HttpTransport final : public Transport {
public:
    Completion send(const EndpointConfig& endpoint, const ChatRequest& request) override {
        const auto url = split_base_url(endpoint.base_url);
        httplib::Client client(url.origin);
        const auto secs = endpoint.timeout_ms / 1000;
        const auto usecs = (endpoint.timeout_ms % 1000) * 1000;
        client.set_connection_timeout(secs, usecs);
        client.set_read_timeout(secs, usecs);
        client.set_write_timeout(secs, usecs);

        httplib::Headers headers;
        if (!endpoint.api_key_env.empty()) {
            const char* key = std::getenv(endpoint.api_key_env.c_str());
            if (!key)
                throw TransportError(FailureKind::client_error,
                                     "environment variable " + endpoint.api_key_env + " is not set");
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }

        const auto body = to_wire(request, endpoint.model_name).dump();
        auto res = client.Post(url.path + "/chat/completions", headers, body, "application/json");
        if (!res) {
            const auto err = res.error();
            const bool timed_out = err == httplib::Error::Read || err == httplib::Error::Write ||
                                   err == httplib::Error::ConnectionTimeout;
            throw TransportError(timed_out ? FailureKind::timeout : FailureKind::network,
                                 "HTTP transport: " + httplib::to_string(err));
        }
        if (res->status >= 400) {
            const auto excerpt = res->body.substr(0, 300);
            throw TransportError(res->status < 500 ? FailureKind::client_error : FailureKind::server_error,
                                 "HTTP " + std::to_string(res->status) + ": " + excerpt, res->status);
        }
        nlohmann::json parsed;
        try {
            parsed = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::parse_error& e) {
            throw TransportError(FailureKind::protocol, std::string("response is not JSON: ") + e.what());
        }
        auto completion = parse_completion_body(parsed);
        if (!completion) throw TransportError(FailureKind::protocol, "response has no choices");
        return *completion;
    }
};

}  // namespace hardneg::gateway
