#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "hardneg/error.hpp"

namespace hardneg::gateway {

struct TextPart {
    std::string text;
    friend bool operator==(const TextPart&, const TextPart&) = default;
};

// Raw image bytes; base64-encoded only on the wire.
struct ImagePart {
    std::string bytes;
    std::string media_type;  // image/png or image/jpeg
    friend bool operator==(const ImagePart&, const ImagePart&) = default;
};

using Part = std::variant<TextPart, ImagePart>;

enum class Role { system, user };

struct Message {
    Role role = Role::user;
    std::vector<Part> parts;
    friend bool operator==(const Message&, const Message&) = default;
};

struct ChatRequest {
    std::string endpoint_id;
    std::vector<Message> messages;
    double temperature = 0.0;
    int max_tokens = 512;
    std::string request_tag;
    // When set, ask the server for this many alternatives per generated token.
    std::optional<int> top_logprobs;

    friend bool operator==(const ChatRequest&, const ChatRequest&) = default;
};

struct RetryPolicy {
    int max_attempts = 3;
    int backoff_base_ms = 500;
    double backoff_factor = 2.0;
};

struct EndpointConfig {
    std::string endpoint_id;
    std::string base_url;
    std::string api_key_env;
    std::string model_name;
    int max_in_flight = 4;
    int timeout_ms = 120000;
    RetryPolicy retry;
};

struct Completion {
    std::string text;
    // Alternatives for the first generated token: token -> logprob.
    std::map<std::string, double> first_token_logprobs;
    int attempts = 0;
};

inline constexpr int kMaxRetryAttempts = 8;

inline void validate(const EndpointConfig& e) {
    const auto where = "endpoint '" + e.endpoint_id + "': ";
    if (e.endpoint_id.empty()) throw ValidationError("endpoint_id must be non-empty");
    if (e.max_in_flight < 1) throw ValidationError(where + "max_in_flight must be >= 1");
    if (e.timeout_ms < 1) throw ValidationError(where + "timeout_ms must be positive");
    if (e.retry.max_attempts < 1 || e.retry.max_attempts > kMaxRetryAttempts)
        throw ValidationError(where + "retry.max_attempts must be in [1, 8]");
    if (e.retry.backoff_base_ms < 0 || e.retry.backoff_factor < 1.0)
        throw ValidationError(where + "backoff must be non-negative and non-shrinking");
}

inline std::string user_text(const ChatRequest& r) {
    std::string out;
    for (const auto& m : r.messages) {
        if (m.role != Role::user) continue;
        for (const auto& p : m.parts) {
            if (const auto* t = std::get_if<TextPart>(&p)) {
                if (!out.empty()) out += '\n';
                out += t->text;
            }
        }
    }
    return out;
}

inline void validate(const ChatRequest& r) {
    bool has_user = false;
    for (const auto& m : r.messages) {
        if (m.role == Role::user) has_user = true;
        for (const auto& p : m.parts) {
            if (const auto* img = std::get_if<ImagePart>(&p)) {
                if (img->media_type != "image/png" && img->media_type != "image/jpeg")
                    throw ValidationError("unsupported image media type '" + img->media_type + "'");
            }
        }
    }
    if (!has_user) throw ValidationError("chat request needs at least one user message");
    if (r.temperature < 0.0) throw ValidationError("temperature must be >= 0");
    if (r.max_tokens < 1) throw ValidationError("max_tokens must be positive");
}

// ---- base64 (OpenSSL) ------------------------------------------------------

inline std::string base64_encode(std::string_view bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

inline std::string base64_decode(std::string_view encoded) {
    if (encoded.size() % 4 != 0) throw ParseError("base64", 0, "length is not a multiple of 4");
    std::string out(3 * encoded.size() / 4, '\0');
    const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(encoded.data()),
                                  static_cast<int>(encoded.size()));
    if (n < 0) throw ParseError("base64", 0, "invalid base64 payload");
    // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
    std::size_t pad = 0;
    if (!encoded.empty() && encoded.back() == '=') ++pad;
    if (encoded.size() > 1 && encoded[encoded.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

// ---- OpenAI chat-completions wire format -----------------------------------

inline nlohmann::json to_wire(const ChatRequest& r, const std::string& model) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : r.messages) {
        nlohmann::json content = nlohmann::json::array();
        for (const auto& p : m.parts) {
            if (const auto* t = std::get_if<TextPart>(&p)) {
                content.push_back({{"type", "text"}, {"text", t->text}});
            } else {
                const auto& img = std::get<ImagePart>(p);
                content.push_back(
                    {{"type", "image_url"},
                     {"image_url", {{"url", "data:" + img.media_type + ";base64," + base64_encode(img.bytes)}}}});
            }
        }
        messages.push_back({{"role", m.role == Role::system ? "system" : "user"}, {"content", std::move(content)}});
    }
    nlohmann::json body = {{"model", model},
                           {"messages", std::move(messages)},
                           {"temperature", r.temperature},
                           {"max_tokens", r.max_tokens}};
    if (r.top_logprobs) {
        body["logprobs"] = true;
        body["top_logprobs"] = *r.top_logprobs;
    }
    return body;
}

// Inverse of to_wire. endpoint_id and request_tag are routing metadata that
// never travel on the wire, so the caller supplies them.
inline ChatRequest from_wire(const nlohmann::json& body, std::string endpoint_id, std::string request_tag) {
    ChatRequest r;
    r.endpoint_id = std::move(endpoint_id);
    r.request_tag = std::move(request_tag);
    try {
        r.temperature = body.at("temperature").get<double>();
        r.max_tokens = body.at("max_tokens").get<int>();
        if (body.value("logprobs", false)) r.top_logprobs = body.at("top_logprobs").get<int>();
        for (const auto& m : body.at("messages")) {
            Message msg;
            const auto role = m.at("role").get<std::string>();
            if (role == "system") msg.role = Role::system;
            else if (role == "user") msg.role = Role::user;
            else throw ParseError("chat request", 0, "unsupported role '" + role + "'");
            const auto& content = m.at("content");
            if (content.is_string()) {
                msg.parts.push_back(TextPart{content.get<std::string>()});
            } else {
                for (const auto& c : content) {
                    const auto type = c.at("type").get<std::string>();
                    if (type == "text") {
                        msg.parts.push_back(TextPart{c.at("text").get<std::string>()});
                    } else if (type == "image_url") {
                        const auto url = c.at("image_url").at("url").get<std::string>();
                        const auto semi = url.find(";base64,");
                        if (url.rfind("data:", 0) != 0 || semi == std::string::npos)
                            throw ParseError("chat request", 0, "image_url must be a base64 data URL");
                        msg.parts.push_back(ImagePart{base64_decode(url.substr(semi + 8)), url.substr(5, semi - 5)});
                    } else {
                        throw ParseError("chat request", 0, "unsupported content type '" + type + "'");
                    }
                }
            }
            r.messages.push_back(std::move(msg));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("chat request", 0, e.what());
    }
    return r;
}

// Extracts the first choice. Returns nullopt when `choices` is empty or
// lacks text content; callers treat that as a protocol error.
inline std::optional<Completion> parse_completion_body(const nlohmann::json& body) {
    auto choices = body.find("choices");
    if (choices == body.end() || !choices->is_array() || choices->empty()) return std::nullopt;
    const auto& first = (*choices)[0];
    Completion c;
    auto msg = first.find("message");
    if (msg == first.end() || !msg->is_object()) return std::nullopt;
    auto content = msg->find("content");
    if (content == msg->end()) return std::nullopt;
    if (content->is_string()) c.text = content->get<std::string>();
    else if (!content->is_null()) return std::nullopt;

    if (auto lp = first.find("logprobs"); lp != first.end() && lp->is_object()) {
        auto tokens = lp->find("content");
        if (tokens != lp->end() && tokens->is_array() && !tokens->empty()) {
            const auto& tok = (*tokens)[0];
            if (auto top = tok.find("top_logprobs"); top != tok.end() && top->is_array()) {
                for (const auto& alt : *top)
                    c.first_token_logprobs.emplace(alt.at("token").get<std::string>(), alt.at("logprob").get<double>());
            }
            if (tok.contains("token") && tok.contains("logprob"))
                c.first_token_logprobs.emplace(tok.at("token").get<std::string>(), tok.at("logprob").get<double>());
        }
    }
    return c;
}

}  // namespace hardneg::gateway
