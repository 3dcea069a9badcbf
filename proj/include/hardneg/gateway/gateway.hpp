#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include <spdlog/spdlog.h>

#include "hardneg/gateway/types.hpp"

namespace hardneg::gateway {

enum class FailureKind {
    client_error,   // HTTP 4xx: never retried
    server_error,   // HTTP 5xx: retried
    timeout,        // retried
    network,        // connection failures: retried
    protocol,       // malformed or empty response: not retried
    script,         // scripted mock could not answer: not retried
};

inline std::string_view to_string(FailureKind k) {
    switch (k) {
        case FailureKind::client_error: return "client_error";
        case FailureKind::server_error: return "server_error";
        case FailureKind::timeout: return "timeout";
        case FailureKind::network: return "network";
        case FailureKind::protocol: return "protocol";
        case FailureKind::script: return "script";
    }
    return "network";
}

inline bool is_retryable(FailureKind k) {
    return k == FailureKind::server_error || k == FailureKind::timeout || k == FailureKind::network;
}

// Raised by a Transport for a single attempt.
class TransportError : public Error {
public:
    TransportError(FailureKind kind, std::string message, int http_status = 0)
        : Error(std::move(message)), kind_(kind), http_status_(http_status) {}

    [[nodiscard]] FailureKind kind() const noexcept { return kind_; }
    [[nodiscard]] int http_status() const noexcept { return http_status_; }

private:
    FailureKind kind_;
    int http_status_;
};

// Raised by Gateway::complete once retries are exhausted or the failure is final.
class GatewayError : public Error {
public:
    GatewayError(FailureKind kind, int attempts, const std::string& message)
        : Error(message), kind_(kind), attempts_(attempts) {}

    [[nodiscard]] FailureKind kind() const noexcept { return kind_; }
    [[nodiscard]] int attempts() const noexcept { return attempts_; }

private:
    FailureKind kind_;
    int attempts_;
};

// One request/response exchange with a model server. Implementations must
// be safe to call from several threads at once.
class Transport {
public:
    virtual ~Transport() = default;
    virtual Completion send(const EndpointConfig& endpoint, const ChatRequest& request) = 0;
};

// Transport that refuses every call. Backs --dry-run so that planning code
// provably never reaches the network.
class RefusingTransport final : public Transport {
public:
    Completion send(const EndpointConfig& endpoint, const ChatRequest& request) override {
        contacted_.fetch_add(1);
        throw TransportError(FailureKind::protocol,
                             "transport contacted in dry-run (" + endpoint.endpoint_id + ", " + request.request_tag + ")");
    }
    [[nodiscard]] int contacts() const noexcept { return contacted_.load(); }

private:
    std::atomic<int> contacted_{0};
};

struct Outcome {
    std::size_t index = 0;
    std::optional<Completion> completion;
    std::string error;
    std::optional<FailureKind> failure;

    [[nodiscard]] bool ok() const noexcept { return completion.has_value(); }
};

class Gateway {
public:
    Gateway(std::vector<EndpointConfig> endpoints, std::shared_ptr<Transport> transport)
        : transport_(std::move(transport)) {
        for (auto& e : endpoints) {
            validate(e);
            auto id = e.endpoint_id;
            auto state = std::make_unique<EndpointState>();
            state->config = std::move(e);
            if (!states_.emplace(id, std::move(state)).second)
                throw ValidationError("duplicate endpoint_id '" + id + "'");
        }
    }

    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    [[nodiscard]] bool has_endpoint(const std::string& id) const { return states_.count(id) != 0; }

    [[nodiscard]] const EndpointConfig& endpoint(const std::string& id) const { return state(id).config; }

    [[nodiscard]] Transport& transport() const noexcept { return *transport_; }

    std::string complete(const ChatRequest& request) { return complete_full(request).text; }

    // Sends with retries. 5xx, timeouts and connection failures back off
    // exponentially up to retry.max_attempts; everything else fails at once.
    Completion complete_full(const ChatRequest& request) {
        validate(request);
        auto& st = state(request.endpoint_id);
        const auto& cfg = st.config;
        const auto started = std::chrono::steady_clock::now();
        for (int attempt = 1;; ++attempt) {
            try {
                Completion c;
                {
                    Permit permit(st);
                    c = transport_->send(cfg, request);
                }
                c.attempts = attempt;
                const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                    std::chrono::steady_clock::now() - started)
                                    .count();
                spdlog::debug("[{}] {} ok in {} ms after {} attempt(s)", cfg.endpoint_id, request.request_tag, ms,
                              attempt);
                return c;
            } catch (const TransportError& e) {
                const bool last = attempt >= cfg.retry.max_attempts;
                if (!is_retryable(e.kind()) || last) {
                    spdlog::warn("[{}] {} failed ({}) after {} attempt(s): {}", cfg.endpoint_id, request.request_tag,
                                 to_string(e.kind()), attempt, e.what());
                    throw GatewayError(e.kind(), attempt,
                                       request.request_tag + ": " + std::string(to_string(e.kind())) + " after " +
                                           std::to_string(attempt) + " attempt(s): " + e.what());
                }
                const double delay = cfg.retry.backoff_base_ms * std::pow(cfg.retry.backoff_factor, attempt - 1);
                if (delay > 0) std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long>(delay)));
            }
        }
    }

    // Runs every request, honoring each endpoint's in-flight ceiling.
    // Results come back in input order; one failure never affects siblings.
    std::vector<Outcome> complete_many(std::span<const ChatRequest> requests) {
        std::vector<Outcome> out(requests.size());
        if (requests.empty()) return out;

        std::size_t workers = 0;
        std::map<std::string, int> seen;
        for (const auto& r : requests) {
            if (auto it = states_.find(r.endpoint_id); it != states_.end() && !seen.count(r.endpoint_id))
                seen[r.endpoint_id] = it->second->config.max_in_flight;
        }
        for (const auto& [_, n] : seen) workers += static_cast<std::size_t>(n);
        workers = std::clamp<std::size_t>(workers, 1, std::min<std::size_t>(requests.size(), kMaxWorkers));

        std::atomic<std::size_t> next{0};
        auto work = [&] {
            for (std::size_t i = next.fetch_add(1); i < requests.size(); i = next.fetch_add(1)) {
                auto& o = out[i];
                o.index = i;
                try {
                    o.completion = complete_full(requests[i]);
                } catch (const GatewayError& e) {
                    o.error = e.what();
                    o.failure = e.kind();
                } catch (const std::exception& e) {
                    o.error = e.what();
                }
            }
        };
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
        return out;
    }

private:
    static constexpr std::size_t kMaxWorkers = 64;

    struct EndpointState {
        EndpointConfig config;
        std::mutex mu;
        std::condition_variable cv;
        int in_flight = 0;
    };

    class Permit {
    public:
        explicit Permit(EndpointState& s) : s_(s) {
            std::unique_lock lock(s_.mu);
            s_.cv.wait(lock, [&] { return s_.in_flight < s_.config.max_in_flight; });
            ++s_.in_flight;
        }
        ~Permit() {
            {
                std::lock_guard lock(s_.mu);
                --s_.in_flight;
            }
            s_.cv.notify_one();
        }
        Permit(const Permit&) = delete;
        Permit& operator=(const Permit&) = delete;

    private:
        EndpointState& s_;
    };

    EndpointState& state(const std::string& id) const {
        auto it = states_.find(id);
        if (it == states_.end()) throw ValidationError("endpoint '" + id + "' is not registered");
        return *it->second;
    }

    std::shared_ptr<Transport> transport_;
    std::map<std::string, std::unique_ptr<EndpointState>> states_;
};

}  // namespace hardneg::gateway
