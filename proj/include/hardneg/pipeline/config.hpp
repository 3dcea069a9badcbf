#pragma once

// TOML run configuration. Secrets never live here: each endpoint names the
// environment variable that holds its API key.
//
//   prompts_dir = "prompts"          # relative to the config file
//   prompt_version = "v1"
//
//   [[endpoints]]
//   id = "vlm"
//   base_url = "http://localhost:8000/v1"
//   api_key_env = "VLM_API_KEY"
//   model = "Qwen/Qwen2.5-VL-7B-Instruct"
//   max_in_flight = 8
//   timeout_ms = 120000
//   retry = { max_attempts = 4, backoff_base_ms = 500, backoff_factor = 2.0 }
//
//   [routes.verify]                  # positive_gen, negative_gen, verify, rephrase, rerank
//   endpoint = "vlm"
//   temperature = 0.0
//   max_tokens = 64
//
//   [generation]   n_positive_candidates, n_negative_variants, finance_properties, seed
//   [verification] strict_ambiguous
//   [dataset]      output_dir, rephrase_fraction, seed, export_batches, batch_groups
//   [eval]         k_rerank, metrics = ["ndcg@5", ...], max_regression, top_logprobs

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <toml.hpp>

#include "hardneg/dataset/examples.hpp"
#include "hardneg/eval/metrics.hpp"
#include "hardneg/gateway/types.hpp"
#include "hardneg/generation/generation.hpp"

namespace hardneg::pipeline {

struct DatasetSettings {
    std::filesystem::path output_dir = "out";
    double rephrase_fraction = 0.5;
    std::uint64_t seed = 0;
    bool export_batches = true;
    std::size_t batch_groups = dataset::kGroupsPerBatch;
};

struct EvalSettings {
    std::size_t k_rerank = 20;
    std::vector<eval::MetricSpec> metrics = {
        {eval::MetricKind::ndcg, 5}, {eval::MetricKind::ndcg, 10},
        {eval::MetricKind::recall, 1}, {eval::MetricKind::recall, 5}};
    // Fail the run when any metric drops by more than this (metric units).
    std::optional<double> max_regression;
    int top_logprobs = 5;
};

struct PipelineConfig {
    std::vector<gateway::EndpointConfig> endpoints;
    std::filesystem::path prompts_dir = "prompts";
    std::string prompt_version = "v1";
    generation::GenerationParams generation;
    generation::Routes routes;
    bool strict_ambiguous = true;
    DatasetSettings dataset;
    EvalSettings eval;
};

namespace detail {

template <typename T>
T get_or(const toml::node_view<const toml::node>& n, T fallback, const char* what) {
    if (!n) return fallback;
    if (auto v = n.value<T>()) return *v;
    throw ValidationError(std::string("config: '") + what + "' has the wrong type");
}

inline void read_route(const toml::table& root, const char* name, generation::StageRoute& route) {
    auto node = root["routes"][name];
    if (!node) return;
    route.endpoint_id = get_or<std::string>(node["endpoint"], route.endpoint_id, name);
    route.temperature = get_or<double>(node["temperature"], route.temperature, name);
    route.max_tokens = static_cast<int>(get_or<std::int64_t>(node["max_tokens"], route.max_tokens, name));
}

}  // namespace detail

inline void validate(const PipelineConfig& c) {
    for (const auto& e : c.endpoints) gateway::validate(e);
    generation::validate(c.generation);
    auto check_route = [&](const generation::StageRoute& r, const char* name) {
        if (r.endpoint_id.empty()) return;
        const bool known = std::any_of(c.endpoints.begin(), c.endpoints.end(),
                                       [&](const auto& e) { return e.endpoint_id == r.endpoint_id; });
        if (!known) throw ValidationError(std::string("config: route '") + name + "' names unknown endpoint '" +
                                          r.endpoint_id + "'");
        if (r.temperature < 0.0 || r.max_tokens < 1)
            throw ValidationError(std::string("config: route '") + name + "' has invalid decoding settings");
    };
    check_route(c.routes.positive_gen, "positive_gen");
    check_route(c.routes.negative_gen, "negative_gen");
    check_route(c.routes.verify, "verify");
    check_route(c.routes.rephrase, "rephrase");
    check_route(c.routes.rerank, "rerank");
    if (c.dataset.rephrase_fraction < 0.0 || c.dataset.rephrase_fraction > 1.0)
        throw ValidationError("config: dataset.rephrase_fraction must lie in [0,1]");
    if (c.dataset.batch_groups < 1) throw ValidationError("config: dataset.batch_groups must be positive");
    for (const auto& m : c.eval.metrics)
        if (m.k > c.eval.k_rerank)
            throw ValidationError("config: eval.k_rerank must be >= every metric cutoff (" + m.name() + ")");
}

// Parses TOML text. Relative paths resolve against `base_dir`.
inline PipelineConfig parse_config(std::string_view toml_text, const std::filesystem::path& base_dir = ".") {
    toml::table root;
    try {
        root = toml::parse(toml_text);
    } catch (const toml::parse_error& e) {
        throw ParseError("config", e.source().begin.line, std::string(e.description()));
    }
    PipelineConfig c;
    using detail::get_or;
    const toml::table& r = root;

    c.prompts_dir = base_dir / get_or<std::string>(r["prompts_dir"], "prompts", "prompts_dir");
    c.prompt_version = get_or<std::string>(r["prompt_version"], c.prompt_version, "prompt_version");

    if (auto* eps = r["endpoints"].as_array()) {
        for (const auto& node : *eps) {
            const auto* t = node.as_table();
            if (!t) throw ValidationError("config: endpoints must be tables");
            toml::node_view<const toml::node> e{t};
            gateway::EndpointConfig ep;
            ep.endpoint_id = get_or<std::string>(e["id"], "", "endpoints.id");
            ep.base_url = get_or<std::string>(e["base_url"], "", "endpoints.base_url");
            ep.api_key_env = get_or<std::string>(e["api_key_env"], "", "endpoints.api_key_env");
            ep.model_name = get_or<std::string>(e["model"], "", "endpoints.model");
            ep.max_in_flight = static_cast<int>(get_or<std::int64_t>(e["max_in_flight"], ep.max_in_flight, "max_in_flight"));
            ep.timeout_ms = static_cast<int>(get_or<std::int64_t>(e["timeout_ms"], ep.timeout_ms, "timeout_ms"));
            ep.retry.max_attempts =
                static_cast<int>(get_or<std::int64_t>(e["retry"]["max_attempts"], ep.retry.max_attempts, "retry.max_attempts"));
            ep.retry.backoff_base_ms = static_cast<int>(
                get_or<std::int64_t>(e["retry"]["backoff_base_ms"], ep.retry.backoff_base_ms, "retry.backoff_base_ms"));
            ep.retry.backoff_factor =
                get_or<double>(e["retry"]["backoff_factor"], ep.retry.backoff_factor, "retry.backoff_factor");
            c.endpoints.push_back(std::move(ep));
        }
    }

    detail::read_route(r, "positive_gen", c.routes.positive_gen);
    detail::read_route(r, "negative_gen", c.routes.negative_gen);
    detail::read_route(r, "verify", c.routes.verify);
    detail::read_route(r, "rephrase", c.routes.rephrase);
    detail::read_route(r, "rerank", c.routes.rerank);
    // A single endpoint serves every stage that does not name one.
    if (c.endpoints.size() == 1) {
        for (auto* route : {&c.routes.positive_gen, &c.routes.negative_gen, &c.routes.verify, &c.routes.rephrase,
                            &c.routes.rerank})
            if (route->endpoint_id.empty()) route->endpoint_id = c.endpoints.front().endpoint_id;
    }

    auto g = r["generation"];
    c.generation.n_positive_candidates = static_cast<std::size_t>(
        get_or<std::int64_t>(g["n_positive_candidates"], static_cast<std::int64_t>(c.generation.n_positive_candidates),
                             "generation.n_positive_candidates"));
    c.generation.n_negative_variants = static_cast<std::size_t>(
        get_or<std::int64_t>(g["n_negative_variants"], static_cast<std::int64_t>(c.generation.n_negative_variants),
                             "generation.n_negative_variants"));
    c.generation.seed = static_cast<std::uint64_t>(get_or<std::int64_t>(g["seed"], 0, "generation.seed"));
    if (auto* props = g["finance_properties"].as_array()) {
        c.generation.finance_properties.clear();
        for (const auto& p : *props) {
            auto s = p.value<std::string>();
            if (!s) throw ValidationError("config: finance_properties must be strings");
            c.generation.finance_properties.push_back(parse_finance_property(*s));
        }
    }

    c.strict_ambiguous = get_or<bool>(r["verification"]["strict_ambiguous"], true, "verification.strict_ambiguous");

    auto d = r["dataset"];
    c.dataset.output_dir = base_dir / get_or<std::string>(d["output_dir"], "out", "dataset.output_dir");
    c.dataset.rephrase_fraction = get_or<double>(d["rephrase_fraction"], c.dataset.rephrase_fraction, "dataset.rephrase_fraction");
    c.dataset.seed = static_cast<std::uint64_t>(get_or<std::int64_t>(d["seed"], 0, "dataset.seed"));
    c.dataset.export_batches = get_or<bool>(d["export_batches"], true, "dataset.export_batches");
    c.dataset.batch_groups = static_cast<std::size_t>(
        get_or<std::int64_t>(d["batch_groups"], static_cast<std::int64_t>(c.dataset.batch_groups), "dataset.batch_groups"));

    auto ev = r["eval"];
    c.eval.k_rerank = static_cast<std::size_t>(get_or<std::int64_t>(ev["k_rerank"], 20, "eval.k_rerank"));
    if (auto* metrics = ev["metrics"].as_array()) {
        c.eval.metrics.clear();
        for (const auto& m : *metrics) {
            auto s = m.value<std::string>();
            if (!s) throw ValidationError("config: eval.metrics must be strings");
            c.eval.metrics.push_back(eval::parse_metric(*s));
        }
    }
    if (ev["max_regression"]) c.eval.max_regression = get_or<double>(ev["max_regression"], 0.0, "eval.max_regression");
    c.eval.top_logprobs = static_cast<int>(get_or<std::int64_t>(ev["top_logprobs"], 5, "eval.top_logprobs"));

    validate(c);
    return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    return parse_config(read_file(path), path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

}  // namespace hardneg::pipeline
