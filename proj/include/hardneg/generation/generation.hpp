#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "hardneg/corpus/json_io.hpp"
#include "hardneg/corpus/types.hpp"
#include "hardneg/gateway/gateway.hpp"
#include "hardneg/gateway/image.hpp"
#include "hardneg/generation/parse.hpp"
#include "hardneg/generation/prompts.hpp"

namespace hardneg::generation {

struct GenerationParams {
    std::size_t n_positive_candidates = 10;
    std::size_t n_negative_variants = 12;
    std::vector<FinanceProperty> finance_properties{kAllFinanceProperties.begin(), kAllFinanceProperties.end()};
    std::uint64_t seed = 0;
};

inline void validate(const GenerationParams& p) {
    if (p.n_positive_candidates < 1) throw ValidationError("n_positive_candidates must be positive");
    if (p.n_negative_variants < kNegativesPerTriplet)
        throw ValidationError("n_negative_variants must be >= 3 so a triplet can survive verification");
    if (p.finance_properties.empty()) throw ValidationError("finance_properties must not be empty");
    std::set<FinanceProperty> unique(p.finance_properties.begin(), p.finance_properties.end());
    if (unique.size() != p.finance_properties.size()) throw ValidationError("finance_properties has duplicates");
}

// Which endpoint serves a stage, and with what decoding settings.
struct StageRoute {
    std::string endpoint_id;
    double temperature = 0.0;
    int max_tokens = 512;
};

// Generation stages sample mildly for variety; verification and scoring
// decode greedily.
struct Routes {
    StageRoute positive_gen{"", 0.7, 1024};
    StageRoute negative_gen{"", 0.7, 1024};
    StageRoute verify{"", 0.0, 64};
    StageRoute rephrase{"", 0.7, 256};
    StageRoute rerank{"", 0.0, 1};
};

// Monotone counters, emitted as the stage summary.
struct StageStats {
    std::map<std::string, std::uint64_t> counters;

    void add(const std::string& key, std::uint64_t n = 1) { counters[key] += n; }
    [[nodiscard]] std::uint64_t get(const std::string& key) const {
        auto it = counters.find(key);
        return it == counters.end() ? 0 : it->second;
    }
    void merge(const StageStats& other) {
        for (const auto& [k, v] : other.counters) counters[k] += v;
    }
    [[nodiscard]] ojson to_json() const {
        ojson j = ojson::object();
        for (const auto& [k, v] : counters) j[k] = v;
        return j;
    }
};

// A stage failed for one page; carries the page for reporting.
class StageError : public Error {
public:
    StageError(std::string page_id, const std::string& what)
        : Error("page " + page_id + ": " + what), page_id_(std::move(page_id)) {}
    [[nodiscard]] const std::string& page_id() const noexcept { return page_id_; }

private:
    std::string page_id_;
};

inline gateway::ChatRequest make_request(const StageRoute& route, std::string tag, std::string prompt,
                                         const gateway::ImagePart* image = nullptr) {
    gateway::ChatRequest r;
    r.endpoint_id = route.endpoint_id;
    r.temperature = route.temperature;
    r.max_tokens = route.max_tokens;
    r.request_tag = std::move(tag);
    gateway::Message m;
    if (image) m.parts.emplace_back(*image);
    m.parts.emplace_back(gateway::TextPart{std::move(prompt)});
    r.messages.push_back(std::move(m));
    return r;
}

inline void require_kept_positive(const QueryRecord& q) {
    if (q.polarity != Polarity::positive || q.verification != Verification::kept)
        throw ValidationError("query " + q.query_id + " must be a kept positive");
}

// ---- positive candidates ---------------------------------------------------

inline gateway::ChatRequest positive_request(const gateway::ImagePart& image, const GenerationParams& params,
                                             const PromptLibrary& prompts, const StageRoute& route) {
    auto prompt = prompts.get(TemplateId::positive_gen)
                      .render({{"n_candidates", std::to_string(params.n_positive_candidates)}});
    return make_request(route, std::string(to_string(TemplateId::positive_gen)), std::move(prompt), &image);
}

inline std::vector<QueryRecord> positives_from_completion(const PageRecord& page, std::string_view completion,
                                                          const GenerationParams& params, StageStats& stats) {
    std::vector<QueryRecord> out;
    std::set<std::string> seen;
    auto parsed = parse_query_list(completion);
    stats.add("positive_gen.parsed", parsed.size());
    for (auto& text : parsed) {
        if (!seen.insert(text::normalize_ws(text)).second) {
            stats.add("positive_gen.duplicates");
            continue;
        }
        if (out.size() == params.n_positive_candidates) {
            stats.add("positive_gen.over_limit");
            continue;
        }
        QueryRecord q;
        q.query_id = page.page_id + "#p" + std::to_string(out.size());
        q.page_id = page.page_id;
        q.text = std::move(text);
        q.polarity = Polarity::positive;
        q.kind = QueryKind::generated_positive;
        out.push_back(std::move(q));
    }
    if (out.empty()) spdlog::warn("page {}: no parseable positive queries", page.page_id);
    return out;
}

inline std::vector<QueryRecord> generate_positive_candidates(const PageRecord& page, const GenerationParams& params,
                                                             gateway::Gateway& gw, const PromptLibrary& prompts,
                                                             const StageRoute& route, StageStats& stats) {
    const auto image = gateway::load_image(page.image_path);
    std::string completion;
    try {
        completion = gw.complete(positive_request(image, params, prompts, route));
    } catch (const gateway::GatewayError& e) {
        throw StageError(page.page_id, e.what());
    }
    return positives_from_completion(page, completion, params, stats);
}

// ---- generic hard negatives ------------------------------------------------

inline gateway::ChatRequest generic_negative_request(const QueryRecord& positive, const GenerationParams& params,
                                                     const PromptLibrary& prompts, const StageRoute& route) {
    auto prompt = prompts.get(TemplateId::negative_gen_generic)
                      .render({{"query", positive.text}, {"n_candidates", std::to_string(params.n_negative_variants)}});
    return make_request(route, std::string(to_string(TemplateId::negative_gen_generic)), std::move(prompt));
}

inline std::vector<QueryRecord> negatives_from_completion(const QueryRecord& positive, std::string_view completion,
                                                          const GenerationParams& params, StageStats& stats) {
    std::vector<QueryRecord> out;
    const auto positive_key = text::normalize_ws(positive.text);
    std::set<std::string> seen;
    auto parsed = parse_query_list(completion);
    if (parsed.empty()) spdlog::warn("query {}: empty negative generation reply", positive.query_id);
    stats.add("negative_gen_generic.parsed", parsed.size());
    for (auto& text : parsed) {
        auto key = text::normalize_ws(text);
        if (key == positive_key) {
            stats.add("negative_gen_generic.dropped_equal_positive");
            continue;
        }
        if (!seen.insert(std::move(key)).second) {
            stats.add("negative_gen_generic.duplicates");
            continue;
        }
        if (out.size() == params.n_negative_variants) {
            stats.add("negative_gen_generic.over_limit");
            continue;
        }
        QueryRecord q;
        q.query_id = positive.query_id + "#n" + std::to_string(out.size());
        q.page_id = positive.page_id;
        q.text = std::move(text);
        q.polarity = Polarity::negative;
        q.kind = QueryKind::generic_negative;
        q.parent_query_id = positive.query_id;
        out.push_back(std::move(q));
    }
    return out;
}

inline std::vector<QueryRecord> generate_negative_variants(const QueryRecord& positive, const GenerationParams& params,
                                                           gateway::Gateway& gw, const PromptLibrary& prompts,
                                                           const StageRoute& route, StageStats& stats) {
    require_kept_positive(positive);
    std::string completion;
    try {
        completion = gw.complete(generic_negative_request(positive, params, prompts, route));
    } catch (const gateway::GatewayError& e) {
        throw StageError(positive.page_id, e.what());
    }
    return negatives_from_completion(positive, completion, params, stats);
}

// ---- finance single-property negatives ----------------------------------------

inline gateway::ChatRequest finance_request(const QueryRecord& positive, FinanceProperty property,
                                            const PromptLibrary& prompts, const StageRoute& route) {
    auto prompt = prompts.get(TemplateId::negative_gen_finance)
                      .render({{"query", positive.text}, {"property_desc", std::string(property_description(property))}});
    return make_request(route, std::string(to_string(TemplateId::negative_gen_finance)), std::move(prompt));
}

// One request per configured property, in configuration order.
inline std::vector<gateway::ChatRequest> finance_requests(const QueryRecord& positive, const GenerationParams& params,
                                                          const PromptLibrary& prompts, const StageRoute& route) {
    std::vector<gateway::ChatRequest> out;
    for (auto p : params.finance_properties) out.push_back(finance_request(positive, p, prompts, route));
    return out;
}

// Folds one property's reply into `variants`, dropping echoes of the
// positive and duplicates of earlier variants.
inline void add_finance_variant(const QueryRecord& positive, FinanceProperty property, std::string_view completion,
                                std::vector<QueryRecord>& variants, StageStats& stats) {
    auto text = parse_single_query(completion);
    if (text.empty()) {
        stats.add("negative_gen_finance.empty");
        return;
    }
    if (text::same_query(text, positive.text)) {
        stats.add("negative_gen_finance.dropped_equal_positive");
        return;
    }
    for (const auto& v : variants) {
        if (text::same_query(v.text, text)) {
            stats.add("negative_gen_finance.duplicates");
            return;
        }
    }
    QueryRecord q;
    q.query_id = positive.query_id + "#f-" + std::string(to_string(property));
    q.page_id = positive.page_id;
    q.text = std::move(text);
    q.polarity = Polarity::negative;
    q.kind = QueryKind::finance_negative;
    q.property = property;
    q.parent_query_id = positive.query_id;
    variants.push_back(std::move(q));
}

struct FinanceResult {
    std::vector<QueryRecord> variants;
    std::vector<FinanceProperty> failed_properties;

    // The stage only succeeds when a triplet remains possible.
    [[nodiscard]] bool succeeded() const noexcept { return variants.size() >= kNegativesPerTriplet; }
};

inline FinanceResult generate_finance_variants(const QueryRecord& positive, const GenerationParams& params,
                                               gateway::Gateway& gw, const PromptLibrary& prompts,
                                               const StageRoute& route, StageStats& stats) {
    require_kept_positive(positive);
    FinanceResult result;
    const auto requests = finance_requests(positive, params, prompts, route);
    const auto outcomes = gw.complete_many(requests);
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const auto property = params.finance_properties[i];
        if (!outcomes[i].ok()) {
            stats.add("negative_gen_finance.failed");
            result.failed_properties.push_back(property);
            continue;
        }
        add_finance_variant(positive, property, outcomes[i].completion->text, result.variants, stats);
    }
    return result;
}

// ---- rephrasing --------------------------------------------------------------

inline gateway::ChatRequest rephrase_request(const QueryRecord& positive, const PromptLibrary& prompts,
                                             const StageRoute& route) {
    auto prompt = prompts.get(TemplateId::rephrase).render({{"query", positive.text}});
    return make_request(route, std::string(to_string(TemplateId::rephrase)), std::move(prompt));
}

struct RephraseResult {
    QueryRecord record;  // the rephrasing, or the untouched parent
    bool rephrased = false;
    bool noop = false;   // model echoed the parent
    std::string warning;
};

inline RephraseResult rephrase_from_completion(const QueryRecord& positive, std::string_view completion) {
    RephraseResult r{positive, false, false, {}};
    auto text = parse_single_query(completion);
    if (text.empty()) {
        r.warning = "empty rephrasing for " + positive.query_id;
        spdlog::warn("{}", r.warning);
        return r;
    }
    if (text::same_query(text, positive.text)) {
        r.noop = true;
        return r;
    }
    QueryRecord q;
    q.query_id = positive.query_id + "#r";
    q.page_id = positive.page_id;
    q.text = std::move(text);
    q.polarity = Polarity::positive;
    q.kind = QueryKind::rephrased_positive;
    q.parent_query_id = positive.query_id;
    r.record = std::move(q);
    r.rephrased = true;
    return r;
}

inline RephraseResult rephrase_positive(const QueryRecord& positive, gateway::Gateway& gw,
                                        const PromptLibrary& prompts, const StageRoute& route) {
    require_kept_positive(positive);
    try {
        return rephrase_from_completion(positive, gw.complete(rephrase_request(positive, prompts, route)));
    } catch (const gateway::GatewayError& e) {
        RephraseResult r{positive, false, false, {}};
        r.warning = "rephrase failed for " + positive.query_id + ": " + e.what();
        spdlog::warn("{}", r.warning);
        return r;
    }
}

// Deterministic split: ids sorted, stride round(1/fraction) with a
// seed-derived phase, truncated to floor(fraction * n). When the stride
// under-fills (fraction not a unit fraction) the earliest unpicked indices
// top it up, so the size is exactly floor(fraction * n) for every fraction.
inline std::vector<std::size_t> rephrase_selection_indices(std::size_t n, double fraction, std::uint64_t seed) {
    if (fraction < 0.0 || fraction > 1.0) throw ValidationError("rephrase fraction must lie in [0,1]");
    const auto target = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
    std::vector<std::size_t> picked;
    if (target == 0) return picked;
    const auto stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(1.0 / fraction)));
    const auto phase = static_cast<std::size_t>(seed % stride);
    std::vector<bool> taken(n, false);
    for (std::size_t i = 0; i < n && picked.size() < target; ++i) {
        if ((i + phase) % stride == 0) {
            picked.push_back(i);
            taken[i] = true;
        }
    }
    for (std::size_t i = 0; i < n && picked.size() < target; ++i) {
        if (!taken[i]) picked.push_back(i);
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

inline std::vector<QueryRecord> select_for_rephrasing(std::span<const QueryRecord> positives, double fraction,
                                                      std::uint64_t seed) {
    std::vector<QueryRecord> sorted(positives.begin(), positives.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const QueryRecord& a, const QueryRecord& b) { return a.query_id < b.query_id; });
    std::vector<QueryRecord> out;
    for (auto i : rephrase_selection_indices(sorted.size(), fraction, seed)) out.push_back(sorted[i]);
    return out;
}

}  // namespace hardneg::generation
