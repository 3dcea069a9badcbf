#pragma once

// Dual-prompt answerability checks and the keep/filter policies.
// Positives survive only if both prompts call them answerable; negatives
// survive only if both prompts call them unanswerable.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hardneg/corpus/json_io.hpp"
#include "hardneg/corpus/types.hpp"
#include "hardneg/gateway/gateway.hpp"
#include "hardneg/generation/generation.hpp"

namespace hardneg::verification {

enum class Answer { answerable, not_answerable, ambiguous };

namespace detail {

inline std::string_view skip_non_alnum(std::string_view s) {
    while (!s.empty() && !std::isalnum(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    return s;
}

inline std::string_view first_word(std::string_view s) {
    s = skip_non_alnum(s);
    std::size_t n = 0;
    while (n < s.size() && std::isalnum(static_cast<unsigned char>(s[n]))) ++n;
    return s.substr(0, n);
}

inline std::optional<Answer> word_answer(std::string_view word) {
    const auto w = text::to_lower(word);
    if (w == "yes") return Answer::answerable;
    if (w == "no") return Answer::not_answerable;
    return std::nullopt;
}

}  // namespace detail

// Case-insensitive "yes"/"no" as the leading token, or as the verdict on
// the last non-empty line (optionally labelled "Answer:", "Final answer:"
// or "Verdict:"). Anything else is ambiguous.
inline Answer extract_yes_no(std::string_view raw) {
    if (auto a = detail::word_answer(detail::first_word(raw))) return *a;

    std::string_view last;
    for (auto line : text::split_lines(raw)) {
        if (!text::trim(line).empty()) last = line;
    }
    auto line = detail::skip_non_alnum(last);
    for (std::string_view label : {"final answer", "answer", "verdict"}) {
        if (text::starts_with_ci(line, label)) {
            line.remove_prefix(label.size());
            break;
        }
    }
    if (auto a = detail::word_answer(detail::first_word(line))) return *a;
    return Answer::ambiguous;
}

struct Verdict {
    std::string query_id;
    PromptVariant prompt_variant = PromptVariant::A;
    bool answerable = false;
    bool ambiguous = false;
    std::string raw_text;

    friend bool operator==(const Verdict&, const Verdict&) = default;
};

inline ojson to_json(const Verdict& v) {
    ojson j;
    j["query_id"] = v.query_id;
    j["prompt_variant"] = to_string(v.prompt_variant);
    j["answerable"] = v.answerable;
    j["ambiguous"] = v.ambiguous;
    j["raw_text"] = v.raw_text;
    return j;
}

inline generation::TemplateId template_for(PromptVariant v) {
    return v == PromptVariant::A ? generation::TemplateId::verify_A : generation::TemplateId::verify_B;
}

inline gateway::ChatRequest verification_request(const gateway::ImagePart& image, const QueryRecord& query,
                                                 PromptVariant variant, const generation::PromptLibrary& prompts,
                                                 const generation::StageRoute& route) {
    const auto id = template_for(variant);
    return generation::make_request(route, std::string(generation::to_string(id)),
                                    prompts.get(id).render({{"query", query.text}}), &image);
}

// Ambiguous replies resolve toward dropping the candidate: answerable for
// negatives, unanswerable for positives.
inline Verdict verdict_from_completion(const QueryRecord& query, PromptVariant variant, std::string raw) {
    Verdict v{query.query_id, variant, false, false, std::move(raw)};
    switch (extract_yes_no(v.raw_text)) {
        case Answer::answerable: v.answerable = true; break;
        case Answer::not_answerable: v.answerable = false; break;
        case Answer::ambiguous:
            v.ambiguous = true;
            v.answerable = query.polarity == Polarity::negative;
            break;
    }
    return v;
}

inline Verdict judge_answerability(const PageRecord& page, const QueryRecord& query, PromptVariant variant,
                                   gateway::Gateway& gw, const generation::PromptLibrary& prompts,
                                   const generation::StageRoute& route) {
    if (query.page_id != page.page_id)
        throw ValidationError("query " + query.query_id + " is not anchored to page " + page.page_id);
    const auto image = gateway::load_image(page.image_path);
    std::string raw;
    try {
        raw = gw.complete(verification_request(image, query, variant, prompts, route));
    } catch (const gateway::GatewayError& e) {
        throw generation::StageError(page.page_id, "verification of " + query.query_id + " failed: " + e.what());
    }
    return verdict_from_completion(query, variant, std::move(raw));
}

struct VerdictPair {
    std::optional<bool> a;
    std::optional<bool> b;
};

inline void require_both(const VerdictPair& v) {
    if (!v.a || !v.b) throw ValidationError(std::string("missing verdict for prompt ") + (v.a ? "B" : "A"));
}

inline bool keep_positive(const VerdictPair& v) {
    require_both(v);
    return *v.a && *v.b;
}

inline bool keep_negative(const VerdictPair& v) {
    require_both(v);
    return !*v.a && !*v.b;
}

// Records both verdicts on `query` and sets kept/rejected by its polarity.
inline void apply_verdicts(QueryRecord& query, const Verdict& a, const Verdict& b) {
    if (a.prompt_variant != PromptVariant::A || b.prompt_variant != PromptVariant::B)
        throw ValidationError("verdicts must be supplied as (A, B)");
    query.verdicts = {{PromptVariant::A, a.answerable}, {PromptVariant::B, b.answerable}};
    const VerdictPair pair{a.answerable, b.answerable};
    const bool keep = query.polarity == Polarity::positive ? keep_positive(pair) : keep_negative(pair);
    query.verification = keep ? Verification::kept : Verification::rejected;
}

// Picks k negatives: round-robin over property tags in order of first
// appearance, starting at bucket `rotation` mod the bucket count (generic
// negatives share one untagged bucket, which reduces to the first k in
// generation order). Returns nullopt when fewer than k exist.
inline std::optional<std::vector<QueryRecord>> select_triplet_negatives(std::span<const QueryRecord> kept,
                                                                        std::size_t k = kNegativesPerTriplet,
                                                                        std::size_t rotation = 0) {
    if (kept.size() < k) return std::nullopt;
    if (k == 0) return std::vector<QueryRecord>{};
    std::vector<std::optional<FinanceProperty>> order;
    std::vector<std::vector<const QueryRecord*>> buckets;
    for (const auto& q : kept) {
        auto it = std::find(order.begin(), order.end(), q.property);
        if (it == order.end()) {
            order.push_back(q.property);
            buckets.emplace_back();
            it = order.end() - 1;
        }
        buckets[static_cast<std::size_t>(it - order.begin())].push_back(&q);
    }
    std::rotate(buckets.begin(), buckets.begin() + static_cast<std::ptrdiff_t>(rotation % buckets.size()),
                buckets.end());
    std::vector<QueryRecord> out;
    for (std::size_t round = 0; out.size() < k; ++round) {
        for (const auto& bucket : buckets) {
            if (round < bucket.size() && out.size() < k) out.push_back(*bucket[round]);
        }
    }
    return out;
}

}  // namespace hardneg::verification
