#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "hardneg/corpus/types.hpp"
#include "hardneg/text.hpp"

namespace hardneg {

inline bool has_verdict(const QueryRecord& q, PromptVariant v) {
    return std::any_of(q.verdicts.begin(), q.verdicts.end(),
                       [v](const VerdictEntry& e) { return e.prompt_variant == v; });
}

inline std::vector<std::string> query_violations(const QueryRecord& q) {
    std::vector<std::string> out;
    const auto where = "query " + q.query_id + ": ";
    if (q.query_id.empty()) out.push_back("query_id: must be non-empty");
    if (q.page_id.empty()) out.push_back(where + "page_id: must be non-empty");
    if (text::normalize_ws(q.text).empty()) out.push_back(where + "text: must be non-empty");

    const bool is_negative_kind =
        q.kind == QueryKind::generic_negative || q.kind == QueryKind::finance_negative;
    if (is_negative_kind) {
        if (q.polarity != Polarity::negative)
            out.push_back(where + "polarity: " + std::string(to_string(q.kind)) + " must be negative");
        if (!q.parent_query_id) out.push_back(where + "parent_query_id: required for negatives");
    }
    if (q.kind == QueryKind::generated_positive && q.polarity != Polarity::positive)
        out.push_back(where + "polarity: generated-positive must be positive");
    if (q.kind == QueryKind::rephrased_positive) {
        if (q.polarity != Polarity::positive)
            out.push_back(where + "polarity: rephrased-positive must be positive");
        if (!q.parent_query_id) out.push_back(where + "parent_query_id: required for rephrasings");
    }
    if (q.property.has_value() != (q.kind == QueryKind::finance_negative))
        out.push_back(where + "property: set iff kind is finance-negative");
    if (q.verification == Verification::kept &&
        !(has_verdict(q, PromptVariant::A) && has_verdict(q, PromptVariant::B)))
        out.push_back(where + "verdicts: kept queries need both A and B verdicts");
    return out;
}

// Lineage id a negative must point at. A rephrased positive stands in for
// its parent, so negatives generated from the parent remain attached.
inline bool is_lineage_of(const QueryRecord& negative, const QueryRecord& positive) {
    if (!negative.parent_query_id) return false;
    if (*negative.parent_query_id == positive.query_id) return true;
    return positive.kind == QueryKind::rephrased_positive && positive.parent_query_id &&
           *negative.parent_query_id == *positive.parent_query_id;
}

inline std::vector<std::string> triplet_violations(const TripletRecord& t) {
    std::vector<std::string> out;
    const auto& pos = t.positive;
    if (t.page_id.empty()) out.push_back("page_id: must be non-empty");
    for (auto& v : query_violations(pos)) out.push_back("positive: " + v);
    if (pos.polarity != Polarity::positive) out.push_back("positive: polarity must be positive");
    if (pos.verification != Verification::kept) out.push_back("positive: verification must be kept");
    if (pos.page_id != t.page_id) out.push_back("positive: page_id must equal triplet page_id");

    if (t.negatives.size() != kNegativesPerTriplet) {
        out.push_back("negatives: expected 3, got " + std::to_string(t.negatives.size()));
    }
    std::vector<std::string> seen{text::normalize_ws(pos.text)};
    for (std::size_t i = 0; i < t.negatives.size(); ++i) {
        const auto& n = t.negatives[i];
        const auto where = "negatives[" + std::to_string(i) + "]: ";
        for (auto& v : query_violations(n)) out.push_back(where + v);
        if (n.polarity != Polarity::negative) out.push_back(where + "polarity must be negative");
        if (n.verification != Verification::kept) out.push_back(where + "verification must be kept");
        if (n.page_id != t.page_id) out.push_back(where + "page_id must equal triplet page_id");
        if (!is_lineage_of(n, pos)) out.push_back(where + "parent_query_id must be the positive's query_id");
        auto key = text::normalize_ws(n.text);
        if (std::find(seen.begin(), seen.end(), key) != seen.end())
            out.push_back(where + "text duplicates the positive or another negative");
        seen.push_back(std::move(key));
    }
    return out;
}

inline std::string join_violations(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& e : v) {
        if (!s.empty()) s += "; ";
        s += e;
    }
    return s;
}

inline void validate(const TripletRecord& t) {
    if (auto v = triplet_violations(t); !v.empty())
        throw ValidationError("triplet " + t.page_id + ": " + join_violations(v));
}

inline void validate(const QueryRecord& q) {
    if (auto v = query_violations(q); !v.empty()) throw ValidationError(join_violations(v));
}

}  // namespace hardneg
