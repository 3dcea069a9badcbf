#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hardneg/error.hpp"

namespace hardneg {

// A document page: the anchor of every pipeline stage.
struct PageRecord {
    std::string page_id;
    std::string image_path;
    std::string corpus;
    std::map<std::string, std::string> meta;

    friend bool operator==(const PageRecord&, const PageRecord&) = default;
};

enum class Polarity { positive, negative };

enum class QueryKind {
    generated_positive,
    generic_negative,
    finance_negative,
    rephrased_positive,
    imported,
};

enum class FinanceProperty {
    year,
    company_name,
    numerical_value,
    financial_metric,
    subject_metric,
    business_segment,
};

inline constexpr std::array<FinanceProperty, 6> kAllFinanceProperties = {
    FinanceProperty::year,           FinanceProperty::company_name,
    FinanceProperty::numerical_value, FinanceProperty::financial_metric,
    FinanceProperty::subject_metric, FinanceProperty::business_segment,
};

enum class Verification { unverified, kept, rejected };

enum class PromptVariant { A, B };

struct VerdictEntry {
    PromptVariant prompt_variant = PromptVariant::A;
    bool answerable = false;

    friend bool operator==(const VerdictEntry&, const VerdictEntry&) = default;
};

struct QueryRecord {
    std::string query_id;
    std::string page_id;
    std::string text;
    Polarity polarity = Polarity::positive;
    QueryKind kind = QueryKind::imported;
    std::optional<FinanceProperty> property;
    std::optional<std::string> parent_query_id;
    Verification verification = Verification::unverified;
    std::vector<VerdictEntry> verdicts;

    friend bool operator==(const QueryRecord&, const QueryRecord&) = default;
};

// One page, one verified positive, exactly three verified hard negatives.
// `image_path` is carried so downstream exports do not need the corpus file.
struct TripletRecord {
    std::string page_id;
    std::string image_path;
    QueryRecord positive;
    std::vector<QueryRecord> negatives;

    friend bool operator==(const TripletRecord&, const TripletRecord&) = default;
};

inline constexpr std::size_t kNegativesPerTriplet = 3;
inline constexpr std::size_t kExamplesPerGroup = 1 + kNegativesPerTriplet;

struct SourceCount {
    std::string source_name;
    std::uint64_t positive_count = 0;

    friend bool operator==(const SourceCount&, const SourceCount&) = default;
};

struct DatasetManifest {
    std::string name;
    std::vector<SourceCount> sources;
    std::uint64_t total_positives = 0;
    std::uint64_t total_examples = 0;
    double rephrase_fraction = 0.0;
    std::uint64_t seed = 0;

    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

// ---- enum <-> string -------------------------------------------------------

inline std::string_view to_string(Polarity p) {
    return p == Polarity::positive ? "positive" : "negative";
}

inline std::string_view to_string(QueryKind k) {
    switch (k) {
        case QueryKind::generated_positive: return "generated-positive";
        case QueryKind::generic_negative: return "generic-negative";
        case QueryKind::finance_negative: return "finance-negative";
        case QueryKind::rephrased_positive: return "rephrased-positive";
        case QueryKind::imported: return "imported";
    }
    return "imported";
}

inline std::string_view to_string(FinanceProperty p) {
    switch (p) {
        case FinanceProperty::year: return "year";
        case FinanceProperty::company_name: return "company_name";
        case FinanceProperty::numerical_value: return "numerical_value";
        case FinanceProperty::financial_metric: return "financial_metric";
        case FinanceProperty::subject_metric: return "subject_metric";
        case FinanceProperty::business_segment: return "business_segment";
    }
    return "year";
}

inline std::string_view to_string(Verification v) {
    switch (v) {
        case Verification::unverified: return "unverified";
        case Verification::kept: return "kept";
        case Verification::rejected: return "rejected";
    }
    return "unverified";
}

inline std::string_view to_string(PromptVariant v) { return v == PromptVariant::A ? "A" : "B"; }

inline Polarity parse_polarity(std::string_view s) {
    if (s == "positive") return Polarity::positive;
    if (s == "negative") return Polarity::negative;
    throw ValidationError("unknown polarity '" + std::string(s) + "'");
}

inline QueryKind parse_query_kind(std::string_view s) {
    for (auto k : {QueryKind::generated_positive, QueryKind::generic_negative,
                   QueryKind::finance_negative, QueryKind::rephrased_positive, QueryKind::imported}) {
        if (to_string(k) == s) return k;
    }
    throw ValidationError("unknown query kind '" + std::string(s) + "'");
}

inline FinanceProperty parse_finance_property(std::string_view s) {
    for (auto p : kAllFinanceProperties) {
        if (to_string(p) == s) return p;
    }
    throw ValidationError("unknown finance property '" + std::string(s) + "'");
}

inline Verification parse_verification(std::string_view s) {
    for (auto v : {Verification::unverified, Verification::kept, Verification::rejected}) {
        if (to_string(v) == s) return v;
    }
    throw ValidationError("unknown verification state '" + std::string(s) + "'");
}

inline PromptVariant parse_prompt_variant(std::string_view s) {
    if (s == "A") return PromptVariant::A;
    if (s == "B") return PromptVariant::B;
    throw ValidationError("unknown prompt variant '" + std::string(s) + "'");
}

}  // namespace hardneg
