#pragma once

// Prompt templates are plain-text assets named "<template_id>.<version>.txt"
// with {placeholder} slots, so wording can change without a rebuild.

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "hardneg/corpus/jsonl.hpp"
#include "hardneg/corpus/types.hpp"

namespace hardneg::generation {

enum class TemplateId {
    positive_gen,
    negative_gen_generic,
    negative_gen_finance,
    rephrase,
    verify_A,
    verify_B,
    rerank,
};

inline constexpr std::array<TemplateId, 7> kAllTemplates = {
    TemplateId::positive_gen, TemplateId::negative_gen_generic, TemplateId::negative_gen_finance,
    TemplateId::rephrase,     TemplateId::verify_A,             TemplateId::verify_B,
    TemplateId::rerank,
};

inline std::string_view to_string(TemplateId id) {
    switch (id) {
        case TemplateId::positive_gen: return "positive_gen";
        case TemplateId::negative_gen_generic: return "negative_gen_generic";
        case TemplateId::negative_gen_finance: return "negative_gen_finance";
        case TemplateId::rephrase: return "rephrase";
        case TemplateId::verify_A: return "verify_A";
        case TemplateId::verify_B: return "verify_B";
        case TemplateId::rerank: return "rerank";
    }
    return "positive_gen";
}

inline std::vector<std::string_view> required_placeholders(TemplateId id) {
    switch (id) {
        case TemplateId::positive_gen: return {"n_candidates"};
        case TemplateId::negative_gen_generic: return {"query", "n_candidates"};
        case TemplateId::negative_gen_finance: return {"query", "property_desc"};
        case TemplateId::rephrase:
        case TemplateId::verify_A:
        case TemplateId::verify_B:
        case TemplateId::rerank: return {"query"};
    }
    return {};
}

// Human-readable description bound to {property_desc}.
inline std::string_view property_description(FinanceProperty p) {
    switch (p) {
        case FinanceProperty::year:
            return "the year or reporting period (for example 2022 becomes 2024)";
        case FinanceProperty::company_name:
            return "the company name (for example Apple becomes IBM)";
        case FinanceProperty::numerical_value:
            return "a numerical value such as a price, an amount or a percentage";
        case FinanceProperty::financial_metric:
            return "the financial metric, such as revenue, sales or acquisitions";
        case FinanceProperty::subject_metric:
            return "the subject being measured, such as dividends, stocks or options";
        case FinanceProperty::business_segment:
            return "the business segment, such as cloud, software or manufacturing";
    }
    return "";
}

using Bindings = std::map<std::string, std::string, std::less<>>;

// Names of every {identifier} slot in `body`, in order of appearance.
inline std::vector<std::string> placeholders_in(std::string_view body) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < body.size(); ++i) {
        if (body[i] != '{') continue;
        std::size_t j = i + 1;
        while (j < body.size() && (std::isalnum(static_cast<unsigned char>(body[j])) || body[j] == '_')) ++j;
        if (j < body.size() && body[j] == '}' && j > i + 1 &&
            !std::isdigit(static_cast<unsigned char>(body[i + 1]))) {
            out.emplace_back(body.substr(i + 1, j - i - 1));
            i = j;
        }
    }
    return out;
}

struct PromptTemplate {
    TemplateId id = TemplateId::positive_gen;
    std::string body;
    std::string version;

    // Single pass: bound values are copied verbatim and never rescanned, so
    // braces inside a query cannot be mistaken for slots.
    [[nodiscard]] std::string render(const Bindings& bindings) const {
        for (auto name : required_placeholders(id)) {
            if (bindings.find(name) == bindings.end())
                throw ValidationError("template " + std::string(to_string(id)) + ": missing binding {" +
                                      std::string(name) + "}");
        }
        std::string out;
        out.reserve(body.size() + 256);
        for (std::size_t i = 0; i < body.size(); ++i) {
            if (body[i] == '{') {
                std::size_t j = i + 1;
                while (j < body.size() && (std::isalnum(static_cast<unsigned char>(body[j])) || body[j] == '_')) ++j;
                if (j < body.size() && body[j] == '}' && j > i + 1 &&
                    !std::isdigit(static_cast<unsigned char>(body[i + 1]))) {
                    const auto name = std::string_view(body).substr(i + 1, j - i - 1);
                    auto it = bindings.find(name);
                    if (it == bindings.end())
                        throw ValidationError("template " + std::string(to_string(id)) + ": unbound placeholder {" +
                                              std::string(name) + "}");
                    out += it->second;
                    i = j;
                    continue;
                }
            }
            out.push_back(body[i]);
        }
        return out;
    }
};

inline void validate(const PromptTemplate& t) {
    const auto present = placeholders_in(t.body);
    for (auto name : required_placeholders(t.id)) {
        if (std::find(present.begin(), present.end(), name) == present.end())
            throw ValidationError("template " + std::string(to_string(t.id)) + "." + t.version +
                                  " lacks placeholder {" + std::string(name) + "}");
    }
}

class PromptLibrary {
public:
    PromptLibrary() = default;

    static PromptLibrary load(const std::filesystem::path& dir, const std::string& version = "v1") {
        PromptLibrary lib;
        for (auto id : kAllTemplates) {
            const auto path = dir / (std::string(to_string(id)) + "." + version + ".txt");
            PromptTemplate t{id, read_file(path), version};
            validate(t);
            lib.templates_[id] = std::move(t);
        }
        return lib;
    }

    void set(PromptTemplate t) {
        validate(t);
        templates_[t.id] = std::move(t);
    }

    [[nodiscard]] const PromptTemplate& get(TemplateId id) const {
        auto it = templates_.find(id);
        if (it == templates_.end()) throw ValidationError("no template loaded for " + std::string(to_string(id)));
        return it->second;
    }

private:
    std::map<TemplateId, PromptTemplate> templates_;
};

}  // namespace hardneg::generation
