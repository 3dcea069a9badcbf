#pragma once

// JSON encodings of the corpus types. Writers emit keys in a fixed order
// (ordered_json) so identical inputs give byte-identical files.

#include <nlohmann/json.hpp>

#include "hardneg/corpus/types.hpp"

namespace hardneg {

using ojson = nlohmann::ordered_json;

namespace detail {

template <typename J>
const J& require(const J& j, const char* key) {
    if (!j.is_object()) throw ValidationError("expected a JSON object");
    auto it = j.find(key);
    if (it == j.end()) throw ValidationError(std::string("missing field '") + key + "'");
    return *it;
}

template <typename J>
std::string require_string(const J& j, const char* key) {
    const auto& v = require(j, key);
    if (!v.is_string()) throw ValidationError(std::string("field '") + key + "' must be a string");
    return v.template get<std::string>();
}

template <typename J>
std::optional<std::string> optional_string(const J& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw ValidationError(std::string("field '") + key + "' must be a string");
    return it->template get<std::string>();
}

template <typename J>
std::uint64_t require_count(const J& j, const char* key) {
    const auto& v = require(j, key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.template get<std::int64_t>() >= 0))
        throw ValidationError(std::string("field '") + key + "' must be a non-negative integer");
    return v.template get<std::uint64_t>();
}

}  // namespace detail

inline ojson to_json(const PageRecord& p) {
    ojson meta = ojson::object();
    for (const auto& [k, v] : p.meta) meta[k] = v;
    return ojson{{"page_id", p.page_id}, {"image_path", p.image_path}, {"corpus", p.corpus}, {"meta", meta}};
}

template <typename J>
PageRecord page_from_json(const J& j) {
    PageRecord p;
    p.page_id = detail::require_string(j, "page_id");
    p.image_path = detail::require_string(j, "image_path");
    p.corpus = detail::optional_string(j, "corpus").value_or("");
    if (auto it = j.find("meta"); it != j.end() && !it->is_null()) {
        if (!it->is_object()) throw ValidationError("field 'meta' must be an object");
        for (auto m = it->begin(); m != it->end(); ++m) {
            p.meta[m.key()] = m.value().is_string() ? m.value().template get<std::string>() : m.value().dump();
        }
    }
    return p;
}

inline ojson to_json(const QueryRecord& q) {
    ojson verdicts = ojson::array();
    for (const auto& v : q.verdicts)
        verdicts.push_back({{"prompt_variant", to_string(v.prompt_variant)}, {"answerable", v.answerable}});
    ojson j;
    j["query_id"] = q.query_id;
    j["page_id"] = q.page_id;
    j["text"] = q.text;
    j["polarity"] = to_string(q.polarity);
    j["kind"] = to_string(q.kind);
    j["property"] = q.property ? ojson(to_string(*q.property)) : ojson(nullptr);
    j["parent_query_id"] = q.parent_query_id ? ojson(*q.parent_query_id) : ojson(nullptr);
    j["verification"] = to_string(q.verification);
    j["verdicts"] = std::move(verdicts);
    return j;
}

template <typename J>
QueryRecord query_from_json(const J& j) {
    QueryRecord q;
    q.query_id = detail::require_string(j, "query_id");
    q.page_id = detail::require_string(j, "page_id");
    q.text = detail::require_string(j, "text");
    q.polarity = parse_polarity(detail::require_string(j, "polarity"));
    q.kind = parse_query_kind(detail::require_string(j, "kind"));
    if (auto p = detail::optional_string(j, "property")) q.property = parse_finance_property(*p);
    q.parent_query_id = detail::optional_string(j, "parent_query_id");
    q.verification = parse_verification(detail::optional_string(j, "verification").value_or("unverified"));
    if (auto it = j.find("verdicts"); it != j.end() && !it->is_null()) {
        if (!it->is_array()) throw ValidationError("field 'verdicts' must be an array");
        for (const auto& v : *it) {
            const auto& a = detail::require(v, "answerable");
            if (!a.is_boolean()) throw ValidationError("verdict 'answerable' must be a boolean");
            q.verdicts.push_back(
                {parse_prompt_variant(detail::require_string(v, "prompt_variant")), a.template get<bool>()});
        }
    }
    return q;
}

inline ojson to_json(const TripletRecord& t) {
    ojson negatives = ojson::array();
    for (const auto& n : t.negatives) negatives.push_back(to_json(n));
    ojson j;
    j["page_id"] = t.page_id;
    j["image_path"] = t.image_path;
    j["positive"] = to_json(t.positive);
    j["negatives"] = std::move(negatives);
    return j;
}

template <typename J>
TripletRecord triplet_from_json(const J& j) {
    TripletRecord t;
    t.page_id = detail::require_string(j, "page_id");
    t.image_path = detail::optional_string(j, "image_path").value_or("");
    t.positive = query_from_json(detail::require(j, "positive"));
    const auto& negs = detail::require(j, "negatives");
    if (!negs.is_array()) throw ValidationError("field 'negatives' must be an array");
    for (const auto& n : negs) t.negatives.push_back(query_from_json(n));
    return t;
}

inline ojson to_json(const DatasetManifest& m) {
    ojson sources = ojson::array();
    for (const auto& s : m.sources)
        sources.push_back({{"source_name", s.source_name}, {"positive_count", s.positive_count}});
    ojson j;
    j["name"] = m.name;
    j["sources"] = std::move(sources);
    j["total_positives"] = m.total_positives;
    j["total_examples"] = m.total_examples;
    j["rephrase_fraction"] = m.rephrase_fraction;
    j["seed"] = m.seed;
    return j;
}

template <typename J>
DatasetManifest manifest_from_json(const J& j) {
    DatasetManifest m;
    m.name = detail::require_string(j, "name");
    const auto& sources = detail::require(j, "sources");
    if (!sources.is_array()) throw ValidationError("field 'sources' must be an array");
    for (const auto& s : sources)
        m.sources.push_back({detail::require_string(s, "source_name"), detail::require_count(s, "positive_count")});
    m.total_positives = detail::require_count(j, "total_positives");
    m.total_examples = detail::require_count(j, "total_examples");
    const auto& frac = detail::require(j, "rephrase_fraction");
    if (!frac.is_number()) throw ValidationError("field 'rephrase_fraction' must be a number");
    m.rephrase_fraction = frac.template get<double>();
    if (m.rephrase_fraction < 0.0 || m.rephrase_fraction > 1.0)
        throw ValidationError("rephrase_fraction must lie in [0,1]");
    m.seed = detail::require_count(j, "seed");
    return m;
}

}  // namespace hardneg
