#pragma once

// Training examples, dataset mixes and batch packing. A "group" is one
// anchor with its positive followed by its three negatives.

#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "hardneg/corpus/jsonl.hpp"
#include "hardneg/dataset/scoring.hpp"
#include "hardneg/random.hpp"

namespace hardneg::dataset {

struct TrainingExample {
    std::string group_id;
    std::string page_id;
    std::string image_path;
    std::string query_text;
    Label label = Label::positive;
    std::string source;

    friend bool operator==(const TrainingExample&, const TrainingExample&) = default;
};

using Group = std::vector<TrainingExample>;

inline std::string_view to_string(Label l) { return l == Label::positive ? "positive" : "negative"; }

inline ojson to_json(const TrainingExample& e) {
    ojson j;
    j["group_id"] = e.group_id;
    j["page_id"] = e.page_id;
    j["image_path"] = e.image_path;
    j["query_text"] = e.query_text;
    j["label"] = to_string(e.label);
    j["source"] = e.source;
    return j;
}

template <typename J>
TrainingExample example_from_json(const J& j) {
    TrainingExample e;
    e.group_id = hardneg::detail::require_string(j, "group_id");
    e.page_id = hardneg::detail::require_string(j, "page_id");
    e.image_path = hardneg::detail::optional_string(j, "image_path").value_or("");
    e.query_text = hardneg::detail::require_string(j, "query_text");
    const auto label = hardneg::detail::require_string(j, "label");
    if (label == "positive") e.label = Label::positive;
    else if (label == "negative") e.label = Label::negative;
    else throw ValidationError("unknown label '" + label + "'");
    e.source = hardneg::detail::optional_string(j, "source").value_or("");
    return e;
}

inline std::size_t write_examples(std::span<const TrainingExample> examples, const fs::path& path) {
    return write_jsonl_with(examples, path, [](const TrainingExample& e) { return to_json(e); });
}

inline std::vector<TrainingExample> read_examples(const fs::path& path) {
    std::vector<TrainingExample> out;
    for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t) { out.push_back(example_from_json(j)); });
    return out;
}

inline void validate_group(const Group& g) {
    const auto id = g.empty() ? std::string("<empty>") : g.front().group_id;
    std::size_t pos = 0;
    for (const auto& e : g) {
        if (e.group_id != id) throw ValidationError("group " + id + ": mixed group ids");
        if (e.label == Label::positive) ++pos;
    }
    if (g.size() != kExamplesPerGroup || pos != 1)
        throw ValidationError("group " + id + ": expected 1 positive + 3 negatives, got " + std::to_string(pos) +
                              " + " + std::to_string(g.size() - pos));
}

// Collects examples into groups by group_id (first-appearance order),
// positive first, negatives in their original order.
inline std::vector<Group> group_examples(std::span<const TrainingExample> examples) {
    std::vector<Group> groups;
    std::map<std::string, std::size_t> index;
    for (const auto& e : examples) {
        auto [it, fresh] = index.emplace(e.group_id, groups.size());
        if (fresh) groups.emplace_back();
        groups[it->second].push_back(e);
    }
    for (auto& g : groups) {
        std::stable_partition(g.begin(), g.end(), [](const TrainingExample& e) { return e.label == Label::positive; });
        validate_group(g);
    }
    return groups;
}

inline std::vector<TrainingExample> flatten(std::span<const Group> groups) {
    std::vector<TrainingExample> out;
    out.reserve(groups.size() * kExamplesPerGroup);
    for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
    return out;
}

// ---- sources ---------------------------------------------------------------

// Generated triplets: the page is shared and the queries differ.
inline std::vector<TrainingExample> triplets_to_examples(std::span<const TripletRecord> triplets,
                                                         const std::string& source = "") {
    std::vector<TrainingExample> out;
    out.reserve(triplets.size() * kExamplesPerGroup);
    for (const auto& t : triplets) {
        validate(t);
        const auto group = t.page_id + "|" + t.positive.query_id;
        out.push_back({group, t.page_id, t.image_path, t.positive.text, Label::positive, source});
        for (const auto& n : t.negatives)
            out.push_back({group, t.page_id, t.image_path, n.text, Label::negative, source});
    }
    return out;
}

struct HndocIngest {
    std::vector<TrainingExample> examples;
    std::size_t rows = 0;
    std::size_t skipped = 0;
};

// Document-level hard negatives, one JSON object per line:
//   {"query_id": "...", "query": "...",
//    "positive": {"page_id": "...", "image_path": "..."},
//    "negatives": [{"page_id": "...", "image_path": "..."}, x3]}
// Here the query is shared and the pages differ. Rows without exactly three
// negatives are skipped and counted. `limit` caps accepted rows.
inline HndocIngest ingest_hndoc(const fs::path& path, std::optional<std::size_t> limit = std::nullopt,
                                const std::string& source = "Col-HNDoc") {
    HndocIngest out;
    for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t lineno) {
        ++out.rows;
        if (limit && out.examples.size() >= *limit * kExamplesPerGroup) return;
        const auto& negs = hardneg::detail::require(j, "negatives");
        if (!negs.is_array() || negs.size() != kNegativesPerTriplet) {
            ++out.skipped;
            return;
        }
        const auto query = hardneg::detail::require_string(j, "query");
        const auto qid = hardneg::detail::optional_string(j, "query_id").value_or("row" + std::to_string(lineno));
        const auto group = "hndoc|" + qid;
        const auto& pos = hardneg::detail::require(j, "positive");
        out.examples.push_back({group, hardneg::detail::require_string(pos, "page_id"),
                                hardneg::detail::optional_string(pos, "image_path").value_or(""), query,
                                Label::positive, source});
        for (const auto& n : negs)
            out.examples.push_back({group, hardneg::detail::require_string(n, "page_id"),
                                    hardneg::detail::optional_string(n, "image_path").value_or(""), query,
                                    Label::negative, source});
    });
    return out;
}

// ---- mixes -----------------------------------------------------------------

struct MixRecipe {
    std::string source;
    std::uint64_t positives = 0;
};

struct Mix {
    DatasetManifest manifest;
    std::vector<TrainingExample> examples;
};

// Takes the first `positives` groups of each source after a seeded shuffle.
// Every source gets its own shuffle stream so adding a source to a recipe
// leaves the others' picks unchanged. Group ids gain a "<source>:" prefix.
inline Mix compose_mix(const std::string& name, std::span<const MixRecipe> recipes,
                       const std::map<std::string, std::vector<Group>>& sources, std::uint64_t seed,
                       double rephrase_fraction = 0.0) {
    Mix mix;
    mix.manifest.name = name;
    mix.manifest.seed = seed;
    mix.manifest.rephrase_fraction = rephrase_fraction;
    std::set<std::string> used;
    for (const auto& r : recipes) {
        if (!used.insert(r.source).second) throw ValidationError("source '" + r.source + "' listed twice in recipe");
        auto it = sources.find(r.source);
        if (it == sources.end()) throw ValidationError("unknown source '" + r.source + "'");
        const auto& groups = it->second;
        if (groups.size() < r.positives)
            throw ValidationError("source '" + r.source + "' holds " + std::to_string(groups.size()) +
                                  " groups, recipe asks for " + std::to_string(r.positives));
        std::vector<std::size_t> order(groups.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        seeded_shuffle(std::span<std::size_t>(order), seed ^ fnv1a64(r.source));
        for (std::uint64_t i = 0; i < r.positives; ++i) {
            const auto& g = groups[order[i]];
            validate_group(g);
            for (auto e : g) {
                e.source = r.source;
                e.group_id = r.source + ":" + e.group_id;
                mix.examples.push_back(std::move(e));
            }
        }
        mix.manifest.sources.push_back({r.source, r.positives});
        mix.manifest.total_positives += r.positives;
    }
    mix.manifest.total_examples = kExamplesPerGroup * mix.manifest.total_positives;
    return mix;
}

inline ManifestReport validate_manifest(const DatasetManifest& m, std::span<const TrainingExample> examples) {
    std::uint64_t positives = 0;
    for (const auto& e : examples) positives += e.label == Label::positive ? 1 : 0;
    auto report = validate_manifest_counts(m, positives, examples.size());
    std::map<std::string, std::uint64_t> per_source;
    for (const auto& e : examples)
        if (e.label == Label::positive) ++per_source[e.source];
    for (const auto& s : m.sources) {
        if (per_source[s.source_name] != s.positive_count)
            report.mismatches.push_back("source " + s.source_name + ": declared " + std::to_string(s.positive_count) +
                                        ", observed " + std::to_string(per_source[s.source_name]));
    }
    return report;
}

// ---- batches ---------------------------------------------------------------

inline constexpr std::size_t kGroupsPerBatch = 8;

struct TrainingBatch {
    std::vector<TrainingExample> examples;
    std::vector<std::string> groups;

    friend bool operator==(const TrainingBatch&, const TrainingBatch&) = default;
};

// Every batch holds whole groups: `groups.size()` positives, three times as
// many negatives, members of a group adjacent and positive first.
inline std::vector<std::string> batch_violations(const TrainingBatch& b, std::size_t batch_groups = kGroupsPerBatch) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    for (const auto& e : b.examples) pos += e.label == Label::positive ? 1 : 0;
    if (b.groups.size() != batch_groups) out.push_back("expected " + std::to_string(batch_groups) + " groups");
    if (pos != batch_groups) out.push_back("expected " + std::to_string(batch_groups) + " positives");
    if (b.examples.size() - pos != kNegativesPerTriplet * batch_groups)
        out.push_back("expected " + std::to_string(kNegativesPerTriplet * batch_groups) + " negatives");
    std::map<std::string, std::size_t> counts;
    for (const auto& e : b.examples) ++counts[e.group_id];
    for (const auto& g : b.groups) {
        if (counts[g] != kExamplesPerGroup) out.push_back("group " + g + " is not fully inside the batch");
    }
    if (counts.size() != b.groups.size()) out.push_back("examples reference groups outside the batch");
    return out;
}

struct Batching {
    std::vector<TrainingBatch> batches;
    std::size_t dropped_groups = 0;
};

// Shuffles whole groups by seed and packs `batch_groups` per batch. A
// trailing partial batch is dropped and logged.
inline Batching make_batches(std::span<const TrainingExample> examples, std::size_t batch_groups = kGroupsPerBatch,
                             std::uint64_t seed = 0) {
    if (batch_groups == 0) throw ValidationError("batch_groups must be positive");
    auto groups = group_examples(examples);
    seeded_shuffle(std::span<Group>(groups), seed);
    Batching out;
    const auto full = groups.size() / batch_groups;
    out.dropped_groups = groups.size() - full * batch_groups;
    if (out.dropped_groups)
        spdlog::warn("make_batches: dropping {} trailing group(s) that do not fill a batch", out.dropped_groups);
    out.batches.reserve(full);
    for (std::size_t b = 0; b < full; ++b) {
        TrainingBatch batch;
        for (std::size_t g = 0; g < batch_groups; ++g) {
            auto& group = groups[b * batch_groups + g];
            batch.groups.push_back(group.front().group_id);
            batch.examples.insert(batch.examples.end(), group.begin(), group.end());
        }
        out.batches.push_back(std::move(batch));
    }
    return out;
}

inline ojson to_json(const TrainingBatch& b, std::size_t index) {
    ojson examples = ojson::array();
    for (const auto& e : b.examples) examples.push_back(to_json(e));
    ojson j;
    j["batch_index"] = index;
    j["groups"] = b.groups;
    j["examples"] = std::move(examples);
    return j;
}

inline std::size_t write_batches(std::span<const TrainingBatch> batches, const fs::path& path) {
    std::string body;
    for (std::size_t i = 0; i < batches.size(); ++i) body += to_json(batches[i], i).dump() + "\n";
    write_file_atomic(path, body);
    return batches.size();
}

inline std::vector<Label> labels_of(const TrainingBatch& b) {
    std::vector<Label> out;
    for (const auto& e : b.examples) out.push_back(e.label);
    return out;
}

// Mean-normalized weighted cross-entropy over one batch.
inline double weighted_batch_loss(const TrainingBatch& batch, std::span<const double> probs, double w_pos = 3.0,
                                  double w_neg = 1.0) {
    const auto labels = labels_of(batch);
    return weighted_loss_terms(labels, probs, w_pos, w_neg).mean();
}

}  // namespace hardneg::dataset
