#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <system_error>
#include <vector>

#include "hardneg/corpus/json_io.hpp"
#include "hardneg/corpus/validate.hpp"

namespace hardneg {

namespace fs = std::filesystem;

// Writes `content` to `path` through a sibling temp file so that a failed
// write never leaves a partial file behind.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
    const auto parent = path.has_parent_path() ? path.parent_path() : fs::path(".");
    if (!fs::is_directory(parent)) throw IoError("parent directory does not exist: " + parent.string());
    auto tmp = path;
    tmp += ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (out) out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (out) out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw IoError("write failed: " + path.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot move output into place: " + path.string());
    }
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Encodes every record up front (so invalid input is rejected before any
// byte is written), then writes one JSON object per line.
template <typename T, typename Encode>
std::size_t write_jsonl_with(std::span<const T> records, const fs::path& path, Encode&& encode) {
    std::string body;
    std::size_t index = 0;
    for (const auto& r : records) {
        try {
            body += encode(r).dump();
        } catch (const nlohmann::json::type_error& e) {
            throw ValidationError("record " + std::to_string(index) + " is not serializable: " + e.what());
        }
        body += '\n';
        ++index;
    }
    write_file_atomic(path, body);
    return records.size();
}

// Calls `fn(json, line_number)` for every non-blank line.
inline void for_each_jsonl(const fs::path& path,
                           const std::function<void(const nlohmann::json&, std::size_t)>& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(path.string(), lineno, std::string("malformed JSON: ") + e.what());
        }
        try {
            fn(j, lineno);
        } catch (const ParseError&) {
            throw;
        } catch (const Error& e) {
            throw ParseError(path.string(), lineno, e.what());
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string(), lineno, e.what());
        }
    }
}

// ---- triplets --------------------------------------------------------------

inline std::size_t write_jsonl(std::span<const TripletRecord> records, const fs::path& path) {
    for (const auto& r : records) validate(r);
    return write_jsonl_with(records, path, [](const TripletRecord& t) { return to_json(t); });
}

inline std::vector<TripletRecord> read_jsonl(const fs::path& path) {
    std::vector<TripletRecord> out;
    for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t) {
        auto t = triplet_from_json(j);
        validate(t);
        out.push_back(std::move(t));
    });
    return out;
}

// ---- pages -----------------------------------------------------------------

// Page corpus JSONL. Duplicate page ids are rejected; image existence is
// checked by the stages that load images, which skip and count misses.
inline std::vector<PageRecord> read_pages(const fs::path& path) {
    std::vector<PageRecord> out;
    std::set<std::string> ids;
    for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t) {
        auto p = page_from_json(j);
        if (p.page_id.empty()) throw ValidationError("page_id must be non-empty");
        if (!ids.insert(p.page_id).second) throw ValidationError("duplicate page_id '" + p.page_id + "'");
        out.push_back(std::move(p));
    });
    return out;
}

inline std::size_t write_pages(std::span<const PageRecord> pages, const fs::path& path) {
    return write_jsonl_with(pages, path, [](const PageRecord& p) { return to_json(p); });
}

// ---- anchored queries (page + its kept positive) ---------------------------

struct AnchoredQuery {
    PageRecord page;
    QueryRecord query;

    friend bool operator==(const AnchoredQuery&, const AnchoredQuery&) = default;
};

inline ojson to_json(const AnchoredQuery& a) { return ojson{{"page", to_json(a.page)}, {"query", to_json(a.query)}}; }

inline std::size_t write_anchored(std::span<const AnchoredQuery> records, const fs::path& path) {
    for (const auto& r : records) validate(r.query);
    return write_jsonl_with(records, path, [](const AnchoredQuery& a) { return to_json(a); });
}

inline std::vector<AnchoredQuery> read_anchored(const fs::path& path) {
    std::vector<AnchoredQuery> out;
    for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t) {
        AnchoredQuery a{page_from_json(detail::require(j, "page")), query_from_json(detail::require(j, "query"))};
        validate(a.query);
        if (a.query.page_id != a.page.page_id) throw ValidationError("query page_id does not match its page");
        out.push_back(std::move(a));
    });
    return out;
}

// ---- manifests -------------------------------------------------------------

inline void write_manifest(const DatasetManifest& m, const fs::path& path) {
    write_file_atomic(path, to_json(m).dump(2) + "\n");
}

inline DatasetManifest read_manifest(const fs::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string(), 0, e.what());
    }
    return manifest_from_json(j);
}

struct ManifestReport {
    std::vector<std::string> mismatches;

    [[nodiscard]] bool ok() const noexcept { return mismatches.empty(); }
};

// Checks declared counts against themselves and against observed positives
// (one positive plus three negatives per group).
inline ManifestReport validate_manifest_counts(const DatasetManifest& m, std::uint64_t observed_positives,
                                               std::uint64_t observed_examples) {
    ManifestReport r;
    auto mismatch = [&](const std::string& what, std::uint64_t declared, std::uint64_t observed) {
        if (declared != observed)
            r.mismatches.push_back(what + ": declared " + std::to_string(declared) + ", observed " +
                                   std::to_string(observed));
    };
    mismatch("total_examples vs 4 x total_positives", m.total_examples, kExamplesPerGroup * m.total_positives);
    if (!m.sources.empty()) {
        std::uint64_t sum = 0;
        for (const auto& s : m.sources) sum += s.positive_count;
        mismatch("total_positives vs sum of sources", m.total_positives, sum);
    }
    mismatch("total_positives", m.total_positives, observed_positives);
    mismatch("total_examples", m.total_examples, observed_examples);
    if (m.rephrase_fraction < 0.0 || m.rephrase_fraction > 1.0)
        r.mismatches.push_back("rephrase_fraction outside [0,1]");
    return r;
}

inline ManifestReport validate_manifest(const DatasetManifest& m, std::span<const TripletRecord> records) {
    return validate_manifest_counts(m, records.size(), kExamplesPerGroup * records.size());
}

}  // namespace hardneg
