#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <spdlog/spdlog.h>

#include "hardneg/hardneg.hpp"

namespace testing_support {

namespace fs = std::filesystem;
using namespace hardneg;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("hardneg_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void quiet_logs() { spdlog::set_level(spdlog::level::off); }

inline void write_text(const fs::path& p, const std::string& body) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << body;
}

// PNG signature followed by a page-specific payload. Nothing decodes the
// pixels; distinct payloads give distinct image hashes in the mock.
inline fs::path write_page_image(const fs::path& dir, const std::string& page_id) {
    const auto p = dir / (page_id + ".png");
    write_text(p, std::string("\x89PNG\r\n\x1a\n", 8) + "synthetic page " + page_id);
    return p;
}

inline PageRecord make_page(const fs::path& dir, const std::string& page_id, const std::string& corpus = "synthetic") {
    return {page_id, write_page_image(dir, page_id).string(), corpus, {{"company", "ACME"}, {"year", "2022"}}};
}

inline QueryRecord kept_positive(const std::string& page_id, const std::string& text, int idx = 0) {
    QueryRecord q;
    q.query_id = page_id + "#p" + std::to_string(idx);
    q.page_id = page_id;
    q.text = text;
    q.polarity = Polarity::positive;
    q.kind = QueryKind::generated_positive;
    q.verification = Verification::kept;
    q.verdicts = {{PromptVariant::A, true}, {PromptVariant::B, true}};
    return q;
}

inline QueryRecord kept_negative(const QueryRecord& pos, const std::string& text, int idx,
                                 std::optional<FinanceProperty> property = std::nullopt) {
    QueryRecord q;
    q.query_id = pos.query_id + (property ? "#f-" + std::string(to_string(*property)) : "#n" + std::to_string(idx));
    q.page_id = pos.page_id;
    q.text = text;
    q.polarity = Polarity::negative;
    q.kind = property ? QueryKind::finance_negative : QueryKind::generic_negative;
    q.property = property;
    q.parent_query_id = pos.query_id;
    q.verification = Verification::kept;
    q.verdicts = {{PromptVariant::A, false}, {PromptVariant::B, false}};
    return q;
}

inline TripletRecord make_triplet(std::size_t i, const std::string& image_path = "") {
    const auto page = "page-" + std::to_string(i);
    TripletRecord t;
    t.page_id = page;
    t.image_path = image_path.empty() ? "/data/" + page + ".png" : image_path;
    t.positive = kept_positive(page, "What was revenue in fiscal " + std::to_string(2000 + i % 25) + "?");
    for (int n = 0; n < 3; ++n)
        t.negatives.push_back(kept_negative(t.positive, "Negative " + std::to_string(n) + " for " + page, n));
    return t;
}

inline std::vector<dataset::TrainingExample> synthetic_examples(std::size_t groups, const std::string& source = "S") {
    std::vector<TripletRecord> ts;
    for (std::size_t i = 0; i < groups; ++i) ts.push_back(make_triplet(i));
    return dataset::triplets_to_examples(ts, source);
}

}  // namespace testing_support
