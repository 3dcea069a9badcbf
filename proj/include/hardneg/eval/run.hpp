#pragma once

// TREC interchange: runs "qid Q0 pageid rank score tag", qrels
// "qid 0 pageid rel", and reranker score tables "qid pageid score".

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hardneg/corpus/jsonl.hpp"
#include "hardneg/error.hpp"

namespace hardneg::eval {

struct Candidate {
    std::string page_id;
    double score = 0.0;

    friend bool operator==(const Candidate&, const Candidate&) = default;
};

// Per query, candidates in rank order: score descending, ties by page_id.
struct RankedRun {
    std::string run_tag;
    std::map<std::string, std::vector<Candidate>> queries;

    friend bool operator==(const RankedRun&, const RankedRun&) = default;
};

inline bool ranks_before(const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.page_id < b.page_id;
}

inline void sort_candidates(std::vector<Candidate>& c) { std::sort(c.begin(), c.end(), ranks_before); }

struct Qrels {
    std::map<std::string, std::set<std::string>> relevant;

    [[nodiscard]] const std::set<std::string>* find(const std::string& qid) const {
        auto it = relevant.find(qid);
        return it == relevant.end() || it->second.empty() ? nullptr : &it->second;
    }
};

// (query_id, page_id) -> relevance probability
using ScoreTable = std::map<std::pair<std::string, std::string>, double>;

namespace detail {

inline std::vector<std::string> fields(const std::string& line) {
    std::istringstream in(line);
    std::vector<std::string> out;
    for (std::string f; in >> f;) out.push_back(std::move(f));
    return out;
}

inline double parse_double(const std::string& s, const std::string& path, std::size_t line, const char* what) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
        throw ParseError(path, line, std::string("invalid ") + what + " '" + s + "'");
    return v;
}

inline long parse_long(const std::string& s, const std::string& path, std::size_t line, const char* what) {
    long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ParseError(path, line, std::string("invalid ") + what + " '" + s + "'");
    return v;
}

template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto f = fields(line);
        if (f.empty() || f[0].front() == '#') continue;
        fn(f, lineno);
    }
}

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace detail

inline RankedRun parse_trec_run(const std::filesystem::path& path) {
    RankedRun run;
    std::set<std::pair<std::string, std::string>> seen;
    const auto p = path.string();
    detail::for_each_line(path, [&](const std::vector<std::string>& f, std::size_t line) {
        if (f.size() != 6) throw ParseError(p, line, "expected 'qid Q0 pageid rank score tag'");
        detail::parse_long(f[3], p, line, "rank");
        const double score = detail::parse_double(f[4], p, line, "score");
        if (!seen.emplace(f[0], f[2]).second)
            throw ParseError(p, line, "duplicate page '" + f[2] + "' for query '" + f[0] + "'");
        if (run.run_tag.empty()) run.run_tag = f[5];
        run.queries[f[0]].push_back({f[2], score});
    });
    for (auto& [_, c] : run.queries) sort_candidates(c);
    return run;
}

inline void write_trec_run(const RankedRun& run, const std::filesystem::path& path) {
    std::string body;
    const auto tag = run.run_tag.empty() ? std::string("run") : run.run_tag;
    for (const auto& [qid, cands] : run.queries) {
        for (std::size_t i = 0; i < cands.size(); ++i) {
            body += qid + " Q0 " + cands[i].page_id + " " + std::to_string(i + 1) + " " +
                    detail::format_double(cands[i].score) + " " + tag + "\n";
        }
    }
    write_file_atomic(path, body);
}

// Lines with rel > 0 mark a page relevant; rel <= 0 lines are accepted and ignored.
inline Qrels parse_qrels(const std::filesystem::path& path) {
    Qrels q;
    const auto p = path.string();
    detail::for_each_line(path, [&](const std::vector<std::string>& f, std::size_t line) {
        if (f.size() != 4) throw ParseError(p, line, "expected 'qid 0 pageid rel'");
        const auto rel = detail::parse_long(f[3], p, line, "relevance");
        auto& set = q.relevant[f[0]];
        if (rel > 0) set.insert(f[2]);
    });
    return q;
}

inline ScoreTable parse_scores(const std::filesystem::path& path) {
    ScoreTable t;
    const auto p = path.string();
    detail::for_each_line(path, [&](const std::vector<std::string>& f, std::size_t line) {
        if (f.size() != 3) throw ParseError(p, line, "expected 'qid pageid score'");
        const double s = detail::parse_double(f[2], p, line, "score");
        if (!t.emplace(std::make_pair(f[0], f[1]), s).second)
            throw ParseError(p, line, "duplicate score for (" + f[0] + ", " + f[1] + ")");
    });
    return t;
}

inline void write_scores(const ScoreTable& t, const std::filesystem::path& path) {
    std::string body;
    for (const auto& [key, s] : t) body += key.first + " " + key.second + " " + detail::format_double(s) + "\n";
    write_file_atomic(path, body);
}

}  // namespace hardneg::eval
