#pragma once

#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "hardneg/eval/run.hpp"

namespace hardneg::eval {

// Binary-relevance NDCG@k for one ranked list.
inline double ndcg_single(std::span<const Candidate> ranked, const std::set<std::string>& relevant, std::size_t k) {
    if (relevant.empty()) return 0.0;
    double dcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i)
        if (relevant.count(ranked[i].page_id)) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    double idcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, relevant.size()); ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    return dcg / idcg;
}

inline double recall_single(std::span<const Candidate> ranked, const std::set<std::string>& relevant, std::size_t k) {
    if (relevant.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) hits += relevant.count(ranked[i].page_id);
    return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

struct MetricResult {
    double mean = 0.0;
    std::map<std::string, double> per_query;
    std::size_t excluded = 0;  // queries in the run with no relevant page in qrels
};

enum class MetricKind { ndcg, recall };

struct MetricSpec {
    MetricKind kind = MetricKind::ndcg;
    std::size_t k = 5;

    [[nodiscard]] std::string name() const {
        return std::string(kind == MetricKind::ndcg ? "ndcg" : "recall") + "@" + std::to_string(k);
    }
    friend bool operator==(const MetricSpec&, const MetricSpec&) = default;
};

// "ndcg@5", "recall@1", ...
inline MetricSpec parse_metric(const std::string& s) {
    const auto at = s.find('@');
    if (at == std::string::npos) throw ValidationError("metric must look like name@k: '" + s + "'");
    MetricSpec m;
    const auto name = s.substr(0, at);
    if (name == "ndcg") m.kind = MetricKind::ndcg;
    else if (name == "recall") m.kind = MetricKind::recall;
    else throw ValidationError("unknown metric '" + name + "'");
    try {
        const auto k = std::stol(s.substr(at + 1));
        if (k < 1) throw ValidationError("metric cutoff must be >= 1");
        m.k = static_cast<std::size_t>(k);
    } catch (const std::logic_error&) {
        throw ValidationError("bad metric cutoff in '" + s + "'");
    }
    return m;
}

// Mean over judged queries of the run. Queries without any relevant page
// are excluded and counted.
inline MetricResult evaluate(const RankedRun& run, const Qrels& qrels, MetricSpec metric) {
    if (metric.k < 1) throw ValidationError("metric cutoff must be >= 1");
    MetricResult r;
    double sum = 0.0;
    for (const auto& [qid, cands] : run.queries) {
        const auto* rel = qrels.find(qid);
        if (!rel) {
            ++r.excluded;
            continue;
        }
        const double v = metric.kind == MetricKind::ndcg ? ndcg_single(cands, *rel, metric.k)
                                                         : recall_single(cands, *rel, metric.k);
        r.per_query[qid] = v;
        sum += v;
    }
    if (!r.per_query.empty()) r.mean = sum / static_cast<double>(r.per_query.size());
    return r;
}

inline MetricResult ndcg_at_k(const RankedRun& run, const Qrels& qrels, std::size_t k) {
    return evaluate(run, qrels, {MetricKind::ndcg, k});
}

inline MetricResult recall_at_k(const RankedRun& run, const Qrels& qrels, std::size_t k) {
    return evaluate(run, qrels, {MetricKind::recall, k});
}

}  // namespace hardneg::eval
