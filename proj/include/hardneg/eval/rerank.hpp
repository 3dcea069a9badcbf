#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "hardneg/corpus/json_io.hpp"
#include "hardneg/dataset/scoring.hpp"
#include "hardneg/eval/metrics.hpp"
#include "hardneg/gateway/gateway.hpp"
#include "hardneg/gateway/image.hpp"
#include "hardneg/generation/generation.hpp"

namespace hardneg::eval {

inline constexpr std::size_t kDefaultRerankDepth = 20;
inline constexpr std::string_view kRerankSuffix = "+rerank";

// Reorders each query's top-k by reranker score (ties by page_id). Deeper
// candidates keep their relative order below the reranked block. Output
// scores stay rank-consistent: top-k carry the reranker score, deeper
// candidates get floor-1, floor-2, ... where floor is min(0, lowest top-k
// score). Probability scores thus give the tail -1, -2, ...
inline RankedRun rerank(const RankedRun& run, const ScoreTable& scores, std::size_t k = kDefaultRerankDepth) {
    RankedRun out;
    out.run_tag = run.run_tag;
    if (out.run_tag.size() < kRerankSuffix.size() ||
        out.run_tag.compare(out.run_tag.size() - kRerankSuffix.size(), kRerankSuffix.size(), kRerankSuffix) != 0)
        out.run_tag += kRerankSuffix;
    for (const auto& [qid, cands] : run.queries) {
        auto& dst = out.queries[qid];
        const auto depth = std::min(k, cands.size());
        for (std::size_t i = 0; i < depth; ++i) {
            auto it = scores.find({qid, cands[i].page_id});
            if (it == scores.end())
                throw ValidationError("missing reranker score for (" + qid + ", " + cands[i].page_id + ")");
            dst.push_back({cands[i].page_id, it->second});
        }
        sort_candidates(dst);
        const double floor = dst.empty() ? 0.0 : std::min(0.0, dst.back().score);
        for (std::size_t i = depth; i < cands.size(); ++i)
            dst.push_back({cands[i].page_id, floor - static_cast<double>(i - depth + 1)});
    }
    return out;
}

// Pairs of the top-k with no score, as "(qid, pageid)".
inline std::vector<std::pair<std::string, std::string>> missing_scores(const RankedRun& run, const ScoreTable& scores,
                                                                       std::size_t k = kDefaultRerankDepth) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [qid, cands] : run.queries)
        for (std::size_t i = 0; i < std::min(k, cands.size()); ++i)
            if (!scores.count({qid, cands[i].page_id})) out.emplace_back(qid, cands[i].page_id);
    return out;
}

// ---- delta report ----------------------------------------------------------

struct DeltaRow {
    std::string metric;
    double baseline = 0.0;
    double reranked = 0.0;
    double delta = 0.0;
};

struct DeltaReport {
    std::string baseline_tag;
    std::string reranked_tag;
    std::size_t judged_queries = 0;
    std::size_t excluded_queries = 0;
    std::vector<DeltaRow> rows;

    // Rows whose delta fell below -threshold.
    [[nodiscard]] std::vector<DeltaRow> regressions(double threshold) const {
        std::vector<DeltaRow> out;
        for (const auto& r : rows)
            if (r.delta < -threshold) out.push_back(r);
        return out;
    }

    // Aligned table in the customary x100, one-decimal presentation.
    [[nodiscard]] std::string to_text() const {
        std::string out;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-12s %10s %10s %8s\n", "metric", "baseline", "reranked", "delta");
        out += buf;
        for (const auto& r : rows) {
            const double d = std::round(r.delta * 1000.0) / 10.0;
            std::snprintf(buf, sizeof buf, "%-12s %10.1f %10.1f %+8.1f\n", r.metric.c_str(), r.baseline * 100.0,
                          r.reranked * 100.0, d == 0.0 ? 0.0 : d);
            out += buf;
        }
        std::snprintf(buf, sizeof buf, "queries: %zu judged, %zu excluded\n", judged_queries, excluded_queries);
        out += buf;
        return out;
    }

    [[nodiscard]] ojson to_json() const {
        ojson metrics = ojson::array();
        for (const auto& r : rows)
            metrics.push_back({{"metric", r.metric}, {"baseline", r.baseline}, {"reranked", r.reranked}, {"delta", r.delta}});
        ojson j;
        j["baseline"] = baseline_tag;
        j["reranked"] = reranked_tag;
        j["judged_queries"] = judged_queries;
        j["excluded_queries"] = excluded_queries;
        j["metrics"] = std::move(metrics);
        return j;
    }
};

inline DeltaReport delta_report(const RankedRun& baseline, const RankedRun& reranked, const Qrels& qrels,
                                std::span<const MetricSpec> metrics) {
    std::vector<std::string> only;
    for (const auto& [q, _] : baseline.queries)
        if (!reranked.queries.count(q)) only.push_back("baseline-only " + q);
    for (const auto& [q, _] : reranked.queries)
        if (!baseline.queries.count(q)) only.push_back("reranked-only " + q);
    if (!only.empty()) {
        std::string msg = "runs cover different queries:";
        for (const auto& s : only) msg += " " + s;
        throw ValidationError(msg);
    }
    DeltaReport rep;
    rep.baseline_tag = baseline.run_tag;
    rep.reranked_tag = reranked.run_tag;
    for (const auto& m : metrics) {
        const auto b = evaluate(baseline, qrels, m);
        const auto r = evaluate(reranked, qrels, m);
        rep.judged_queries = b.per_query.size();
        rep.excluded_queries = b.excluded;
        rep.rows.push_back({m.name(), b.mean, r.mean, r.mean - b.mean});
    }
    return rep;
}

// ---- scoring through a VLM endpoint ----------------------------------------

struct GatewayScoring {
    ScoreTable scores;
    std::vector<std::pair<std::string, std::string>> missing;
    std::size_t calls = 0;
    std::size_t hard_decisions = 0;  // replies without usable logprobs
};

namespace detail {

inline std::optional<double> find_logprob(const std::map<std::string, double>& lp, std::string_view token) {
    for (const auto& [tok, v] : lp) {
        const auto t = text::trim(tok);
        if (t.size() == token.size() && text::starts_with_ci(t, token)) return v;
    }
    return std::nullopt;
}

}  // namespace detail

// Relevance from a single reply: the True/False two-way softmax when the
// first-token logprobs carry both tokens, the one-sided complement when only
// one is present, and a hard 1.0/0.0 from the generated token otherwise.
inline std::optional<double> score_from_completion(const gateway::Completion& c, bool& hard_decision) {
    hard_decision = false;
    const auto lt = detail::find_logprob(c.first_token_logprobs, "True");
    const auto lf = detail::find_logprob(c.first_token_logprobs, "False");
    if (lt && lf) return dataset::relevance_score({*lt, *lf});
    if (lt) return std::clamp(std::exp(*lt), 0.0, 1.0);
    if (lf) return std::clamp(1.0 - std::exp(*lf), 0.0, 1.0);
    hard_decision = true;
    const auto word = text::trim(c.text);
    if (text::starts_with_ci(word, "true")) return 1.0;
    if (text::starts_with_ci(word, "false")) return 0.0;
    return std::nullopt;
}

inline GatewayScoring score_with_gateway(const RankedRun& run, const std::map<std::string, std::string>& query_texts,
                                         const std::map<std::string, PageRecord>& pages, gateway::Gateway& gw,
                                         const generation::PromptTemplate& prompt,
                                         const generation::StageRoute& route, std::size_t k = kDefaultRerankDepth,
                                         int top_logprobs = 5) {
    GatewayScoring out;
    std::vector<gateway::ChatRequest> requests;
    std::vector<std::pair<std::string, std::string>> keys;
    std::map<std::string, gateway::ImagePart> images;
    for (const auto& [qid, cands] : run.queries) {
        auto qt = query_texts.find(qid);
        if (qt == query_texts.end()) throw ValidationError("no query text for '" + qid + "'");
        const auto rendered = prompt.render({{"query", qt->second}});
        for (std::size_t i = 0; i < std::min(k, cands.size()); ++i) {
            const auto& pid = cands[i].page_id;
            auto img = images.find(pid);
            if (img == images.end()) {
                auto page = pages.find(pid);
                try {
                    if (page == pages.end()) throw IoError("page not in corpus");
                    img = images.emplace(pid, gateway::load_image(page->second.image_path)).first;
                } catch (const IoError& e) {
                    spdlog::warn("rerank scoring: page {} unavailable: {}", pid, e.what());
                    out.missing.emplace_back(qid, pid);
                    continue;
                }
            }
            auto req = generation::make_request(route, std::string(generation::to_string(prompt.id)), rendered,
                                                &img->second);
            req.top_logprobs = top_logprobs;
            requests.push_back(std::move(req));
            keys.emplace_back(qid, pid);
        }
    }
    out.calls = requests.size();
    const auto outcomes = gw.complete_many(requests);
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        if (!outcomes[i].ok()) {
            out.missing.push_back(keys[i]);
            continue;
        }
        bool hard = false;
        auto s = score_from_completion(*outcomes[i].completion, hard);
        if (hard) ++out.hard_decisions;
        if (s) out.scores[keys[i]] = *s;
        else out.missing.push_back(keys[i]);
    }
    if (out.hard_decisions) spdlog::warn("rerank scoring: {} reply(ies) scored in hard-decision mode", out.hard_decisions);
    return out;
}

}  // namespace hardneg::eval
