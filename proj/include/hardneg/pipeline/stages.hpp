#pragma once

// Batched stage runners. Each stage fans its requests out through
// Gateway::complete_many, so concurrency is bounded by the endpoints and
// results are assembled in input order regardless of completion order.

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "hardneg/corpus/jsonl.hpp"
#include "hardneg/corpus/validate.hpp"
#include "hardneg/dataset/examples.hpp"
#include "hardneg/gateway/gateway.hpp"
#include "hardneg/gateway/image.hpp"
#include "hardneg/generation/generation.hpp"
#include "hardneg/verification/verification.hpp"

namespace hardneg::pipeline {

using generation::StageStats;
using verification::Verdict;

struct StageContext {
    gateway::Gateway& gw;
    const generation::PromptLibrary& prompts;
    const generation::Routes& routes;
    const generation::GenerationParams& params;
    bool strict_ambiguous = true;
};

inline const generation::StageRoute& require_route(const generation::StageRoute& r, const char* stage) {
    if (r.endpoint_id.empty()) throw ValidationError(std::string("no endpoint configured for stage ") + stage);
    return r;
}

// Page images are loaded once per stage; a missing image skips its page.
inline std::optional<gateway::ImagePart> try_load_image(const std::string& page_id, const std::string& path,
                                                        StageStats& stats) {
    try {
        return gateway::load_image(path);
    } catch (const IoError& e) {
        spdlog::warn("page {}: skipped, {}", page_id, e.what());
        stats.add("pages.missing_image");
        return std::nullopt;
    }
}

// ---- verification ----------------------------------------------------------

struct VerifyJob {
    QueryRecord* query = nullptr;
    const gateway::ImagePart* image = nullptr;
};

// Asks both prompts about every job's query and applies the keep policy.
// Failed requests get one more round; with strict_ambiguous off, ambiguous
// replies are asked once more too before the conservative resolution.
// Queries still missing a verdict stay unverified and are returned.
inline std::vector<std::string> verify_queries(std::span<VerifyJob> jobs, StageContext& ctx, StageStats& stats,
                                               std::vector<Verdict>& audit) {
    const auto& route = require_route(ctx.routes.verify, "verify");
    const std::size_t slots = jobs.size() * 2;
    std::vector<std::optional<Verdict>> verdicts(slots);
    auto variant_of = [](std::size_t slot) { return slot % 2 == 0 ? PromptVariant::A : PromptVariant::B; };

    auto ask = [&](const std::vector<std::size_t>& which) {
        std::vector<gateway::ChatRequest> requests;
        requests.reserve(which.size());
        for (auto s : which) {
            const auto& job = jobs[s / 2];
            requests.push_back(
                verification::verification_request(*job.image, *job.query, variant_of(s), ctx.prompts, route));
        }
        auto outcomes = ctx.gw.complete_many(requests);
        for (std::size_t i = 0; i < which.size(); ++i) {
            const auto s = which[i];
            if (!outcomes[i].ok()) {
                stats.add("verify.request_failed");
                continue;
            }
            auto v = verification::verdict_from_completion(*jobs[s / 2].query, variant_of(s),
                                                           std::move(outcomes[i].completion->text));
            // A re-asked ambiguous slot only changes when the new reply is clear.
            if (verdicts[s] && v.ambiguous) continue;
            verdicts[s] = std::move(v);
        }
    };

    std::vector<std::size_t> all(slots);
    for (std::size_t s = 0; s < slots; ++s) all[s] = s;
    ask(all);

    std::vector<std::size_t> again;
    for (std::size_t s = 0; s < slots; ++s) {
        if (!verdicts[s] || (!ctx.strict_ambiguous && verdicts[s]->ambiguous)) again.push_back(s);
    }
    if (!again.empty()) ask(again);

    std::vector<std::string> unverified;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        auto& q = *jobs[j].query;
        const auto& a = verdicts[2 * j];
        const auto& b = verdicts[2 * j + 1];
        if (a) audit.push_back(*a);
        if (b) audit.push_back(*b);
        if (!a || !b) {
            stats.add("verify.unverified");
            unverified.push_back(q.query_id);
            continue;
        }
        if (a->ambiguous || b->ambiguous) stats.add("verify.ambiguous");
        verification::apply_verdicts(q, *a, *b);
        const auto pol = std::string(to_string(q.polarity));
        stats.add("verify." + pol + (q.verification == Verification::kept ? ".kept" : ".rejected"));
    }
    return unverified;
}

// ---- positives ---------------------------------------------------------------

struct PositiveStageResult {
    std::vector<AnchoredQuery> kept;
    std::vector<Verdict> audit;
    StageStats stats;
    std::vector<std::string> failures;
};

inline PositiveStageResult run_positive_stage(std::span<const PageRecord> pages, StageContext& ctx) {
    const auto& route = require_route(ctx.routes.positive_gen, "positive_gen");
    PositiveStageResult out;
    out.stats.add("pages.total", pages.size());

    std::vector<std::optional<gateway::ImagePart>> images;
    images.reserve(pages.size());
    std::vector<gateway::ChatRequest> requests;
    std::vector<std::size_t> owner;
    for (std::size_t i = 0; i < pages.size(); ++i) {
        images.push_back(try_load_image(pages[i].page_id, pages[i].image_path, out.stats));
        if (!images.back()) continue;
        requests.push_back(generation::positive_request(*images.back(), ctx.params, ctx.prompts, route));
        owner.push_back(i);
    }
    const auto outcomes = ctx.gw.complete_many(requests);

    std::vector<std::vector<QueryRecord>> candidates(pages.size());
    for (std::size_t r = 0; r < outcomes.size(); ++r) {
        const auto& page = pages[owner[r]];
        if (!outcomes[r].ok()) {
            out.stats.add("positive_gen.failed");
            out.failures.push_back("page " + page.page_id + ": " + outcomes[r].error);
            continue;
        }
        candidates[owner[r]] =
            generation::positives_from_completion(page, outcomes[r].completion->text, ctx.params, out.stats);
        if (candidates[owner[r]].empty()) out.stats.add("pages.no_candidates");
        out.stats.add("positive_gen.candidates", candidates[owner[r]].size());
    }

    std::vector<VerifyJob> jobs;
    for (std::size_t i = 0; i < pages.size(); ++i)
        for (auto& q : candidates[i]) jobs.push_back({&q, &*images[i]});
    for (const auto& id : verify_queries(jobs, ctx, out.stats, out.audit))
        out.failures.push_back("query " + id + ": verification failed");

    for (std::size_t i = 0; i < pages.size(); ++i) {
        if (candidates[i].empty()) continue;
        auto it = std::find_if(candidates[i].begin(), candidates[i].end(),
                               [](const QueryRecord& q) { return q.verification == Verification::kept; });
        if (it == candidates[i].end()) {
            out.stats.add("pages.no_kept_positive");
            continue;
        }
        out.kept.push_back({pages[i], *it});
    }
    out.stats.add("pages.with_positive", out.kept.size());
    return out;
}

// ---- negatives ---------------------------------------------------------------

enum class NegativeMode { generic, finance };

inline std::string_view to_string(NegativeMode m) { return m == NegativeMode::generic ? "generic" : "finance"; }

inline NegativeMode parse_negative_mode(std::string_view s) {
    if (s == "generic") return NegativeMode::generic;
    if (s == "finance") return NegativeMode::finance;
    throw ValidationError("unknown negative mode '" + std::string(s) + "' (expected generic or finance)");
}

struct NegativeStageResult {
    std::vector<TripletRecord> triplets;
    std::vector<Verdict> audit;
    StageStats stats;
    std::vector<std::string> failures;
    std::vector<std::string> dropped_pages;
};

inline std::vector<gateway::ChatRequest> negative_requests(const QueryRecord& positive, NegativeMode mode,
                                                           StageContext& ctx) {
    const auto& route = require_route(ctx.routes.negative_gen, "negative_gen");
    if (mode == NegativeMode::finance)
        return generation::finance_requests(positive, ctx.params, ctx.prompts, route);
    return {generation::generic_negative_request(positive, ctx.params, ctx.prompts, route)};
}

inline NegativeStageResult run_negative_stage(std::span<const AnchoredQuery> positives, NegativeMode mode,
                                              StageContext& ctx) {
    NegativeStageResult out;
    out.stats.add("positives.total", positives.size());
    for (const auto& a : positives) generation::require_kept_positive(a.query);

    std::vector<std::optional<gateway::ImagePart>> images;
    images.reserve(positives.size());
    std::vector<gateway::ChatRequest> requests;
    std::vector<std::size_t> owner;
    std::vector<std::size_t> first_request(positives.size(), 0);
    for (std::size_t i = 0; i < positives.size(); ++i) {
        images.push_back(try_load_image(positives[i].page.page_id, positives[i].page.image_path, out.stats));
        first_request[i] = requests.size();
        if (!images.back()) continue;
        for (auto& r : negative_requests(positives[i].query, mode, ctx)) {
            requests.push_back(std::move(r));
            owner.push_back(i);
        }
    }
    const auto outcomes = ctx.gw.complete_many(requests);

    std::vector<std::vector<QueryRecord>> candidates(positives.size());
    std::vector<bool> usable(positives.size(), false);
    for (std::size_t i = 0; i < positives.size(); ++i) {
        if (!images[i]) continue;
        const auto& pos = positives[i].query;
        if (mode == NegativeMode::generic) {
            const auto& o = outcomes[first_request[i]];
            if (!o.ok()) {
                out.stats.add("negative_gen_generic.failed");
                out.failures.push_back("page " + pos.page_id + ": " + o.error);
                continue;
            }
            candidates[i] = generation::negatives_from_completion(pos, o.completion->text, ctx.params, out.stats);
        } else {
            std::size_t failed = 0;
            for (std::size_t p = 0; p < ctx.params.finance_properties.size(); ++p) {
                const auto& o = outcomes[first_request[i] + p];
                if (!o.ok()) {
                    ++failed;
                    out.stats.add("negative_gen_finance.failed");
                    continue;
                }
                generation::add_finance_variant(pos, ctx.params.finance_properties[p], o.completion->text,
                                                candidates[i], out.stats);
            }
            if (failed == ctx.params.finance_properties.size())
                out.failures.push_back("page " + pos.page_id + ": every finance property request failed");
        }
        out.stats.add("negatives.candidates", candidates[i].size());
        if (candidates[i].size() < kNegativesPerTriplet) {
            out.stats.add("pages.insufficient_candidates");
            out.dropped_pages.push_back(pos.page_id);
            candidates[i].clear();
            continue;
        }
        usable[i] = true;
    }

    std::vector<VerifyJob> jobs;
    for (std::size_t i = 0; i < positives.size(); ++i)
        for (auto& q : candidates[i]) jobs.push_back({&q, &*images[i]});
    for (const auto& id : verify_queries(jobs, ctx, out.stats, out.audit))
        out.failures.push_back("query " + id + ": verification failed");

    for (std::size_t i = 0; i < positives.size(); ++i) {
        if (!usable[i]) continue;
        std::vector<QueryRecord> kept;
        for (const auto& q : candidates[i])
            if (q.verification == Verification::kept) kept.push_back(q);
        // Rotating by triplet index spreads finance properties evenly over the output.
        auto picked = verification::select_triplet_negatives(kept, kNegativesPerTriplet, out.triplets.size());
        if (!picked) {
            spdlog::info("page {}: only {} negative(s) survived verification, page dropped",
                         positives[i].page.page_id, kept.size());
            out.stats.add("pages.insufficient_negatives");
            out.dropped_pages.push_back(positives[i].page.page_id);
            continue;
        }
        out.triplets.push_back(
            {positives[i].page.page_id, positives[i].page.image_path, positives[i].query, std::move(*picked)});
    }
    out.stats.add("triplets", out.triplets.size());
    return out;
}

// ---- rephrasing --------------------------------------------------------------

struct RephraseCandidate {
    QueryRecord parent;
    std::string image_path;
};

struct RephraseBatch {
    // Kept rephrasings keyed by parent query_id.
    std::map<std::string, QueryRecord> accepted;
    std::vector<Verdict> audit;
    StageStats stats;
    std::vector<std::string> failures;
};

// Rephrases every candidate and dual-verifies the rephrasings as positives.
// Anything that fails, echoes its parent, or loses verification leaves the
// parent in place.
inline RephraseBatch rephrase_and_verify(std::span<const RephraseCandidate> selected, StageContext& ctx) {
    const auto& route = require_route(ctx.routes.rephrase, "rephrase");
    RephraseBatch out;
    out.stats.add("rephrase.selected", selected.size());
    std::vector<gateway::ChatRequest> requests;
    for (const auto& c : selected) requests.push_back(generation::rephrase_request(c.parent, ctx.prompts, route));
    const auto outcomes = ctx.gw.complete_many(requests);

    std::vector<QueryRecord> rephrased;
    std::vector<std::size_t> owner;
    for (std::size_t i = 0; i < selected.size(); ++i) {
        if (!outcomes[i].ok()) {
            out.stats.add("rephrase.failed");
            spdlog::warn("rephrase failed for {}: {}", selected[i].parent.query_id, outcomes[i].error);
            continue;
        }
        auto r = generation::rephrase_from_completion(selected[i].parent, outcomes[i].completion->text);
        if (r.noop) out.stats.add("rephrase.noop");
        if (!r.rephrased) {
            if (!r.noop) out.stats.add("rephrase.empty");
            continue;
        }
        rephrased.push_back(std::move(r.record));
        owner.push_back(i);
    }

    std::vector<std::optional<gateway::ImagePart>> images;
    images.reserve(rephrased.size());
    std::vector<VerifyJob> jobs;
    for (std::size_t i = 0; i < rephrased.size(); ++i) {
        const auto& c = selected[owner[i]];
        images.push_back(try_load_image(c.parent.page_id, c.image_path, out.stats));
        if (images.back()) jobs.push_back({&rephrased[i], &*images.back()});
    }
    for (const auto& id : verify_queries(jobs, ctx, out.stats, out.audit))
        out.failures.push_back("query " + id + ": verification failed");

    for (std::size_t i = 0; i < rephrased.size(); ++i) {
        if (rephrased[i].verification != Verification::kept) {
            out.stats.add("rephrase.not_kept");
            continue;
        }
        out.accepted.emplace(selected[owner[i]].parent.query_id, rephrased[i]);
    }
    out.stats.add("rephrase.accepted", out.accepted.size());
    return out;
}

struct RephraseStageResult {
    std::vector<TripletRecord> triplets;
    std::vector<QueryRecord> rephrased;
    std::vector<Verdict> audit;
    StageStats stats;
    std::vector<std::string> failures;
};

inline std::vector<RephraseCandidate> triplet_rephrase_selection(std::span<const TripletRecord> triplets,
                                                                 double fraction, std::uint64_t seed) {
    std::vector<QueryRecord> positives;
    std::map<std::string, std::string> image_of;
    for (const auto& t : triplets) {
        positives.push_back(t.positive);
        image_of[t.positive.query_id] = t.image_path;
    }
    std::vector<RephraseCandidate> out;
    for (auto& q : generation::select_for_rephrasing(positives, fraction, seed)) {
        auto path = image_of[q.query_id];
        out.push_back({std::move(q), std::move(path)});
    }
    return out;
}

// Replaces the selected triplets' positives with verified rephrasings.
inline RephraseStageResult run_rephrase_stage(std::span<const TripletRecord> triplets, double fraction,
                                              std::uint64_t seed, StageContext& ctx) {
    RephraseStageResult out;
    for (const auto& t : triplets) validate(t);
    const auto selected = triplet_rephrase_selection(triplets, fraction, seed);
    auto batch = rephrase_and_verify(selected, ctx);
    out.triplets.assign(triplets.begin(), triplets.end());
    for (auto& t : out.triplets) {
        auto it = batch.accepted.find(t.positive.query_id);
        if (it == batch.accepted.end()) continue;
        t.positive = it->second;
        out.rephrased.push_back(it->second);
    }
    out.audit = std::move(batch.audit);
    out.stats = std::move(batch.stats);
    out.failures = std::move(batch.failures);
    return out;
}

// Rephrases training groups in place. The positive's text is replaced in
// every member that shares it, so document-level groups (one query, four
// pages) stay consistent.
inline RephraseStageResult rephrase_groups(std::vector<dataset::Group>& groups, double fraction, std::uint64_t seed,
                                           StageContext& ctx) {
    RephraseStageResult out;
    std::vector<QueryRecord> proxies;
    std::map<std::string, std::size_t> index_of;
    std::map<std::string, std::string> image_of;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        dataset::validate_group(groups[i]);
        const auto& pos = groups[i].front();
        QueryRecord q;
        q.query_id = pos.group_id;
        q.page_id = pos.page_id;
        q.text = pos.query_text;
        q.polarity = Polarity::positive;
        q.kind = QueryKind::imported;
        index_of[q.query_id] = i;
        image_of[q.query_id] = pos.image_path;
        proxies.push_back(std::move(q));
    }
    std::vector<RephraseCandidate> selected;
    for (auto& q : generation::select_for_rephrasing(proxies, fraction, seed)) {
        auto path = image_of[q.query_id];
        selected.push_back({std::move(q), std::move(path)});
    }
    auto batch = rephrase_and_verify(selected, ctx);
    for (auto& [parent_id, record] : batch.accepted) {
        auto& g = groups[index_of.at(parent_id)];
        const auto original = g.front().query_text;
        for (auto& e : g)
            if (e.query_text == original) e.query_text = record.text;
        out.rephrased.push_back(record);
    }
    std::sort(out.rephrased.begin(), out.rephrased.end(),
              [](const QueryRecord& a, const QueryRecord& b) { return a.query_id < b.query_id; });
    out.audit = std::move(batch.audit);
    out.stats = std::move(batch.stats);
    out.failures = std::move(batch.failures);
    return out;
}

// ---- dry-run plans -------------------------------------------------------------

// Requests a command would send, counted per tag, with one rendered prompt
// per tag. Counts for stages that depend on model output are upper bounds.
struct Plan {
    struct Entry {
        std::size_t count = 0;
        bool upper_bound = false;
        std::string sample_prompt;
    };
    std::map<std::string, Entry> requests;
    std::size_t skipped_pages = 0;

    void add(const gateway::ChatRequest& r, std::size_t times = 1, bool upper_bound = false) {
        if (times == 0) return;
        auto& e = requests[r.request_tag];
        e.count += times;
        e.upper_bound = e.upper_bound || upper_bound;
        if (e.sample_prompt.empty()) e.sample_prompt = gateway::user_text(r);
    }

    [[nodiscard]] std::size_t total() const {
        std::size_t n = 0;
        for (const auto& [_, e] : requests) n += e.count;
        return n;
    }

    [[nodiscard]] ojson to_json() const {
        ojson reqs = ojson::object();
        for (const auto& [tag, e] : requests)
            reqs[tag] = ojson{{"count", e.count}, {"upper_bound", e.upper_bound}, {"sample_prompt", e.sample_prompt}};
        return ojson{{"dry_run", true}, {"requests", std::move(reqs)}, {"skipped_pages", skipped_pages}};
    }
};

inline constexpr std::string_view kPlannedQuery = "<generated query>";

// Verification requests for `n` not-yet-generated queries.
inline void plan_verification(Plan& plan, const gateway::ImagePart& image, std::size_t n, StageContext& ctx) {
    const auto& route = require_route(ctx.routes.verify, "verify");
    QueryRecord placeholder;
    placeholder.query_id = "planned";
    placeholder.text = std::string(kPlannedQuery);
    for (auto v : {PromptVariant::A, PromptVariant::B})
        plan.add(verification::verification_request(image, placeholder, v, ctx.prompts, route), n, true);
}

inline Plan plan_positive_stage(std::span<const PageRecord> pages, StageContext& ctx) {
    const auto& route = require_route(ctx.routes.positive_gen, "positive_gen");
    Plan plan;
    StageStats scratch;
    for (const auto& p : pages) {
        auto image = try_load_image(p.page_id, p.image_path, scratch);
        if (!image) {
            ++plan.skipped_pages;
            continue;
        }
        plan.add(generation::positive_request(*image, ctx.params, ctx.prompts, route));
        plan_verification(plan, *image, ctx.params.n_positive_candidates, ctx);
    }
    return plan;
}

inline Plan plan_negative_stage(std::span<const AnchoredQuery> positives, NegativeMode mode, StageContext& ctx) {
    Plan plan;
    StageStats scratch;
    for (const auto& a : positives) {
        generation::require_kept_positive(a.query);
        auto image = try_load_image(a.page.page_id, a.page.image_path, scratch);
        if (!image) {
            ++plan.skipped_pages;
            continue;
        }
        for (const auto& r : negative_requests(a.query, mode, ctx)) plan.add(r);
        const auto n = mode == NegativeMode::finance ? ctx.params.finance_properties.size()
                                                     : ctx.params.n_negative_variants;
        plan_verification(plan, *image, n, ctx);
    }
    return plan;
}

inline Plan plan_rephrase(std::span<const RephraseCandidate> selected, StageContext& ctx) {
    const auto& route = require_route(ctx.routes.rephrase, "rephrase");
    Plan plan;
    StageStats scratch;
    for (const auto& c : selected) {
        plan.add(generation::rephrase_request(c.parent, ctx.prompts, route));
        auto image = try_load_image(c.parent.page_id, c.image_path, scratch);
        if (!image) {
            ++plan.skipped_pages;
            continue;
        }
        plan_verification(plan, *image, 1, ctx);
    }
    return plan;
}

}  // namespace hardneg::pipeline
