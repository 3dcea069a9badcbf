// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Runs offline against the scripted mock.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>

#include "support.hpp"

using namespace hardneg;
using testing_support::TempDir;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what) {
        if (!ok && pass) {
            pass = false;
            detail = what;
        }
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// ---- 1. metric oracle ----------------------------------------------------------

double brute_ndcg(const std::vector<eval::Candidate>& ranked, const std::set<std::string>& rel, std::size_t k) {
    double dcg = 0, idcg = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const double disc = 1.0 / std::log2(static_cast<double>(i) + 2.0);
        if (i < ranked.size() && rel.count(ranked[i].page_id)) dcg += disc;
        if (i < rel.size()) idcg += disc;
    }
    return dcg / idcg;
}

double brute_recall(const std::vector<eval::Candidate>& ranked, const std::set<std::string>& rel, std::size_t k) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) hits += rel.count(ranked[i].page_id);
    return static_cast<double>(hits) / static_cast<double>(rel.size());
}

Outcome metric_oracle() {
    Outcome o;
    const auto t0 = Clock::now();
    std::mt19937_64 rng(20240517);
    double worst = 0.0;
    const int instances = 1000;
    for (int inst = 0; inst < instances && o.pass; ++inst) {
        eval::RankedRun run;
        eval::Qrels qrels;
        const auto nq = 1 + rng() % 50;
        for (std::size_t q = 0; q < nq; ++q) {
            const auto qid = "q" + std::to_string(q);
            auto& cands = run.queries[qid];
            const auto nc = 1 + rng() % 30;
            for (std::size_t c = 0; c < nc; ++c)
                cands.push_back({"d" + std::to_string(c), static_cast<double>(rng() % 10000) / 13.0});
            eval::sort_candidates(cands);
            for (auto r = rng() % 6; r > 0; --r) qrels.relevant[qid].insert("d" + std::to_string(rng() % 35));
        }
        for (std::size_t k : {1u, 5u, 10u, 20u}) {
            const auto n = eval::ndcg_at_k(run, qrels, k);
            const auto r = eval::recall_at_k(run, qrels, k);
            double nsum = 0, rsum = 0;
            std::size_t judged = 0;
            for (const auto& [qid, cands] : run.queries) {
                const auto it = qrels.relevant.find(qid);
                if (it == qrels.relevant.end() || it->second.empty()) {
                    o.check(!n.per_query.count(qid), "unjudged query " + qid + " was scored");
                    continue;
                }
                ++judged;
                const double bn = brute_ndcg(cands, it->second, k), br = brute_recall(cands, it->second, k);
                nsum += bn;
                rsum += br;
                if (!n.per_query.count(qid) || !r.per_query.count(qid)) {
                    o.check(false, "judged query " + qid + " missing from results");
                    continue;
                }
                worst = std::max({worst, std::abs(n.per_query.at(qid) - bn), std::abs(r.per_query.at(qid) - br)});
            }
            if (judged) {
                worst = std::max(worst, std::abs(n.mean - nsum / static_cast<double>(judged)));
                worst = std::max(worst, std::abs(r.mean - rsum / static_cast<double>(judged)));
            }
        }
    }
    const double secs = seconds_since(t0);
    o.check(worst <= 1e-9, "max abs error " + fmt("%.3g", worst));
    o.check(secs < 10.0, "runtime " + fmt("%.2f s", secs));
    if (o.pass) o.detail = std::to_string(instances) + " instances, max abs error " + fmt("%.3g", worst) + ", " +
                           fmt("%.2f s", secs);
    return o;
}

// ---- 2. worked metric values -----------------------------------------------------

eval::RankedRun one_query(const std::vector<std::string>& pages) {
    eval::RankedRun r;
    for (std::size_t i = 0; i < pages.size(); ++i)
        r.queries["q"].push_back({pages[i], static_cast<double>(pages.size() - i)});
    return r;
}

Outcome worked_values() {
    Outcome o;
    eval::Qrels q;
    q.relevant["q"] = {"rel"};
    const double at3 = eval::ndcg_at_k(one_query({"a", "b", "rel", "c", "d"}), q, 5).mean;
    const double at1 = eval::ndcg_at_k(one_query({"rel", "a", "b"}), q, 5).mean;
    const double out = eval::ndcg_at_k(one_query({"a", "b", "c", "d", "e", "rel"}), q, 5).mean;
    o.check(at3 == 0.5, "rank 3 gives " + fmt("%.17g", at3));
    o.check(at1 == 1.0, "rank 1 gives " + fmt("%.17g", at1));
    o.check(out == 0.0, "rank 6 gives " + fmt("%.17g", out));
    if (o.pass) o.detail = "rank3=0.5 rank1=1.0 rank6=0.0 (exact)";
    return o;
}

// ---- 3. keep-policy truth tables -------------------------------------------------

Outcome truth_tables() {
    Outcome o;
    // {A answerable, B answerable} -> keep as positive, keep as negative.
    const struct {
        bool a, b, pos, neg;
    } rows[] = {{true, true, true, false}, {true, false, false, false}, {false, true, false, false}, {false, false, false, true}};
    for (const auto& r : rows) {
        const std::string cell = std::string("(A=") + (r.a ? "Yes" : "No") + ", B=" + (r.b ? "Yes" : "No") + ")";
        o.check(verification::keep_positive({r.a, r.b}) == r.pos, "keep_positive" + cell);
        o.check(verification::keep_negative({r.a, r.b}) == r.neg, "keep_negative" + cell);
    }
    if (o.pass) o.detail = "8/8 cells";
    return o;
}

// ---- 4. dataset arithmetic -------------------------------------------------------

std::vector<dataset::Group> source_groups(const std::string& source, std::size_t n) {
    return dataset::group_examples(testing_support::synthetic_examples(n, source));
}

Outcome dataset_arithmetic() {
    Outcome o;
    const std::map<std::string, std::vector<dataset::Group>> sources{
        {"Col-HNQue", source_groups("Col-HNQue", 150)}, {"Fin-HNQue", source_groups("Fin-HNQue", 20)}};
    const auto col = dataset::compose_mix("Col-HNQue", std::vector<dataset::MixRecipe>{{"Col-HNQue", 120}}, sources, 7);
    const auto fin = dataset::compose_mix("Fin-HNQue", std::vector<dataset::MixRecipe>{{"Fin-HNQue", 20}}, sources, 7);
    o.check(col.examples.size() == 480, "Col-HNQue gave " + std::to_string(col.examples.size()) + " examples");
    o.check(col.manifest.total_examples == 480 && col.manifest.total_positives == 120, "Col-HNQue manifest totals");
    o.check(fin.examples.size() == 80, "Fin-HNQue gave " + std::to_string(fin.examples.size()) + " examples");
    o.check(fin.manifest.total_examples == 80 && fin.manifest.total_positives == 20, "Fin-HNQue manifest totals");
    const auto rc = dataset::validate_manifest(col.manifest, col.examples);
    const auto rf = dataset::validate_manifest(fin.manifest, fin.examples);
    o.check(rc.mismatches.empty(), "Col-HNQue manifest mismatches: " + (rc.mismatches.empty() ? "" : rc.mismatches[0]));
    o.check(rf.mismatches.empty(), "Fin-HNQue manifest mismatches: " + (rf.mismatches.empty() ? "" : rf.mismatches[0]));
    if (o.pass) o.detail = "120 -> 480, 20 -> 80, empty mismatch reports";
    return o;
}

// ---- 5. batch contract -----------------------------------------------------------

Outcome batch_contract() {
    Outcome o;
    std::mt19937_64 rng(8);
    std::size_t batches = 0;
    for (int trial = 0; trial < 200 && o.pass; ++trial) {
        const auto n = 8 + static_cast<std::size_t>(rng() % 120);
        auto ex = testing_support::synthetic_examples(n, "S" + std::to_string(trial));
        std::shuffle(ex.begin(), ex.end(), rng);
        const auto b = dataset::make_batches(ex, dataset::kGroupsPerBatch, rng());
        o.check(b.batches.size() == n / 8, "trial " + std::to_string(trial) + ": wrong batch count");
        std::map<std::string, std::size_t> home;
        for (std::size_t bi = 0; bi < b.batches.size(); ++bi) {
            const auto& batch = b.batches[bi];
            ++batches;
            std::size_t pos = 0, neg = 0;
            std::map<std::string, std::pair<int, int>> members;
            for (const auto& e : batch.examples) {
                (e.label == dataset::Label::positive ? pos : neg)++;
                auto& m = members[e.group_id];
                (e.label == dataset::Label::positive ? m.first : m.second)++;
            }
            const auto where = "trial " + std::to_string(trial) + " batch " + std::to_string(bi);
            o.check(pos == 8 && neg == 24, where + ": " + std::to_string(pos) + " positives, " + std::to_string(neg) +
                                               " negatives");
            o.check(members.size() == 8, where + ": " + std::to_string(members.size()) + " groups");
            for (const auto& [gid, m] : members) {
                o.check(m.first == 1 && m.second == 3, where + ": group " + gid + " split");
                o.check(home.emplace(gid, bi).second, where + ": group " + gid + " appears in two batches");
            }
        }
    }
    if (o.pass) o.detail = "200 datasets, " + std::to_string(batches) + " batches, all 8+24 co-located";
    return o;
}

// ---- 6. loss and score math ------------------------------------------------------

Outcome loss_math() {
    Outcome o;
    const double s = dataset::relevance_score({std::log(3.0), 0.0});
    o.check(std::abs(s - 0.75) <= 1e-12, "relevance_score(ln 3, 0) = " + fmt("%.17g", s));
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> d(-30.0, 30.0);
    double worst_c = 0, worst_s = 0;
    for (int i = 0; i < 10000; ++i) {
        const double t = d(rng), f = d(rng), c = d(rng);
        const double v = dataset::relevance_score({t, f});
        worst_c = std::max(worst_c, std::abs(v + dataset::relevance_score({f, t}) - 1.0));
        worst_s = std::max(worst_s, std::abs(dataset::relevance_score({t + c, f + c}) - v));
    }
    o.check(worst_c <= 1e-12, "complement error " + fmt("%.3g", worst_c));
    o.check(worst_s <= 1e-9, "shift error " + fmt("%.3g", worst_s));

    const std::vector<dataset::Label> one{dataset::Label::positive};
    const std::vector<double> half{0.5};
    const auto terms = dataset::weighted_loss_terms(one, half);
    o.check(std::abs(terms.weighted_nll - 3.0 * std::log(2.0)) <= 1e-12,
            "single positive at 0.5: weighted nll " + fmt("%.17g", terms.weighted_nll));
    dataset::TrainingBatch b;
    b.groups = {"g"};
    b.examples.push_back({"g", "p", "", "q+", dataset::Label::positive, "S"});
    for (int i = 0; i < 3; ++i) b.examples.push_back({"g", "p", "", "q-" + std::to_string(i), dataset::Label::negative, "S"});
    const std::vector<double> perfect{1.0, 0.0, 0.0, 0.0};
    const double zero = dataset::weighted_batch_loss(b, perfect);
    o.check(zero == 0.0, "perfect predictions give " + fmt("%.3g", zero));
    if (o.pass)
        o.detail = "0.75 exact to 1e-12; 10000 pairs (complement " + fmt("%.1g", worst_c) + ", shift " +
                   fmt("%.1g", worst_s) + "); 3 ln 2; perfect = 0";
    return o;
}

// ---- 7. rerank protocol ----------------------------------------------------------

Outcome rerank_protocol() {
    Outcome o;
    const fs::path fixtures = fs::path(HARDNEG_FIXTURES_DIR) / "eval";
    const auto run = eval::parse_trec_run(fixtures / "baseline.run");
    const auto qrels = eval::parse_qrels(fixtures / "qrels.txt");

    eval::ScoreTable oracle, identity;
    for (const auto& [qid, cands] : run.queries) {
        const auto* rel = qrels.find(qid);
        for (std::size_t i = 0; i < cands.size(); ++i) {
            oracle[{qid, cands[i].page_id}] = rel && rel->count(cands[i].page_id) ? 1.0 : 0.0;
            identity[{qid, cands[i].page_id}] = -static_cast<double>(i);
        }
    }
    const auto per_query = eval::ndcg_at_k(eval::rerank(run, oracle), qrels, 5).per_query;
    std::size_t eligible = 0;
    for (const auto& [qid, cands] : run.queries) {
        const auto* rel = qrels.find(qid);
        if (!rel) continue;
        bool in_top = false;
        for (std::size_t i = 0; i < std::min<std::size_t>(20, cands.size()); ++i) in_top = in_top || rel->count(cands[i].page_id);
        if (!in_top) continue;
        ++eligible;
        o.check(per_query.at(qid) == 1.0, "oracle ndcg@5 for " + qid + " = " + fmt("%.6f", per_query.at(qid)));
    }
    o.check(eligible > 0, "no eligible queries in fixture");

    const std::vector<eval::MetricSpec> metrics{eval::parse_metric("ndcg@5"), eval::parse_metric("ndcg@10"),
                                                eval::parse_metric("recall@1"), eval::parse_metric("recall@5")};
    const auto rep = eval::delta_report(run, eval::rerank(run, identity), qrels, metrics);
    for (const auto& r : rep.rows) o.check(r.delta == 0.0, "identity delta for " + r.metric + " = " + fmt("%.3g", r.delta));
    if (o.pass) o.detail = std::to_string(eligible) + " queries at ndcg@5 = 1.0; identity deltas all 0";
    return o;
}

// ---- 8. end-to-end mock pipeline -------------------------------------------------

pipeline::PipelineConfig mock_config() {
    pipeline::PipelineConfig cfg;
    cfg.endpoints = {gateway::mock_endpoint("mock", 8)};
    for (auto* r : {&cfg.routes.positive_gen, &cfg.routes.negative_gen, &cfg.routes.verify, &cfg.routes.rephrase,
                    &cfg.routes.rerank})
        r->endpoint_id = "mock";
    cfg.prompts_dir = HARDNEG_PROMPTS_DIR;
    cfg.generation.n_negative_variants = 10;
    cfg.generation.seed = 7;
    return cfg;
}

struct RunFiles {
    std::string generic, generic_manifest, finance, finance_manifest;
    std::size_t generic_triplets = 0, finance_triplets = 0;
};

RunFiles run_pipeline(const fs::path& corpus, const fs::path& out) {
    auto cfg = mock_config();
    auto gw = gateway::scripted_mock(gateway::load_script(fs::path(HARDNEG_SAMPLES_DIR) / "mock_script.json"),
                                     cfg.endpoints);
    pipeline::Session s(cfg, *gw);
    pipeline::cmd_gen_positives(s, corpus, out / "positives.jsonl");
    const auto g = pipeline::cmd_gen_negatives(s, out / "positives.jsonl", pipeline::NegativeMode::generic,
                                               out / "triplets.generic.jsonl");
    const auto f = pipeline::cmd_gen_negatives(s, out / "positives.jsonl", pipeline::NegativeMode::finance,
                                               out / "triplets.finance.jsonl");
    RunFiles r;
    r.generic = read_file(out / "triplets.generic.jsonl");
    r.generic_manifest = read_file(out / "triplets.generic.manifest.json");
    r.finance = read_file(out / "triplets.finance.jsonl");
    r.finance_manifest = read_file(out / "triplets.finance.manifest.json");
    r.generic_triplets = g.summary["triplets"].get<std::size_t>();
    r.finance_triplets = f.summary["triplets"].get<std::size_t>();
    return r;
}

Outcome end_to_end() {
    Outcome o;
    const auto t0 = Clock::now();
    TempDir dir;
    std::string corpus_body;
    for (int i = 0; i < 25; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "synth-p%02d", i);
        corpus_body += to_json(testing_support::make_page(dir / "pages", id)).dump() + "\n";
    }
    testing_support::write_text(dir / "corpus.jsonl", corpus_body);

    const auto a = run_pipeline(dir / "corpus.jsonl", dir / "out");
    const auto b = run_pipeline(dir / "corpus.jsonl", dir / "out");
    const double secs = seconds_since(t0);

    o.check(a.generic_triplets > 0, "generic mode produced no triplets");
    o.check(a.finance_triplets > 0, "finance mode produced no triplets");
    o.check(a.generic == b.generic && a.finance == b.finance, "triplet JSONL differs between runs");
    o.check(a.generic_manifest == b.generic_manifest && a.finance_manifest == b.finance_manifest,
            "manifest differs between runs");

    std::set<FinanceProperty> seen;
    for (const auto& t : read_jsonl(dir / "out/triplets.finance.jsonl"))
        for (const auto& n : t.negatives)
            if (n.property) seen.insert(*n.property);
    o.check(seen.size() == kAllFinanceProperties.size(),
            "finance properties seen: " + std::to_string(seen.size()) + " of 6");
    o.check(secs < 30.0, "runtime " + fmt("%.2f s", secs));
    if (o.pass)
        o.detail = "25 pages; generic " + std::to_string(a.generic_triplets) + " / finance " +
                   std::to_string(a.finance_triplets) + " triplets; 6/6 properties; byte-identical; " +
                   fmt("%.2f s", secs);
    return o;
}

// ---- 9. finance prompt rendering -------------------------------------------------

Outcome finance_rendering() {
    Outcome o;
    const auto lib = generation::PromptLibrary::load(HARDNEG_PROMPTS_DIR);
    const auto positive = testing_support::kept_positive("p", "What was total revenue for ACME in fiscal 2022?");
    const generation::StageRoute route{"mock", 0.7, 512};
    for (auto p : kAllFinanceProperties) {
        const auto text = gateway::user_text(generation::finance_request(positive, p, lib, route));
        const auto name = std::string(to_string(p));
        o.check(text.find(generation::property_description(p)) != std::string::npos, name + ": description missing");
        o.check(text.find(positive.text) != std::string::npos, name + ": positive query missing");
        const auto left = generation::placeholders_in(text);
        o.check(left.empty(), name + ": unbound {" + (left.empty() ? "" : left[0]) + "}");
    }
    if (o.pass) o.detail = "6/6 properties bound, no placeholders left";
    return o;
}

// ---- 10. rephrasing split --------------------------------------------------------

Outcome rephrase_split() {
    Outcome o;
    std::vector<QueryRecord> ps;
    for (int i = 0; i < 1000; ++i)
        ps.push_back(testing_support::kept_positive("pg" + std::to_string(i), "question " + std::to_string(i)));
    const auto a = generation::select_for_rephrasing(ps, 0.5, 7);
    const auto b = generation::select_for_rephrasing(ps, 0.5, 7);
    std::set<std::string> ids;
    for (const auto& q : a) ids.insert(q.query_id);
    o.check(a.size() == 500, "selected " + std::to_string(a.size()));
    o.check(ids.size() == a.size(), "duplicate selections");
    o.check(a == b, "selection differs between calls with the same seed");
    if (o.pass) o.detail = "500 of 1000, distinct, deterministic";
    return o;
}

}  // namespace

int main() {
    testing_support::quiet_logs();
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"metric oracle equivalence", metric_oracle},
        {"worked metric values", worked_values},
        {"keep-policy truth tables", truth_tables},
        {"dataset arithmetic at 1:1000", dataset_arithmetic},
        {"batch contract", batch_contract},
        {"loss and score math", loss_math},
        {"rerank protocol", rerank_protocol},
        {"end-to-end mock pipeline", end_to_end},
        {"finance prompt rendering", finance_rendering},
        {"rephrasing split", rephrase_split},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s  %2zu  %-30s %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
        failed += o.pass ? 0 : 1;
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
    return failed == 0 ? 0 : 1;
}
