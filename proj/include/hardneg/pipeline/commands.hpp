#pragma once

// One function per CLI subcommand. Each returns a machine-readable summary
// and an exit code: 0 success, 1 page- or record-level failures, 2 a metric
// regression beyond eval.max_regression.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <toml.hpp>

#include "hardneg/corpus/jsonl.hpp"
#include "hardneg/dataset/examples.hpp"
#include "hardneg/eval/metrics.hpp"
#include "hardneg/eval/rerank.hpp"
#include "hardneg/eval/run.hpp"
#include "hardneg/pipeline/config.hpp"
#include "hardneg/pipeline/stages.hpp"

namespace hardneg::pipeline {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailures = 1;
inline constexpr int kExitRegression = 2;

struct CommandOptions {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> limit;
    bool dry_run = false;
    bool allow_missing = false;
};

struct CommandResult {
    ojson summary;
    int exit_code = kExitOk;
    std::string report_text;  // human-readable extra, if any
};

// `--seed` overrides every seed in the configuration.
inline PipelineConfig apply_overrides(PipelineConfig cfg, const CommandOptions& opts) {
    if (opts.seed) {
        cfg.generation.seed = *opts.seed;
        cfg.dataset.seed = *opts.seed;
    }
    return cfg;
}

template <typename T>
void apply_limit(std::vector<T>& v, const CommandOptions& opts) {
    if (opts.limit && v.size() > *opts.limit) v.resize(*opts.limit);
}

// "out/x.jsonl" + ".audit.jsonl" -> "out/x.audit.jsonl"
inline fs::path sibling(const fs::path& p, std::string_view suffix) {
    return p.parent_path() / (p.stem().string() + std::string(suffix));
}

// Corpus pages with relative image paths resolve against the corpus file's directory.
inline std::vector<PageRecord> read_corpus(const fs::path& corpus_path) {
    auto pages = read_pages(corpus_path);
    const auto base = corpus_path.parent_path();
    for (auto& p : pages)
        if (fs::path(p.image_path).is_relative()) p.image_path = (base / p.image_path).lexically_normal().string();
    return pages;
}

inline void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

inline std::size_t write_audit(std::span<const Verdict> audit, const fs::path& path) {
    return write_jsonl_with(audit, path, [](const Verdict& v) { return verification::to_json(v); });
}

inline ojson failures_json(const std::vector<std::string>& failures) {
    ojson j = ojson::array();
    for (const auto& f : failures) j.push_back(f);
    return j;
}

inline CommandResult finish(ojson summary, const std::vector<std::string>& failures) {
    CommandResult r;
    summary["failures"] = failures_json(failures);
    r.exit_code = failures.empty() ? kExitOk : kExitFailures;
    r.summary = std::move(summary);
    return r;
}

inline CommandResult dry_run_result(const char* command, const Plan& plan) {
    ojson s;
    s["command"] = command;
    s["plan"] = plan.to_json();
    return {std::move(s), kExitOk, {}};
}

struct Session {
    PipelineConfig config;
    gateway::Gateway& gw;
    generation::PromptLibrary prompts;

    Session(PipelineConfig cfg, gateway::Gateway& g)
        : config(std::move(cfg)),
          gw(g),
          prompts(generation::PromptLibrary::load(config.prompts_dir, config.prompt_version)) {}

    StageContext context() { return {gw, prompts, config.routes, config.generation, config.strict_ambiguous}; }
};

// ---- gen-positives -------------------------------------------------------------

inline CommandResult cmd_gen_positives(Session& s, const fs::path& corpus_path, const fs::path& out_path,
                                       const CommandOptions& opts = {}) {
    auto pages = read_corpus(corpus_path);
    apply_limit(pages, opts);
    auto ctx = s.context();
    if (opts.dry_run) return dry_run_result("gen-positives", plan_positive_stage(pages, ctx));

    auto res = run_positive_stage(pages, ctx);
    ensure_parent(out_path);
    const auto audit_path = sibling(out_path, ".audit.jsonl");
    write_anchored(res.kept, out_path);
    write_audit(res.audit, audit_path);

    ojson summary;
    summary["command"] = "gen-positives";
    summary["pages"] = pages.size();
    summary["kept_positives"] = res.kept.size();
    summary["stats"] = res.stats.to_json();
    summary["outputs"] = ojson{{"positives", out_path.string()}, {"audit", audit_path.string()}};
    return finish(std::move(summary), res.failures);
}

// ---- gen-negatives -------------------------------------------------------------

// Manifest describing a triplet file as a single source.
inline DatasetManifest triplet_manifest(const std::string& name, std::span<const TripletRecord> triplets,
                                        std::uint64_t seed, double rephrase_fraction = 0.0) {
    DatasetManifest m;
    m.name = name;
    m.sources.push_back({name, triplets.size()});
    m.total_positives = triplets.size();
    m.total_examples = kExamplesPerGroup * triplets.size();
    m.rephrase_fraction = rephrase_fraction;
    m.seed = seed;
    return m;
}

inline CommandResult cmd_gen_negatives(Session& s, const fs::path& positives_path, NegativeMode mode,
                                       const fs::path& out_path, const CommandOptions& opts = {}) {
    auto positives = read_anchored(positives_path);
    apply_limit(positives, opts);
    auto ctx = s.context();
    if (opts.dry_run) return dry_run_result("gen-negatives", plan_negative_stage(positives, mode, ctx));

    auto res = run_negative_stage(positives, mode, ctx);
    ensure_parent(out_path);
    const auto audit_path = sibling(out_path, ".audit.jsonl");
    const auto manifest_path = sibling(out_path, ".manifest.json");
    write_jsonl(res.triplets, out_path);
    write_audit(res.audit, audit_path);
    const auto manifest = triplet_manifest(out_path.stem().string(), res.triplets, s.config.generation.seed);
    write_manifest(manifest, manifest_path);

    ojson summary;
    summary["command"] = "gen-negatives";
    summary["mode"] = to_string(mode);
    summary["positives"] = positives.size();
    summary["triplets"] = res.triplets.size();
    summary["dropped_pages"] = res.dropped_pages;
    summary["stats"] = res.stats.to_json();
    summary["outputs"] = ojson{
        {"triplets", out_path.string()}, {"audit", audit_path.string()}, {"manifest", manifest_path.string()}};
    return finish(std::move(summary), res.failures);
}

// ---- rephrase ------------------------------------------------------------------

inline CommandResult cmd_rephrase(Session& s, const fs::path& triplets_path, const fs::path& out_path,
                                  const CommandOptions& opts = {}) {
    auto triplets = read_jsonl(triplets_path);
    apply_limit(triplets, opts);
    auto ctx = s.context();
    const auto fraction = s.config.dataset.rephrase_fraction;
    const auto seed = s.config.dataset.seed;
    if (opts.dry_run) {
        const auto selected = triplet_rephrase_selection(triplets, fraction, seed);
        return dry_run_result("rephrase", plan_rephrase(selected, ctx));
    }

    auto res = run_rephrase_stage(triplets, fraction, seed, ctx);
    ensure_parent(out_path);
    const auto audit_path = sibling(out_path, ".audit.jsonl");
    const auto manifest_path = sibling(out_path, ".manifest.json");
    write_jsonl(res.triplets, out_path);
    write_audit(res.audit, audit_path);
    write_manifest(triplet_manifest(out_path.stem().string(), res.triplets, seed, fraction), manifest_path);

    ojson summary;
    summary["command"] = "rephrase";
    summary["triplets"] = res.triplets.size();
    summary["rephrased"] = res.rephrased.size();
    summary["stats"] = res.stats.to_json();
    summary["outputs"] = ojson{
        {"triplets", out_path.string()}, {"audit", audit_path.string()}, {"manifest", manifest_path.string()}};
    return finish(std::move(summary), res.failures);
}

// ---- build-dataset -------------------------------------------------------------

// A dataset recipe (TOML; paths relative to the recipe file):
//
//   name = "Fin-HNQue"
//   [[sources]]
//   name = "Fin-HNQue"
//   kind = "triplets"        # or "hndoc"
//   path = "fin_triplets.jsonl"
//   positives = 20000
//   rephrase = false         # defaults to true for names starting "Reph-"
struct RecipeSource {
    std::string name;
    std::string kind = "triplets";
    fs::path path;
    std::uint64_t positives = 0;
    bool rephrase = false;
};

struct Recipe {
    std::string name;
    std::vector<RecipeSource> sources;
};

inline Recipe parse_recipe(std::string_view text, const fs::path& base_dir = ".") {
    toml::table root;
    try {
        root = toml::parse(text);
    } catch (const toml::parse_error& e) {
        throw ParseError("recipe", e.source().begin.line, std::string(e.description()));
    }
    Recipe r;
    r.name = root["name"].value_or(std::string("dataset"));
    auto* sources = root["sources"].as_array();
    if (!sources || sources->empty()) throw ValidationError("recipe: at least one [[sources]] entry is required");
    for (const auto& node : *sources) {
        const auto* t = node.as_table();
        if (!t) throw ValidationError("recipe: sources must be tables");
        RecipeSource s;
        s.name = (*t)["name"].value_or(std::string());
        s.kind = (*t)["kind"].value_or(std::string("triplets"));
        const auto path = (*t)["path"].value<std::string>();
        const auto positives = (*t)["positives"].value<std::int64_t>();
        if (s.name.empty() || !path || !positives || *positives < 0)
            throw ValidationError("recipe: each source needs name, path and a non-negative positives count");
        if (s.kind != "triplets" && s.kind != "hndoc")
            throw ValidationError("recipe: source '" + s.name + "' has unknown kind '" + s.kind + "'");
        s.path = base_dir / *path;
        s.positives = static_cast<std::uint64_t>(*positives);
        s.rephrase = (*t)["rephrase"].value_or(s.name.rfind("Reph-", 0) == 0);
        r.sources.push_back(std::move(s));
    }
    return r;
}

inline Recipe load_recipe(const fs::path& path) {
    return parse_recipe(read_file(path), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

inline std::vector<dataset::Group> load_source_groups(const RecipeSource& src, const CommandOptions& opts) {
    std::vector<dataset::TrainingExample> examples;
    if (src.kind == "hndoc") {
        auto ingest = dataset::ingest_hndoc(src.path, opts.limit, src.name);
        if (ingest.skipped) spdlog::warn("{}: skipped {} malformed row(s)", src.name, ingest.skipped);
        examples = std::move(ingest.examples);
    } else {
        auto triplets = read_jsonl(src.path);
        apply_limit(triplets, opts);
        examples = dataset::triplets_to_examples(triplets, src.name);
    }
    return dataset::group_examples(examples);
}

inline CommandResult cmd_build_dataset(Session& s, const fs::path& recipe_path, const fs::path& out_dir,
                                       const CommandOptions& opts = {}) {
    const auto recipe = load_recipe(recipe_path);
    const auto seed = s.config.dataset.seed;
    const auto fraction = s.config.dataset.rephrase_fraction;

    std::map<std::string, std::vector<dataset::Group>> groups;
    std::vector<dataset::MixRecipe> mix_recipe;
    bool any_rephrase = false;
    for (const auto& src : recipe.sources) {
        groups[src.name] = load_source_groups(src, opts);
        mix_recipe.push_back({src.name, src.positives});
        any_rephrase = any_rephrase || src.rephrase;
    }
    auto mix = dataset::compose_mix(recipe.name, mix_recipe, groups, seed, any_rephrase ? fraction : 0.0);

    // Members of one source are contiguous in the mix, four per group.
    auto source_groups = [&](const std::string& name) {
        std::vector<dataset::Group> out;
        std::vector<std::size_t> offsets;
        for (std::size_t i = 0; i < mix.examples.size(); i += kExamplesPerGroup) {
            if (mix.examples[i].source != name) continue;
            out.emplace_back(mix.examples.begin() + static_cast<std::ptrdiff_t>(i),
                             mix.examples.begin() + static_cast<std::ptrdiff_t>(i + kExamplesPerGroup));
            offsets.push_back(i);
        }
        return std::make_pair(std::move(out), std::move(offsets));
    };

    auto ctx = s.context();
    if (opts.dry_run) {
        Plan plan;
        for (const auto& src : recipe.sources) {
            if (!src.rephrase) continue;
            auto [gs, _] = source_groups(src.name);
            std::vector<RephraseCandidate> selected;
            std::vector<QueryRecord> proxies;
            std::map<std::string, std::string> image_of;
            for (const auto& g : gs) {
                QueryRecord q;
                q.query_id = g.front().group_id;
                q.page_id = g.front().page_id;
                q.text = g.front().query_text;
                image_of[q.query_id] = g.front().image_path;
                proxies.push_back(std::move(q));
            }
            for (auto& q : generation::select_for_rephrasing(proxies, fraction, seed)) {
                auto path = image_of[q.query_id];
                selected.push_back({std::move(q), std::move(path)});
            }
            auto p = plan_rephrase(selected, ctx);
            for (const auto& [tag, e] : p.requests) {
                auto& dst = plan.requests[tag];
                dst.count += e.count;
                dst.upper_bound = dst.upper_bound || e.upper_bound;
                if (dst.sample_prompt.empty()) dst.sample_prompt = e.sample_prompt;
            }
            plan.skipped_pages += p.skipped_pages;
        }
        auto r = dry_run_result("build-dataset", plan);
        r.summary["manifest"] = to_json(mix.manifest);
        return r;
    }

    StageStats stats;
    std::vector<Verdict> audit;
    std::vector<QueryRecord> rephrased;
    std::vector<std::string> failures;
    for (const auto& src : recipe.sources) {
        if (!src.rephrase) continue;
        auto [gs, offsets] = source_groups(src.name);
        auto res = rephrase_groups(gs, fraction, seed, ctx);
        for (std::size_t g = 0; g < gs.size(); ++g)
            std::copy(gs[g].begin(), gs[g].end(), mix.examples.begin() + static_cast<std::ptrdiff_t>(offsets[g]));
        stats.merge(res.stats);
        audit.insert(audit.end(), res.audit.begin(), res.audit.end());
        rephrased.insert(rephrased.end(), res.rephrased.begin(), res.rephrased.end());
        failures.insert(failures.end(), res.failures.begin(), res.failures.end());
    }

    const auto report = dataset::validate_manifest(mix.manifest, mix.examples);
    if (!report.ok()) {
        std::string msg = "manifest does not match the composed dataset:";
        for (const auto& m : report.mismatches) msg += " " + m + ";";
        throw ValidationError(msg);
    }

    fs::create_directories(out_dir);
    ojson outputs;
    outputs["examples"] = (out_dir / "examples.jsonl").string();
    outputs["manifest"] = (out_dir / "manifest.json").string();
    dataset::write_examples(mix.examples, out_dir / "examples.jsonl");
    write_manifest(mix.manifest, out_dir / "manifest.json");
    if (any_rephrase) {
        write_jsonl_with(std::span<const QueryRecord>(rephrased), out_dir / "rephrased.jsonl",
                         [](const QueryRecord& q) { return to_json(q); });
        write_audit(audit, out_dir / "rephrase.audit.jsonl");
        outputs["rephrased"] = (out_dir / "rephrased.jsonl").string();
        outputs["audit"] = (out_dir / "rephrase.audit.jsonl").string();
    }
    std::size_t batches = 0;
    if (s.config.dataset.export_batches) {
        auto b = dataset::make_batches(mix.examples, s.config.dataset.batch_groups, seed);
        batches = dataset::write_batches(b.batches, out_dir / "batches.jsonl");
        outputs["batches"] = (out_dir / "batches.jsonl").string();
    }

    ojson summary;
    summary["command"] = "build-dataset";
    summary["manifest"] = to_json(mix.manifest);
    summary["rephrased"] = rephrased.size();
    summary["batches"] = batches;
    summary["stats"] = stats.to_json();
    summary["outputs"] = std::move(outputs);
    return finish(std::move(summary), failures);
}

// ---- export-batches ------------------------------------------------------------

inline CommandResult cmd_export_batches(const PipelineConfig& cfg, const fs::path& examples_path,
                                        const fs::path& out_path, const CommandOptions& opts = {}) {
    auto examples = dataset::read_examples(examples_path);
    if (opts.limit) {
        const auto keep = std::min(examples.size(), *opts.limit * kExamplesPerGroup);
        examples.resize(keep);
    }
    const auto seed = opts.seed.value_or(cfg.dataset.seed);
    auto b = dataset::make_batches(examples, cfg.dataset.batch_groups, seed);
    if (!opts.dry_run) {
        ensure_parent(out_path);
        dataset::write_batches(b.batches, out_path);
    }
    ojson summary;
    summary["command"] = "export-batches";
    summary["examples"] = examples.size();
    summary["batches"] = b.batches.size();
    summary["dropped_groups"] = b.dropped_groups;
    summary["seed"] = seed;
    if (opts.dry_run) summary["dry_run"] = true;
    else summary["outputs"] = ojson{{"batches", out_path.string()}};
    return {std::move(summary), kExitOk, {}};
}

// ---- rerank-eval ---------------------------------------------------------------

// Scores come from a "qid pageid score" file, or from the rerank endpoint,
// which needs query texts ("qid<TAB>text" lines) and the page corpus.
struct ScoreSource {
    std::optional<fs::path> scores_file;
    std::optional<fs::path> queries_file;
    std::optional<fs::path> corpus_file;
};

inline std::map<std::string, std::string> read_query_texts(const fs::path& path) {
    std::map<std::string, std::string> out;
    std::size_t lineno = 0;
    const auto body_text = read_file(path);
    for (const auto& raw : text::split_lines(body_text)) {
        ++lineno;
        const auto line = text::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string_view::npos) throw ParseError(path.string(), lineno, "expected 'qid<TAB>text'");
        const auto qid = std::string(text::trim(line.substr(0, tab)));
        const auto body = std::string(text::trim(line.substr(tab + 1)));
        if (qid.empty() || body.empty()) throw ParseError(path.string(), lineno, "empty query id or text");
        if (!out.emplace(qid, body).second) throw ParseError(path.string(), lineno, "duplicate query '" + qid + "'");
    }
    return out;
}

inline ojson pairs_json(const std::vector<std::pair<std::string, std::string>>& pairs) {
    ojson j = ojson::array();
    for (const auto& [q, p] : pairs) j.push_back(ojson::array({q, p}));
    return j;
}

inline CommandResult cmd_rerank_eval(Session& s, const fs::path& run_path, const fs::path& qrels_path,
                                     const ScoreSource& source, const fs::path& out_dir,
                                     const CommandOptions& opts = {}) {
    const auto& ev = s.config.eval;
    auto run = eval::parse_trec_run(run_path);
    if (opts.limit) {
        while (run.queries.size() > *opts.limit) run.queries.erase(std::prev(run.queries.end()));
    }
    const auto qrels = eval::parse_qrels(qrels_path);

    ojson summary;
    summary["command"] = "rerank-eval";
    eval::ScoreTable scores;
    std::vector<std::pair<std::string, std::string>> missing;
    if (source.scores_file) {
        scores = eval::parse_scores(*source.scores_file);
        summary["score_source"] = source.scores_file->string();
    } else {
        if (!source.queries_file || !source.corpus_file)
            throw ValidationError("endpoint scoring needs both a queries file and a corpus file");
        const auto texts = read_query_texts(*source.queries_file);
        std::map<std::string, PageRecord> pages;
        for (auto& p : read_corpus(*source.corpus_file)) pages.emplace(p.page_id, std::move(p));
        const auto& route = require_route(s.config.routes.rerank, "rerank");
        const auto& prompt = s.prompts.get(generation::TemplateId::rerank);
        if (opts.dry_run) {
            Plan plan;
            StageStats scratch;
            for (const auto& [qid, cands] : run.queries) {
                auto qt = texts.find(qid);
                if (qt == texts.end()) throw ValidationError("no query text for '" + qid + "'");
                for (std::size_t i = 0; i < std::min(ev.k_rerank, cands.size()); ++i) {
                    auto page = pages.find(cands[i].page_id);
                    std::optional<gateway::ImagePart> img;
                    if (page != pages.end()) img = try_load_image(page->first, page->second.image_path, scratch);
                    if (!img) {
                        ++plan.skipped_pages;
                        continue;
                    }
                    auto req = generation::make_request(route, "rerank", prompt.render({{"query", qt->second}}), &*img);
                    req.top_logprobs = ev.top_logprobs;
                    plan.add(req);
                }
            }
            return dry_run_result("rerank-eval", plan);
        }
        auto scoring = eval::score_with_gateway(run, texts, pages, s.gw, prompt, route, ev.k_rerank, ev.top_logprobs);
        scores = std::move(scoring.scores);
        missing = std::move(scoring.missing);
        summary["score_source"] = "endpoint:" + route.endpoint_id;
        summary["scoring"] = ojson{{"calls", scoring.calls}, {"hard_decisions", scoring.hard_decisions},
                                   {"hard_decision_mode", scoring.hard_decisions > 0}};
    }
    if (opts.dry_run) {
        summary["dry_run"] = true;
        return {std::move(summary), kExitOk, {}};
    }

    for (auto& m : eval::missing_scores(run, scores, ev.k_rerank))
        if (std::find(missing.begin(), missing.end(), m) == missing.end()) missing.push_back(std::move(m));
    std::sort(missing.begin(), missing.end());
    if (!missing.empty()) {
        if (!opts.allow_missing) {
            std::string msg = std::to_string(missing.size()) + " top-" + std::to_string(ev.k_rerank) +
                              " pair(s) lack a score:";
            for (std::size_t i = 0; i < std::min<std::size_t>(missing.size(), 10); ++i)
                msg += " (" + missing[i].first + ", " + missing[i].second + ")";
            if (missing.size() > 10) msg += " ...";
            throw ValidationError(msg);
        }
        spdlog::warn("{} pair(s) lack a score; scoring them 0", missing.size());
        for (const auto& m : missing) scores.emplace(m, 0.0);
    }

    const auto reranked = eval::rerank(run, scores, ev.k_rerank);
    const auto report = eval::delta_report(run, reranked, qrels, ev.metrics);

    fs::create_directories(out_dir);
    const auto run_out = out_dir / "reranked.run";
    eval::write_trec_run(reranked, run_out);
    write_file_atomic(out_dir / "delta_report.txt", report.to_text());
    write_file_atomic(out_dir / "delta_report.json", report.to_json().dump(2) + "\n");
    ojson outputs{{"reranked_run", run_out.string()},
                  {"report_text", (out_dir / "delta_report.txt").string()},
                  {"report_json", (out_dir / "delta_report.json").string()}};
    if (!source.scores_file) {
        eval::write_scores(scores, out_dir / "scores.txt");
        outputs["scores"] = (out_dir / "scores.txt").string();
    }

    summary["report"] = report.to_json();
    summary["missing"] = pairs_json(missing);
    summary["outputs"] = std::move(outputs);
    CommandResult r;
    r.report_text = report.to_text();
    if (ev.max_regression) {
        const auto regressed = report.regressions(*ev.max_regression);
        ojson rows = ojson::array();
        for (const auto& row : regressed) rows.push_back(row.metric);
        summary["regressions"] = std::move(rows);
        if (!regressed.empty()) r.exit_code = kExitRegression;
    }
    r.summary = std::move(summary);
    return r;
}

// ---- validate ------------------------------------------------------------------

enum class FileKind { triplets, positives, examples, batches, corpus, manifest, unknown };

inline std::string_view to_string(FileKind k) {
    switch (k) {
        case FileKind::triplets: return "triplets";
        case FileKind::positives: return "positives";
        case FileKind::examples: return "examples";
        case FileKind::batches: return "batches";
        case FileKind::corpus: return "corpus";
        case FileKind::manifest: return "manifest";
        case FileKind::unknown: break;
    }
    return "unknown";
}

// Sniffs a file's kind from its first record.
inline FileKind detect_kind(const fs::path& path) {
    const auto body = read_file(path);
    const auto first = std::find_if(body.begin(), body.end(), [](char c) { return !text::is_space(c); });
    if (first == body.end()) return FileKind::unknown;
    if (path.extension() == ".json") {
        auto j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_object() && j.contains("total_examples")) return FileKind::manifest;
    }
    const auto line_end = body.find('\n', static_cast<std::size_t>(first - body.begin()));
    auto j = nlohmann::json::parse(body.substr(static_cast<std::size_t>(first - body.begin()),
                                               line_end == std::string::npos ? std::string::npos
                                                                             : line_end - static_cast<std::size_t>(first - body.begin())),
                                   nullptr, false);
    if (!j.is_object()) return FileKind::unknown;
    if (j.contains("negatives") && j.contains("positive") && j["positive"].contains("query_id"))
        return FileKind::triplets;
    if (j.contains("page") && j.contains("query")) return FileKind::positives;
    if (j.contains("group_id") && j.contains("label")) return FileKind::examples;
    if (j.contains("batch_index")) return FileKind::batches;
    if (j.contains("page_id") && j.contains("image_path")) return FileKind::corpus;
    return FileKind::unknown;
}

// Checks every record of each file, and each file against the manifest
// when one is given.
inline CommandResult cmd_validate(std::span<const fs::path> files, const std::optional<fs::path>& manifest_path,
                                  std::size_t batch_groups = dataset::kGroupsPerBatch) {
    ojson results = ojson::array();
    std::vector<std::string> failures;
    std::optional<DatasetManifest> manifest;
    if (manifest_path) manifest = read_manifest(*manifest_path);

    for (const auto& path : files) {
        ojson r;
        r["path"] = path.string();
        std::vector<std::string> problems;
        std::size_t records = 0;
        FileKind kind = FileKind::unknown;
        try {
            kind = detect_kind(path);
            switch (kind) {
                case FileKind::triplets: {
                    const auto t = read_jsonl(path);
                    records = t.size();
                    if (manifest)
                        for (auto& m : validate_manifest(*manifest, t).mismatches) problems.push_back(std::move(m));
                    break;
                }
                case FileKind::positives: records = read_anchored(path).size(); break;
                case FileKind::corpus: {
                    const auto pages = read_corpus(path);
                    records = pages.size();
                    for (const auto& p : pages)
                        if (!fs::is_regular_file(p.image_path))
                            problems.push_back("page " + p.page_id + ": image not found: " + p.image_path);
                    break;
                }
                case FileKind::examples: {
                    const auto ex = dataset::read_examples(path);
                    records = ex.size();
                    dataset::group_examples(ex);
                    if (manifest)
                        for (auto& m : dataset::validate_manifest(*manifest, ex).mismatches)
                            problems.push_back(std::move(m));
                    break;
                }
                case FileKind::batches: {
                    for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t) {
                        dataset::TrainingBatch b;
                        for (const auto& g : hardneg::detail::require(j, "groups")) b.groups.push_back(g.get<std::string>());
                        for (const auto& e : hardneg::detail::require(j, "examples"))
                            b.examples.push_back(dataset::example_from_json(e));
                        for (auto& v : dataset::batch_violations(b, batch_groups))
                            problems.push_back("batch " + std::to_string(records) + ": " + v);
                        ++records;
                    });
                    break;
                }
                case FileKind::manifest: {
                    const auto m = read_manifest(path);
                    records = 1;
                    for (auto& v : validate_manifest_counts(m, m.total_positives, m.total_examples).mismatches)
                        problems.push_back(std::move(v));
                    break;
                }
                case FileKind::unknown: problems.push_back("unrecognized file contents"); break;
            }
        } catch (const Error& e) {
            problems.push_back(e.what());
        } catch (const nlohmann::json::exception& e) {
            problems.push_back(e.what());
        }
        r["kind"] = to_string(kind);
        r["records"] = records;
        r["ok"] = problems.empty();
        r["problems"] = problems;
        for (const auto& p : problems) failures.push_back(path.string() + ": " + p);
        results.push_back(std::move(r));
    }
    ojson summary;
    summary["command"] = "validate";
    summary["files"] = std::move(results);
    return finish(std::move(summary), failures);
}

}  // namespace hardneg::pipeline
