// hardneg: command-line front end. Stage summaries go to stdout as JSON;
// logs go to stderr.

#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "hardneg/gateway/http_transport.hpp"
#include "hardneg/hardneg.hpp"

namespace {

using namespace hardneg;
using namespace hardneg::pipeline;

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> limit;
    bool dry_run = false;
    bool allow_missing = false;
    std::string mock_script;
    std::string log_level = "info";
};

PipelineConfig load_or_default(const Globals& g) {
    return g.config_path.empty() ? PipelineConfig{} : load_config(g.config_path);
}

// Real endpoints by default; a scripted mock with --mock-script; a gateway
// that refuses every call under --dry-run.
std::unique_ptr<gateway::Gateway> make_gateway(PipelineConfig& cfg, const Globals& g) {
    if (!g.mock_script.empty()) {
        if (cfg.endpoints.empty()) {
            cfg.endpoints.push_back(gateway::mock_endpoint());
            for (auto* r : {&cfg.routes.positive_gen, &cfg.routes.negative_gen, &cfg.routes.verify,
                            &cfg.routes.rephrase, &cfg.routes.rerank})
                if (r->endpoint_id.empty()) r->endpoint_id = cfg.endpoints.front().endpoint_id;
        }
        auto script = gateway::load_script(g.mock_script);
        return std::make_unique<gateway::Gateway>(cfg.endpoints,
                                                  std::make_shared<gateway::ScriptedTransport>(std::move(script)));
    }
    if (g.dry_run)
        return std::make_unique<gateway::Gateway>(cfg.endpoints, std::make_shared<gateway::RefusingTransport>());
    return std::make_unique<gateway::Gateway>(cfg.endpoints, std::make_shared<gateway::HttpTransport>());
}

CommandOptions options(const Globals& g) { return {g.seed, g.limit, g.dry_run, g.allow_missing}; }

int emit(const CommandResult& r) {
    if (!r.report_text.empty()) std::cerr << r.report_text;
    std::cout << r.summary.dump(2) << std::endl;
    return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hard-negative query generation and reranker evaluation"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "TOML configuration file");
    app.add_option("--seed", g.seed, "override every configured seed");
    app.add_option("--limit", g.limit, "process at most N pages/positives/records");
    app.add_flag("--dry-run", g.dry_run, "render prompts and plan requests without contacting any endpoint");
    app.add_option("--mock-script", g.mock_script, "answer every request from this scripted mock")
        ->check(CLI::ExistingFile);
    app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off");

    std::string corpus, out, positives, mode = "generic", triplets, recipe, examples, run, qrels, scores, queries,
                                        manifest;
    std::vector<std::string> files;

    auto* gp = app.add_subcommand("gen-positives", "generate and verify one positive query per page");
    gp->add_option("--corpus", corpus, "page corpus JSONL")->required()->check(CLI::ExistingFile);
    gp->add_option("--out", out, "kept positives JSONL")->required();

    auto* gn = app.add_subcommand("gen-negatives", "generate and verify hard negatives, assemble triplets");
    gn->add_option("--positives", positives, "kept positives JSONL")->required()->check(CLI::ExistingFile);
    gn->add_option("--mode", mode, "generic or finance")->check(CLI::IsMember({"generic", "finance"}));
    gn->add_option("--out", out, "triplet JSONL")->required();

    auto* rp = app.add_subcommand("rephrase", "rephrase a fraction of triplet positives");
    rp->add_option("--triplets", triplets, "triplet JSONL")->required()->check(CLI::ExistingFile);
    rp->add_option("--out", out, "triplet JSONL with rephrased positives")->required();

    auto* bd = app.add_subcommand("build-dataset", "compose a training mix from a recipe");
    bd->add_option("--recipe", recipe, "recipe TOML")->required()->check(CLI::ExistingFile);
    bd->add_option("--out", out, "output directory (default: dataset.output_dir)");

    auto* eb = app.add_subcommand("export-batches", "pack training examples into batches");
    eb->add_option("--examples", examples, "examples JSONL")->required()->check(CLI::ExistingFile);
    eb->add_option("--out", out, "batch JSONL")->required();

    auto* re = app.add_subcommand("rerank-eval", "rerank a run and report metric deltas");
    re->add_option("--run", run, "TREC run")->required()->check(CLI::ExistingFile);
    re->add_option("--qrels", qrels, "TREC qrels")->required()->check(CLI::ExistingFile);
    auto* sc = re->add_option("--scores", scores, "score file 'qid pageid score'")->check(CLI::ExistingFile);
    auto* qo = re->add_option("--queries", queries, "query texts 'qid<TAB>text' for endpoint scoring")
                   ->check(CLI::ExistingFile);
    re->add_option("--corpus", corpus, "page corpus JSONL for endpoint scoring")->check(CLI::ExistingFile);
    re->add_option("--out", out, "report directory")->required();
    re->add_flag("--allow-missing", g.allow_missing, "score unscored pairs 0 instead of failing");
    sc->excludes(qo);

    auto* va = app.add_subcommand("validate", "check files against their record invariants");
    va->add_option("files", files, "JSONL or manifest files")->required()->check(CLI::ExistingFile);
    va->add_option("--manifest", manifest, "manifest to check data files against")->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    auto logger = spdlog::stderr_color_mt("hardneg");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::from_str(g.log_level));

    try {
        if (va->parsed()) {
            std::vector<fs::path> paths(files.begin(), files.end());
            std::optional<fs::path> m;
            if (!manifest.empty()) m = manifest;
            const auto cfg = load_or_default(g);
            return emit(cmd_validate(paths, m, cfg.dataset.batch_groups));
        }
        if (eb->parsed()) return emit(cmd_export_batches(load_or_default(g), examples, out, options(g)));

        if (g.config_path.empty() && g.mock_script.empty())
            throw ValidationError("--config is required for this command");
        auto cfg = apply_overrides(load_or_default(g), options(g));
        auto gw = make_gateway(cfg, g);
        Session session(cfg, *gw);
        const auto opts = options(g);

        if (gp->parsed()) return emit(cmd_gen_positives(session, corpus, out, opts));
        if (gn->parsed()) return emit(cmd_gen_negatives(session, positives, parse_negative_mode(mode), out, opts));
        if (rp->parsed()) return emit(cmd_rephrase(session, triplets, out, opts));
        if (bd->parsed())
            return emit(cmd_build_dataset(session, recipe, out.empty() ? session.config.dataset.output_dir : fs::path(out),
                                          opts));
        if (re->parsed()) {
            ScoreSource src;
            if (!scores.empty()) src.scores_file = scores;
            if (!queries.empty()) src.queries_file = queries;
            if (!corpus.empty()) src.corpus_file = corpus;
            return emit(cmd_rerank_eval(session, run, qrels, src, out, opts));
        }
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        std::cout << ojson{{"error", e.what()}}.dump(2) << std::endl;
        return kExitFailures;
    }
    return kExitFailures;
}
