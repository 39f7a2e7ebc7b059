#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "kbalign/config.hpp"
#include "kbalign/pipeline.hpp"

using namespace kbalign;

int main(int argc, char** argv) {
    CLI::App app{"KBAlign self-adaptation pipeline"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    std::string config_file;
    bool dry_run = false;
    app.add_option("-c,--config", config_file, "pipeline config file (JSON)")->required();
    app.add_flag("--dry-run", dry_run, "print the resolved plan and exit");

    // flag overrides mirroring config keys
    std::optional<bool> qe_flag;
    bool self_verify = false;
    std::optional<double> resample_temperature;
    std::optional<size_t> top_k;
    app.add_flag("--qe,!--no-qe", [&](int64_t v) { qe_flag = v > 0; },
                 "enable/disable query expansion");
    app.add_flag("--self-verify", self_verify, "verify predictions and resample on low confidence");
    app.add_option("--resample-temperature", resample_temperature,
                   "temperature for the resampled response");
    app.add_option("--top-k", top_k, "retrieval depth");

    int round = 0;
    auto* ingest_cmd = app.add_subcommand("ingest", "load the KB and write the chunk stores");
    auto* index_cmd = app.add_subcommand("index", "embed retrieval chunks into the vector index");
    auto* annotate_cmd = app.add_subcommand("annotate", "self-annotate Q&A records");
    auto* build_cmd = app.add_subcommand("build-data", "emit one round's tuning dataset");
    build_cmd->add_option("--round", round, "round index")->required();
    auto* infer_cmd = app.add_subcommand("infer", "answer questions with RAG");
    auto* eval_cmd = app.add_subcommand("eval", "score predictions against references");
    auto* pipeline_cmd =
        app.add_subcommand("pipeline", "run all stages up to the first trainer handoff");

    CLI11_PARSE(app, argc, argv);

    PipelineConfig cfg;
    try {
        cfg = load_config(config_file);
        if (qe_flag) cfg.inference.qe = *qe_flag;
        if (self_verify) cfg.inference.self_verify = true;
        if (resample_temperature) cfg.inference.resample_temperature = *resample_temperature;
        if (top_k) cfg.inference.top_k = *top_k;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }

    try {
        PipelineRun run(cfg);
        if (dry_run) {
            std::cout << run.dry_run_plan().dump(2) << "\n";
            return 0;
        }
        if (ingest_cmd->parsed()) run.stage_ingest();
        if (index_cmd->parsed()) run.stage_index();
        if (annotate_cmd->parsed()) run.stage_annotate();
        if (build_cmd->parsed()) run.stage_build_data(round);
        if (infer_cmd->parsed()) run.stage_infer();
        if (eval_cmd->parsed()) run.stage_eval();
        if (pipeline_cmd->parsed()) run.run_all();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
