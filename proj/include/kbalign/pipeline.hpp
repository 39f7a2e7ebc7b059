#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "kbalign/config.hpp"

namespace kbalign {

struct StageFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One pipeline run rooted at <output_root>/run-<config hash>. Stages write
// their artifacts plus a manifest keyed by input hashes; re-running a stage
// with unchanged inputs is a no-op. A lock file guards against concurrent
// writers.
class PipelineRun {
public:
    explicit PipelineRun(PipelineConfig cfg);
    ~PipelineRun();

    PipelineRun(const PipelineRun&) = delete;
    PipelineRun& operator=(const PipelineRun&) = delete;

    const std::filesystem::path& run_dir() const { return run_dir_; }
    const PipelineConfig& config() const { return cfg_; }

    // returns false when the stage was skipped (up to date)
    bool stage_ingest();
    bool stage_index();
    bool stage_annotate();
    bool stage_build_data(int round);
    bool stage_infer();
    bool stage_eval();

    // all stages up to the first trainer handoff without a configured
    // endpoint, then inference and evaluation
    void run_all();

    nlohmann::json dry_run_plan() const;

private:
    bool up_to_date(const std::string& stage, const nlohmann::json& input_key) const;
    void mark_done(const std::string& stage, const nlohmann::json& input_key,
                   const std::vector<std::string>& outputs);
    template <class F>
    bool run_stage(const std::string& stage, const nlohmann::json& input_key, F body);
    std::string artifact_hash(const std::string& filename) const;

    PipelineConfig cfg_;
    std::filesystem::path run_dir_;
    bool locked_ = false;
};

std::string file_content_hash(const std::filesystem::path& p);

}  // namespace kbalign
