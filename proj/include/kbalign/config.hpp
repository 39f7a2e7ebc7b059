#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kbalign/llm_client.hpp"

namespace kbalign {

struct ChunkingConfig {
    size_t short_max = 1024;
    size_t segment_max = 256;
    size_t retrieval_max = 128;
    double overlap = 0.15;
};

struct AnnotationConfig {
    double density = 15.0;  // items per 10k tokens
    std::vector<std::string> styles = {"concisely", "in detail", "in one sentence",
                                       "with reasoning"};
    bool long_mode = false;
    std::vector<std::string> filters;  // empty = built-in default pattern list
    std::string grouping = "SAME_DIRECTORY";  // or CROSS_DIRECTORY_SIMILARITY
    size_t group_words = 1024;
};

struct RoundsConfig {
    int count = 3;
    double verify_fraction = 0.25;
    double retrieved_fraction = 0.50;
    bool deterministic_mix = false;
};

struct InferenceConfig {
    size_t top_k = 8;
    bool qe = true;
    bool self_verify = false;
    double resample_temperature = 0.8;
    std::string questions_file;  // empty = derive from annotations
};

struct EvalConfigSection {
    std::vector<std::string> metrics = {"f1", "bleu", "rouge"};
    std::string dataset_prompt = "loogle";
    std::string references_file;  // empty = derive from annotations
};

struct PipelineConfig {
    uint64_t seed = 0;
    bool seed_set = false;
    std::string kb_source;
    std::string output_root = "runs";  // not part of the config hash
    std::string kb_id = "0";

    EndpointConfig annotator;
    EndpointConfig judge;
    EndpointConfig embedder;
    std::vector<EndpointConfig> round_endpoints;  // model tuned after round r

    ChunkingConfig chunking;
    AnnotationConfig annotation;
    RoundsConfig rounds;
    InferenceConfig inference;
    EvalConfigSection eval;

    // canonical form used for the run-directory hash (output_root excluded)
    nlohmann::json canonical() const;
    std::string hash() const;
};

// Parses and validates; unknown keys and invariant violations throw
// ConfigError with field-level messages.
PipelineConfig load_config(const std::filesystem::path& file);
PipelineConfig parse_config(const nlohmann::json& j);

}  // namespace kbalign
