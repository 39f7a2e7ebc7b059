#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kbalign/llm_client.hpp"

namespace kbalign {

// --- pure text metrics (normalization: lowercase, strip punctuation) ---

double token_f1(const std::string& prediction, const std::string& reference);

double match_score(const std::string& prediction,
                   const std::vector<std::vector<std::string>>& short_answer_sets);

// Sentence BLEU-4, uniform weights, add-one smoothing on the n>1
// precisions, standard brevity penalty.
double bleu(const std::string& prediction, const std::string& reference);

// ROUGE-L F-measure (beta = 1) over tokens.
double rouge_l(const std::string& prediction, const std::string& reference);

// --- endpoint-backed metrics ---

double bert_cosine(const std::string& prediction, const std::string& reference,
                   const LlmClient& embedder);

// 1 / 0, or nullopt (UNJUDGED) when the judge refuses the contract twice.
std::optional<int> llm_judge(const std::string& question, const std::string& golden,
                             const std::string& prediction, const LlmClient& judge,
                             uint64_t seed = 0);

// --- option scoring ---

// Last contiguous cluster of standalone A-D letters in the completion.
std::set<char> jecqa_parse_options(const std::string& text);
int jecqa_score(const std::set<char>& predicted, const std::set<char>& golden);

// --- aggregation ---

struct EvalItem {
    std::string id;
    std::string question;
    std::string prediction;
    std::string golden;
    std::vector<std::vector<std::string>> short_answer_sets;  // Match metric
    std::set<char> golden_options;                            // JEC-QA
};

struct EvalResult {
    struct ItemScores {
        std::string id;
        std::map<std::string, double> scores;
    };
    std::vector<ItemScores> per_item;
    std::map<std::string, double> aggregate;  // mean x100 (percent convention)
    std::map<std::string, size_t> excluded;   // per-metric missing/unjudged counts
    size_t n = 0;
};

struct EvalConfig {
    std::vector<std::string> metrics = {"f1", "bleu", "rouge"};
    std::string dataset_label = "loogle";
    const LlmClient* embedder = nullptr;  // bert metric
    const LlmClient* judge = nullptr;     // llm metric
    uint64_t seed = 0;
};

EvalResult evaluate(const std::vector<EvalItem>& items, const EvalConfig& cfg);

// Report JSON plus a human-readable table on stdout. JEC-QA aggregates are
// split Single / Multi / Total.
nlohmann::json make_report(const EvalResult& result, const std::string& dataset_label,
                           const nlohmann::json& config_echo);
void write_report(const std::filesystem::path& file, const nlohmann::json& report);
void print_report(const nlohmann::json& report);

std::vector<EvalItem> join_predictions_references(const std::filesystem::path& predictions_jsonl,
                                                  const std::filesystem::path& references_jsonl);

}  // namespace kbalign
