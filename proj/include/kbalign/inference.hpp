#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kbalign/llm_client.hpp"
#include "kbalign/retrieval.hpp"
#include "kbalign/tuning_data.hpp"

namespace kbalign {

enum class VerifyVerdict { Correct, Wrong, Unparseable };

struct InferenceRecord {
    std::string id;
    std::string question;
    std::optional<std::string> first_pass_prediction;  // P, query-expansion runs only
    std::string final_prediction;
    std::vector<RetrievalHit> retrieval_hits;             // hits backing final_prediction
    std::vector<RetrievalHit> first_pass_hits;            // query-expansion runs only
    std::optional<VerifyVerdict> verify_verdict;
    std::optional<std::string> verify_text;
    bool resampled = false;
    bool qe_fallback = false;  // pass 1 failed, answered plainly
    std::optional<std::string> error;
};

struct InferenceOptions {
    size_t top_k = 8;
    bool query_expansion = true;
    bool self_verify = false;
    bool resample_on_wrong = false;
    double resample_temperature = 0.8;
    double temperature = 0.2;
    size_t qe_prediction_max_words = 128;
    std::string dataset_prompt;
    std::string kb_id = "0";
    uint64_t seed = 0;
};

struct Question {
    std::string id;
    std::string question;
    std::optional<std::string> golden;
    std::vector<std::string> choices;
};

// Plain RAG answer: top-k retrieval, rank-prefixed references, one
// completion. Generation failures land in record.error.
InferenceRecord answer(const Question& q, const VectorIndex& index, const LlmClient& model,
                       const LlmClient& embedder, const ChunkStore& store,
                       const InferenceOptions& opts);

// Two-pass query expansion: retrieve again with "Q P" (P word-truncated)
// and generate the final prediction from the expanded hits.
InferenceRecord answer_with_qe(const Question& q, const VectorIndex& index, const LlmClient& model,
                               const LlmClient& embedder, const ChunkStore& store,
                               const InferenceOptions& opts);

// Self-verification without a golden answer; on WRONG, optionally resample
// once at the higher temperature. CORRECT predictions are never altered.
InferenceRecord self_verify(InferenceRecord record, const VectorIndex& index,
                            const LlmClient& model, const ChunkStore& store,
                            const InferenceOptions& opts);

std::optional<VerifyVerdict> parse_verdict(const std::string& text);

std::vector<Question> read_questions(const std::filesystem::path& file);
std::string inference_to_json(const InferenceRecord& r);
void write_inferences(const std::filesystem::path& file, const std::vector<InferenceRecord>& records);
std::vector<InferenceRecord> read_inferences(const std::filesystem::path& file);

}  // namespace kbalign
