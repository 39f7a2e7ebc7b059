#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kbalign/annotate.hpp"
#include "kbalign/corpus.hpp"
#include "kbalign/llm_client.hpp"
#include "kbalign/retrieval.hpp"

namespace kbalign {

enum class TaskKind { QA, Verify };
enum class ContextSource { Golden, Retrieved };

struct TuningExample {
    TaskKind task = TaskKind::QA;
    std::vector<std::string> input_context_chunk_ids;
    ContextSource context_source = ContextSource::Golden;
    std::string question;
    std::string student_response;  // P, VERIFY only
    std::string target_output;     // A for QA, V for VERIFY
    int round = 0;
    std::string provenance;  // annotation record id
};

struct RoundPlan {
    int rounds = 3;
    double verify_fraction = 0.25;
    double retrieved_context_fraction = 0.50;
};

// id -> chunk lookup for rendering contexts
class ChunkStore {
public:
    ChunkStore() = default;
    explicit ChunkStore(const std::vector<Chunk>& chunks);
    void add(const std::vector<Chunk>& chunks);
    const Chunk& at(const std::string& id) const;
    bool contains(const std::string& id) const { return by_id_.count(id) > 0; }

private:
    std::map<std::string, Chunk> by_id_;
};

struct InitialDatasetOptions {
    bool deterministic_mix = false;
    uint64_t seed = 0;
    size_t top_k = 8;
};

// Round-0 QA dataset with the golden/retrieved context mix. Records are
// processed in ascending id order so the seeded assignment is reproducible.
std::vector<TuningExample> build_initial_dataset(std::vector<AnnotationRecord> records,
                                                 const RoundPlan& plan, const VectorIndex& index,
                                                 const LlmClient& embedder,
                                                 const InitialDatasetOptions& opts,
                                                 SkipReport* skips = nullptr);

struct Prediction {
    std::string record_id;
    std::string question;
    std::string prediction;                       // may be empty
    std::vector<std::string> context_chunk_ids;   // retrieval context shown to the model
};

// RAG predictions from the previous round's model. Empty completions are
// kept as empty strings; transport failures are skipped (>20% is fatal).
std::vector<Prediction> collect_predictions(const std::vector<AnnotationRecord>& records,
                                            const LlmClient& model, const VectorIndex& index,
                                            const LlmClient& embedder, const ChunkStore& store,
                                            const std::string& dataset_prompt, size_t top_k = 8,
                                            int max_parallel = 8, SkipReport* skips = nullptr);

// Teacher verification of each prediction against its golden record. V
// strings missing the mandated prefix are regenerated once, then dropped.
std::vector<TuningExample> build_verify_examples(const std::vector<Prediction>& pairs,
                                                 const std::vector<AnnotationRecord>& records,
                                                 const ChunkStore& store, const LlmClient& annotator,
                                                 int round, uint64_t seed,
                                                 SkipReport* skips = nullptr);

bool has_verify_prefix(const std::string& v);

struct AssembledRound {
    std::vector<TuningExample> examples;
    nlohmann::json manifest;
};

// Seeded shuffle of round(n_total * verify_fraction) VERIFY plus QA fill.
// A short verify pool lowers the fraction with a manifest warning.
AssembledRound assemble_round(int round_index, const RoundPlan& plan,
                              const std::vector<TuningExample>& qa_pool,
                              const std::vector<TuningExample>& verify_pool, size_t n_total,
                              uint64_t seed);

struct RoundDescriptor {
    int round_index = 0;
    std::vector<std::string> record_ids;  // annotation records assigned to this round
    std::string dataset_file;
    std::string model_endpoint;  // endpoint producing predictions for this round
    bool trainer_handoff = true;
};

// Splits annotation records across rounds (equal shares, in id order) and
// chains each round to the endpoint tuned on the previous rounds.
std::vector<RoundDescriptor> schedule(const RoundPlan& plan,
                                      const std::vector<AnnotationRecord>& records,
                                      const std::vector<std::string>& round_endpoints);

// Chat-style supervised JSONL:
// {"task","messages":[{role,content}...],"round","provenance"}
nlohmann::json render_example(const TuningExample& ex, const ChunkStore& store,
                              const std::string& kb_id, const std::string& dataset_prompt);
void write_dataset(const std::filesystem::path& file, const std::vector<TuningExample>& examples,
                   const ChunkStore& store, const std::string& kb_id,
                   const std::string& dataset_prompt);
void write_manifest_atomic(const std::filesystem::path& file, const nlohmann::json& manifest);

// Prompt shown to the student model when verifying its own answer; also the
// input side of VERIFY training examples (no golden answer available).
std::string verify_input_prompt(const std::string& references, const std::string& question,
                                const std::string& student_response);

}  // namespace kbalign
