#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kbalign/corpus.hpp"
#include "kbalign/llm_client.hpp"
#include "kbalign/retrieval.hpp"

namespace kbalign {

enum class AnnotationMode { Short, Long };

struct AnnotationRecord {
    std::string id;
    std::string question;
    std::string answer;
    std::vector<std::string> golden_context_chunk_ids;
    std::vector<std::string> retrieved_context_chunk_ids;
    std::string style;
    AnnotationMode mode = AnnotationMode::Short;
    // one entry per segment for Long records; nullopt where the model
    // answered 'none'
    std::vector<std::optional<std::string>> per_segment_info;
};

struct QuestionFilter {
    // deictic phrases that disqualify a question (case-insensitive substring)
    std::vector<std::string> patterns = {
        "this paragraph", "this passage", "the text",  "the document",
        "the above",      "mentioned above",
        "\xe6\x9c\xac\xe6\xae\xb5",                          // 本段
        "\xe6\x9c\xac\xe6\x96\x87",                          // 本文
        "\xe4\xb8\x8a\xe6\x96\x87",                          // 上文
        "\xe4\xb8\x8a\xe8\xbf\xb0",                          // 上述
        "\xe8\xbf\x99\xe6\xae\xb5\xe8\xaf\x9d",              // 这段话
        "\xe8\xbf\x99\xe7\xaf\x87\xe6\x96\x87\xe7\xab\xa0",  // 这篇文章
    };
    size_t max_question_words = 512;

    bool rejects(const std::string& question) const;
};

struct AnnotateContext {
    const LlmClient* annotator = nullptr;
    const LlmClient* embedder = nullptr;  // for retrieval supplement
    const VectorIndex* index = nullptr;   // optional; no C_R when absent
    std::vector<std::string> styles = {"concisely", "in detail", "in one sentence",
                                       "with reasoning"};
    QuestionFilter filter;
    uint64_t seed = 0;
    size_t top_k = 8;
    double question_temperature = 0.8;
    double answer_temperature = 0.2;
    SkipReport* skips = nullptr;
};

// Single-chunk annotation: up to five (Q, A) pairs parsed from the
// alternating-line completion, filtered, with retrieval supplement per Q.
std::vector<AnnotationRecord> annotate_short(const Chunk& chunk, const AnnotateContext& ctx);

// Multi-segment annotation: question generation over the group, per-segment
// info extraction, then refinement of the concatenated infos into A.
std::vector<AnnotationRecord> annotate_long(const SegmentGroup& group, const AnnotateContext& ctx);

// Drops filtered, empty, overlong, and duplicate questions (run-level pass).
std::vector<AnnotationRecord> filter_questions(std::vector<AnnotationRecord> records,
                                               const QuestionFilter& filter);

// ceil(total_tokens / 10,000 * density)
size_t plan_annotation_volume(const KnowledgeBase& kb, double density = 15.0);

std::string annotation_to_json(const AnnotationRecord& r);
AnnotationRecord annotation_from_json(const std::string& line);
void write_annotations(const std::filesystem::path& file,
                       const std::vector<AnnotationRecord>& records);
std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& file);

// Strict alternating-line Q/A parser with leading-number stripping.
// Exposed for tests.
std::vector<std::pair<std::string, std::string>> parse_alternating_qa(const std::string& completion);

}  // namespace kbalign
