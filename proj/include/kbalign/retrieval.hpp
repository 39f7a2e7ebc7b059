#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kbalign/corpus.hpp"
#include "kbalign/llm_client.hpp"

namespace kbalign {

struct IndexEntry {
    std::string chunk_id;
    EmbeddingVector vector;
};

struct VectorIndex {
    size_t dim = 0;
    std::vector<IndexEntry> entries;

    size_t size() const { return entries.size(); }
};

struct RetrievalHit {
    std::string chunk_id;
    float score = 0.0f;
};

struct SkipReport {
    struct Item {
        std::string item;
        std::string stage;
        std::string reason;
    };
    std::vector<Item> items;
    void add(std::string item, std::string stage, std::string reason) {
        items.push_back({std::move(item), std::move(stage), std::move(reason)});
    }
    void write(const std::filesystem::path& file) const;
};

// Embeds every chunk through the client. Individual embedding failures go
// to the skip report; more than 10% skipped is fatal.
VectorIndex build_index(const std::vector<Chunk>& chunks, const LlmClient& client,
                        int max_parallel = 8, SkipReport* skips = nullptr);

// Exact top-k cosine search. Ties broken by ascending chunk_id.
std::vector<RetrievalHit> retrieve(const VectorIndex& index, const EmbeddingVector& query,
                                   size_t k = 8);
std::vector<RetrievalHit> retrieve(const VectorIndex& index, const std::string& query,
                                   const LlmClient& client, size_t k = 8);

void save_index(const VectorIndex& index, const std::filesystem::path& file);
VectorIndex load_index(const std::filesystem::path& file);

enum class GroupingStrategy { SameDirectory, CrossDirectorySimilarity };

struct SegmentGroup {
    std::vector<Chunk> segments;
    size_t total_words() const {
        size_t t = 0;
        for (const auto& s : segments) t += s.word_count();
        return t;
    }
    std::string concatenated_text() const;
};

// SameDirectory packs consecutive same-directory segments up to group_words.
// CrossDirectorySimilarity greedily pairs segments from different directories
// in descending cosine order, then extends groups while under the budget.
std::vector<SegmentGroup> group_segments(const std::vector<Chunk>& segments,
                                         const KnowledgeBase& kb, GroupingStrategy strategy,
                                         size_t group_words, const LlmClient& client);

}  // namespace kbalign
