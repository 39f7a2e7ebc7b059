#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace kbalign {

struct Document {
    std::string id;                  // relative path, '/'-joined
    std::vector<std::string> path;   // directory labels ending with the file name
    std::string text;
    size_t token_estimate = 0;       // whitespace word count

    // directory part of the path (everything but the file name)
    std::vector<std::string> directory() const {
        if (path.empty()) return {};
        return {path.begin(), path.end() - 1};
    }
};

enum class ChunkKind { AnnotationShort, SegmentLong, Retrieval };

const char* chunk_kind_name(ChunkKind k);
ChunkKind chunk_kind_from_name(const std::string& name);

struct Chunk {
    std::string id;
    std::string doc_id;
    size_t span_begin = 0;  // word index, inclusive
    size_t span_end = 0;    // word index, exclusive
    std::string text;
    ChunkKind kind = ChunkKind::AnnotationShort;

    size_t word_count() const { return span_end - span_begin; }
};

struct KnowledgeBase {
    std::vector<Document> documents;  // sorted by id

    size_t total_token_estimate() const {
        size_t t = 0;
        for (const auto& d : documents) t += d.token_estimate;
        return t;
    }
    const Document* find(const std::string& doc_id) const;
};

// Loads every regular file under source_dir as one UTF-8 document, hierarchy
// taken from the relative path. A single .jsonl file of {"id","path","text"}
// records is also accepted. Throws on zero usable documents.
KnowledgeBase ingest(const std::filesystem::path& source_dir);

KnowledgeBase ingest_jsonl(const std::filesystem::path& jsonl_file);

std::vector<Chunk> chunk_short(const Document& doc, size_t max_words = 1024);
std::vector<Chunk> chunk_segments(const Document& doc, size_t max_words = 256);
std::vector<Chunk> chunk_retrieval(const Document& doc, size_t max_tokens = 128,
                                   double overlap = 0.15);

// JSONL chunk store, one chunk per line.
std::string chunk_to_json(const Chunk& c);
Chunk chunk_from_json(const std::string& line);
void write_chunks(const std::filesystem::path& file, const std::vector<Chunk>& chunks);
std::vector<Chunk> read_chunks(const std::filesystem::path& file);

}  // namespace kbalign
