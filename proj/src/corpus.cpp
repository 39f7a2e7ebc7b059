#include "kbalign/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "kbalign/text.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace kbalign {

const char* chunk_kind_name(ChunkKind k) {
    switch (k) {
        case ChunkKind::AnnotationShort: return "ANNOTATION_SHORT";
        case ChunkKind::SegmentLong: return "SEGMENT_LONG";
        case ChunkKind::Retrieval: return "RETRIEVAL";
    }
    return "?";
}

ChunkKind chunk_kind_from_name(const std::string& name) {
    if (name == "ANNOTATION_SHORT") return ChunkKind::AnnotationShort;
    if (name == "SEGMENT_LONG") return ChunkKind::SegmentLong;
    if (name == "RETRIEVAL") return ChunkKind::Retrieval;
    throw std::runtime_error("unknown chunk kind: " + name);
}

const Document* KnowledgeBase::find(const std::string& doc_id) const {
    auto it = std::lower_bound(documents.begin(), documents.end(), doc_id,
                               [](const Document& d, const std::string& id) { return d.id < id; });
    if (it != documents.end() && it->id == doc_id) return &*it;
    return nullptr;
}

namespace {

std::vector<std::string> split_path(const std::string& rel) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : rel) {
        if (c == '/') {
            if (!cur.empty()) parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) parts.push_back(cur);
    return parts;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read file: " + p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void finalize(KnowledgeBase& kb) {
    std::sort(kb.documents.begin(), kb.documents.end(),
              [](const Document& a, const Document& b) { return a.id < b.id; });
    if (kb.documents.empty()) throw std::runtime_error("ingestion error: no documents");
}

}  // namespace

KnowledgeBase ingest_jsonl(const fs::path& jsonl_file) {
    KnowledgeBase kb;
    std::ifstream in(jsonl_file);
    if (!in) throw std::runtime_error("cannot read file: " + jsonl_file.string());
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line);
        Document d;
        d.id = j.at("id").get<std::string>();
        d.path = split_path(j.at("path").get<std::string>());
        d.text = j.at("text").get<std::string>();
        d.token_estimate = word_count(d.text);
        if (d.text.empty() || d.token_estimate == 0) {
            std::cerr << "[ingest] skipping empty document at " << jsonl_file.string() << ":"
                      << lineno << "\n";
            continue;
        }
        kb.documents.push_back(std::move(d));
    }
    finalize(kb);
    return kb;
}

KnowledgeBase ingest(const fs::path& source_dir) {
    if (fs::is_regular_file(source_dir) && source_dir.extension() == ".jsonl")
        return ingest_jsonl(source_dir);
    if (!fs::is_directory(source_dir))
        throw std::runtime_error("ingestion error: not a directory: " + source_dir.string());

    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(source_dir))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end(), [&](const fs::path& a, const fs::path& b) {
        return a.lexically_relative(source_dir).generic_string() <
               b.lexically_relative(source_dir).generic_string();
    });

    KnowledgeBase kb;
    for (const auto& f : files) {
        std::string rel = f.lexically_relative(source_dir).generic_string();
        try {
            if (f.extension() == ".jsonl") {
                KnowledgeBase sub = ingest_jsonl(f);
                for (auto& d : sub.documents) kb.documents.push_back(std::move(d));
                continue;
            }
            Document d;
            d.id = rel;
            d.path = split_path(rel);
            d.text = read_file(f);
            d.token_estimate = word_count(d.text);
            if (d.text.empty() || d.token_estimate == 0) {
                std::cerr << "[ingest] skipping empty document: " << rel << "\n";
                continue;
            }
            kb.documents.push_back(std::move(d));
        } catch (const std::exception& e) {
            std::cerr << "[ingest] error for " << rel << ": " << e.what() << "\n";
        }
    }
    finalize(kb);
    return kb;
}

namespace {

std::string make_chunk_id(const std::string& doc_id, ChunkKind kind, size_t index) {
    return doc_id + "#" + chunk_kind_name(kind) + "#" + std::to_string(index);
}

// Split at sentence ends where possible: within [begin, begin+max_words]
// take the last word ending a sentence; hard split at the bound otherwise.
std::vector<Chunk> chunk_by_sentences(const Document& doc, size_t max_words, ChunkKind kind) {
    if (max_words < 1) throw std::invalid_argument("max_words must be >= 1");
    auto spans = word_spans(doc.text);
    const size_t n = spans.size();
    std::vector<Chunk> chunks;
    size_t begin = 0;
    while (begin < n) {
        size_t end;
        if (n - begin <= max_words) {
            end = n;
        } else {
            end = begin + max_words;  // fallback: hard split
            for (size_t j = begin + max_words; j > begin; --j) {
                std::string_view w(doc.text.data() + spans[j - 1].begin,
                                   spans[j - 1].end - spans[j - 1].begin);
                if (ends_sentence(w)) {
                    end = j;
                    break;
                }
            }
        }
        Chunk c;
        c.doc_id = doc.id;
        c.kind = kind;
        c.span_begin = begin;
        c.span_end = end;
        c.id = make_chunk_id(doc.id, kind, chunks.size());
        // byte range runs to the next chunk's first word so that the
        // concatenation of all chunk texts is the document verbatim
        size_t byte_begin = chunks.empty() ? 0 : spans[begin].begin;
        size_t byte_end = end == n ? doc.text.size() : spans[end].begin;
        c.text = doc.text.substr(byte_begin, byte_end - byte_begin);
        chunks.push_back(std::move(c));
        begin = end;
    }
    return chunks;
}

}  // namespace

std::vector<Chunk> chunk_short(const Document& doc, size_t max_words) {
    return chunk_by_sentences(doc, max_words, ChunkKind::AnnotationShort);
}

std::vector<Chunk> chunk_segments(const Document& doc, size_t max_words) {
    return chunk_by_sentences(doc, max_words, ChunkKind::SegmentLong);
}

std::vector<Chunk> chunk_retrieval(const Document& doc, size_t max_tokens, double overlap) {
    if (overlap < 0.0 || overlap >= 1.0) throw std::invalid_argument("overlap must be in [0,1)");
    if (max_tokens < 1) throw std::invalid_argument("max_tokens must be >= 1");
    auto spans = word_spans(doc.text);
    const size_t n = spans.size();
    const size_t stride = std::max<size_t>(1, std::llround(max_tokens * (1.0 - overlap)));
    std::vector<Chunk> chunks;
    size_t begin = 0;
    while (begin < n) {
        size_t end = std::min(begin + max_tokens, n);
        Chunk c;
        c.doc_id = doc.id;
        c.kind = ChunkKind::Retrieval;
        c.span_begin = begin;
        c.span_end = end;
        c.id = make_chunk_id(doc.id, ChunkKind::Retrieval, chunks.size());
        size_t byte_begin = chunks.empty() ? 0 : spans[begin].begin;
        size_t byte_end = end == n ? doc.text.size() : spans[end - 1].end;
        c.text = doc.text.substr(byte_begin, byte_end - byte_begin);
        chunks.push_back(std::move(c));
        if (end == n) break;
        begin += stride;
    }
    return chunks;
}

std::string chunk_to_json(const Chunk& c) {
    json j;
    j["id"] = c.id;
    j["doc_id"] = c.doc_id;
    j["kind"] = chunk_kind_name(c.kind);
    j["span"] = {c.span_begin, c.span_end};
    j["text"] = c.text;
    return j.dump();
}

Chunk chunk_from_json(const std::string& line) {
    json j = json::parse(line);
    Chunk c;
    c.id = j.at("id").get<std::string>();
    c.doc_id = j.at("doc_id").get<std::string>();
    c.kind = chunk_kind_from_name(j.at("kind").get<std::string>());
    c.span_begin = j.at("span").at(0).get<size_t>();
    c.span_end = j.at("span").at(1).get<size_t>();
    c.text = j.at("text").get<std::string>();
    return c;
}

void write_chunks(const fs::path& file, const std::vector<Chunk>& chunks) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write: " + file.string());
    for (const auto& c : chunks) out << chunk_to_json(c) << "\n";
}

std::vector<Chunk> read_chunks(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot read: " + file.string());
    std::vector<Chunk> chunks;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) chunks.push_back(chunk_from_json(line));
    return chunks;
}

}  // namespace kbalign
