#include "kbalign/retrieval.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "kbalign/parallel.hpp"
#include "kbalign/simd/kernels.hpp"

using json = nlohmann::json;

namespace kbalign {

void SkipReport::write(const std::filesystem::path& file) const {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write: " + file.string());
    for (const auto& it : items) {
        json j = {{"item", it.item}, {"stage", it.stage}, {"reason", it.reason}};
        out << j.dump() << "\n";
    }
}

VectorIndex build_index(const std::vector<Chunk>& chunks, const LlmClient& client,
                        int max_parallel, SkipReport* skips) {
    if (chunks.empty()) throw std::invalid_argument("build_index: no chunks");
    std::set<std::string> seen;
    for (const auto& c : chunks) {
        if (c.kind != ChunkKind::Retrieval)
            throw std::invalid_argument("build_index: chunk " + c.id + " is not RETRIEVAL kind");
        if (!seen.insert(c.id).second)
            throw std::invalid_argument("build_index: duplicate chunk_id " + c.id);
    }

    constexpr size_t kBatch = 32;
    std::vector<std::vector<const Chunk*>> batches;
    for (size_t i = 0; i < chunks.size(); i += kBatch) {
        std::vector<const Chunk*> b;
        for (size_t j = i; j < std::min(i + kBatch, chunks.size()); ++j) b.push_back(&chunks[j]);
        batches.push_back(std::move(b));
    }

    struct BatchResult {
        std::vector<IndexEntry> entries;
        std::vector<std::string> failed;
    };
    auto results = parallel_map(
        batches,
        [&](const std::vector<const Chunk*>& batch) {
            BatchResult r;
            std::vector<std::string> texts;
            for (const auto* c : batch) texts.push_back(c->text);
            try {
                auto vecs = client.embed(texts);
                for (size_t i = 0; i < batch.size(); ++i)
                    r.entries.push_back({batch[i]->id, std::move(vecs[i])});
            } catch (const std::exception&) {
                for (const auto* c : batch) r.failed.push_back(c->id);
            }
            return r;
        },
        max_parallel);

    VectorIndex index;
    size_t skipped = 0;
    for (auto& r : results) {
        for (auto& e : r.entries) {
            if (index.dim == 0) index.dim = e.vector.dim();
            index.entries.push_back(std::move(e));
        }
        for (auto& id : r.failed) {
            ++skipped;
            if (skips) skips->add(id, "build_index", "embedding failure");
        }
    }
    if (skipped * 10 > chunks.size())
        throw std::runtime_error("build_index: " + std::to_string(skipped) + "/" +
                                 std::to_string(chunks.size()) + " chunks skipped (>10%)");
    return index;
}

std::vector<RetrievalHit> retrieve(const VectorIndex& index, const EmbeddingVector& query,
                                   size_t k) {
    if (k < 1) throw std::invalid_argument("retrieve: k must be >= 1");
    std::vector<RetrievalHit> hits;
    hits.reserve(index.entries.size());
    for (const auto& e : index.entries)
        hits.push_back({e.chunk_id, simd::cosine(query.values, e.vector.values)});
    size_t n = std::min(k, hits.size());
    auto cmp = [](const RetrievalHit& a, const RetrievalHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.chunk_id < b.chunk_id;
    };
    std::partial_sort(hits.begin(), hits.begin() + n, hits.end(), cmp);
    hits.resize(n);
    return hits;
}

std::vector<RetrievalHit> retrieve(const VectorIndex& index, const std::string& query,
                                   const LlmClient& client, size_t k) {
    auto vecs = client.embed({query});
    return retrieve(index, vecs.at(0), k);
}

namespace {
// floats stored as raw bit patterns so reload is bit-exact
uint32_t float_bits(float f) {
    uint32_t u;
    std::memcpy(&u, &f, sizeof(u));
    return u;
}
float bits_float(uint32_t u) {
    float f;
    std::memcpy(&f, &u, sizeof(f));
    return f;
}
}  // namespace

void save_index(const VectorIndex& index, const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write: " + file.string());
    json header = {{"format", "kbalign-index"}, {"version", 1}, {"dim", index.dim}};
    out << header.dump() << "\n";
    for (const auto& e : index.entries) {
        std::vector<uint32_t> bits;
        bits.reserve(e.vector.values.size());
        for (float f : e.vector.values) bits.push_back(float_bits(f));
        json j = {{"chunk_id", e.chunk_id}, {"vector_bits", bits}};
        out << j.dump() << "\n";
    }
}

VectorIndex load_index(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot read: " + file.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty index file: " + file.string());
    json header = json::parse(line);
    if (header.at("format") != "kbalign-index" || header.at("version") != 1)
        throw std::runtime_error("unsupported index format in " + file.string());
    VectorIndex index;
    index.dim = header.at("dim").get<size_t>();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        IndexEntry e;
        e.chunk_id = j.at("chunk_id").get<std::string>();
        for (uint32_t u : j.at("vector_bits").get<std::vector<uint32_t>>())
            e.vector.values.push_back(bits_float(u));
        index.entries.push_back(std::move(e));
    }
    return index;
}

std::string SegmentGroup::concatenated_text() const {
    std::string out;
    for (size_t i = 0; i < segments.size(); ++i) {
        if (i) out += "\n";
        out += segments[i].text;
    }
    return out;
}

namespace {

std::vector<std::string> segment_directory(const Chunk& seg, const KnowledgeBase& kb) {
    const Document* doc = kb.find(seg.doc_id);
    if (!doc) throw std::runtime_error("group_segments: unknown document " + seg.doc_id);
    return doc->directory();
}

}  // namespace

std::vector<SegmentGroup> group_segments(const std::vector<Chunk>& segments,
                                         const KnowledgeBase& kb, GroupingStrategy strategy,
                                         size_t group_words, const LlmClient& client) {
    for (const auto& s : segments)
        if (s.kind != ChunkKind::SegmentLong)
            throw std::invalid_argument("group_segments: chunk " + s.id + " is not SEGMENT_LONG");
    std::vector<SegmentGroup> groups;
    if (segments.empty()) return groups;

    if (strategy == GroupingStrategy::SameDirectory) {
        SegmentGroup cur;
        std::vector<std::string> cur_dir;
        for (const auto& seg : segments) {
            auto dir = segment_directory(seg, kb);
            bool boundary = !cur.segments.empty() &&
                            (dir != cur_dir || cur.total_words() >= group_words);
            if (boundary) {
                groups.push_back(std::move(cur));
                cur = SegmentGroup{};
            }
            cur_dir = dir;
            cur.segments.push_back(seg);
        }
        if (!cur.segments.empty()) groups.push_back(std::move(cur));
        return groups;
    }

    // CrossDirectorySimilarity: greedy highest-cosine pairing across
    // directories; leftovers become singleton groups.
    std::vector<std::string> texts;
    for (const auto& s : segments) texts.push_back(s.text);
    auto vecs = client.embed(texts);
    std::vector<std::vector<std::string>> dirs;
    for (const auto& s : segments) dirs.push_back(segment_directory(s, kb));

    struct Pair {
        float sim;
        size_t a, b;
    };
    std::vector<Pair> pairs;
    for (size_t i = 0; i < segments.size(); ++i)
        for (size_t j = i + 1; j < segments.size(); ++j) {
            if (dirs[i] == dirs[j]) continue;
            pairs.push_back({simd::cosine(vecs[i].values, vecs[j].values), i, j});
        }
    std::sort(pairs.begin(), pairs.end(), [&](const Pair& x, const Pair& y) {
        if (x.sim != y.sim) return x.sim > y.sim;
        if (segments[x.a].id != segments[y.a].id) return segments[x.a].id < segments[y.a].id;
        return segments[x.b].id < segments[y.b].id;
    });

    std::vector<bool> used(segments.size(), false);
    for (const auto& p : pairs) {
        if (used[p.a] || used[p.b]) continue;
        // a group may exceed the budget by at most the final segment
        if (segments[p.a].word_count() > group_words) continue;
        used[p.a] = used[p.b] = true;
        SegmentGroup g;
        g.segments = {segments[p.a], segments[p.b]};
        groups.push_back(std::move(g));
    }
    for (size_t i = 0; i < segments.size(); ++i) {
        if (used[i]) continue;
        SegmentGroup g;
        g.segments = {segments[i]};
        groups.push_back(std::move(g));
    }
    return groups;
}

}  // namespace kbalign
