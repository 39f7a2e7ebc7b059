#include "kbalign/annotate.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kbalign/hashing.hpp"
#include "kbalign/prompts.hpp"
#include "kbalign/text.hpp"

using json = nlohmann::json;

namespace kbalign {

bool QuestionFilter::rejects(const std::string& question) const {
    if (question.empty()) return true;
    if (word_count(question) > max_question_words) return true;
    for (const auto& p : patterns)
        if (contains_ci(question, p)) return true;
    return false;
}

namespace {

std::string strip_ws(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && is_space_byte(s[a])) ++a;
    while (b > a && is_space_byte(s[b - 1])) --b;
    return s.substr(a, b - a);
}

// strips "1.", "2)", "Q:", "A:", "Question:", "Answer:" leads
std::string strip_lead(std::string line) {
    line = strip_ws(line);
    size_t i = 0;
    while (i < line.size() && isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) {
        line = strip_ws(line.substr(i + 1));
    }
    for (const char* lead : {"Question:", "Answer:", "Q:", "A:"}) {
        size_t n = std::strlen(lead);
        if (line.size() >= n && line.compare(0, n, lead) == 0) {
            line = strip_ws(line.substr(n));
            break;
        }
    }
    return line;
}

std::vector<std::string> nonempty_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        line = strip_ws(line);
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

std::string pick_style(const AnnotateContext& ctx, const std::string& question) {
    if (ctx.styles.empty()) return "";
    uint64_t h = fnv1a64(question, 0xcbf29ce484222325ull ^ ctx.seed);
    return ctx.styles[h % ctx.styles.size()];
}

std::vector<std::string> supplement_retrieval(const AnnotateContext& ctx,
                                              const std::string& question) {
    std::vector<std::string> ids;
    if (!ctx.index || !ctx.embedder) return ids;
    for (const auto& hit : retrieve(*ctx.index, question, *ctx.embedder, ctx.top_k))
        ids.push_back(hit.chunk_id);
    return ids;
}

std::string record_id(const std::string& golden, const std::string& question) {
    return "ann-" + hex64(fnv1a64(golden + "\x1f" + question));
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_alternating_qa(
    const std::string& completion) {
    auto lines = nonempty_lines(completion);
    std::vector<std::pair<std::string, std::string>> pairs;
    for (size_t i = 0; i + 1 < lines.size(); i += 2) {
        std::string q = strip_lead(lines[i]);
        std::string a = strip_lead(lines[i + 1]);
        if (q.empty() || a.empty()) continue;
        pairs.emplace_back(std::move(q), std::move(a));
    }
    return pairs;
}

std::vector<AnnotationRecord> annotate_short(const Chunk& chunk, const AnnotateContext& ctx) {
    std::vector<AnnotationRecord> records;
    GenerationRequest req;
    req.prompt = prompts::fill(prompts::kShortAnnotation, {{"content", chunk.text}});
    req.temperature = ctx.question_temperature;
    req.seed = int64_t(ctx.seed);
    std::string completion;
    try {
        completion = ctx.annotator->generate(req);
    } catch (const std::exception& e) {
        if (ctx.skips) ctx.skips->add(chunk.id, "annotate_short", e.what());
        return records;
    }
    auto pairs = parse_alternating_qa(completion);
    if (pairs.empty()) {
        if (ctx.skips) ctx.skips->add(chunk.id, "annotate_short", "unparseable completion");
        return records;
    }
    for (auto& [q, a] : pairs) {
        if (records.size() >= 5) break;
        if (ctx.filter.rejects(q)) {
            if (ctx.skips) ctx.skips->add(chunk.id, "filter_questions", "question filtered: " + q);
            continue;
        }
        AnnotationRecord r;
        r.question = std::move(q);
        r.answer = std::move(a);
        r.golden_context_chunk_ids = {chunk.id};
        r.retrieved_context_chunk_ids = supplement_retrieval(ctx, r.question);
        r.style = pick_style(ctx, r.question);
        r.mode = AnnotationMode::Short;
        r.id = record_id(chunk.id, r.question);
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<AnnotationRecord> annotate_long(const SegmentGroup& group, const AnnotateContext& ctx) {
    std::vector<AnnotationRecord> records;
    if (group.segments.size() < 2)
        throw std::invalid_argument("annotate_long: group needs at least 2 segments");

    std::string doc_text = group.concatenated_text();
    GenerationRequest qreq;
    qreq.prompt = prompts::fill(prompts::kLongQuestionGen, {{"document", doc_text}});
    qreq.temperature = ctx.question_temperature;
    qreq.seed = int64_t(ctx.seed);
    std::string group_key;
    for (const auto& s : group.segments) group_key += s.id + ";";

    std::string qcompletion;
    try {
        qcompletion = ctx.annotator->generate(qreq);
    } catch (const std::exception& e) {
        if (ctx.skips) ctx.skips->add(group_key, "annotate_long", e.what());
        return records;
    }

    for (const auto& raw : nonempty_lines(qcompletion)) {
        std::string question = strip_lead(raw);
        if (ctx.filter.rejects(question)) {
            if (ctx.skips)
                ctx.skips->add(group_key, "filter_questions", "question filtered: " + question);
            continue;
        }
        std::vector<std::optional<std::string>> infos;
        size_t answered = 0;
        for (const auto& seg : group.segments) {
            GenerationRequest ireq;
            ireq.prompt = prompts::fill(prompts::kLongInfoExtract,
                                        {{"document", seg.text}, {"question", question}});
            ireq.temperature = ctx.answer_temperature;
            ireq.seed = int64_t(ctx.seed);
            std::string info = strip_ws(ctx.annotator->generate(ireq));
            if (to_lower(info) == "none" || info.empty()) {
                infos.push_back(std::nullopt);
            } else {
                infos.push_back(info);
                ++answered;
            }
        }
        if (answered == 0) {
            if (ctx.skips) ctx.skips->add(group_key, "annotate_long", "all infos none: " + question);
            continue;
        }
        if (answered < 2) {
            // multi-hop requirement: answers must draw on several segments
            if (ctx.skips)
                ctx.skips->add(group_key, "annotate_long", "single-segment question: " + question);
            continue;
        }
        std::vector<std::string> non_null;
        for (const auto& i : infos)
            if (i) non_null.push_back(*i);
        GenerationRequest rreq;
        rreq.prompt = prompts::fill(prompts::kLongRefine,
                                    {{"question", question}, {"answer", join(non_null, " ")}});
        rreq.temperature = ctx.answer_temperature;
        rreq.seed = int64_t(ctx.seed);
        std::string answer = strip_ws(ctx.annotator->generate(rreq));
        if (answer.empty()) {
            if (ctx.skips) ctx.skips->add(group_key, "annotate_long", "empty refined answer");
            continue;
        }

        AnnotationRecord r;
        r.question = question;
        r.answer = answer;
        for (const auto& s : group.segments) r.golden_context_chunk_ids.push_back(s.id);
        r.retrieved_context_chunk_ids = supplement_retrieval(ctx, question);
        r.style = pick_style(ctx, question);
        r.mode = AnnotationMode::Long;
        r.per_segment_info = std::move(infos);
        r.id = record_id(group_key, question);
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<AnnotationRecord> filter_questions(std::vector<AnnotationRecord> records,
                                               const QuestionFilter& filter) {
    std::vector<AnnotationRecord> out;
    std::set<std::string> seen;
    for (auto& r : records) {
        if (filter.rejects(r.question)) continue;
        if (!seen.insert(r.question).second) continue;
        out.push_back(std::move(r));
    }
    return out;
}

size_t plan_annotation_volume(const KnowledgeBase& kb, double density) {
    if (density <= 0) throw std::invalid_argument("density must be > 0");
    long double target = (long double)kb.total_token_estimate() * density / 10000.0L;
    return (size_t)std::ceil(target);
}

std::string annotation_to_json(const AnnotationRecord& r) {
    json j;
    j["id"] = r.id;
    j["question"] = r.question;
    j["answer"] = r.answer;
    j["golden_context_chunk_ids"] = r.golden_context_chunk_ids;
    j["retrieved_context_chunk_ids"] = r.retrieved_context_chunk_ids;
    j["style"] = r.style;
    j["mode"] = r.mode == AnnotationMode::Short ? "SHORT" : "LONG";
    if (!r.per_segment_info.empty()) {
        json infos = json::array();
        for (const auto& i : r.per_segment_info) {
            if (i)
                infos.push_back(*i);
            else
                infos.push_back(nullptr);
        }
        j["per_segment_info"] = infos;
    }
    return j.dump();
}

AnnotationRecord annotation_from_json(const std::string& line) {
    json j = json::parse(line);
    AnnotationRecord r;
    r.id = j.at("id").get<std::string>();
    r.question = j.at("question").get<std::string>();
    r.answer = j.at("answer").get<std::string>();
    r.golden_context_chunk_ids = j.at("golden_context_chunk_ids").get<std::vector<std::string>>();
    r.retrieved_context_chunk_ids =
        j.at("retrieved_context_chunk_ids").get<std::vector<std::string>>();
    r.style = j.at("style").get<std::string>();
    r.mode = j.at("mode") == "SHORT" ? AnnotationMode::Short : AnnotationMode::Long;
    if (j.contains("per_segment_info"))
        for (const auto& i : j["per_segment_info"]) {
            if (i.is_null())
                r.per_segment_info.push_back(std::nullopt);
            else
                r.per_segment_info.push_back(i.get<std::string>());
        }
    return r;
}

void write_annotations(const std::filesystem::path& file,
                       const std::vector<AnnotationRecord>& records) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write: " + file.string());
    for (const auto& r : records) out << annotation_to_json(r) << "\n";
}

std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot read: " + file.string());
    std::vector<AnnotationRecord> records;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) records.push_back(annotation_from_json(line));
    return records;
}

}  // namespace kbalign
