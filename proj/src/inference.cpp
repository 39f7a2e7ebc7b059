#include "kbalign/inference.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "kbalign/prompts.hpp"
#include "kbalign/text.hpp"

using json = nlohmann::json;

namespace kbalign {

namespace {

std::string render_references(const std::vector<RetrievalHit>& hits, const ChunkStore& store) {
    std::string refs;
    for (size_t i = 0; i < hits.size(); ++i)
        refs += "\n[" + std::to_string(i + 1) + "] " + store.at(hits[i].chunk_id).text;
    return refs;
}

std::string generate_answer(const std::vector<RetrievalHit>& hits, const ChunkStore& store,
                            const Question& q, const LlmClient& model,
                            const InferenceOptions& opts, double temperature, uint64_t seed) {
    std::string question = q.question;
    if (!q.choices.empty()) {
        question += "\nOptions:";
        for (size_t i = 0; i < q.choices.size(); ++i)
            question += "\n" + std::string(1, char('A' + i)) + ". " + q.choices[i];
    }
    GenerationRequest req;
    req.prompt = prompts::fill(prompts::kDownstreamQA,
                               {{"kb_id", opts.kb_id},
                                {"references", render_references(hits, store)},
                                {"question", question},
                                {"dataset_prompt", opts.dataset_prompt}});
    req.temperature = temperature;
    req.seed = int64_t(seed);
    return model.generate(req);
}

}  // namespace

InferenceRecord answer(const Question& q, const VectorIndex& index, const LlmClient& model,
                       const LlmClient& embedder, const ChunkStore& store,
                       const InferenceOptions& opts) {
    InferenceRecord rec;
    rec.id = q.id;
    rec.question = q.question;
    try {
        rec.retrieval_hits = retrieve(index, q.question, embedder, opts.top_k);
        rec.final_prediction =
            generate_answer(rec.retrieval_hits, store, q, model, opts, opts.temperature, opts.seed);
    } catch (const EmptyOutputError&) {
        rec.final_prediction = "";
    } catch (const std::exception& e) {
        rec.error = e.what();
    }
    return rec;
}

InferenceRecord answer_with_qe(const Question& q, const VectorIndex& index, const LlmClient& model,
                               const LlmClient& embedder, const ChunkStore& store,
                               const InferenceOptions& opts) {
    InferenceRecord pass1 = answer(q, index, model, embedder, store, opts);
    if (pass1.error) {
        // pass-1 failure: plain answer already attempted, record the fallback
        pass1.qe_fallback = true;
        return pass1;
    }
    InferenceRecord rec;
    rec.id = q.id;
    rec.question = q.question;
    rec.first_pass_prediction = pass1.final_prediction;
    rec.first_pass_hits = pass1.retrieval_hits;
    std::string p = truncate_words(pass1.final_prediction, opts.qe_prediction_max_words);
    std::string expanded = p.empty() ? q.question : q.question + " " + p;
    try {
        rec.retrieval_hits = retrieve(index, expanded, embedder, opts.top_k);
        rec.final_prediction =
            generate_answer(rec.retrieval_hits, store, q, model, opts, opts.temperature, opts.seed);
    } catch (const EmptyOutputError&) {
        rec.final_prediction = "";
    } catch (const std::exception& e) {
        rec.error = e.what();
    }
    return rec;
}

std::optional<VerifyVerdict> parse_verdict(const std::string& text) {
    if (text.rfind(prompts::kVerifyCorrectPrefix, 0) == 0) return VerifyVerdict::Correct;
    if (text.rfind(prompts::kVerifyWrongPrefix, 0) == 0) return VerifyVerdict::Wrong;
    return std::nullopt;
}

InferenceRecord self_verify(InferenceRecord record, const VectorIndex& index,
                            const LlmClient& model, const ChunkStore& store,
                            const InferenceOptions& opts) {
    if (record.error) return record;
    GenerationRequest req;
    req.prompt = verify_input_prompt(render_references(record.retrieval_hits, store),
                                     record.question, record.final_prediction);
    req.temperature = opts.temperature;
    req.seed = int64_t(opts.seed);
    std::string verdict_text;
    try {
        verdict_text = model.generate(req);
    } catch (const std::exception&) {
        record.verify_verdict = VerifyVerdict::Unparseable;
        return record;
    }
    record.verify_text = verdict_text;
    auto verdict = parse_verdict(verdict_text);
    record.verify_verdict = verdict.value_or(VerifyVerdict::Unparseable);
    if (record.verify_verdict == VerifyVerdict::Wrong && opts.resample_on_wrong) {
        try {
            Question q{record.id, record.question, std::nullopt, {}};
            std::string fresh = generate_answer(record.retrieval_hits, store, q, model, opts,
                                                opts.resample_temperature, opts.seed + 1);
            record.final_prediction = fresh;
            record.resampled = true;
        } catch (const std::exception&) {
            // keep the original prediction with its warning text
        }
    }
    return record;
}

std::vector<Question> read_questions(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot read: " + file.string());
    std::vector<Question> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        Question q;
        q.id = j.at("id").is_string() ? j["id"].get<std::string>() : j["id"].dump();
        q.question = j.at("question").get<std::string>();
        if (j.contains("golden") && !j["golden"].is_null()) q.golden = j["golden"].get<std::string>();
        if (j.contains("choices")) q.choices = j["choices"].get<std::vector<std::string>>();
        out.push_back(std::move(q));
    }
    return out;
}

namespace {

json hits_to_json(const std::vector<RetrievalHit>& hits) {
    json arr = json::array();
    for (const auto& h : hits) arr.push_back({{"chunk_id", h.chunk_id}, {"score", h.score}});
    return arr;
}

std::vector<RetrievalHit> hits_from_json(const json& arr) {
    std::vector<RetrievalHit> hits;
    for (const auto& j : arr)
        hits.push_back({j.at("chunk_id").get<std::string>(), j.at("score").get<float>()});
    return hits;
}

const char* verdict_name(VerifyVerdict v) {
    switch (v) {
        case VerifyVerdict::Correct: return "CORRECT";
        case VerifyVerdict::Wrong: return "WRONG";
        case VerifyVerdict::Unparseable: return "UNPARSEABLE";
    }
    return "?";
}

}  // namespace

std::string inference_to_json(const InferenceRecord& r) {
    json j;
    j["id"] = r.id;
    j["question"] = r.question;
    if (r.first_pass_prediction) j["first_pass_prediction"] = *r.first_pass_prediction;
    j["final_prediction"] = r.final_prediction;
    j["retrieval_hits"] = hits_to_json(r.retrieval_hits);
    if (!r.first_pass_hits.empty()) j["first_pass_hits"] = hits_to_json(r.first_pass_hits);
    if (r.verify_verdict) j["verify_verdict"] = verdict_name(*r.verify_verdict);
    if (r.verify_text) j["verify_text"] = *r.verify_text;
    j["resampled"] = r.resampled;
    if (r.qe_fallback) j["qe_fallback"] = true;
    if (r.error) j["error"] = *r.error;
    return j.dump();
}

void write_inferences(const std::filesystem::path& file,
                      const std::vector<InferenceRecord>& records) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write: " + file.string());
    for (const auto& r : records) out << inference_to_json(r) << "\n";
}

std::vector<InferenceRecord> read_inferences(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot read: " + file.string());
    std::vector<InferenceRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        InferenceRecord r;
        r.id = j.at("id").get<std::string>();
        r.question = j.at("question").get<std::string>();
        if (j.contains("first_pass_prediction"))
            r.first_pass_prediction = j["first_pass_prediction"].get<std::string>();
        r.final_prediction = j.at("final_prediction").get<std::string>();
        r.retrieval_hits = hits_from_json(j.at("retrieval_hits"));
        if (j.contains("first_pass_hits")) r.first_pass_hits = hits_from_json(j["first_pass_hits"]);
        if (j.contains("verify_verdict")) {
            std::string v = j["verify_verdict"].get<std::string>();
            r.verify_verdict = v == "CORRECT" ? VerifyVerdict::Correct
                               : v == "WRONG" ? VerifyVerdict::Wrong
                                              : VerifyVerdict::Unparseable;
        }
        if (j.contains("verify_text")) r.verify_text = j["verify_text"].get<std::string>();
        r.resampled = j.value("resampled", false);
        r.qe_fallback = j.value("qe_fallback", false);
        if (j.contains("error")) r.error = j["error"].get<std::string>();
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace kbalign
