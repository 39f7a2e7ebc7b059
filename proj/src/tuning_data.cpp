#include "kbalign/tuning_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "kbalign/hashing.hpp"
#include "kbalign/parallel.hpp"
#include "kbalign/prompts.hpp"
#include "kbalign/text.hpp"

using json = nlohmann::json;

namespace kbalign {

ChunkStore::ChunkStore(const std::vector<Chunk>& chunks) { add(chunks); }

void ChunkStore::add(const std::vector<Chunk>& chunks) {
    for (const auto& c : chunks) by_id_[c.id] = c;
}

const Chunk& ChunkStore::at(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw std::runtime_error("unknown chunk id: " + id);
    return it->second;
}

namespace {

std::string render_references(const std::vector<std::string>& chunk_ids, const ChunkStore& store) {
    std::string refs;
    for (size_t i = 0; i < chunk_ids.size(); ++i) {
        refs += "\n[" + std::to_string(i + 1) + "] " + store.at(chunk_ids[i]).text;
    }
    return refs;
}

std::string qa_prompt(const std::vector<std::string>& context_ids, const ChunkStore& store,
                      const std::string& kb_id, const std::string& question,
                      const std::string& dataset_prompt) {
    return prompts::fill(prompts::kDownstreamQA, {{"kb_id", kb_id},
                                                  {"references", render_references(context_ids, store)},
                                                  {"question", question},
                                                  {"dataset_prompt", dataset_prompt}});
}

}  // namespace

std::string verify_input_prompt(const std::string& references, const std::string& question,
                                const std::string& student_response) {
    return "You are verifying a student's answer against the knowledge base references. "
           "Start with the judgement.\n"
           "References:" + references + "\n"
           "Question: " + question + "\n"
           "Student Response: " + student_response + "\n"
           "Please generate your verification.";
}

std::vector<TuningExample> build_initial_dataset(std::vector<AnnotationRecord> records,
                                                 const RoundPlan& plan, const VectorIndex& index,
                                                 const LlmClient& embedder,
                                                 const InitialDatasetOptions& opts,
                                                 SkipReport* skips) {
    if (records.empty()) throw std::invalid_argument("build_initial_dataset: no records");
    std::sort(records.begin(), records.end(),
              [](const AnnotationRecord& a, const AnnotationRecord& b) { return a.id < b.id; });
    const size_t n = records.size();
    const double frac = plan.retrieved_context_fraction;

    std::vector<bool> retrieved(n, false);
    if (opts.deterministic_mix) {
        // evenly interleaved, exactly round(n * frac) marked
        size_t count = size_t(std::llround(double(n) * frac));
        for (size_t i = 0; i < n; ++i)
            retrieved[i] = (i + 1) * count / n > i * count / n;
    } else {
        std::mt19937_64 rng(opts.seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (size_t i = 0; i < n; ++i) retrieved[i] = u(rng) < frac;
    }

    std::vector<TuningExample> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        const auto& r = records[i];
        TuningExample ex;
        ex.task = TaskKind::QA;
        ex.question = r.question;
        ex.target_output = r.answer;
        ex.round = 0;
        ex.provenance = r.id;
        if (retrieved[i]) {
            try {
                auto hits = retrieve(index, r.question, embedder, opts.top_k);
                for (const auto& h : hits) ex.input_context_chunk_ids.push_back(h.chunk_id);
                ex.context_source = ContextSource::Retrieved;
            } catch (const std::exception& e) {
                if (skips) skips->add(r.id, "build_initial_dataset", std::string("retrieval downgrade: ") + e.what());
                ex.input_context_chunk_ids = r.golden_context_chunk_ids;
                ex.context_source = ContextSource::Golden;
            }
        } else {
            ex.input_context_chunk_ids = r.golden_context_chunk_ids;
            ex.context_source = ContextSource::Golden;
        }
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<Prediction> collect_predictions(const std::vector<AnnotationRecord>& records,
                                            const LlmClient& model, const VectorIndex& index,
                                            const LlmClient& embedder, const ChunkStore& store,
                                            const std::string& dataset_prompt, size_t top_k,
                                            int max_parallel, SkipReport* skips) {
    struct Slot {
        Prediction pred;
        bool failed = false;
        std::string reason;
    };
    auto slots = parallel_map(
        records,
        [&](const AnnotationRecord& r) {
            Slot s;
            s.pred.record_id = r.id;
            s.pred.question = r.question;
            try {
                auto hits = retrieve(index, r.question, embedder, top_k);
                for (const auto& h : hits) s.pred.context_chunk_ids.push_back(h.chunk_id);
                GenerationRequest req;
                req.prompt = qa_prompt(s.pred.context_chunk_ids, store, "0", r.question,
                                       dataset_prompt);
                s.pred.prediction = model.generate(req);
            } catch (const EmptyOutputError&) {
                s.pred.prediction = "";  // kept, not dropped
            } catch (const std::exception& e) {
                s.failed = true;
                s.reason = e.what();
            }
            return s;
        },
        max_parallel);

    std::vector<Prediction> out;
    size_t failed = 0;
    for (auto& s : slots) {
        if (s.failed) {
            ++failed;
            if (skips) skips->add(s.pred.record_id, "collect_predictions", s.reason);
            continue;
        }
        out.push_back(std::move(s.pred));
    }
    if (failed * 5 > records.size())
        throw std::runtime_error("collect_predictions: " + std::to_string(failed) + "/" +
                                 std::to_string(records.size()) + " items skipped (>20%)");
    return out;
}

bool has_verify_prefix(const std::string& v) {
    return v.rfind(prompts::kVerifyCorrectPrefix, 0) == 0 ||
           v.rfind(prompts::kVerifyWrongPrefix, 0) == 0;
}

std::vector<TuningExample> build_verify_examples(const std::vector<Prediction>& pairs,
                                                 const std::vector<AnnotationRecord>& records,
                                                 const ChunkStore& store, const LlmClient& annotator,
                                                 int round, uint64_t seed, SkipReport* skips) {
    std::map<std::string, const AnnotationRecord*> by_id;
    for (const auto& r : records) by_id[r.id] = &r;

    std::vector<TuningExample> out;
    for (const auto& p : pairs) {
        auto it = by_id.find(p.record_id);
        if (it == by_id.end()) {
            if (skips) skips->add(p.record_id, "build_verify_examples", "missing golden record");
            continue;
        }
        const AnnotationRecord& rec = *it->second;
        std::string reference;
        for (const auto& cid : rec.golden_context_chunk_ids) {
            if (!reference.empty()) reference += "\n";
            reference += store.at(cid).text;
        }
        GenerationRequest req;
        req.prompt = prompts::fill(prompts::kVerifyTeacher, {{"reference", reference},
                                                             {"question", p.question},
                                                             {"golden_answer", rec.answer},
                                                             {"student_response", p.prediction}});
        req.seed = int64_t(seed);
        std::string v;
        try {
            v = annotator.generate(req);
            if (!has_verify_prefix(v)) {
                req.seed = int64_t(seed + 1);  // one regeneration attempt
                v = annotator.generate(req);
            }
        } catch (const std::exception& e) {
            if (skips) skips->add(p.record_id, "build_verify_examples", e.what());
            continue;
        }
        if (!has_verify_prefix(v)) {
            if (skips)
                skips->add(p.record_id, "build_verify_examples", "verification missing mandated prefix");
            continue;
        }
        TuningExample ex;
        ex.task = TaskKind::Verify;
        ex.input_context_chunk_ids = p.context_chunk_ids;
        ex.context_source = ContextSource::Retrieved;
        ex.question = p.question;
        ex.student_response = p.prediction;
        ex.target_output = v;
        ex.round = round;
        ex.provenance = rec.id;
        out.push_back(std::move(ex));
    }
    return out;
}

AssembledRound assemble_round(int round_index, const RoundPlan& plan,
                              const std::vector<TuningExample>& qa_pool,
                              const std::vector<TuningExample>& verify_pool, size_t n_total,
                              uint64_t seed) {
    size_t want_verify = round_index == 0 ? 0 : size_t(std::llround(double(n_total) * plan.verify_fraction));
    size_t n_verify = std::min(want_verify, verify_pool.size());
    bool degraded = n_verify < want_verify;
    size_t n_qa = std::min(n_total - n_verify, qa_pool.size());

    AssembledRound out;
    out.examples.assign(verify_pool.begin(), verify_pool.begin() + n_verify);
    out.examples.insert(out.examples.end(), qa_pool.begin(), qa_pool.begin() + n_qa);
    std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ull * uint64_t(round_index + 1)));
    std::shuffle(out.examples.begin(), out.examples.end(), rng);

    out.manifest = {
        {"round", round_index},
        {"n_total", out.examples.size()},
        {"n_verify", n_verify},
        {"n_qa", n_qa},
        {"verify_fraction_requested", plan.verify_fraction},
        {"verify_fraction_actual",
         out.examples.empty() ? 0.0 : double(n_verify) / double(out.examples.size())},
        {"retrieved_context_fraction", plan.retrieved_context_fraction},
        {"seed", seed},
        {"epochs", 1},
    };
    if (degraded)
        out.manifest["warning"] = "verify pool smaller than requested fraction; lowered to " +
                                  std::to_string(n_verify) + "/" + std::to_string(out.examples.size());
    return out;
}

std::vector<RoundDescriptor> schedule(const RoundPlan& plan,
                                      const std::vector<AnnotationRecord>& records,
                                      const std::vector<std::string>& round_endpoints) {
    if (plan.rounds < 1) throw std::invalid_argument("schedule: rounds must be >= 1");
    std::vector<std::string> ids;
    for (const auto& r : records) ids.push_back(r.id);
    std::sort(ids.begin(), ids.end());

    std::vector<RoundDescriptor> out;
    const size_t n = ids.size();
    for (int r = 0; r < plan.rounds; ++r) {
        RoundDescriptor d;
        d.round_index = r;
        size_t lo = n * size_t(r) / size_t(plan.rounds);
        size_t hi = n * size_t(r + 1) / size_t(plan.rounds);
        d.record_ids.assign(ids.begin() + lo, ids.begin() + hi);
        d.dataset_file = "round-" + std::to_string(r) + ".jsonl";
        // predictions for round r come from the model tuned on rounds < r
        d.model_endpoint = r == 0 ? "" : (size_t(r - 1) < round_endpoints.size()
                                              ? round_endpoints[r - 1]
                                              : "");
        d.trainer_handoff = true;
        out.push_back(std::move(d));
    }
    return out;
}

json render_example(const TuningExample& ex, const ChunkStore& store, const std::string& kb_id,
                    const std::string& dataset_prompt) {
    json messages = json::array();
    if (ex.task == TaskKind::QA) {
        messages.push_back({{"role", "user"},
                            {"content", qa_prompt(ex.input_context_chunk_ids, store, kb_id,
                                                  ex.question, dataset_prompt)}});
    } else {
        messages.push_back({{"role", "user"},
                            {"content",
                             verify_input_prompt(render_references(ex.input_context_chunk_ids, store),
                                                 ex.question, ex.student_response)}});
    }
    messages.push_back({{"role", "assistant"}, {"content", ex.target_output}});
    return json{{"task", ex.task == TaskKind::QA ? "QA" : "VERIFY"},
                {"messages", messages},
                {"round", ex.round},
                {"provenance", ex.provenance}};
}

void write_dataset(const std::filesystem::path& file, const std::vector<TuningExample>& examples,
                   const ChunkStore& store, const std::string& kb_id,
                   const std::string& dataset_prompt) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write: " + file.string());
    for (const auto& ex : examples) out << render_example(ex, store, kb_id, dataset_prompt).dump() << "\n";
}

void write_manifest_atomic(const std::filesystem::path& file, const json& manifest) {
    std::filesystem::path tmp = file;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write: " + tmp.string());
        out << manifest.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, file);
}

}  // namespace kbalign
