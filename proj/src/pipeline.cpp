#include "kbalign/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "kbalign/annotate.hpp"
#include "kbalign/corpus.hpp"
#include "kbalign/eval.hpp"
#include "kbalign/hashing.hpp"
#include "kbalign/inference.hpp"
#include "kbalign/prompts.hpp"
#include "kbalign/retrieval.hpp"
#include "kbalign/tuning_data.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace kbalign {

std::string file_content_hash(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read: " + p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return content_hash(buf.str());
}

PipelineRun::PipelineRun(PipelineConfig cfg) : cfg_(std::move(cfg)) {
    run_dir_ = fs::path(cfg_.output_root) / ("run-" + cfg_.hash());
    fs::create_directories(run_dir_);
    fs::path lock = run_dir_ / ".lock";
    if (fs::exists(lock))
        throw StageFailure("run directory is locked by another writer: " + lock.string());
    std::ofstream(lock) << "locked\n";
    locked_ = true;
}

PipelineRun::~PipelineRun() {
    if (locked_) {
        std::error_code ec;
        fs::remove(run_dir_ / ".lock", ec);
    }
}

std::string PipelineRun::artifact_hash(const std::string& filename) const {
    return file_content_hash(run_dir_ / filename);
}

bool PipelineRun::up_to_date(const std::string& stage, const json& input_key) const {
    fs::path manifest = run_dir_ / (stage + ".manifest.json");
    if (!fs::exists(manifest)) return false;
    std::ifstream in(manifest);
    json j;
    try {
        in >> j;
    } catch (...) {
        return false;
    }
    if (j.value("input_key_hash", "") != content_hash(input_key.dump())) return false;
    for (const auto& out : j.value("outputs", json::array()))
        if (!fs::exists(run_dir_ / out.at("file").get<std::string>())) return false;
    return true;
}

void PipelineRun::mark_done(const std::string& stage, const json& input_key,
                            const std::vector<std::string>& outputs) {
    json out_list = json::array();
    for (const auto& f : outputs)
        out_list.push_back({{"file", f}, {"hash", artifact_hash(f)}});
    json manifest = {
        {"stage", stage},
        {"config_hash", cfg_.hash()},
        {"input_key", input_key},
        {"input_key_hash", content_hash(input_key.dump())},
        {"outputs", out_list},
    };
    write_manifest_atomic(run_dir_ / (stage + ".manifest.json"), manifest);
}

template <class F>
bool PipelineRun::run_stage(const std::string& stage, const json& input_key, F body) {
    if (up_to_date(stage, input_key)) {
        std::cout << "[" << stage << "] skipped (up-to-date)\n";
        return false;
    }
    std::cout << "[" << stage << "] running\n";
    try {
        std::vector<std::string> outputs = body();
        mark_done(stage, input_key, outputs);
        std::error_code ec;
        fs::remove(run_dir_ / "FAILED", ec);
        return true;
    } catch (const std::exception& e) {
        std::ofstream(run_dir_ / "FAILED") << stage << ": " << e.what() << "\n";
        throw StageFailure(stage + " failed: " + e.what());
    }
}

namespace {

json kb_input_key(const KnowledgeBase& kb) {
    std::string acc;
    for (const auto& d : kb.documents) acc += d.id + "\x1f" + content_hash(d.text) + "\n";
    return json{{"kb_content", content_hash(acc)}};
}

}  // namespace

bool PipelineRun::stage_ingest() {
    KnowledgeBase kb = ingest(cfg_.kb_source);
    json key = kb_input_key(kb);
    key["chunking"] = cfg_.canonical()["chunking"];
    key["long_mode"] = cfg_.annotation.long_mode;
    return run_stage("ingest", key, [&]() {
        std::vector<Chunk> shorts, segments, retrievals;
        for (const auto& doc : kb.documents) {
            auto s = chunk_short(doc, cfg_.chunking.short_max);
            shorts.insert(shorts.end(), s.begin(), s.end());
            auto r = chunk_retrieval(doc, cfg_.chunking.retrieval_max, cfg_.chunking.overlap);
            retrievals.insert(retrievals.end(), r.begin(), r.end());
            if (cfg_.annotation.long_mode) {
                auto g = chunk_segments(doc, cfg_.chunking.segment_max);
                segments.insert(segments.end(), g.begin(), g.end());
            }
        }
        write_chunks(run_dir_ / "chunks_short.jsonl", shorts);
        write_chunks(run_dir_ / "chunks_retrieval.jsonl", retrievals);
        std::vector<std::string> outputs = {"chunks_short.jsonl", "chunks_retrieval.jsonl"};
        if (cfg_.annotation.long_mode) {
            write_chunks(run_dir_ / "chunks_segments.jsonl", segments);
            outputs.push_back("chunks_segments.jsonl");
        }
        json summary = {{"documents", kb.documents.size()},
                        {"total_token_estimate", kb.total_token_estimate()}};
        write_manifest_atomic(run_dir_ / "kb.json", summary);
        outputs.push_back("kb.json");
        return outputs;
    });
}

bool PipelineRun::stage_index() {
    json key = {{"chunks", artifact_hash("chunks_retrieval.jsonl")},
                {"embedder", cfg_.canonical()["endpoints"]["embedder"]}};
    return run_stage("index", key, [&]() {
        auto chunks = read_chunks(run_dir_ / "chunks_retrieval.jsonl");
        LlmClient embedder = make_client(cfg_.embedder);
        SkipReport skips;
        VectorIndex index = build_index(chunks, embedder, cfg_.embedder.max_parallel, &skips);
        save_index(index, run_dir_ / "index.jsonl");
        skips.write(run_dir_ / "index_skips.jsonl");
        return std::vector<std::string>{"index.jsonl", "index_skips.jsonl"};
    });
}

bool PipelineRun::stage_annotate() {
    json key = {{"chunks", artifact_hash("chunks_short.jsonl")},
                {"index", artifact_hash("index.jsonl")},
                {"annotation", cfg_.canonical()["annotation"]},
                {"annotator", cfg_.canonical()["endpoints"]["annotator"]},
                {"seed", cfg_.seed}};
    return run_stage("annotate", key, [&]() {
        json kb_summary;
        std::ifstream(run_dir_ / "kb.json") >> kb_summary;
        size_t total_tokens = kb_summary.at("total_token_estimate").get<size_t>();
        KnowledgeBase kb_tokens;  // volume planning needs only the total
        kb_tokens.documents.push_back(
            {"_", {}, "x", total_tokens});
        size_t target = plan_annotation_volume(kb_tokens, cfg_.annotation.density);

        LlmClient annotator = make_client(cfg_.annotator);
        LlmClient embedder = make_client(cfg_.embedder);
        VectorIndex index = load_index(run_dir_ / "index.jsonl");
        SkipReport skips;

        AnnotateContext ctx;
        ctx.annotator = &annotator;
        ctx.embedder = &embedder;
        ctx.index = &index;
        ctx.styles = cfg_.annotation.styles;
        if (!cfg_.annotation.filters.empty()) ctx.filter.patterns = cfg_.annotation.filters;
        ctx.seed = cfg_.seed;
        ctx.skips = &skips;

        std::vector<AnnotationRecord> records;

        // uniform sampling without replacement until the target volume
        auto chunks = read_chunks(run_dir_ / "chunks_short.jsonl");
        std::mt19937_64 rng(cfg_.seed);
        std::shuffle(chunks.begin(), chunks.end(), rng);
        for (const auto& chunk : chunks) {
            if (records.size() >= target) break;
            auto recs = annotate_short(chunk, ctx);
            records.insert(records.end(), recs.begin(), recs.end());
        }

        if (cfg_.annotation.long_mode) {
            KnowledgeBase kb = ingest(cfg_.kb_source);
            auto segments = read_chunks(run_dir_ / "chunks_segments.jsonl");
            GroupingStrategy strategy = cfg_.annotation.grouping == "SAME_DIRECTORY"
                                            ? GroupingStrategy::SameDirectory
                                            : GroupingStrategy::CrossDirectorySimilarity;
            auto groups = group_segments(segments, kb, strategy, cfg_.annotation.group_words,
                                         embedder);
            std::shuffle(groups.begin(), groups.end(), rng);
            for (const auto& group : groups) {
                if (records.size() >= target * 2) break;
                if (group.segments.size() < 2) continue;
                auto recs = annotate_long(group, ctx);
                records.insert(records.end(), recs.begin(), recs.end());
            }
        }

        records = filter_questions(std::move(records), ctx.filter);
        std::sort(records.begin(), records.end(),
                  [](const AnnotationRecord& a, const AnnotationRecord& b) { return a.id < b.id; });
        write_annotations(run_dir_ / "annotations.jsonl", records);
        skips.write(run_dir_ / "annotate_skips.jsonl");
        return std::vector<std::string>{"annotations.jsonl", "annotate_skips.jsonl"};
    });
}

bool PipelineRun::stage_build_data(int round) {
    if (round < 0 || round >= cfg_.rounds.count)
        throw StageFailure("build-data: round " + std::to_string(round) + " out of range [0," +
                           std::to_string(cfg_.rounds.count - 1) + "]");
    std::string stage = "build-data-" + std::to_string(round);
    json key = {{"annotations", artifact_hash("annotations.jsonl")},
                {"index", artifact_hash("index.jsonl")},
                {"rounds", cfg_.canonical()["rounds"]},
                {"round", round},
                {"seed", cfg_.seed}};
    if (round >= 1) {
        if (size_t(round) > cfg_.round_endpoints.size())
            throw StageFailure("build-data: round " + std::to_string(round) +
                               " needs endpoints.rounds[" + std::to_string(round - 1) +
                               "] (trainer handoff pending)");
        key["model_endpoint"] = cfg_.canonical()["endpoints"]["rounds"][round - 1];
    }
    return run_stage(stage, key, [&]() {
        auto all_records = read_annotations(run_dir_ / "annotations.jsonl");
        RoundPlan plan;
        plan.rounds = cfg_.rounds.count;
        plan.verify_fraction = cfg_.rounds.verify_fraction;
        plan.retrieved_context_fraction = cfg_.rounds.retrieved_fraction;

        std::vector<std::string> endpoint_names;
        for (size_t i = 0; i < cfg_.round_endpoints.size(); ++i)
            endpoint_names.push_back("rounds[" + std::to_string(i) + "]");
        auto descriptors = schedule(plan, all_records, endpoint_names);
        const RoundDescriptor& desc = descriptors.at(round);

        std::vector<AnnotationRecord> split;
        for (const auto& r : all_records)
            if (std::binary_search(desc.record_ids.begin(), desc.record_ids.end(), r.id))
                split.push_back(r);
        if (split.empty()) throw std::runtime_error("round split is empty");

        ChunkStore store(read_chunks(run_dir_ / "chunks_retrieval.jsonl"));
        store.add(read_chunks(run_dir_ / "chunks_short.jsonl"));
        if (fs::exists(run_dir_ / "chunks_segments.jsonl"))
            store.add(read_chunks(run_dir_ / "chunks_segments.jsonl"));
        VectorIndex index = load_index(run_dir_ / "index.jsonl");
        LlmClient embedder = make_client(cfg_.embedder);
        SkipReport skips;

        InitialDatasetOptions opts;
        opts.deterministic_mix = cfg_.rounds.deterministic_mix;
        opts.seed = cfg_.seed + uint64_t(round);
        opts.top_k = cfg_.inference.top_k;
        auto qa = build_initial_dataset(split, plan, index, embedder, opts, &skips);
        for (auto& ex : qa) ex.round = round;

        std::vector<TuningExample> verify;
        if (round >= 1) {
            LlmClient model = make_client(cfg_.round_endpoints.at(round - 1));
            LlmClient annotator = make_client(cfg_.annotator);
            std::string dataset_prompt = prompts::dataset_prompt_for(cfg_.eval.dataset_prompt);
            auto predictions = collect_predictions(split, model, index, embedder, store,
                                                   dataset_prompt, cfg_.inference.top_k,
                                                   cfg_.annotator.max_parallel, &skips);
            verify = build_verify_examples(predictions, split, store, annotator, round,
                                           cfg_.seed, &skips);
        }

        size_t n_total = round == 0 ? qa.size()
                                    : size_t(std::llround(double(qa.size()) * 4.0 / 3.0));
        AssembledRound assembled = assemble_round(round, plan, qa, verify, n_total, cfg_.seed);
        assembled.manifest["record_ids"] = desc.record_ids;
        assembled.manifest["model_endpoint"] = desc.model_endpoint;
        assembled.manifest["trainer_handoff"] = true;

        std::string dataset_file = desc.dataset_file;
        write_dataset(run_dir_ / dataset_file, assembled.examples, store, cfg_.kb_id,
                      prompts::dataset_prompt_for(cfg_.eval.dataset_prompt));
        std::string manifest_file = "round-" + std::to_string(round) + ".manifest.json";
        write_manifest_atomic(run_dir_ / manifest_file, assembled.manifest);
        skips.write(run_dir_ / ("round-" + std::to_string(round) + "_skips.jsonl"));
        return std::vector<std::string>{dataset_file, manifest_file};
    });
}

namespace {

// fallback question set when no questions_file is configured: annotated
// QA pairs double as a smoke-test set
std::vector<Question> derive_questions(const std::vector<AnnotationRecord>& records, size_t max_n) {
    std::vector<Question> out;
    for (const auto& r : records) {
        if (out.size() >= max_n) break;
        Question q;
        q.id = r.id;
        q.question = r.question;
        q.golden = r.answer;
        out.push_back(std::move(q));
    }
    return out;
}

}  // namespace

bool PipelineRun::stage_infer() {
    json key = {{"index", artifact_hash("index.jsonl")},
                {"inference", cfg_.canonical()["inference"]},
                {"questions", cfg_.inference.questions_file.empty()
                                  ? artifact_hash("annotations.jsonl")
                                  : file_content_hash(cfg_.inference.questions_file)},
                {"seed", cfg_.seed}};
    return run_stage("infer", key, [&]() {
        std::vector<Question> questions;
        if (!cfg_.inference.questions_file.empty()) {
            questions = read_questions(cfg_.inference.questions_file);
        } else {
            questions = derive_questions(read_annotations(run_dir_ / "annotations.jsonl"), 20);
        }
        if (questions.empty()) throw std::runtime_error("no questions to answer");

        VectorIndex index = load_index(run_dir_ / "index.jsonl");
        ChunkStore store(read_chunks(run_dir_ / "chunks_retrieval.jsonl"));
        LlmClient embedder = make_client(cfg_.embedder);
        EndpointConfig model_cfg =
            cfg_.round_endpoints.empty() ? cfg_.annotator : cfg_.round_endpoints.back();
        LlmClient model = make_client(model_cfg);

        InferenceOptions opts;
        opts.top_k = cfg_.inference.top_k;
        opts.query_expansion = cfg_.inference.qe;
        opts.self_verify = cfg_.inference.self_verify;
        opts.resample_on_wrong = cfg_.inference.self_verify;
        opts.resample_temperature = cfg_.inference.resample_temperature;
        opts.dataset_prompt = prompts::dataset_prompt_for(cfg_.eval.dataset_prompt);
        opts.kb_id = cfg_.kb_id;
        opts.seed = cfg_.seed;

        std::vector<InferenceRecord> records;
        for (const auto& q : questions) {
            InferenceRecord rec = opts.query_expansion
                                      ? answer_with_qe(q, index, model, embedder, store, opts)
                                      : answer(q, index, model, embedder, store, opts);
            if (opts.self_verify) rec = self_verify(std::move(rec), index, model, store, opts);
            records.push_back(std::move(rec));
        }
        write_inferences(run_dir_ / "predictions.jsonl", records);

        // references for the eval stage when none are configured
        if (cfg_.eval.references_file.empty()) {
            std::ofstream refs(run_dir_ / "references.jsonl", std::ios::binary);
            for (const auto& q : questions) {
                json j = {{"id", q.id}, {"golden", q.golden.value_or("")}};
                refs << j.dump() << "\n";
            }
        }
        return std::vector<std::string>{"predictions.jsonl"};
    });
}

bool PipelineRun::stage_eval() {
    std::string refs_file = cfg_.eval.references_file;
    json key = {{"predictions", artifact_hash("predictions.jsonl")},
                {"eval", cfg_.canonical()["eval"]}};
    return run_stage("eval", key, [&]() {
        fs::path refs = refs_file.empty() ? run_dir_ / "references.jsonl" : fs::path(refs_file);
        auto items = join_predictions_references(run_dir_ / "predictions.jsonl", refs);

        LlmClient embedder = make_client(cfg_.embedder);
        LlmClient judge = make_client(cfg_.judge);
        EvalConfig ec;
        ec.metrics = cfg_.eval.metrics;
        ec.dataset_label = cfg_.eval.dataset_prompt;
        ec.embedder = &embedder;
        ec.judge = &judge;
        ec.seed = cfg_.seed;
        EvalResult result = evaluate(items, ec);

        json report = make_report(result, ec.dataset_label,
                                  json{{"metrics", cfg_.eval.metrics}, {"seed", cfg_.seed}});
        write_report(run_dir_ / "report.json", report);
        print_report(report);
        return std::vector<std::string>{"report.json"};
    });
}

void PipelineRun::run_all() {
    stage_ingest();
    stage_index();
    stage_annotate();
    stage_build_data(0);
    for (int r = 1; r < cfg_.rounds.count; ++r) {
        if (size_t(r) > cfg_.round_endpoints.size()) {
            std::cout << "[pipeline] trainer handoff: round-" << r - 1
                      << " dataset emitted; configure endpoints.rounds[" << r - 1
                      << "] to continue\n";
            break;
        }
        stage_build_data(r);
    }
    stage_infer();
    stage_eval();
}

json PipelineRun::dry_run_plan() const {
    json stages = json::array();
    stages.push_back("ingest");
    stages.push_back("index");
    stages.push_back("annotate");
    for (int r = 0; r < cfg_.rounds.count; ++r) {
        if (r >= 1 && size_t(r) > cfg_.round_endpoints.size()) {
            stages.push_back("trainer-handoff (round " + std::to_string(r - 1) + ")");
            break;
        }
        stages.push_back("build-data-" + std::to_string(r));
    }
    stages.push_back("infer");
    stages.push_back("eval");
    return json{{"run_dir", run_dir_.string()},
                {"config_hash", cfg_.hash()},
                {"stages", stages},
                {"config", cfg_.canonical()}};
}

}  // namespace kbalign
