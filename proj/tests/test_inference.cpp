#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "kbalign/inference.hpp"
#include "kbalign/prompts.hpp"
#include "kbalign/text.hpp"

using namespace kbalign;
namespace fs = std::filesystem;

namespace {

Chunk make_chunk(const std::string& id, std::string text) {
    Chunk c;
    c.id = id;
    c.doc_id = "doc";
    c.kind = ChunkKind::Retrieval;
    c.span_begin = 0;
    c.span_end = word_count(text);
    c.text = std::move(text);
    return c;
}

struct Fixture {
    LlmClient client{std::make_shared<MockBackend>(), {}};
    std::vector<Chunk> chunks;
    ChunkStore store;
    VectorIndex index;

    explicit Fixture(std::vector<Chunk> cs) : chunks(std::move(cs)) {
        store.add(chunks);
        index = build_index(chunks, client);
    }
};

std::vector<Chunk> plain_chunks() {
    return {
        make_chunk("doc#RETRIEVAL#0", "harbor lighthouse rebuilt granite storms 1894 keeper logs"),
        make_chunk("doc#RETRIEVAL#1", "railway timetable revised winter schedule northern branch"),
        make_chunk("doc#RETRIEVAL#2", "orchard cider pressing autumn festival apples barrels"),
    };
}

std::string refs_for(const std::vector<RetrievalHit>& hits, const ChunkStore& store) {
    std::string refs;
    for (size_t i = 0; i < hits.size(); ++i)
        refs += "\n[" + std::to_string(i + 1) + "] " + store.at(hits[i].chunk_id).text;
    return refs;
}

bool has_hit(const std::vector<RetrievalHit>& hits, const std::string& id) {
    return std::any_of(hits.begin(), hits.end(),
                       [&](const RetrievalHit& h) { return h.chunk_id == id; });
}

}  // namespace

TEST_CASE("plain answer retrieves top-k and echoes the scripted model") {
    Fixture f(plain_chunks());
    Question q{"q1", "When was the harbor lighthouse rebuilt?", std::nullopt, {}};
    InferenceOptions opts;
    opts.top_k = 2;
    auto rec = answer(q, f.index, f.client, f.client, f.store, opts);
    CHECK(!rec.error);
    REQUIRE(rec.retrieval_hits.size() == 2);
    CHECK(rec.retrieval_hits[0].chunk_id == "doc#RETRIEVAL#0");
    // the scripted model echoes retrieval hit #1
    CHECK(rec.final_prediction == f.store.at(rec.retrieval_hits[0].chunk_id).text);
    CHECK(!rec.first_pass_prediction.has_value());
    CHECK(!rec.resampled);
}

TEST_CASE("multiple-choice options are appended to the question") {
    Fixture f(plain_chunks());
    Question q{"q1", "Which season is the cider pressing?", std::nullopt, {"spring", "autumn"}};
    InferenceOptions opts;
    opts.top_k = 1;
    opts.dataset_prompt = std::string(prompts::kDatasetPromptJecqa);

    auto hits = retrieve(f.index, q.question, f.client, opts.top_k);
    std::string expected_prompt = prompts::fill(
        prompts::kDownstreamQA,
        {{"kb_id", opts.kb_id},
         {"references", refs_for(hits, f.store)},
         {"question", q.question + "\nOptions:\nA. spring\nB. autumn"},
         {"dataset_prompt", opts.dataset_prompt}});
    auto fixture = std::make_shared<FixtureBackend>("");
    fixture->add(expected_prompt, "B");
    LlmClient model(fixture, {});
    auto rec = answer(q, f.index, model, f.client, f.store, opts);
    CHECK(!rec.error);
    CHECK(rec.final_prediction == "B");
}

TEST_CASE("query expansion pulls in chunks the bare question misses") {
    // the bridge chunk shares vocabulary with the question; the gold chunk
    // only shares vocabulary with the bridge chunk
    Fixture f({
        make_chunk("doc#RETRIEVAL#0",
                   "zarvo lantern festival heritage notes describe plimsol valley watermill "
                   "district stone terraces"),
        make_chunk("doc#RETRIEVAL#1",
                   "plimsol valley watermill district stone terraces host seasonal village "
                   "gatherings"),
        make_chunk("doc#RETRIEVAL#2", "festival lantern customs vary widely across mountain provinces"),
        make_chunk("doc#RETRIEVAL#3", "shipping manifests list grain cargo tonnage quarterly"),
    });
    Question q{"q1", "Where does the zarvo lantern festival take place?", std::nullopt, {}};
    InferenceOptions opts;
    opts.top_k = 2;

    auto plain = answer(q, f.index, f.client, f.client, f.store, opts);
    auto qe = answer_with_qe(q, f.index, f.client, f.client, f.store, opts);
    CHECK(!qe.error);
    REQUIRE(qe.first_pass_prediction.has_value());
    CHECK(*qe.first_pass_prediction == plain.final_prediction);
    REQUIRE(qe.first_pass_hits.size() == plain.retrieval_hits.size());
    for (size_t i = 0; i < qe.first_pass_hits.size(); ++i)
        CHECK(qe.first_pass_hits[i].chunk_id == plain.retrieval_hits[i].chunk_id);

    // the gold chunk only enters the hit set through expansion
    CHECK_FALSE(has_hit(qe.first_pass_hits, "doc#RETRIEVAL#1"));
    CHECK(has_hit(qe.retrieval_hits, "doc#RETRIEVAL#1"));
}

TEST_CASE("an empty first pass falls back to the bare question") {
    Fixture f(plain_chunks());
    Question q{"q1", "When was the harbor lighthouse rebuilt?", std::nullopt, {}};
    InferenceOptions opts;
    opts.top_k = 2;
    auto hits = retrieve(f.index, q.question, f.client, opts.top_k);
    std::string prompt = prompts::fill(prompts::kDownstreamQA,
                                       {{"kb_id", opts.kb_id},
                                        {"references", refs_for(hits, f.store)},
                                        {"question", q.question},
                                        {"dataset_prompt", opts.dataset_prompt}});
    auto fixture = std::make_shared<FixtureBackend>("");
    fixture->add(prompt, "");  // empty completion on both passes
    LlmClient model(fixture, RetryPolicy{0, 1});
    auto rec = answer_with_qe(q, f.index, model, f.client, f.store, opts);
    CHECK(!rec.error);
    CHECK(rec.final_prediction.empty());
    REQUIRE(rec.retrieval_hits.size() == rec.first_pass_hits.size());
    for (size_t i = 0; i < rec.retrieval_hits.size(); ++i)
        CHECK(rec.retrieval_hits[i].chunk_id == rec.first_pass_hits[i].chunk_id);
}

TEST_CASE("a failed first pass is recorded as qe fallback") {
    Fixture f(plain_chunks());
    Question q{"q1", "When was the harbor lighthouse rebuilt?", std::nullopt, {}};
    EndpointConfig cfg;
    cfg.backend = "fixture";  // empty fixture: every completion fails
    cfg.retry.max_retries = 0;
    cfg.retry.backoff_ms = 1;
    LlmClient failing = make_client(cfg);
    InferenceOptions opts;
    auto rec = answer_with_qe(q, f.index, failing, f.client, f.store, opts);
    CHECK(rec.qe_fallback);
    CHECK(rec.error.has_value());
}

TEST_CASE("self-verify confirms a grounded prediction without altering it") {
    Fixture f(plain_chunks());
    Question q{"q1", "When was the harbor lighthouse rebuilt?", std::nullopt, {}};
    InferenceOptions opts;
    opts.top_k = 2;
    opts.self_verify = true;
    opts.resample_on_wrong = true;
    auto rec = answer(q, f.index, f.client, f.client, f.store, opts);
    std::string before = rec.final_prediction;
    rec = self_verify(std::move(rec), f.index, f.client, f.store, opts);
    REQUIRE(rec.verify_verdict.has_value());
    CHECK(*rec.verify_verdict == VerifyVerdict::Correct);
    CHECK(rec.final_prediction == before);
    CHECK(!rec.resampled);
}

TEST_CASE("self-verify resamples once on a wrong verdict") {
    Fixture f(plain_chunks());
    InferenceRecord rec;
    rec.id = "q1";
    rec.question = "When was the harbor lighthouse rebuilt?";
    rec.final_prediction = "unicorns migrated eastwards during 1742";  // unsupported by refs
    rec.retrieval_hits = retrieve(f.index, rec.question, f.client, 2);
    InferenceOptions opts;
    opts.top_k = 2;
    opts.resample_on_wrong = true;
    rec = self_verify(std::move(rec), f.index, f.client, f.store, opts);
    REQUIRE(rec.verify_verdict.has_value());
    CHECK(*rec.verify_verdict == VerifyVerdict::Wrong);
    CHECK(rec.resampled);
    // the resample echoes retrieval hit #1
    CHECK(rec.final_prediction == f.store.at(rec.retrieval_hits[0].chunk_id).text);
}

TEST_CASE("without resampling a wrong prediction is kept") {
    Fixture f(plain_chunks());
    InferenceRecord rec;
    rec.id = "q1";
    rec.question = "When was the harbor lighthouse rebuilt?";
    rec.final_prediction = "unicorns migrated eastwards during 1742";
    rec.retrieval_hits = retrieve(f.index, rec.question, f.client, 2);
    InferenceOptions opts;
    rec = self_verify(std::move(rec), f.index, f.client, f.store, opts);
    CHECK(*rec.verify_verdict == VerifyVerdict::Wrong);
    CHECK(!rec.resampled);
    CHECK(rec.final_prediction == "unicorns migrated eastwards during 1742");
}

TEST_CASE("a free-form verification is UNPARSEABLE and leaves the answer alone") {
    Fixture f(plain_chunks());
    InferenceRecord rec;
    rec.id = "q1";
    rec.question = "When was the harbor lighthouse rebuilt?";
    rec.final_prediction = "in 1894";
    rec.retrieval_hits = retrieve(f.index, rec.question, f.client, 2);
    std::string prompt =
        verify_input_prompt(refs_for(rec.retrieval_hits, f.store), rec.question, rec.final_prediction);
    auto fixture = std::make_shared<FixtureBackend>("");
    fixture->add(prompt, "I think it is fine.");
    LlmClient model(fixture, {});
    InferenceOptions opts;
    opts.resample_on_wrong = true;
    rec = self_verify(std::move(rec), f.index, model, f.store, opts);
    CHECK(*rec.verify_verdict == VerifyVerdict::Unparseable);
    CHECK(!rec.resampled);
    CHECK(rec.final_prediction == "in 1894");
}

TEST_CASE("records with transport errors skip verification") {
    Fixture f(plain_chunks());
    InferenceRecord rec;
    rec.id = "q1";
    rec.question = "anything";
    rec.error = "generation failed";
    InferenceOptions opts;
    rec = self_verify(std::move(rec), f.index, f.client, f.store, opts);
    CHECK(!rec.verify_verdict.has_value());
}

TEST_CASE("parse_verdict recognizes exactly the two teacher prefixes") {
    CHECK(parse_verdict("The student's response is correct because x") == VerifyVerdict::Correct);
    CHECK(parse_verdict("The student response is wrong because y") == VerifyVerdict::Wrong);
    CHECK(!parse_verdict("Correct!").has_value());
    CHECK(!parse_verdict("").has_value());
}

TEST_CASE("questions load from jsonl with optional fields") {
    fs::path file = fs::temp_directory_path() / "kbalign-questions-test.jsonl";
    std::ofstream(file) << R"({"id":"a","question":"Q1?","golden":"G1"})" << "\n"
                        << R"({"id":7,"question":"Q2?","choices":["x","y"]})" << "\n";
    auto qs = read_questions(file);
    fs::remove(file);
    REQUIRE(qs.size() == 2);
    CHECK(qs[0].id == "a");
    CHECK(qs[0].golden == std::optional<std::string>("G1"));
    CHECK(qs[0].choices.empty());
    CHECK(qs[1].id == "7");
    CHECK(!qs[1].golden.has_value());
    CHECK(qs[1].choices == std::vector<std::string>{"x", "y"});
}

TEST_CASE("inference records round-trip through jsonl") {
    InferenceRecord r;
    r.id = "q1";
    r.question = "What?";
    r.first_pass_prediction = "draft";
    r.final_prediction = "final";
    r.retrieval_hits = {{"c1", 0.5f}, {"c2", 0.25f}};
    r.first_pass_hits = {{"c3", 0.75f}};
    r.verify_verdict = VerifyVerdict::Wrong;
    r.verify_text = "The student response is wrong because of drift.";
    r.resampled = true;

    fs::path file = fs::temp_directory_path() / "kbalign-infer-test.jsonl";
    write_inferences(file, {r});
    auto loaded = read_inferences(file);
    fs::remove(file);
    REQUIRE(loaded.size() == 1);
    const auto& l = loaded[0];
    CHECK(l.id == r.id);
    CHECK(l.first_pass_prediction == r.first_pass_prediction);
    CHECK(l.final_prediction == r.final_prediction);
    REQUIRE(l.retrieval_hits.size() == 2);
    CHECK(l.retrieval_hits[1].chunk_id == "c2");
    CHECK(l.retrieval_hits[1].score == 0.25f);
    REQUIRE(l.first_pass_hits.size() == 1);
    CHECK(*l.verify_verdict == VerifyVerdict::Wrong);
    CHECK(l.verify_text == r.verify_text);
    CHECK(l.resampled);
    CHECK(!l.qe_fallback);
    CHECK(!l.error.has_value());
}
