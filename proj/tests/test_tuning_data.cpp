#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "kbalign/prompts.hpp"
#include "kbalign/text.hpp"
#include "kbalign/tuning_data.hpp"

using namespace kbalign;

namespace {

std::vector<Chunk> retrieval_chunks(size_t n) {
    std::vector<Chunk> chunks;
    for (size_t i = 0; i < n; ++i) {
        Chunk c;
        c.id = "doc#RETRIEVAL#" + std::to_string(i);
        c.doc_id = "doc";
        c.kind = ChunkKind::Retrieval;
        c.text = "subject" + std::to_string(i) + " detail" + std::to_string(i) + " body words";
        c.span_begin = i * 4;
        c.span_end = i * 4 + 4;
        chunks.push_back(std::move(c));
    }
    return chunks;
}

std::vector<AnnotationRecord> make_records(size_t n) {
    std::vector<AnnotationRecord> records;
    for (size_t i = 0; i < n; ++i) {
        AnnotationRecord r;
        r.id = "ann-" + std::to_string(1000000 + i);  // fixed width keeps id order stable
        r.question = "What is subject" + std::to_string(i % 8) + " about in detail?";
        r.answer = "answer number " + std::to_string(i);
        r.golden_context_chunk_ids = {"doc#RETRIEVAL#" + std::to_string(i % 8)};
        records.push_back(std::move(r));
    }
    return records;
}

size_t count_retrieved(const std::vector<TuningExample>& examples) {
    return size_t(std::count_if(examples.begin(), examples.end(), [](const TuningExample& e) {
        return e.context_source == ContextSource::Retrieved;
    }));
}

struct Fixture {
    LlmClient client{std::make_shared<MockBackend>(), {}};
    std::vector<Chunk> chunks = retrieval_chunks(8);
    ChunkStore store{chunks};
    VectorIndex index = build_index(chunks, client);
};

}  // namespace

TEST_CASE("deterministic mix hits the 50% retrieved target exactly") {
    Fixture f;
    RoundPlan plan;
    for (size_t n : {4u, 400u, 1000u, 4000u}) {
        InitialDatasetOptions opts;
        opts.deterministic_mix = true;
        auto examples = build_initial_dataset(make_records(n), plan, f.index, f.client, opts);
        REQUIRE(examples.size() == n);
        CHECK(count_retrieved(examples) == n / 2);
        for (const auto& e : examples) {
            CHECK(e.task == TaskKind::QA);
            CHECK(e.round == 0);
            CHECK(!e.input_context_chunk_ids.empty());
        }
    }
}

TEST_CASE("deterministic mix respects other fractions") {
    Fixture f;
    RoundPlan plan;
    plan.retrieved_context_fraction = 0.3;
    InitialDatasetOptions opts;
    opts.deterministic_mix = true;
    auto examples = build_initial_dataset(make_records(10), plan, f.index, f.client, opts);
    CHECK(count_retrieved(examples) == 3);
}

TEST_CASE("seeded mix stays within a binomial bound and reproduces") {
    Fixture f;
    RoundPlan plan;
    InitialDatasetOptions opts;
    opts.seed = 99;
    auto a = build_initial_dataset(make_records(10000), plan, f.index, f.client, opts);
    size_t got = count_retrieved(a);
    CHECK(got >= 4700);
    CHECK(got <= 5300);
    auto b = build_initial_dataset(make_records(10000), plan, f.index, f.client, opts);
    REQUIRE(b.size() == a.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].context_source == b[i].context_source);
}

TEST_CASE("retrieved examples carry top-k hits, golden ones the golden ids") {
    Fixture f;
    RoundPlan plan;
    InitialDatasetOptions opts;
    opts.deterministic_mix = true;
    opts.top_k = 3;
    auto records = make_records(20);
    auto examples = build_initial_dataset(records, plan, f.index, f.client, opts);
    for (const auto& e : examples) {
        if (e.context_source == ContextSource::Retrieved) {
            CHECK(e.input_context_chunk_ids.size() == 3);
        } else {
            CHECK(e.input_context_chunk_ids.size() == 1);
        }
    }
}

TEST_CASE("retrieval failure downgrades to golden with a skip entry") {
    Fixture f;
    // embedder whose configured dim disagrees with the backend: every embed throws
    LlmClient broken(std::make_shared<MockBackend>(64), RetryPolicy{0, 1}, 128);
    RoundPlan plan;
    plan.retrieved_context_fraction = 1.0;
    InitialDatasetOptions opts;
    opts.deterministic_mix = true;
    SkipReport skips;
    auto examples = build_initial_dataset(make_records(5), plan, f.index, broken, opts, &skips);
    REQUIRE(examples.size() == 5);
    for (const auto& e : examples) CHECK(e.context_source == ContextSource::Golden);
    CHECK(skips.items.size() == 5);
    CHECK(skips.items[0].reason.find("retrieval downgrade") != std::string::npos);
}

TEST_CASE("collect_predictions echoes the mock answer and keeps record order") {
    Fixture f;
    auto records = make_records(6);
    auto preds = collect_predictions(records, f.client, f.index, f.client, f.store,
                                     std::string(prompts::kDatasetPromptLoogle));
    std::sort(preds.begin(), preds.end(),
              [](const Prediction& a, const Prediction& b) { return a.record_id < b.record_id; });
    REQUIRE(preds.size() == 6);
    for (const auto& p : preds) {
        CHECK(!p.prediction.empty());
        CHECK(p.context_chunk_ids.size() == 8);
        // the scripted model echoes retrieval hit #1
        CHECK(p.prediction == f.store.at(p.context_chunk_ids[0]).text);
    }
}

TEST_CASE("collect_predictions is fatal above 20% failures") {
    Fixture f;
    EndpointConfig cfg;
    cfg.backend = "fixture";  // empty fixture: every completion fails
    cfg.retry.max_retries = 0;
    cfg.retry.backoff_ms = 1;
    LlmClient failing = make_client(cfg);
    CHECK_THROWS_WITH_AS(collect_predictions(make_records(5), failing, f.index, f.client, f.store,
                                             "Please answer this question."),
                         doctest::Contains(">20%"), std::runtime_error);
}

TEST_CASE("verify examples always carry the mandated prefix") {
    Fixture f;
    auto records = make_records(8);
    auto preds = collect_predictions(records, f.client, f.index, f.client, f.store,
                                     "Please answer this question.");
    SkipReport skips;
    auto verify = build_verify_examples(preds, records, f.store, f.client, 1, 7, &skips);
    REQUIRE(!verify.empty());
    for (const auto& ex : verify) {
        CHECK(ex.task == TaskKind::Verify);
        CHECK(ex.round == 1);
        CHECK(has_verify_prefix(ex.target_output));
        CHECK(!ex.student_response.empty());
    }
}

TEST_CASE("a non-conforming verification is regenerated once then dropped") {
    Fixture f;
    auto records = make_records(1);
    Prediction p;
    p.record_id = records[0].id;
    p.question = records[0].question;
    p.prediction = "some student answer";
    p.context_chunk_ids = {f.chunks[0].id};

    auto fixture = std::make_shared<FixtureBackend>("");
    std::string reference = f.store.at(records[0].golden_context_chunk_ids[0]).text;
    fixture->add(prompts::fill(prompts::kVerifyTeacher,
                               {{"reference", reference},
                                {"question", p.question},
                                {"golden_answer", records[0].answer},
                                {"student_response", p.prediction}}),
                 "Maybe right.");  // never gains the prefix, even on retry
    LlmClient stubborn(fixture, {});
    SkipReport skips;
    auto verify = build_verify_examples({p}, records, f.store, stubborn, 1, 7, &skips);
    CHECK(verify.empty());
    REQUIRE(skips.items.size() == 1);
    CHECK(skips.items[0].reason.find("mandated prefix") != std::string::npos);
}

TEST_CASE("has_verify_prefix accepts exactly the two teacher openings") {
    CHECK(has_verify_prefix("The student's response is correct because it matches."));
    CHECK(has_verify_prefix("The student response is wrong because it is partial."));
    CHECK_FALSE(has_verify_prefix("Correct."));
    CHECK_FALSE(has_verify_prefix(" The student's response is correct because"));
}

namespace {

std::vector<TuningExample> qa_pool(size_t n) {
    std::vector<TuningExample> out(n);
    for (size_t i = 0; i < n; ++i) {
        out[i].task = TaskKind::QA;
        out[i].provenance = "qa-" + std::to_string(i);
        out[i].input_context_chunk_ids = {"doc#RETRIEVAL#0"};
        out[i].question = "q";
        out[i].target_output = "a";
    }
    return out;
}

std::vector<TuningExample> verify_pool(size_t n) {
    auto out = qa_pool(n);
    for (size_t i = 0; i < n; ++i) {
        out[i].task = TaskKind::Verify;
        out[i].provenance = "v-" + std::to_string(i);
        out[i].student_response = "p";
        out[i].target_output = "The student's response is correct because it matches.";
    }
    return out;
}

}  // namespace

TEST_CASE("round 0 contains no verify examples") {
    RoundPlan plan;
    auto round = assemble_round(0, plan, qa_pool(40), verify_pool(40), 40, 5);
    CHECK(round.examples.size() == 40);
    for (const auto& e : round.examples) CHECK(e.task == TaskKind::QA);
    CHECK(round.manifest["n_verify"] == 0);
    CHECK(round.manifest["epochs"] == 1);
}

TEST_CASE("later rounds hit the 25/75 verify split exactly") {
    RoundPlan plan;
    auto round = assemble_round(1, plan, qa_pool(100), verify_pool(100), 100, 5);
    REQUIRE(round.examples.size() == 100);
    size_t verify = size_t(std::count_if(round.examples.begin(), round.examples.end(),
                                         [](const TuningExample& e) { return e.task == TaskKind::Verify; }));
    CHECK(verify == 25);
    CHECK(round.manifest["n_verify"] == 25);
    CHECK(round.manifest["n_qa"] == 75);
    CHECK(double(round.manifest["verify_fraction_actual"]) == doctest::Approx(0.25));
    CHECK(!round.manifest.contains("warning"));
}

TEST_CASE("a short verify pool degrades with a manifest warning") {
    RoundPlan plan;
    auto round = assemble_round(2, plan, qa_pool(200), verify_pool(5), 100, 5);
    CHECK(round.manifest["n_verify"] == 5);
    CHECK(round.manifest.contains("warning"));
    CHECK(double(round.manifest["verify_fraction_actual"]) < 0.25);
}

TEST_CASE("assembly order is seeded and reproducible") {
    RoundPlan plan;
    auto a = assemble_round(1, plan, qa_pool(60), verify_pool(30), 60, 5);
    auto b = assemble_round(1, plan, qa_pool(60), verify_pool(30), 60, 5);
    auto c = assemble_round(1, plan, qa_pool(60), verify_pool(30), 60, 6);
    REQUIRE(a.examples.size() == b.examples.size());
    bool same = true, diff = false;
    for (size_t i = 0; i < a.examples.size(); ++i) {
        same = same && a.examples[i].provenance == b.examples[i].provenance;
        diff = diff || a.examples[i].provenance != c.examples[i].provenance;
    }
    CHECK(same);
    CHECK(diff);  // a different seed shuffles differently
}

TEST_CASE("schedule splits records evenly and chains endpoints") {
    RoundPlan plan;
    plan.rounds = 3;
    auto records = make_records(10);
    auto rounds = schedule(plan, records, {"tuned-r0", "tuned-r1"});
    REQUIRE(rounds.size() == 3);
    CHECK(rounds[0].record_ids.size() == 3);
    CHECK(rounds[1].record_ids.size() == 3);
    CHECK(rounds[2].record_ids.size() == 4);
    // partition without overlap, in sorted id order
    std::vector<std::string> all;
    for (const auto& r : rounds)
        all.insert(all.end(), r.record_ids.begin(), r.record_ids.end());
    CHECK(all.size() == 10);
    CHECK(std::is_sorted(all.begin(), all.end()));
    CHECK(rounds[0].model_endpoint.empty());
    CHECK(rounds[1].model_endpoint == "tuned-r0");
    CHECK(rounds[2].model_endpoint == "tuned-r1");
    CHECK(rounds[1].dataset_file == "round-1.jsonl");
}

TEST_CASE("schedule flags the trainer handoff on every round") {
    RoundPlan plan;
    plan.rounds = 2;
    for (const auto& r : schedule(plan, make_records(4), {})) CHECK(r.trainer_handoff);
}

TEST_CASE("rendered QA examples wrap the downstream template") {
    Fixture f;
    TuningExample ex;
    ex.task = TaskKind::QA;
    ex.input_context_chunk_ids = {f.chunks[2].id, f.chunks[5].id};
    ex.question = "What is subject2 about in detail?";
    ex.target_output = "the answer";
    ex.provenance = "ann-x";
    auto j = render_example(ex, f.store, "kb1", "Please answer this question.");
    CHECK(j["task"] == "QA");
    std::string user = j["messages"][0]["content"];
    CHECK(user.find("<KB_kb1>") != std::string::npos);
    CHECK(user.find("[1] " + f.chunks[2].text) != std::string::npos);
    CHECK(user.find("[2] " + f.chunks[5].text) != std::string::npos);
    CHECK(user.find("Now the question is: " + ex.question) != std::string::npos);
    CHECK(j["messages"][1]["content"] == "the answer");
}

TEST_CASE("rendered verify examples never leak the golden answer") {
    Fixture f;
    auto records = make_records(4);
    auto preds = collect_predictions(records, f.client, f.index, f.client, f.store,
                                     "Please answer this question.");
    auto verify = build_verify_examples(preds, records, f.store, f.client, 1, 7);
    REQUIRE(!verify.empty());
    std::map<std::string, std::string> golden;
    for (const auto& r : records) golden[r.id] = r.answer;
    for (const auto& ex : verify) {
        auto j = render_example(ex, f.store, "kb1", "Please answer this question.");
        CHECK(j["task"] == "VERIFY");
        std::string user = j["messages"][0]["content"];
        std::string assistant = j["messages"][1]["content"];
        CHECK(user.find("Student Response: " + ex.student_response) != std::string::npos);
        const std::string& g = golden.at(ex.provenance);
        CHECK(user.find(g) == std::string::npos);
        CHECK(assistant.find(g) == std::string::npos);
        CHECK(has_verify_prefix(assistant));
    }
}
