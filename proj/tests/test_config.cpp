#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "kbalign/config.hpp"

using namespace kbalign;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

json minimal() { return json{{"seed", 7}, {"kb_source", "data/tiny_kb"}}; }

}  // namespace

TEST_CASE("minimal config parses with documented defaults") {
    auto c = parse_config(minimal());
    CHECK(c.seed == 7);
    CHECK(c.seed_set);
    CHECK(c.kb_source == "data/tiny_kb");
    CHECK(c.output_root == "runs");
    CHECK(c.chunking.short_max == 1024);
    CHECK(c.chunking.segment_max == 256);
    CHECK(c.chunking.retrieval_max == 128);
    CHECK(c.chunking.overlap == doctest::Approx(0.15));
    CHECK(c.annotation.density == doctest::Approx(15.0));
    CHECK(c.rounds.count == 3);
    CHECK(c.rounds.verify_fraction == doctest::Approx(0.25));
    CHECK(c.rounds.retrieved_fraction == doctest::Approx(0.50));
    CHECK(c.inference.top_k == 8);
    CHECK(c.inference.qe);
    CHECK(c.eval.metrics == std::vector<std::string>{"f1", "bleu", "rouge"});
    CHECK(c.annotator.backend == "mock");
}

TEST_CASE("seed is mandatory") {
    json j = minimal();
    j.erase("seed");
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("config.seed"), ConfigError);
}

TEST_CASE("kb_source is mandatory") {
    json j = minimal();
    j.erase("kb_source");
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("kb_source"), ConfigError);
}

TEST_CASE("unknown keys are rejected with field-level messages") {
    json j = minimal();
    j["surprise"] = 1;
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("unknown key 'surprise'"), ConfigError);

    j = minimal();
    j["rounds"] = {{"cout", 2}};  // typo
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("config.rounds"), ConfigError);

    j = minimal();
    j["endpoints"] = {{"annotator", {{"backed", "mock"}}}};
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("endpoints.annotator"), ConfigError);
}

TEST_CASE("fraction and range invariants are enforced") {
    json j = minimal();
    j["rounds"] = {{"verify_fraction", 1.5}};
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("verify_fraction"), ConfigError);

    j = minimal();
    j["rounds"] = {{"retrieved_fraction", -0.1}};
    CHECK_THROWS_AS(parse_config(j), ConfigError);

    j = minimal();
    j["chunking"] = {{"overlap", 1.0}};
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("overlap"), ConfigError);

    j = minimal();
    j["annotation"] = {{"density", 0.0}};
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("density"), ConfigError);

    j = minimal();
    j["rounds"] = {{"count", 0}};
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("rounds.count"), ConfigError);

    j = minimal();
    j["inference"] = {{"top_k", 0}};
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("top_k"), ConfigError);

    j = minimal();
    j["annotation"] = {{"grouping", "RANDOM"}};
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("grouping"), ConfigError);
}

TEST_CASE("endpoint validation") {
    json j = minimal();
    j["endpoints"] = {{"annotator", {{"backend", "carrier-pigeon"}}}};
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("mock|fixture|http"), ConfigError);

    j = minimal();
    j["endpoints"] = {{"annotator", {{"backend", "http"}}}};
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("base_url"), ConfigError);

    j = minimal();
    j["endpoints"] = {
        {"rounds", json::array({{{"backend", "mock"}, {"model", "tuned-r0"}}})},
    };
    auto c = parse_config(j);
    REQUIRE(c.round_endpoints.size() == 1);
    CHECK(c.round_endpoints[0].model == "tuned-r0");
}

TEST_CASE("config hash is stable and excludes the output root") {
    auto a = parse_config(minimal());
    auto b = parse_config(minimal());
    CHECK(a.hash() == b.hash());

    json j = minimal();
    j["output_root"] = "elsewhere";
    auto c = parse_config(j);
    CHECK(c.hash() == a.hash());  // output location never changes the run identity

    j = minimal();
    j["seed"] = 8;
    CHECK(parse_config(j).hash() != a.hash());

    j = minimal();
    j["chunking"] = {{"retrieval_max", 64}};
    CHECK(parse_config(j).hash() != a.hash());
}

TEST_CASE("load_config reads a file and reports parse errors") {
    fs::path good = fs::temp_directory_path() / "kbalign-config-good.json";
    std::ofstream(good) << minimal().dump();
    auto c = load_config(good);
    fs::remove(good);
    CHECK(c.seed == 7);

    fs::path bad = fs::temp_directory_path() / "kbalign-config-bad.json";
    std::ofstream(bad) << "{ not json";
    CHECK_THROWS_WITH_AS(load_config(bad), doctest::Contains("parse error"), ConfigError);
    fs::remove(bad);

    CHECK_THROWS_WITH_AS(load_config("/nonexistent/config.json"),
                         doctest::Contains("cannot read"), ConfigError);
}
