#include "kbalign/config.hpp"

#include <fstream>
#include <set>

#include "kbalign/hashing.hpp"

using json = nlohmann::json;

namespace kbalign {

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

void check_fraction(double v, const std::string& field) {
    if (v < 0.0 || v > 1.0)
        throw ConfigError(field + ": must be in [0,1], got " + std::to_string(v));
}

EndpointConfig parse_endpoint(const json& j, const std::string& where) {
    check_keys(j, {"backend", "base_url", "model", "api_key_env", "fixture_file", "timeout_s",
                   "max_retries", "backoff_ms", "embed_dim", "max_parallel"},
               where);
    EndpointConfig e;
    e.backend = j.value("backend", "mock");
    e.base_url = j.value("base_url", "");
    e.model = j.value("model", "");
    e.api_key_env = j.value("api_key_env", "");
    e.fixture_file = j.value("fixture_file", "");
    e.timeout_s = j.value("timeout_s", 60);
    e.retry.max_retries = j.value("max_retries", 3);
    e.retry.backoff_ms = j.value("backoff_ms", 100);
    e.embed_dim = j.value("embed_dim", 256);
    e.max_parallel = j.value("max_parallel", 8);
    if (e.backend != "mock" && e.backend != "fixture" && e.backend != "http")
        throw ConfigError(where + ".backend: must be mock|fixture|http");
    if (e.backend == "http" && e.base_url.empty())
        throw ConfigError(where + ".base_url: required for http backend");
    return e;
}

json endpoint_json(const EndpointConfig& e) {
    return json{{"backend", e.backend},       {"base_url", e.base_url},
                {"model", e.model},           {"api_key_env", e.api_key_env},
                {"fixture_file", e.fixture_file}, {"timeout_s", e.timeout_s},
                {"max_retries", e.retry.max_retries}, {"backoff_ms", e.retry.backoff_ms},
                {"embed_dim", e.embed_dim},   {"max_parallel", e.max_parallel}};
}

}  // namespace

PipelineConfig parse_config(const json& j) {
    check_keys(j, {"seed", "kb_source", "output_root", "kb_id", "endpoints", "chunking",
                   "annotation", "rounds", "inference", "eval"},
               "config");
    PipelineConfig c;
    if (!j.contains("seed")) throw ConfigError("config.seed: required (no wall-clock defaults)");
    c.seed = j["seed"].get<uint64_t>();
    c.seed_set = true;
    if (!j.contains("kb_source")) throw ConfigError("config.kb_source: required");
    c.kb_source = j["kb_source"].get<std::string>();
    c.output_root = j.value("output_root", "runs");
    c.kb_id = j.value("kb_id", "0");

    if (j.contains("endpoints")) {
        const json& ep = j["endpoints"];
        check_keys(ep, {"annotator", "judge", "embedder", "rounds"}, "config.endpoints");
        if (ep.contains("annotator")) c.annotator = parse_endpoint(ep["annotator"], "endpoints.annotator");
        if (ep.contains("judge")) c.judge = parse_endpoint(ep["judge"], "endpoints.judge");
        if (ep.contains("embedder")) c.embedder = parse_endpoint(ep["embedder"], "endpoints.embedder");
        if (ep.contains("rounds")) {
            size_t i = 0;
            for (const auto& r : ep["rounds"])
                c.round_endpoints.push_back(
                    parse_endpoint(r, "endpoints.rounds[" + std::to_string(i++) + "]"));
        }
    }

    if (j.contains("chunking")) {
        const json& ch = j["chunking"];
        check_keys(ch, {"short_max", "segment_max", "retrieval_max", "overlap"}, "config.chunking");
        c.chunking.short_max = ch.value("short_max", size_t(1024));
        c.chunking.segment_max = ch.value("segment_max", size_t(256));
        c.chunking.retrieval_max = ch.value("retrieval_max", size_t(128));
        c.chunking.overlap = ch.value("overlap", 0.15);
        check_fraction(c.chunking.overlap, "chunking.overlap");
        if (c.chunking.overlap >= 1.0) throw ConfigError("chunking.overlap: must be < 1");
    }

    if (j.contains("annotation")) {
        const json& an = j["annotation"];
        check_keys(an, {"density", "styles", "long_mode", "filters", "grouping", "group_words"},
                   "config.annotation");
        c.annotation.density = an.value("density", 15.0);
        if (c.annotation.density <= 0) throw ConfigError("annotation.density: must be > 0");
        if (an.contains("styles")) c.annotation.styles = an["styles"].get<std::vector<std::string>>();
        c.annotation.long_mode = an.value("long_mode", false);
        if (an.contains("filters")) c.annotation.filters = an["filters"].get<std::vector<std::string>>();
        c.annotation.grouping = an.value("grouping", "SAME_DIRECTORY");
        if (c.annotation.grouping != "SAME_DIRECTORY" &&
            c.annotation.grouping != "CROSS_DIRECTORY_SIMILARITY")
            throw ConfigError("annotation.grouping: must be SAME_DIRECTORY|CROSS_DIRECTORY_SIMILARITY");
        c.annotation.group_words = an.value("group_words", size_t(1024));
    }

    if (j.contains("rounds")) {
        const json& r = j["rounds"];
        check_keys(r, {"count", "verify_fraction", "retrieved_fraction", "deterministic_mix"},
                   "config.rounds");
        c.rounds.count = r.value("count", 3);
        if (c.rounds.count < 1) throw ConfigError("rounds.count: must be >= 1");
        c.rounds.verify_fraction = r.value("verify_fraction", 0.25);
        c.rounds.retrieved_fraction = r.value("retrieved_fraction", 0.50);
        check_fraction(c.rounds.verify_fraction, "rounds.verify_fraction");
        check_fraction(c.rounds.retrieved_fraction, "rounds.retrieved_fraction");
        c.rounds.deterministic_mix = r.value("deterministic_mix", false);
    }

    if (j.contains("inference")) {
        const json& inf = j["inference"];
        check_keys(inf, {"top_k", "qe", "self_verify", "resample_temperature", "questions_file"},
                   "config.inference");
        c.inference.top_k = inf.value("top_k", size_t(8));
        if (c.inference.top_k < 1) throw ConfigError("inference.top_k: must be >= 1");
        c.inference.qe = inf.value("qe", true);
        c.inference.self_verify = inf.value("self_verify", false);
        c.inference.resample_temperature = inf.value("resample_temperature", 0.8);
        c.inference.questions_file = inf.value("questions_file", "");
    }

    if (j.contains("eval")) {
        const json& ev = j["eval"];
        check_keys(ev, {"metrics", "dataset_prompt", "references_file"}, "config.eval");
        if (ev.contains("metrics")) c.eval.metrics = ev["metrics"].get<std::vector<std::string>>();
        c.eval.dataset_prompt = ev.value("dataset_prompt", "loogle");
        c.eval.references_file = ev.value("references_file", "");
    }
    return c;
}

PipelineConfig load_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot read config file: " + file.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return parse_config(j);
}

json PipelineConfig::canonical() const {
    json rounds_ep = json::array();
    for (const auto& e : round_endpoints) rounds_ep.push_back(endpoint_json(e));
    return json{
        {"seed", seed},
        {"kb_source", kb_source},
        {"kb_id", kb_id},
        {"endpoints",
         {{"annotator", endpoint_json(annotator)},
          {"judge", endpoint_json(judge)},
          {"embedder", endpoint_json(embedder)},
          {"rounds", rounds_ep}}},
        {"chunking",
         {{"short_max", chunking.short_max},
          {"segment_max", chunking.segment_max},
          {"retrieval_max", chunking.retrieval_max},
          {"overlap", chunking.overlap}}},
        {"annotation",
         {{"density", annotation.density},
          {"styles", annotation.styles},
          {"long_mode", annotation.long_mode},
          {"filters", annotation.filters},
          {"grouping", annotation.grouping},
          {"group_words", annotation.group_words}}},
        {"rounds",
         {{"count", rounds.count},
          {"verify_fraction", rounds.verify_fraction},
          {"retrieved_fraction", rounds.retrieved_fraction},
          {"deterministic_mix", rounds.deterministic_mix}}},
        {"inference",
         {{"top_k", inference.top_k},
          {"qe", inference.qe},
          {"self_verify", inference.self_verify},
          {"resample_temperature", inference.resample_temperature},
          {"questions_file", inference.questions_file}}},
        {"eval",
         {{"metrics", eval.metrics},
          {"dataset_prompt", eval.dataset_prompt},
          {"references_file", eval.references_file}}},
    };
}

std::string PipelineConfig::hash() const { return content_hash(canonical().dump()); }

}  // namespace kbalign
