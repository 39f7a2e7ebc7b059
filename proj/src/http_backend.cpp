#include <nlohmann/json.hpp>

#define CPPHTTPLIB_OPENSSL_SUPPORT_DISABLED
#include <httplib.h>

#include "kbalign/llm_client.hpp"

using json = nlohmann::json;

namespace kbalign {

HttpBackend::HttpBackend(std::string base_url, std::string model, std::string api_key,
                         int timeout_s)
    : base_url_(std::move(base_url)), model_(std::move(model)), api_key_(std::move(api_key)),
      timeout_s_(timeout_s) {
    if (base_url_.empty()) throw ConfigError("http backend requires base_url");
}

namespace {

httplib::Headers auth_headers(const std::string& api_key) {
    httplib::Headers h = {{"Content-Type", "application/json"}};
    if (!api_key.empty()) h.emplace("Authorization", "Bearer " + api_key);
    return h;
}

json post_json(const std::string& base_url, const std::string& path, const json& body,
               const std::string& api_key, int timeout_s) {
    httplib::Client cli(base_url);
    cli.set_connection_timeout(timeout_s, 0);
    cli.set_read_timeout(timeout_s, 0);
    auto res = cli.Post(path, auth_headers(api_key), body.dump(), "application/json");
    if (!res) throw TransportError("no response from " + base_url + path);
    if (res->status < 200 || res->status >= 300)
        throw TransportError("HTTP " + std::to_string(res->status) + " from " + path + ": " +
                             res->body.substr(0, 200));
    try {
        return json::parse(res->body);
    } catch (const json::exception& e) {
        throw TransportError(std::string("bad JSON from endpoint: ") + e.what());
    }
}

}  // namespace

std::string HttpBackend::complete(const GenerationRequest& req) {
    json body = {
        {"model", model_},
        {"messages", json::array({{{"role", "user"}, {"content", req.prompt}}})},
        {"temperature", req.temperature},
        {"max_tokens", req.max_output_tokens},
    };
    if (req.seed) body["seed"] = *req.seed;
    json res = post_json(base_url_, "/v1/chat/completions", body, api_key_, timeout_s_);
    try {
        return res.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw TransportError(std::string("unexpected chat-completions schema: ") + e.what());
    }
}

std::vector<EmbeddingVector> HttpBackend::embed(const std::vector<std::string>& texts) {
    json body = {{"model", model_}, {"input", texts}};
    json res = post_json(base_url_, "/v1/embeddings", body, api_key_, timeout_s_);
    std::vector<EmbeddingVector> out(texts.size());
    try {
        for (const auto& item : res.at("data")) {
            size_t idx = item.at("index").get<size_t>();
            if (idx >= out.size()) throw TransportError("embedding index out of range");
            auto vals = item.at("embedding").get<std::vector<float>>();
            out[idx].values = std::move(vals);
        }
    } catch (const json::exception& e) {
        throw TransportError(std::string("unexpected embeddings schema: ") + e.what());
    }
    return out;
}

}  // namespace kbalign
