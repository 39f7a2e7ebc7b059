#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace kbalign {

struct GenerationRequest {
    std::string prompt;
    double temperature = 0.2;
    int max_output_tokens = 1024;
    std::optional<int64_t> seed;
};

struct EmbeddingVector {
    std::vector<float> values;
    size_t dim() const { return values.size(); }
};

struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EmptyOutputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Transport layer. Implementations may throw TransportError.
class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string complete(const GenerationRequest& req) = 0;
    virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;
};

// Deterministic offline backend: completions are a pure function of
// (prompt, seed). Recognizes the pipeline's prompt templates and
// synthesizes plausible completions from the prompt contents; embeddings
// are L2-normalized bag-of-words feature hashes.
class MockBackend : public Backend {
public:
    explicit MockBackend(size_t embed_dim = 256) : embed_dim_(embed_dim) {}
    std::string complete(const GenerationRequest& req) override;
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;

    static EmbeddingVector hash_embedding(const std::string& text, size_t dim);

private:
    size_t embed_dim_;
};

// Canned completions keyed by prompt hash, loaded from a JSONL fixture.
// Embeddings fall back to the mock hashing embedder.
class FixtureBackend : public Backend {
public:
    explicit FixtureBackend(const std::string& fixture_file, size_t embed_dim = 256);
    void add(const std::string& prompt, const std::string& completion);
    std::string complete(const GenerationRequest& req) override;
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;

private:
    std::vector<std::pair<std::string, std::string>> entries_;  // hash -> completion
    size_t embed_dim_;
};

// OpenAI-compatible chat-completions and embeddings endpoints.
class HttpBackend : public Backend {
public:
    HttpBackend(std::string base_url, std::string model, std::string api_key, int timeout_s);
    std::string complete(const GenerationRequest& req) override;
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;

private:
    std::string base_url_;
    std::string model_;
    std::string api_key_;
    int timeout_s_;
};

struct RetryPolicy {
    int max_retries = 3;
    int backoff_ms = 100;  // doubled per attempt
};

struct EndpointConfig {
    std::string backend = "mock";  // mock | fixture | http
    std::string base_url;
    std::string model;
    std::string api_key_env;
    std::string fixture_file;
    int timeout_s = 60;
    RetryPolicy retry;
    size_t embed_dim = 256;
    int max_parallel = 8;
};

// Retry wrapper around a backend; safe for concurrent use.
class LlmClient {
public:
    LlmClient(std::shared_ptr<Backend> backend, RetryPolicy retry, size_t expected_embed_dim = 0);

    std::string generate(const GenerationRequest& req) const;
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) const;

private:
    std::shared_ptr<Backend> backend_;
    RetryPolicy retry_;
    size_t expected_embed_dim_;  // 0 = take from first response
};

LlmClient make_client(const EndpointConfig& cfg);

}  // namespace kbalign
