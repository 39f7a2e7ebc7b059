#include "kbalign/llm_client.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "kbalign/hashing.hpp"
#include "kbalign/prompts.hpp"
#include "kbalign/text.hpp"

using json = nlohmann::json;

namespace kbalign {

// ---------------------------------------------------------------------------
// MockBackend

EmbeddingVector MockBackend::hash_embedding(const std::string& text, size_t dim) {
    EmbeddingVector v;
    v.values.assign(dim, 0.0f);
    for (const auto& tok : normalized_tokens(text)) {
        uint64_t h = fnv1a64(tok);
        v.values[h % dim] += 1.0f;
    }
    double norm = 0.0;
    for (float x : v.values) norm += double(x) * x;
    if (norm == 0.0) {
        v.values[0] = 1.0f;  // canonical unit vector for empty text
        return v;
    }
    float inv = float(1.0 / std::sqrt(norm));
    for (float& x : v.values) x *= inv;
    return v;
}

namespace {

std::string slice_between(const std::string& s, const std::string& after, const std::string& before) {
    size_t a = s.find(after);
    if (a == std::string::npos) return "";
    a += after.size();
    size_t b = before.empty() ? std::string::npos : s.find(before, a);
    if (b == std::string::npos) return s.substr(a);
    return s.substr(a, b - a);
}

std::string strip(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && is_space_byte(s[a])) ++a;
    while (b > a && is_space_byte(s[b - 1])) --b;
    return s.substr(a, b - a);
}

// words worth matching on: alphanumeric, length >= 4, not template vocabulary
bool content_word(const std::string& w) {
    static const std::set<std::string> stop = {
        "what", "does", "this", "that", "material", "source", "about", "related",
        "follow", "follows", "words", "phrase", "question", "answer", "regarding",
        "notes", "which", "where", "when", "there", "their", "with", "from"};
    return w.size() >= 4 && !stop.count(w);
}

std::vector<std::string> content_words(const std::string& text) {
    std::vector<std::string> out;
    for (const auto& w : normalized_tokens(text))
        if (content_word(w)) out.push_back(w);
    return out;
}

std::string mock_short_annotation(const std::string& prompt) {
    std::string content = strip(slice_between(prompt, "Content: ", "\nResponse:"));
    auto words = tokenize_words(content);
    std::ostringstream out;
    const size_t need = 7;  // 3-word phrase + 4-word answer
    if (words.size() < need) return "";
    size_t usable = words.size() - need;
    for (int q = 0; q < 5; ++q) {
        size_t pos = usable == 0 ? 0 : (usable * q) / 5;
        out << "What words follow the phrase \"" << words[pos] << " " << words[pos + 1] << " "
            << words[pos + 2] << "\" in the source material?\n";
        out << words[pos + 3] << " " << words[pos + 4] << " " << words[pos + 5] << " "
            << words[pos + 6] << "\n";
    }
    return out.str();
}

std::string mock_long_questions(const std::string& prompt) {
    std::string doc = strip(slice_between(prompt, "document: ", "\noutput:"));
    auto cw = content_words(doc);
    if (cw.size() < 4) return "What is the overall theme of the collected material?\n";
    std::ostringstream out;
    for (int q = 0; q < 3; ++q) {
        // pick two words from the head and two from the tail so that the
        // question spans multiple segments of the group
        size_t a = (cw.size() / 6) * q % std::max<size_t>(1, cw.size() / 2);
        size_t b = cw.size() / 2 + (cw.size() / 6) * q % std::max<size_t>(1, cw.size() - cw.size() / 2);
        b = std::min(b, cw.size() - 2);
        out << "How are \"" << cw[a] << " " << cw[a + 1] << "\" connected with \"" << cw[b] << " "
            << cw[b + 1] << "\" in the broader subject?\n";
    }
    return out.str();
}

std::string mock_info_extract(const std::string& prompt) {
    std::string doc = strip(slice_between(prompt, "document: ", "\nquestion:"));
    std::string question = strip(slice_between(prompt, "question: ", "\noutput:"));
    std::set<std::string> doc_words;
    for (const auto& w : content_words(doc)) doc_words.insert(w);
    size_t hits = 0;
    for (const auto& w : content_words(question))
        if (doc_words.count(w)) ++hits;
    if (hits < 2) return "none";
    return strip(truncate_words(doc, 15)) + ".";
}

std::string mock_refine(const std::string& prompt) {
    std::string answer = strip(slice_between(prompt, "answer: ", "\noutput:"));
    // collapse whitespace runs
    std::string out;
    bool space = false;
    for (char c : answer) {
        if (is_space_byte(c)) {
            space = true;
        } else {
            if (space && !out.empty()) out.push_back(' ');
            space = false;
            out.push_back(c);
        }
    }
    return out;
}

double token_overlap(const std::string& a, const std::string& b) {
    auto ta = normalized_tokens(a);
    auto tb = normalized_tokens(b);
    if (ta.empty() || tb.empty()) return ta.empty() && tb.empty() ? 1.0 : 0.0;
    std::set<std::string> sb(tb.begin(), tb.end());
    size_t hit = 0;
    for (const auto& w : std::set<std::string>(ta.begin(), ta.end()))
        if (sb.count(w)) ++hit;
    return double(hit) / double(sb.size());
}

std::string mock_teacher_verify(const std::string& prompt) {
    std::string golden = strip(slice_between(prompt, "Golden Answer: ", "\nStudent Response:"));
    std::string student = strip(slice_between(prompt, "Student Response: ", "\nPlease generate"));
    std::string ng = normalize_text(golden);
    std::string ns = normalize_text(student);
    bool ok = !ng.empty() && (ns.find(ng) != std::string::npos || token_overlap(student, golden) >= 0.6);
    if (ok)
        return std::string(prompts::kVerifyCorrectPrefix) + " it fully aligns with the golden answer.";
    return std::string(prompts::kVerifyWrongPrefix) + " it provides only part of the information.";
}

std::string mock_downstream_qa(const std::string& prompt) {
    std::string refs = slice_between(prompt, "References:", "\nNow the question is:");
    // echo reference [1]
    std::string first = slice_between(refs, "[1] ", "\n[2] ");
    first = strip(first);
    if (first.empty()) return "I cannot find relevant information in the references.";
    return first;
}

std::string mock_inference_verify(const std::string& prompt) {
    std::string refs = slice_between(prompt, "References:", "\nQuestion:");
    std::string student = strip(slice_between(prompt, "Student Response: ", "\nPlease generate"));
    std::set<std::string> ref_words;
    for (const auto& w : content_words(refs)) ref_words.insert(w);
    size_t hits = 0, total = 0;
    for (const auto& w : content_words(student)) {
        ++total;
        if (ref_words.count(w)) ++hits;
    }
    bool ok = total > 0 && hits * 2 >= total;
    if (ok) return std::string(prompts::kVerifyCorrectPrefix) + " it is supported by the references.";
    return std::string(prompts::kVerifyWrongPrefix) + " it provides unrelated information.";
}

std::string mock_judge(const std::string& prompt) {
    std::string gt = strip(slice_between(prompt, "groundtruth = ", "\npredict_answer ="));
    std::string pred = strip(slice_between(prompt, "predict_answer = ", ""));
    std::string ng = normalize_text(gt);
    std::string np = normalize_text(pred);
    bool same = !ng.empty() && (np.find(ng) != std::string::npos || ng.find(np) != std::string::npos ||
                                token_overlap(pred, gt) >= 0.6);
    return same ? "True" : "False";
}

}  // namespace

std::string MockBackend::complete(const GenerationRequest& req) {
    const std::string& p = req.prompt;
    if (p.empty()) throw ConfigError("empty prompt");
    if (p.rfind("You are a master of extracting questions", 0) == 0) return mock_short_annotation(p);
    if (p.rfind("You will receive a document. Please generate 3", 0) == 0)
        return mock_long_questions(p);
    if (p.rfind("You will receive a document and a question.", 0) == 0) return mock_info_extract(p);
    if (p.rfind("You will receive a concatenated answer", 0) == 0) return mock_refine(p);
    if (p.rfind("You are a teacher evaluating student responses.", 0) == 0)
        return mock_teacher_verify(p);
    if (p.rfind("You are an expert who has read a lot of knowledge base.", 0) == 0)
        return mock_downstream_qa(p);
    if (p.rfind("You are verifying a student's answer", 0) == 0) return mock_inference_verify(p);
    if (p.rfind("Given one question, there is a groundtruth", 0) == 0) return mock_judge(p);
    uint64_t h = fnv1a64(p, 0xcbf29ce484222325ull ^ uint64_t(req.seed.value_or(0)));
    return "mock:" + hex64(h);
}

std::vector<EmbeddingVector> MockBackend::embed(const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(hash_embedding(t, embed_dim_));
    return out;
}

// ---------------------------------------------------------------------------
// FixtureBackend

FixtureBackend::FixtureBackend(const std::string& fixture_file, size_t embed_dim)
    : embed_dim_(embed_dim) {
    if (fixture_file.empty()) return;
    std::ifstream in(fixture_file);
    if (!in) throw ConfigError("cannot read fixture file: " + fixture_file);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        std::string hash = j.contains("prompt_hash")
                               ? j["prompt_hash"].get<std::string>()
                               : content_hash(j.at("prompt").get<std::string>());
        entries_.emplace_back(hash, j.at("completion").get<std::string>());
    }
}

void FixtureBackend::add(const std::string& prompt, const std::string& completion) {
    entries_.emplace_back(content_hash(prompt), completion);
}

std::string FixtureBackend::complete(const GenerationRequest& req) {
    std::string h = content_hash(req.prompt);
    for (const auto& [hash, completion] : entries_)
        if (hash == h) return completion;
    throw TransportError("fixture has no completion for prompt hash " + h);
}

std::vector<EmbeddingVector> FixtureBackend::embed(const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(MockBackend::hash_embedding(t, embed_dim_));
    return out;
}

// ---------------------------------------------------------------------------
// LlmClient

LlmClient::LlmClient(std::shared_ptr<Backend> backend, RetryPolicy retry, size_t expected_embed_dim)
    : backend_(std::move(backend)), retry_(retry), expected_embed_dim_(expected_embed_dim) {}

std::string LlmClient::generate(const GenerationRequest& req) const {
    if (req.prompt.empty()) throw ConfigError("GenerationRequest.prompt must be non-empty");
    int backoff = retry_.backoff_ms;
    std::string last_error;
    for (int attempt = 0; attempt <= retry_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
            backoff *= 2;
        }
        try {
            std::string out = backend_->complete(req);
            if (out.empty()) throw EmptyOutputError("endpoint returned empty completion");
            return out;
        } catch (const TransportError& e) {
            last_error = e.what();
        }
    }
    throw TransportError("generation failed after " + std::to_string(retry_.max_retries + 1) +
                         " attempts: " + last_error);
}

std::vector<EmbeddingVector> LlmClient::embed(const std::vector<std::string>& texts) const {
    for (const auto& t : texts)
        if (t.empty()) throw ConfigError("embed: texts must be non-empty");
    int backoff = retry_.backoff_ms;
    std::string last_error;
    for (int attempt = 0; attempt <= retry_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
            backoff *= 2;
        }
        try {
            auto out = backend_->embed(texts);
            if (out.size() != texts.size())
                throw TransportError("embedding arity mismatch");
            for (const auto& v : out) {
                if (expected_embed_dim_ != 0 && v.dim() != expected_embed_dim_)
                    throw ConfigError("embedding dim " + std::to_string(v.dim()) +
                                      " does not match configured dim " +
                                      std::to_string(expected_embed_dim_));
                for (float x : v.values)
                    if (!std::isfinite(x)) throw TransportError("non-finite embedding entry");
            }
            return out;
        } catch (const TransportError& e) {
            last_error = e.what();
        }
    }
    throw TransportError("embedding failed after " + std::to_string(retry_.max_retries + 1) +
                         " attempts: " + last_error);
}

LlmClient make_client(const EndpointConfig& cfg) {
    std::shared_ptr<Backend> backend;
    if (cfg.backend == "mock") {
        backend = std::make_shared<MockBackend>(cfg.embed_dim);
    } else if (cfg.backend == "fixture") {
        backend = std::make_shared<FixtureBackend>(cfg.fixture_file, cfg.embed_dim);
    } else if (cfg.backend == "http") {
        const char* key = cfg.api_key_env.empty() ? nullptr : std::getenv(cfg.api_key_env.c_str());
        backend = std::make_shared<HttpBackend>(cfg.base_url, cfg.model, key ? key : "",
                                                cfg.timeout_s);
    } else {
        throw ConfigError("unknown backend kind: " + cfg.backend);
    }
    return LlmClient(std::move(backend), cfg.retry, cfg.embed_dim);
}

}  // namespace kbalign
