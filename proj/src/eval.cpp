#include "kbalign/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <stdexcept>

#include "kbalign/prompts.hpp"
#include "kbalign/simd/kernels.hpp"
#include "kbalign/text.hpp"

using json = nlohmann::json;

namespace kbalign {

double token_f1(const std::string& prediction, const std::string& reference) {
    auto p = normalized_tokens(prediction);
    auto r = normalized_tokens(reference);
    if (p.empty() && r.empty()) return 1.0;
    if (p.empty() || r.empty()) return 0.0;
    std::map<std::string, int> counts;
    for (const auto& t : r) counts[t]++;
    size_t overlap = 0;
    for (const auto& t : p) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    if (overlap == 0) return 0.0;
    double precision = double(overlap) / double(p.size());
    double recall = double(overlap) / double(r.size());
    return 2.0 * precision * recall / (precision + recall);
}

double match_score(const std::string& prediction,
                   const std::vector<std::vector<std::string>>& short_answer_sets) {
    if (short_answer_sets.empty())
        throw std::invalid_argument("match_score: need at least one short-answer set");
    std::string norm_pred = normalize_text(prediction);
    size_t hits = 0;
    for (const auto& aliases : short_answer_sets) {
        for (const auto& alias : aliases) {
            std::string na = normalize_text(alias);
            if (!na.empty() && norm_pred.find(na) != std::string::npos) {
                ++hits;
                break;
            }
        }
    }
    return double(hits) / double(short_answer_sets.size());
}

namespace {

std::map<std::string, int> ngram_counts(const std::vector<std::string>& tokens, size_t n) {
    std::map<std::string, int> counts;
    if (tokens.size() < n) return counts;
    for (size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key;
        for (size_t j = 0; j < n; ++j) {
            if (j) key += '\x1f';
            key += tokens[i + j];
        }
        counts[key]++;
    }
    return counts;
}

}  // namespace

double bleu(const std::string& prediction, const std::string& reference) {
    auto p = normalized_tokens(prediction);
    auto r = normalized_tokens(reference);
    if (p.empty() || r.empty()) return p.empty() && r.empty() ? 1.0 : 0.0;

    double log_sum = 0.0;
    for (size_t n = 1; n <= 4; ++n) {
        auto pc = ngram_counts(p, n);
        auto rc = ngram_counts(r, n);
        long matched = 0, total = 0;
        for (const auto& [gram, count] : pc) {
            total += count;
            auto it = rc.find(gram);
            if (it != rc.end()) matched += std::min(count, it->second);
        }
        double prec;
        if (n == 1) {
            if (total == 0 || matched == 0) return 0.0;
            prec = double(matched) / double(total);
        } else {
            prec = double(matched + 1) / double(total + 1);
        }
        log_sum += 0.25 * std::log(prec);
    }
    double bp = p.size() >= r.size() ? 1.0 : std::exp(1.0 - double(r.size()) / double(p.size()));
    return bp * std::exp(log_sum);
}

double rouge_l(const std::string& prediction, const std::string& reference) {
    auto p = normalized_tokens(prediction);
    auto r = normalized_tokens(reference);
    if (p.empty() || r.empty()) return p.empty() && r.empty() ? 1.0 : 0.0;
    // LCS length via DP over two rows
    std::vector<size_t> prev(r.size() + 1, 0), cur(r.size() + 1, 0);
    for (size_t i = 1; i <= p.size(); ++i) {
        for (size_t j = 1; j <= r.size(); ++j) {
            if (p[i - 1] == r[j - 1])
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    size_t lcs = prev[r.size()];
    if (lcs == 0) return 0.0;
    double precision = double(lcs) / double(p.size());
    double recall = double(lcs) / double(r.size());
    return 2.0 * precision * recall / (precision + recall);  // beta = 1
}

double bert_cosine(const std::string& prediction, const std::string& reference,
                   const LlmClient& embedder) {
    std::string p = prediction.empty() ? " " : prediction;
    std::string r = reference.empty() ? " " : reference;
    auto vecs = embedder.embed({p, r});
    float c = simd::cosine(vecs[0].values, vecs[1].values);
    return std::clamp(double(c), 0.0, 1.0);
}

std::optional<int> llm_judge(const std::string& question, const std::string& golden,
                             const std::string& prediction, const LlmClient& judge,
                             uint64_t seed) {
    GenerationRequest req;
    req.prompt = prompts::fill(prompts::kJudge, {{"question", question},
                                                 {"ground_truth", golden},
                                                 {"predict", prediction}});
    req.temperature = 0.0;
    for (int attempt = 0; attempt < 2; ++attempt) {
        req.seed = int64_t(seed + uint64_t(attempt));
        std::string out;
        try {
            out = judge.generate(req);
        } catch (const std::exception&) {
            continue;
        }
        std::string lowered = to_lower(out);
        if (lowered.rfind("true", 0) == 0) return 1;
        if (lowered.rfind("false", 0) == 0) return 0;
    }
    return std::nullopt;  // UNJUDGED
}

std::set<char> jecqa_parse_options(const std::string& text) {
    auto tokens = normalized_tokens(text);
    std::set<char> cluster, last;
    auto is_letter = [](const std::string& t) {
        return t.size() == 1 && t[0] >= 'a' && t[0] <= 'd';
    };
    auto is_connector = [](const std::string& t) { return t == "and" || t == "or"; };
    for (const auto& t : tokens) {
        if (is_letter(t)) {
            cluster.insert(char(std::toupper(t[0])));
        } else if (!is_connector(t)) {
            if (!cluster.empty()) last = cluster;
            cluster.clear();
        }
    }
    if (!cluster.empty()) last = cluster;
    return last;
}

int jecqa_score(const std::set<char>& predicted, const std::set<char>& golden) {
    return predicted == golden && !golden.empty() ? 1 : 0;
}

EvalResult evaluate(const std::vector<EvalItem>& items, const EvalConfig& cfg) {
    if (items.empty()) throw std::runtime_error("empty evaluation set");
    EvalResult result;
    result.n = items.size();
    std::map<std::string, double> sums;
    std::map<std::string, size_t> counted;

    for (const auto& item : items) {
        EvalResult::ItemScores scores;
        scores.id = item.id;
        for (const auto& metric : cfg.metrics) {
            std::optional<double> score;
            if (metric == "f1") {
                score = token_f1(item.prediction, item.golden);
            } else if (metric == "match") {
                if (!item.short_answer_sets.empty())
                    score = match_score(item.prediction, item.short_answer_sets);
                else
                    score = item.golden.empty()
                                ? 0.0
                                : match_score(item.prediction, {{item.golden}});
            } else if (metric == "bleu") {
                score = bleu(item.prediction, item.golden);
            } else if (metric == "rouge") {
                score = rouge_l(item.prediction, item.golden);
            } else if (metric == "bert") {
                if (!cfg.embedder) throw ConfigError("bert metric requires an embedder endpoint");
                try {
                    score = bert_cosine(item.prediction, item.golden, *cfg.embedder);
                } catch (const TransportError&) {
                    result.excluded["bert"]++;
                }
            } else if (metric == "llm") {
                if (!cfg.judge) throw ConfigError("llm metric requires a judge endpoint");
                auto verdict = llm_judge(item.question, item.golden, item.prediction, *cfg.judge,
                                         cfg.seed);
                if (verdict)
                    score = double(*verdict);
                else
                    result.excluded["llm"]++;
            } else if (metric == "jecqa") {
                score = double(jecqa_score(jecqa_parse_options(item.prediction), item.golden_options));
            } else {
                throw ConfigError("unknown metric: " + metric);
            }
            if (score) {
                scores.scores[metric] = *score;
                sums[metric] += *score;
                counted[metric]++;
            }
        }
        result.per_item.push_back(std::move(scores));
    }
    for (const auto& [metric, sum] : sums)
        result.aggregate[metric] = counted[metric] ? sum / double(counted[metric]) * 100.0 : 0.0;

    // single/multi/total split for option scoring
    if (std::find(cfg.metrics.begin(), cfg.metrics.end(), "jecqa") != cfg.metrics.end()) {
        double s_sum = 0, m_sum = 0;
        size_t s_n = 0, m_n = 0;
        for (size_t i = 0; i < items.size(); ++i) {
            auto it = result.per_item[i].scores.find("jecqa");
            if (it == result.per_item[i].scores.end()) continue;
            if (items[i].golden_options.size() <= 1) {
                s_sum += it->second;
                ++s_n;
            } else {
                m_sum += it->second;
                ++m_n;
            }
        }
        if (s_n) result.aggregate["jecqa_single"] = s_sum / double(s_n) * 100.0;
        if (m_n) result.aggregate["jecqa_multi"] = m_sum / double(m_n) * 100.0;
    }
    return result;
}

json make_report(const EvalResult& result, const std::string& dataset_label,
                 const json& config_echo) {
    json metrics = json::object();
    for (const auto& [name, value] : result.aggregate) metrics[name] = value;
    json excluded = json::object();
    for (const auto& [name, count] : result.excluded) excluded[name] = count;
    json per_item = json::array();
    for (const auto& item : result.per_item) {
        json scores = json::object();
        for (const auto& [name, value] : item.scores) scores[name] = value;
        per_item.push_back({{"id", item.id}, {"scores", scores}});
    }
    return json{{"dataset", dataset_label},
                {"n", result.n},
                {"metrics", metrics},
                {"excluded_counts", excluded},
                {"config_echo", config_echo},
                {"notes", "BLEU: sentence BLEU-4, add-one smoothing on n>1 precisions; "
                          "ROUGE: ROUGE-L F-measure"},
                {"per_item", per_item}};
}

void write_report(const std::filesystem::path& file, const json& report) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write: " + file.string());
    out << report.dump(2) << "\n";
}

void print_report(const json& report) {
    std::cout << "dataset: " << report["dataset"].get<std::string>()
              << "  n=" << report["n"].get<size_t>() << "\n";
    for (const auto& [name, value] : report["metrics"].items())
        std::cout << "  " << name << ": " << value.get<double>() << "\n";
    for (const auto& [name, count] : report["excluded_counts"].items())
        std::cout << "  excluded " << name << ": " << count.get<size_t>() << "\n";
}

std::vector<EvalItem> join_predictions_references(const std::filesystem::path& predictions_jsonl,
                                                  const std::filesystem::path& references_jsonl) {
    std::map<std::string, json> refs;
    {
        std::ifstream in(references_jsonl);
        if (!in) throw std::runtime_error("cannot read: " + references_jsonl.string());
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json j = json::parse(line);
            refs[j.at("id").is_string() ? j["id"].get<std::string>() : j["id"].dump()] = j;
        }
    }
    std::vector<EvalItem> items;
    std::ifstream in(predictions_jsonl);
    if (!in) throw std::runtime_error("cannot read: " + predictions_jsonl.string());
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        EvalItem item;
        item.id = j.at("id").is_string() ? j["id"].get<std::string>() : j["id"].dump();
        item.question = j.value("question", "");
        item.prediction = j.contains("final_prediction") ? j["final_prediction"].get<std::string>()
                                                         : j.value("prediction", "");
        auto it = refs.find(item.id);
        if (it == refs.end()) continue;  // unmatched predictions are dropped
        const json& ref = it->second;
        item.golden = ref.value("golden", "");
        if (ref.contains("short_answers"))
            item.short_answer_sets = ref["short_answers"].get<std::vector<std::vector<std::string>>>();
        if (ref.contains("options"))
            for (const auto& o : ref["options"]) {
                std::string s = o.get<std::string>();
                if (!s.empty()) item.golden_options.insert(char(std::toupper(s[0])));
            }
        items.push_back(std::move(item));
    }
    return items;
}

}  // namespace kbalign
