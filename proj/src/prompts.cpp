#include "kbalign/prompts.hpp"

namespace kbalign::prompts {

std::string fill(std::string_view tmpl, const std::map<std::string, std::string>& slots) {
    std::string out;
    out.reserve(tmpl.size());
    size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            size_t close = tmpl.find('}', i + 1);
            if (close != std::string_view::npos) {
                std::string key(tmpl.substr(i + 1, close - i - 1));
                auto it = slots.find(key);
                if (it != slots.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i]);
        ++i;
    }
    return out;
}

std::string dataset_prompt_for(const std::string& label) {
    if (label == "loogle") return std::string(kDatasetPromptLoogle);
    if (label == "asqa") return std::string(kDatasetPromptAsqa);
    if (label == "jecqa") return std::string(kDatasetPromptJecqa);
    return std::string(kDatasetPromptLoogle);
}

}  // namespace kbalign::prompts
