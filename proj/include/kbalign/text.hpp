#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace kbalign {

// Byte span of one whitespace-delimited word inside the source string.
struct WordSpan {
    size_t begin = 0;
    size_t end = 0;  // exclusive
};

inline bool is_space_byte(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::vector<WordSpan> word_spans(std::string_view text) {
    std::vector<WordSpan> spans;
    size_t i = 0;
    const size_t n = text.size();
    while (i < n) {
        while (i < n && is_space_byte(text[i])) ++i;
        if (i >= n) break;
        size_t start = i;
        while (i < n && !is_space_byte(text[i])) ++i;
        spans.push_back({start, i});
    }
    return spans;
}

inline size_t word_count(std::string_view text) { return word_spans(text).size(); }

inline std::vector<std::string> tokenize_words(std::string_view text) {
    std::vector<std::string> words;
    for (const auto& s : word_spans(text)) words.emplace_back(text.substr(s.begin, s.end - s.begin));
    return words;
}

// True when the word ends a sentence: its last character (ASCII) or last
// UTF-8 code point (CJK fullwidth) is a terminator. Trailing quotes and
// closing brackets after the terminator are tolerated.
inline bool ends_sentence(std::string_view word) {
    static const std::string_view cjk[] = {"\xe3\x80\x82", "\xef\xbc\x81", "\xef\xbc\x9f"};  // 。！？
    size_t end = word.size();
    while (end > 0) {
        char c = word[end - 1];
        if (c == '"' || c == '\'' || c == ')' || c == ']' || c == '}') {
            --end;
            continue;
        }
        break;
    }
    if (end == 0) return false;
    char c = word[end - 1];
    if (c == '.' || c == '!' || c == '?') return true;
    if (end >= 3) {
        std::string_view tail = word.substr(end - 3, 3);
        for (auto t : cjk)
            if (tail == t) return true;
    }
    return false;
}

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// Lowercase, strip punctuation, collapse whitespace. Shared normalization
// for the text metrics and substring matching.
inline std::string normalize_text(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (unsigned char c : s) {
        if (std::isalnum(c)) {
            if (pending_space && !out.empty()) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(std::tolower(c)));
        } else if (std::isspace(c) || std::ispunct(c)) {
            pending_space = true;
        } else {
            // keep non-ASCII bytes verbatim (UTF-8 continuation etc.)
            if (pending_space && !out.empty()) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(c));
        }
    }
    return out;
}

inline std::vector<std::string> normalized_tokens(std::string_view s) {
    return tokenize_words(normalize_text(s));
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

inline bool contains_ci(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return true;
    std::string h = to_lower(haystack);
    std::string n = to_lower(needle);
    return h.find(n) != std::string::npos;
}

inline std::string truncate_words(std::string_view text, size_t max_words) {
    auto spans = word_spans(text);
    if (spans.size() <= max_words) return std::string(text);
    if (max_words == 0) return "";
    return std::string(text.substr(spans.front().begin, spans[max_words - 1].end - spans.front().begin));
}

}  // namespace kbalign
