#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace kbalign {

// FNV-1a, 64-bit. Stable across runs and platforms, unlike std::hash.
inline uint64_t fnv1a64(std::string_view data, uint64_t seed = 0xcbf29ce484222325ull) {
    uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

inline std::string content_hash(std::string_view data) { return hex64(fnv1a64(data)); }

}  // namespace kbalign
