#include "kbalign/simd/kernels.hpp"

#include <cassert>
#include <cmath>

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>
#endif

namespace kbalign::simd {

float dot_scalar(std::span<const float> a, std::span<const float> b) {
    assert(a.size() == b.size());
    float acc = 0.0f;
    for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

float squared_norm_scalar(std::span<const float> a) {
    float acc = 0.0f;
    for (float v : a) acc += v * v;
    return acc;
}

#if defined(__x86_64__) || defined(_M_X64)

__attribute__((target("avx2,fma")))
float dot_avx2(std::span<const float> a, std::span<const float> b) {
    assert(a.size() == b.size());
    const size_t n = a.size();
    size_t i = 0;
    __m256 acc = _mm256_setzero_ps();
    for (; i + 8 <= n; i += 8) {
        __m256 va = _mm256_loadu_ps(a.data() + i);
        __m256 vb = _mm256_loadu_ps(b.data() + i);
        acc = _mm256_fmadd_ps(va, vb, acc);
    }
    // horizontal sum
    __m128 lo = _mm256_castps256_ps128(acc);
    __m128 hi = _mm256_extractf128_ps(acc, 1);
    __m128 sum = _mm_add_ps(lo, hi);
    sum = _mm_hadd_ps(sum, sum);
    sum = _mm_hadd_ps(sum, sum);
    float out = _mm_cvtss_f32(sum);
    for (; i < n; ++i) out += a[i] * b[i];
    return out;
}

__attribute__((target("avx2,fma")))
float squared_norm_avx2(std::span<const float> a) {
    return dot_avx2(a, a);
}

namespace {
bool have_avx2() {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
}  // namespace

#endif

namespace {

using DotFn = float (*)(std::span<const float>, std::span<const float>);
using NormFn = float (*)(std::span<const float>);

struct Dispatch {
    DotFn dot;
    NormFn norm;
    const char* name;
};

Dispatch select() {
#if defined(__x86_64__) || defined(_M_X64)
    if (have_avx2()) return {dot_avx2, squared_norm_avx2, "avx2"};
#endif
    return {dot_scalar, squared_norm_scalar, "scalar"};
}

const Dispatch& dispatch() {
    static const Dispatch d = select();
    return d;
}

}  // namespace

float dot(std::span<const float> a, std::span<const float> b) { return dispatch().dot(a, b); }

float squared_norm(std::span<const float> a) { return dispatch().norm(a); }

const char* active_kernel() { return dispatch().name; }

float cosine(std::span<const float> a, std::span<const float> b) {
    float na = squared_norm(a);
    float nb = squared_norm(b);
    if (na == 0.0f || nb == 0.0f) return 0.0f;
    return dot(a, b) / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace kbalign::simd
