#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "kbalign/simd/kernels.hpp"

using namespace kbalign;

namespace {
std::vector<float> random_vec(std::mt19937_64& rng, size_t n) {
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::vector<float> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}
}  // namespace

TEST_CASE("scalar dot matches naive arithmetic") {
    std::vector<float> a = {1, 2, 3};
    std::vector<float> b = {4, 5, 6};
    CHECK(simd::dot_scalar(a, b) == doctest::Approx(32.0f));
    CHECK(simd::squared_norm_scalar(a) == doctest::Approx(14.0f));
}

TEST_CASE("dispatched kernels agree with scalar reference") {
    std::mt19937_64 rng(7);
    for (size_t n : {1u, 7u, 8u, 9u, 31u, 256u, 1000u}) {
        for (int rep = 0; rep < 20; ++rep) {
            auto a = random_vec(rng, n);
            auto b = random_vec(rng, n);
            float ref = simd::dot_scalar(a, b);
            float got = simd::dot(a, b);
            CHECK(std::abs(got - ref) <= 1e-4f * (1.0f + std::abs(ref)));
            CHECK(std::abs(simd::squared_norm(a) - simd::squared_norm_scalar(a)) <=
                  1e-4f * (1.0f + simd::squared_norm_scalar(a)));
        }
    }
}

#if defined(__x86_64__)
TEST_CASE("avx2 kernel agrees with scalar when available") {
    if (std::string(simd::active_kernel()) != "avx2") return;
    std::mt19937_64 rng(11);
    auto a = random_vec(rng, 257);
    auto b = random_vec(rng, 257);
    float ref = simd::dot_scalar(a, b);
    float got = simd::dot_avx2(a, b);
    CHECK(std::abs(got - ref) <= 1e-4f * (1.0f + std::abs(ref)));
}
#endif

TEST_CASE("cosine bounds and identity") {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 50; ++rep) {
        auto a = random_vec(rng, 64);
        auto b = random_vec(rng, 64);
        float c = simd::cosine(a, b);
        CHECK(c >= -1.0f - 1e-6f);
        CHECK(c <= 1.0f + 1e-6f);
        CHECK(simd::cosine(a, a) == doctest::Approx(1.0f).epsilon(1e-5));
    }
    std::vector<float> zero(8, 0.0f);
    std::vector<float> one(8, 1.0f);
    CHECK(simd::cosine(zero, one) == 0.0f);
}
