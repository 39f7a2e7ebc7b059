#pragma once

#include <cstddef>
#include <span>

namespace kbalign::simd {

// Scalar reference kernels. These are the semantics; the vectorized
// variants must agree with them within floating-point reassociation error.
float dot_scalar(std::span<const float> a, std::span<const float> b);
float squared_norm_scalar(std::span<const float> a);

#if defined(__x86_64__) || defined(_M_X64)
float dot_avx2(std::span<const float> a, std::span<const float> b);
float squared_norm_avx2(std::span<const float> a);
#endif

// Runtime-dispatched entry points. Resolved once on first call.
float dot(std::span<const float> a, std::span<const float> b);
float squared_norm(std::span<const float> a);

// Name of the kernel set selected at runtime ("scalar" or "avx2").
const char* active_kernel();

// cosine = dot / (|a| |b|); returns 0 when either vector is zero.
float cosine(std::span<const float> a, std::span<const float> b);

}  // namespace kbalign::simd
