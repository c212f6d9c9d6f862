// Compiled with -mavx2; only called after a runtime CPU check.
#include "chartval/kernels.hpp"

#include <immintrin.h>

namespace chartval::kernels::avx2 {

void fold_ascii(std::string_view in, std::span<char> out) {
    const std::size_t n = in.size();
    const char* src = in.data();
    char* dst = out.data();

    // Signed compare trick: c in ['A','Z'] <=> (c - 'A' + 128) as int8 < -128 + 26.
    const __m256i shift = _mm256_set1_epi8(static_cast<char>(128 - 'A'));
    const __m256i bound = _mm256_set1_epi8(static_cast<char>(-128 + 26));
    const __m256i delta = _mm256_set1_epi8('a' - 'A');

    std::size_t i = 0;
    for (; i + 32 <= n; i += 32) {
        const __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(src + i));
        const __m256i biased = _mm256_add_epi8(v, shift);
        const __m256i is_upper = _mm256_cmpgt_epi8(bound, biased);
        const __m256i folded = _mm256_add_epi8(v, _mm256_and_si256(is_upper, delta));
        _mm256_storeu_si256(reinterpret_cast<__m256i*>(dst + i), folded);
    }
    scalar::fold_ascii(in.substr(i), out.subspan(i));
}

std::int64_t sum_gathered(std::span<const std::int32_t> values,
                          std::span<const std::uint32_t> indices) {
    const std::size_t n = indices.size();
    const int* base = values.data();
    const std::uint32_t* idx = indices.data();

    __m256i acc = _mm256_setzero_si256(); // 4 x int64
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256i vidx = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(idx + i));
        const __m256i g = _mm256_i32gather_epi32(base, vidx, 4);
        acc = _mm256_add_epi64(acc, _mm256_cvtepi32_epi64(_mm256_castsi256_si128(g)));
        acc = _mm256_add_epi64(acc, _mm256_cvtepi32_epi64(_mm256_extracti128_si256(g, 1)));
    }
    alignas(32) std::int64_t lanes[4];
    _mm256_store_si256(reinterpret_cast<__m256i*>(lanes), acc);
    std::int64_t total = lanes[0] + lanes[1] + lanes[2] + lanes[3];
    return total + scalar::sum_gathered(values, indices.subspan(i));
}

} // namespace chartval::kernels::avx2
