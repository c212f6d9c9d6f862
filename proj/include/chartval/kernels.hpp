#pragma once

// Data-parallel inner loops. Each kernel has a scalar reference implementation and, where the
// target supports it, an AVX2 variant. The dispatched entry points pick the widest variant the
// running CPU supports; CHARTVAL_ISA=scalar in the environment forces the reference path.

#include <cstdint>
#include <span>
#include <string_view>

namespace chartval::kernels {

enum class Isa { Scalar, Avx2 };

Isa active_isa();
std::string_view isa_name(Isa isa);
bool avx2_available();

/// ASCII lower-casing of `in` into `out` (out.size() >= in.size()). Bytes outside 'A'..'Z'
/// are copied unchanged, so UTF-8 sequences pass through intact.
void fold_ascii(std::string_view in, std::span<char> out);

/// Sum of values[indices[i]] over all i. Every index must be < values.size().
std::int64_t sum_gathered(std::span<const std::int32_t> values,
                          std::span<const std::uint32_t> indices);

namespace scalar {
void fold_ascii(std::string_view in, std::span<char> out);
std::int64_t sum_gathered(std::span<const std::int32_t> values,
                          std::span<const std::uint32_t> indices);
} // namespace scalar

#if defined(CHARTVAL_HAVE_AVX2)
namespace avx2 {
void fold_ascii(std::string_view in, std::span<char> out);
std::int64_t sum_gathered(std::span<const std::int32_t> values,
                          std::span<const std::uint32_t> indices);
} // namespace avx2
#endif

} // namespace chartval::kernels
