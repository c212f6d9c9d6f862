#include "chartval/kernels.hpp"

#include <cstdlib>
#include <string>

namespace chartval::kernels {

bool avx2_available() {
#if defined(CHARTVAL_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

namespace {

Isa detect() {
    if (const char* forced = std::getenv("CHARTVAL_ISA"); forced && std::string(forced) == "scalar") {
        return Isa::Scalar;
    }
    return avx2_available() ? Isa::Avx2 : Isa::Scalar;
}

using FoldFn = void (*)(std::string_view, std::span<char>);
using SumFn = std::int64_t (*)(std::span<const std::int32_t>, std::span<const std::uint32_t>);

struct Table {
    Isa isa;
    FoldFn fold;
    SumFn sum;
};

const Table& table() {
    static const Table t = [] {
        const Isa isa = detect();
#if defined(CHARTVAL_HAVE_AVX2)
        if (isa == Isa::Avx2) return Table{isa, &avx2::fold_ascii, &avx2::sum_gathered};
#endif
        return Table{Isa::Scalar, &scalar::fold_ascii, &scalar::sum_gathered};
    }();
    return t;
}

} // namespace

Isa active_isa() { return table().isa; }

std::string_view isa_name(Isa isa) {
    switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    }
    return "unknown";
}

void fold_ascii(std::string_view in, std::span<char> out) { table().fold(in, out); }

std::int64_t sum_gathered(std::span<const std::int32_t> values,
                          std::span<const std::uint32_t> indices) {
    return table().sum(values, indices);
}

} // namespace chartval::kernels
