#include "chartval/kernels.hpp"

namespace chartval::kernels::scalar {

void fold_ascii(std::string_view in, std::span<char> out) {
    for (std::size_t i = 0; i < in.size(); ++i) {
        const char c = in[i];
        out[i] = (c >= 'A' && c <= 'Z') ? static_cast<char>(c + ('a' - 'A')) : c;
    }
}

std::int64_t sum_gathered(std::span<const std::int32_t> values,
                          std::span<const std::uint32_t> indices) {
    std::int64_t total = 0;
    for (const std::uint32_t idx : indices) total += values[idx];
    return total;
}

} // namespace chartval::kernels::scalar
