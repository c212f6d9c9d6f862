#pragma once

#include <cstdint>
#include <random>

namespace chartval {

/// SplitMix64 finalizer; used to derive independent per-replicate seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// seed_i = hash(base_seed, i). Independent of evaluation order.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(base) ^ (index * 0xD1B54A32D192ED03ULL + 1));
}

/// Portable seeded generator.
///
/// The raw stream is std::mt19937_64, whose output sequence is fixed by the standard. All
/// derived draws (bounded integers, uniforms, Bernoulli) are implemented here rather than with
/// <random> distributions, which are implementation-defined; the same seed therefore yields
/// the same draws on every platform and standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, n) by rejection sampling; n must be > 0.
    std::uint64_t below(std::uint64_t n);

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    /// Sum of `trials` Bernoulli(p) draws.
    std::uint64_t binomial(std::uint64_t trials, double p);

private:
    std::mt19937_64 engine_;
};

} // namespace chartval
