#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace pmdlab {

struct RngSeed {
    std::uint64_t value = 0;

    friend bool operator==(RngSeed, RngSeed) = default;
};

/// SplitMix64 finalizer; used to derive independent sub-seeds from one seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr RngSeed derive_seed(RngSeed base, std::uint64_t stream) noexcept {
    return RngSeed{mix_seed(base.value ^ mix_seed(stream + 0x632be59bd9b4e019ULL))};
}

// The standard distributions are implementation-defined, so every draw the
// library makes goes through these helpers to stay bit-identical across
// standard libraries.
class Rng {
public:
    explicit Rng(RngSeed seed) : engine_(seed.value) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1].
    double uniform_positive() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, n).
    std::uint64_t index(std::uint64_t n);

    /// Draw from a discrete distribution by CDF inversion; the last index with
    /// positive mass absorbs rounding.
    int categorical(std::span<const double> probs);

    /// Poisson(lambda) by sequential CDF inversion. Rates above 500 are split
    /// into independent chunks so exp(-lambda) never underflows.
    std::uint64_t poisson(double lambda);

    bool coin() { return (engine_() >> 63) != 0; }

private:
    std::mt19937_64 engine_;
};

}  // namespace pmdlab
