#include "pmdlab/random.hpp"

#include <cmath>
#include <limits>

#include "pmdlab/error.hpp"

namespace pmdlab {

std::uint64_t Rng::index(std::uint64_t n) {
    if (n == 0) throw Error(ErrorKind::InvalidArgument, "Rng::index with n = 0");
    // Rejection on the top of the range removes modulo bias.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t draw = engine_();
    while (draw >= limit) draw = engine_();
    return draw % n;
}

int Rng::categorical(std::span<const double> probs) {
    if (probs.empty()) throw Error(ErrorKind::InvalidArgument, "categorical over empty support");
    const double u = uniform();
    double cumulative = 0.0;
    int last_positive = -1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        last_positive = static_cast<int>(i);
        cumulative += probs[i];
        if (u < cumulative) return last_positive;
    }
    if (last_positive < 0) throw Error(ErrorKind::NotADistribution, "categorical with no positive mass");
    return last_positive;
}

std::uint64_t Rng::poisson(double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw Error(ErrorKind::InvalidArgument, "poisson rate must be finite and nonnegative");
    }
    constexpr double kChunk = 500.0;
    std::uint64_t total = 0;
    while (lambda > kChunk) {
        total += poisson(kChunk);
        lambda -= kChunk;
    }
    if (lambda == 0.0) return total;
    const double u = uniform();
    double pmf = std::exp(-lambda);
    double cdf = pmf;
    std::uint64_t k = 0;
    // The cdf can stall just below 1 in floating point; the cap is far in the tail.
    const auto cap = static_cast<std::uint64_t>(lambda + 40.0 * std::sqrt(lambda) + 40.0);
    while (u >= cdf && k < cap) {
        ++k;
        pmf *= lambda / static_cast<double>(k);
        cdf += pmf;
    }
    return total + k;
}

}  // namespace pmdlab
