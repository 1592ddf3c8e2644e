#include "pmdlab/behavior.hpp"

#include <algorithm>
#include <cmath>

#include "pmdlab/error.hpp"

namespace pmdlab {

PolicyTable epsilon_softmax(const PolicyTable& policy, double eps) {
    if (!(eps >= 0.0 && eps <= 1.0)) throw Error(ErrorKind::EpsOutOfRange, "eps must lie in [0, 1]");
    PolicyTable out = policy;
    if (policy.n_actions() == 0) return out;
    const double share = eps / static_cast<double>(policy.n_actions());
    for (double& p : out.values()) p = (1.0 - eps) * p + share;
    return out;
}

PolicySampler::PolicySampler(PolicyTable policy, RngSeed seed)
    : policy_(std::move(policy)), rng_(seed) {}

int PolicySampler::next(std::size_t state) {
    if (state >= policy_.n_states()) throw Error(ErrorKind::InvalidArgument, "state out of range");
    return rng_.categorical(policy_.row(state));
}

StickyActionSampler::StickyActionSampler(PolicyTable policy, double lambda, RngSeed seed)
    : policy_(std::move(policy)), lambda_(lambda), rng_(seed) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
        throw Error(ErrorKind::InvalidArgument, "sticky lambda must be > 0");
    }
}

int StickyActionSampler::next(std::size_t state) {
    if (state >= policy_.n_states()) throw Error(ErrorKind::InvalidArgument, "state out of range");
    if (remaining_ == 0) {
        action_ = rng_.categorical(policy_.row(state));
        remaining_ = std::max<std::uint64_t>(1, rng_.poisson(lambda_));
        ++redraws_;
        total_duration_ += remaining_;
    }
    --remaining_;
    return action_;
}

void StickyActionSampler::reset_episode() { remaining_ = 0; }

}  // namespace pmdlab
