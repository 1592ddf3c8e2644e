#pragma once

#include <cstddef>
#include <cstdint>

#include "pmdlab/random.hpp"
#include "pmdlab/table.hpp"

namespace pmdlab {

/// (1 - eps) pi + eps uniform, rowwise. Throws EpsOutOfRange unless 0 <= eps <= 1.
PolicyTable epsilon_softmax(const PolicyTable& policy, double eps);

/// Stateful behavior policy driving data collection.
class ActionSampler {
public:
    virtual ~ActionSampler() = default;
    virtual int next(std::size_t state) = 0;
    /// Called when the environment is reset.
    virtual void reset_episode() {}
};

/// Draws a ~ policy(s) independently at every step.
class PolicySampler final : public ActionSampler {
public:
    PolicySampler(PolicyTable policy, RngSeed seed);
    int next(std::size_t state) override;

private:
    PolicyTable policy_;
    Rng rng_;
};

/// Draws a ~ policy(s) together with a duration n ~ max(1, Poisson(lambda))
/// and repeats a for n steps before redrawing.
class StickyActionSampler final : public ActionSampler {
public:
    StickyActionSampler(PolicyTable policy, double lambda, RngSeed seed);

    int next(std::size_t state) override;
    /// Drops the current commitment so the next call redraws.
    void reset_episode() override;

    std::uint64_t redraws() const noexcept { return redraws_; }
    std::uint64_t total_duration() const noexcept { return total_duration_; }
    double lambda() const noexcept { return lambda_; }

private:
    PolicyTable policy_;
    double lambda_;
    Rng rng_;
    int action_ = 0;
    std::uint64_t remaining_ = 0;
    std::uint64_t redraws_ = 0;
    std::uint64_t total_duration_ = 0;
};

}  // namespace pmdlab
