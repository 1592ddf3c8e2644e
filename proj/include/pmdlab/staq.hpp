#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pmdlab/behavior.hpp"
#include "pmdlab/mdp.hpp"
#include "pmdlab/pmd.hpp"
#include "pmdlab/random.hpp"
#include "pmdlab/table.hpp"

namespace pmdlab {

struct Transition {
    std::size_t state = 0;
    std::size_t action = 0;
    double reward = 0.0;
    std::size_t next_state = 0;
    bool terminal = false;

    friend bool operator==(const Transition&, const Transition&) = default;
};

/// Fixed-capacity FIFO of transitions; index 0 is the oldest entry.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(const Transition& t);
    void push(std::span<const Transition> ts);

    std::size_t capacity() const noexcept { return storage_.size(); }
    std::size_t size() const noexcept { return size_; }
    bool empty() const noexcept { return size_ == 0; }
    std::uint64_t total_pushed() const noexcept { return pushed_; }

    const Transition& operator[](std::size_t i) const;
    std::vector<Transition> contents() const;

private:
    std::vector<Transition> storage_;
    std::size_t head_ = 0;
    std::size_t size_ = 0;
    std::uint64_t pushed_ = 0;
};

enum class Aggregation { Min, Mean };

std::string_view to_string(Aggregation aggregation) noexcept;
std::optional<Aggregation> parse_aggregation(std::string_view text) noexcept;

double aggregate(Aggregation aggregation, double a, double b) noexcept;

/// Two online tables trained on independent sample streams and a frozen
/// target pair refreshed by exact copy every target_update_interval updates.
struct TwinQ {
    std::array<QTable, 2> online;
    std::array<QTable, 2> targets;
    Aggregation aggregation = Aggregation::Min;
    std::size_t target_update_interval = 1;
    /// Gradient steps taken so far; persists across fqi_update calls.
    std::uint64_t updates = 0;

    TwinQ() = default;
    TwinQ(std::size_t n_states, std::size_t n_actions, Aggregation aggregation,
          std::size_t target_update_interval, double init = 0.0);

    double target_value(std::size_t s, std::size_t a) const {
        return pmdlab::aggregate(aggregation, targets[0](s, a), targets[1](s, a));
    }
    /// Elementwise aggregate of the online pair.
    QTable aggregate_online() const;
};

struct FqiResult {
    TwinQ twin;
    /// Mean of (Q - target)^2 / 2 over every sample of every step, before its update.
    double mean_loss = 0.0;
};

/// `steps` stochastic passes: each twin draws its own batch and its own a' ~
/// softmax(policy_logits(s')), regresses Q(s, a) toward
/// r + gamma (agg target(s', a') - tau h(pi(s'))) by Q += lr (target - Q).
/// Terminal transitions regress toward r. Throws EmptyBuffer.
FqiResult fqi_update(TwinQ twin, const ReplayBuffer& buffer, const Logits& policy_logits,
                     double tau, double gamma, std::size_t batch_size, double learning_rate,
                     std::size_t steps, RngSeed seed);

/// Environment simulator that resets from start_dist after `horizon` steps.
class EnvironmentStream {
public:
    EnvironmentStream(const TabularMdp& mdp, std::vector<double> start_dist, std::size_t horizon,
                      RngSeed seed);

    Transition step(ActionSampler& behavior);
    std::size_t state() const noexcept { return state_; }

private:
    void reset(ActionSampler& behavior);

    const TabularMdp* mdp_;
    std::vector<double> start_;
    std::size_t horizon_;
    Rng rng_;
    std::size_t state_ = 0;
    std::size_t t_ = 0;
    bool started_ = false;
};

/// Start distribution; empty means uniform over states.
std::vector<double> resolve_start(const TabularMdp& mdp, std::span<const double> start_dist);

std::vector<Transition> collect(const TabularMdp& mdp, ActionSampler& behavior,
                                std::span<const double> start_dist, std::size_t n,
                                std::size_t horizon, RngSeed seed);

enum class BehaviorKind { EpsSoftmax, Sticky };

struct TauSchedule {
    enum class Kind { Constant, Linear } kind = Kind::Constant;
    double from = 0.0;
    double to = 0.0;
    std::size_t steps = 0;

    /// Linear interpolation from `from` to `to` over `steps` iterations, then `to`.
    /// Constant schedules return `fallback`.
    double at(std::size_t iteration, double fallback) const;
};

struct StaqConfig {
    double tau = 0.1;
    double eta = 0.4;
    std::size_t memory = 10;
    std::size_t samples_per_iter = 50;
    std::size_t buffer_capacity = 1000;
    std::size_t batch_size = 32;
    double learning_rate = 0.1;
    std::size_t gradient_steps = 20;
    std::size_t target_update_interval = 10;
    Aggregation aggregation = Aggregation::Min;
    double epsilon = 0.05;
    BehaviorKind behavior = BehaviorKind::EpsSoftmax;
    double sticky_lambda = 1.0;
    TauSchedule tau_schedule{};
    std::size_t horizon = 50;
    std::vector<double> start_dist;
    RngSeed seed{};

    /// Throws InvalidArgument / EpsOutOfRange / VariantMismatch.
    void validate() const;
};

struct EpisodeStats {
    std::size_t iter = 0;
    double greedy_return = 0.0;
    double behavior_return = 0.0;
    double mean_loss = 0.0;
    std::size_t buffer_len = 0;
    double tau_current = 0.0;
};

struct StaqResult {
    std::vector<EpisodeStats> stats;
    Logits logits;
    TwinQ twin;
};

/// Unregularized value of `policy` averaged over the start distribution.
double start_value(const TabularMdp& mdp, const PolicyTable& policy, std::span<const double> start_dist);

/// Start value of the argmax policy of `logits`, lowest index on ties.
double greedy_return(const TabularMdp& mdp, const Logits& logits, std::span<const double> start_dist);

/// Start value of the greedy policy of soft-optimal Q at a small temperature.
double optimal_greedy_return(const TabularMdp& mdp, std::span<const double> start_dist,
                             double tau = 1e-3);

StaqResult staq_run(const TabularMdp& mdp, const StaqConfig& cfg, std::size_t iterations);

}  // namespace pmdlab
