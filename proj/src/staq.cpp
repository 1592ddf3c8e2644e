#include "pmdlab/staq.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "pmdlab/error.hpp"
#include "pmdlab/soft_dp.hpp"

namespace pmdlab {

ReplayBuffer::ReplayBuffer(std::size_t capacity) {
    if (capacity < 1) throw Error(ErrorKind::InvalidArgument, "buffer capacity must be >= 1");
    storage_.resize(capacity);
}

void ReplayBuffer::push(const Transition& t) {
    storage_[(head_ + size_) % storage_.size()] = t;
    if (size_ < storage_.size()) {
        ++size_;
    } else {
        head_ = (head_ + 1) % storage_.size();
    }
    ++pushed_;
}

void ReplayBuffer::push(std::span<const Transition> ts) {
    for (const auto& t : ts) push(t);
}

const Transition& ReplayBuffer::operator[](std::size_t i) const {
    if (i >= size_) throw Error(ErrorKind::InvalidArgument, "buffer index out of range");
    return storage_[(head_ + i) % storage_.size()];
}

std::vector<Transition> ReplayBuffer::contents() const {
    std::vector<Transition> out;
    out.reserve(size_);
    for (std::size_t i = 0; i < size_; ++i) out.push_back((*this)[i]);
    return out;
}

std::string_view to_string(Aggregation aggregation) noexcept {
    return aggregation == Aggregation::Min ? "min" : "mean";
}

std::optional<Aggregation> parse_aggregation(std::string_view text) noexcept {
    if (text == "min") return Aggregation::Min;
    if (text == "mean") return Aggregation::Mean;
    return std::nullopt;
}

double aggregate(Aggregation aggregation, double a, double b) noexcept {
    return aggregation == Aggregation::Min ? std::min(a, b) : 0.5 * (a + b);
}

TwinQ::TwinQ(std::size_t n_states, std::size_t n_actions, Aggregation aggregation_,
             std::size_t target_update_interval_, double init)
    : online{QTable(n_states, n_actions, init), QTable(n_states, n_actions, init)},
      targets{online}, aggregation(aggregation_), target_update_interval(target_update_interval_) {
    if (target_update_interval < 1) {
        throw Error(ErrorKind::InvalidArgument, "target update interval must be >= 1");
    }
}

QTable TwinQ::aggregate_online() const {
    QTable out = online[0];
    auto a = out.values();
    auto b = online[1].values();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = pmdlab::aggregate(aggregation, a[i], b[i]);
    return out;
}

FqiResult fqi_update(TwinQ twin, const ReplayBuffer& buffer, const Logits& policy_logits,
                     double tau, double gamma, std::size_t batch_size, double learning_rate,
                     std::size_t steps, RngSeed seed) {
    if (buffer.empty()) throw Error(ErrorKind::EmptyBuffer, "replay buffer is empty");
    if (batch_size < 1) throw Error(ErrorKind::InvalidArgument, "batch size must be >= 1");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "learning rate must lie in (0, 1]");
    }
    if (!(tau >= 0.0)) throw Error(ErrorKind::TauNonPositive, "tau must be >= 0");
    if (!twin.online[0].same_shape(policy_logits)) {
        throw Error(ErrorKind::ShapeMismatch, "policy logits do not match the Q-tables");
    }

    const PolicyTable pi = softmax_policy(policy_logits);
    std::vector<double> entropy_term(pi.n_states());
    for (std::size_t s = 0; s < pi.n_states(); ++s) entropy_term[s] = tau * neg_entropy(pi.row(s));

    std::array<Rng, 2> rngs{Rng(derive_seed(seed, 0)), Rng(derive_seed(seed, 1))};
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t step = 0; step < steps; ++step) {
        for (std::size_t i = 0; i < 2; ++i) {
            Rng& rng = rngs[i];
            QTable& q = twin.online[i];
            for (std::size_t b = 0; b < batch_size; ++b) {
                const Transition& t = buffer[rng.index(buffer.size())];
                double target = t.reward;
                if (!t.terminal) {
                    const auto next_action =
                        static_cast<std::size_t>(rng.categorical(pi.row(t.next_state)));
                    target += gamma * (twin.target_value(t.next_state, next_action) -
                                       entropy_term[t.next_state]);
                }
                double& value = q(t.state, t.action);
                const double err = target - value;
                loss_sum += 0.5 * err * err;
                ++loss_count;
                value += learning_rate * err;
            }
        }
        ++twin.updates;
        if (twin.updates % twin.target_update_interval == 0) twin.targets = twin.online;
    }
    return {std::move(twin), loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0};
}

std::vector<double> resolve_start(const TabularMdp& mdp, std::span<const double> start_dist) {
    if (start_dist.empty()) {
        return std::vector<double>(mdp.n_states, 1.0 / static_cast<double>(mdp.n_states));
    }
    if (start_dist.size() != mdp.n_states) {
        throw Error(ErrorKind::ShapeMismatch, "start distribution does not match |S|");
    }
    double total = 0.0;
    for (double p : start_dist) {
        if (!(p >= 0.0)) throw Error(ErrorKind::NotADistribution, "negative start probability");
        total += p;
    }
    if (std::abs(total - 1.0) > kDistributionTolerance) {
        throw Error(ErrorKind::NotADistribution, "start distribution does not sum to 1");
    }
    return {start_dist.begin(), start_dist.end()};
}

EnvironmentStream::EnvironmentStream(const TabularMdp& mdp, std::vector<double> start_dist,
                                     std::size_t horizon, RngSeed seed)
    : mdp_(&mdp), start_(resolve_start(mdp, start_dist)), horizon_(horizon), rng_(seed) {
    if (horizon < 1) throw Error(ErrorKind::InvalidArgument, "horizon must be >= 1");
}

void EnvironmentStream::reset(ActionSampler& behavior) {
    state_ = static_cast<std::size_t>(rng_.categorical(start_));
    t_ = 0;
    started_ = true;
    behavior.reset_episode();
}

Transition EnvironmentStream::step(ActionSampler& behavior) {
    if (!started_ || t_ >= horizon_) reset(behavior);
    const auto action = static_cast<std::size_t>(behavior.next(state_));
    if (action >= mdp_->n_actions) throw Error(ErrorKind::InvalidArgument, "sampled action out of range");
    Transition t;
    t.state = state_;
    t.action = action;
    t.reward = mdp_->reward(state_, action);
    t.next_state = static_cast<std::size_t>(rng_.categorical(mdp_->next_state_probs(state_, action)));
    t.terminal = false;
    state_ = t.next_state;
    ++t_;
    return t;
}

std::vector<Transition> collect(const TabularMdp& mdp, ActionSampler& behavior,
                                std::span<const double> start_dist, std::size_t n,
                                std::size_t horizon, RngSeed seed) {
    if (n < 1) throw Error(ErrorKind::InvalidArgument, "collect needs n >= 1");
    EnvironmentStream env(mdp, {start_dist.begin(), start_dist.end()}, horizon, seed);
    std::vector<Transition> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(env.step(behavior));
    return out;
}

double TauSchedule::at(std::size_t iteration, double fallback) const {
    if (kind == Kind::Constant) return fallback;
    if (steps == 0 || iteration >= steps) return to;
    const double frac = static_cast<double>(iteration) / static_cast<double>(steps);
    return from + (to - from) * frac;
}

void StaqConfig::validate() const {
    (void)PmdConfig(tau, eta, memory, Variant::WeightCorrected);
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw Error(ErrorKind::EpsOutOfRange, "epsilon must lie in [0, 1]");
    if (samples_per_iter < 1 || buffer_capacity < 1 || batch_size < 1) {
        throw Error(ErrorKind::InvalidArgument, "N, D and batch_size must be >= 1");
    }
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "learning rate must lie in (0, 1]");
    }
    if (target_update_interval < 1) throw Error(ErrorKind::InvalidArgument, "target update interval must be >= 1");
    if (horizon < 1) throw Error(ErrorKind::InvalidArgument, "horizon must be >= 1");
    if (behavior == BehaviorKind::Sticky && !(sticky_lambda > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "sticky lambda must be > 0");
    }
    if (tau_schedule.kind == TauSchedule::Kind::Linear && !(tau_schedule.from > 0.0 && tau_schedule.to > 0.0)) {
        throw Error(ErrorKind::TauNonPositive, "scheduled tau must stay > 0");
    }
}

double start_value(const TabularMdp& mdp, const PolicyTable& policy, std::span<const double> start_dist) {
    const std::vector<double> start = resolve_start(mdp, start_dist);
    const QTable q = evaluate_policy_exact(mdp, 0.0, policy, {1e-10, 0});
    const VTable v = soft_state_values(policy, q, 0.0);
    double total = 0.0;
    for (std::size_t s = 0; s < mdp.n_states; ++s) total += start[s] * v[s];
    return total;
}

double greedy_return(const TabularMdp& mdp, const Logits& logits, std::span<const double> start_dist) {
    const QTable as_q(logits);
    return start_value(mdp, deterministic_policy(mdp.n_actions, greedy_actions(as_q)), start_dist);
}

double optimal_greedy_return(const TabularMdp& mdp, std::span<const double> start_dist, double tau) {
    const OptimalSolution sol = solve_optimal(mdp, tau, {1e-10, 0});
    return start_value(mdp, deterministic_policy(mdp.n_actions, greedy_actions(sol.q)), start_dist);
}

StaqResult staq_run(const TabularMdp& mdp, const StaqConfig& cfg, std::size_t iterations) {
    cfg.validate();
    validate(mdp);
    const std::vector<double> start = resolve_start(mdp, cfg.start_dist);

    StaqResult result;
    result.twin = TwinQ(mdp.n_states, mdp.n_actions, cfg.aggregation, cfg.target_update_interval);
    result.logits = Logits(mdp.n_states, mdp.n_actions, 0.0);
    QStack stack(cfg.memory);
    ReplayBuffer buffer(cfg.buffer_capacity);
    EnvironmentStream env(mdp, start, cfg.horizon, derive_seed(cfg.seed, 1));
    const RngSeed behavior_root = derive_seed(cfg.seed, 2);
    const RngSeed fqi_root = derive_seed(cfg.seed, 3);

    result.stats.reserve(iterations);
    for (std::size_t k = 0; k < iterations; ++k) {
        const double tau = cfg.tau_schedule.at(k, cfg.tau);
        const PmdConfig pmd(tau, cfg.eta, cfg.memory, Variant::WeightCorrected);

        const PolicyTable behavior_policy = epsilon_softmax(softmax_policy(result.logits), cfg.epsilon);
        std::unique_ptr<ActionSampler> sampler;
        const RngSeed behavior_seed = derive_seed(behavior_root, k);
        if (cfg.behavior == BehaviorKind::Sticky) {
            sampler = std::make_unique<StickyActionSampler>(behavior_policy, cfg.sticky_lambda, behavior_seed);
        } else {
            sampler = std::make_unique<PolicySampler>(behavior_policy, behavior_seed);
        }
        for (std::size_t i = 0; i < cfg.samples_per_iter; ++i) buffer.push(env.step(*sampler));

        FqiResult fit = fqi_update(std::move(result.twin), buffer, result.logits, tau, mdp.gamma,
                                   cfg.batch_size, cfg.learning_rate, cfg.gradient_steps,
                                   derive_seed(fqi_root, k));
        result.twin = std::move(fit.twin);
        stack.push(result.twin.aggregate_online());
        result.logits = logits_from_stack(stack, pmd);

        EpisodeStats stats;
        stats.iter = k;
        stats.greedy_return = greedy_return(mdp, result.logits, start);
        stats.behavior_return =
            start_value(mdp, epsilon_softmax(softmax_policy(result.logits), cfg.epsilon), start);
        stats.mean_loss = fit.mean_loss;
        stats.buffer_len = buffer.size();
        stats.tau_current = tau;
        result.stats.push_back(stats);
    }
    return result;
}

}  // namespace pmdlab
