#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pmdlab/random.hpp"

namespace pmdlab {

/// Finite discounted MDP with dense row-major storage.
///
/// rewards is |S| x |A|; transitions is |S| x |A| x |S| with
/// transitions[(s * |A| + a) * |S| + s'] = P(s' | s, a). Construction does
/// not validate; call validate() on anything that did not come from one of
/// the generators below.
struct TabularMdp {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::vector<double> rewards;
    double reward_bound = 1.0;
    std::vector<double> transitions;
    double gamma = 0.9;

    double reward(std::size_t s, std::size_t a) const { return rewards[s * n_actions + a]; }
    double& reward(std::size_t s, std::size_t a) { return rewards[s * n_actions + a]; }

    std::span<const double> next_state_probs(std::size_t s, std::size_t a) const {
        return {transitions.data() + (s * n_actions + a) * n_states, n_states};
    }
    std::span<double> next_state_probs(std::size_t s, std::size_t a) {
        return {transitions.data() + (s * n_actions + a) * n_states, n_states};
    }

    friend bool operator==(const TabularMdp&, const TabularMdp&) = default;
};

/// Tolerance on transition row sums.
inline constexpr double kRowSumTolerance = 1e-12;

/// Throws NonStochasticRow, RewardOutOfBound, BadGamma or ShapeMismatch.
void validate(const TabularMdp& mdp);

/// Random MDP with exactly `branching` successors per (s, a), chosen without
/// replacement; successor weights are i.i.d. uniform on (0, 1] and normalized.
TabularMdp random_mdp(RngSeed seed, std::size_t n_states, std::size_t n_actions,
                      std::size_t branching, double reward_bound, double gamma);

/// n-state chain with actions {0: left, 1: right}. Each action moves in its
/// direction with probability 1 - slip and the other way otherwise; the ends
/// clamp. Reward 1 for "right" in the rightmost state, 0 elsewhere.
TabularMdp chain_mdp(std::size_t n, double slip, double gamma);

inline constexpr std::size_t kChainLeft = 0;
inline constexpr std::size_t kChainRight = 1;

struct GridCell {
    std::size_t row = 0;
    std::size_t col = 0;
};

enum class GridAction : std::size_t { North = 0, South = 1, East = 2, West = 3 };

/// Deterministic gridworld, state index row * width + col. Moves into a wall
/// leave the agent in place. Entering the goal pays goal_reward; the goal is
/// absorbing with reward 0 afterwards. Every other transition pays step_reward.
TabularMdp gridworld_mdp(std::size_t width, std::size_t height, GridCell goal, double step_reward,
                         double goal_reward, double gamma);

/// JSON document {n_states, n_actions, gamma, reward_bound, rewards, transitions}
/// with every float written as 17-significant-digit scientific notation.
std::string to_json(const TabularMdp& mdp);
TabularMdp mdp_from_json(const std::string& text);

void save_mdp(const TabularMdp& mdp, const std::string& path);
TabularMdp load_mdp(const std::string& path);

}  // namespace pmdlab
