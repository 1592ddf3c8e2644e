#include "pmdlab/mdp.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "pmdlab/error.hpp"
#include "pmdlab/format.hpp"

namespace pmdlab {

namespace {

std::string cell(std::size_t s, std::size_t a) {
    return "(s=" + std::to_string(s) + ", a=" + std::to_string(a) + ")";
}

}  // namespace

void validate(const TabularMdp& mdp) {
    if (mdp.n_states == 0 || mdp.n_actions == 0) {
        throw Error(ErrorKind::ShapeMismatch, "MDP needs at least one state and one action");
    }
    if (mdp.rewards.size() != mdp.n_states * mdp.n_actions ||
        mdp.transitions.size() != mdp.n_states * mdp.n_actions * mdp.n_states) {
        throw Error(ErrorKind::ShapeMismatch, "reward or transition array has the wrong size");
    }
    if (!(mdp.gamma > 0.0 && mdp.gamma < 1.0)) {
        throw Error(ErrorKind::BadGamma, "gamma must lie in (0, 1), got " + format_double(mdp.gamma));
    }
    if (!(mdp.reward_bound > 0.0) || !std::isfinite(mdp.reward_bound)) {
        throw Error(ErrorKind::RewardOutOfBound, "reward_bound must be positive and finite");
    }
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        for (std::size_t a = 0; a < mdp.n_actions; ++a) {
            const double r = mdp.reward(s, a);
            if (!std::isfinite(r) || std::abs(r) > mdp.reward_bound) {
                throw Error(ErrorKind::RewardOutOfBound,
                            "reward " + format_double(r) + " at " + cell(s, a) + " exceeds bound " +
                                format_double(mdp.reward_bound));
            }
            double sum = 0.0;
            for (double p : mdp.next_state_probs(s, a)) {
                if (!(p >= 0.0) || !std::isfinite(p)) {
                    throw Error(ErrorKind::NonStochasticRow,
                                "negative or non-finite probability at " + cell(s, a));
                }
                sum += p;
            }
            if (std::abs(sum - 1.0) > kRowSumTolerance) {
                throw Error(ErrorKind::NonStochasticRow,
                            "row " + cell(s, a) + " sums to " + format_double(sum));
            }
        }
    }
}

TabularMdp random_mdp(RngSeed seed, std::size_t n_states, std::size_t n_actions,
                      std::size_t branching, double reward_bound, double gamma) {
    if (n_states == 0 || n_actions == 0) {
        throw Error(ErrorKind::InvalidArgument, "random_mdp needs n_states, n_actions >= 1");
    }
    if (branching < 1 || branching > n_states) {
        throw Error(ErrorKind::InvalidBranching,
                    "branching must lie in [1, n_states], got " + std::to_string(branching));
    }
    TabularMdp mdp;
    mdp.n_states = n_states;
    mdp.n_actions = n_actions;
    mdp.gamma = gamma;
    mdp.reward_bound = reward_bound;
    mdp.rewards.assign(n_states * n_actions, 0.0);
    mdp.transitions.assign(n_states * n_actions * n_states, 0.0);

    Rng rng(seed);
    std::vector<std::size_t> order(n_states);
    for (std::size_t s = 0; s < n_states; ++s) {
        for (std::size_t a = 0; a < n_actions; ++a) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            // Partial Fisher-Yates: the first `branching` slots are the successors.
            for (std::size_t i = 0; i < branching; ++i) {
                const std::size_t j = i + static_cast<std::size_t>(rng.index(n_states - i));
                std::swap(order[i], order[j]);
            }
            auto row = mdp.next_state_probs(s, a);
            double total = 0.0;
            for (std::size_t i = 0; i < branching; ++i) {
                const double w = rng.uniform_positive();
                row[order[i]] = w;
                total += w;
            }
            for (std::size_t i = 0; i < branching; ++i) row[order[i]] /= total;
            mdp.reward(s, a) = rng.uniform(-reward_bound, reward_bound);
        }
    }
    validate(mdp);
    return mdp;
}

TabularMdp chain_mdp(std::size_t n, double slip, double gamma) {
    if (n < 2) throw Error(ErrorKind::InvalidArgument, "chain needs at least 2 states");
    if (!(slip >= 0.0 && slip < 1.0)) {
        throw Error(ErrorKind::InvalidSlip, "slip must lie in [0, 1), got " + format_double(slip));
    }
    TabularMdp mdp;
    mdp.n_states = n;
    mdp.n_actions = 2;
    mdp.gamma = gamma;
    mdp.reward_bound = 1.0;
    mdp.rewards.assign(n * 2, 0.0);
    mdp.transitions.assign(n * 2 * n, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        const std::size_t left = s == 0 ? 0 : s - 1;
        const std::size_t right = s + 1 == n ? s : s + 1;
        auto go_left = mdp.next_state_probs(s, kChainLeft);
        go_left[left] += 1.0 - slip;
        go_left[right] += slip;
        auto go_right = mdp.next_state_probs(s, kChainRight);
        go_right[right] += 1.0 - slip;
        go_right[left] += slip;
    }
    mdp.reward(n - 1, kChainRight) = 1.0;
    validate(mdp);
    return mdp;
}

TabularMdp gridworld_mdp(std::size_t width, std::size_t height, GridCell goal, double step_reward,
                         double goal_reward, double gamma) {
    if (width == 0 || height == 0 || width * height < 2) {
        throw Error(ErrorKind::InvalidArgument, "gridworld needs at least two cells");
    }
    if (goal.row >= height || goal.col >= width) {
        throw Error(ErrorKind::GoalOutOfGrid, "goal (" + std::to_string(goal.row) + ", " +
                                                  std::to_string(goal.col) + ") is outside the grid");
    }
    const std::size_t n = width * height;
    TabularMdp mdp;
    mdp.n_states = n;
    mdp.n_actions = 4;
    mdp.gamma = gamma;
    const double bound = std::max(std::abs(step_reward), std::abs(goal_reward));
    mdp.reward_bound = bound > 0.0 ? bound : 1.0;
    mdp.rewards.assign(n * 4, 0.0);
    mdp.transitions.assign(n * 4 * n, 0.0);
    const std::size_t goal_state = goal.row * width + goal.col;

    for (std::size_t row = 0; row < height; ++row) {
        for (std::size_t col = 0; col < width; ++col) {
            const std::size_t s = row * width + col;
            for (std::size_t a = 0; a < 4; ++a) {
                if (s == goal_state) {
                    mdp.next_state_probs(s, a)[s] = 1.0;
                    continue;
                }
                std::size_t r = row;
                std::size_t c = col;
                switch (static_cast<GridAction>(a)) {
                    case GridAction::North: r = row == 0 ? row : row - 1; break;
                    case GridAction::South: r = row + 1 == height ? row : row + 1; break;
                    case GridAction::East: c = col + 1 == width ? col : col + 1; break;
                    case GridAction::West: c = col == 0 ? col : col - 1; break;
                }
                const std::size_t next = r * width + c;
                mdp.next_state_probs(s, a)[next] = 1.0;
                mdp.reward(s, a) = next == goal_state ? goal_reward : step_reward;
            }
        }
    }
    validate(mdp);
    return mdp;
}

std::string to_json(const TabularMdp& mdp) {
    std::ostringstream out;
    out << "{\n  \"n_states\": " << mdp.n_states << ",\n  \"n_actions\": " << mdp.n_actions
        << ",\n  \"gamma\": " << format_double(mdp.gamma)
        << ",\n  \"reward_bound\": " << format_double(mdp.reward_bound) << ",\n  \"rewards\": [";
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        out << (s ? ",\n    [" : "\n    [");
        for (std::size_t a = 0; a < mdp.n_actions; ++a) {
            out << (a ? ", " : "") << format_double(mdp.reward(s, a));
        }
        out << ']';
    }
    out << "\n  ],\n  \"transitions\": [";
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        out << (s ? ",\n    [" : "\n    [");
        for (std::size_t a = 0; a < mdp.n_actions; ++a) {
            out << (a ? ",\n      [" : "\n      [");
            auto row = mdp.next_state_probs(s, a);
            for (std::size_t t = 0; t < row.size(); ++t) out << (t ? ", " : "") << format_double(row[t]);
            out << ']';
        }
        out << "\n    ]";
    }
    out << "\n  ]\n}\n";
    return out.str();
}

TabularMdp mdp_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("MDP JSON: ") + e.what());
    }
    TabularMdp mdp;
    try {
        mdp.n_states = doc.at("n_states").get<std::size_t>();
        mdp.n_actions = doc.at("n_actions").get<std::size_t>();
        mdp.gamma = doc.at("gamma").get<double>();
        mdp.reward_bound = doc.at("reward_bound").get<double>();
        const auto& rewards = doc.at("rewards");
        const auto& transitions = doc.at("transitions");
        if (rewards.size() != mdp.n_states || transitions.size() != mdp.n_states) {
            throw Error(ErrorKind::ShapeMismatch, "MDP JSON arrays do not match n_states");
        }
        mdp.rewards.reserve(mdp.n_states * mdp.n_actions);
        mdp.transitions.reserve(mdp.n_states * mdp.n_actions * mdp.n_states);
        for (std::size_t s = 0; s < mdp.n_states; ++s) {
            if (rewards[s].size() != mdp.n_actions || transitions[s].size() != mdp.n_actions) {
                throw Error(ErrorKind::ShapeMismatch, "MDP JSON arrays do not match n_actions");
            }
            for (std::size_t a = 0; a < mdp.n_actions; ++a) {
                mdp.rewards.push_back(rewards[s][a].get<double>());
                const auto& row = transitions[s][a];
                if (row.size() != mdp.n_states) {
                    throw Error(ErrorKind::ShapeMismatch, "transition row length != n_states");
                }
                for (const auto& p : row) mdp.transitions.push_back(p.get<double>());
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("MDP JSON: ") + e.what());
    }
    return mdp;
}

void save_mdp(const TabularMdp& mdp, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot open " + path + " for writing");
    out << to_json(mdp);
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + path);
}

TabularMdp load_mdp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return mdp_from_json(buffer.str());
}

}  // namespace pmdlab
