#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "pmdlab/error.hpp"
#include "pmdlab/mdp.hpp"
#include "support.hpp"

using namespace pmdlab;

namespace {

TabularMdp single_state(double p, double r) {
    TabularMdp m;
    m.n_states = 1;
    m.n_actions = 1;
    m.rewards = {r};
    m.reward_bound = 1.0;
    m.transitions = {p};
    m.gamma = 0.9;
    return m;
}

ErrorKind kind_of(const TabularMdp& m) {
    try {
        validate(m);
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("validate accepted an invalid MDP");
    return ErrorKind::InvalidArgument;
}

// Unregularized value iteration with a hard max, run to machine precision.
std::vector<double> hard_max_values(const TabularMdp& m) {
    std::vector<double> v(m.n_states, 0.0);
    for (int it = 0; it < 5000; ++it) {
        std::vector<double> next(m.n_states, -1e300);
        for (std::size_t s = 0; s < m.n_states; ++s) {
            for (std::size_t a = 0; a < m.n_actions; ++a) {
                double q = m.reward(s, a);
                const auto p = m.next_state_probs(s, a);
                for (std::size_t t = 0; t < m.n_states; ++t) q += m.gamma * p[t] * v[t];
                next[s] = std::max(next[s], q);
            }
        }
        v = next;
    }
    return v;
}

}  // namespace

TEST_CASE("single-state identity MDP is valid") { CHECK_NOTHROW(validate(single_state(1.0, 0.5))); }

TEST_CASE("validate reports the failing invariant") {
    CHECK(kind_of(single_state(0.99, 0.5)) == ErrorKind::NonStochasticRow);
    CHECK(kind_of(single_state(1.0, 1.5)) == ErrorKind::RewardOutOfBound);
    TabularMdp m = single_state(1.0, 0.5);
    m.gamma = 1.0;
    CHECK(kind_of(m) == ErrorKind::BadGamma);
    m.gamma = 0.0;
    CHECK(kind_of(m) == ErrorKind::BadGamma);
    TabularMdp neg;
    neg.n_states = 2;
    neg.n_actions = 1;
    neg.rewards = {0.0, 0.0};
    neg.transitions = {1.5, -0.5, 0.0, 1.0};
    CHECK(kind_of(neg) == ErrorKind::NonStochasticRow);
    TabularMdp shape = single_state(1.0, 0.5);
    shape.rewards.push_back(0.0);
    CHECK(kind_of(shape) == ErrorKind::ShapeMismatch);
}

TEST_CASE("random_mdp output is valid") { CHECK_NOTHROW(validate(random_mdp(RngSeed{7}, 20, 5, 3, 1.0, 0.9))); }

TEST_CASE("random_mdp has exactly branching successors per row") {
    const TabularMdp m = random_mdp(RngSeed{3}, 12, 3, 4, 1.0, 0.9);
    for (std::size_t s = 0; s < m.n_states; ++s) {
        for (std::size_t a = 0; a < m.n_actions; ++a) {
            const auto row = m.next_state_probs(s, a);
            CHECK(std::count_if(row.begin(), row.end(), [](double p) { return p > 0.0; }) == 4);
        }
    }
}

TEST_CASE("dense branching gives rows that sum to one") {
    const TabularMdp m = random_mdp(RngSeed{8}, 6, 2, 6, 1.0, 0.9);
    for (std::size_t s = 0; s < m.n_states; ++s) {
        for (std::size_t a = 0; a < m.n_actions; ++a) {
            const auto row = m.next_state_probs(s, a);
            double sum = 0.0;
            for (double p : row) {
                CHECK(p > 0.0);
                sum += p;
            }
            CHECK(std::abs(sum - 1.0) <= kRowSumTolerance);
        }
    }
}

TEST_CASE("random_mdp is deterministic in its seed") {
    CHECK(random_mdp(RngSeed{42}, 20, 5, 4, 1.0, 0.9) == random_mdp(RngSeed{42}, 20, 5, 4, 1.0, 0.9));
    CHECK(random_mdp(RngSeed{42}, 20, 5, 4, 1.0, 0.9).rewards !=
          random_mdp(RngSeed{43}, 20, 5, 4, 1.0, 0.9).rewards);
}

TEST_CASE("random_mdp rejects bad branching") {
    CHECK_THROWS_AS(random_mdp(RngSeed{1}, 5, 2, 0, 1.0, 0.9), Error);
    CHECK_THROWS_AS(random_mdp(RngSeed{1}, 5, 2, 6, 1.0, 0.9), Error);
    try {
        random_mdp(RngSeed{1}, 5, 2, 6, 1.0, 0.9);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidBranching);
    }
}

TEST_CASE("random MDPs validate across 1000 seeds") {
    Rng rng(RngSeed{2024});
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n = 1 + rng.index(12);
        const std::size_t b = 1 + rng.index(n);
        CHECK_NOTHROW(validate(random_mdp(RngSeed{rng.next()}, n, 1 + rng.index(5), b, 2.0, 0.95)));
    }
}

TEST_CASE("two-state deterministic chain") {
    const TabularMdp m = chain_mdp(2, 0.0, 0.9);
    CHECK(m.n_actions == 2);
    CHECK(std::count(m.rewards.begin(), m.rewards.end(), 1.0) == 1);
    CHECK(m.reward(1, kChainRight) == 1.0);
    for (double p : m.transitions) CHECK((p == 0.0 || p == 1.0));
}

TEST_CASE("chain optimal value from the left end") {
    const TabularMdp m = chain_mdp(5, 0.0, 0.9);
    const auto v = hard_max_values(m);
    CHECK(v[0] == doctest::Approx(std::pow(0.9, 4) / 0.1).epsilon(1e-12));
}

TEST_CASE("chain slip moves the other way") {
    const TabularMdp m = chain_mdp(4, 0.2, 0.9);
    CHECK(m.next_state_probs(1, kChainRight)[2] == doctest::Approx(0.8));
    CHECK(m.next_state_probs(1, kChainRight)[0] == doctest::Approx(0.2));
    CHECK(m.next_state_probs(0, kChainLeft)[0] == doctest::Approx(1.0 - 0.2));
    CHECK_NOTHROW(validate(m));
}

TEST_CASE("chain rejects slip >= 1") {
    try {
        chain_mdp(5, 1.0, 0.9);
        FAIL("accepted slip 1");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidSlip);
    }
}

TEST_CASE("gridworld entering the goal pays the goal reward") {
    const TabularMdp m = gridworld_mdp(2, 1, GridCell{0, 1}, 0.0, 5.0, 0.9);
    const auto east = static_cast<std::size_t>(GridAction::East);
    CHECK(m.reward(0, east) == 5.0);
    CHECK(m.next_state_probs(0, east)[1] == 1.0);
    CHECK(m.reward(1, east) == 0.0);
    CHECK(m.next_state_probs(1, east)[1] == 1.0);
}

TEST_CASE("gridworld shape and determinism") {
    const TabularMdp m = gridworld_mdp(5, 5, GridCell{4, 4}, -0.1, 1.0, 0.9);
    CHECK(m.n_states == 25);
    CHECK(m.n_actions == 4);
    for (double p : m.transitions) CHECK((p == 0.0 || p == 1.0));
    CHECK_NOTHROW(validate(m));
}

TEST_CASE("gridworld walls clamp") {
    const TabularMdp m = gridworld_mdp(3, 3, GridCell{2, 2}, 0.0, 1.0, 0.9);
    CHECK(m.next_state_probs(0, static_cast<std::size_t>(GridAction::North))[0] == 1.0);
    CHECK(m.next_state_probs(0, static_cast<std::size_t>(GridAction::West))[0] == 1.0);
    CHECK(m.next_state_probs(0, static_cast<std::size_t>(GridAction::South))[3] == 1.0);
}

TEST_CASE("gridworld optimal value from the far corner") {
    const double gamma = 0.9;
    const TabularMdp m = gridworld_mdp(3, 3, GridCell{2, 2}, 0.0, 1.0, gamma);
    const auto v = hard_max_values(m);
    // Four moves; only the entering move is rewarded and the goal pays nothing afterwards.
    CHECK(v[0] == doctest::Approx(std::pow(gamma, 3)).epsilon(1e-12));
    CHECK(v[8] == doctest::Approx(0.0));
}

TEST_CASE("gridworld rejects a goal outside the grid") {
    try {
        gridworld_mdp(3, 3, GridCell{3, 0}, 0.0, 1.0, 0.9);
        FAIL("accepted goal outside");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::GoalOutOfGrid);
    }
}

TEST_CASE("JSON round trip is exact") {
    const TabularMdp m = random_mdp(RngSeed{5}, 7, 3, 4, 1.5, 0.95);
    CHECK(mdp_from_json(to_json(m)) == m);
    const auto dir = testing::scratch_dir("mdp_json");
    const std::string path = (dir / "m.json").string();
    save_mdp(m, path);
    CHECK(load_mdp(path) == m);
    CHECK(to_json(m).find("e-0") != std::string::npos);
}

TEST_CASE("JSON errors") {
    CHECK_THROWS_AS(mdp_from_json("{not json"), Error);
    CHECK_THROWS_AS(mdp_from_json(R"({"n_states": 2, "n_actions": 1, "gamma": 0.9, "reward_bound": 1,
                                      "rewards": [[0]], "transitions": [[[1, 0]]]})"),
                    Error);
    CHECK_THROWS_AS(load_mdp("/nonexistent/dir/m.json"), Error);
}
