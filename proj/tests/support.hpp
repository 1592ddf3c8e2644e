#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

#include "pmdlab/mdp.hpp"
#include "pmdlab/random.hpp"
#include "pmdlab/table.hpp"

namespace pmdlab::testing {

inline QTable random_q(Rng& rng, std::size_t n_states, std::size_t n_actions, double scale) {
    QTable q(n_states, n_actions);
    for (double& v : q.values()) v = rng.uniform(-scale, scale);
    return q;
}

inline PolicyTable random_policy(Rng& rng, std::size_t n_states, std::size_t n_actions) {
    PolicyTable pi(n_states, n_actions);
    for (std::size_t s = 0; s < n_states; ++s) {
        double total = 0.0;
        for (double& p : pi.row(s)) total += (p = rng.uniform_positive());
        for (double& p : pi.row(s)) p /= total;
    }
    return pi;
}

/// Random MDP with random size, branching and discount.
inline TabularMdp random_instance(Rng& rng) {
    const std::size_t n_states = 2 + rng.index(7);
    const std::size_t n_actions = 2 + rng.index(3);
    const std::size_t branching = 1 + rng.index(n_states);
    const double gamma = rng.uniform(0.5, 0.95);
    return random_mdp(RngSeed{rng.next()}, n_states, n_actions, branching, rng.uniform(0.5, 2.0), gamma);
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    const char* root = std::getenv("PMDLAB_TEST_TMP");
    std::filesystem::path dir = root ? std::filesystem::path(root) : std::filesystem::temp_directory_path() / "pmdlab";
    dir /= name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace pmdlab::testing
