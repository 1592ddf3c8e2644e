#include "pmdlab/table.hpp"

namespace pmdlab {

double max_l1_distance(const PolicyTable& p, const PolicyTable& q) {
    if (!p.same_shape(q)) throw Error(ErrorKind::ShapeMismatch, "policies differ in shape");
    double worst = 0.0;
    for (std::size_t s = 0; s < p.n_states(); ++s) {
        double l1 = 0.0;
        for (std::size_t a = 0; a < p.n_actions(); ++a) l1 += std::abs(p(s, a) - q(s, a));
        worst = std::max(worst, l1);
    }
    return worst;
}

std::vector<int> greedy_actions(const QTable& q) {
    std::vector<int> out(q.n_states(), 0);
    for (std::size_t s = 0; s < q.n_states(); ++s) {
        auto row = q.row(s);
        std::size_t best = 0;
        for (std::size_t a = 1; a < row.size(); ++a) {
            if (row[a] > row[best]) best = a;
        }
        out[s] = static_cast<int>(best);
    }
    return out;
}

PolicyTable deterministic_policy(std::size_t n_actions, const std::vector<int>& actions) {
    PolicyTable pi(actions.size(), n_actions, 0.0);
    for (std::size_t s = 0; s < actions.size(); ++s) {
        if (actions[s] < 0 || static_cast<std::size_t>(actions[s]) >= n_actions) {
            throw Error(ErrorKind::InvalidArgument, "action index out of range");
        }
        pi(s, static_cast<std::size_t>(actions[s])) = 1.0;
    }
    return pi;
}

PolicyTable uniform_policy(std::size_t n_states, std::size_t n_actions) {
    return PolicyTable(n_states, n_actions, 1.0 / static_cast<double>(n_actions));
}

}  // namespace pmdlab
