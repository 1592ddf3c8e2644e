#include <doctest.h>

#include <cmath>
#include <limits>

#include "pmdlab/error.hpp"
#include "pmdlab/soft_dp.hpp"
#include "support.hpp"

using namespace pmdlab;
using testing::random_instance;
using testing::random_policy;
using testing::random_q;

namespace {

TabularMdp one_state(std::vector<double> rewards, double gamma) {
    TabularMdp m;
    m.n_states = 1;
    m.n_actions = rewards.size();
    m.rewards = std::move(rewards);
    m.reward_bound = 1.0;
    m.transitions.assign(m.n_actions, 1.0);
    m.gamma = gamma;
    return m;
}

// max over a simplex grid of f . p - tau h(p), |A| = 3.
double grid_soft_max(std::span<const double> f, double tau, double resolution) {
    const auto steps = static_cast<int>(std::lround(1.0 / resolution));
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= steps; ++i) {
        for (int j = 0; i + j <= steps; ++j) {
            const double p[3] = {i * resolution, j * resolution, (steps - i - j) * resolution};
            double value = 0.0;
            for (int a = 0; a < 3; ++a) {
                value += p[a] * f[static_cast<std::size_t>(a)];
                if (p[a] > 0.0) value -= tau * p[a] * std::log(p[a]);
            }
            best = std::max(best, value);
        }
    }
    return best;
}

}  // namespace

TEST_CASE("negative entropy examples") {
    const std::vector<double> uniform4(4, 0.25);
    CHECK(neg_entropy(uniform4) == doctest::Approx(-std::log(4.0)).epsilon(1e-15));
    const std::vector<double> onehot{0.0, 1.0, 0.0};
    CHECK(neg_entropy(onehot) == 0.0);
    const std::vector<double> p{0.75, 0.25};
    CHECK(neg_entropy(p) == doctest::Approx(-0.56233514461880835).epsilon(1e-14));
    const std::vector<double> bad{0.5, 0.6};
    CHECK_THROWS_AS(neg_entropy(bad), Error);
}

TEST_CASE("KL divergence examples") {
    const std::vector<double> u{0.5, 0.5};
    const std::vector<double> d{1.0, 0.0};
    CHECK(kl_divergence(u, u) == 0.0);
    CHECK(kl_divergence(d, u) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    try {
        kl_divergence(u, d);
        FAIL("missing SupportMismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SupportMismatch);
    }
}

TEST_CASE("KL divergence is nonnegative") {
    Rng rng(RngSeed{1});
    for (int i = 0; i < 200; ++i) {
        const PolicyTable p = random_policy(rng, 1, 4);
        const PolicyTable q = random_policy(rng, 1, 4);
        CHECK(kl_divergence(p.row(0), q.row(0)) >= 0.0);
    }
}

TEST_CASE("log-sum-exp and softmax survive large inputs") {
    const std::vector<double> x{1000.0, 1000.0};
    CHECK(log_sum_exp(x) == doctest::Approx(1000.0 + std::log(2.0)));
    std::vector<double> out(2);
    softmax_into(x, 1e-3, out);
    CHECK(out[0] == doctest::Approx(0.5));
    const std::vector<double> y{-1e6, 0.0};
    softmax_into(y, 1.0, out);
    CHECK(out[1] == 1.0);
}

TEST_CASE("policy operator on a single state and action") {
    const TabularMdp m = one_state({0.5}, 0.9);
    const QTable f(1, 1, 0.0);
    const PolicyTable pi(1, 1, 1.0);
    CHECK(bellman_policy_op(m, 0.7, pi, f)(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("optimality operator with tied entries adds tau log 2") {
    const double tau = 0.3;
    const double q = 1.7;
    const TabularMdp m = one_state({0.0, 0.0}, 0.5);
    const QTable f(1, 2, q);
    CHECK(bellman_optimality_op(m, tau, f)(0, 0) == doctest::Approx(0.5 * (q + tau * std::log(2.0))));
    try {
        bellman_optimality_op(m, 0.0, f);
        FAIL("missing TauNonPositive");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::TauNonPositive);
    }
}

TEST_CASE("closed-form soft max matches a simplex grid") {
    Rng rng(RngSeed{4});
    for (int i = 0; i < 5; ++i) {
        const QTable f = random_q(rng, 1, 3, 2.0);
        const double tau = rng.uniform(0.1, 1.0);
        const VTable v = soft_max_values(f, tau);
        const double grid = grid_soft_max(f.row(0), tau, 1e-3);
        CHECK(v[0] >= grid - 1e-12);
        CHECK(std::abs(v[0] - grid) <= 1e-4);
    }
}

TEST_CASE("operator contraction and monotonicity over 200 instances") {
    Rng rng(RngSeed{10});
    for (int i = 0; i < 200; ++i) {
        const TabularMdp m = random_instance(rng);
        const double tau = rng.uniform(0.01, 1.0);
        const PolicyTable pi = random_policy(rng, m.n_states, m.n_actions);
        const QTable f = random_q(rng, m.n_states, m.n_actions, 5.0);
        const QTable g = random_q(rng, m.n_states, m.n_actions, 5.0);
        const double dist = sup_distance(f, g);
        CHECK(sup_distance(bellman_policy_op(m, tau, pi, f), bellman_policy_op(m, tau, pi, g)) <=
              m.gamma * dist + 1e-12);
        CHECK(sup_distance(bellman_optimality_op(m, tau, f), bellman_optimality_op(m, tau, g)) <=
              m.gamma * dist + 1e-12);
        QTable h = f;
        for (double& v : h.values()) v += rng.uniform(0.0, 1.0);
        CHECK(min_difference(bellman_policy_op(m, tau, pi, h), bellman_policy_op(m, tau, pi, f)) >= -1e-12);
    }
}

TEST_CASE("evaluation examples") {
    const TabularMdp m = one_state({0.5}, 0.9);
    const QTable q = evaluate_policy_exact(m, 0.0, PolicyTable(1, 1, 1.0), {1e-12, 0});
    CHECK(q(0, 0) == doctest::Approx(5.0).epsilon(1e-10));

    const double r = 0.3;
    const double tau = 0.2;
    const TabularMdp two = one_state({r, r}, 0.9);
    const QTable q2 = evaluate_policy_exact(two, tau, uniform_policy(1, 2), {1e-12, 0});
    CHECK(q2(0, 1) == doctest::Approx((r + 0.9 * tau * std::log(2.0)) / 0.1).epsilon(1e-10));
}

TEST_CASE("evaluation reports exhausted budgets") {
    const TabularMdp m = one_state({0.5}, 0.99);
    try {
        evaluate_policy_exact(m, 0.0, PolicyTable(1, 1, 1.0), {1e-12, 5});
        FAIL("missing MaxIterExceeded");
    } catch (const ConvergenceError& e) {
        CHECK(e.kind() == ErrorKind::MaxIterExceeded);
        CHECK(e.residual() > 1e-12);
        CHECK(e.iterations() == 5);
    }
}

TEST_CASE("fixed points, consistency and the value bound over 200 instances") {
    Rng rng(RngSeed{11});
    for (int i = 0; i < 200; ++i) {
        const TabularMdp m = random_instance(rng);
        const double tau = rng.uniform(0.01, 1.0);
        const double tol = 1e-10;
        const PolicyTable pi = random_policy(rng, m.n_states, m.n_actions);
        const QTable q = evaluate_policy_exact(m, tau, pi, {tol, 0});
        CHECK(sup_distance(bellman_policy_op(m, tau, pi, q), q) <= tol);
        CHECK(sup_norm(q) <= q_upper_bound(m, tau) + tol);
        const VTable v = soft_state_values(pi, q, tau);
        CHECK(sup_distance(backup(m, v), q) <= tol);

        const OptimalSolution opt = solve_optimal(m, tau, {tol, 0});
        CHECK(sup_distance(bellman_optimality_op(m, tau, opt.q), opt.q) <= tol);
        const QTable q_star_policy = evaluate_policy_exact(m, tau, opt.policy, {tol, 0});
        CHECK(sup_distance(q_star_policy, opt.q) <= 10.0 * tol / (1.0 - m.gamma));
        CHECK(min_difference(opt.q, q) >= -10.0 * tol / (1.0 - m.gamma));
    }
}

TEST_CASE("maximal reward everywhere attains the bound") {
    TabularMdp m = one_state({1.0, 1.0, 1.0, 1.0}, 0.9);
    const OptimalSolution opt = solve_optimal(m, 0.1, {1e-12, 0});
    CHECK(opt.q(0, 2) == doctest::Approx(q_upper_bound(m, 0.1)).epsilon(1e-10));
}

TEST_CASE("single-action optimum equals the only policy's value") {
    const TabularMdp m = random_mdp(RngSeed{3}, 6, 1, 3, 1.0, 0.9);
    const OptimalSolution opt = solve_optimal(m, 0.5, {1e-12, 0});
    const QTable q = evaluate_policy_exact(m, 0.5, PolicyTable(6, 1, 1.0), {1e-12, 0});
    CHECK(sup_distance(opt.q, q) <= 1e-10);
}

TEST_CASE("optimum dominates 50 random policies") {
    const TabularMdp m = random_mdp(RngSeed{9}, 10, 4, 3, 1.0, 0.9);
    const OptimalSolution opt = solve_optimal(m, 0.1, {1e-12, 0});
    Rng rng(RngSeed{12});
    for (int i = 0; i < 50; ++i) {
        const QTable q = evaluate_policy_exact(m, 0.1, random_policy(rng, 10, 4), {1e-12, 0});
        CHECK(min_difference(opt.q, q) >= -1e-9);
    }
}

TEST_CASE("soft-optimal policy maximizes the regularized objective") {
    const TabularMdp m = random_mdp(RngSeed{21}, 4, 3, 2, 1.0, 0.9);
    const double tau = 0.4;
    const OptimalSolution opt = solve_optimal(m, tau, {1e-12, 0});
    for (std::size_t s = 0; s < m.n_states; ++s) {
        double value = -tau * neg_entropy(opt.policy.row(s));
        for (std::size_t a = 0; a < 3; ++a) value += opt.policy(s, a) * opt.q(s, a);
        CHECK(value >= grid_soft_max(opt.q.row(s), tau, 1e-3) - 1e-6);
    }
}

TEST_CASE("upper bound examples") {
    TabularMdp m = random_mdp(RngSeed{1}, 3, 4, 2, 1.0, 0.9);
    CHECK(q_upper_bound(m, 0.1) == doctest::Approx(11.247664925007902).epsilon(1e-14));
    CHECK(q_upper_bound(m, 0.0) == doctest::Approx(10.0));
    TabularMdp single = random_mdp(RngSeed{1}, 3, 1, 2, 1.0, 0.9);
    CHECK(q_upper_bound(single, 5.0) == doctest::Approx(10.0));
}

TEST_CASE("noisy evaluation") {
    const TabularMdp m = random_mdp(RngSeed{2}, 10, 4, 3, 1.0, 0.9);
    const PolicyTable pi = uniform_policy(10, 4);
    const QTable exact = evaluate_policy_exact(m, 0.1, pi, {1e-10, 0});
    CHECK(evaluate_policy_noisy(m, 0.1, pi, {1e-10, 0}, NoiseSpec{0.0, RngSeed{1}, NoiseMode::Uniform}) == exact);
    const QTable signed_max =
        evaluate_policy_noisy(m, 0.1, pi, {1e-10, 0}, NoiseSpec{0.05, RngSeed{1}, NoiseMode::SignedMax});
    for (std::size_t i = 0; i < exact.values().size(); ++i) {
        CHECK(std::abs(signed_max.values()[i] - exact.values()[i]) == doctest::Approx(0.05).epsilon(1e-12));
    }
    const QTable zero(100, 100, 0.0);
    const QTable uniform = perturb(zero, NoiseSpec{0.05, RngSeed{3}, NoiseMode::Uniform});
    CHECK(sup_norm(uniform) <= 0.05);
    CHECK(sup_norm(uniform) > 0.04);
    CHECK(perturb(zero, NoiseSpec{0.05, RngSeed{3}, NoiseMode::Uniform}) == uniform);
}
